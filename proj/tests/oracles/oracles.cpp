#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace oracle {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec sigmoid(const Vec& x) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

Vec conv2d(const Vec& x, std::size_t N, std::size_t H, std::size_t W, std::size_t Cin, const Vec& w,
           std::size_t KH, std::size_t KW, std::size_t Cout, std::size_t groups) {
  const std::size_t cig = Cin / groups;
  const std::size_t cog = Cout / groups;
  const long ph = static_cast<long>(KH / 2);
  const long pw = static_cast<long>(KW / 2);
  Vec out(N * H * W * Cout, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        for (std::size_t co = 0; co < Cout; ++co) {
          const std::size_t g = co / cog;
          double s = 0.0;
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const long sy = static_cast<long>(y) + static_cast<long>(ky) - ph;
              const long sx = static_cast<long>(xx) + static_cast<long>(kx) - pw;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
              for (std::size_t ci = 0; ci < cig; ++ci) {
                const double xv = x[((n * H + sy) * W + sx) * Cin + g * cig + ci];
                const double wv = w[((ky * KW + kx) * cig + ci) * Cout + co];
                s += xv * wv;
              }
            }
          }
          out[((n * H + y) * W + xx) * Cout + co] = s;
        }
      }
    }
  }
  return out;
}

Vec dft_magnitude(const Vec& x, std::size_t H, std::size_t W, std::size_t C) {
  Vec out(H * W * C);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t u = 0; u < H; ++u) {
      for (std::size_t v = 0; v < W; ++v) {
        std::complex<double> acc = 0.0;
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t xx = 0; xx < W; ++xx) {
            const double angle = -two_pi * (static_cast<double>(u * y) / static_cast<double>(H) +
                                            static_cast<double>(v * xx) / static_cast<double>(W));
            acc += x[(y * W + xx) * C + c] * std::polar(1.0, angle);
          }
        }
        out[(u * W + v) * C + c] = std::abs(acc);
      }
    }
  }
  return out;
}

Vec max_pool2(const Vec& x, std::size_t N, std::size_t H, std::size_t W, std::size_t C) {
  const std::size_t oh = (H + 1) / 2;
  const std::size_t ow = (W + 1) / 2;
  Vec out(N * oh * ow * C);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t c = 0; c < C; ++c) {
          double best = -INFINITY;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t y = std::min(2 * i + dy, H - 1);
              const std::size_t xx = std::min(2 * j + dx, W - 1);
              best = std::max(best, x[((n * H + y) * W + xx) * C + c]);
            }
          }
          out[((n * oh + i) * ow + j) * C + c] = best;
        }
      }
    }
  }
  return out;
}

Vec upsample2(const Vec& x, std::size_t N, std::size_t H, std::size_t W, std::size_t C) {
  Vec out(N * 4 * H * W * C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx)
        for (std::size_t c = 0; c < C; ++c)
          out[((n * 2 * H + y) * 2 * W + xx) * C + c] = x[((n * H + y / 2) * W + xx / 2) * C + c];
  return out;
}

Vec layer_norm_rows(const Vec& x, std::size_t rows, std::size_t d) {
  Vec y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += x[r * d + i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (x[r * d + i] - mean) * (x[r * d + i] - mean);
    var /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) y[r * d + i] = (x[r * d + i] - mean) / std::sqrt(var + 1e-5);
  }
  return y;
}

Vec softmax(const Vec& row) {
  const double m = *std::max_element(row.begin(), row.end());
  Vec e(row.size());
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) s += (e[i] = std::exp(row[i] - m));
  for (double& v : e) v /= s;
  return e;
}

Vec batch_norm_train(const Vec& x, std::size_t rows, std::size_t C, const Vec& gamma, const Vec& beta) {
  Vec y(x.size());
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += x[r * C + c];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) var += (x[r * C + c] - mean) * (x[r * C + c] - mean);
    var /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      y[r * C + c] = gamma[c] * (x[r * C + c] - mean) / std::sqrt(var + 1e-5) + beta[c];
    }
  }
  return y;
}

Vec batch_norm_eval(const Vec& x, std::size_t rows, std::size_t C, const Vec& gamma, const Vec& beta,
                    const Vec& mean, const Vec& var) {
  Vec y(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < C; ++c)
      y[r * C + c] = gamma[c] * (x[r * C + c] - mean[c]) / std::sqrt(var[c] + 1e-5) + beta[c];
  return y;
}

LstmState lstm_cell(const Vec& x, const LstmState& prev, const LstmWeights& w, std::size_t in, std::size_t hidden) {
  LstmState next{Vec(hidden), Vec(hidden)};
  for (std::size_t j = 0; j < hidden; ++j) {
    double z[4];
    for (std::size_t gate = 0; gate < 4; ++gate) {
      const std::size_t col = gate * hidden + j;
      double s = w.b[col];
      for (std::size_t t = 0; t < in; ++t) s += x[t] * w.wx[t * 4 * hidden + col];
      for (std::size_t t = 0; t < hidden; ++t) s += prev.h[t] * w.wh[t * 4 * hidden + col];
      z[gate] = s;
    }
    const double i = sigmoid(z[0]);
    const double f = sigmoid(z[1]);
    const double g = std::tanh(z[2]);
    const double o = sigmoid(z[3]);
    next.c[j] = f * prev.c[j] + i * g;
    next.h[j] = o * std::tanh(next.c[j]);
  }
  return next;
}

Vec bilstm(const Vec& x, std::size_t n, std::size_t in, std::size_t hidden, const LstmWeights& fwd,
           const LstmWeights& bwd) {
  Vec out(n * 2 * hidden);
  LstmState s{Vec(hidden, 0.0), Vec(hidden, 0.0)};
  for (std::size_t t = 0; t < n; ++t) {
    s = lstm_cell(Vec(x.begin() + t * in, x.begin() + (t + 1) * in), s, fwd, in, hidden);
    for (std::size_t j = 0; j < hidden; ++j) out[t * 2 * hidden + j] = s.h[j];
  }
  s = {Vec(hidden, 0.0), Vec(hidden, 0.0)};
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = n - 1 - step;
    s = lstm_cell(Vec(x.begin() + t * in, x.begin() + (t + 1) * in), s, bwd, in, hidden);
    for (std::size_t j = 0; j < hidden; ++j) out[t * 2 * hidden + hidden + j] = s.h[j];
  }
  return out;
}

AttentionResult attention(const Vec& q, const Vec& k, const Vec& v, std::size_t nq, std::size_t nk, std::size_t d,
                          std::size_t heads, double scale) {
  const std::size_t hd = d / heads;
  AttentionResult r{Vec(nq * d, 0.0), {}};
  for (std::size_t h = 0; h < heads; ++h) {
    Vec w(nq * nk);
    for (std::size_t i = 0; i < nq; ++i) {
      Vec scores(nk);
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < hd; ++t) s += q[i * d + h * hd + t] * k[j * d + h * hd + t];
        scores[j] = s / scale;
      }
      const Vec p = softmax(scores);
      for (std::size_t j = 0; j < nk; ++j) w[i * nk + j] = p[j];
      for (std::size_t t = 0; t < hd; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < nk; ++j) s += p[j] * v[j * d + h * hd + t];
        r.out[i * d + h * hd + t] = s;
      }
    }
    r.weights.push_back(w);
  }
  return r;
}

AttentionResult projected_attention(const Vec& xq, const Vec& xkv, std::size_t nq, std::size_t nk, std::size_t d,
                                    const Vec& wq, const Vec& wk, const Vec& wv, const Vec& wo, std::size_t heads,
                                    double scale) {
  AttentionResult r = attention(matmul(xq, wq, nq, d, d), matmul(xkv, wk, nk, d, d), matmul(xkv, wv, nk, d, d), nq,
                                nk, d, heads, scale);
  if (!wo.empty()) r.out = matmul(r.out, wo, nq, d, d);
  return r;
}

Vec positions(std::size_t n, std::size_t d) {
  Vec pe(n * d);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; 2 * i < d; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(2 * i) / static_cast<double>(d));
      pe[p * d + 2 * i] = std::sin(static_cast<double>(p) * freq);
      if (2 * i + 1 < d) pe[p * d + 2 * i + 1] = std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

Vec transformer_layer(const Vec& x, std::size_t n, std::size_t d, std::size_t heads, const TransformerLayer& p) {
  Vec h = x;
  const Vec normed = layer_norm_rows(h, n, d);
  const double scale = std::sqrt(static_cast<double>(d / heads));
  const Vec att = projected_attention(normed, normed, n, n, d, p.wq, p.wk, p.wv, p.wo, heads, scale).out;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += att[i];
  Vec hidden = matmul(layer_norm_rows(h, n, d), p.w0, n, d, 2 * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < 2 * d; ++j) hidden[r * 2 * d + j] = std::max(0.0, hidden[r * 2 * d + j] + p.b0[j]);
  const Vec ff = matmul(hidden, p.w1, n, 2 * d, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) h[r * d + j] += ff[r * d + j] + p.b1[j];
  return h;
}

Vec feeca(const Vec& x, std::size_t H, std::size_t W, std::size_t C, const FeecaParams& p) {
  const std::size_t HW = H * W;
  // Channel descriptor and its 3-tap correlation along the channel axis.
  Vec pooled(C, 0.0);
  for (std::size_t i = 0; i < HW; ++i)
    for (std::size_t c = 0; c < C; ++c) pooled[c] += x[i * C + c] / static_cast<double>(HW);
  Vec local(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = p.conv1d_bias;
    for (int t = -1; t <= 1; ++t) {
      const long src = static_cast<long>(c) + t;
      if (src >= 0 && src < static_cast<long>(C)) s += p.conv1d[static_cast<std::size_t>(t + 1)] * pooled[src];
    }
    local[c] = s;
  }
  Vec y_proj = matmul(local, p.proj_w, 1, C, C);
  for (std::size_t c = 0; c < C; ++c) y_proj[c] += p.proj_b[c];

  const Vec mag = dft_magnitude(x, H, W, C);
  Vec y_att(HW);
  for (std::size_t i = 0; i < HW; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += mag[i * C + c] * p.scale[c] * y_proj[c];
    y_att[i] = sigmoid(s);
  }
  const Vec att_n = layer_norm_rows(y_att, 1, HW);
  const Vec x_n = layer_norm_rows(x, HW, C);
  Vec out(HW * C);
  for (std::size_t i = 0; i < HW; ++i)
    for (std::size_t c = 0; c < C; ++c) out[i * C + c] = att_n[i] * x_n[i * C + c];
  return out;
}

Vec fmsa(const Vec& x, std::size_t H, std::size_t W, std::size_t C, const FmsaParams& p) {
  const std::size_t HW = H * W;
  const Vec z3 = conv2d(x, 1, H, W, C, p.ms3, 3, 3, 1);
  const Vec z5 = conv2d(x, 1, H, W, C, p.ms5, 5, 5, 1);
  const Vec z7 = conv2d(x, 1, H, W, C, p.ms7, 7, 7, 1);
  const Vec f = dft_magnitude(x, H, W, C);

  // Spatial standardization of the spectrum, per channel.
  Vec f_norm(HW * C);
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < HW; ++i) mean += f[i * C + c];
    mean /= static_cast<double>(HW);
    double var = 0.0;
    for (std::size_t i = 0; i < HW; ++i) var += (f[i * C + c] - mean) * (f[i * C + c] - mean);
    var /= static_cast<double>(HW);
    for (std::size_t i = 0; i < HW; ++i) f_norm[i * C + c] = (f[i * C + c] - mean) / std::sqrt(var + 1e-5);
  }

  Vec combined(HW * C);
  for (std::size_t i = 0; i < HW; ++i) {
    const double a_spatial = sigmoid(z3[i] + z5[i] + z7[i]);
    for (std::size_t c = 0; c < C; ++c) combined[i * C + c] = a_spatial * f[i * C + c] * f_norm[i * C + c];
  }
  const Vec a_proj = matmul(combined, p.proj, HW, C, C);
  const Vec spatial = conv2d(a_proj, 1, H, W, C, p.spatial, 7, 7, C, C);
  Vec reduced = matmul(spatial, p.reduce, HW, C, C / 4);
  for (double& v : reduced) v = std::max(0.0, v);
  const Vec a_refined = sigmoid(matmul(reduced, p.expand, HW, C / 4, C));

  Vec out(HW * C);
  for (std::size_t i = 0; i < HW * C; ++i) out[i] = x[i] * (p.w_att * a_proj[i]) * (p.w_refined * a_refined[i]);
  return out;
}

Vec harmonize(const Vec& y, const Vec& x, const HarmonizerGains& g) {
  Vec out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double y_sub = g.beta * x[i] - sigmoid(y[i]);
    const double gate = sigmoid(g.g_cascade * y[i] + g.g_image * x[i]);
    out[i] = gate * (g.alpha_cascade * y[i] + g.alpha_sub * y_sub);
  }
  return out;
}

Vec gated_block_train(const Vec& x, std::size_t N, std::size_t H, std::size_t W, std::size_t Cin, const Vec& kernel,
                      std::size_t Cout, const Vec& gamma, const Vec& beta, bool upsample_first) {
  Vec in = x;
  if (upsample_first) {
    in = upsample2(x, N, H, W, Cin);
    H *= 2;
    W *= 2;
  }
  Vec g = conv2d(in, N, H, W, Cin, kernel, 3, 3, Cout);
  for (double& v : g) v = std::max(0.0, v * sigmoid(v));
  const Vec normed = batch_norm_train(g, N * H * W, Cout, gamma, beta);
  return max_pool2(normed, N, H, W, Cout);
}

double bce(const Vec& probs, const std::vector<int>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-7, 1.0 - 1e-7);
    s += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.size());
}

void AdamW::step(Vec& theta, const Vec& grad) {
  if (m_.empty()) {
    m_.assign(theta.size(), 0.0);
    v_.assign(theta.size(), 0.0);
  }
  ++t_;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / (1.0 - std::pow(b1_, t_));
    const double v_hat = v_[i] / (1.0 - std::pow(b2_, t_));
    theta[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + wd_ * theta[i]);
  }
}

double binomial_two_sided(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  if (n == 0) return 1.0;
  // Row n of Pascal's triangle, scaled by 1/2 at every step to stay in range.
  std::vector<long double> row{1.0L};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> next(row.size() + 1, 0.0L);
    for (std::size_t k = 0; k < row.size(); ++k) {
      next[k] += row[k] / 2;
      next[k + 1] += row[k] / 2;
    }
    row = std::move(next);
  }
  long double tail = 0.0L;
  for (std::size_t k = 0; k <= std::min(b, c); ++k) tail += row[k];
  return static_cast<double>(std::min(1.0L, 2 * tail));
}

}  // namespace oracle
