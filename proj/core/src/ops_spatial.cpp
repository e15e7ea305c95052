#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "xflood/errors.hpp"
#include "xflood/ops.hpp"

namespace xflood {

namespace {

struct MapDims {
  std::size_t n, h, w, c;
  bool batched;

  std::size_t pixels() const { return h * w; }
  Shape shape() const { return batched ? Shape{n, h, w, c} : Shape{h, w, c}; }
  Shape with(std::size_t hh, std::size_t ww, std::size_t cc) const {
    return batched ? Shape{n, hh, ww, cc} : Shape{hh, ww, cc};
  }
};

MapDims map_dims(const Tensor& t, const char* op) {
  const Shape& s = t.shape();
  if (s.rank() == 3) return {1, s[0], s[1], s[2], false};
  if (s.rank() == 4) return {s[0], s[1], s[2], s[3], true};
  throw DimensionError(std::string(op) + " expects H x W x C or N x H x W x C, got " + s.str());
}

}  // namespace

Var conv2d(Var input, Var kernel, std::size_t groups) {
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const MapDims d = map_dims(x, "conv2d");
  if (k.rank() != 4) throw DimensionError("conv2d kernel must be KH x KW x Cin/G x Cout, got " + k.shape().str());
  const std::size_t kh = k.shape()[0];
  const std::size_t kw = k.shape()[1];
  const std::size_t cig = k.shape()[2];
  const std::size_t cout = k.shape()[3];
  if (groups == 0 || d.c % groups != 0 || cout % groups != 0) {
    throw ConfigError("conv2d: channels in=" + std::to_string(d.c) + " out=" + std::to_string(cout) +
                      " not divisible by groups=" + std::to_string(groups));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd, got " + k.shape().str());
  if (cig != d.c / groups) {
    throw DimensionError("conv2d: kernel " + k.shape().str() + " expects " + std::to_string(cig * groups) +
                         " input channels, input is " + x.shape().str());
  }
  const std::size_t cog = cout / groups;
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto H = static_cast<std::ptrdiff_t>(d.h);
  const auto W = static_cast<std::ptrdiff_t>(d.w);

  Tensor out(d.with(d.h, d.w, cout));
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
        double* op = out.ptr() + ((b * d.h + y) * d.w + xx) * cout;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - ph;
          if (iy < 0 || iy >= H) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = xx + static_cast<std::ptrdiff_t>(kx) - pw;
            if (ix < 0 || ix >= W) continue;
            const double* ip = x.ptr() + ((b * d.h + iy) * d.w + ix) * d.c;
            const double* kp = k.ptr() + (ky * kw + kx) * cig * cout;
            for (std::size_t g = 0; g < groups; ++g) {
              for (std::size_t ci = 0; ci < cig; ++ci) {
                const double v = ip[g * cig + ci];
                if (v == 0.0) continue;
                const double* kr = kp + ci * cout + g * cog;
                double* orow = op + g * cog;
                for (std::size_t co = 0; co < cog; ++co) orow[co] += v * kr[co];
              }
            }
          }
        }
      }
    }
  }

  Var inputs[] = {input, kernel};
  return input.graph().record(
      "conv2d", inputs, std::move(out),
      [d, kh, kw, cig, cout, cog, groups, ph, pw, H, W](const Graph& gr, const Node& n, std::span<Tensor* const> gin) {
        const Tensor& x = gr.node(n.inputs[0]).value;
        const Tensor& k = gr.node(n.inputs[1]).value;
        Tensor* gx = gin[0];
        Tensor* gk = gin[1];
        for (std::size_t b = 0; b < d.n; ++b) {
          for (std::ptrdiff_t y = 0; y < H; ++y) {
            for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
              const double* go = n.grad.ptr() + ((b * d.h + y) * d.w + xx) * cout;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - ph;
                if (iy < 0 || iy >= H) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix = xx + static_cast<std::ptrdiff_t>(kx) - pw;
                  if (ix < 0 || ix >= W) continue;
                  const std::size_t in_off = ((b * d.h + iy) * d.w + ix) * d.c;
                  const std::size_t k_off = (ky * kw + kx) * cig * cout;
                  for (std::size_t g = 0; g < groups; ++g) {
                    const double* grow = go + g * cog;
                    for (std::size_t ci = 0; ci < cig; ++ci) {
                      const std::size_t krow = k_off + ci * cout + g * cog;
                      if (gx) {
                        const double* kr = k.ptr() + krow;
                        double acc = 0.0;
                        for (std::size_t co = 0; co < cog; ++co) acc += grow[co] * kr[co];
                        (*gx)[in_off + g * cig + ci] += acc;
                      }
                      if (gk) {
                        const double v = x[in_off + g * cig + ci];
                        if (v == 0.0) continue;
                        double* gkr = gk->ptr() + krow;
                        for (std::size_t co = 0; co < cog; ++co) gkr[co] += v * grow[co];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Var max_pool2(Var input) {
  const Tensor& x = input.value();
  const MapDims d = map_dims(x, "max_pool2");
  const std::size_t oh = (d.h + 1) / 2;
  const std::size_t ow = (d.w + 1) / 2;
  Tensor out(d.with(oh, ow, d.c));
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        // Edge replication: a missing second row/column repeats the last one.
        const std::size_t rows[2] = {2 * y, std::min(2 * y + 1, d.h - 1)};
        const std::size_t cols[2] = {2 * xx, std::min(2 * xx + 1, d.w - 1)};
        for (std::size_t c = 0; c < d.c; ++c) {
          std::size_t best = ((b * d.h + rows[0]) * d.w + cols[0]) * d.c + c;
          for (std::size_t r : rows) {
            for (std::size_t cc : cols) {
              const std::size_t idx = ((b * d.h + r) * d.w + cc) * d.c + c;
              if (x[idx] > x[best]) best = idx;
            }
          }
          const std::size_t o = ((b * oh + y) * ow + xx) * d.c + c;
          out[o] = x[best];
          argmax[o] = best;
        }
      }
    }
  }
  Var inputs[] = {input};
  return input.graph().record("max_pool2", inputs, std::move(out),
                              [argmax = std::move(argmax)](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                                if (!gin[0]) return;
                                for (std::size_t o = 0; o < argmax.size(); ++o) (*gin[0])[argmax[o]] += n.grad[o];
                              });
}

Var global_avg_pool(Var input) {
  const Tensor& x = input.value();
  const MapDims d = map_dims(x, "global_avg_pool");
  Tensor out(d.with(1, 1, d.c));
  const double inv = 1.0 / static_cast<double>(d.pixels());
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t p = 0; p < d.pixels(); ++p) {
      const double* ip = x.ptr() + (b * d.pixels() + p) * d.c;
      for (std::size_t c = 0; c < d.c; ++c) out[b * d.c + c] += ip[c];
    }
  }
  for (double& v : out.data()) v *= inv;
  Var inputs[] = {input};
  return input.graph().record("global_avg_pool", inputs, std::move(out),
                              [d, inv](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                                if (!gin[0]) return;
                                for (std::size_t b = 0; b < d.n; ++b) {
                                  for (std::size_t p = 0; p < d.pixels(); ++p) {
                                    double* gp = gin[0]->ptr() + (b * d.pixels() + p) * d.c;
                                    for (std::size_t c = 0; c < d.c; ++c) gp[c] += inv * n.grad[b * d.c + c];
                                  }
                                }
                              });
}

Var resize_nearest(Var input, std::size_t out_h, std::size_t out_w) {
  const Tensor& x = input.value();
  const MapDims d = map_dims(x, "resize_nearest");
  if (out_h == 0 || out_w == 0) throw DimensionError("resize_nearest: output extents must be >= 1");
  std::vector<std::size_t> src_row(out_h);
  std::vector<std::size_t> src_col(out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    src_row[i] = std::min(d.h - 1, static_cast<std::size_t>((static_cast<double>(i) + 0.5) * d.h / out_h));
  }
  for (std::size_t j = 0; j < out_w; ++j) {
    src_col[j] = std::min(d.w - 1, static_cast<std::size_t>((static_cast<double>(j) + 0.5) * d.w / out_w));
  }
  Tensor out(d.with(out_h, out_w, d.c));
  std::vector<std::size_t> source(out_h * out_w * d.n);
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t src = (b * d.h + src_row[i]) * d.w + src_col[j];
        const std::size_t dst = (b * out_h + i) * out_w + j;
        source[dst] = src;
        std::copy_n(x.ptr() + src * d.c, d.c, out.ptr() + dst * d.c);
      }
    }
  }
  Var inputs[] = {input};
  return input.graph().record("resize_nearest", inputs, std::move(out),
                              [source = std::move(source), c = d.c](const Graph&, const Node& n,
                                                                    std::span<Tensor* const> gin) {
                                if (!gin[0]) return;
                                for (std::size_t dst = 0; dst < source.size(); ++dst) {
                                  double* gp = gin[0]->ptr() + source[dst] * c;
                                  const double* go = n.grad.ptr() + dst * c;
                                  for (std::size_t ch = 0; ch < c; ++ch) gp[ch] += go[ch];
                                }
                              });
}

Var upsample_nearest2(Var input) {
  const MapDims d = map_dims(input.value(), "upsample_nearest2");
  return resize_nearest(input, 2 * d.h, 2 * d.w);
}

Var fft2d_magnitude(Var input) {
  const Tensor& x = input.value();
  const MapDims d = map_dims(x, "fft2d_magnitude");
  const std::size_t H = d.h;
  const std::size_t W = d.w;
  const std::size_t C = d.c;

  // Twiddles: cos/sin of 2*pi*j/N for j in [0, N).
  auto twiddles = [](std::size_t n) {
    std::vector<double> cs(2 * n);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      cs[2 * j] = std::cos(a);
      cs[2 * j + 1] = std::sin(a);
    }
    return cs;
  };
  const std::vector<double> tw_h = twiddles(H);
  const std::vector<double> tw_w = twiddles(W);

  Tensor out(x.shape());
  Tensor re(x.shape());
  Tensor im(x.shape());
  std::vector<double> row_re(H * W * C);
  std::vector<double> row_im(H * W * C);
  for (std::size_t b = 0; b < d.n; ++b) {
    const double* xp = x.ptr() + b * H * W * C;
    std::fill(row_re.begin(), row_re.end(), 0.0);
    std::fill(row_im.begin(), row_im.end(), 0.0);
    // Along W: R[m, l] = sum_n x[m, n] e^{-2 pi i l n / W}
    for (std::size_t m = 0; m < H; ++m) {
      for (std::size_t l = 0; l < W; ++l) {
        double* rr = row_re.data() + (m * W + l) * C;
        double* ri = row_im.data() + (m * W + l) * C;
        for (std::size_t nn = 0; nn < W; ++nn) {
          const std::size_t t = (l * nn) % W;
          const double c = tw_w[2 * t];
          const double s = tw_w[2 * t + 1];
          const double* src = xp + (m * W + nn) * C;
          for (std::size_t ch = 0; ch < C; ++ch) {
            rr[ch] += src[ch] * c;
            ri[ch] -= src[ch] * s;
          }
        }
      }
    }
    // Along H: X[k, l] = sum_m R[m, l] e^{-2 pi i k m / H}
    double* rep = re.ptr() + b * H * W * C;
    double* imp = im.ptr() + b * H * W * C;
    for (std::size_t k = 0; k < H; ++k) {
      for (std::size_t m = 0; m < H; ++m) {
        const std::size_t t = (k * m) % H;
        const double c = tw_h[2 * t];
        const double s = tw_h[2 * t + 1];
        for (std::size_t l = 0; l < W; ++l) {
          const double* rr = row_re.data() + (m * W + l) * C;
          const double* ri = row_im.data() + (m * W + l) * C;
          double* dr = rep + (k * W + l) * C;
          double* di = imp + (k * W + l) * C;
          for (std::size_t ch = 0; ch < C; ++ch) {
            // (rr + i ri)(c - i s)
            dr[ch] += rr[ch] * c + ri[ch] * s;
            di[ch] += ri[ch] * c - rr[ch] * s;
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(re[i], im[i]);

  Var inputs[] = {input};
  std::vector<Tensor> saved;
  saved.push_back(std::move(re));
  saved.push_back(std::move(im));
  return input.graph().record(
      "fft2d_magnitude", inputs, std::move(out),
      [d, tw_h, tw_w](const Graph&, const Node& n, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        const std::size_t H = d.h;
        const std::size_t W = d.w;
        const std::size_t C = d.c;
        const Tensor& re = n.saved[0];
        const Tensor& im = n.saved[1];
        // Z = g * X / |X| (zero where |X| == 0); dx = Re(sum_{k,l} Z e^{+i theta}).
        std::vector<double> zr(H * W * C);
        std::vector<double> zi(H * W * C);
        std::vector<double> tr(H * W * C);
        std::vector<double> ti(H * W * C);
        for (std::size_t b = 0; b < d.n; ++b) {
          const std::size_t base = b * H * W * C;
          for (std::size_t i = 0; i < H * W * C; ++i) {
            const double mag = n.value[base + i];
            if (mag == 0.0) {
              zr[i] = 0.0;
              zi[i] = 0.0;
            } else {
              zr[i] = n.grad[base + i] * re[base + i] / mag;
              zi[i] = n.grad[base + i] * im[base + i] / mag;
            }
          }
          std::fill(tr.begin(), tr.end(), 0.0);
          std::fill(ti.begin(), ti.end(), 0.0);
          // T[m, l] = sum_k Z[k, l] e^{+2 pi i k m / H}
          for (std::size_t m = 0; m < H; ++m) {
            for (std::size_t k = 0; k < H; ++k) {
              const std::size_t t = (k * m) % H;
              const double c = tw_h[2 * t];
              const double s = tw_h[2 * t + 1];
              for (std::size_t l = 0; l < W; ++l) {
                const double* a = zr.data() + (k * W + l) * C;
                const double* bi = zi.data() + (k * W + l) * C;
                double* dr = tr.data() + (m * W + l) * C;
                double* di = ti.data() + (m * W + l) * C;
                for (std::size_t ch = 0; ch < C; ++ch) {
                  dr[ch] += a[ch] * c - bi[ch] * s;
                  di[ch] += a[ch] * s + bi[ch] * c;
                }
              }
            }
          }
          // dx[m, nn] = Re sum_l T[m, l] e^{+2 pi i l nn / W}
          double* gx = gin[0]->ptr() + base;
          for (std::size_t m = 0; m < H; ++m) {
            for (std::size_t nn = 0; nn < W; ++nn) {
              double* dst = gx + (m * W + nn) * C;
              for (std::size_t l = 0; l < W; ++l) {
                const std::size_t t = (l * nn) % W;
                const double c = tw_w[2 * t];
                const double s = tw_w[2 * t + 1];
                const double* a = tr.data() + (m * W + l) * C;
                const double* bi = ti.data() + (m * W + l) * C;
                for (std::size_t ch = 0; ch < C; ++ch) dst[ch] += a[ch] * c - bi[ch] * s;
              }
            }
          }
        }
      },
      std::move(saved));
}

Var batch_norm(Var input, Var gamma, Var beta, Mode mode, BatchNormState state) {
  const Tensor& x = input.value();
  if (x.rank() < 2) throw DimensionError("batch_norm expects a channel-last tensor, got " + x.shape().str());
  const std::size_t C = x.shape().back();
  const std::size_t M = x.size() / C;
  if (gamma.shape().numel() != C || beta.shape().numel() != C) {
    throw DimensionError("batch_norm: affine parameters must have " + std::to_string(C) + " entries");
  }
  if (!state.running_mean || !state.running_var || state.running_mean->size() != C ||
      state.running_var->size() != C) {
    throw DimensionError("batch_norm: running statistics must have " + std::to_string(C) + " entries");
  }

  Tensor mean(Shape{C});
  Tensor var(Shape{C});
  if (mode == Mode::kTrain) {
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t c = 0; c < C; ++c) mean[c] += x[i * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(M);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        const double dv = x[i * C + c] - mean[c];
        var[c] += dv * dv;
      }
    }
    for (std::size_t c = 0; c < C; ++c) var[c] /= static_cast<double>(M);
    if (state.update) {
      for (std::size_t c = 0; c < C; ++c) {
        (*state.running_mean)[c] = state.momentum * (*state.running_mean)[c] + (1.0 - state.momentum) * mean[c];
        (*state.running_var)[c] = state.momentum * (*state.running_var)[c] + (1.0 - state.momentum) * var[c];
      }
    }
  } else {
    mean = *state.running_mean;
    var = *state.running_var;
  }

  Tensor inv(Shape{C});
  for (std::size_t c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(var[c] + kNormEpsilon);
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (x[i * C + c] - mean[c]) * inv[c];
      xhat[i * C + c] = h;
      out[i * C + c] = gv[c] * h + bv[c];
    }
  }

  Var inputs[] = {input, gamma, beta};
  std::vector<Tensor> saved;
  saved.push_back(std::move(xhat));
  saved.push_back(std::move(inv));
  const bool train = mode == Mode::kTrain;
  return input.graph().record(
      "batch_norm", inputs, std::move(out),
      [C, M, train](const Graph& g, const Node& n, std::span<Tensor* const> gin) {
        const Tensor& xhat = n.saved[0];
        const Tensor& inv = n.saved[1];
        const Tensor& gv = g.node(n.inputs[1]).value;
        const Tensor& go = n.grad;
        std::vector<double> sum_g(C, 0.0);
        std::vector<double> sum_gx(C, 0.0);
        for (std::size_t i = 0; i < M; ++i) {
          for (std::size_t c = 0; c < C; ++c) {
            sum_g[c] += go[i * C + c];
            sum_gx[c] += go[i * C + c] * xhat[i * C + c];
          }
        }
        if (gin[1]) {
          for (std::size_t c = 0; c < C; ++c) (*gin[1])[c] += sum_gx[c];
        }
        if (gin[2]) {
          for (std::size_t c = 0; c < C; ++c) (*gin[2])[c] += sum_g[c];
        }
        if (!gin[0]) return;
        const double m = static_cast<double>(M);
        for (std::size_t i = 0; i < M; ++i) {
          for (std::size_t c = 0; c < C; ++c) {
            const double gh = go[i * C + c] * gv[c];
            if (train) {
              // Batch statistics depend on every element of the batch.
              const double mean_gh = sum_g[c] * gv[c] / m;
              const double mean_ghx = sum_gx[c] * gv[c] / m;
              (*gin[0])[i * C + c] += inv[c] * (gh - mean_gh - xhat[i * C + c] * mean_ghx);
            } else {
              (*gin[0])[i * C + c] += inv[c] * gh;
            }
          }
        }
      },
      std::move(saved));
}

}  // namespace xflood
