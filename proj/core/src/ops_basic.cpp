#include <algorithm>
#include <cmath>
#include <string>

#include "xflood/errors.hpp"
#include "xflood/ops.hpp"

namespace xflood {

namespace {

// Per-axis element strides of an operand aligned to an output shape; 0 on
// broadcast axes.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.rank());
  std::size_t acc = 1;
  for (std::size_t i = s.rank(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.rank(), b.rank());
  std::vector<std::size_t> out(rank);
  BroadcastPlan p;
  p.a_stride.assign(rank, 0);
  p.b_stride.assign(rank, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t off_a = rank - a.rank();
    const std::size_t off_b = rank - b.rank();
    const std::size_t ea = d >= off_a ? a[d - off_a] : 1;
    const std::size_t eb = d >= off_b ? b[d - off_b] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
    }
    out[d] = std::max(ea, eb);
    if (d >= off_a && ea != 1) p.a_stride[d] = sa[d - off_a];
    if (d >= off_b && eb != 1) p.b_stride[d] = sb[d - off_b];
  }
  p.out = Shape(std::move(out));
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.out.rank();
  const std::size_t n = p.out.numel();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      ia += p.a_stride[d];
      ib += p.b_stride[d];
      if (counter[d] < p.out[d]) break;
      ia -= p.a_stride[d] * counter[d];
      ib -= p.b_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
}

enum class Binary { kAdd, kSub, kMul };

Var binary(Var a, Var b, Binary kind, const char* tag) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Var inputs[] = {a, b};

  if (av.shape() == bv.shape()) {
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = kind == Binary::kAdd ? av[i] + bv[i] : kind == Binary::kSub ? av[i] - bv[i] : av[i] * bv[i];
    }
    return a.graph().record(tag, inputs, std::move(out),
                            [kind](const Graph& g, const Node& n, std::span<Tensor* const> gin) {
                              const Tensor& go = n.grad;
                              const Tensor& x = g.node(n.inputs[0]).value;
                              const Tensor& y = g.node(n.inputs[1]).value;
                              for (std::size_t i = 0; i < go.size(); ++i) {
                                switch (kind) {
                                  case Binary::kAdd:
                                    if (gin[0]) (*gin[0])[i] += go[i];
                                    if (gin[1]) (*gin[1])[i] += go[i];
                                    break;
                                  case Binary::kSub:
                                    if (gin[0]) (*gin[0])[i] += go[i];
                                    if (gin[1]) (*gin[1])[i] -= go[i];
                                    break;
                                  case Binary::kMul:
                                    if (gin[0]) (*gin[0])[i] += go[i] * y[i];
                                    if (gin[1]) (*gin[1])[i] += go[i] * x[i];
                                    break;
                                }
                              }
                            });
  }

  BroadcastPlan plan = plan_broadcast(av.shape(), bv.shape(), tag);
  Tensor out(plan.out);
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = kind == Binary::kAdd ? av[ia] + bv[ib] : kind == Binary::kSub ? av[ia] - bv[ib] : av[ia] * bv[ib];
  });
  return a.graph().record(
      tag, inputs, std::move(out),
      [kind, plan](const Graph& g, const Node& n, std::span<Tensor* const> gin) {
        const Tensor& go = n.grad;
        const Tensor& x = g.node(n.inputs[0]).value;
        const Tensor& y = g.node(n.inputs[1]).value;
        for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          switch (kind) {
            case Binary::kAdd:
              if (gin[0]) (*gin[0])[ia] += go[o];
              if (gin[1]) (*gin[1])[ib] += go[o];
              break;
            case Binary::kSub:
              if (gin[0]) (*gin[0])[ia] += go[o];
              if (gin[1]) (*gin[1])[ib] -= go[o];
              break;
            case Binary::kMul:
              if (gin[0]) (*gin[0])[ia] += go[o] * y[ib];
              if (gin[1]) (*gin[1])[ib] += go[o] * x[ia];
              break;
          }
        });
      });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Applies f to each element; df(x, y) gives the local derivative.
template <typename F, typename DF>
Var unary(Var x, const char* tag, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  Var inputs[] = {x};
  return x.graph().record(tag, inputs, std::move(out),
                          [df](const Graph& g, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            const Tensor& in = g.node(n.inputs[0]).value;
                            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                              (*gin[0])[i] += n.grad[i] * df(in[i], n.value[i]);
                            }
                          });
}

std::size_t last_extent(const Tensor& t) { return t.shape().back(); }

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Binary::kAdd, "add"); }
Var sub(Var a, Var b) { return binary(a, b, Binary::kSub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, Binary::kMul, "mul"); }

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var x) {
  return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t len = last_extent(xv);
  const std::size_t rows = xv.size() / len;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * len;
    double* o = out.ptr() + r * len;
    const double mx = *std::max_element(in, in + len);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < len; ++j) o[j] /= total;
  }
  Var inputs[] = {x};
  return x.graph().record("softmax", inputs, std::move(out),
                          [len, rows](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (std::size_t r = 0; r < rows; ++r) {
                              const double* y = n.value.ptr() + r * len;
                              const double* go = n.grad.ptr() + r * len;
                              double dot = 0.0;
                              for (std::size_t j = 0; j < len; ++j) dot += go[j] * y[j];
                              double* gi = gin[0]->ptr() + r * len;
                              for (std::size_t j = 0; j < len; ++j) gi[j] += y[j] * (go[j] - dot);
                            }
                          });
}

Var activation(Var x, Activation kind) {
  switch (kind) {
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kRelu:
      return relu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSoftmax:
      return softmax(x);
  }
  throw ContractError("unknown activation");
}

Var layer_norm(Var x) {
  const Tensor& xv = x.value();
  const std::size_t len = last_extent(xv);
  const std::size_t rows = xv.size() / len;
  Tensor out(xv.shape());
  Tensor inv_std(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * len;
    double mean = 0.0;
    for (std::size_t j = 0; j < len; ++j) mean += in[j];
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t j = 0; j < len; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(len);
    const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
    inv_std[r] = inv;
    double* o = out.ptr() + r * len;
    for (std::size_t j = 0; j < len; ++j) o[j] = (in[j] - mean) * inv;
  }
  Var inputs[] = {x};
  std::vector<Tensor> saved;
  saved.push_back(std::move(inv_std));
  return x.graph().record(
      "layer_norm", inputs, std::move(out),
      [len, rows](const Graph&, const Node& n, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        const double inv_len = 1.0 / static_cast<double>(len);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xh = n.value.ptr() + r * len;
          const double* go = n.grad.ptr() + r * len;
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            mean_g += go[j];
            mean_gx += go[j] * xh[j];
          }
          mean_g *= inv_len;
          mean_gx *= inv_len;
          const double inv = n.saved[0][r];
          double* gi = gin[0]->ptr() + r * len;
          for (std::size_t j = 0; j < len; ++j) gi[j] += inv * (go[j] - mean_g - xh[j] * mean_gx);
        }
      },
      std::move(saved));
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  Var inputs[] = {x};
  return x.graph().record("reshape", inputs, std::move(out),
                          [](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (std::size_t i = 0; i < n.grad.size(); ++i) (*gin[0])[i] += n.grad[i];
                          });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("transpose expects rank 2, got " + xv.shape().str());
  const std::size_t r = xv.shape()[0];
  const std::size_t c = xv.shape()[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  Var inputs[] = {x};
  return x.graph().record("transpose", inputs, std::move(out),
                          [r, c](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (std::size_t i = 0; i < r; ++i) {
                              for (std::size_t j = 0; j < c; ++j) (*gin[0])[i * c + j] += n.grad[j * r + i];
                            }
                          });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.rank()) throw DimensionError("concat axis out of range for " + s0.str());
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.rank(); ++d) inner *= s0[d];

  std::vector<std::size_t> chunk;
  std::size_t axis_total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.rank() == s0.rank();
    for (std::size_t d = 0; ok && d < s.rank(); ++d) ok = d == axis || s[d] == s0[d];
    if (!ok) {
      throw DimensionError("concat: " + s.str() + " incompatible with " + s0.str() + " on axis " +
                           std::to_string(axis));
    }
    chunk.push_back(s[axis] * inner);
    axis_total += s[axis];
  }
  std::vector<std::size_t> ext = s0.extents();
  ext[axis] = axis_total;
  Tensor out{Shape(ext)};
  const std::size_t row = axis_total * inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.ptr() + o * chunk[p], chunk[p], out.ptr() + o * row + offset);
    }
    offset += chunk[p];
  }
  return parts[0].graph().record("concat", parts, std::move(out),
                                 [chunk, outer, row](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                                   std::size_t off = 0;
                                   for (std::size_t p = 0; p < chunk.size(); ++p) {
                                     if (gin[p]) {
                                       for (std::size_t o = 0; o < outer; ++o) {
                                         const double* src = n.grad.ptr() + o * row + off;
                                         double* dst = gin[p]->ptr() + o * chunk[p];
                                         for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += src[i];
                                       }
                                     }
                                     off += chunk[p];
                                   }
                                 });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.rank() || length == 0 || start + length > s[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                         std::to_string(axis) + " out of range for " + s.str());
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.rank(); ++d) inner *= s[d];
  std::vector<std::size_t> ext = s.extents();
  ext[axis] = length;
  Tensor out{Shape(ext)};
  const std::size_t src_row = s[axis] * inner;
  const std::size_t dst_row = length * inner;
  const std::size_t off = start * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.value().ptr() + o * src_row + off, dst_row, out.ptr() + o * dst_row);
  }
  Var inputs[] = {x};
  return x.graph().record("slice", inputs, std::move(out),
                          [outer, src_row, dst_row, off](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (std::size_t o = 0; o < outer; ++o) {
                              const double* src = n.grad.ptr() + o * dst_row;
                              double* dst = gin[0]->ptr() + o * src_row + off;
                              for (std::size_t i = 0; i < dst_row; ++i) dst[i] += src[i];
                            }
                          });
}

Var stack(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("stack of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (s0.rank() >= Shape::kMaxRank) throw DimensionError("stack would exceed rank 4: " + s0.str());
  std::vector<Var> lifted;
  lifted.reserve(parts.size());
  std::vector<std::size_t> ext{1};
  ext.insert(ext.end(), s0.extents().begin(), s0.extents().end());
  for (const Var& p : parts) {
    if (p.shape() != s0) throw DimensionError("stack: " + p.shape().str() + " differs from " + s0.str());
    lifted.push_back(reshape(p, Shape(ext)));
  }
  return concat(lifted, 0);
}

std::vector<Var> unstack(Var x) {
  const Shape& s = x.shape();
  std::vector<std::size_t> rest(s.extents().begin() + 1, s.extents().end());
  if (rest.empty()) rest.push_back(1);
  std::vector<Var> out;
  out.reserve(s[0]);
  for (std::size_t i = 0; i < s[0]; ++i) out.push_back(reshape(slice(x, 0, i, 1), Shape(rest)));
  return out;
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  Var inputs[] = {x};
  return x.graph().record("sum", inputs, Tensor::scalar(total),
                          [](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (double& g : gin[0]->data()) g += n.grad[0];
                          });
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("mean_rows expects rank 2, got " + xv.shape().str());
  const std::size_t rows = xv.shape()[0];
  const std::size_t cols = xv.shape()[1];
  Tensor out(Shape{1, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += xv[i * cols + j];
  }
  for (double& v : out.data()) v /= static_cast<double>(rows);
  Var inputs[] = {x};
  return x.graph().record("mean_rows", inputs, std::move(out),
                          [rows, cols](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            const double w = 1.0 / static_cast<double>(rows);
                            for (std::size_t i = 0; i < rows; ++i) {
                              for (std::size_t j = 0; j < cols; ++j) (*gin[0])[i * cols + j] += w * n.grad[j];
                            }
                          });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + av.shape().str() + " by " + bv.shape().str());
  }
  const std::size_t m = av.shape()[0];
  const std::size_t k = av.shape()[1];
  const std::size_t n = bv.shape()[1];
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.ptr() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.ptr() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aip * brow[j];
    }
  }
  Var inputs[] = {a, b};
  return a.graph().record("matmul", inputs, std::move(out),
                          [m, k, n](const Graph& g, const Node& node, std::span<Tensor* const> gin) {
                            const Tensor& A = g.node(node.inputs[0]).value;
                            const Tensor& B = g.node(node.inputs[1]).value;
                            const Tensor& G = node.grad;
                            if (gin[0]) {
                              // dA = G * B^T
                              for (std::size_t i = 0; i < m; ++i) {
                                const double* grow = G.ptr() + i * n;
                                double* da = gin[0]->ptr() + i * k;
                                for (std::size_t p = 0; p < k; ++p) {
                                  const double* brow = B.ptr() + p * n;
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                  da[p] += acc;
                                }
                              }
                            }
                            if (gin[1]) {
                              // dB = A^T * G
                              for (std::size_t i = 0; i < m; ++i) {
                                const double* grow = G.ptr() + i * n;
                                for (std::size_t p = 0; p < k; ++p) {
                                  const double aip = A[i * k + p];
                                  if (aip == 0.0) continue;
                                  double* db = gin[1]->ptr() + p * n;
                                  for (std::size_t j = 0; j < n; ++j) db[j] += aip * grow[j];
                                }
                              }
                            }
                          });
}

Var permute(Var x, std::vector<std::size_t> perm) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rank();
  if (perm.size() != r) {
    throw DimensionError("permute: " + std::to_string(perm.size()) + " axes given for " + xv.shape().str());
  }
  std::vector<bool> seen(r, false);
  for (std::size_t a : perm) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis order for " + xv.shape().str());
    seen[a] = true;
  }
  std::vector<std::size_t> out_ext(r);
  for (std::size_t i = 0; i < r; ++i) out_ext[i] = xv.shape()[perm[i]];
  const std::vector<std::size_t> in_strides = contiguous_strides(xv.shape());
  // source[i] = input offset of output element i
  std::vector<std::size_t> source(xv.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t i = 0; i < source.size(); ++i) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < r; ++a) off += idx[a] * in_strides[perm[a]];
    source[i] = off;
    for (std::size_t a = r; a-- > 0;) {
      if (++idx[a] < out_ext[a]) break;
      idx[a] = 0;
    }
  }
  Tensor out{Shape(out_ext)};
  for (std::size_t i = 0; i < source.size(); ++i) out[i] = xv[source[i]];
  Var inputs[] = {x};
  return x.graph().record("permute", inputs, std::move(out),
                          [source = std::move(source)](const Graph&, const Node& n, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (std::size_t i = 0; i < source.size(); ++i) (*gin[0])[source[i]] += n.grad[i];
                          });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.shape()[0] != bv.shape()[0] ||
      av.shape()[2] != bv.shape()[transpose_b ? 2 : 1]) {
    throw DimensionError(std::string("batched_matmul: cannot multiply ") + av.shape().str() + " by " +
                         bv.shape().str() + (transpose_b ? " (transposed)" : ""));
  }
  const std::size_t B = av.shape()[0];
  const std::size_t m = av.shape()[1];
  const std::size_t k = av.shape()[2];
  const std::size_t n = bv.shape()[transpose_b ? 1 : 2];
  // Element (p, j) of the right operand within batch t.
  const std::size_t b_row = transpose_b ? 1 : n;
  const std::size_t b_col = transpose_b ? k : 1;
  Tensor out(Shape{B, m, n});
  for (std::size_t t = 0; t < B; ++t) {
    const double* A = av.ptr() + t * m * k;
    const double* Bm = bv.ptr() + t * k * n;
    double* O = out.ptr() + t * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) O[i * n + j] += aip * Bm[p * b_row + j * b_col];
      }
    }
  }
  Var inputs[] = {a, b};
  return a.graph().record(
      "batched_matmul", inputs, std::move(out),
      [B, m, k, n, b_row, b_col](const Graph& g, const Node& node, std::span<Tensor* const> gin) {
        const Tensor& av = g.node(node.inputs[0]).value;
        const Tensor& bv = g.node(node.inputs[1]).value;
        for (std::size_t t = 0; t < B; ++t) {
          const double* A = av.ptr() + t * m * k;
          const double* Bm = bv.ptr() + t * k * n;
          const double* G = node.grad.ptr() + t * m * n;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              if (gin[0]) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bm[p * b_row + j * b_col];
                (*gin[0])[t * m * k + i * k + p] += acc;
              }
              if (gin[1]) {
                const double aip = A[i * k + p];
                double* dB = gin[1]->ptr() + t * k * n;
                for (std::size_t j = 0; j < n; ++j) dB[p * b_row + j * b_col] += aip * G[i * n + j];
              }
            }
          }
        }
      });
}

Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

Var dropout(Var input, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::kEval || rate == 0.0) return input;
  const Tensor& xv = input.value();
  Tensor mask(xv.shape());
  Tensor out(xv.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    out[i] = xv[i] * mask[i];
  }
  Var inputs[] = {input};
  std::vector<Tensor> saved;
  saved.push_back(std::move(mask));
  return input.graph().record(
      "dropout", inputs, std::move(out),
      [](const Graph&, const Node& n, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*gin[0])[i] += n.grad[i] * n.saved[0][i];
      },
      std::move(saved));
}

Var bce_loss(Var probs, std::span<const int> labels) {
  const Tensor& p = probs.value();
  if (p.size() != labels.size()) {
    throw DimensionError("bce_loss: " + std::to_string(p.size()) + " probabilities for " +
                         std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw InputError("bce_loss: label must be 0 or 1, got " + std::to_string(y));
  }
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbabilityClip, 1.0 - kProbabilityClip);
    total += labels[i] == 1 ? std::log(pc) : std::log(1.0 - pc);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  Var inputs[] = {probs};
  return probs.graph().record("bce_loss", inputs, Tensor::scalar(-total / n),
                              [ys, n](const Graph& g, const Node& node, std::span<Tensor* const> gin) {
                                if (!gin[0]) return;
                                const Tensor& pv = g.node(node.inputs[0]).value;
                                for (std::size_t i = 0; i < pv.size(); ++i) {
                                  const double pi = pv[i];
                                  if (pi <= kProbabilityClip || pi >= 1.0 - kProbabilityClip) continue;
                                  const double d = ys[i] == 1 ? -1.0 / pi : 1.0 / (1.0 - pi);
                                  (*gin[0])[i] += node.grad[0] * d / n;
                                }
                              });
}

}  // namespace xflood
