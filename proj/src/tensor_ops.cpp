#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "grimp/error.hpp"
#include "grimp/tensor.hpp"

namespace grimp {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

MapMat as_mat(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
  }
}

detail::Node& parent(detail::Node& n, std::size_t i) { return *n.parents[i]; }

// Broadcast classification for binary elementwise ops.
enum class Bcast { same, a_scalar, b_scalar };

Bcast classify(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (b.numel() == 1) return Bcast::b_scalar;
  if (a.numel() == 1) return Bcast::a_scalar;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not broadcast-compatible");
}

// Accumulate an output-shaped gradient `g` (times `factor[i]` if given) into
// parent `p`, reducing when the parent was broadcast.
template <typename F>
void accumulate(detail::Node& p, const std::vector<double>& g, F&& factor) {
  if (!p.requires_grad) return;
  if (p.data.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i] * factor(i);
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * factor(i);
    p.grad[0] += s;
  }
}

template <typename Fwd, typename Dfn>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Dfn dfn) {
  const auto& x = a.node().data;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return Tensor::make_result(a.shape(), std::move(out), op, {a}, [dfn](detail::Node& n) {
    auto& p = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      p.grad[i] += n.grad[i] * dfn(p.data[i], n.data[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) + " . " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  as_mat(out, m, n).noalias() = as_mat(a.node().data, m, k) * as_mat(b.node().data, k, n);
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node& r) {
    auto& pa = parent(r, 0);
    auto& pb = parent(r, 1);
    auto g = as_mat(r.grad, m, n);
    if (pa.requires_grad) {
      as_mat(pa.grad, m, k).noalias() += g * as_mat(pb.data, k, n).transpose();
    }
    if (pb.requires_grad) {
      as_mat(pb.grad, k, n).noalias() += as_mat(pa.data, m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  as_mat(out, n, m) = as_mat(a.node().data, m, n).transpose();
  return Tensor::make_result({n, m}, std::move(out), "transpose", {a}, [m, n](detail::Node& r) {
    auto& p = parent(r, 0);
    as_mat(p.grad, m, n) += as_mat(r.grad, n, m).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(a, b, "add");
  const auto& x = a.node().data;
  const auto& y = b.node().data;
  const Shape shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  std::vector<double> out(shape_numel(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[bc == Bcast::a_scalar ? 0 : i] + y[bc == Bcast::b_scalar ? 0 : i];
  }
  return Tensor::make_result(shape, std::move(out), "add", {a, b}, [](detail::Node& r) {
    accumulate(parent(r, 0), r.grad, [](std::size_t) { return 1.0; });
    accumulate(parent(r, 1), r.grad, [](std::size_t) { return 1.0; });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(a, b, "sub");
  const auto& x = a.node().data;
  const auto& y = b.node().data;
  const Shape shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  std::vector<double> out(shape_numel(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[bc == Bcast::a_scalar ? 0 : i] - y[bc == Bcast::b_scalar ? 0 : i];
  }
  return Tensor::make_result(shape, std::move(out), "sub", {a, b}, [](detail::Node& r) {
    accumulate(parent(r, 0), r.grad, [](std::size_t) { return 1.0; });
    accumulate(parent(r, 1), r.grad, [](std::size_t) { return -1.0; });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast bc = classify(a, b, "mul");
  const auto& x = a.node().data;
  const auto& y = b.node().data;
  const Shape shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  std::vector<double> out(shape_numel(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[bc == Bcast::a_scalar ? 0 : i] * y[bc == Bcast::b_scalar ? 0 : i];
  }
  return Tensor::make_result(shape, std::move(out), "mul", {a, b}, [bc](detail::Node& r) {
    auto& pa = parent(r, 0);
    auto& pb = parent(r, 1);
    accumulate(pa, r.grad,
               [&](std::size_t i) { return pb.data[bc == Bcast::b_scalar ? 0 : i]; });
    accumulate(pb, r.grad,
               [&](std::size_t i) { return pa.data[bc == Bcast::a_scalar ? 0 : i]; });
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw NumericDomainError("log: argument must be positive, got " + std::to_string(v));
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus",
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lower bound above upper bound");
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::add: return add(a, b);
    case ElementwiseOp::sub: return sub(a, b);
    case ElementwiseOp::mul: return mul(a, b);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::sigmoid: return sigmoid(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::square: return square(a);
  }
  throw ContractError("elementwise: unknown op");
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({}, {s}, "sum", {a}, [](detail::Node& r) {
    auto& p = parent(r, 0);
    const double g = r.grad[0];
    for (auto& v : p.grad) v += g;
  });
}

Tensor trace(const Tensor& a) {
  require_2d(a, "trace");
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("trace: non-square " + shape_str(a.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a.at(i, i);
  return Tensor::make_result({}, {s}, "trace", {a}, [n](detail::Node& r) {
    auto& p = parent(r, 0);
    for (std::size_t i = 0; i < n; ++i) p.grad[i * n + i] += r.grad[0];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.node().data);
  const auto& b = bias.node().data;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  }
  return Tensor::make_result({m, n}, std::move(out), "add_bias", {x, bias}, [m, n](detail::Node& r) {
    auto& px = parent(r, 0);
    auto& pb = parent(r, 1);
    if (px.requires_grad) {
      for (std::size_t i = 0; i < r.grad.size(); ++i) px.grad[i] += r.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) pb.grad[j] += r.grad[i * n + j];
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return Tensor::make_result(std::move(shape), a.node().data, "reshape", {a}, [](detail::Node& r) {
    auto& p = parent(r, 0);
    for (std::size_t i = 0; i < r.grad.size(); ++i) p.grad[i] += r.grad[i];
  });
}

Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index) {
  require_2d(x, "gather_cols");
  const std::size_t m = x.rows(), n = x.cols(), k = index.size();
  for (auto c : index) {
    if (c >= n) throw DimensionError("gather_cols: column " + std::to_string(c) + " out of range");
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const auto& src = x.node().data;
  std::vector<double> out(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = src[i * n + idx[j]];
  }
  return Tensor::make_result({m, k}, std::move(out), "gather_cols", {x},
                             [m, n, k, idx = std::move(idx)](detail::Node& r) {
                               auto& p = parent(r, 0);
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                   p.grad[i * n + idx[j]] += r.grad[i * k + j];
                                 }
                               }
                             });
}

Tensor scatter_cols(const std::vector<Tensor>& parts,
                    const std::vector<std::vector<std::size_t>>& index, std::size_t width) {
  if (parts.size() != index.size() || parts.empty()) {
    throw DimensionError("scatter_cols: parts and index lists differ in length");
  }
  const std::size_t m = parts.front().rows();
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].rows() != m || parts[p].cols() != index[p].size()) {
      throw DimensionError("scatter_cols: part " + std::to_string(p) + " has shape " +
                           shape_str(parts[p].shape()));
    }
    for (auto c : index[p]) {
      if (c >= width) throw DimensionError("scatter_cols: column out of range");
    }
  }
  std::vector<double> out(m * width, 0.0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& src = parts[p].node().data;
    const std::size_t k = index[p].size();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) out[i * width + index[p][j]] = src[i * k + j];
    }
  }
  return Tensor::make_result({m, width}, std::move(out), "scatter_cols", parts,
                             [m, width, index](detail::Node& r) {
                               for (std::size_t p = 0; p < index.size(); ++p) {
                                 auto& pn = parent(r, p);
                                 if (!pn.requires_grad) continue;
                                 const std::size_t k = index[p].size();
                                 for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t j = 0; j < k; ++j) {
                                     pn.grad[i * k + j] += r.grad[i * width + index[p][j]];
                                   }
                                 }
                               }
                             });
}

Tensor interleave_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("interleave_rows: no parts");
  const std::size_t b = parts.front().rows(), l = parts.front().cols(), m = parts.size();
  for (const auto& p : parts) {
    if (p.rows() != b || p.cols() != l) throw DimensionError("interleave_rows: ragged parts");
  }
  std::vector<double> out(b * m * l);
  for (std::size_t g = 0; g < m; ++g) {
    const auto& src = parts[g].node().data;
    for (std::size_t i = 0; i < b; ++i) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * l), l,
                  out.begin() + static_cast<std::ptrdiff_t>((i * m + g) * l));
    }
  }
  return Tensor::make_result({b * m, l}, std::move(out), "interleave_rows", parts,
                             [b, m, l](detail::Node& r) {
                               for (std::size_t g = 0; g < m; ++g) {
                                 auto& p = parent(r, g);
                                 if (!p.requires_grad) continue;
                                 for (std::size_t i = 0; i < b; ++i) {
                                   for (std::size_t c = 0; c < l; ++c) {
                                     p.grad[i * l + c] += r.grad[(i * m + g) * l + c];
                                   }
                                 }
                               }
                             });
}

Tensor strided_rows(const Tensor& x, std::size_t offset, std::size_t stride) {
  require_2d(x, "strided_rows");
  const std::size_t total = x.rows(), l = x.cols();
  if (stride == 0 || offset >= stride || total % stride != 0) {
    throw DimensionError("strided_rows: bad offset/stride for " + shape_str(x.shape()));
  }
  const std::size_t b = total / stride;
  const auto& src = x.node().data;
  std::vector<double> out(b * l);
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((i * stride + offset) * l), l,
                out.begin() + static_cast<std::ptrdiff_t>(i * l));
  }
  return Tensor::make_result({b, l}, std::move(out), "strided_rows", {x},
                             [b, l, offset, stride](detail::Node& r) {
                               auto& p = parent(r, 0);
                               for (std::size_t i = 0; i < b; ++i) {
                                 for (std::size_t c = 0; c < l; ++c) {
                                   p.grad[(i * stride + offset) * l + c] += r.grad[i * l + c];
                                 }
                               }
                             });
}

Tensor edge_aggregate(const Tensor& sender, const Tensor& receiver, const Tensor& bias,
                      const Tensor& weight) {
  require_2d(sender, "edge_aggregate");
  require_2d(weight, "edge_aggregate");
  const std::size_t m = weight.rows();
  if (weight.cols() != m || m == 0) {
    throw DimensionError("edge_aggregate: weight must be square, got " + shape_str(weight.shape()));
  }
  const std::size_t rows = sender.rows(), h = sender.cols();
  if (receiver.shape() != sender.shape() || rows % m != 0 || bias.numel() != h) {
    throw DimensionError("edge_aggregate: inconsistent shapes sender " + shape_str(sender.shape()) +
                         " receiver " + shape_str(receiver.shape()) + " bias " +
                         shape_str(bias.shape()) + " for " + std::to_string(m) + " nodes");
  }
  const std::size_t batch = rows / m;
  const auto& s = sender.node().data;
  const auto& rc = receiver.node().data;
  const auto& bb = bias.node().data;
  const auto& w = weight.node().data;
  std::vector<double> out(rows * h, 0.0);
  std::vector<double> pre(h);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* ri = &rc[(b * m + i) * h];
      double* oi = &out[(b * m + i) * h];
      for (std::size_t c = 0; c < h; ++c) pre[c] = ri[c] + bb[c];
      for (std::size_t k = 0; k < m; ++k) {
        const double wk = w[k * m + i];
        if (k == i || wk == 0.0) continue;
        const double* sk = &s[(b * m + k) * h];
        for (std::size_t c = 0; c < h; ++c) {
          const double v = sk[c] + pre[c];
          oi[c] += v > 0.0 ? wk * v : 0.0;
        }
      }
    }
  }
  return Tensor::make_result(
      {rows, h}, std::move(out), "edge_aggregate", {sender, receiver, bias, weight},
      [batch, m, h](detail::Node& r) {
        auto& ps = parent(r, 0);
        auto& pr = parent(r, 1);
        auto& pb = parent(r, 2);
        auto& pw = parent(r, 3);
        const auto& s = ps.data;
        const auto& rc = pr.data;
        const auto& bb = pb.data;
        const auto& w = pw.data;
        // Parents that need no grad write into scratch so the loops stay branch free.
        std::vector<double> scratch_s, scratch_r;
        double* gs = ps.requires_grad ? ps.grad.data() : (scratch_s.assign(s.size(), 0.0), scratch_s.data());
        double* gr = pr.requires_grad ? pr.grad.data() : (scratch_r.assign(rc.size(), 0.0), scratch_r.data());
        std::vector<double> pre(h), acc_r(h), acc_b(h, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < m; ++i) {
            const std::size_t ri = (b * m + i) * h;
            const double* gi = &r.grad[ri];
            for (std::size_t c = 0; c < h; ++c) pre[c] = rc[ri + c] + bb[c];
            std::fill(acc_r.begin(), acc_r.end(), 0.0);
            for (std::size_t k = 0; k < m; ++k) {
              if (k == i) continue;
              const double wk = w[k * m + i];
              const std::size_t sk = (b * m + k) * h;
              double* gsk = gs + sk;
              double dw = 0.0;
              for (std::size_t c = 0; c < h; ++c) {
                const double v = s[sk + c] + pre[c];
                const double active = v > 0.0 ? 1.0 : 0.0;
                dw += active * gi[c] * v;
                const double g = active * gi[c] * wk;
                gsk[c] += g;
                acc_r[c] += g;
              }
              if (pw.requires_grad) pw.grad[k * m + i] += dw;
            }
            double* gri = gr + ri;
            for (std::size_t c = 0; c < h; ++c) {
              gri[c] += acc_r[c];
              acc_b[c] += acc_r[c];
            }
          }
        }
        if (pb.requires_grad) {
          for (std::size_t c = 0; c < h; ++c) pb.grad[c] += acc_b[c];
        }
      });
}

Tensor in_weight_bias(const Tensor& weight, const Tensor& bias, std::size_t batch) {
  require_2d(weight, "in_weight_bias");
  const std::size_t m = weight.rows();
  if (weight.cols() != m) throw DimensionError("in_weight_bias: weight must be square");
  const std::size_t h = bias.numel();
  const auto& w = weight.node().data;
  const auto& bb = bias.node().data;
  std::vector<double> indeg(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) indeg[i] += w[k * m + i];
    }
  }
  std::vector<double> out(batch * m * h);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < h; ++c) out[(b * m + i) * h + c] = indeg[i] * bb[c];
    }
  }
  return Tensor::make_result(
      {batch * m, h}, std::move(out), "in_weight_bias", {weight, bias},
      [batch, m, h, indeg = std::move(indeg)](detail::Node& r) {
        auto& pw = parent(r, 0);
        auto& pb = parent(r, 1);
        // Column sums of the incoming gradient per node.
        std::vector<double> gsum(m * h, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < h; ++c) gsum[i * h + c] += r.grad[(b * m + i) * h + c];
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t c = 0; c < h; ++c) {
            dot += gsum[i * h + c] * pb.data[c];
            if (pb.requires_grad) pb.grad[c] += gsum[i * h + c] * indeg[i];
          }
          if (pw.requires_grad) {
            for (std::size_t k = 0; k < m; ++k) {
              if (k != i) pw.grad[k * m + i] += dot;
            }
          }
        }
      });
}

}  // namespace grimp
