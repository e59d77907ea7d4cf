#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace grimp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the implicit computation graph. Values are frozen once the
// producing op returns; only `grad` is written afterwards.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major float64 tensor with reverse-mode differentiation.
//
// Tensor is a cheap handle: copies share the same node, as in most tape
// based frameworks. Ops never mutate their inputs; a tensor's values can only
// be changed through `mutable_data()`, which is meant for optimizers and
// initializers acting on leaf parameters.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Convenience for tests: row-major nested initializer.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;
  // rows/cols of a 2-D tensor
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i, std::size_t j) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  const char* op_name() const;

  // Populates grads of every reachable leaf that requires grad. Leaf grads
  // accumulate across calls; intermediate grads are recomputed each call.
  void backward() const;

  // Fresh leaf holding a copy of the values; no history.
  Tensor detach() const;
  Tensor clone() const;

  // Used by op implementations.
  static Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn);
  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// While alive on a thread, ops on that thread record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---------------------------------------------------------------------------
// Operations. Elementwise binary ops accept equal shapes or a one-element
// operand broadcast against the other.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws NumericDomainError when any entry is <= 0.
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
// log(1 + e^x), stable for large |x|.
Tensor softplus(const Tensor& a);
// Values limited to [lo, hi]; gradient passes only strictly inside.
Tensor clamp(const Tensor& a, double lo, double hi);

enum class ElementwiseOp { add, sub, mul, relu, sigmoid, exp, log, square };
// Dispatching front-end over the elementwise family; unary ops ignore `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = Tensor());

Tensor sum(const Tensor& a);
Tensor trace(const Tensor& a);
// x[r, c] + bias[c] for x: rows x cols, bias: 1 x cols (or cols).
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor reshape(const Tensor& a, Shape shape);

// Columns `index` of a 2-D tensor, in the given order.
Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index);
// Inverse layout of gather_cols over a partition: part k's column c lands in
// output column index[k][c]. Columns not covered are zero.
Tensor scatter_cols(const std::vector<Tensor>& parts,
                    const std::vector<std::vector<std::size_t>>& index, std::size_t width);
// Interleave M tensors of shape B x L into (B*M) x L with row b*M + m.
Tensor interleave_rows(const std::vector<Tensor>& parts);
// Rows m, m + M, m + 2M, ... of a (B*M) x L tensor: the inverse of interleave_rows.
Tensor strided_rows(const Tensor& x, std::size_t offset, std::size_t stride);

// Matrix exponential by scaling and squaring. Backward uses the exact
// Frechet derivative (block-triangular exponential).
Tensor matrix_exp(const Tensor& a);

// Graph message aggregation for node states stored as (B*M) x H rows
// (row b*M + i is node i of sample b):
//   out[b, i] = sum_{k != i} weight[k, i] * relu(sender[b, k] + receiver[b, i] + bias)
// weight is M x M; bias is 1 x H.
Tensor edge_aggregate(const Tensor& sender, const Tensor& receiver, const Tensor& bias,
                      const Tensor& weight);
// Row b*M + i equals (sum_{k != i} weight[k, i]) * bias, for B samples.
Tensor in_weight_bias(const Tensor& weight, const Tensor& bias, std::size_t batch);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace grimp
