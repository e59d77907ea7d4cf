#pragma once

#include <string>
#include <vector>

#include "grimp/rng.hpp"
#include "grimp/tensor.hpp"

namespace grimp {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Two linear layers with a ReLU in between; linear output.
struct Mlp {
  Tensor w1, b1, w2, b2;

  static Mlp create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  std::size_t in_width() const { return w1.rows(); }
  std::size_t out_width() const { return w2.cols(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Mlp applied to a concatenation [first, second]. The first layer weight is
// kept as two row blocks so per-node projections can be shared across all
// node pairs.
struct PairMlp {
  Tensor w1_first, w1_second, b1, w2, b2;

  static PairMlp create(std::size_t half_in, std::size_t hidden, std::size_t out, Rng& rng);
  // Reference evaluation on explicit pair rows; `first` and `second` are N x half_in.
  Tensor forward(const Tensor& first, const Tensor& second) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Shared hidden layer feeding a mean head and a log-std head.
struct GaussianHeadMlp {
  Tensor w1, b1, w_mean, b_mean, w_log_std, b_log_std;

  static GaussianHeadMlp create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  std::pair<Tensor, Tensor> forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

}  // namespace grimp
