#include "grimp/nn.hpp"

#include <cmath>

namespace grimp {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * a;
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

namespace {

Tensor zero_bias(std::size_t n) { return Tensor::zeros({1, n}, true); }

}  // namespace

Mlp Mlp::create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.w1 = glorot_uniform(in, hidden, rng);
  m.b1 = zero_bias(hidden);
  m.w2 = glorot_uniform(hidden, out, rng);
  m.b2 = zero_bias(out);
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
}

void Mlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w1", w1});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".w2", w2});
  out.push_back({prefix + ".b2", b2});
}

PairMlp PairMlp::create(std::size_t half_in, std::size_t hidden, std::size_t out, Rng& rng) {
  // Draw the full (2 * half_in) x hidden block so the scale matches a plain
  // layer over the concatenation, then split it.
  const Tensor full = glorot_uniform(2 * half_in, hidden, rng);
  const auto d = full.data();
  const std::size_t split = half_in * hidden;
  PairMlp m;
  m.w1_first = Tensor::from({half_in, hidden}, {d.begin(), d.begin() + static_cast<std::ptrdiff_t>(split)}, true);
  m.w1_second = Tensor::from({half_in, hidden}, {d.begin() + static_cast<std::ptrdiff_t>(split), d.end()}, true);
  m.b1 = zero_bias(hidden);
  m.w2 = glorot_uniform(hidden, out, rng);
  m.b2 = zero_bias(out);
  return m;
}

Tensor PairMlp::forward(const Tensor& first, const Tensor& second) const {
  const Tensor pre = add_bias(add(matmul(first, w1_first), matmul(second, w1_second)), b1);
  return add_bias(matmul(relu(pre), w2), b2);
}

void PairMlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w1_first", w1_first});
  out.push_back({prefix + ".w1_second", w1_second});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".w2", w2});
  out.push_back({prefix + ".b2", b2});
}

GaussianHeadMlp GaussianHeadMlp::create(std::size_t in, std::size_t hidden, std::size_t out,
                                        Rng& rng) {
  GaussianHeadMlp m;
  m.w1 = glorot_uniform(in, hidden, rng);
  m.b1 = zero_bias(hidden);
  m.w_mean = glorot_uniform(hidden, out, rng);
  m.b_mean = zero_bias(out);
  m.w_log_std = glorot_uniform(hidden, out, rng);
  m.b_log_std = zero_bias(out);
  return m;
}

std::pair<Tensor, Tensor> GaussianHeadMlp::forward(const Tensor& x) const {
  const Tensor h = relu(add_bias(matmul(x, w1), b1));
  return {add_bias(matmul(h, w_mean), b_mean), add_bias(matmul(h, w_log_std), b_log_std)};
}

void GaussianHeadMlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w1", w1});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".w_mean", w_mean});
  out.push_back({prefix + ".b_mean", b_mean});
  out.push_back({prefix + ".w_log_std", w_log_std});
  out.push_back({prefix + ".b_log_std", b_log_std});
}

}  // namespace grimp
