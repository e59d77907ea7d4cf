#include "grimp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "grimp/csv.hpp"
#include "grimp/error.hpp"

namespace grimp {

const char* to_string(MaskingPolicy p) { return p == MaskingPolicy::none ? "none" : "uniform_fraction"; }

MaskingPolicy parse_masking_policy(const std::string& s) {
  if (s == "none") return MaskingPolicy::none;
  if (s == "uniform_fraction") return MaskingPolicy::uniform_fraction;
  throw ValidationError("unknown masking policy '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("train: epochs must be positive");
  if (batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
  if (!(lambda_dag >= 0.0)) throw ValidationError("train: lambda_dag must be non-negative");
  if (!(lambda_warmup >= 0.0 && lambda_warmup <= 1.0)) throw ValidationError("train: lambda_warmup must lie in [0, 1]");
  if (!(tau > 0.0)) throw ValidationError("train: tau must be positive");
  if (!(stage_split > 0.0 && stage_split <= 1.0)) throw ValidationError("train: stage_split must lie in (0, 1]");
  if (mc_samples_train == 0) throw ValidationError("train: mc_samples_train must be positive");
  if (!(clip_norm >= 0.0)) throw ValidationError("train: clip_norm must be non-negative");
}

std::size_t TrainConfig::stage_one_epochs() const {
  const auto n = static_cast<std::size_t>(std::llround(stage_split * static_cast<double>(epochs)));
  return std::clamp<std::size_t>(n, 1, epochs);
}

std::string TrainTrace::to_csv() const {
  std::string out = "epoch,neg_elbo,recon,kl_z,kl_g,dag_penalty,seconds\n";
  for (const auto& r : records) {
    out += csv_line({std::to_string(r.epoch), format_double(r.neg_elbo), format_double(r.recon),
                     format_double(r.kl_z), format_double(r.kl_g), format_double(r.dag_penalty),
                     format_double(r.seconds)});
  }
  return out;
}

Tensor gaussian_kl(const Tensor& mean, const Tensor& log_std, double sigma_z) {
  if (mean.shape() != log_std.shape()) throw DimensionError("gaussian_kl: mean and log_std shapes differ");
  const double inv_var = 1.0 / (sigma_z * sigma_z);
  // 0.5 * [(mu^2 + s^2) / sz^2 - 1 - 2 log s + 2 log sz]
  const Tensor quad = scale(add(square(mean), exp(scale(log_std, 2.0))), inv_var);
  const Tensor per = sub(quad, scale(log_std, 2.0));
  const double n = static_cast<double>(mean.numel());
  return scale(add_scalar(sum(per), n * (2.0 * std::log(sigma_z) - 1.0)), 0.5);
}

Tensor log_likelihood(const Batch& x, std::span<const unsigned char> target_mask, const Tensor& x_hat,
                      const std::vector<VariableKind>& kinds, double sigma_x) {
  const std::size_t n = x.rows * x.cols;
  if (x_hat.dim() != 2 || x_hat.rows() != x.rows || x_hat.cols() != x.cols || target_mask.size() != n ||
      kinds.size() != x.cols) {
    throw DimensionError("log_likelihood: prediction " + shape_str(x_hat.shape()) + " does not match batch");
  }
  if (!(sigma_x > 0.0)) throw ContractError("log_likelihood: sigma_x must be positive");
  std::vector<double> target(n, 0.0), cont(n, 0.0), bin(n, 0.0);
  std::size_t n_cont = 0, n_bin = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!target_mask[i]) continue;
    const double v = x.values[i];
    if (!x.observed[i] || !std::isfinite(v)) {
      throw DataError("log_likelihood: target cell " + std::to_string(i) + " is not an observed value");
    }
    target[i] = v;
    if (kinds[i % x.cols] == VariableKind::binary) {
      if (v != 0.0 && v != 1.0) throw DataError("log_likelihood: binary target outside {0, 1}");
      bin[i] = 1.0;
      ++n_bin;
    } else {
      cont[i] = 1.0;
      ++n_cont;
    }
  }
  const Shape shape{x.rows, x.cols};
  const Tensor t = Tensor::from(shape, std::move(target));
  Tensor total = Tensor::scalar(0.0);
  if (n_cont > 0) {
    const double var = sigma_x * sigma_x;
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
    const Tensor sq = mul(square(sub(x_hat, t)), Tensor::from(shape, std::move(cont)));
    total = add_scalar(scale(sum(sq), -0.5 / var), static_cast<double>(n_cont) * log_norm);
  }
  if (n_bin > 0) {
    // x * l - softplus(l)
    const Tensor ll = sub(mul(t, x_hat), softplus(x_hat));
    total = add(total, sum(mul(ll, Tensor::from(shape, std::move(bin)))));
  }
  return total;
}

MaskPair apply_mask_fraction(const Batch& x, double drop_fraction, Rng& rng) {
  MaskPair out{x.observed, x.observed};
  if (drop_fraction <= 0.0) return out;
  for (std::size_t i = 0; i < out.input.size(); ++i) {
    if (out.input[i] && rng.uniform() < drop_fraction) out.input[i] = 0;
  }
  return out;
}

MaskPair apply_mask(const Batch& x, Rng& rng, MaskingPolicy policy) {
  MaskPair out{x.observed, x.observed};
  if (policy == MaskingPolicy::none) return out;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double fraction = rng.uniform();
    for (std::size_t c = 0; c < x.cols; ++c) {
      auto& cell = out.input[r * x.cols + c];
      if (cell && rng.uniform() < fraction) cell = 0;
    }
  }
  return out;
}

ElboTerms elbo(const Batch& x, const MaskPair& masks, const GroupSpec& spec, const ModelParams& model,
               const GraphPosterior& graph, const TrainConfig& config, double kl_g_weight, Rng& rng) {
  if (x.rows == 0) throw ContractError("elbo: empty batch");
  if (graph.num_nodes != spec.num_groups()) throw ContractError("elbo: graph size differs from group count");
  const LatentState st = encode(x, masks.input, spec, model, nullptr);
  ElboTerms out;
  out.kl_z = gaussian_kl(st.mean, st.log_std, model.config.sigma_z);
  const std::size_t samples = config.mc_samples_train;
  Tensor recon;
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> eps(st.mean.numel());
    for (auto& e : eps) e = rng.normal();
    LatentState draw = st;
    draw.z = reparametrize(st.mean, st.log_std, eps);
    const Tensor g = sample_soft(graph, config.tau, rng);
    if (s == 0) out.graph_sample = g;
    const Tensor ll = log_likelihood(x, masks.target, decode(draw, g, spec, model), spec.kinds,
                                     model.config.sigma_x);
    recon = s == 0 ? ll : add(recon, ll);
  }
  out.recon = samples == 1 ? recon : scale(recon, 1.0 / static_cast<double>(samples));
  out.kl_g = scale(kl_bernoulli(graph), kl_g_weight);
  out.elbo = sub(sub(out.recon, out.kl_z), out.kl_g);
  return out;
}

LossTerms training_loss(const Batch& x, const MaskPair& masks, const GroupSpec& spec,
                        const ModelParams& model, const GraphPosterior& graph, const TrainConfig& config,
                        double lambda, double kl_g_weight, Rng& rng) {
  LossTerms out;
  out.elbo = elbo(x, masks, spec, model, graph, config, kl_g_weight, rng);
  out.penalty = dag_penalty(out.elbo.graph_sample);
  out.loss = neg(out.elbo.elbo);
  if (lambda != 0.0) out.loss = add(out.loss, scale(out.penalty, lambda));
  return out;
}

double lambda_schedule(std::size_t epoch, const TrainConfig& config) {
  const auto warm = static_cast<std::size_t>(
      std::floor(config.lambda_warmup * static_cast<double>(config.stage_one_epochs())));
  return epoch < warm ? 0.0 : config.lambda_dag;
}

void Adam::step(const std::vector<Tensor>& params, double lr) {
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    auto& node = p.node();
    auto& st = state_[&node];
    if (st.m.empty()) {
      st.owner = p.node_ptr();
      st.m.assign(node.data.size(), 0.0);
      st.v.assign(node.data.size(), 0.0);
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < node.data.size(); ++i) {
      const double g = node.grad[i];
      st.m[i] = opts_.beta1 * st.m[i] + (1.0 - opts_.beta1) * g;
      st.v[i] = opts_.beta2 * st.v[i] + (1.0 - opts_.beta2) * g * g;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      node.data[i] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

std::size_t Adam::steps_taken(const Tensor& t) const {
  auto it = state_.find(&t.node());
  return it == state_.end() ? 0 : it->second.t;
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

TrainTrace fit(const Dataset& data, const GroupSpec& spec, ModelParams& model, GraphPosterior& graph,
               const TrainConfig& config, const FitCallbacks& callbacks) {
  config.validate();
  data.validate();
  model.check_compatible(spec);
  if (data.cols() != spec.num_vars()) throw ValidationError("fit: dataset width differs from group spec");
  if (graph.num_nodes != spec.num_groups()) throw ValidationError("fit: graph size differs from group count");

  const Rng root(config.seed, 0);
  Rng order_rng = root.fork(1);
  Rng mask_rng = root.fork(2);
  Rng sample_rng = root.fork(3);
  Rng init_rng = root.fork(4);

  const std::size_t n = data.rows();
  const std::size_t num_batches = (n + config.batch_size - 1) / config.batch_size;
  const double kl_g_weight = 1.0 / static_cast<double>(num_batches);
  const std::size_t stage_one = config.stage_one_epochs();

  model.backward_enabled = false;
  graph.logits.set_requires_grad(true);
  Adam optimizer;
  TrainTrace trace;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool stage_two = epoch >= stage_one;
    if (stage_two && !model.backward_enabled) {
      graph.logits.set_requires_grad(false);
      model.reset_backward(init_rng);
      model.backward_enabled = true;
    }
    std::vector<Tensor> params = model.trainable();
    if (!stage_two) params.push_back(graph.logits);
    const double lambda = lambda_schedule(epoch, config);

    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = stage_two ? 2 : 1;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      const Batch batch = data.batch(std::span<const std::size_t>(order).subspan(lo, hi - lo));
      const MaskPair masks = apply_mask(batch, mask_rng, config.masking);
      for (auto& p : params) p.zero_grad();
      const LossTerms terms =
          training_loss(batch, masks, spec, model, graph, config, lambda, kl_g_weight, sample_rng);
      const double loss = terms.loss.item();
      if (!std::isfinite(loss)) {
        trace.aborted = true;
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << b << ": recon=" << terms.elbo.recon.item()
           << " kl_z=" << terms.elbo.kl_z.item() << " kl_g=" << terms.elbo.kl_g.item()
           << " dag_penalty=" << terms.penalty.item();
        trace.diagnostic = os.str();
        return trace;
      }
      terms.loss.backward();
      if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
      optimizer.step(params, config.learning_rate);

      rec.neg_elbo -= terms.elbo.elbo.item();
      rec.recon += terms.elbo.recon.item();
      rec.kl_z += terms.elbo.kl_z.item();
      rec.kl_g += terms.elbo.kl_g.item();
      rec.dag_penalty += terms.penalty.item() / static_cast<double>(num_batches);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.records.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }
  return trace;
}

}  // namespace grimp
