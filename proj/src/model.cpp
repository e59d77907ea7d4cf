#include "grimp/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "grimp/error.hpp"

namespace grimp {

const char* to_string(VariableKind kind) {
  return kind == VariableKind::binary ? "binary" : "continuous";
}

VariableKind parse_variable_kind(const std::string& s) {
  if (s == "binary") return VariableKind::binary;
  if (s == "continuous") return VariableKind::continuous;
  throw DataError("unknown variable kind '" + s + "'");
}

bool GroupSpec::variable_wise() const {
  return std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() == 1; });
}

void GroupSpec::validate() const {
  const std::size_t d = num_vars();
  if (groups.size() < 2) throw ContractError("group spec: need at least two groups");
  if (!group_names.empty() && group_names.size() != groups.size()) {
    throw ContractError("group spec: group name count differs from group count");
  }
  std::vector<int> seen(d, 0);
  for (std::size_t m = 0; m < groups.size(); ++m) {
    if (groups[m].empty()) throw ContractError("group spec: group " + std::to_string(m) + " is empty");
    for (auto v : groups[m]) {
      if (v >= d) throw ContractError("group spec: variable index " + std::to_string(v) + " out of range");
      if (seen[v]++) throw ContractError("group spec: variable " + std::to_string(v) + " in two groups");
    }
  }
  for (std::size_t v = 0; v < d; ++v) {
    if (!seen[v]) throw ContractError("group spec: variable " + std::to_string(v) + " in no group");
  }
}

GroupSpec GroupSpec::singletons(std::vector<VariableKind> kinds, std::vector<std::string> names) {
  GroupSpec s;
  s.kinds = std::move(kinds);
  for (std::size_t v = 0; v < s.kinds.size(); ++v) {
    s.groups.push_back({v});
    s.group_names.push_back(names.empty() ? std::to_string(v) : names[v]);
  }
  return s;
}

ModelParams ModelParams::create(const GroupSpec& spec, const ModelConfig& config, Rng& rng) {
  spec.validate();
  if (config.latent_dim == 0) throw ContractError("model: latent_dim must be positive");
  if (config.iterations == 0) throw ContractError("model: need at least one message passing round");
  ModelParams p;
  p.config = config;
  const std::size_t l = config.latent_dim;
  const std::size_t h = config.hidden();
  const bool shared = config.share_singleton_nets && spec.variable_wise();
  if (shared) {
    p.encoders.push_back(GaussianHeadMlp::create(1, h, l, rng));
  } else {
    for (const auto& g : spec.groups) p.encoders.push_back(GaussianHeadMlp::create(g.size(), h, l, rng));
  }
  p.mlp_forward = PairMlp::create(l, h, l, rng);
  p.mlp_e2n = Mlp::create(l, h, l, rng);
  if (shared) {
    p.readouts.push_back(Mlp::create(l, h, 1, rng));
  } else {
    for (const auto& g : spec.groups) p.readouts.push_back(Mlp::create(l, h, g.size(), rng));
  }
  p.mlp_backward = PairMlp::create(l, h, l, rng);
  return p;
}

void ModelParams::reset_backward(Rng& rng) {
  mlp_backward = PairMlp::create(config.latent_dim, config.hidden(), config.latent_dim, rng);
}

std::vector<NamedTensor> ModelParams::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t m = 0; m < encoders.size(); ++m) {
    encoders[m].collect("encoder." + std::to_string(m), out);
  }
  mlp_forward.collect("mlp_forward", out);
  mlp_backward.collect("mlp_backward", out);
  mlp_e2n.collect("mlp_e2n", out);
  for (std::size_t m = 0; m < readouts.size(); ++m) {
    readouts[m].collect("readout." + std::to_string(m), out);
  }
  return out;
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& nt : named_parameters()) {
    if (!backward_enabled && nt.name.rfind("mlp_backward.", 0) == 0) continue;
    out.push_back(nt.tensor);
  }
  return out;
}

void ModelParams::check_compatible(const GroupSpec& spec) const {
  spec.validate();
  const bool shared = shared_nets() && spec.variable_wise() && spec.num_groups() > 1;
  if (shared) {
    if (encoders[0].w1.rows() != 1 || readouts[0].out_width() != 1) {
      throw ContractError("model: shared networks must have width 1");
    }
    return;
  }
  if (encoders.size() != spec.num_groups() || readouts.size() != spec.num_groups()) {
    throw ContractError("model: built for " + std::to_string(encoders.size()) + " groups, spec has " +
                        std::to_string(spec.num_groups()));
  }
  for (std::size_t m = 0; m < spec.num_groups(); ++m) {
    if (encoders[m].w1.rows() != spec.groups[m].size() ||
        readouts[m].out_width() != spec.groups[m].size()) {
      throw ContractError("model: group " + std::to_string(m) + " width differs from spec");
    }
  }
}

Tensor fill_missing(const Batch& x, std::span<const unsigned char> input_mask, const GroupSpec& spec) {
  if (x.cols != spec.num_vars()) {
    throw DimensionError("encode: batch has " + std::to_string(x.cols) + " columns, spec has " +
                         std::to_string(spec.num_vars()) + " variables");
  }
  if (input_mask.size() != x.rows * x.cols || x.values.size() != x.rows * x.cols ||
      x.observed.size() != x.rows * x.cols) {
    throw DimensionError("encode: mask size does not match batch");
  }
  std::vector<double> filled(x.rows * x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      const std::size_t i = r * x.cols + c;
      if (x.observed[i] && std::isnan(x.values[i])) {
        throw DataError("encode: NaN in observed cell (row " + std::to_string(r) + ", column " +
                        std::to_string(c) + ")");
      }
      filled[i] = input_mask[i] ? x.values[i] : fill_value(spec.kinds[c]);
    }
  }
  return Tensor::from({x.rows, x.cols}, std::move(filled));
}

Tensor reparametrize(const Tensor& mean, const Tensor& log_std, std::span<const double> eps) {
  if (eps.size() != mean.numel()) throw DimensionError("reparametrize: noise size mismatch");
  const Tensor noise = Tensor::from(mean.shape(), std::vector<double>(eps.begin(), eps.end()));
  return add(mean, mul(exp(log_std), noise));
}

LatentState encode_filled(const Tensor& filled, const GroupSpec& spec, const ModelParams& params,
                          Rng* rng) {
  const std::size_t b = filled.rows();
  const std::size_t m = spec.num_groups();
  LatentState st;
  st.batch = b;
  st.num_groups = m;
  if (params.shared_nets() && spec.variable_wise()) {
    std::vector<std::size_t> order;
    for (const auto& g : spec.groups) order.push_back(g[0]);
    const Tensor column = reshape(gather_cols(filled, order), {b * m, 1});
    auto [mean, ls] = params.encoders[0].forward(column);
    st.mean = mean;
    st.log_std = clamp(ls, params.config.log_std_min, params.config.log_std_max);
  } else {
    std::vector<Tensor> means, log_stds;
    for (std::size_t g = 0; g < m; ++g) {
      auto [mean, ls] = params.encoders[g].forward(gather_cols(filled, spec.groups[g]));
      means.push_back(mean);
      log_stds.push_back(ls);
    }
    st.mean = interleave_rows(means);
    st.log_std = clamp(interleave_rows(log_stds), params.config.log_std_min, params.config.log_std_max);
  }
  if (rng == nullptr) {
    st.z = st.mean;
  } else {
    std::vector<double> eps(st.mean.numel());
    for (auto& e : eps) e = rng->normal();
    st.z = reparametrize(st.mean, st.log_std, eps);
  }
  return st;
}

LatentState encode(const Batch& x, std::span<const unsigned char> input_mask, const GroupSpec& spec,
                   const ModelParams& params, Rng* rng) {
  return encode_filled(fill_missing(x, input_mask, spec), spec, params, rng);
}

LatentState encode(const Batch& x, const GroupSpec& spec, const ModelParams& params, Rng* rng) {
  return encode(x, x.observed, spec, params, rng);
}

Tensor message_pass_step(const Tensor& z, std::size_t batch, const Tensor& graph,
                         const ModelParams& params) {
  const auto& f = params.mlp_forward;
  // h^f_{k->i} = MLP^f([z_k, z_i]): sender k fills the first slot.
  Tensor hidden = edge_aggregate(matmul(z, f.w1_first), matmul(z, f.w1_second), f.b1, graph);
  Tensor message = add(matmul(hidden, f.w2), in_weight_bias(graph, f.b2, batch));
  if (params.backward_enabled) {
    // Backward messages run against each edge: over i->k the child k sends
    // MLP^b([z_k, z_i]) to the parent i, weighted by G_ik.
    const auto& bw = params.mlp_backward;
    const Tensor reversed = transpose(graph);
    Tensor back = edge_aggregate(matmul(z, bw.w1_first), matmul(z, bw.w1_second), bw.b1, reversed);
    message = add(message, add(matmul(back, bw.w2), in_weight_bias(reversed, bw.b2, batch)));
  }
  return params.mlp_e2n.forward(message);
}

Tensor message_pass(const Tensor& z, std::size_t batch, const Tensor& graph,
                    const ModelParams& params) {
  const std::size_t m = graph.rows();
  if (graph.dim() != 2 || graph.cols() != m || z.rows() != batch * m ||
      z.cols() != params.config.latent_dim) {
    throw ContractError("message_pass: latent " + shape_str(z.shape()) + " incompatible with graph " +
                        shape_str(graph.shape()) + " and batch " + std::to_string(batch));
  }
  Tensor state = z;
  for (std::size_t t = 0; t < params.config.iterations; ++t) {
    state = message_pass_step(state, batch, graph, params);
  }
  return state;
}

Tensor readout(const Tensor& z_final, std::size_t batch, const GroupSpec& spec,
               const ModelParams& params) {
  const std::size_t m = spec.num_groups();
  if (params.shared_nets() && spec.variable_wise()) {
    std::vector<std::size_t> order;
    for (const auto& g : spec.groups) order.push_back(g[0]);
    const Tensor out = reshape(params.readouts[0].forward(z_final), {batch, m});
    return scatter_cols({out}, {order}, spec.num_vars());
  }
  std::vector<Tensor> parts;
  for (std::size_t g = 0; g < m; ++g) {
    parts.push_back(params.readouts[g].forward(strided_rows(z_final, g, m)));
  }
  return scatter_cols(parts, spec.groups, spec.num_vars());
}

Tensor decode(const LatentState& state, const Tensor& graph, const GroupSpec& spec,
              const ModelParams& params) {
  return readout(message_pass(state.z, state.batch, graph, params), state.batch, spec, params);
}

std::vector<double> predictive_mean(const Tensor& decoded, const GroupSpec& spec) {
  std::vector<double> out = decoded.to_vector();
  const std::size_t d = spec.num_vars();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (spec.kinds[i % d] == VariableKind::binary) {
      const double x = out[i];
      out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
  }
  return out;
}

}  // namespace grimp
