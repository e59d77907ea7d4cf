#include "grimp/impute.hpp"

#include "grimp/error.hpp"

namespace grimp {

Imputation impute(const Batch& x, const GroupSpec& spec, const ModelParams& model,
                  const GraphPosterior& graph, const ImputeOptions& options, Rng& rng) {
  model.check_compatible(spec);
  if (graph.num_nodes != spec.num_groups()) {
    throw ContractError("impute: graph has " + std::to_string(graph.num_nodes) + " nodes, spec has " +
                        std::to_string(spec.num_groups()) + " groups");
  }
  if (options.mc_samples == 0) throw ContractError("impute: mc_samples must be positive");
  if (!(options.temperature > 0.0)) throw ContractError("impute: temperature must be positive");

  Imputation out;
  out.rows = x.rows;
  out.cols = x.cols;
  out.values = x.values;
  out.filled_mask.assign(x.rows * x.cols, 0);
  bool any_missing = false;
  for (std::size_t i = 0; i < out.filled_mask.size(); ++i) {
    if (!x.observed[i]) out.filled_mask[i] = 1, any_missing = true;
  }
  if (x.rows == 0 || !any_missing) return out;

  NoGradGuard no_grad;
  const Tensor filled = fill_missing(x, x.observed, spec);
  std::vector<double> acc(x.rows * x.cols, 0.0);
  for (std::size_t s = 0; s < options.mc_samples; ++s) {
    const LatentState st = encode_filled(filled, spec, model, &rng);
    const Tensor g = options.hard_graph ? sample_hard(graph, rng) : sample_soft(graph, options.temperature, rng);
    const std::vector<double> mean = predictive_mean(decode(st, g, spec, model), spec);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += mean[i];
  }
  const double inv = 1.0 / static_cast<double>(options.mc_samples);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (out.filled_mask[i]) out.values[i] = acc[i] * inv;
  }
  return out;
}

std::vector<VariableScores> predictive_scores(const Imputation& imp, std::span<const double> truth,
                                              std::span<const unsigned char> eval_mask) {
  const std::size_t n = imp.rows * imp.cols;
  if (truth.size() != n || eval_mask.size() != n) {
    throw DimensionError("predictive_scores: truth or mask size differs from the imputation");
  }
  std::vector<VariableScores> out(imp.cols);
  for (std::size_t i = 0; i < n; ++i) {
    if (!eval_mask[i]) continue;
    if (!imp.filled_mask[i]) {
      throw ContractError("predictive_scores: evaluation cell (row " + std::to_string(i / imp.cols) +
                          ", column " + std::to_string(i % imp.cols) + ") was observed");
    }
    out[i % imp.cols].predicted.push_back(imp.values[i]);
    out[i % imp.cols].actual.push_back(truth[i]);
  }
  return out;
}

}  // namespace grimp
