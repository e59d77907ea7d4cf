#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "grimp/graph.hpp"
#include "grimp/model.hpp"
#include "grimp/rng.hpp"

namespace grimp {

// Completed rows. Continuous cells hold predictive means, binary cells
// predictive probabilities; observed cells are copied through.
struct Imputation {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<unsigned char> filled_mask;  // 1 where the cell was imputed

  double value(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct ImputeOptions {
  std::size_t mc_samples = 100;
  double temperature = 0.5;
  // Decode with Bernoulli graph samples instead of the soft relaxation.
  bool hard_graph = false;
};

// Monte-Carlo posterior predictive: per draw, encode the filled rows, sample
// Z and G, decode, and average the likelihood means. Only missing cells are
// overwritten.
Imputation impute(const Batch& x, const GroupSpec& spec, const ModelParams& model,
                  const GraphPosterior& graph, const ImputeOptions& options, Rng& rng);

// Held-out (prediction, truth) pairs of one variable.
struct VariableScores {
  std::vector<double> predicted;
  std::vector<double> actual;
};

// Pairs for every cell flagged in `eval_mask`; `truth` is row-major like the
// imputation. Flagging a cell that was not imputed is a ContractError.
std::vector<VariableScores> predictive_scores(const Imputation& imp, std::span<const double> truth,
                                              std::span<const unsigned char> eval_mask);

}  // namespace grimp
