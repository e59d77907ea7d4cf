#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "grimp/rng.hpp"
#include "grimp/tensor.hpp"

namespace grimp {

// Variational posterior over directed graphs on M nodes: independent
// Bernoulli edges parameterised by logits. The diagonal of `logits` is
// stored but never read; self-loops have probability exactly zero.
struct GraphPosterior {
  std::size_t num_nodes = 0;
  Tensor logits;  // M x M, trainable
  Tensor prior;   // M x M prior edge probabilities, constant

  // All off-diagonal edges start at `init_prob`; prior probability `prior_prob`.
  static GraphPosterior create(std::size_t num_nodes, double init_prob, double prior_prob);
  // 0.5 for M <= 64, 0.2 above.
  static double default_init_prob(std::size_t num_nodes);

  // Posterior edge probabilities, diagonal zero.
  std::vector<double> probabilities() const;
  double probability(std::size_t from, std::size_t to) const;
};

// Binary off-diagonal mask (1 everywhere except the diagonal).
Tensor off_diagonal_mask(std::size_t num_nodes);

struct HardGraph {
  std::size_t num_nodes = 0;
  std::vector<unsigned char> adjacency;  // row-major, [from * M + to]
  // Edge weight reported alongside the edge (posterior probability, or 1 for
  // ground truth). Same layout as `adjacency`.
  std::vector<double> weight;
  std::vector<std::string> node_labels;

  explicit HardGraph(std::size_t m = 0);
  HardGraph(std::size_t m, std::vector<std::string> labels);

  bool has_edge(std::size_t from, std::size_t to) const { return adjacency[from * num_nodes + to] != 0; }
  // Self-loops are rejected with ContractError.
  void set_edge(std::size_t from, std::size_t to, bool present = true, double w = 1.0);
  std::size_t edge_count() const;
  // Node labels, defaulting to "0".."M-1" when none were given.
  std::string label(std::size_t i) const;
};

// Binary-concrete relaxation of one graph draw:
//   s_ij = sigmoid((logit_ij + L_ij) / temperature), L ~ Logistic(0, 1),
// diagonal forced to zero. Differentiable with respect to the logits.
Tensor sample_soft(const GraphPosterior& q, double temperature, Rng& rng);
// Same relaxation with caller-supplied logistic noise (M x M). Used when the
// noise must be held fixed, e.g. for finite-difference checks.
Tensor sample_soft_with_noise(const GraphPosterior& q, double temperature,
                              std::span<const double> noise);
// Bernoulli draw of a hard graph from q as a 0/1 matrix tensor.
Tensor sample_hard(const GraphPosterior& q, Rng& rng);

// Acyclicity penalty trace(exp(G o G)) - M; zero exactly when G is a DAG.
Tensor dag_penalty(const Tensor& g);

// Closed-form KL(q(G) || p(G)) over off-diagonal edges.
Tensor kl_bernoulli(const GraphPosterior& q);

// Edge (i, j) kept iff its posterior probability exceeds `threshold`.
HardGraph harden(const GraphPosterior& q, double threshold,
                 const std::vector<std::string>& labels = {});
HardGraph harden_probabilities(std::span<const double> probs, std::size_t num_nodes,
                               double threshold, const std::vector<std::string>& labels = {});

// Kahn's algorithm.
bool is_dag(const HardGraph& g);
// Adjacency as a 0/1 M x M tensor.
Tensor to_tensor(const HardGraph& g);

// Edge-list CSV: header "from,to,probability", one row per edge, rows sorted
// by descending probability (ties by (from, to) index).
void write_edge_list(const HardGraph& g, const std::filesystem::path& path);
std::string edge_list_csv(const HardGraph& g);
// Node set is given by `labels`; unknown labels are a DataError.
HardGraph read_edge_list(const std::filesystem::path& path, const std::vector<std::string>& labels);

}  // namespace grimp
