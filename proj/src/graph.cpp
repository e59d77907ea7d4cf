#include "grimp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <unordered_map>

#include "grimp/csv.hpp"
#include "grimp/error.hpp"

namespace grimp {
namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

GraphPosterior GraphPosterior::create(std::size_t num_nodes, double init_prob, double prior_prob) {
  if (num_nodes == 0) throw ContractError("graph posterior needs at least one node");
  if (!(init_prob > 0.0 && init_prob < 1.0)) {
    throw NumericDomainError("initial edge probability must lie in (0, 1)");
  }
  if (!(prior_prob > 0.0 && prior_prob < 1.0)) {
    throw NumericDomainError("prior edge probability must lie in (0, 1)");
  }
  GraphPosterior q;
  q.num_nodes = num_nodes;
  q.logits = Tensor::full({num_nodes, num_nodes}, logit(init_prob), true);
  q.prior = Tensor::full({num_nodes, num_nodes}, prior_prob);
  return q;
}

double GraphPosterior::default_init_prob(std::size_t num_nodes) {
  return num_nodes <= 64 ? 0.5 : 0.2;
}

std::vector<double> GraphPosterior::probabilities() const {
  const auto l = logits.data();
  std::vector<double> p(l.size());
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = 0; j < num_nodes; ++j) {
      p[i * num_nodes + j] = i == j ? 0.0 : sigmoid_scalar(l[i * num_nodes + j]);
    }
  }
  return p;
}

double GraphPosterior::probability(std::size_t from, std::size_t to) const {
  if (from == to) return 0.0;
  return sigmoid_scalar(logits.data()[from * num_nodes + to]);
}

Tensor off_diagonal_mask(std::size_t num_nodes) {
  std::vector<double> m(num_nodes * num_nodes, 1.0);
  for (std::size_t i = 0; i < num_nodes; ++i) m[i * num_nodes + i] = 0.0;
  return Tensor::from({num_nodes, num_nodes}, std::move(m));
}

HardGraph::HardGraph(std::size_t m)
    : num_nodes(m), adjacency(m * m, 0), weight(m * m, 0.0) {}

HardGraph::HardGraph(std::size_t m, std::vector<std::string> labels) : HardGraph(m) {
  if (!labels.empty() && labels.size() != m) {
    throw ContractError("graph: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(m) + " nodes");
  }
  node_labels = std::move(labels);
}

void HardGraph::set_edge(std::size_t from, std::size_t to, bool present, double w) {
  if (from >= num_nodes || to >= num_nodes) throw ContractError("graph: node index out of range");
  if (from == to) throw ContractError("graph: self-loops are not allowed");
  adjacency[from * num_nodes + to] = present ? 1 : 0;
  weight[from * num_nodes + to] = present ? w : 0.0;
}

std::size_t HardGraph::edge_count() const {
  return static_cast<std::size_t>(std::count(adjacency.begin(), adjacency.end(), 1));
}

std::string HardGraph::label(std::size_t i) const {
  return node_labels.empty() ? std::to_string(i) : node_labels[i];
}

Tensor sample_soft_with_noise(const GraphPosterior& q, double temperature,
                              std::span<const double> noise) {
  if (!(temperature > 0.0)) throw ContractError("sample_soft: temperature must be positive");
  const std::size_t m = q.num_nodes;
  if (noise.size() != m * m) throw DimensionError("sample_soft: noise must be M x M");
  const Tensor eps = Tensor::from({m, m}, std::vector<double>(noise.begin(), noise.end()));
  return mul(sigmoid(scale(add(q.logits, eps), 1.0 / temperature)), off_diagonal_mask(m));
}

Tensor sample_soft(const GraphPosterior& q, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ContractError("sample_soft: temperature must be positive");
  const std::size_t m = q.num_nodes;
  std::vector<double> noise(m * m);
  for (auto& v : noise) v = rng.logistic();
  return sample_soft_with_noise(q, temperature, noise);
}

Tensor sample_hard(const GraphPosterior& q, Rng& rng) {
  const std::size_t m = q.num_nodes;
  const auto p = q.probabilities();
  std::vector<double> g(m * m, 0.0);
  for (std::size_t i = 0; i < m * m; ++i) {
    const double u = rng.uniform();
    g[i] = u < p[i] ? 1.0 : 0.0;
  }
  return Tensor::from({m, m}, std::move(g));
}

Tensor dag_penalty(const Tensor& g) {
  if (g.dim() != 2 || g.rows() != g.cols()) {
    throw DimensionError("dag_penalty: expected square matrix, got " + shape_str(g.shape()));
  }
  const auto m = static_cast<double>(g.rows());
  return add_scalar(trace(matrix_exp(square(g))), -m);
}

Tensor kl_bernoulli(const GraphPosterior& q) {
  const std::size_t m = q.num_nodes;
  const auto prior = q.prior.data();
  std::vector<double> log_p(m * m, 0.0), log_not_p(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const double p = prior[i * m + j];
      if (!(p > 0.0 && p < 1.0)) {
        throw NumericDomainError("kl_bernoulli: prior probability of edge " + std::to_string(i) +
                                 "->" + std::to_string(j) + " must lie strictly inside (0, 1)");
      }
      log_p[i * m + j] = std::log(p);
      log_not_p[i * m + j] = std::log1p(-p);
    }
  }
  const Tensor& l = q.logits;
  const Tensor prob = sigmoid(l);
  // log q = -softplus(-l), log(1 - q) = -softplus(l)
  const Tensor on = sub(neg(softplus(neg(l))), Tensor::from({m, m}, std::move(log_p)));
  const Tensor off = sub(neg(softplus(l)), Tensor::from({m, m}, std::move(log_not_p)));
  const Tensor kl = add(mul(prob, on), mul(add_scalar(neg(prob), 1.0), off));
  return sum(mul(kl, off_diagonal_mask(m)));
}

HardGraph harden_probabilities(std::span<const double> probs, std::size_t num_nodes,
                               double threshold, const std::vector<std::string>& labels) {
  if (probs.size() != num_nodes * num_nodes) throw DimensionError("harden: probability matrix size");
  HardGraph g(num_nodes, labels);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = 0; j < num_nodes; ++j) {
      const double p = probs[i * num_nodes + j];
      if (i != j && p > threshold) g.set_edge(i, j, true, p);
    }
  }
  return g;
}

HardGraph harden(const GraphPosterior& q, double threshold, const std::vector<std::string>& labels) {
  const auto p = q.probabilities();
  return harden_probabilities(p, q.num_nodes, threshold, labels);
}

bool is_dag(const HardGraph& g) {
  const std::size_t m = g.num_nodes;
  std::vector<std::size_t> indeg(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (g.has_edge(i, j)) ++indeg[j];
    }
  }
  std::deque<std::size_t> ready;
  for (std::size_t i = 0; i < m; ++i) {
    if (indeg[i] == 0) ready.push_back(i);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const auto i = ready.front();
    ready.pop_front();
    ++visited;
    for (std::size_t j = 0; j < m; ++j) {
      if (g.has_edge(i, j) && --indeg[j] == 0) ready.push_back(j);
    }
  }
  return visited == m;
}

Tensor to_tensor(const HardGraph& g) {
  std::vector<double> v(g.adjacency.begin(), g.adjacency.end());
  return Tensor::from({g.num_nodes, g.num_nodes}, std::move(v));
}

std::string edge_list_csv(const HardGraph& g) {
  struct Row {
    std::size_t from, to;
    double w;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t j = 0; j < g.num_nodes; ++j) {
      if (g.has_edge(i, j)) rows.push_back({i, j, g.weight[i * g.num_nodes + j]});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.w > b.w; });
  std::string out = "from,to,probability\n";
  for (const auto& r : rows) out += csv_line({g.label(r.from), g.label(r.to), format_double(r.w)});
  return out;
}

void write_edge_list(const HardGraph& g, const std::filesystem::path& path) {
  write_text(path, edge_list_csv(g));
}

HardGraph read_edge_list(const std::filesystem::path& path, const std::vector<std::string>& labels) {
  const CsvTable t = read_csv(path);
  const auto cf = t.column("from");
  const auto ct = t.column("to");
  const auto cp = t.column("probability");
  if (!cf || !ct) throw DataError(path.string() + ": edge list needs 'from' and 'to' columns");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);
  HardGraph g(labels.size(), labels);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto a = index.find(row[*cf]);
    const auto b = index.find(row[*ct]);
    if (a == index.end() || b == index.end()) {
      throw DataError(path.string() + ": row " + std::to_string(r + 2) + " names unknown node");
    }
    double w = 1.0;
    if (cp) {
      const auto v = parse_double(row[*cp]);
      if (!v) throw DataError(path.string() + ": row " + std::to_string(r + 2) + " bad probability");
      w = *v;
    }
    if (a->second == b->second) {
      throw DataError(path.string() + ": row " + std::to_string(r + 2) + " is a self-loop");
    }
    g.set_edge(a->second, b->second, true, w);
  }
  return g;
}

}  // namespace grimp
