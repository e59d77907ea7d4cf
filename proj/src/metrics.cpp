#include "grimp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "grimp/csv.hpp"
#include "grimp/error.hpp"

namespace grimp {

namespace {

void check_same_nodes(const HardGraph& pred, const HardGraph& truth) {
  if (pred.num_nodes != truth.num_nodes) {
    throw ContractError("metrics: predicted graph has " + std::to_string(pred.num_nodes) +
                        " nodes, truth has " + std::to_string(truth.num_nodes));
  }
}

bool adjacent(const HardGraph& g, std::size_t i, std::size_t j) { return g.has_edge(i, j) || g.has_edge(j, i); }

// Indices sorted by descending score.
std::vector<std::size_t> descending(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

PrecisionRecall precision_recall(std::size_t matches, std::size_t predicted, std::size_t actual) {
  PrecisionRecall pr;
  pr.recall = actual == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(actual);
  pr.precision = predicted == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(predicted);
  const double s = pr.recall + pr.precision;
  pr.f1 = s == 0.0 ? 0.0 : 2.0 * pr.recall * pr.precision / s;
  return pr;
}

StructureReport structure_metrics(const HardGraph& pred, const HardGraph& truth) {
  check_same_nodes(pred, truth);
  const std::size_t m = truth.num_nodes;
  StructureReport r;
  std::size_t skel_pred = 0, skel_true = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      r.true_edges += truth.has_edge(i, j);
      r.predicted_edges += pred.has_edge(i, j);
      r.orientation_matches += truth.has_edge(i, j) && pred.has_edge(i, j);
      if (i < j) {
        const bool t = adjacent(truth, i, j), p = adjacent(pred, i, j);
        skel_true += t;
        skel_pred += p;
        r.adjacency_matches += t && p;
      }
    }
  }
  r.adjacency = precision_recall(r.adjacency_matches, skel_pred, skel_true);
  r.orientation = precision_recall(r.orientation_matches, r.predicted_edges, r.true_edges);
  r.causal_accuracy = causal_accuracy(pred, truth);
  return r;
}

std::vector<unsigned char> transitive_closure(const HardGraph& g) {
  const std::size_t m = g.num_nodes;
  std::vector<unsigned char> reach(g.adjacency);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      if (!reach[i * m + k]) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (reach[k * m + j]) reach[i * m + j] = 1;
      }
    }
  }
  return reach;
}

double causal_accuracy(const HardGraph& pred, const HardGraph& truth) {
  check_same_nodes(pred, truth);
  const auto rt = transitive_closure(truth);
  const auto rp = transitive_closure(pred);
  const std::size_t m = truth.num_nodes;
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j || !rt[i * m + j]) continue;
      ++total;
      hit += rp[i * m + j];
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

double auroc(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: score/label count mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] > 0.5) pos_rank_sum += avg_rank, ++pos;
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw ContractError("auroc: needs both classes");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double aupr(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("aupr: score/label count mismatch");
  const std::size_t positives = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](double l) { return l > 0.5; }));
  if (positives == 0) throw ContractError("aupr: needs at least one positive");
  const auto idx = descending(scores);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += labels[idx[j]] > 0.5;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ImputationReport imputation_metrics(const std::vector<VariableScores>& pairs,
                                    const std::vector<VariableKind>& kinds) {
  if (pairs.size() != kinds.size()) throw DimensionError("imputation_metrics: one kind per variable expected");
  ImputationReport r;
  double sq = 0.0;
  std::size_t correct = 0;
  std::vector<double> scores, labels;
  for (std::size_t v = 0; v < pairs.size(); ++v) {
    const auto& p = pairs[v];
    if (p.predicted.size() != p.actual.size()) throw DimensionError("imputation_metrics: ragged pairs");
    for (std::size_t i = 0; i < p.predicted.size(); ++i) {
      if (kinds[v] == VariableKind::continuous) {
        const double e = p.predicted[i] - p.actual[i];
        sq += e * e;
        ++r.n_continuous;
      } else {
        const double label = p.actual[i];
        if (label != 0.0 && label != 1.0) throw DataError("imputation_metrics: binary truth outside {0, 1}");
        correct += (p.predicted[i] >= 0.5) == (label == 1.0);
        scores.push_back(p.predicted[i]);
        labels.push_back(label);
        ++r.n_binary;
      }
    }
  }
  r.n_evaluated = r.n_continuous + r.n_binary;
  if (r.n_continuous > 0) r.rmse = std::sqrt(sq / static_cast<double>(r.n_continuous));
  if (r.n_binary > 0) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_binary);
    const auto ones = std::count(labels.begin(), labels.end(), 1.0);
    if (ones > 0 && static_cast<std::size_t>(ones) < labels.size()) {
      r.auroc = auroc(scores, labels);
      r.aupr = aupr(scores, labels);
    }
  }
  return r;
}

BaselineMethod parse_baseline_method(const std::string& s) {
  if (s == "mean") return BaselineMethod::mean;
  if (s == "majority") return BaselineMethod::majority;
  throw ValidationError("unknown baseline '" + s + "' (expected mean or majority)");
}

const char* to_string(BaselineMethod m) { return m == BaselineMethod::majority ? "majority" : "mean"; }

Imputation baseline_impute(const Dataset& train, const Batch& x, BaselineMethod method,
                           std::vector<std::string>* warnings) {
  const std::size_t d = train.cols();
  if (x.cols != d) throw DimensionError("baseline_impute: batch width differs from training data");
  std::vector<double> fill(d);
  for (std::size_t c = 0; c < d; ++c) {
    const VariableKind kind = train.spec.kinds[c];
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      if (train.is_observed(r, c)) total += train.value(r, c), ++count;
    }
    if (count == 0) {
      fill[c] = kind == VariableKind::binary ? 0.5 : 0.0;
      if (warnings) {
        const std::string name = c < train.variable_names.size() ? train.variable_names[c] : std::to_string(c);
        warnings->push_back("baseline: variable '" + name + "' has no observed training values");
      }
      continue;
    }
    const double mean = total / static_cast<double>(count);
    fill[c] = (method == BaselineMethod::majority && kind == VariableKind::binary) ? (mean >= 0.5 ? 1.0 : 0.0)
                                                                                    : mean;
  }
  Imputation out;
  out.rows = x.rows;
  out.cols = x.cols;
  out.values = x.values;
  out.filled_mask.assign(x.rows * x.cols, 0);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!x.observed[i]) {
      out.values[i] = fill[i % d];
      out.filled_mask[i] = 1;
    }
  }
  return out;
}

RollupReport group_rollup(const HardGraph& pred, const std::map<std::string, std::string>& hierarchy) {
  std::vector<std::string> parent_of(pred.num_nodes);
  std::set<std::string> parents;
  for (std::size_t i = 0; i < pred.num_nodes; ++i) {
    auto it = hierarchy.find(pred.label(i));
    if (it == hierarchy.end()) throw DataError("group_rollup: node '" + pred.label(i) + "' has no parent");
    parent_of[i] = it->second;
    parents.insert(it->second);
  }
  RollupReport r;
  r.parents.assign(parents.begin(), parents.end());
  const std::size_t p = r.parents.size();
  r.counts.assign(p * p, 0);
  auto pos = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(r.parents.begin(), r.parents.end(), s) - r.parents.begin());
  };
  std::size_t inside = 0;
  for (std::size_t i = 0; i < pred.num_nodes; ++i) {
    for (std::size_t j = 0; j < pred.num_nodes; ++j) {
      if (i == j || !pred.has_edge(i, j)) continue;
      ++r.counts[pos(parent_of[i]) * p + pos(parent_of[j])];
      ++r.total_edges;
      inside += parent_of[i] == parent_of[j];
    }
  }
  r.inside_fraction = r.total_edges == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(r.total_edges);
  return r;
}

KeyValues to_key_values(const StructureReport& r) {
  return {{"adjacency_recall", fmt(r.adjacency.recall)},
          {"adjacency_precision", fmt(r.adjacency.precision)},
          {"adjacency_f1", fmt(r.adjacency.f1)},
          {"orientation_recall", fmt(r.orientation.recall)},
          {"orientation_precision", fmt(r.orientation.precision)},
          {"orientation_f1", fmt(r.orientation.f1)},
          {"causal_accuracy", fmt(r.causal_accuracy)},
          {"true_edges", std::to_string(r.true_edges)},
          {"predicted_edges", std::to_string(r.predicted_edges)},
          {"adjacency_matches", std::to_string(r.adjacency_matches)},
          {"orientation_matches", std::to_string(r.orientation_matches)}};
}

KeyValues to_key_values(const ImputationReport& r, const std::string& prefix) {
  KeyValues kv;
  if (r.rmse) kv.emplace_back(prefix + "rmse", fmt(*r.rmse));
  if (r.accuracy) kv.emplace_back(prefix + "accuracy", fmt(*r.accuracy));
  if (r.auroc) kv.emplace_back(prefix + "auroc", fmt(*r.auroc));
  if (r.aupr) kv.emplace_back(prefix + "aupr", fmt(*r.aupr));
  kv.emplace_back(prefix + "n_evaluated", std::to_string(r.n_evaluated));
  return kv;
}

std::string key_value_csv(const KeyValues& kv) {
  std::string out = "key,value\n";
  for (const auto& [k, v] : kv) out += csv_line({k, v});
  return out;
}

std::string text_table(const KeyValues& kv) {
  std::size_t width = 0;
  for (const auto& e : kv) width = std::max(width, e.first.size());
  std::string out;
  for (const auto& [k, v] : kv) out += k + std::string(width - k.size() + 2, ' ') + v + "\n";
  return out;
}

std::string rollup_csv(const RollupReport& r) {
  std::vector<std::string> head{"source"};
  head.insert(head.end(), r.parents.begin(), r.parents.end());
  std::string out = csv_line(head);
  for (std::size_t a = 0; a < r.parents.size(); ++a) {
    std::vector<std::string> row{r.parents[a]};
    for (std::size_t b = 0; b < r.parents.size(); ++b) row.push_back(std::to_string(r.count(a, b)));
    out += csv_line(row);
  }
  return out;
}

}  // namespace grimp
