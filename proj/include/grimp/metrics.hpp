#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grimp/data.hpp"
#include "grimp/graph.hpp"
#include "grimp/impute.hpp"

namespace grimp {

struct PrecisionRecall {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

// From match counts. Precision is 0 with no predictions, recall 0 with no
// truth, f1 0 when both are 0.
PrecisionRecall precision_recall(std::size_t matches, std::size_t predicted, std::size_t actual);

struct StructureReport {
  PrecisionRecall adjacency;
  PrecisionRecall orientation;
  double causal_accuracy = 0.0;
  std::size_t true_edges = 0;
  std::size_t predicted_edges = 0;
  std::size_t adjacency_matches = 0;
  std::size_t orientation_matches = 0;
};

// Adjacency scores compare skeletons (unordered pairs), orientation scores
// compare directed edges.
StructureReport structure_metrics(const HardGraph& pred, const HardGraph& truth);

// Share of the truth's ancestral pairs (i, j), i.e. pairs joined by a directed
// path i ~> j, that are also ancestral in `pred`. 1 when truth has no edges.
double causal_accuracy(const HardGraph& pred, const HardGraph& truth);

// Transitive closure as a row-major reachability matrix (no reflexive pairs
// unless a cycle returns to the node).
std::vector<unsigned char> transitive_closure(const HardGraph& g);

struct ImputationReport {
  std::optional<double> rmse;
  std::optional<double> accuracy;
  std::optional<double> auroc;
  std::optional<double> aupr;
  std::size_t n_evaluated = 0;
  std::size_t n_continuous = 0;
  std::size_t n_binary = 0;
};

// RMSE over continuous variables; accuracy at 0.5, AUROC and AUPR over the
// pooled binary pairs. AUROC/AUPR stay empty when the binary truth holds a
// single class.
ImputationReport imputation_metrics(const std::vector<VariableScores>& pairs,
                                    const std::vector<VariableKind>& kinds);

// Mann-Whitney statistic; ties count half. Requires both classes.
double auroc(const std::vector<double>& scores, const std::vector<double>& labels);
// Step-wise average precision: sum over distinct thresholds of
// (R_k - R_{k-1}) * P_k. Requires at least one positive.
double aupr(const std::vector<double>& scores, const std::vector<double>& labels);

enum class BaselineMethod { mean, majority };
BaselineMethod parse_baseline_method(const std::string& s);
const char* to_string(BaselineMethod m);

// Column statistics from the observed training cells. `mean` fills every
// column with its training mean; `majority` fills binary columns with the more
// frequent class (ties -> 1) and continuous ones with the mean. An unobserved
// training column fills with 0 / 0.5 and appends a warning.
Imputation baseline_impute(const Dataset& train, const Batch& x, BaselineMethod method,
                           std::vector<std::string>* warnings = nullptr);

struct RollupReport {
  std::vector<std::string> parents;  // sorted
  std::vector<std::size_t> counts;   // [source_parent * P + target_parent]
  std::size_t total_edges = 0;
  // Edges whose endpoints share a parent over all edges; 0 for an empty graph.
  double inside_fraction = 0.0;

  std::size_t count(std::size_t a, std::size_t b) const { return counts[a * parents.size() + b]; }
};

// Rolls edges up to parent groups; `hierarchy` maps node label -> parent.
RollupReport group_rollup(const HardGraph& pred, const std::map<std::string, std::string>& hierarchy);

using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues to_key_values(const StructureReport& r);
// Absent fields are omitted.
KeyValues to_key_values(const ImputationReport& r, const std::string& prefix = "");
// "key,value" CSV.
std::string key_value_csv(const KeyValues& kv);
// Aligned two-column text table.
std::string text_table(const KeyValues& kv);
std::string rollup_csv(const RollupReport& r);

}  // namespace grimp
