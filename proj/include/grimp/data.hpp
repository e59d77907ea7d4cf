#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "grimp/csv.hpp"
#include "grimp/graph.hpp"
#include "grimp/model.hpp"
#include "grimp/rng.hpp"

namespace grimp {

// N x D observations with an observedness mask. Unobserved cells hold a quiet
// NaN and must never be read as values.
struct Dataset {
  std::size_t num_rows = 0;
  std::vector<double> values;
  std::vector<unsigned char> observed;
  GroupSpec spec;
  std::vector<std::string> variable_names;
  std::string provenance;

  std::size_t rows() const { return num_rows; }
  std::size_t cols() const { return spec.num_vars(); }
  double value(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  bool is_observed(std::size_t r, std::size_t c) const { return observed[r * cols() + c] != 0; }
  double missing_rate() const;

  Batch batch(std::span<const std::size_t> row_index) const;
  Batch all() const;
  Dataset select_rows(std::span<const std::size_t> row_index) const;
  // Checks shapes, N >= 1, D >= 2, NaN exactly on missing cells, binary
  // values in {0, 1}, and a valid group partition.
  void validate() const;

  // Fully observed dataset from a row-major value block.
  static Dataset from_values(std::size_t rows, std::vector<double> values, GroupSpec spec,
                             std::vector<std::string> names = {});
};

struct SyntheticConfig {
  std::size_t num_vars = 5;
  double edge_prob = 0.5;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  double noise_var = 0.01;
  double test_drop = 0.3;
  bool binary = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Random ordering, then each forward pair (in that order) gets an edge with
// probability edge_prob. Always a DAG.
HardGraph generate_dag(const SyntheticConfig& cfg, Rng& rng);

// Ancestral sampling: roots ~ N(0, 1), other nodes
// v_i = sum_{j in Pa(i)} sin(3 v_j) + N(0, noise_var). With cfg.binary each
// column is thresholded at its median. Fully observed.
Dataset simulate_sem(const HardGraph& graph, std::size_t rows, const SyntheticConfig& cfg, Rng& rng);

// Topological order of a DAG; ContractError on a cycle.
std::vector<std::size_t> topological_order(const HardGraph& graph);

struct DropResult {
  Dataset data;                        // with the dropped cells unobserved
  std::vector<unsigned char> dropped;  // cells removed by this call
};

// Each observed cell independently goes missing with probability `fraction`.
DropResult drop_mcar(const Dataset& ds, double fraction, Rng& rng);

// Data CSV: header of variable names, empty cell or NaN = missing. Groups CSV
// (optional, header "variable,group"): variables not listed become singleton
// groups. Column kinds are binary when every observed value is 0 or 1, unless
// overridden in `kind_overrides` (variable name -> kind).
Dataset load_csv(const std::filesystem::path& data_path, const std::filesystem::path& groups_path = {},
                 const std::map<std::string, VariableKind>& kind_overrides = {});
Dataset parse_dataset(const CsvTable& data, const CsvTable* groups,
                      const std::map<std::string, VariableKind>& kind_overrides, const std::string& source);
std::string dataset_csv(const Dataset& ds);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
std::string groups_csv(const Dataset& ds);

// Disjoint shuffled row partition into train / validation / test.
std::tuple<Dataset, Dataset, Dataset> split(const Dataset& ds, double train_frac, double val_frac, Rng& rng);

enum class Scaling { standard, min_max, none };

const char* to_string(Scaling s);
Scaling parse_scaling(const std::string& s);

// Per-variable affine map of continuous columns; binary columns pass through.
struct Normalizer {
  std::vector<double> offset;
  std::vector<double> scale;

  // Min-max to [0, 1] over the observed cells.
  static Normalizer fit(const Dataset& ds);
  // Zero mean, unit variance over the observed cells.
  static Normalizer fit_standard(const Dataset& ds);
  static Normalizer fit(const Dataset& ds, Scaling how);
  static Normalizer identity(std::size_t num_vars);
  Dataset apply(const Dataset& ds) const;
  double forward(std::size_t var, double v) const { return (v - offset[var]) / scale[var]; }
  double inverse(std::size_t var, double v) const { return v * scale[var] + offset[var]; }
};

}  // namespace grimp
