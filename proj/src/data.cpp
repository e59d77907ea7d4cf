#include "grimp/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "grimp/error.hpp"

namespace grimp {
namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_missing_token(const std::string& s) {
  std::string_view v = s;
  while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
  return v.empty() || v == "NaN" || v == "nan" || v == "NAN";
}

}  // namespace

double Dataset::missing_rate() const {
  if (observed.empty()) return 0.0;
  const auto missing = std::count(observed.begin(), observed.end(), 0);
  return static_cast<double>(missing) / static_cast<double>(observed.size());
}

Batch Dataset::batch(std::span<const std::size_t> row_index) const {
  const std::size_t d = cols();
  Batch b;
  b.rows = row_index.size();
  b.cols = d;
  b.values.reserve(b.rows * d);
  b.observed.reserve(b.rows * d);
  for (auto r : row_index) {
    if (r >= num_rows) throw ContractError("dataset: row index out of range");
    b.values.insert(b.values.end(), values.begin() + static_cast<std::ptrdiff_t>(r * d),
                    values.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    b.observed.insert(b.observed.end(), observed.begin() + static_cast<std::ptrdiff_t>(r * d),
                      observed.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(num_rows);
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

Dataset Dataset::select_rows(std::span<const std::size_t> row_index) const {
  Batch b = batch(row_index);
  Dataset out;
  out.num_rows = b.rows;
  out.values = std::move(b.values);
  out.observed = std::move(b.observed);
  out.spec = spec;
  out.variable_names = variable_names;
  out.provenance = provenance;
  return out;
}

void Dataset::validate() const {
  const std::size_t d = cols();
  if (num_rows < 1) throw ContractError("dataset: needs at least one row");
  if (d < 2) throw ContractError("dataset: needs at least two variables");
  if (values.size() != num_rows * d || observed.size() != num_rows * d) {
    throw ContractError("dataset: value/mask size does not match N x D");
  }
  if (!variable_names.empty() && variable_names.size() != d) {
    throw ContractError("dataset: variable name count differs from D");
  }
  spec.validate();
  for (std::size_t r = 0; r < num_rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = values[r * d + c];
      if (observed[r * d + c]) {
        if (!std::isfinite(v)) {
          throw DataError("dataset: non-finite observed value at row " + std::to_string(r) +
                          ", column " + std::to_string(c));
        }
        if (spec.kinds[c] == VariableKind::binary && v != 0.0 && v != 1.0) {
          throw DataError("dataset: binary column " + std::to_string(c) + " holds " +
                          std::to_string(v) + " at row " + std::to_string(r));
        }
      } else if (!std::isnan(v)) {
        throw ContractError("dataset: unobserved cell without missing sentinel");
      }
    }
  }
}

Dataset Dataset::from_values(std::size_t rows, std::vector<double> vals, GroupSpec spec,
                             std::vector<std::string> names) {
  Dataset ds;
  ds.num_rows = rows;
  ds.values = std::move(vals);
  ds.observed.assign(ds.values.size(), 1);
  ds.spec = std::move(spec);
  if (names.empty()) {
    for (std::size_t c = 0; c < ds.spec.num_vars(); ++c) names.push_back("x" + std::to_string(c));
  }
  ds.variable_names = std::move(names);
  ds.validate();
  return ds;
}

void SyntheticConfig::validate() const {
  if (num_vars < 2) throw ValidationError("synthetic: num_vars must be at least 2");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw ValidationError("synthetic: edge_prob must lie in [0, 1]");
  if (!(noise_var > 0.0)) throw ValidationError("synthetic: noise_var must be positive");
  if (!(test_drop >= 0.0 && test_drop < 1.0)) throw ValidationError("synthetic: test_drop must lie in [0, 1)");
  if (n_train == 0) throw ValidationError("synthetic: n_train must be positive");
}

HardGraph generate_dag(const SyntheticConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.num_vars;
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = d; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < d; ++i) labels.push_back("x" + std::to_string(i));
  HardGraph g(d, labels);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      if (rng.uniform() < cfg.edge_prob) g.set_edge(order[a], order[b]);
    }
  }
  return g;
}

std::vector<std::size_t> topological_order(const HardGraph& graph) {
  const std::size_t m = graph.num_nodes;
  std::vector<std::size_t> indeg(m, 0), order;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) indeg[j] += graph.has_edge(i, j);
  }
  // Smallest ready index first keeps the order deterministic.
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < m; ++i) {
    if (indeg[i] == 0) ready.push_back(i);
  }
  while (!ready.empty()) {
    auto it = std::min_element(ready.begin(), ready.end());
    const auto i = *it;
    ready.erase(it);
    order.push_back(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (graph.has_edge(i, j) && --indeg[j] == 0) ready.push_back(j);
    }
  }
  if (order.size() != m) throw ContractError("graph has a directed cycle");
  return order;
}

Dataset simulate_sem(const HardGraph& graph, std::size_t rows, const SyntheticConfig& cfg, Rng& rng) {
  const auto order = topological_order(graph);
  const std::size_t d = graph.num_nodes;
  const double noise_sd = std::sqrt(cfg.noise_var);
  std::vector<double> v(rows * d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto i : order) {
      bool root = true;
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (graph.has_edge(j, i)) {
          root = false;
          acc += std::sin(3.0 * v[r * d + j]);
        }
      }
      v[r * d + i] = root ? rng.normal() : acc + noise_sd * rng.normal();
    }
  }
  std::vector<VariableKind> kinds(d, cfg.binary ? VariableKind::binary : VariableKind::continuous);
  if (cfg.binary) {
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> col(rows);
      for (std::size_t r = 0; r < rows; ++r) col[r] = v[r * d + c];
      auto mid = col.begin() + static_cast<std::ptrdiff_t>(rows / 2);
      std::nth_element(col.begin(), mid, col.end());
      const double median = *mid;
      for (std::size_t r = 0; r < rows; ++r) v[r * d + c] = v[r * d + c] > median ? 1.0 : 0.0;
    }
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back(graph.label(i));
  Dataset ds = Dataset::from_values(rows, std::move(v), GroupSpec::singletons(kinds, names), names);
  ds.provenance = "synthetic sin-SEM";
  return ds;
}

DropResult drop_mcar(const Dataset& ds, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ContractError("drop_mcar: fraction must lie in [0, 1)");
  DropResult out{ds, std::vector<unsigned char>(ds.observed.size(), 0)};
  for (std::size_t i = 0; i < ds.observed.size(); ++i) {
    if (!ds.observed[i]) continue;
    if (rng.uniform() < fraction) {
      out.data.observed[i] = 0;
      out.data.values[i] = kMissing;
      out.dropped[i] = 1;
    }
  }
  return out;
}

Dataset parse_dataset(const CsvTable& data, const CsvTable* groups,
                      const std::map<std::string, VariableKind>& kind_overrides,
                      const std::string& source) {
  const std::size_t d = data.header.size();
  std::unordered_map<std::string, std::size_t> var_index;
  for (std::size_t c = 0; c < d; ++c) {
    if (!var_index.emplace(data.header[c], c).second) {
      throw DataError(source + ": duplicate column name '" + data.header[c] + "'");
    }
  }
  Dataset ds;
  ds.num_rows = data.rows.size();
  ds.variable_names = data.header;
  ds.values.resize(ds.num_rows * d);
  ds.observed.resize(ds.num_rows * d);
  for (std::size_t r = 0; r < ds.num_rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const auto& cell = data.rows[r][c];
      const std::size_t i = r * d + c;
      if (is_missing_token(cell)) {
        ds.values[i] = kMissing;
        ds.observed[i] = 0;
        continue;
      }
      const auto v = parse_double(cell);
      if (!v || !std::isfinite(*v)) {
        throw DataError(source + ": non-numeric cell '" + cell + "' at row " + std::to_string(r + 2) +
                        ", column '" + data.header[c] + "'");
      }
      ds.values[i] = *v;
      ds.observed[i] = 1;
    }
  }

  ds.spec.kinds.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    bool binary = false;
    for (std::size_t r = 0; r < ds.num_rows; ++r) {
      if (!ds.observed[r * d + c]) continue;
      const double v = ds.values[r * d + c];
      if (v != 0.0 && v != 1.0) {
        binary = false;
        break;
      }
      binary = true;
    }
    ds.spec.kinds[c] = binary ? VariableKind::binary : VariableKind::continuous;
  }
  for (const auto& [name, kind] : kind_overrides) {
    auto it = var_index.find(name);
    if (it == var_index.end()) throw DataError(source + ": kind given for unknown variable '" + name + "'");
    ds.spec.kinds[it->second] = kind;
  }

  std::vector<int> assigned(d, 0);
  if (groups != nullptr) {
    const auto cv = groups->column("variable");
    const auto cg = groups->column("group");
    if (!cv || !cg) throw DataError(source + ": groups file needs 'variable' and 'group' columns");
    std::unordered_map<std::string, std::size_t> group_index;
    for (std::size_t r = 0; r < groups->rows.size(); ++r) {
      const auto& var = groups->rows[r][*cv];
      const auto& grp = groups->rows[r][*cg];
      auto it = var_index.find(var);
      if (it == var_index.end()) {
        throw DataError(source + ": groups file row " + std::to_string(r + 2) + " names unknown variable '" +
                        var + "'");
      }
      if (assigned[it->second]++) {
        throw DataError(source + ": variable '" + var + "' assigned to more than one group");
      }
      auto [g, inserted] = group_index.emplace(grp, ds.spec.groups.size());
      if (inserted) {
        ds.spec.groups.emplace_back();
        ds.spec.group_names.push_back(grp);
      }
      ds.spec.groups[g->second].push_back(it->second);
    }
    for (auto& g : ds.spec.groups) std::sort(g.begin(), g.end());
  }
  for (std::size_t c = 0; c < d; ++c) {
    if (!assigned[c]) {
      ds.spec.groups.push_back({c});
      ds.spec.group_names.push_back(data.header[c]);
    }
  }
  ds.provenance = source;
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw DataError(source + ": " + e.what());
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& data_path, const std::filesystem::path& groups_path,
                 const std::map<std::string, VariableKind>& kind_overrides) {
  const CsvTable data = read_csv(data_path);
  if (groups_path.empty()) return parse_dataset(data, nullptr, kind_overrides, data_path.string());
  const CsvTable groups = read_csv(groups_path);
  return parse_dataset(data, &groups, kind_overrides, data_path.string());
}

std::string dataset_csv(const Dataset& ds) {
  std::string out = csv_line(ds.variable_names);
  const std::size_t d = ds.cols();
  std::vector<std::string> fields(d);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      fields[c] = ds.is_observed(r, c) ? format_double(ds.value(r, c)) : std::string();
    }
    out += csv_line(fields);
  }
  return out;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) { write_text(path, dataset_csv(ds)); }

std::string groups_csv(const Dataset& ds) {
  std::string out = "variable,group\n";
  std::vector<std::string> owner(ds.cols());
  for (std::size_t m = 0; m < ds.spec.num_groups(); ++m) {
    for (auto v : ds.spec.groups[m]) owner[v] = ds.spec.group_names[m];
  }
  for (std::size_t v = 0; v < ds.cols(); ++v) out += csv_line({ds.variable_names[v], owner[v]});
  return out;
}

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& ds, double train_frac, double val_frac, Rng& rng) {
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || train_frac + val_frac > 1.0) {
    throw ContractError("split: fractions must be positive with sum at most 1");
  }
  const std::size_t n = ds.rows();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  if (n_train == 0 || n_train + n_val > n) throw ContractError("split: degenerate partition");
  const std::span<const std::size_t> all(idx);
  return {ds.select_rows(all.subspan(0, n_train)), ds.select_rows(all.subspan(n_train, n_val)),
          ds.select_rows(all.subspan(n_train + n_val))};
}

Normalizer Normalizer::identity(std::size_t num_vars) {
  return Normalizer{std::vector<double>(num_vars, 0.0), std::vector<double>(num_vars, 1.0)};
}

Normalizer Normalizer::fit(const Dataset& ds) {
  Normalizer n = identity(ds.cols());
  for (std::size_t c = 0; c < ds.cols(); ++c) {
    if (ds.spec.kinds[c] == VariableKind::binary) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      if (!ds.is_observed(r, c)) continue;
      lo = std::min(lo, ds.value(r, c));
      hi = std::max(hi, ds.value(r, c));
    }
    if (!std::isfinite(lo)) continue;
    n.offset[c] = lo;
    n.scale[c] = hi > lo ? hi - lo : 1.0;
  }
  return n;
}

Normalizer Normalizer::fit_standard(const Dataset& ds) {
  Normalizer n = identity(ds.cols());
  for (std::size_t c = 0; c < ds.cols(); ++c) {
    if (ds.spec.kinds[c] == VariableKind::binary) continue;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      if (ds.is_observed(r, c)) sum += ds.value(r, c), ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      if (ds.is_observed(r, c)) sq += (ds.value(r, c) - mean) * (ds.value(r, c) - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(count));
    n.offset[c] = mean;
    n.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return n;
}

Normalizer Normalizer::fit(const Dataset& ds, Scaling how) {
  switch (how) {
    case Scaling::standard:
      return fit_standard(ds);
    case Scaling::min_max:
      return fit(ds);
    case Scaling::none:
      break;
  }
  return identity(ds.cols());
}

const char* to_string(Scaling s) {
  switch (s) {
    case Scaling::standard:
      return "standard";
    case Scaling::min_max:
      return "min_max";
    case Scaling::none:
      break;
  }
  return "none";
}

Scaling parse_scaling(const std::string& s) {
  if (s == "standard") return Scaling::standard;
  if (s == "min_max") return Scaling::min_max;
  if (s == "none") return Scaling::none;
  throw ValidationError("unknown scaling '" + s + "' (expected standard, min_max or none)");
}

Dataset Normalizer::apply(const Dataset& ds) const {
  if (offset.size() != ds.cols()) throw ContractError("normalizer: variable count mismatch");
  Dataset out = ds;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.cols(); ++c) {
      if (ds.is_observed(r, c)) out.values[r * ds.cols() + c] = forward(c, ds.value(r, c));
    }
  }
  return out;
}

}  // namespace grimp
