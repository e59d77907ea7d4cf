#include "grimp/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "grimp/archive.hpp"
#include "grimp/csv.hpp"
#include "grimp/data.hpp"
#include "grimp/error.hpp"
#include "grimp/graph.hpp"
#include "grimp/impute.hpp"
#include "grimp/metrics.hpp"
#include "grimp/train.hpp"

namespace grimp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Param {
  std::string key;
  json value;  // default; its JSON type fixes the parameter type
  std::string help;
};

std::vector<Param> simulate_params() {
  return {{"num_vars", 5u, "number of variables D"},
          {"edge_prob", 0.5, "probability of each forward edge"},
          {"n_train", 5000u, "training rows"},
          {"n_test", 1000u, "test rows"},
          {"noise_var", 0.01, "additive noise variance"},
          {"test_drop", 0.3, "share of test cells dropped"},
          {"binary", false, "threshold each column at its median"},
          {"graph", "", "edge-list CSV fixing the true graph (labels x0..)"}};
}

std::vector<Param> train_params() {
  return {{"data", "", "training data CSV"},
          {"groups", "", "groups CSV (variable,group)"},
          {"kinds", "", "kind overrides, e.g. a:binary,b:continuous"},
          {"latent_dim", 256u, "latent width per group"},
          {"hidden_dim", 0u, "hidden width of every MLP (0 = latent_dim)"},
          {"iterations", 3u, "message passing rounds T"},
          {"sigma_z", 1.0, "prior std of the latents"},
          {"sigma_x2", 0.02, "output noise variance"},
          {"prior_prob", 0.05, "prior edge probability"},
          {"init_prob", 0.0, "initial edge probability (0 = 0.5, or 0.2 above 64 groups)"},
          {"share_singleton_nets", true, "share encoder/read-out when every group is one variable"},
          {"normalize", "standard", "input scaling of continuous columns: standard, min_max or none"},
          {"epochs", 300u, "training epochs"},
          {"batch_size", 100u, "mini-batch size"},
          {"learning_rate", 1e-3, "Adam step size"},
          {"lambda_dag", 100.0, "DAG penalty weight"},
          {"lambda_warmup", 0.1, "share of stage one without the DAG penalty"},
          {"tau", 0.5, "relaxation temperature"},
          {"stage_split", 0.5, "share of epochs in stage one"},
          {"masking", "uniform_fraction", "uniform_fraction or none"},
          {"mc_samples_train", 1u, "Monte-Carlo samples per ELBO evaluation"},
          {"clip_norm", 100.0, "global gradient norm clip (0 = off)"}};
}

std::vector<Param> discover_params() {
  return {{"archive", json::array(), "one or more model archives"},
          {"threshold", -1.0, "edge threshold (negative = 0.5, or 0.35 for several archives)"}};
}

std::vector<Param> impute_params() {
  return {{"archive", "", "model archive"},
          {"data", "", "CSV with missing cells"},
          {"mc_samples", 100u, "Monte-Carlo samples"},
          {"temperature", 0.5, "graph relaxation temperature"},
          {"hard_graph", false, "sample hard graphs instead of relaxed ones"},
          {"output", "imputed.csv", "output file name inside out-dir"}};
}

std::vector<Param> evaluate_params() {
  return {{"metrics", "auto", "auto, structure, imputation or all"},
          {"pred_graph", "", "predicted edge-list CSV"},
          {"archive", "", "model archive (graph and/or imputer)"},
          {"threshold", 0.5, "edge threshold for an archive's posterior"},
          {"truth_graph", "", "true edge-list CSV"},
          {"truth_data", "", "complete test CSV"},
          {"data", "", "test CSV with held-out cells missing (default: drop from truth_data)"},
          {"imputed", "", "imputed CSV to score"},
          {"train", "", "training CSV for baselines and scaling"},
          {"baseline", "none", "none, mean, majority or both"},
          {"drop_fraction", 0.3, "held-out share when data is not given"},
          {"mc_samples", 100u, "Monte-Carlo samples when imputing with the archive"},
          {"temperature", 0.5, "graph relaxation temperature"},
          {"hierarchy", "", "CSV node,parent for group roll-up"}};
}

std::vector<Param> with_common(std::vector<Param> p) {
  p.push_back({"seed", 0u, "random seed"});
  p.push_back({"out_dir", ".", "output directory"});
  return p;
}

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s.empty() || s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ValidationError(flag_name(key) + ": expected true or false, got '" + s + "'");
}

// Converts a flag string to the JSON type of the default.
json convert_flag(const Param& p, const std::vector<std::string>& raw) {
  const std::string s = raw.empty() ? std::string() : raw.back();
  if (p.value.is_array()) return raw;
  if (p.value.is_boolean()) return parse_bool(p.key, s);
  if (p.value.is_string()) return s;
  const std::optional<double> parsed = parse_double(s);
  if (!parsed) throw ValidationError(flag_name(p.key) + ": expected a number, got '" + s + "'");
  const double v = *parsed;
  if (p.value.is_number_unsigned()) {
    if (!(v >= 0.0) || v != std::floor(v)) {
      throw ValidationError(flag_name(p.key) + ": expected a non-negative integer, got '" + s + "'");
    }
    return static_cast<std::uint64_t>(v);
  }
  return v;
}

// Checks a config-file value against the default's type.
json convert_file(const Param& p, const json& v) {
  const auto bad = [&] { throw ValidationError("config: '" + p.key + "' has the wrong type"); };
  if (p.value.is_array()) {
    if (v.is_string()) return json::array({v});
    if (!v.is_array()) bad();
    for (const auto& e : v) {
      if (!e.is_string()) bad();
    }
    return v;
  }
  if (p.value.is_boolean()) {
    if (!v.is_boolean()) bad();
    return v;
  }
  if (p.value.is_string()) {
    if (!v.is_string()) bad();
    return v;
  }
  if (!v.is_number()) bad();
  if (p.value.is_number_unsigned()) {
    const double d = v.get<double>();
    if (!(d >= 0.0) || d != std::floor(d)) bad();
    return static_cast<std::uint64_t>(d);
  }
  return v.get<double>();
}

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help, std::vector<Param> params)
      : params_(with_common(std::move(params))) {
    sub_ = app.add_subcommand(name, help);
    sub_->add_option("--config", config_path_, "JSON file with parameter values");
    for (const auto& p : params_) {
      const bool blank = p.value.is_array() || (p.value.is_string() && p.value.get<std::string>().empty());
      const std::string help = blank ? p.help : p.help + " (default " + p.value.dump() + ")";
      auto* opt = sub_->add_option(flag_name(p.key), raw_[p.key], help);
      if (p.value.is_boolean()) opt->expected(0, 1);
      if (!p.value.is_array()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      opts_[p.key] = opt;
    }
  }

  CLI::App* app() const { return sub_; }

  json resolve() const {
    json cfg = json::object();
    for (const auto& p : params_) cfg[p.key] = p.value;
    if (!config_path_.empty()) {
      json file;
      try {
        file = json::parse(read_text(config_path_));
      } catch (const json::parse_error& e) {
        throw ValidationError("config " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw ValidationError("config " + config_path_ + ": expected a JSON object");
      for (const auto& [key, value] : file.items()) {
        const Param* p = find(key);
        if (p == nullptr) throw ValidationError("config " + config_path_ + ": unknown key '" + key + "'");
        cfg[key] = convert_file(*p, value);
      }
    }
    for (const auto& p : params_) {
      if (opts_.at(p.key)->count() > 0) cfg[p.key] = convert_flag(p, raw_.at(p.key));
    }
    return cfg;
  }

 private:
  const Param* find(const std::string& key) const {
    for (const auto& p : params_) {
      if (p.key == key) return &p;
    }
    return nullptr;
  }

  std::vector<Param> params_;
  CLI::App* sub_ = nullptr;
  std::string config_path_;
  std::map<std::string, std::vector<std::string>> raw_;
  std::map<std::string, CLI::Option*> opts_;
};

fs::path prepare_out_dir(const json& cfg) {
  const fs::path dir = cfg.at("out_dir").get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_config(const fs::path& dir, const json& cfg) { write_text(dir / "config.json", cfg.dump(2) + "\n"); }

std::string str(const json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }
std::size_t count(const json& cfg, const char* key) { return cfg.at(key).get<std::size_t>(); }
double real(const json& cfg, const char* key) { return cfg.at(key).get<double>(); }

std::string require_path(const json& cfg, const char* key) {
  std::string p = str(cfg, key);
  if (p.empty()) throw ValidationError(flag_name(key) + " is required");
  return p;
}

std::map<std::string, VariableKind> parse_kind_overrides(const std::string& s) {
  std::map<std::string, VariableKind> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw ValidationError("--kinds: expected name:kind, got '" + item + "'");
    try {
      out[item.substr(0, colon)] = parse_variable_kind(item.substr(colon + 1));
    } catch (const DataError& e) {
      throw ValidationError(std::string("--kinds: ") + e.what());
    }
  }
  return out;
}

std::map<std::string, VariableKind> archive_kinds(const ModelArchive& a) {
  std::map<std::string, VariableKind> out;
  for (std::size_t v = 0; v < a.variable_names.size(); ++v) out[a.variable_names[v]] = a.spec.kinds[v];
  return out;
}

// Column of each archive variable in `names`; ValidationError when the sets differ.
std::vector<std::size_t> align_columns(const std::vector<std::string>& names, const ModelArchive& a) {
  if (names.size() != a.variable_names.size()) {
    throw ValidationError("data has " + std::to_string(names.size()) + " variables, model expects " +
                          std::to_string(a.variable_names.size()));
  }
  std::vector<std::size_t> col(a.variable_names.size());
  for (std::size_t v = 0; v < a.variable_names.size(); ++v) {
    auto it = std::find(names.begin(), names.end(), a.variable_names[v]);
    if (it == names.end()) throw ValidationError("data lacks model variable '" + a.variable_names[v] + "'");
    col[v] = static_cast<std::size_t>(it - names.begin());
  }
  return col;
}

// Batch in archive variable order, scaled by the archive normalizer.
Batch archive_batch(const Dataset& ds, const ModelArchive& a, const std::vector<std::size_t>& col) {
  Batch b;
  b.rows = ds.rows();
  b.cols = a.spec.num_vars();
  b.values.resize(b.rows * b.cols);
  b.observed.resize(b.rows * b.cols);
  for (std::size_t r = 0; r < b.rows; ++r) {
    for (std::size_t v = 0; v < b.cols; ++v) {
      const std::size_t i = r * b.cols + v;
      b.observed[i] = ds.is_observed(r, col[v]);
      b.values[i] = b.observed[i] ? a.normalizer.forward(v, ds.value(r, col[v])) : ds.value(r, col[v]);
    }
  }
  return b;
}

// Imputes `ds` with the archive and returns raw-unit values in the dataset's
// own column order.
Imputation impute_dataset(const Dataset& ds, const ModelArchive& a, const ImputeOptions& opts, Rng& rng) {
  const auto col = align_columns(ds.variable_names, a);
  const Imputation imp = impute(archive_batch(ds, a, col), a.spec, a.params, a.graph, opts, rng);
  Imputation out;
  out.rows = ds.rows();
  out.cols = ds.cols();
  out.values = ds.values;
  out.filled_mask.assign(ds.values.size(), 0);
  for (std::size_t r = 0; r < imp.rows; ++r) {
    for (std::size_t v = 0; v < imp.cols; ++v) {
      if (!imp.filled_mask[r * imp.cols + v]) continue;
      const std::size_t i = r * out.cols + col[v];
      const double x = imp.value(r, v);
      out.values[i] = a.spec.kinds[v] == VariableKind::binary ? x : a.normalizer.inverse(v, x);
      out.filled_mask[i] = 1;
    }
  }
  return out;
}

int cmd_simulate(const json& cfg, std::ostream& out) {
  SyntheticConfig sc;
  sc.num_vars = count(cfg, "num_vars");
  sc.edge_prob = real(cfg, "edge_prob");
  sc.n_train = count(cfg, "n_train");
  sc.n_test = count(cfg, "n_test");
  sc.noise_var = real(cfg, "noise_var");
  sc.test_drop = real(cfg, "test_drop");
  sc.binary = cfg.at("binary").get<bool>();
  sc.seed = cfg.at("seed").get<std::uint64_t>();
  sc.validate();
  const fs::path dir = prepare_out_dir(cfg);

  const Rng root(sc.seed, 0);
  Rng graph_rng = root.fork(1), data_rng = root.fork(2), drop_rng = root.fork(3);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < sc.num_vars; ++i) labels.push_back("x" + std::to_string(i));
  const std::string graph_path = str(cfg, "graph");
  HardGraph truth = graph_path.empty() ? generate_dag(sc, graph_rng) : read_edge_list(graph_path, labels);
  if (!is_dag(truth)) throw ValidationError("simulate: the given graph has a cycle");

  const Dataset all = simulate_sem(truth, sc.n_train + sc.n_test, sc, data_rng);
  std::vector<std::size_t> train_rows(sc.n_train), test_rows(sc.n_test);
  std::iota(train_rows.begin(), train_rows.end(), 0);
  std::iota(test_rows.begin(), test_rows.end(), sc.n_train);
  const Dataset train = all.select_rows(train_rows);
  const Dataset test_full = all.select_rows(test_rows);
  const DropResult test = drop_mcar(test_full, sc.test_drop, drop_rng);

  save_csv(train, dir / "train.csv");
  save_csv(test_full, dir / "test_full.csv");
  save_csv(test.data, dir / "test.csv");
  write_edge_list(truth, dir / "truth_graph.csv");
  write_config(dir, cfg);
  out << "simulated " << sc.num_vars << " variables, " << truth.edge_count() << " true edges, " << sc.n_train
      << " train / " << sc.n_test << " test rows -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const json& cfg, std::ostream& out, std::ostream& err) {
  TrainConfig tc;
  tc.epochs = count(cfg, "epochs");
  tc.batch_size = count(cfg, "batch_size");
  tc.learning_rate = real(cfg, "learning_rate");
  tc.lambda_dag = real(cfg, "lambda_dag");
  tc.lambda_warmup = real(cfg, "lambda_warmup");
  tc.tau = real(cfg, "tau");
  tc.stage_split = real(cfg, "stage_split");
  tc.masking = parse_masking_policy(str(cfg, "masking"));
  tc.seed = cfg.at("seed").get<std::uint64_t>();
  tc.mc_samples_train = count(cfg, "mc_samples_train");
  tc.clip_norm = real(cfg, "clip_norm");
  tc.validate();

  ModelConfig mc;
  mc.latent_dim = count(cfg, "latent_dim");
  mc.hidden_dim = count(cfg, "hidden_dim");
  mc.iterations = count(cfg, "iterations");
  mc.sigma_z = real(cfg, "sigma_z");
  const double sigma_x2 = real(cfg, "sigma_x2");
  mc.share_singleton_nets = cfg.at("share_singleton_nets").get<bool>();
  if (mc.latent_dim == 0) throw ValidationError("--latent-dim must be positive");
  if (mc.iterations == 0) throw ValidationError("--iterations must be positive");
  if (!(mc.sigma_z > 0.0)) throw ValidationError("--sigma-z must be positive");
  if (!(sigma_x2 > 0.0)) throw ValidationError("--sigma-x2 must be positive");
  mc.sigma_x = std::sqrt(sigma_x2);
  const double prior = real(cfg, "prior_prob");
  double init = real(cfg, "init_prob");
  if (!(prior > 0.0 && prior < 1.0)) throw ValidationError("--prior-prob must lie in (0, 1)");
  if (init != 0.0 && !(init > 0.0 && init < 1.0)) throw ValidationError("--init-prob must lie in (0, 1)");

  const std::string groups = str(cfg, "groups");
  Dataset data = load_csv(require_path(cfg, "data"), groups.empty() ? fs::path() : fs::path(groups),
                          parse_kind_overrides(str(cfg, "kinds")));
  const fs::path dir = prepare_out_dir(cfg);

  ModelArchive a;
  a.normalizer = Normalizer::fit(data, parse_scaling(str(cfg, "normalize")));
  a.range = Normalizer::fit(data);
  data = a.normalizer.apply(data);
  a.spec = data.spec;
  a.variable_names = data.variable_names;
  Rng init_rng = Rng(tc.seed, 0).fork(100);
  a.params = ModelParams::create(a.spec, mc, init_rng);
  const std::size_t m = a.spec.num_groups();
  if (init == 0.0) init = GraphPosterior::default_init_prob(m);
  a.graph = GraphPosterior::create(m, init, prior);

  FitCallbacks cb;
  const std::size_t every = std::max<std::size_t>(1, tc.epochs / 10);
  cb.on_epoch = [&](const EpochRecord& r) {
    if ((r.epoch + 1) % every == 0 || r.epoch + 1 == tc.epochs) {
      err << "epoch " << r.epoch + 1 << "/" << tc.epochs << " stage " << r.stage << " -elbo "
          << format_double(r.neg_elbo) << " dag " << format_double(r.dag_penalty) << "\n";
    }
  };
  const TrainTrace trace = fit(data, a.spec, a.params, a.graph, tc, cb);
  write_text(dir / "trace.csv", trace.to_csv());
  write_config(dir, cfg);
  if (trace.aborted) throw NumericFailure("train: " + trace.diagnostic);

  a.provenance = {{"data", str(cfg, "data")},
                  {"seed", std::to_string(tc.seed)},
                  {"epochs", std::to_string(tc.epochs)},
                  {"final_neg_elbo", format_double(trace.records.back().neg_elbo)}};
  save_archive(a, dir / "model.visl");
  out << "trained on " << data.rows() << " rows, " << m << " groups -> " << (dir / "model.visl").string() << "\n";
  return kExitOk;
}

int cmd_discover(json& cfg, std::ostream& out) {
  const auto paths = cfg.at("archive").get<std::vector<std::string>>();
  if (paths.empty()) throw ValidationError("--archive is required");
  double threshold = real(cfg, "threshold");
  if (threshold < 0.0) threshold = paths.size() > 1 ? 0.35 : 0.5;
  if (threshold > 1.0) throw ValidationError("--threshold must not exceed 1");
  cfg["threshold"] = threshold;

  std::vector<double> probs;
  std::vector<std::string> labels;
  std::size_t m = 0;
  for (const auto& p : paths) {
    const ModelArchive a = load_archive(p);
    const auto q = a.graph.probabilities();
    if (probs.empty()) {
      m = a.graph.num_nodes;
      labels = a.spec.group_names;
      probs.assign(q.size(), 0.0);
    } else if (a.graph.num_nodes != m || a.spec.group_names != labels) {
      throw ValidationError("discover: archive " + p + " has a different node set");
    }
    for (std::size_t i = 0; i < q.size(); ++i) probs[i] += q[i] / static_cast<double>(paths.size());
  }
  const HardGraph g = harden_probabilities(probs, m, threshold, labels);
  const fs::path dir = prepare_out_dir(cfg);
  write_edge_list(g, dir / "edges.csv");
  write_config(dir, cfg);

  NoGradGuard no_grad;
  const double hard_penalty = dag_penalty(to_tensor(g)).item();
  const double soft_penalty = dag_penalty(Tensor::from({m, m}, probs)).item();
  out << "edges: " << g.edge_count() << " (threshold " << format_double(threshold) << ", " << paths.size()
      << " archive" << (paths.size() > 1 ? "s" : "") << ")\n";
  out << "is_dag: " << (is_dag(g) ? "true" : "false") << "\n";
  out << "dag_penalty_hard: " << format_double(hard_penalty) << "\n";
  out << "dag_penalty_posterior: " << format_double(soft_penalty) << "\n";
  return kExitOk;
}

int cmd_impute(const json& cfg, std::ostream& out) {
  const ModelArchive a = load_archive(require_path(cfg, "archive"));
  const CsvTable table = read_csv(require_path(cfg, "data"));
  ImputeOptions opts;
  opts.mc_samples = count(cfg, "mc_samples");
  opts.temperature = real(cfg, "temperature");
  opts.hard_graph = cfg.at("hard_graph").get<bool>();
  if (opts.mc_samples == 0) throw ValidationError("--mc-samples must be positive");
  if (!(opts.temperature > 0.0)) throw ValidationError("--temperature must be positive");
  align_columns(table.header, a);

  const Dataset ds = parse_dataset(table, nullptr, archive_kinds(a), str(cfg, "data"));
  Rng rng(cfg.at("seed").get<std::uint64_t>(), 7);
  const Imputation imp = impute_dataset(ds, a, opts, rng);

  // Observed cells keep their original text.
  std::string text = csv_line(table.header);
  std::size_t filled = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<std::string> row = table.rows[r];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (imp.filled_mask[r * imp.cols + c]) {
        row[c] = format_double(imp.values[r * imp.cols + c]);
        ++filled;
      }
    }
    text += csv_line(row);
  }
  const fs::path dir = prepare_out_dir(cfg);
  const fs::path target = dir / str(cfg, "output");
  write_text(target, text);
  write_config(dir, cfg);
  out << "imputed " << filled << " cells -> " << target.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const json& cfg, std::ostream& out, std::ostream& err) {
  const std::string family = str(cfg, "metrics");
  if (family != "auto" && family != "structure" && family != "imputation" && family != "all") {
    throw ValidationError("--metrics must be auto, structure, imputation or all");
  }
  const std::string archive_path = str(cfg, "archive");
  const std::string pred_path = str(cfg, "pred_graph");
  const std::string truth_graph = str(cfg, "truth_graph");
  const std::string truth_data = str(cfg, "truth_data");
  const std::string baseline = str(cfg, "baseline");
  if (baseline != "none" && baseline != "mean" && baseline != "majority" && baseline != "both") {
    throw ValidationError("--baseline must be none, mean, majority or both");
  }
  const bool want_structure = family == "structure" || family == "all" || (family == "auto" && !truth_graph.empty());
  const bool want_imputation =
      family == "imputation" || family == "all" || (family == "auto" && !truth_data.empty());
  if (want_structure && truth_graph.empty()) throw ValidationError("structure metrics need --truth-graph");
  if (want_structure && pred_path.empty() && archive_path.empty()) {
    throw ValidationError("structure metrics need --pred-graph or --archive");
  }
  if (want_imputation && truth_data.empty()) throw ValidationError("imputation metrics need --truth-data");
  if (want_imputation && archive_path.empty() && str(cfg, "imputed").empty() && baseline == "none") {
    throw ValidationError("imputation metrics need --archive, --imputed or --baseline");
  }
  if (!want_structure && !want_imputation) throw ValidationError("evaluate: nothing to evaluate");

  std::optional<ModelArchive> archive;
  if (!archive_path.empty()) archive = load_archive(archive_path);
  const fs::path dir = prepare_out_dir(cfg);
  KeyValues report;
  std::string rollup;

  if (want_structure) {
    HardGraph pred;
    std::vector<std::string> labels;
    if (!pred_path.empty()) {
      if (archive) {
        labels = archive->spec.group_names;
      } else {
        // Node set: every label mentioned in either edge list.
        std::set<std::string> seen;
        for (const auto& p : {pred_path, truth_graph}) {
          const CsvTable t = read_csv(p);
          const auto cf = t.column("from");
          const auto ct = t.column("to");
          if (!cf || !ct) throw DataError(p + ": edge list needs 'from' and 'to' columns");
          for (const auto& row : t.rows) seen.insert(row.at(*cf)), seen.insert(row.at(*ct));
        }
        labels.assign(seen.begin(), seen.end());
      }
      pred = read_edge_list(pred_path, labels);
    } else {
      labels = archive->spec.group_names;
      pred = harden(archive->graph, real(cfg, "threshold"), labels);
    }
    const HardGraph truth = read_edge_list(truth_graph, labels);
    for (auto& kv : to_key_values(structure_metrics(pred, truth))) report.push_back(kv);
    report.emplace_back("predicted_is_dag", is_dag(pred) ? "true" : "false");
    const std::string hierarchy = str(cfg, "hierarchy");
    if (!hierarchy.empty()) {
      const CsvTable h = read_csv(hierarchy);
      std::map<std::string, std::string> parent;
      for (const auto& row : h.rows) parent[row.at(0)] = row.at(1);
      const RollupReport rr = group_rollup(pred, parent);
      report.emplace_back("rollup_inside_fraction", format_double(rr.inside_fraction));
      rollup = rollup_csv(rr);
    }
  }

  if (want_imputation) {
    const auto overrides = archive ? archive_kinds(*archive) : std::map<std::string, VariableKind>{};
    const Dataset truth = load_csv(truth_data, {}, overrides);
    Dataset masked;
    if (!str(cfg, "data").empty()) {
      masked = load_csv(str(cfg, "data"), {}, overrides);
      if (masked.variable_names != truth.variable_names || masked.rows() != truth.rows()) {
        throw ValidationError("--data and --truth-data differ in shape or columns");
      }
    } else {
      const double frac = real(cfg, "drop_fraction");
      if (!(frac >= 0.0 && frac < 1.0)) throw ValidationError("--drop-fraction must lie in [0, 1)");
      Rng drop_rng(cfg.at("seed").get<std::uint64_t>(), 3);
      masked = drop_mcar(truth, frac, drop_rng).data;
    }
    std::vector<unsigned char> eval_mask(truth.values.size(), 0);
    for (std::size_t i = 0; i < eval_mask.size(); ++i) eval_mask[i] = !masked.observed[i] && truth.observed[i];

    std::optional<Dataset> train;
    if (!str(cfg, "train").empty()) train = load_csv(str(cfg, "train"), {}, overrides);
    // Scores are computed on min-max scaled values when a scale is known.
    Normalizer scale = Normalizer::identity(truth.cols());
    std::string space = "raw";
    if (archive) {
      const auto col = align_columns(truth.variable_names, *archive);
      for (std::size_t v = 0; v < col.size(); ++v) {
        scale.offset[col[v]] = archive->range.offset[v];
        scale.scale[col[v]] = archive->range.scale[v];
      }
      space = "min_max";
    } else if (train) {
      if (train->variable_names != truth.variable_names) throw ValidationError("--train columns differ");
      scale = Normalizer::fit(*train);
      space = "min_max";
    }
    report.emplace_back("rmse_space", space);
    std::vector<double> truth_scaled(truth.values.size(), 0.0);
    for (std::size_t i = 0; i < truth_scaled.size(); ++i) {
      const std::size_t c = i % truth.cols();
      if (truth.observed[i]) {
        truth_scaled[i] = truth.spec.kinds[c] == VariableKind::binary ? truth.values[i]
                                                                      : scale.forward(c, truth.values[i]);
      }
    }
    const Batch masked_batch = masked.all();
    auto score = [&](Imputation imp, const std::string& prefix) {
      for (std::size_t i = 0; i < imp.values.size(); ++i) {
        const std::size_t c = i % imp.cols;
        if (imp.filled_mask[i] && truth.spec.kinds[c] == VariableKind::continuous) {
          imp.values[i] = scale.forward(c, imp.values[i]);
        }
      }
      const auto pairs = predictive_scores(imp, truth_scaled, eval_mask);
      for (auto& kv : to_key_values(imputation_metrics(pairs, truth.spec.kinds), prefix)) report.push_back(kv);
    };

    if (archive) {
      ImputeOptions opts;
      opts.mc_samples = count(cfg, "mc_samples");
      opts.temperature = real(cfg, "temperature");
      Rng rng(cfg.at("seed").get<std::uint64_t>(), 7);
      score(impute_dataset(masked, *archive, opts, rng), "model_");
    }
    if (!str(cfg, "imputed").empty()) {
      const Dataset given = load_csv(str(cfg, "imputed"), {}, overrides);
      if (given.variable_names != truth.variable_names || given.rows() != truth.rows()) {
        throw ValidationError("--imputed differs from --truth-data in shape or columns");
      }
      Imputation imp{given.rows(), given.cols(), given.values, std::vector<unsigned char>(given.values.size(), 0)};
      for (std::size_t i = 0; i < eval_mask.size(); ++i) {
        if (!masked.observed[i]) {
          if (!given.observed[i]) throw ValidationError("--imputed leaves held-out cells missing");
          imp.filled_mask[i] = 1;
        }
      }
      score(imp, "imputed_");
    }
    if (baseline != "none") {
      if (!train) throw ValidationError("--baseline needs --train");
      std::vector<std::string> warnings;
      for (const char* method : {"mean", "majority"}) {
        if (baseline != "both" && baseline != method) continue;
        score(baseline_impute(*train, masked_batch, parse_baseline_method(method), &warnings),
              std::string(method) + "_");
      }
      for (const auto& w : warnings) err << "warning: " << w << "\n";
    }
  }

  write_text(dir / "metrics.csv", key_value_csv(report));
  write_text(dir / "metrics.txt", text_table(report));
  if (!rollup.empty()) write_text(dir / "rollup.csv", rollup);
  write_config(dir, cfg);
  out << text_table(report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint structure discovery and missing-value imputation"};
  app.name(args.empty() ? "grimp" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  Command simulate(app, "simulate", "generate a synthetic SEM dataset", simulate_params());
  Command train(app, "train", "train a model on a data CSV", train_params());
  Command discover(app, "discover", "extract the learned graph from archives", discover_params());
  Command imputer(app, "impute", "fill missing cells of a data CSV", impute_params());
  Command evaluate(app, "evaluate", "score graphs and imputations", evaluate_params());

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty()) rest.pop_back();
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (simulate.app()->parsed()) return cmd_simulate(simulate.resolve(), out);
    if (train.app()->parsed()) return cmd_train(train.resolve(), out, err);
    if (discover.app()->parsed()) {
      json cfg = discover.resolve();
      return cmd_discover(cfg, out);
    }
    if (imputer.app()->parsed()) return cmd_impute(imputer.resolve(), out);
    if (evaluate.app()->parsed()) return cmd_evaluate(evaluate.resolve(), out, err);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericFailure& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericDomainError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace grimp
