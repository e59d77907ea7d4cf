#include "grimp/archive.hpp"

#include <bit>
#include <cstring>

#include "grimp/csv.hpp"
#include "grimp/error.hpp"
#include "json.hpp"

namespace grimp {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'V', 'I', 'S', 'L'};
constexpr std::size_t kPreamble = 16;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view s, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(std::size_t offset, const std::string& what) {
  throw FormatError("model archive: " + what + " at byte offset " + std::to_string(offset));
}

std::vector<NamedTensor> archive_tensors(const ModelArchive& a) {
  std::vector<NamedTensor> out = a.params.named_parameters();
  out.push_back({"graph.logits", a.graph.logits});
  out.push_back({"graph.prior", a.graph.prior});
  return out;
}

json manifest(const ModelArchive& a) {
  const ModelConfig& c = a.params.config;
  json m;
  m["model"] = {{"latent_dim", c.latent_dim},
                {"hidden_dim", c.hidden_dim},
                {"iterations", c.iterations},
                {"sigma_z", c.sigma_z},
                {"sigma_x", c.sigma_x},
                {"log_std_min", c.log_std_min},
                {"log_std_max", c.log_std_max},
                {"share_singleton_nets", c.share_singleton_nets},
                {"backward_enabled", a.params.backward_enabled}};
  json kinds = json::array();
  for (auto k : a.spec.kinds) kinds.push_back(to_string(k));
  m["groups"] = {{"members", a.spec.groups}, {"names", a.spec.group_names}, {"kinds", kinds}};
  m["variable_names"] = a.variable_names;
  m["normalizer"] = {{"offset", a.normalizer.offset}, {"scale", a.normalizer.scale}};
  m["range"] = {{"offset", a.range.offset}, {"scale", a.range.scale}};
  m["graph"] = {{"num_nodes", a.graph.num_nodes}};
  json tensors = json::array();
  for (const auto& nt : archive_tensors(a)) tensors.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
  m["tensors"] = tensors;
  m["provenance"] = a.provenance;
  return m;
}

}  // namespace

std::string archive_bytes(const ModelArchive& a) {
  const std::string header = manifest(a).dump(1);
  std::string out(kMagic, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((kArchiveVersion >> (8 * i)) & 0xff));
  put_u64(out, header.size());
  out += header;
  for (const auto& nt : archive_tensors(a)) {
    for (double v : nt.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ModelArchive parse_archive(std::string_view bytes) {
  if (bytes.size() < kPreamble) corrupt(bytes.size(), "truncated preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt(0, "bad magic (expected VISL)");
  const auto version = static_cast<std::uint32_t>(get_u64(bytes, 4, 4));
  if (version != kArchiveVersion) {
    corrupt(4, "unsupported format version " + std::to_string(version) + " (expected " +
                   std::to_string(kArchiveVersion) + ")");
  }
  const std::uint64_t header_len = get_u64(bytes, 8, 8);
  if (header_len > bytes.size() - kPreamble) corrupt(8, "manifest length exceeds file size");
  const std::size_t payload_at = kPreamble + header_len;

  json m;
  try {
    m = json::parse(bytes.substr(kPreamble, header_len));
  } catch (const json::parse_error& e) {
    corrupt(kPreamble + (e.byte > 0 ? e.byte - 1 : 0), std::string("invalid manifest: ") + e.what());
  }

  ModelArchive a;
  std::vector<std::pair<std::string, Shape>> entries;
  try {
    const json& mc = m.at("model");
    ModelConfig c;
    c.latent_dim = mc.at("latent_dim").get<std::size_t>();
    c.hidden_dim = mc.at("hidden_dim").get<std::size_t>();
    c.iterations = mc.at("iterations").get<std::size_t>();
    c.sigma_z = mc.at("sigma_z").get<double>();
    c.sigma_x = mc.at("sigma_x").get<double>();
    c.log_std_min = mc.at("log_std_min").get<double>();
    c.log_std_max = mc.at("log_std_max").get<double>();
    c.share_singleton_nets = mc.at("share_singleton_nets").get<bool>();
    const json& g = m.at("groups");
    a.spec.groups = g.at("members").get<std::vector<std::vector<std::size_t>>>();
    a.spec.group_names = g.at("names").get<std::vector<std::string>>();
    for (const auto& k : g.at("kinds")) a.spec.kinds.push_back(parse_variable_kind(k.get<std::string>()));
    a.variable_names = m.at("variable_names").get<std::vector<std::string>>();
    a.normalizer.offset = m.at("normalizer").at("offset").get<std::vector<double>>();
    a.normalizer.scale = m.at("normalizer").at("scale").get<std::vector<double>>();
    a.range.offset = m.at("range").at("offset").get<std::vector<double>>();
    a.range.scale = m.at("range").at("scale").get<std::vector<double>>();
    a.provenance = m.at("provenance").get<std::map<std::string, std::string>>();
    const auto num_nodes = m.at("graph").at("num_nodes").get<std::size_t>();
    for (const auto& t : m.at("tensors")) {
      entries.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
    }

    Rng scratch(0);
    a.params = ModelParams::create(a.spec, c, scratch);
    a.params.backward_enabled = mc.at("backward_enabled").get<bool>();
    a.graph = GraphPosterior::create(num_nodes, 0.5, 0.5);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    corrupt(kPreamble, std::string("inconsistent manifest: ") + e.what());
  }
  if (a.variable_names.size() != a.spec.num_vars() || a.normalizer.offset.size() != a.spec.num_vars() ||
      a.normalizer.scale.size() != a.spec.num_vars() || a.range.offset.size() != a.spec.num_vars() ||
      a.range.scale.size() != a.spec.num_vars()) {
    corrupt(kPreamble, "manifest variable metadata does not match the group spec");
  }

  std::uint64_t expected = 0;
  for (const auto& [name, shape] : entries) expected += 8 * shape_numel(shape);
  if (bytes.size() - payload_at != expected) {
    corrupt(payload_at, "payload holds " + std::to_string(bytes.size() - payload_at) + " bytes, manifest needs " +
                            std::to_string(expected));
  }

  std::map<std::string, Tensor> slots;
  for (const auto& nt : archive_tensors(a)) slots.emplace(nt.name, nt.tensor);
  if (slots.size() != entries.size()) corrupt(kPreamble, "manifest tensor count does not match the model");
  std::size_t at = payload_at;
  for (const auto& [name, shape] : entries) {
    auto it = slots.find(name);
    if (it == slots.end()) corrupt(at, "unknown tensor '" + name + "'");
    Tensor t = it->second;
    if (t.shape() != shape) {
      corrupt(at, "tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " + shape_str(t.shape()));
    }
    for (double& v : t.mutable_data()) {
      v = std::bit_cast<double>(get_u64(bytes, at, 8));
      at += 8;
    }
    slots.erase(it);
  }
  return a;
}

void save_archive(const ModelArchive& a, const std::filesystem::path& path) {
  write_text(path, archive_bytes(a));
}

ModelArchive load_archive(const std::filesystem::path& path) { return parse_archive(read_text(path)); }

}  // namespace grimp
