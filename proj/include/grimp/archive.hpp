#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "grimp/data.hpp"
#include "grimp/graph.hpp"
#include "grimp/model.hpp"

namespace grimp {

inline constexpr std::uint32_t kArchiveVersion = 1;

// Everything needed to impute or discover without the training data.
//
// Binary layout: "VISL", u32 LE version, u64 LE manifest length, UTF-8 JSON
// manifest, then each manifest tensor as little-endian float64 in manifest
// order.
struct ModelArchive {
  GroupSpec spec;
  std::vector<std::string> variable_names;
  Normalizer normalizer;  // maps raw values to the model's input scale
  Normalizer range;       // min-max of the training data, used to score imputations
  ModelParams params;
  GraphPosterior graph;
  std::map<std::string, std::string> provenance;
};

std::string archive_bytes(const ModelArchive& a);
// FormatError naming the byte offset on any corruption or version mismatch.
ModelArchive parse_archive(std::string_view bytes);

void save_archive(const ModelArchive& a, const std::filesystem::path& path);
ModelArchive load_archive(const std::filesystem::path& path);

}  // namespace grimp
