#include <gtest/gtest.h>

#include <filesystem>

#include "grimp/archive.hpp"
#include "grimp/error.hpp"
#include "gradcheck.hpp"

using namespace grimp;

namespace {

ModelArchive sample_archive(bool grouped) {
  ModelArchive a;
  if (grouped) {
    a.spec.kinds = {VariableKind::continuous, VariableKind::binary, VariableKind::continuous};
    a.spec.groups = {{0, 2}, {1}};
    a.spec.group_names = {"g0", "g1"};
  } else {
    a.spec = GroupSpec::singletons({VariableKind::continuous, VariableKind::binary, VariableKind::continuous},
                                   {"a", "b", "c"});
  }
  a.variable_names = {"a", "b", "c"};
  a.normalizer = {{0.5, -1.0, 3.25}, {2.0, 1.0, 0.1}};
  a.range = {{-1.0, 0.0, 1.0}, {4.0, 1.0, 0.7}};
  ModelConfig c;
  c.latent_dim = 4;
  c.hidden_dim = 5;
  c.iterations = 2;
  Rng rng(11);
  a.params = ModelParams::create(a.spec, c, rng);
  a.params.backward_enabled = true;
  a.graph = GraphPosterior::create(a.spec.num_groups(), 0.5, 0.3);
  auto logits = a.graph.logits.mutable_data();
  for (auto& v : logits) v = rng.normal();
  a.provenance = {{"seed", "11"}, {"note", "unicode \xc3\xa9"}};
  return a;
}

void expect_format_error_with_offset(std::string_view bytes) {
  try {
    parse_archive(bytes);
    ADD_FAILURE() << "parse accepted corrupt archive of " << bytes.size() << " bytes";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Archive, BitIdenticalRoundTrip) {
  for (bool grouped : {false, true}) {
    const ModelArchive a = sample_archive(grouped);
    const std::string bytes = archive_bytes(a);
    EXPECT_EQ(bytes.substr(0, 4), "VISL");
    const ModelArchive b = parse_archive(bytes);
    EXPECT_EQ(archive_bytes(b), bytes);

    const auto pa = a.params.named_parameters();
    const auto pb = b.params.named_parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      EXPECT_EQ(pa[i].name, pb[i].name);
      EXPECT_EQ(pa[i].tensor.to_vector(), pb[i].tensor.to_vector());
    }
    EXPECT_EQ(a.graph.logits.to_vector(), b.graph.logits.to_vector());
    EXPECT_EQ(a.graph.prior.to_vector(), b.graph.prior.to_vector());
    EXPECT_EQ(b.spec.groups, a.spec.groups);
    EXPECT_EQ(b.spec.kinds, a.spec.kinds);
    EXPECT_EQ(b.range.scale, a.range.scale);
    EXPECT_EQ(b.normalizer.offset, a.normalizer.offset);
    EXPECT_EQ(b.provenance, a.provenance);
    EXPECT_TRUE(b.params.backward_enabled);
  }
}

TEST(Archive, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "grimp_archive_test.visl";
  const ModelArchive a = sample_archive(true);
  save_archive(a, path);
  EXPECT_EQ(archive_bytes(load_archive(path)), archive_bytes(a));
  std::filesystem::remove(path);
  EXPECT_THROW(load_archive(path), IoError);
}

TEST(Archive, VersionMismatchNamesOffset) {
  std::string bytes = archive_bytes(sample_archive(false));
  bytes[4] = 2;
  try {
    parse_archive(bytes);
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("version 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte offset 4"), std::string::npos) << msg;
  }
}

TEST(Archive, BadMagic) {
  std::string bytes = archive_bytes(sample_archive(false));
  bytes[1] = 'X';
  expect_format_error_with_offset(bytes);
}

TEST(Archive, EveryTruncationIsRejected) {
  const std::string bytes = archive_bytes(sample_archive(true));
  for (std::size_t n = 0; n < bytes.size(); n += (n < 400 ? 1 : 97)) {
    expect_format_error_with_offset(std::string_view(bytes).substr(0, n));
  }
  expect_format_error_with_offset(bytes + std::string(8, '\0'));
}

TEST(Archive, HeaderByteFlipsNeverCrash) {
  // Flipping a manifest byte either fails cleanly or yields a parseable
  // archive (e.g. a digit changed inside a number).
  const std::string bytes = archive_bytes(sample_archive(true));
  Rng rng(5);
  std::size_t rejected = 0;
  for (int k = 0; k < 400; ++k) {
    std::string b = bytes;
    const std::size_t at = rng.below(std::min<std::size_t>(b.size(), 1200));
    b[at] = static_cast<char>(b[at] ^ (1u << rng.below(8)));
    try {
      parse_archive(b);
    } catch (const FormatError& e) {
      ++rejected;
      EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    }
  }
  EXPECT_GT(rejected, 100u);
}

TEST(Archive, ManifestShapeMismatch) {
  const ModelArchive a = sample_archive(false);
  std::string bytes = archive_bytes(a);
  const std::size_t pos = bytes.find("\"latent_dim\": 4");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + 14] = '3';
  expect_format_error_with_offset(bytes);
}
