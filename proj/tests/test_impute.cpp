#include <gtest/gtest.h>

#include <cmath>

#include "grimp/error.hpp"
#include "grimp/impute.hpp"

using namespace grimp;

namespace {

struct Fixture {
  GroupSpec spec;
  ModelParams model;
  GraphPosterior graph;
  Batch batch;
};

Fixture make(std::vector<VariableKind> kinds, std::uint64_t seed = 1) {
  Fixture f;
  Rng rng(seed);
  f.spec = GroupSpec::singletons(kinds);
  ModelConfig mc;
  mc.latent_dim = 6;
  mc.hidden_dim = 8;
  f.model = ModelParams::create(f.spec, mc, rng);
  f.graph = GraphPosterior::create(kinds.size(), 0.5, 0.05);
  const std::size_t d = kinds.size();
  f.batch.rows = 4;
  f.batch.cols = d;
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const bool miss = (r + c) % 3 == 0;
      const double v = kinds[c] == VariableKind::binary ? static_cast<double>((r + c) % 2) : rng.normal();
      f.batch.values.push_back(miss ? std::nan("") : v);
      f.batch.observed.push_back(miss ? 0 : 1);
    }
  }
  return f;
}

}  // namespace

TEST(Impute, ObservedCellsPassThrough) {
  const Fixture f = make(std::vector<VariableKind>(3, VariableKind::continuous));
  Rng rng(2);
  ImputeOptions opt;
  opt.mc_samples = 5;
  const Imputation imp = impute(f.batch, f.spec, f.model, f.graph, opt, rng);
  for (std::size_t i = 0; i < imp.values.size(); ++i) {
    if (f.batch.observed[i]) {
      EXPECT_EQ(imp.values[i], f.batch.values[i]);
      EXPECT_EQ(imp.filled_mask[i], 0);
    } else {
      EXPECT_TRUE(std::isfinite(imp.values[i]));
      EXPECT_EQ(imp.filled_mask[i], 1);
    }
  }
}

TEST(Impute, BinaryPredictionsAreProbabilities) {
  const Fixture f = make({VariableKind::binary, VariableKind::continuous, VariableKind::binary});
  Rng rng(3);
  ImputeOptions opt;
  opt.mc_samples = 7;
  for (bool hard : {false, true}) {
    opt.hard_graph = hard;
    const Imputation imp = impute(f.batch, f.spec, f.model, f.graph, opt, rng);
    for (std::size_t r = 0; r < imp.rows; ++r) {
      for (std::size_t c : {0u, 2u}) {
        EXPECT_GE(imp.value(r, c), 0.0);
        EXPECT_LE(imp.value(r, c), 1.0);
      }
    }
  }
}

TEST(Impute, MonteCarloAverageConverges) {
  const Fixture f = make(std::vector<VariableKind>(3, VariableKind::continuous), 4);
  ImputeOptions opt;
  opt.mc_samples = 4000;
  Rng r1(10), r2(20);
  const Imputation a = impute(f.batch, f.spec, f.model, f.graph, opt, r1);
  const Imputation b = impute(f.batch, f.spec, f.model, f.graph, opt, r2);
  opt.mc_samples = 1;
  Rng r3(30), r4(40);
  const Imputation c = impute(f.batch, f.spec, f.model, f.graph, opt, r3);
  const Imputation d = impute(f.batch, f.spec, f.model, f.graph, opt, r4);
  double big = 0.0, small = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    big = std::max(big, std::abs(a.values[i] - b.values[i]));
    small = std::max(small, std::abs(c.values[i] - d.values[i]));
  }
  EXPECT_LT(big, 0.1 * small + 1e-12);
}

TEST(Impute, SeedDeterminismAndNoMissingShortcut) {
  const Fixture f = make(std::vector<VariableKind>(3, VariableKind::continuous));
  ImputeOptions opt;
  opt.mc_samples = 3;
  Rng r1(5), r2(5);
  EXPECT_EQ(impute(f.batch, f.spec, f.model, f.graph, opt, r1).values,
            impute(f.batch, f.spec, f.model, f.graph, opt, r2).values);

  Batch complete = f.batch;
  for (std::size_t i = 0; i < complete.values.size(); ++i) {
    if (!complete.observed[i]) complete.values[i] = 0.25;
  }
  complete.observed.assign(complete.values.size(), 1);
  Rng r3(6), untouched(6);
  EXPECT_EQ(impute(complete, f.spec, f.model, f.graph, opt, r3).values, complete.values);
  EXPECT_EQ(r3.next_u64(), untouched.next_u64());
}

TEST(Impute, Contracts) {
  const Fixture f = make(std::vector<VariableKind>(3, VariableKind::continuous));
  Rng rng(7);
  ImputeOptions opt;
  opt.mc_samples = 0;
  EXPECT_THROW(impute(f.batch, f.spec, f.model, f.graph, opt, rng), ContractError);
  opt.mc_samples = 1;
  opt.temperature = 0.0;
  EXPECT_THROW(impute(f.batch, f.spec, f.model, f.graph, opt, rng), ContractError);
  opt.temperature = 0.5;
  EXPECT_THROW(impute(f.batch, f.spec, f.model, GraphPosterior::create(4, 0.5, 0.05), opt, rng), ContractError);
}

TEST(PredictiveScores, CollectsFlaggedCellsPerVariable) {
  Imputation imp;
  imp.rows = 2;
  imp.cols = 2;
  imp.values = {0.1, 0.2, 0.3, 0.4};
  imp.filled_mask = {1, 0, 1, 1};
  const std::vector<double> truth{1.0, 2.0, 3.0, 4.0};
  const auto scores = predictive_scores(imp, truth, std::vector<unsigned char>{1, 0, 1, 1});
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].predicted, (std::vector<double>{0.1, 0.3}));
  EXPECT_EQ(scores[0].actual, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(scores[1].predicted, (std::vector<double>{0.4}));
  EXPECT_THROW(predictive_scores(imp, truth, std::vector<unsigned char>{0, 1, 0, 0}), ContractError);
  EXPECT_THROW(predictive_scores(imp, std::vector<double>{1.0}, std::vector<unsigned char>{1, 0, 0, 0}),
               DimensionError);
}
