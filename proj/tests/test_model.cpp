#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "grimp/error.hpp"
#include "grimp/graph.hpp"
#include "grimp/model.hpp"
#include "gradcheck.hpp"

using namespace grimp;

namespace {

ModelConfig small_config(std::size_t latent = 4, std::size_t hidden = 6) {
  ModelConfig c;
  c.latent_dim = latent;
  c.hidden_dim = hidden;
  return c;
}

Batch random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
  Batch b;
  b.rows = rows;
  b.cols = cols;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    b.values.push_back(rng.normal());
    b.observed.push_back(1);
  }
  return b;
}

GroupSpec continuous_groups(std::vector<std::vector<std::size_t>> groups) {
  GroupSpec s;
  s.groups = std::move(groups);
  std::size_t d = 0;
  for (const auto& g : s.groups) d += g.size();
  s.kinds.assign(d, VariableKind::continuous);
  for (std::size_t m = 0; m < s.groups.size(); ++m) s.group_names.push_back("g" + std::to_string(m));
  return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> row(const Tensor& t, std::size_t r) {
  std::vector<double> out;
  for (std::size_t c = 0; c < t.cols(); ++c) out.push_back(t.at(r, c));
  return out;
}

}  // namespace

TEST(GroupSpec, ValidatesPartition) {
  EXPECT_NO_THROW(continuous_groups({{0, 2}, {1}}).validate());
  EXPECT_THROW(continuous_groups({{0, 1}}).validate(), ContractError);
  auto overlap = continuous_groups({{0, 1}, {1}});
  overlap.kinds.resize(3, VariableKind::continuous);
  EXPECT_THROW(overlap.validate(), ContractError);
  auto gap = continuous_groups({{0}, {2}});
  gap.kinds.resize(3, VariableKind::continuous);
  EXPECT_THROW(gap.validate(), ContractError);
  EXPECT_THROW(continuous_groups({{0}, {}}).validate(), ContractError);
  EXPECT_TRUE(GroupSpec::singletons(std::vector<VariableKind>(3, VariableKind::binary)).variable_wise());
}

TEST(Encode, FillConstantsPerKind) {
  GroupSpec s = continuous_groups({{0}, {1}});
  s.kinds[1] = VariableKind::binary;
  Batch b;
  b.rows = 1;
  b.cols = 2;
  b.values = {std::nan(""), std::nan("")};
  b.observed = {0, 0};
  const Tensor f = fill_missing(b, b.observed, s);
  EXPECT_EQ(f.at(0, 0), 0.0);
  EXPECT_EQ(f.at(0, 1), 0.5);
  b.observed = {1, 0};
  EXPECT_THROW(fill_missing(b, b.observed, s), DataError);
}

TEST(Encode, ShapesAndClamp) {
  Rng rng(1);
  const GroupSpec s = continuous_groups({{0, 1}, {2}, {3, 4}});
  ModelConfig c = small_config();
  c.log_std_min = -1.0;
  c.log_std_max = -0.5;
  const ModelParams p = ModelParams::create(s, c, rng);
  const Batch b = random_batch(7, 5, rng);
  const LatentState st = encode(b, s, p, &rng);
  EXPECT_EQ(st.z.shape(), (Shape{21, 4}));
  for (double v : st.log_std.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, -0.5);
  }
}

TEST(Encode, NegligibleNoiseIsDeterministic) {
  Rng rng(2);
  const GroupSpec s = continuous_groups({{0}, {1, 2}});
  ModelConfig c = small_config();
  c.log_std_min = c.log_std_max = -30.0;
  const ModelParams p = ModelParams::create(s, c, rng);
  const Batch b = random_batch(3, 3, rng);
  Rng r1(10), r2(11);
  const auto z1 = encode(b, s, p, &r1).z.to_vector();
  const auto z2 = encode(b, s, p, &r2).z.to_vector();
  EXPECT_LT(max_abs_diff(z1, z2), 1e-11);
  EXPECT_EQ(encode(b, s, p, nullptr).z.to_vector(), encode(b, s, p, nullptr).z.to_vector());
}

TEST(Encode, GroupLocality) {
  Rng rng(3);
  const GroupSpec s = continuous_groups({{0, 3}, {1}, {2, 4}});
  const ModelParams p = ModelParams::create(s, small_config(4, 32), rng);
  Batch b = random_batch(2, 5, rng);
  const LatentState before = encode(b, s, p, nullptr);
  b.values[1 * 5 + 4] += 0.7;  // row 1, variable 4 lives in group 2
  const LatentState after = encode(b, s, p, nullptr);
  for (std::size_t r = 0; r < 6; ++r) {
    const bool touched = r == 1 * 3 + 2;
    EXPECT_EQ(row(before.mean, r) != row(after.mean, r), touched) << "row " << r;
    EXPECT_EQ(row(before.log_std, r) != row(after.log_std, r), touched) << "row " << r;
  }
}

TEST(Encode, ReparametrizedMoments) {
  Rng rng(4);
  const Tensor mean = Tensor::from({1, 2}, {0.3, -1.0});
  const Tensor log_std = Tensor::from({1, 2}, {std::log(0.5), std::log(2.0)});
  const int n = 10000;
  std::vector<double> s(2, 0.0), s2(2, 0.0);
  for (int t = 0; t < n; ++t) {
    const std::vector<double> eps{rng.normal(), rng.normal()};
    const auto z = reparametrize(mean, log_std, eps).to_vector();
    for (int k = 0; k < 2; ++k) s[k] += z[k], s2[k] += z[k] * z[k];
  }
  const double sd[2] = {0.5, 2.0};
  for (int k = 0; k < 2; ++k) {
    const double m = s[k] / n;
    EXPECT_NEAR(m, mean.data()[k], 3.0 * sd[k] / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(s2[k] / n - m * m), sd[k], 3.0 * sd[k] / std::sqrt(2.0 * n));
  }
}

TEST(MessagePass, EmptyGraphGivesConstantState) {
  Rng rng(5);
  const GroupSpec s = continuous_groups({{0}, {1}, {2}});
  ModelParams p = ModelParams::create(s, small_config(), rng);
  const Tensor z = testkit::random_tensor({6, 4}, rng);
  const Tensor out = message_pass_step(z, 2, Tensor::zeros({3, 3}), p);
  const auto base = p.mlp_e2n.forward(Tensor::zeros({1, 4})).to_vector();
  for (std::size_t r = 0; r < 6; ++r) EXPECT_LT(max_abs_diff(row(out, r), base), 1e-14);
  EXPECT_THROW(message_pass(z, 3, Tensor::zeros({3, 3}), p), ContractError);
}

TEST(MessagePass, ForwardOnlyFlowFollowsEdge) {
  Rng rng(6);
  const GroupSpec s = continuous_groups({{0}, {1}});
  ModelParams p = ModelParams::create(s, small_config(), rng);
  const Tensor g = Tensor::matrix({{0, 1}, {0, 0}});
  const Tensor z = testkit::random_tensor({2, 4}, rng);
  const Tensor out = message_pass(z, 1, g, p);
  const auto base = p.mlp_e2n.forward(Tensor::zeros({1, 4})).to_vector();
  EXPECT_LT(max_abs_diff(row(out, 0), base), 1e-14);
  Tensor z2 = z.clone();
  z2.mutable_data()[0] += 0.5;  // perturb node 0
  const Tensor out2 = message_pass(z2, 1, g, p);
  EXPECT_EQ(row(out, 0), row(out2, 0));
  EXPECT_GT(max_abs_diff(row(out, 1), row(out2, 1)), 1e-8);
}

TEST(MessagePass, FusedAggregationMatchesExplicitPairs) {
  Rng rng(7);
  const std::size_t m = 3, batch = 2, l = 4;
  const GroupSpec s = continuous_groups({{0}, {1}, {2}});
  ModelParams p = ModelParams::create(s, small_config(l, 5), rng);
  p.backward_enabled = true;
  // Non-zero biases so the bias paths are exercised.
  for (Tensor t : {p.mlp_forward.b1, p.mlp_forward.b2, p.mlp_backward.b1, p.mlp_backward.b2})
    for (double& v : t.mutable_data()) v = rng.normal();
  const Tensor z = testkit::random_tensor({batch * m, l}, rng);
  const Tensor g = testkit::random_tensor({m, m}, rng, 0.0, 1.0);
  const Tensor fused = message_pass_step(z, batch, g, p);

  std::vector<double> msg(batch * m * l, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        if (k == i) continue;
        const Tensor zk = Tensor::from({1, l}, row(z, b * m + k));
        const Tensor zi = Tensor::from({1, l}, row(z, b * m + i));
        const auto hf = p.mlp_forward.forward(zk, zi).to_vector();  // h^f_{k->i}
        const auto hb = p.mlp_backward.forward(zk, zi).to_vector();  // child k to parent i
        for (std::size_t c = 0; c < l; ++c)
          msg[(b * m + i) * l + c] += g.at(k, i) * hf[c] + g.at(i, k) * hb[c];
      }
  const Tensor expect = p.mlp_e2n.forward(Tensor::from({batch * m, l}, msg));
  EXPECT_LT(max_abs_diff(fused.to_vector(), expect.to_vector()), 1e-12);
}

TEST(MessagePass, BackwardMessagesReverseInfluence) {
  Rng rng(8);
  const GroupSpec s = continuous_groups({{0}, {1}});
  ModelParams p = ModelParams::create(s, small_config(4, 32), rng);
  p.backward_enabled = true;
  const Tensor g = Tensor::matrix({{0, 1}, {0, 0}});
  Batch b = random_batch(1, 2, rng);
  const LatentState st = encode(b, s, p, nullptr);
  const auto before = decode(st, g, s, p).to_vector();
  b.values[1] += 0.8;  // perturb group 1's observation
  const auto after = decode(encode(b, s, p, nullptr), g, s, p).to_vector();
  EXPECT_GT(std::abs(after[0] - before[0]), 1e-8);
}

TEST(Readout, ScattersGroupsToVariablePositions) {
  Rng rng(9);
  const GroupSpec s = continuous_groups({{3, 0}, {4, 1, 2}});
  ModelParams p = ModelParams::create(s, small_config(), rng);
  const Tensor z = testkit::random_tensor({4, 4}, rng);
  const Tensor x = readout(z, 2, s, p);
  EXPECT_EQ(x.shape(), (Shape{2, 5}));
  const auto g0 = p.readouts[0].forward(strided_rows(z, 0, 2));
  EXPECT_DOUBLE_EQ(x.at(1, 3), g0.at(1, 0));
  EXPECT_DOUBLE_EQ(x.at(1, 0), g0.at(1, 1));

  // Swapping group order with matching readouts gives the same columns.
  GroupSpec swapped = s;
  std::swap(swapped.groups[0], swapped.groups[1]);
  ModelParams q = p;
  std::swap(q.readouts[0], q.readouts[1]);
  Tensor zs = interleave_rows({strided_rows(z, 1, 2), strided_rows(z, 0, 2)});
  EXPECT_EQ(readout(zs, 2, swapped, q).to_vector(), x.to_vector());
}

TEST(Readout, VariableWiseSharesOneWidthOneNet) {
  Rng rng(10);
  const GroupSpec s = GroupSpec::singletons(std::vector<VariableKind>(4, VariableKind::continuous));
  const ModelParams p = ModelParams::create(s, small_config(), rng);
  ASSERT_TRUE(p.shared_nets());
  EXPECT_EQ(p.readouts[0].out_width(), 1u);
  EXPECT_EQ(p.encoders[0].w1.rows(), 1u);
  ModelConfig c = small_config();
  c.share_singleton_nets = false;
  EXPECT_EQ(ModelParams::create(s, c, rng).readouts.size(), 4u);
}

TEST(Decode, PipelineShape) {
  Rng rng(11);
  const GroupSpec s = continuous_groups({{0, 1, 2}, {3, 4}, {5, 6}, {7, 8, 9}});
  const ModelParams p = ModelParams::create(s, small_config(16, 16), rng);
  const Batch b = random_batch(7, 10, rng);
  const LatentState st = encode(b, s, p, &rng);
  EXPECT_EQ(decode(st, sample_soft(GraphPosterior::create(4, 0.5, 0.05), 0.5, rng), s, p).shape(),
            (Shape{7, 10}));
}

TEST(Decode, EncoderGradientFiniteDifference) {
  Rng rng(12);
  const GroupSpec s = continuous_groups({{0, 1}, {2}});
  ModelParams p = ModelParams::create(s, small_config(3, 4), rng);
  const Batch b = random_batch(2, 3, rng);
  const Tensor g = Tensor::matrix({{0, 0.7}, {0.2, 0}});
  std::vector<double> eps(2 * 2 * 3);
  for (auto& e : eps) e = rng.normal();
  const Tensor target = testkit::random_tensor({2, 3}, rng);
  auto loss = [&](const std::vector<Tensor>& w) {
    ModelParams q = p;
    q.encoders[0].w1 = w[0];
    q.encoders[1].w_mean = w[1];
    q.encoders[0].w_log_std = w[2];
    LatentState st = encode(b, s, q, nullptr);
    st.z = reparametrize(st.mean, st.log_std, eps);
    return sum(square(sub(decode(st, g, s, q), target)));
  };
  const auto res = testkit::grad_check(
      loss, {p.encoders[0].w1.clone(), p.encoders[1].w_mean.clone(), p.encoders[0].w_log_std.clone()});
  EXPECT_TRUE(res.ok) << res.detail;
}

TEST(ModelParams, NamesAndTrainableSet) {
  Rng rng(13);
  const GroupSpec s = continuous_groups({{0}, {1, 2}});
  ModelParams p = ModelParams::create(s, small_config(), rng);
  const auto named = p.named_parameters();
  EXPECT_EQ(named.front().name, "encoder.0.w1");
  EXPECT_EQ(named.back().name, "readout.1.b2");
  const auto count_backward = [&] {
    std::size_t n = 0;
    for (const auto& t : p.trainable())
      for (const auto& nt : p.named_parameters())
        if (nt.tensor.node_ptr() == t.node_ptr() && nt.name.rfind("mlp_backward.", 0) == 0) ++n;
    return n;
  };
  EXPECT_EQ(count_backward(), 0u);
  p.backward_enabled = true;
  EXPECT_EQ(count_backward(), 5u);
  EXPECT_THROW(p.check_compatible(continuous_groups({{0, 1}, {2}})), ContractError);
}
