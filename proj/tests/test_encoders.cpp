#include <gtest/gtest.h>

#include "helpers.hpp"
#include "tips/encoders.hpp"
#include "tips/errors.hpp"
#include "tips/model.hpp"
#include "tips/recommender.hpp"

using namespace tips;
namespace pn = tips::param_names;

namespace {

ParamRegistry encoder_params(std::size_t items, std::size_t dim, std::uint64_t seed = 1) {
  ModelDims dims{items, dim, 1, 10};
  ParamRegistry p;
  Rng rng = make_rng(seed, 0);
  register_encoder_params(p, dims, rng);
  return p;
}

bool all_zero(const Tensor2& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double x) { return x == 0.0; });
}

}  // namespace

TEST(LookupDual, ZeroInteractionTableGivesZeroVector) {
  ParamRegistry p = encoder_params(5, 4);
  p.value(pn::kInteraction).fill(0.0);
  for (ItemIndex v = 0; v < 5; ++v) {
    for (double x : lookup_dual(p, v).interaction) EXPECT_EQ(x, 0.0);
  }
  EXPECT_THROW(lookup_dual(p, 5), IndexError);
}

TEST(LookupDual, TablesAreSeparateParameters) {
  ParamRegistry p = encoder_params(5, 4);
  const auto d = lookup_dual(p, 2);
  EXPECT_NE(d.interaction, d.exposure);
  p.value(pn::kExposure)(2, 0) += 1.0;
  EXPECT_EQ(lookup_dual(p, 2).interaction, d.interaction);
}

TEST(LookupDual, InteractionLossLeavesExposureGradientZero) {
  ParamRegistry p = encoder_params(6, 4);
  p.zero_grad();
  Tape t;
  const std::size_t rows[] = {1, 3, 3};
  Var c = t.gather(p, pn::kInteraction, rows);
  t.backward(ad::sum(ad::mul(c, c)));
  EXPECT_TRUE(all_zero(p.grad(pn::kExposure)));
  EXPECT_FALSE(all_zero(p.grad(pn::kInteraction)));
}

TEST(ExposureQuery, ReadsOnlyTheExposureTable) {
  ParamRegistry p = encoder_params(6, 4);
  p.zero_grad();
  Tape t;
  Var q = exposure_query(t, p, 2, 0.3, true);
  t.backward(ad::sum(ad::mul(q, q)));
  EXPECT_TRUE(all_zero(p.grad(pn::kInteraction)));
  EXPECT_FALSE(all_zero(p.grad(pn::kExposure)));
}

TEST(LookupDual, ExposureRowMovesPropensityButNotScore) {
  ModelDims dims{8, 4, 2, 10};
  TipsModel model(dims, Mode::kTips, "attention");
  ParamRegistry p;
  Rng rng = make_rng(3, 0);
  model.register_params(p, rng, false);
  const std::vector<ItemIndex> items{0, 1, 2};
  const std::vector<double> gaps{0.0, 0.2, 0.4};
  const ItemIndex candidate = 5;

  auto forward = [&](double& s, double& y) {
    Tape t;
    auto enc = model.encode(t, p, items, gaps);
    s = model.propensity(t, p, enc, candidate, 0.1).propensity.scalar();
    const ItemIndex cand[] = {candidate};
    y = score_candidates(t, p, model.user_vector(t, p, enc), cand).value()(0, 0);
  };
  double s0, y0, s1, y1;
  forward(s0, y0);
  for (double& x : p.value(pn::kExposure).row(candidate)) x += 0.5;
  forward(s1, y1);
  EXPECT_NE(s0, s1);
  EXPECT_EQ(y0, y1);
}

TEST(EmbedTime, Deterministic) {
  const ParamRegistry p = encoder_params(3, 6);
  EXPECT_EQ(embed_time(p, 0.0), embed_time(p, 0.0));
}

TEST(EmbedTime, ZeroNetworkGivesZeroVector) {
  ParamRegistry p = encoder_params(3, 6);
  for (const auto& n : {pn::kTimeW1, pn::kTimeB1, pn::kTimeW2, pn::kTimeB2}) p.value(n).fill(0.0);
  for (double g : {0.0, 0.3, 1.4}) {
    for (double x : embed_time(p, g)) EXPECT_EQ(x, 0.0);
  }
}

TEST(EmbedTime, DistinctGapsGiveDistinctVectors) {
  const ParamRegistry p = encoder_params(3, 8, 11);
  std::vector<std::vector<double>> seen;
  for (int i = 0; i <= 150; ++i) seen.push_back(embed_time(p, i * 0.01));
  for (std::size_t a = 0; a < seen.size(); ++a) {
    for (std::size_t b = a + 1; b < seen.size(); ++b) EXPECT_NE(seen[a], seen[b]);
  }
}

TEST(EmbedTime, TapeMatchesPlainForward) {
  ParamRegistry p = encoder_params(3, 5, 4);
  const std::vector<double> gaps{0.0, 0.25, 1.3};
  Tape t;
  const Tensor2 rows = embed_times(t, p, gaps).value();
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const auto want = embed_time(p, gaps[i]);
    for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(rows(i, j), want[j], 1e-14);
  }
}

TEST(FuseSequence, ZeroTimeEmbeddingGivesItemRows) {
  ParamRegistry p = encoder_params(6, 4);
  for (const auto& n : {pn::kTimeW2, pn::kTimeB2}) p.value(n).fill(0.0);
  const std::vector<ItemIndex> items{4, 0, 2};
  const std::vector<double> gaps{0.0, 0.5, 0.9};
  Tape t;
  const FusedSequence s = fuse_sequence(t, p, items, gaps, 3, true);
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(s.rows.value()(m, j), p.value(pn::kInteraction)(items[m], j));
    }
  }
}

TEST(FuseSequence, SingleItemIsOneRow) {
  ParamRegistry p = encoder_params(6, 4);
  Tape t;
  const std::vector<ItemIndex> items{3};
  const std::vector<double> gaps{0.0};
  const FusedSequence s = fuse_sequence(t, p, items, gaps, 1, true);
  EXPECT_EQ(s.rows.rows(), 1u);
  EXPECT_EQ(s.rows.cols(), 4u);
  EXPECT_EQ(s.first_valid, 0u);
}

TEST(FuseSequence, ThreeItemHandSums) {
  ParamRegistry p = encoder_params(3, 2);
  p.value(pn::kInteraction) = Tensor2{{1, 2}, {3, 4}, {5, 6}};
  p.value(pn::kTimeW1) = Tensor2{{1, 0}};
  p.value(pn::kTimeB1) = Tensor2{{0, 0}};
  p.value(pn::kTimeW2) = Tensor2::identity(2);
  p.value(pn::kTimeB2) = Tensor2{{0, 1}};
  const std::vector<ItemIndex> items{2, 0, 1};
  const std::vector<double> gaps{0.0, 0.5, 1.0};
  Tape t;
  const Tensor2 s = fuse_sequence(t, p, items, gaps, 3, true).rows.value();
  // t(g) = [tanh(g), 1]
  const double want[3][2] = {{5 + 0.0, 6 + 1.0},
                             {1 + std::tanh(0.5), 2 + 1.0},
                             {3 + std::tanh(1.0), 4 + 1.0}};
  for (int m = 0; m < 3; ++m) {
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(s(m, j), want[m][j], 1e-15);
  }
}

TEST(FuseSequence, LeftPaddingAndLengthChecks) {
  ParamRegistry p = encoder_params(4, 2);
  Tape t;
  const std::vector<ItemIndex> items{1, 2};
  const std::vector<double> gaps{0.0, 0.1};
  const FusedSequence s = fuse_sequence(t, p, items, gaps, 5, true);
  EXPECT_EQ(s.length(), 5u);
  EXPECT_EQ(s.first_valid, 3u);
  for (std::size_t m = 0; m < 3; ++m) {
    for (double x : s.rows.value().row(m)) EXPECT_EQ(x, 0.0);
  }
  EXPECT_THROW(fuse_sequence(t, p, items, gaps, 1, true), DimensionError);
  const std::vector<double> short_gaps{0.0};
  EXPECT_THROW(fuse_sequence(t, p, items, short_gaps, 5, true), DimensionError);
}

TEST(FuseSequence, JointPermutationPermutesRows) {
  ParamRegistry p = encoder_params(7, 4, 8);
  const std::vector<ItemIndex> items{6, 1, 3, 0};
  const std::vector<double> gaps{0.0, 0.7, 0.1, 1.2};
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<ItemIndex> pi;
  std::vector<double> pg;
  for (std::size_t i : perm) {
    pi.push_back(items[i]);
    pg.push_back(gaps[i]);
  }
  Tape t;
  const Tensor2 a = fuse_sequence(t, p, items, gaps, 4, true).rows.value();
  const Tensor2 b = fuse_sequence(t, p, pi, pg, 4, true).rows.value();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(b(r, j), a(perm[r], j));
  }
}

TEST(FuseSequence, WithoutTimeIgnoresGaps) {
  ParamRegistry p = encoder_params(5, 4);
  const std::vector<ItemIndex> items{1, 2};
  const std::vector<double> g1{0.0, 0.1};
  const std::vector<double> g2{0.0, 1.4};
  Tape t;
  const Tensor2 a = fuse_sequence(t, p, items, g1, 2, false).rows.value();
  const Tensor2 b = fuse_sequence(t, p, items, g2, 2, false).rows.value();
  EXPECT_EQ(a, b);
}

TEST(ModelDims, Validation) {
  EXPECT_THROW((ModelDims{5, 6, 4, 10}.validate()), ConfigError);
  EXPECT_THROW((ModelDims{5, 6, 0, 10}.validate()), ConfigError);
  EXPECT_NO_THROW((ModelDims{5, 8, 4, 10}.validate()));
}
