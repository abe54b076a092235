#include <gtest/gtest.h>

#include <torch/torch.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hdrtm/error.hpp"
#include "hdrtm/imaging.hpp"
#include "hdrtm/losses.hpp"
#include "hdrtm/model.hpp"
#include "hdrtm/tensor_bridge.hpp"
#include "hdrtm/tmqi.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace hdrtm;
using hdrtm::testing::gradient_error;

namespace {

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no hdrtm::Error thrown";
  return ErrorKind::InvalidConfig;
}

torch::Tensor frames(int64_t n, int64_t h, int64_t w) { return torch::rand({n, 1, h, w}, tensor_options()); }
torch::Tensor vec(std::initializer_list<double> v) { return torch::tensor(std::vector<double>(v), tensor_options()); }

constexpr double kLn2 = std::numbers::ln2;

}  // namespace

// ---------------------------------------------------------------- Pearson / structure

TEST(Pearson, SelfAndAffineCorrelationIsOne) {
  torch::manual_seed(1);
  const auto a = frames(2, 12, 12);
  EXPECT_NEAR(pearson_patch_corr(a, a).min().item<double>(), 1.0, 1e-6);
  EXPECT_NEAR(pearson_patch_corr(a, 3.0 * a - 0.4).min().item<double>(), 1.0, 1e-6);
  EXPECT_NEAR(pearson_patch_corr(a, -a).max().item<double>(), -1.0, 1e-6);
}

TEST(Pearson, ConstantPatchesContributeZero) {
  const auto flat = torch::full({1, 1, 8, 8}, 0.3, tensor_options());
  EXPECT_EQ(pearson_patch_corr(flat, frames(1, 8, 8)).item<double>(), 0.0);
}

TEST(Pearson, MatchesNestedLoopOracle) {
  torch::manual_seed(2);
  for (int trial = 0; trial < 25; ++trial) {
    const int h = 5 + trial % 6, w = 6 + trial % 5, patch = 2 + trial % 4, step = 1 + trial % 2;
    const auto a = frames(1, h, w);
    const auto b = trial % 3 == 0 ? 0.5 * a + 0.1 * frames(1, h, w) : frames(1, h, w);
    EXPECT_NEAR(pearson_patch_corr(a, b, patch, step).item<double>(),
                oracle::pearson(oracle::grid_of(a), oracle::grid_of(b), patch, step), 1e-6)
        << "trial " << trial;
  }
}

TEST(Pearson, Errors) {
  EXPECT_EQ(kind_of([] { pearson_patch_corr(frames(1, 8, 8), frames(1, 8, 9)); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([] { pearson_patch_corr(frames(1, 4, 8), frames(1, 4, 8)); }), ErrorKind::TooSmall);
}

TEST(Structure, AffineImageHasZeroLoss) {
  torch::manual_seed(3);
  const auto y = torch::rand({2, 1, 1, 32, 32}, tensor_options());
  EXPECT_NEAR(structure_loss(y, y).item<double>(), 0.0, 1e-5);
  EXPECT_NEAR(structure_loss(y, 0.5 * y + 0.1).item<double>(), 0.0, 1e-5);
}

TEST(Structure, MatchesThreeScaleOracle) {
  torch::manual_seed(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto h = frames(1, 16, 16), o = frames(1, 16, 16);
    EXPECT_NEAR(structure_loss(h, o, {3, 1, 3}).item<double>(),
                oracle::structure(oracle::grid_of(h), oracle::grid_of(o), 3, 1, 3), 1e-5);
  }
}

TEST(Structure, SumsFramesAndAveragesClips) {
  torch::manual_seed(5);
  const auto h = torch::rand({2, 3, 1, 20, 20}, tensor_options());
  const auto o = torch::rand({2, 3, 1, 20, 20}, tensor_options());
  double expected = 0.0;
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 3; ++t) expected += oracle::structure(oracle::grid_of(h[b][t]), oracle::grid_of(o[b][t]), 5, 1, 3);
  EXPECT_NEAR(structure_loss(h, o).item<double>(), expected / 2.0, 1e-9);
}

// ---------------------------------------------------------------- latent codes / similarity

TEST(LatentCode, TwoPointAndConstantChannels) {
  auto f = torch::zeros({1, 2, 2, 2}, tensor_options());
  f[0][0].fill_(0.7);
  f[0][1] = torch::tensor({0.0, 2.0, 2.0, 0.0}, tensor_options()).reshape({2, 2});
  const auto z = latent_code(f);
  ASSERT_EQ(z.size(1), 4);
  EXPECT_NEAR(z[0][0].item<double>(), 0.7, 1e-12);
  EXPECT_NEAR(z[0][1].item<double>(), 1.0, 1e-12);
  EXPECT_NEAR(z[0][2].item<double>(), 0.0, 1e-12);
  EXPECT_NEAR(z[0][3].item<double>(), 1.0, 1e-7);
}

TEST(LatentCode, MatchesStatisticsOracle) {
  torch::manual_seed(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = torch::randn({2, 1 + trial % 5, 3 + trial % 4, 4 + trial % 3}, tensor_options());
    const auto z = latent_code(f);
    for (int64_t n = 0; n < f.size(0); ++n) {
      std::vector<Grid> channels;
      for (int64_t c = 0; c < f.size(1); ++c) channels.push_back(oracle::grid_of(f[n][c]));
      const auto ref = oracle::latent_code(channels);
      const auto got = oracle::vec_of(z[n]);
      ASSERT_EQ(got.size(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-6);
    }
  }
}

TEST(LatentCode, ScaleEquivariant) {
  torch::manual_seed(7);
  const auto f = torch::randn({3, 4, 5, 5}, tensor_options());
  EXPECT_TRUE(torch::allclose(latent_code(2.5 * f), 2.5 * latent_code(f), 1e-12, 1e-12));
  EXPECT_GE(latent_code(f).narrow(1, 4, 4).min().item<double>(), 0.0);
}

TEST(Similarity, Fixtures) {
  // u.v = 1 and |u - v|_1 = 1.
  EXPECT_NEAR(similarity(vec({1, 1}), vec({1, 0}), {0.01, 1.0}).item<double>(), std::exp(1.0 / 1.01), 1e-6);
  EXPECT_NEAR(similarity(vec({2, 0}), vec({1, 1}), {0.01, 1.0}).item<double>(), std::exp(2.0 / 2.01), 1e-6);
  EXPECT_EQ(similarity(vec({0, 0}), vec({0, 0})).item<double>(), 1.0);
  EXPECT_EQ(SimilarityParams{}.eta, 1e-2);
  EXPECT_EQ(SimilarityParams{}.l1_weight, 1.0);
}

TEST(Similarity, SymmetricAndPositive) {
  torch::manual_seed(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = torch::randn({6}, tensor_options()), v = torch::randn({6}, tensor_options());
    EXPECT_EQ(similarity(u, v).item<double>(), similarity(v, u).item<double>());
    EXPECT_GT(similarity(u, v).item<double>(), 0.0);
    EXPECT_NEAR(similarity(u, v).item<double>(), oracle::similarity(oracle::vec_of(u), oracle::vec_of(v), 1e-2, 1.0),
                1e-9 * similarity(u, v).item<double>());
  }
}

TEST(Similarity, LengthMismatch) {
  EXPECT_EQ(kind_of([] { similarity(vec({1, 2}), vec({1, 2, 3})); }), ErrorKind::LengthMismatch);
}

// ---------------------------------------------------------------- contrastive losses

TEST(DomainCl, EqualSimilaritiesGiveTwoLnTwo) {
  const auto z = vec({0.3, 0.2}).reshape({1, 2});
  EXPECT_NEAR(domain_cl_loss(z, z, z, z).item<double>(), 2.0 * kLn2, 1e-6);
}

TEST(DomainCl, DecreasesWithPositiveSimilarity) {
  const auto anchor = vec({1.0, 0.5}).reshape({1, 2});
  const auto neg = vec({-0.5, 0.2}).reshape({1, 2});
  double previous = std::numeric_limits<double>::infinity();
  for (double s : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const auto pos = anchor.clone();
    pos[0][0] = 1.0 + s;
    const double loss = domain_cl_loss(anchor, pos, neg, neg, {1.0, 0.0}).item<double>();
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  const auto far = vec({50.0, 25.0}).reshape({1, 2});
  EXPECT_LT(domain_cl_loss(anchor, far, neg, neg, {1.0, 0.0}).item<double>(), 1e-9);
}

TEST(DomainCl, MatchesLoopOracle) {
  torch::manual_seed(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto z_o = 0.3 * torch::randn({4, 8}, tensor_options());
    const auto z_gl = 0.3 * torch::randn({3, 8}, tensor_options());
    const auto z_h = 0.3 * torch::randn({16, 8}, tensor_options());
    const auto z_pl = 0.3 * torch::randn({16, 8}, tensor_options());
    const double ref = oracle::domain_cl(oracle::rows_of(z_o), oracle::rows_of(z_gl), oracle::rows_of(z_h),
                                         oracle::rows_of(z_pl), 1e-2, 1.0);
    EXPECT_NEAR(domain_cl_loss(z_o, z_gl, z_h, z_pl).item<double>(), ref, 1e-6 * std::max(1.0, std::abs(ref)));
  }
}

TEST(DomainCl, Errors) {
  const auto z = torch::zeros({2, 4}, tensor_options());
  EXPECT_EQ(kind_of([&] { domain_cl_loss(z, z, torch::zeros({0, 4}, tensor_options()), z); }), ErrorKind::EmptyBatch);
  EXPECT_EQ(kind_of([&] { domain_cl_loss(z, z, torch::zeros({2, 3}, tensor_options()), z); }), ErrorKind::LengthMismatch);
}

TEST(InstanceCl, SelectionFixture) {
  const auto sel = select_instances({0.8, 0.95, 0.7});
  EXPECT_EQ(sel.positive, 1);
  EXPECT_EQ(sel.negative, 2);
  EXPECT_FALSE(sel.all_equal);
  const auto tie = select_instances({0.5, 0.5, 0.5});
  EXPECT_EQ(tie.positive, 0);
  EXPECT_EQ(tie.negative, 0);
  EXPECT_TRUE(tie.all_equal);
}

TEST(InstanceCl, SelectionInvariantUnderMonotoneMaps) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(6), t(6);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = u(rng);
      t[i] = std::exp(3.0 * s[i]) + 7.0;
    }
    EXPECT_EQ(select_instances(s).positive, select_instances(t).positive);
    EXPECT_EQ(select_instances(s).negative, select_instances(t).negative);
  }
}

TEST(InstanceCl, EquidistantAnchorGivesLnTwo) {
  auto z = torch::zeros({3, 2}, tensor_options());
  z[1] = vec({1.0, 0.0});
  z[2] = vec({0.0, 1.0});
  EXPECT_NEAR(instance_cl_loss(z, {0.1, 0.9, 0.2}).item<double>(), kLn2, 1e-12);
}

TEST(InstanceCl, MatchesLoopOracle) {
  torch::manual_seed(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto z = 0.5 * torch::randn({4, 6}, tensor_options());
    const std::vector<double> scores = {0.3 + 0.01 * trial, 0.9, 0.1, 0.5};
    EXPECT_NEAR(instance_cl_loss(z, scores).item<double>(), oracle::instance_cl(oracle::rows_of(z), scores, 1e-2, 1.0),
                1e-6);
  }
}

TEST(InstanceCl, EqualScoresStillComputed) {
  const auto z = torch::rand({4, 4}, tensor_options());
  const auto loss = instance_cl_loss(z, {0.4, 0.4, 0.4, 0.4});
  EXPECT_TRUE(std::isfinite(loss.item<double>()));
}

TEST(InstanceCl, BatchTooSmall) {
  EXPECT_EQ(kind_of([] { instance_cl_loss(torch::zeros({2, 4}, tensor_options()), {0.1, 0.2}); }), ErrorKind::BatchTooSmall);
}

// ---------------------------------------------------------------- adversarial objectives

TEST(Dcl, EqualLogitsGiveMinusTwoLnTwo) {
  const auto l = vec({0.37});
  EXPECT_NEAR(dcl_d_objective(l, l).item<double>(), -2.0 * kLn2, 1e-5);
  EXPECT_NEAR(dcl_g_objective(l, l).item<double>(), -2.0 * kLn2, 1e-5);
  EXPECT_NEAR(dcl_generator_loss(l, l).item<double>(), 2.0 * kLn2, 1e-5);
}

TEST(Dcl, SupremumAtSeparatedLogits) {
  EXPECT_NEAR(dcl_d_objective(vec({60.0}), vec({-60.0})).item<double>(), 0.0, 1e-12);
}

TEST(Dcl, MatchesDirectFormula) {
  torch::manual_seed(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto real = torch::randn({16}, tensor_options()), fake = torch::randn({16}, tensor_options());
    const auto r = oracle::vec_of(real), f = oracle::vec_of(fake);
    EXPECT_NEAR(dcl_d_objective(real, fake).item<double>(), oracle::dcl_d(r, f), 1e-5);
    EXPECT_NEAR(dcl_g_objective(real, fake).item<double>(), oracle::dcl_g(r, f), 1e-5);
  }
}

TEST(Dcl, RoleSwapSymmetry) {
  torch::manual_seed(13);
  const auto real = torch::randn({5}, tensor_options()), fake = torch::randn({5}, tensor_options());
  EXPECT_NEAR(dcl_g_objective(real, fake).item<double>(), dcl_g_objective(-fake, -real).item<double>(), 1e-12);
  EXPECT_NEAR(dcl_g_objective(real, fake).item<double>(), dcl_d_objective(fake, real).item<double>(), 1e-12);
}

TEST(Dcl, HugeLogitsStayFinite) {
  const auto real = vec({1e4, -1e4, 5e3}), fake = vec({-1e4, 1e4, 0.0});
  EXPECT_TRUE(std::isfinite(dcl_d_objective(real, fake).item<double>()));
  EXPECT_TRUE(std::isfinite(dcl_g_objective(real, fake).item<double>()));
}

TEST(Dcl, EmptyBatch) {
  EXPECT_EQ(kind_of([] { dcl_d_objective(torch::zeros({0}, tensor_options()), vec({1.0})); }), ErrorKind::EmptyBatch);
  EXPECT_EQ(kind_of([] { dcl_g_objective(vec({1.0}), torch::zeros({0}, tensor_options())); }), ErrorKind::EmptyBatch);
}

TEST(Dcl, GeneratorLossRaisesFakeLogits) {
  const auto real = vec({0.5, 0.1});
  auto fake = vec({-0.3, 0.2}).set_requires_grad(true);
  dcl_generator_loss(real, fake).backward();
  EXPECT_LT(fake.grad().max().item<double>(), 0.0);
}

// ---------------------------------------------------------------- naturalness / TV

TEST(Naturalness, IdentityAndShift) {
  torch::manual_seed(14);
  const auto a = frames(1, 16, 16);
  const auto [s0, m0] = naturalness_stats_dist(a, a);
  EXPECT_EQ(s0.item<double>(), 0.0);
  EXPECT_EQ(m0.item<double>(), 0.0);
  const auto [s1, m1] = naturalness_stats_dist(a, a + 0.1);
  EXPECT_NEAR(s1.item<double>(), 0.0, 1e-12);
  EXPECT_NEAR(m1.item<double>(), 0.1, 1e-12);
}

TEST(Naturalness, MatchesNestedLoopOracle) {
  torch::manual_seed(15);
  for (int trial = 0; trial < 25; ++trial) {
    const int h = 11 + trial % 6, w = 12 + trial % 5, patch = 3 + trial % 9, step = 1 + trial % 3;
    const auto a = frames(1, h, w), b = frames(1, h, w);
    const auto [s, m] = naturalness_stats_dist(a, b, {patch, step});
    const auto [rs, rm] = oracle::naturalness(oracle::grid_of(a), oracle::grid_of(b), patch, step);
    EXPECT_NEAR(s.item<double>(), rs, 1e-6) << "trial " << trial;
    EXPECT_NEAR(m.item<double>(), rm, 1e-6) << "trial " << trial;
  }
}

TEST(Naturalness, InterSumsOverFrames) {
  torch::manual_seed(16);
  const auto y = torch::rand({2, 3, 1, 16, 16}, tensor_options());
  EXPECT_EQ(naturalness_inter(y, y).item<double>(), 0.0);
  EXPECT_NEAR(naturalness_inter(y, y + 0.05).item<double>(), 3 * 0.05, 1e-12);
  const auto g = torch::rand({2, 3, 1, 16, 16}, tensor_options());
  double expected = 0.0;
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 3; ++t) {
      const auto [s, m] = oracle::naturalness(oracle::grid_of(g[b][t]), oracle::grid_of(y[b][t]), 11, 1);
      expected += s + m;
    }
  EXPECT_NEAR(naturalness_inter(g, y).item<double>(), expected / 2.0, 1e-6);
  EXPECT_EQ(kind_of([&] { naturalness_inter(g, frames(1, 16, 16)); }), ErrorKind::ShapeMismatch);
}

TEST(Naturalness, IntraUniformFrameIsZero) {
  const auto y = torch::full({1, 1, 1, 24, 24}, 0.4, tensor_options());
  IntraSelection sel;
  const auto loss = naturalness_intra(y, y, [](const torch::Tensor&, const torch::Tensor&) { return 0.5; }, {}, &sel);
  EXPECT_EQ(loss.item<double>(), 0.0);
  EXPECT_EQ(sel.quadrant, std::vector<int>{0});
}

TEST(Naturalness, IntraPicksWellExposedQuadrant) {
  torch::manual_seed(17);
  const int size = 64, half = 32;
  const auto hdr = torch::exp(4.0 * torch::rand({size, size}, tensor_options()));
  auto out = torch::ones({size, size}, tensor_options());
  auto good = torch::log1p(hdr) / std::log1p(hdr.max().item<double>());
  out.narrow(0, half, half).narrow(1, 0, half).copy_(good.narrow(0, half, half).narrow(1, 0, half));
  const QuadrantScorer scorer = [](const torch::Tensor& h, const torch::Tensor& l) {
    return tmqi(to_luminance(h), to_luminance(l, true)).Q;
  };
  std::vector<double> quadrant_scores;
  for (int q = 0; q < 4; ++q) {
    const auto h = hdr.narrow(0, (q / 2) * half, half).narrow(1, (q % 2) * half, half);
    const auto l = out.narrow(0, (q / 2) * half, half).narrow(1, (q % 2) * half, half);
    quadrant_scores.push_back(scorer(h, l));
  }
  const auto best = std::max_element(quadrant_scores.begin(), quadrant_scores.end()) - quadrant_scores.begin();
  IntraSelection sel;
  naturalness_intra(out.reshape({1, 1, size, size}), hdr.reshape({1, 1, size, size}), scorer, {}, &sel);
  EXPECT_EQ(best, 2);
  EXPECT_EQ(sel.quadrant, std::vector<int>{2});
}

TEST(Naturalness, IntraSelectionStableUnderDuplication) {
  torch::manual_seed(18);
  const auto one = torch::rand({1, 1, 1, 32, 32}, tensor_options());
  const auto hdr = torch::rand({1, 1, 1, 32, 32}, tensor_options()) + 0.1;
  const QuadrantScorer scorer = [](const torch::Tensor&, const torch::Tensor& l) { return l.std().item<double>(); };
  IntraSelection a, b;
  const auto la = naturalness_intra(one, hdr, scorer, {}, &a);
  const auto lb = naturalness_intra(torch::cat({one, one}), torch::cat({hdr, hdr}), scorer, {}, &b);
  EXPECT_EQ(b.quadrant, (std::vector<int>{a.quadrant[0], a.quadrant[0]}));
  EXPECT_NEAR(la.item<double>(), lb.item<double>(), 1e-15);
}

TEST(Naturalness, IntraErrors) {
  const QuadrantScorer scorer = [](const torch::Tensor&, const torch::Tensor&) { return 0.0; };
  const auto odd = frames(1, 23, 24);
  EXPECT_EQ(kind_of([&] { naturalness_intra(odd, odd, scorer); }), ErrorKind::OddDimensions);
}

TEST(Tv, Fixtures) {
  EXPECT_EQ(tv_loss(torch::full({1, 1, 5, 5}, 0.2, tensor_options())).item<double>(), 0.0);
  EXPECT_NEAR(tv_loss(vec({0.0, 1.0}).reshape({1, 1, 1, 2})).item<double>(), 1.0, 1e-15);
  EXPECT_EQ(kind_of([] { tv_loss(torch::zeros({1, 1, 1, 1}, tensor_options())); }), ErrorKind::TooSmall);
}

TEST(Tv, MatchesLoopOracle) {
  torch::manual_seed(19);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = frames(1, 2 + trial % 7, 1 + trial % 9);
    EXPECT_NEAR(tv_loss(f).item<double>(), oracle::tv(oracle::grid_of(f)), 1e-6);
  }
}

// ---------------------------------------------------------------- gradients

TEST(Gradients, AllEightOperationsMatchFiniteDifferences) {
  torch::manual_seed(20);
  const auto a = frames(1, 4, 4), b = frames(1, 4, 4);
  const auto sim_p = SimilarityParams{};
  const StructureOptions structure_opt{2, 1, 2};
  const NaturalnessOptions nat_opt{3, 1};
  struct Case {
    const char* name;
    std::function<torch::Tensor(const std::vector<torch::Tensor>&)> fn;
    std::vector<torch::Tensor> inputs;
  };
  const std::vector<Case> cases = {
      {"structure", [&](const auto& x) { return structure_loss(x[0], x[1], structure_opt); }, {a, b}},
      {"similarity", [&](const auto& x) { return similarity(x[0].reshape({-1}), x[1].reshape({-1}), sim_p); },
       {0.1 * a, 0.1 * b}},
      {"domain_cl", [&](const auto& x) { return domain_cl_loss(x[0], x[1], x[2], x[3], sim_p); },
       {torch::rand({4, 4}, tensor_options()), torch::rand({4, 4}, tensor_options()),
        torch::rand({4, 4}, tensor_options()), torch::rand({4, 4}, tensor_options())}},
      {"instance_cl", [&](const auto& x) { return instance_cl_loss(x[0], {0.2, 0.9, 0.5, 0.1}, sim_p); },
       {torch::rand({4, 4}, tensor_options())}},
      {"dcl_d", [&](const auto& x) { return dcl_d_objective(x[0].reshape({-1}), x[1].reshape({-1})); },
       {torch::randn({4, 4}, tensor_options()), torch::randn({4, 4}, tensor_options())}},
      {"dcl_g", [&](const auto& x) { return dcl_g_objective(x[0].reshape({-1}), x[1].reshape({-1})); },
       {torch::randn({4, 4}, tensor_options()), torch::randn({4, 4}, tensor_options())}},
      {"naturalness", [&](const auto& x) {
         const auto [s, m] = naturalness_stats_dist(x[0], x[1], nat_opt);
         return (s + m).sum();
       }, {a, b}},
      {"tv", [&](const auto& x) { return tv_loss(x[0]); }, {a}},
  };
  for (const auto& c : cases) EXPECT_LT(gradient_error(c.fn, c.inputs), 1e-4) << c.name;
}

// ---------------------------------------------------------------- total loss

TEST(TotalLoss, ZeroWeightsGiveStructure) {
  LossComponents c;
  c.structure = torch::tensor(0.7, tensor_options());
  c.adv_g = torch::tensor(3.0, tensor_options());
  c.tv = torch::tensor(5.0, tensor_options());
  LossWeights w;
  w.lambda = {0, 0, 0, 0, 0, 0};
  const auto [total, report] = total_generator_loss(c, w);
  EXPECT_EQ(total.item<double>(), 0.7);
  EXPECT_EQ(report.adv_g, 3.0);
  EXPECT_EQ(report.total, 0.7);
}

TEST(TotalLoss, DefaultWeights) {
  const LossWeights w;
  EXPECT_EQ(w.lambda, (std::array<double, 6>{1, 0.5, 0.1, 0.001, 0.001, 0.001}));
  EXPECT_EQ(w.adv, 0.1);
}

TEST(TotalLoss, MatchesManualWeightedSum) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<double, 7> v{};
    for (auto& x : v) x = u(rng);
    LossComponents c;
    c.structure = torch::tensor(v[0], tensor_options());
    c.adv_g = torch::tensor(v[1], tensor_options());
    c.cl_domain = torch::tensor(v[2], tensor_options());
    c.cl_instance = torch::tensor(v[3], tensor_options());
    c.nat_inter = torch::tensor(v[4], tensor_options());
    c.nat_intra = torch::tensor(v[5], tensor_options());
    c.tv = torch::tensor(v[6], tensor_options());
    LossWeights w;
    for (auto& l : w.lambda) l = u(rng);
    w.adv = u(rng);
    const double expected = v[0] + w.lambda[0] * w.adv * v[1] + w.lambda[1] * v[2] + w.lambda[2] * v[3] +
                            w.lambda[3] * v[4] + w.lambda[4] * v[5] + w.lambda[5] * v[6];
    const auto [total, report] = total_generator_loss(c, w);
    EXPECT_NEAR(total.item<double>(), expected, 1e-7);
    EXPECT_NEAR(report.total, expected, 1e-6 * expected);
  }
}

TEST(TotalLoss, NamesNonFiniteTerm) {
  LossComponents c;
  c.structure = torch::tensor(0.1, tensor_options());
  c.cl_instance = torch::tensor(std::nan(""), tensor_options());
  try {
    total_generator_loss(c, LossWeights{});
    FAIL() << "expected NonFiniteComponent";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteComponent);
    EXPECT_NE(std::string(e.what()).find("cl_instance"), std::string::npos);
  }
}

TEST(LossReport, JsonUsesStructKey) {
  LossReport r;
  r.structure = 1.5;
  r.total = 2.0;
  const nlohmann::json j = r;
  EXPECT_EQ(j.at("struct").get<double>(), 1.5);
  EXPECT_EQ(j.get<LossReport>(), r);
  for (const char* key : {"adv_d", "adv_g", "cl_domain", "cl_instance", "nat_inter", "nat_intra", "tv", "total"})
    EXPECT_TRUE(j.contains(key)) << key;
}
