#include <gtest/gtest.h>

#include <cmath>

#include "bregman_market/additivity.hpp"
#include "support.hpp"

namespace bm = bregman_market;
using bm::AcuteStatus;
using bm::CostModel;
using bm::Face;
using bm::Index;
using bm::Matrix;
using bm::OutcomeSpace;
using bm::Vector;
using test_support::vec;

namespace {

const double kRoot = std::sqrt(105.0 / 13.0);

TEST(Additivity, SquareIsAdditive) {
  const auto r = bm::check_budget_additivity(CostModel::quadratic(2), test_support::unit_square(), vec({0.5, 0.1}),
                                             vec({0.9, 0.3}), 0.07, 0.25);
  EXPECT_TRUE(r.additive);
  EXPECT_LE(r.gap, 1e-6);
  EXPECT_LE((r.price_combined.nu - vec({0.9, 0.3})).norm(), 1e-6);
  EXPECT_LE((r.price_sequential.nu - vec({0.9, 0.3})).norm(), 1e-6);
}

TEST(Additivity, ObtuseTriangleIsNotAdditive) {
  const auto tri = test_support::obtuse_triangle();
  const auto r = bm::check_budget_additivity(CostModel::quadratic(2), tri, vec({2.7, 0.9}), vec({2.7, 1.8}),
                                             std::vector<double>{0.09, 0.56, 0.565});
  ASSERT_EQ(r.sequential.size(), 3u);
  EXPECT_LE((r.sequential[0].nu_hat.nu - vec({2.4, 1.2})).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((r.sequential[1].nu_hat.nu - vec({2.4, 1.6})).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((r.price_sequential.nu - vec({0.9 * kRoot, 0.6 * kRoot})).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((r.price_combined.nu - vec({2.7, 1.8})).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_FALSE(r.additive);
  EXPECT_GE(r.gap, 0.1);

  const auto two = bm::check_budget_additivity(CostModel::quadratic(2), tri, vec({2.7, 0.9}), vec({2.7, 1.8}),
                                               0.65, 0.565);
  EXPECT_FALSE(two.additive);
  EXPECT_LE((two.price_combined.nu - vec({2.7, 1.8})).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Additivity, ZeroSecondBudgetIsAdditive) {
  std::mt19937_64 rng(401);
  for (int trial = 0; trial < 8; ++trial) {
    const auto p = test_support::random_planar_problem(rng, static_cast<bm::CostKind>(trial % 4));
    const auto r = bm::check_budget_additivity(p.model, p.space, p.q0, p.mu, p.budget, 0.0);
    EXPECT_LE(r.gap, 1e-8) << trial;
  }
}

TEST(Additivity, LogPartitionTriangleIsAdditive) {
  const auto tri = test_support::obtuse_triangle();
  const auto model = CostModel::log_partition(tri);
  const Vector mu = tri.points() * vec({0.2, 0.3, 0.5});
  const Vector q0 = model.inverse_price(tri.points() * vec({0.5, 0.4, 0.1}));
  const auto r = bm::check_budget_additivity(model, tri, q0, mu, std::vector<double>{0.3, 0.5, 0.7});
  EXPECT_TRUE(r.additive) << r.gap;
}

TEST(EuclideanAcute, SimplexFaceMinimumIsHalf) {
  const auto simplex = OutcomeSpace::simplex(4);
  const auto v = bm::euclidean_acute_check(simplex, Face{0, 1});
  EXPECT_EQ(v.status, AcuteStatus::certified);
  EXPECT_NEAR(v.evidence->dot, 0.5, 1e-12);
  // One over the face size in general.
  EXPECT_NEAR(bm::euclidean_acute_check(OutcomeSpace::simplex(5), Face{0, 1, 2}).evidence->dot, 1.0 / 3.0, 1e-12);
}

TEST(EuclideanAcute, HypercubeFacesAllCertified) {
  for (Index n : {2, 3}) {
    const auto cube = OutcomeSpace::hypercube(n);
    for (const Face& f : bm::enumerate_faces(cube)) {
      if (f.size() == static_cast<std::size_t>(cube.size())) continue;
      EXPECT_EQ(bm::euclidean_acute_check(cube, f).status, AcuteStatus::certified) << f;
    }
  }
}

TEST(EuclideanAcute, ObtuseVertexRefuted) {
  const auto tri = test_support::obtuse_triangle();
  const auto v = bm::euclidean_acute_check(tri, Face{1});
  ASSERT_EQ(v.status, AcuteStatus::refuted_face);
  EXPECT_NEAR(v.evidence->dot, -7.56, 1e-9);
  EXPECT_EQ(v.evidence->first, 0);
  EXPECT_EQ(v.evidence->second, 2);
  // The stored witness reproduces exactly.
  const auto& ev = *v.evidence;
  EXPECT_EQ(ev.projected.col(ev.first).dot(ev.projected.col(ev.second)), ev.dot);
  EXPECT_EQ(bm::euclidean_acute_check(tri, Face{1}).evidence->dot, ev.dot);
  EXPECT_THROW(bm::euclidean_acute_check(tri, Face{}), bm::InputError);
}

TEST(Certify, Matrix) {
  const auto tri = test_support::obtuse_triangle();
  EXPECT_TRUE(bm::certify_sufficient_conditions(CostModel::log_partition(tri), tri).certified());
  EXPECT_TRUE(bm::certify_sufficient_conditions(CostModel::quadratic(3), OutcomeSpace::hypercube(3)).certified());
  EXPECT_TRUE(bm::certify_sufficient_conditions(CostModel::quadratic(4), OutcomeSpace::simplex(4)).certified());
  const auto refuted = bm::certify_sufficient_conditions(CostModel::quadratic(2), tri);
  ASSERT_EQ(refuted.status, AcuteStatus::refuted_face);
  EXPECT_EQ(refuted.evidence->face, Face{1});
  EXPECT_NEAR(refuted.evidence->dot, -7.56, 1e-9);

  const auto s4 = OutcomeSpace::simplex(4);
  const auto industry = CostModel::direct_sum({CostModel::lmsr(4), CostModel::lmsr(4), CostModel::lmsr(4)});
  const auto verdict = bm::certify_sufficient_conditions(industry, OutcomeSpace::product({s4, s4, s4}));
  EXPECT_TRUE(verdict.certified());
  EXPECT_EQ(verdict.blocks.size(), 3u);

  // A segment is certified for any cost.
  const auto line = OutcomeSpace::from_rows({{0, 0}, {1, 2}, {3, 6}});
  EXPECT_EQ(bm::certify_sufficient_conditions(CostModel::quadratic(2), line).rule, "segment");
  EXPECT_TRUE(bm::certify_sufficient_conditions(CostModel::quadratic(2), line).certified());

  // Affinely dependent log-partition outcomes are outside every rule.
  const auto sq = test_support::unit_square();
  EXPECT_EQ(bm::certify_sufficient_conditions(CostModel::log_partition(sq), sq).status, AcuteStatus::not_applicable);
  EXPECT_EQ(bm::certify_sufficient_conditions(CostModel::quadratic(2), OutcomeSpace::hypercube(3)).status,
            AcuteStatus::not_applicable);
}

TEST(Certify, RandomAffinelyIndependentLogPartition) {
  std::mt19937_64 rng(402);
  for (int trial = 0; trial < 5; ++trial) {
    const auto space = test_support::random_space(rng, 3, 4);
    EXPECT_TRUE(bm::certify_sufficient_conditions(CostModel::log_partition(space), space).certified());
  }
}

TEST(Search, FindsObtuseTriangleCounterexample) {
  const auto tri = test_support::obtuse_triangle();
  const auto found = bm::randomized_counterexample_search(CostModel::quadratic(2), tri, 200, 7);
  ASSERT_TRUE(found.has_value());
  EXPECT_GT(found->gap, 1e-3);
  EXPECT_FALSE(found->additive);
}

TEST(Search, SimplexLmsrHasNone) {
  const auto found = bm::randomized_counterexample_search(CostModel::lmsr(3), OutcomeSpace::simplex(3), 200, 11);
  EXPECT_FALSE(found.has_value()) << found->gap;
}

TEST(Search, RejectsZeroTrials) {
  EXPECT_THROW(bm::randomized_counterexample_search(CostModel::lmsr(3), OutcomeSpace::simplex(3), 0, 1),
               bm::InputError);
}

TEST(Search, ResultIndependentOfWorkerCount) {
  const auto tri = test_support::obtuse_triangle();
  bm::SearchOptions one, four;
  four.workers = 4;
  const auto a = bm::randomized_counterexample_search(CostModel::quadratic(2), tri, 60, 3, one);
  const auto b = bm::randomized_counterexample_search(CostModel::quadratic(2), tri, 60, 3, four);
  ASSERT_EQ(a.has_value(), b.has_value());
  if (a) {
    EXPECT_EQ(a->q0, b->q0);
    EXPECT_EQ(a->budgets, b->budgets);
  }
}

// Certified markets never show a gap above 1e-4 on sampled instances.
TEST(Properties, CertifiedMarketsAreAdditive) {
  std::mt19937_64 rng(403);
  const auto tri = test_support::obtuse_triangle();
  const auto two = OutcomeSpace::from_rows({{0}, {1}});
  std::vector<std::pair<CostModel, OutcomeSpace>> markets{
      {CostModel::log_partition(tri), tri},
      {CostModel::quadratic(2), OutcomeSpace::hypercube(2)},
      {CostModel::lmsr(3), OutcomeSpace::simplex(3)},
      {CostModel::direct_sum({CostModel::lmsr(2), CostModel::quadratic(1)}),
       OutcomeSpace::product({OutcomeSpace::simplex(2), two})},
  };
  for (const auto& [model, space] : markets) {
    ASSERT_TRUE(bm::certify_sufficient_conditions(model, space).certified()) << bm::to_string(model.kind());
    bm::SearchOptions opt;
    opt.tol = 1e-4;
    EXPECT_FALSE(bm::randomized_counterexample_search(model, space, 30, rng(), opt).has_value())
        << bm::to_string(model.kind());
  }
}

TEST(Properties, ThreeTraderAssociativityOnCertifiedMarkets) {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.05, 0.4);
  const auto tri = test_support::obtuse_triangle();
  std::vector<std::pair<CostModel, OutcomeSpace>> markets{
      {CostModel::log_partition(tri), tri},
      {CostModel::quadratic(3), OutcomeSpace::hypercube(3)},
      {CostModel::lmsr(4), OutcomeSpace::simplex(4)},
  };
  for (const auto& [model, space] : markets) {
    for (int trial = 0; trial < 4; ++trial) {
      const Vector q0 = model.inverse_price(test_support::dirichlet_point(rng, space));
      const Vector mu = test_support::dirichlet_point(rng, space);
      const double full = bm::divergence(model, q0, mu);
      const auto r = bm::check_budget_additivity(model, space, q0, mu,
                                                 std::vector<double>{u(rng) * full, u(rng) * full, u(rng) * full});
      EXPECT_LE(r.gap, 1e-5) << bm::to_string(model.kind()) << " " << trial;
    }
  }
}

// Direct probe of the acute-angle definition for the quadratic cost: along
// perpendiculars to a vertex face, the state displacement must stay in the
// witness cone. The probe agrees with the projected dot-product test.
TEST(Properties, EuclideanAcuteMatchesWitnessConeProbe) {
  std::mt19937_64 rng(405);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const auto space = test_support::random_space(rng, 2, 3 + trial % 2);
    for (const Face& face : bm::enumerate_faces(space)) {
      if (face.size() == static_cast<std::size_t>(space.size())) continue;
      const bool certified = bm::euclidean_acute_check(space, face).certified();
      bool violated = false;
      const Matrix v = bm::face_span_basis(face, space);
      for (int s = 0; s < 300 && !violated; ++s) {
        // Belief near one outcome, start inside conv(X ∪ {mu}).
        Vector w(space.size());
        for (Index j = 0; j < space.size(); ++j) w(j) = 0.01 + u(rng) * u(rng) * u(rng);
        w(s % space.size()) += 3.0;
        const Vector mu = space.points() * (w / w.sum());
        Vector fw(static_cast<Index>(face.size()) + 1);
        for (Index j = 0; j < fw.size(); ++j) fw(j) = 0.05 + u(rng);
        fw /= fw.sum();
        Vector nu = fw(fw.size() - 1) * mu;
        for (std::size_t k = 0; k < face.size(); ++k) nu += fw(static_cast<Index>(k)) * space.outcome(face.members()[k]);
        // Slice points: Euclidean projection of nu onto x0 + span(V) + t (mu - nu) for t in (0, 1].
        for (double t : {0.2, 0.6, 1.0}) {
          const Vector target = nu + t * (mu - nu);
          const Vector nu_t = target + v * (v.transpose() * (nu - target));
          const Vector d = nu_t - nu;
          for (Index j = 0; j < space.size(); ++j)
            for (int x : face.members())
              if (d.dot(space.outcome(j) - space.outcome(x)) < -1e-9) violated = true;
        }
      }
      EXPECT_EQ(certified, !violated) << trial << " " << face;
    }
  }
}

}  // namespace
