#include <gtest/gtest.h>

#include <numbers>
#include <set>

#include "bregman_market/geometry.hpp"
#include "support.hpp"

namespace bm = bregman_market;
using bm::Face;
using bm::Matrix;
using bm::Vector;
using test_support::vec;

namespace {

// Argmin sets of u·w for u on a dense circle of directions, plus the zero
// functional: every face of a planar polygon appears this way.
std::set<Face> planar_faces_by_sweep(const bm::OutcomeSpace& space) {
  std::set<Face> faces{space.all(), Face{}};
  const int steps = 20000;
  for (int k = 0; k < steps; ++k) {
    const double t = 2.0 * std::numbers::pi * k / steps;
    const Vector u = vec({std::cos(t), std::sin(t)});
    const Vector vals = space.points().transpose() * u;
    const double lo = vals.minCoeff();
    std::vector<int> arg;
    for (bm::Index j = 0; j < space.size(); ++j)
      if (vals(j) <= lo + 1e-12) arg.push_back(static_cast<int>(j));
    faces.insert(Face(arg));
  }
  // Edges are hit only at isolated angles; add them from adjacent vertex pairs.
  for (bm::Index i = 0; i < space.size(); ++i) {
    for (bm::Index j = i + 1; j < space.size(); ++j) {
      const Vector d = space.outcome(j) - space.outcome(i);
      for (double sgn : {1.0, -1.0}) {
        const Vector u = sgn * vec({-d(1), d(0)});
        const Vector vals = space.points().transpose() * u;
        const double lo = vals.minCoeff();
        std::vector<int> arg;
        for (bm::Index k = 0; k < space.size(); ++k)
          if (vals(k) <= lo + 1e-12) arg.push_back(static_cast<int>(k));
        faces.insert(Face(arg));
      }
    }
  }
  return faces;
}

TEST(OutcomeSpace, RejectsMalformedInput) {
  EXPECT_THROW(bm::OutcomeSpace::from_rows({{0, 0}}), bm::InputError);
  EXPECT_THROW(bm::OutcomeSpace::from_rows({{0, 0}, {0, 0}}), bm::InputError);
  EXPECT_THROW(bm::OutcomeSpace::from_rows({{0, 0}, {1}}), bm::InputError);
  EXPECT_THROW(bm::OutcomeSpace::from_rows({{0, 0}, {1, 1}}, {"a"}), bm::InputError);
}

TEST(OutcomeSpace, Factories) {
  const auto cube = bm::OutcomeSpace::hypercube(3);
  EXPECT_EQ(cube.dim(), 3);
  EXPECT_EQ(cube.size(), 8);
  EXPECT_EQ(cube.outcome(5), vec({1, 0, 1}));
  const auto s = bm::OutcomeSpace::simplex(4);
  EXPECT_EQ(s.points(), Matrix::Identity(4, 4));
  const auto prod = bm::OutcomeSpace::product({bm::OutcomeSpace::simplex(2), bm::OutcomeSpace::simplex(3)});
  EXPECT_EQ(prod.dim(), 5);
  EXPECT_EQ(prod.size(), 6);
  EXPECT_EQ(prod.outcome(4), vec({0, 1, 0, 1, 0}));
}

TEST(HullMembership, InteriorPointOfSquare) {
  const auto sq = test_support::unit_square();
  const Vector p = vec({0.5, 0.1});
  const auto cert = bm::hull_membership(p, sq.points());
  ASSERT_TRUE(cert.inside);
  EXPECT_GE(cert.weights.minCoeff(), 0.0);
  EXPECT_NEAR(cert.weights.sum(), 1.0, 1e-12);
  EXPECT_LE((sq.points() * cert.weights - p).norm(), 1e-10);
}

TEST(HullMembership, GeneratorIsInsideItsOwnHull) {
  const auto tri = test_support::obtuse_triangle();
  const auto cert = bm::hull_membership(tri.outcome(1), tri.points());
  ASSERT_TRUE(cert.inside);
  EXPECT_NEAR(cert.weights(1), 1.0, 1e-10);
}

TEST(HullMembership, OutsidePointGetsSeparatingDirection) {
  const auto sq = test_support::unit_square();
  const Vector p = vec({-1, 0});
  const auto cert = bm::hull_membership(p, sq.points());
  ASSERT_FALSE(cert.inside);
  EXPECT_NEAR(cert.separating_direction(0), -1.0, 1e-9);
  EXPECT_NEAR(cert.separating_direction(1), 0.0, 1e-9);
}

TEST(HullMembership, RejectsDimensionMismatch) {
  EXPECT_THROW(bm::hull_membership(vec({1, 2, 3}), test_support::unit_square().points()), bm::InputError);
}

TEST(HullMembership, CertificatesHoldOnRandomQueries) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto space = test_support::random_space(rng, 3, 6);
    const Vector p = vec({g(rng), g(rng), g(rng)});
    const auto cert = bm::hull_membership(p, space.points());
    if (cert.inside) {
      EXPECT_GE(cert.weights.minCoeff(), 0.0);
      EXPECT_NEAR(cert.weights.sum(), 1.0, 1e-9);
      EXPECT_LE((space.points() * cert.weights - p).cwiseAbs().sum(), 1e-8);
    } else {
      const Vector& u = cert.separating_direction;
      EXPECT_GT(u.dot(p), (space.points().transpose() * u).maxCoeff()) << "trial " << trial;
    }
  }
}

TEST(IsFace, TriangleEdgeAndEmptySet) {
  const auto tri = test_support::obtuse_triangle();
  EXPECT_TRUE(bm::is_face(Face{1, 2}, tri));
  EXPECT_TRUE(bm::is_face(Face{}, tri));
  EXPECT_TRUE(bm::is_face(tri.all(), tri));
}

TEST(IsFace, SquareDiagonalIsNotAFace) {
  const auto sq = test_support::unit_square();
  EXPECT_FALSE(bm::is_face(Face{0, 3}, sq));
  EXPECT_TRUE(bm::is_face(Face{0, 1}, sq));
  EXPECT_THROW(bm::is_face(Face{0, 7}, sq), bm::InputError);
}

TEST(IsFace, AgreesWithDirectionSweepOnPlanarSets) {
  std::mt19937_64 rng(5);
  std::vector<bm::OutcomeSpace> spaces{test_support::unit_square(), test_support::obtuse_triangle()};
  for (int k = 0; k < 6; ++k) spaces.push_back(test_support::random_space(rng, 2, 5));
  // Collinear points: the middle one is not a vertex.
  spaces.push_back(bm::OutcomeSpace::from_rows({{0, 0}, {1, 1}, {2, 2}, {0, 2}}));
  for (const auto& space : spaces) {
    const auto expected = planar_faces_by_sweep(space);
    for (const Face& f : test_support::all_subsets(space.size())) {
      EXPECT_EQ(bm::is_face(f, space), expected.count(f) == 1) << f;
    }
  }
}

TEST(EnumerateFaces, MatchesSubsetScan) {
  std::mt19937_64 rng(9);
  std::vector<bm::OutcomeSpace> spaces{test_support::unit_square(), bm::OutcomeSpace::hypercube(3)};
  for (int k = 0; k < 4; ++k) spaces.push_back(test_support::random_space(rng, 3, 6));
  for (const auto& space : spaces) {
    std::set<Face> expected;
    for (const Face& f : test_support::all_subsets(space.size()))
      if (!f.empty() && bm::is_face(f, space)) expected.insert(f);
    const auto faces = bm::enumerate_faces(space);
    EXPECT_EQ(std::set<Face>(faces.begin(), faces.end()), expected);
  }
  // The 3-cube has 8 vertices, 12 edges, 6 facets and itself.
  EXPECT_EQ(bm::enumerate_faces(bm::OutcomeSpace::hypercube(3)).size(), 27u);
}

TEST(MinimalFace, TriangleEdge) {
  const auto tri = test_support::obtuse_triangle();
  EXPECT_EQ(bm::minimal_face(vec({2.7, 1.8}), vec({2.7, 0.9}), tri), (Face{1, 2}));
}

TEST(MinimalFace, BeliefItselfGivesEmptyFace) {
  const auto sq = test_support::unit_square();
  EXPECT_EQ(bm::minimal_face(vec({0.9, 0.3}), vec({0.9, 0.3}), sq), Face{});
}

TEST(MinimalFace, SquareBottomEdge) {
  const auto sq = test_support::unit_square();
  EXPECT_EQ(bm::minimal_face(vec({0.9, 0.3}), vec({0.5, 0.1}), sq), (Face{0, 1}));
}

TEST(MinimalFace, RejectsPointsOutsideHull) {
  const auto sq = test_support::unit_square();
  EXPECT_THROW(bm::minimal_face(vec({0.9, 0.3}), vec({-0.5, 0.1}), sq), bm::DomainError);
  EXPECT_THROW(bm::minimal_face(vec({1.9, 0.3}), vec({0.5, 0.1}), sq), bm::DomainError);
}

// Minimal-by-inclusion search over all faces, checking hull membership of nu
// in conv(X ∪ {mu}) directly.
Face brute_minimal_face(const Vector& mu, const Vector& nu, const bm::OutcomeSpace& space) {
  std::vector<Face> hits;
  for (const Face& f : test_support::all_subsets(space.size())) {
    if (f.empty() || !bm::is_face(f, space)) continue;
    Matrix gen(space.dim(), static_cast<bm::Index>(f.size()) + 1);
    gen.leftCols(static_cast<bm::Index>(f.size())) = space.members(f);
    gen.col(static_cast<bm::Index>(f.size())) = mu;
    if (bm::hull_membership(nu, gen, 1e-9).inside) hits.push_back(f);
  }
  std::vector<Face> minimal;
  for (const Face& f : hits) {
    bool has_smaller = false;
    for (const Face& g : hits) has_smaller = has_smaller || g.is_strict_subset_of(f);
    if (!has_smaller) minimal.push_back(f);
  }
  if (minimal.size() != 1) return Face{999};
  return minimal.front();
}

TEST(MinimalFace, AgreesWithBruteForceOnRandomInstances) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(2, 3);
  for (int trial = 0; trial < 40; ++trial) {
    const bm::Index n = dim(rng);
    const bm::Index m = std::uniform_int_distribution<int>(3, 6)(rng);
    const auto space = test_support::random_space(rng, n, m);
    const Vector mu = test_support::random_hull_point(rng, space);
    const Vector nu = test_support::random_hull_point(rng, space);
    const Face got = bm::minimal_face(mu, nu, space);
    EXPECT_EQ(got, brute_minimal_face(mu, nu, space)) << "trial " << trial;
    Matrix gen(n, static_cast<bm::Index>(got.size()) + 1);
    gen.leftCols(static_cast<bm::Index>(got.size())) = space.members(got);
    gen.col(static_cast<bm::Index>(got.size())) = mu;
    EXPECT_TRUE(bm::hull_membership(nu, gen, 1e-9).inside);
  }
}

TEST(WitnessCone, Examples) {
  const auto tri = test_support::obtuse_triangle();
  const auto sq = test_support::unit_square();
  EXPECT_TRUE(bm::witness_cone_contains(vec({-0.3, 0.3}), Face{1, 2}, tri));
  EXPECT_TRUE(bm::witness_cone_contains(vec({0, 0}), Face{1, 2}, tri));
  EXPECT_TRUE(bm::witness_cone_contains(vec({0, 0}), Face{0}, sq));
  EXPECT_FALSE(bm::witness_cone_contains(vec({0, -1}), Face{0}, sq));
  EXPECT_TRUE(bm::witness_cone_contains(vec({5, -7}), Face{}, sq));
}

TEST(WitnessCone, AntiMonotoneAndOrthogonal) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto space = bm::OutcomeSpace::hypercube(3);
  const auto faces = bm::enumerate_faces(space);
  for (int trial = 0; trial < 300; ++trial) {
    Vector u = vec({g(rng), g(rng), g(rng)});
    // Snap some coordinates to zero so larger faces get hit.
    for (int i = 0; i < 3; ++i)
      if (g(rng) > 0.3) u(i) = 0.0;
    for (const Face& x : faces) {
      if (!bm::witness_cone_contains(u, x, space)) continue;
      for (const Face& y : faces) {
        // K(X') ⊆ K(X) for X ⊆ X'.
        if (x.is_strict_subset_of(y) && bm::witness_cone_contains(u, y, space)) {
          EXPECT_TRUE(bm::witness_cone_contains(u, x, space));
        }
      }
      const Matrix v = bm::face_span_basis(x, space);
      EXPECT_LE((v.transpose() * u).norm(), 1e-12);
    }
  }
}

TEST(Projector, Examples) {
  const auto tri = test_support::obtuse_triangle();
  const Matrix p = bm::face_orthogonal_projector(Face{1, 2}, tri);
  Matrix expected(2, 2);
  expected << 0.5, -0.5, -0.5, 0.5;
  EXPECT_LE((p - expected).cwiseAbs().maxCoeff(), 1e-12);
  const auto sq = test_support::unit_square();
  EXPECT_LE((bm::face_orthogonal_projector(Face{0}, sq) - Matrix::Identity(2, 2)).norm(), 1e-15);
  EXPECT_LE((bm::face_orthogonal_projector(Face{}, sq) - Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(AffineIndependence, Examples) {
  EXPECT_TRUE(bm::affinely_independent(test_support::obtuse_triangle()));
  EXPECT_FALSE(bm::affinely_independent(test_support::unit_square()));
  EXPECT_TRUE(bm::affinely_independent(bm::OutcomeSpace::simplex(5)));
  EXPECT_EQ(bm::affine_dimension(bm::OutcomeSpace::simplex(5)), 4);
}

TEST(RelativeInterior, MaxMinWeight) {
  const auto sq = test_support::unit_square();
  EXPECT_TRUE(bm::in_relative_interior(vec({0.5, 0.5}), sq.points()));
  EXPECT_FALSE(bm::in_relative_interior(vec({0.5, 0.0}), sq.points()));
  EXPECT_TRUE(bm::in_relative_interior(vec({0.5, 0.0}), sq.members(Face{0, 1})));
  EXPECT_EQ(bm::max_min_weight(vec({2, 0}), sq.points()), -std::numeric_limits<double>::infinity());
}

TEST(FaceOfPoint, VertexEdgeInterior) {
  const auto sq = test_support::unit_square();
  EXPECT_EQ(bm::face_of_point(vec({1, 1}), sq), Face{3});
  EXPECT_EQ(bm::face_of_point(vec({1, 0.4}), sq), (Face{1, 3}));
  EXPECT_EQ(bm::face_of_point(vec({0.2, 0.4}), sq), sq.all());
}

}  // namespace
