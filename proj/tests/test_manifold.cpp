#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"
#include "gmmq/product.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gmmq;
using gmmq::support::frob;
using gmmq::support::random_spd;
using gmmq::support::random_sym;

namespace {

bool is_spd(const Eigen::MatrixXd& a) {
  if ((a - a.transpose()).cwiseAbs().maxCoeff() != 0.0) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  return es.eigenvalues().minCoeff() > 0.0;
}

GmmQf identity_model(Eigen::Index d, std::size_t k) {
  std::vector<Eigen::VectorXd> means(k, Eigen::VectorXd::Zero(d));
  std::vector<SpdMatrix> covs(k, SpdMatrix::identity(d));
  return GmmQf(WeightLayout::Shared, {-1.0, 1.0}, Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(k)),
               means, covs);
}

ProductTangent random_tangent(std::mt19937_64& rng, const GmmQf& m) {
  ProductTangent t = ProductTangent::zero(m);
  t.weight_dir = gmmq::support::random_matrix(rng, 1, static_cast<Eigen::Index>(m.k()));
  for (auto& v : t.mean_dirs) v = gmmq::support::random_matrix(rng, m.dim(), 1);
  for (auto& c : t.cov_dirs) c = random_sym(rng, m.dim());
  return t;
}

}  // namespace

TEST(SpdMatrix, SymmetrizesOnConstruction) {
  Eigen::Matrix2d a;
  a << 2.0, 0.5, 0.3, 1.0;
  const SpdMatrix c{Eigen::MatrixXd(a)};
  EXPECT_EQ((c.matrix() - c.matrix().transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(c.matrix()(0, 1), 0.4);
}

TEST(SpdMatrix, RejectsIndefiniteAndNearSingular) {
  EXPECT_THROW(SpdMatrix(Eigen::MatrixXd(Eigen::Vector2d(1.0, -1.0).asDiagonal())), NotPositiveDefinite);
  EXPECT_THROW(SpdMatrix(Eigen::MatrixXd(Eigen::Vector2d(1.0, 1e-13).asDiagonal())), NotPositiveDefinite);
  EXPECT_NO_THROW(SpdMatrix(Eigen::MatrixXd(Eigen::Vector2d(1.0, 1e-11).asDiagonal())));
  EXPECT_THROW(SpdMatrix(Eigen::MatrixXd::Ones(2, 3)), DimensionMismatch);
}

TEST(SpdMatrix, CachedFunctionsAreConsistent) {
  std::mt19937_64 rng(3);
  const SpdMatrix c = random_spd(rng, 4);
  EXPECT_LT((c.inverse() * c.matrix() - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
  EXPECT_LT((c.sqrt() * c.sqrt() - c.matrix()).norm(), 1e-12);
  EXPECT_LT((c.inverse_sqrt() * c.matrix() * c.inverse_sqrt() - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
}

TEST(Lyapunov, IdentityHalvesTheArgument) {
  std::mt19937_64 rng(1);
  const SymTangent g = random_sym(rng, 3);
  const SymTangent l = lyapunov_solve(SpdMatrix::identity(3), g);
  EXPECT_LT((l.matrix() - 0.5 * g.matrix()).norm(), 1e-15);
}

TEST(Lyapunov, DiagonalHandExample) {
  Eigen::Matrix2d g;
  g << 2.0, 3.0, 3.0, 4.0;
  const SymTangent l = lyapunov_solve(SpdMatrix(Eigen::MatrixXd(Eigen::Vector2d(1.0, 2.0).asDiagonal())),
                                      SymTangent(Eigen::MatrixXd(g)));
  EXPECT_LT((l.matrix() - Eigen::MatrixXd::Ones(2, 2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Lyapunov, ResidualOnRandomInputs) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index d = 1 + i % 5;
    const SpdMatrix c = random_spd(rng, d);
    const SymTangent g = random_sym(rng, d);
    const Eigen::MatrixXd l = lyapunov_solve(c, g).matrix();
    EXPECT_LT((c.matrix() * l + l * c.matrix() - g.matrix()).norm() / g.matrix().norm(), 1e-10);
  }
}

TEST(Lyapunov, DimensionMismatchThrows) {
  EXPECT_THROW(lyapunov_solve(SpdMatrix::identity(2), SymTangent::zero(3)), DimensionMismatch);
}

TEST(SpdInner, AffineInvariantAtIdentityIsFrobenius) {
  std::mt19937_64 rng(4);
  const SymTangent a = random_sym(rng, 3), b = random_sym(rng, 3);
  EXPECT_NEAR(spd_inner(SpdMatrix::identity(3), a, b, MetricKind::AffineInvariant),
              frob(a.matrix(), b.matrix()), 1e-13);
}

TEST(SpdInner, BuresWassersteinHandExample) {
  // L_I(I) = I / 2, so 1/2 tr(L_I(I) I) = 1/2 tr(I_2 / 2) = 1/2.
  const SymTangent i2(Eigen::MatrixXd::Identity(2, 2));
  EXPECT_DOUBLE_EQ(spd_inner(SpdMatrix::identity(2), i2, i2, MetricKind::BuresWasserstein), 0.5);
}

TEST(SpdInner, SymmetricAndPositive) {
  std::mt19937_64 rng(5);
  for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
    for (int i = 0; i < 50; ++i) {
      const SpdMatrix c = random_spd(rng, 3);
      const SymTangent a = random_sym(rng, 3), b = random_sym(rng, 3);
      EXPECT_NEAR(spd_inner(c, a, b, metric), spd_inner(c, b, a, metric),
                  1e-10 * (1.0 + std::abs(spd_inner(c, a, b, metric))));
      EXPECT_GT(spd_inner(c, a, a, metric), 0.0);
    }
  }
}

TEST(SpdExp, ZeroTangentReturnsPointExactly) {
  std::mt19937_64 rng(6);
  const SpdMatrix c = random_spd(rng, 3);
  for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
    const auto r = spd_exp(c, SymTangent::zero(3), metric);
    EXPECT_EQ(r.point.matrix(), c.matrix());
    EXPECT_FALSE(r.repaired);
  }
}

TEST(SpdExp, AffineInvariantAtIdentityIsMatrixExponential) {
  const SymTangent g(Eigen::MatrixXd(Eigen::Vector2d(std::log(2.0), std::log(3.0)).asDiagonal()));
  const auto r = spd_exp(SpdMatrix::identity(2), g, MetricKind::AffineInvariant);
  EXPECT_LT((r.point.matrix() - Eigen::MatrixXd(Eigen::Vector2d(2.0, 3.0).asDiagonal())).norm(), 1e-14);
}

TEST(SpdExp, BuresWassersteinHandExample) {
  const auto r = spd_exp(SpdMatrix::identity(2), SymTangent(Eigen::MatrixXd::Identity(2, 2)),
                         MetricKind::BuresWasserstein);
  EXPECT_LT((r.point.matrix() - 2.25 * Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-14);
}

TEST(SpdExp, BuresWassersteinRepairIsFlagged) {
  // L_I(-2I) = -I, so (L + I) C (L + I) = 0 before the eigenvalue floor.
  const auto r = spd_exp(SpdMatrix::identity(2), SymTangent(-2.0 * Eigen::MatrixXd::Identity(2, 2)),
                         MetricKind::BuresWasserstein);
  EXPECT_TRUE(r.repaired);
  EXPECT_TRUE(is_spd(r.point.matrix()));
  EXPECT_GE(r.point.eigenvalues().minCoeff(), kSpdClampFloor);
}

TEST(SpdExp, ClosureOverRandomDraws) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> radius(0.0, 5.0);
  for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
    for (int i = 0; i < 1000; ++i) {
      const Eigen::Index d = 1 + i % 5;
      const SpdMatrix c = random_spd(rng, d);
      Eigen::MatrixXd g = random_sym(rng, d).matrix();
      g *= radius(rng) / g.norm();
      const auto r = spd_exp(c, SymTangent(g), metric);
      ASSERT_TRUE(is_spd(r.point.matrix()));
      ASSERT_NO_THROW(SpdMatrix(r.point.matrix()));
    }
  }
}

TEST(ProductInner, ZeroTangentAndEuclideanAtIdentity) {
  std::mt19937_64 rng(8);
  const GmmQf m = identity_model(3, 2);
  const ProductTangent a = random_tangent(rng, m), b = random_tangent(rng, m);
  EXPECT_EQ(product_inner(m, a, ProductTangent::zero(m), MetricKind::AffineInvariant), 0.0);
  double flat = frob(a.weight_dir, b.weight_dir);
  for (std::size_t k = 0; k < 2; ++k) {
    flat += a.mean_dirs[k].dot(b.mean_dirs[k]) + frob(a.cov_dirs[k].matrix(), b.cov_dirs[k].matrix());
  }
  EXPECT_NEAR(product_inner(m, a, b, MetricKind::AffineInvariant), flat, 1e-12);
}

TEST(ProductInner, SymmetricBilinearPositive) {
  std::mt19937_64 rng(9);
  std::vector<Eigen::VectorXd> means(2, Eigen::VectorXd::Zero(3));
  const GmmQf m(WeightLayout::Shared, {-1.0, 1.0}, Eigen::MatrixXd::Ones(1, 2), means,
                {random_spd(rng, 3), random_spd(rng, 3)});
  for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
    const ProductTangent a = random_tangent(rng, m), b = random_tangent(rng, m), c = random_tangent(rng, m);
    const double ab = product_inner(m, a, b, metric);
    EXPECT_NEAR(ab, product_inner(m, b, a, metric), 1e-10 * (1 + std::abs(ab)));
    ProductTangent combo = 2.0 * a;
    combo += -3.0 * c;
    EXPECT_NEAR(product_inner(m, combo, b, metric),
                2.0 * ab - 3.0 * product_inner(m, c, b, metric), 1e-9 * (1 + std::abs(ab)));
    EXPECT_GT(product_inner(m, a, a, metric), 0.0);
  }
}

TEST(ProductInner, HandBuiltNormSquared) {
  // One Gaussian in 2-D, C = diag(2, 1): the AffI part is sum_ij G_ij^2 / (c_i c_j).
  const GmmQf m(WeightLayout::PerAction, {-1.0, 1.0}, Eigen::MatrixXd::Zero(2, 1),
                {Eigen::Vector2d(0.0, 0.0)}, {SpdMatrix(Eigen::MatrixXd(Eigen::Vector2d(2.0, 1.0).asDiagonal()))});
  ProductTangent t = ProductTangent::zero(m);
  t.weight_dir << 1.0, 2.0;
  t.mean_dirs[0] << 3.0, 0.0;
  Eigen::Matrix2d g;
  g << 2.0, 1.0, 1.0, 1.0;
  t.cov_dirs[0] = SymTangent(Eigen::MatrixXd(g));
  // 1 + 4 + 9 + (4/4 + 2 * 1/2 + 1/1) = 17.
  EXPECT_NEAR(product_inner(m, t, t, MetricKind::AffineInvariant), 17.0, 1e-14);
  EXPECT_NEAR(product_norm(m, t, MetricKind::AffineInvariant), std::sqrt(17.0), 1e-14);
}

TEST(Retract, ZeroStepIsIdentity) {
  std::mt19937_64 rng(10);
  const GmmQf m = identity_model(3, 2);
  const auto r = retract(m, random_tangent(rng, m), 0.0, MetricKind::BuresWasserstein);
  EXPECT_EQ(r.point.weights(), m.weights());
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(r.point.means()[k], m.means()[k]);
    EXPECT_EQ(r.point.covs()[k].matrix(), m.covs()[k].matrix());
  }
}

TEST(Retract, MeansOnlyTangentTranslates) {
  std::mt19937_64 rng(11);
  const GmmQf m = identity_model(3, 2);
  ProductTangent t = ProductTangent::zero(m);
  t.mean_dirs[1] = Eigen::Vector3d(1.0, -2.0, 0.5);
  const auto r = retract(m, t, 0.5, MetricKind::AffineInvariant);
  EXPECT_EQ(r.point.means()[1], Eigen::VectorXd(Eigen::Vector3d(0.5, -1.0, 0.25)));
  EXPECT_EQ(r.point.means()[0], m.means()[0]);
  EXPECT_EQ(r.point.covs()[1].matrix(), m.covs()[1].matrix());
}

TEST(Retract, FirstOrderDefectDecaysQuadratically) {
  std::mt19937_64 rng(12);
  std::vector<Eigen::VectorXd> means(2, Eigen::VectorXd::Zero(3));
  const GmmQf m(WeightLayout::Shared, {-1.0, 1.0}, Eigen::MatrixXd::Ones(1, 2), means,
                {random_spd(rng, 3), random_spd(rng, 3)});
  const ProductTangent t = random_tangent(rng, m);
  for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
    std::vector<double> defects;
    for (double step : {1e-2, 1e-3, 1e-4}) {
      const GmmQf r = retract(m, t, step, metric).point;
      double sq = (r.weights() - (m.weights() + step * t.weight_dir)).squaredNorm();
      for (std::size_t k = 0; k < 2; ++k) {
        sq += (r.means()[k] - (m.means()[k] + step * t.mean_dirs[k])).squaredNorm();
        sq += (r.covs()[k].matrix() - (m.covs()[k].matrix() + step * t.cov_dirs[k].matrix())).squaredNorm();
      }
      defects.push_back(std::sqrt(sq));
    }
    for (std::size_t i = 1; i < defects.size(); ++i) {
      const double ratio = defects[i - 1] / defects[i];
      EXPECT_GT(ratio, 50.0) << to_string(metric);
      EXPECT_LT(ratio, 200.0) << to_string(metric);
    }
  }
}

TEST(Retract, CovariancesStaySpd) {
  std::mt19937_64 rng(13);
  const GmmQf m = identity_model(3, 2);
  for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
    for (int i = 0; i < 1000; ++i) {
      const auto r = retract(m, random_tangent(rng, m), 1.0, metric);
      for (const auto& c : r.point.covs()) ASSERT_TRUE(is_spd(c.matrix()));
    }
  }
}

TEST(MetricKind, StringRoundTrip) {
  EXPECT_EQ(to_string(MetricKind::AffineInvariant), "affi");
  EXPECT_EQ(to_string(MetricKind::BuresWasserstein), "bw");
  EXPECT_EQ(metric_from_string("bw"), MetricKind::BuresWasserstein);
  EXPECT_THROW(metric_from_string("euclid"), std::invalid_argument);
}
