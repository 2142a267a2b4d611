#include "gmmq/fit_checks.hpp"
#include "gmmq/gradcheck.hpp"
#include "gmmq/loss.hpp"
#include "gmmq/model.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gmmq;

namespace {

TransitionBatch one_row(double s, int a, double g, double s_next, int a_next) {
  TransitionBatch b;
  b.states = Eigen::MatrixXd::Constant(1, 1, s);
  b.next_states = Eigen::MatrixXd::Constant(1, 1, s_next);
  b.losses = Eigen::VectorXd::Constant(1, g);
  b.actions = {a};
  b.next_actions = {a_next};
  b.trial = {0};
  b.episode = {0};
  return b;
}

GmmQf one_gaussian(double xi) {
  return GmmQf(WeightLayout::Shared, {0.0, 1.0}, Eigen::MatrixXd::Constant(1, 1, xi),
               {Eigen::Vector2d::Zero()}, {SpdMatrix::identity(2)});
}

gradcheck::Instance instance(WeightLayout layout, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gradcheck::random_instance(layout, rng);
}

}  // namespace

TEST(GaussEval, HandValues) {
  const Eigen::Vector2d m(0.5, -1.0);
  EXPECT_DOUBLE_EQ(gauss_eval(m, m, SpdMatrix::identity(2)), 1.0);
  EXPECT_NEAR(gauss_eval(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d::Zero(), SpdMatrix::identity(2)),
              0.3678794411714423, 1e-15);
  const SpdMatrix c(Eigen::MatrixXd(Eigen::Vector2d(1.0, 2.0).asDiagonal()));
  EXPECT_NEAR(gauss_eval(Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d::Zero(), c), std::exp(-1.5), 1e-15);
  EXPECT_NEAR(std::exp(-1.5), 0.2231301601484298, 1e-15);
}

TEST(QEval, SingleGaussianAtItsMean) {
  EXPECT_DOUBLE_EQ(q_eval(one_gaussian(2.0), Eigen::VectorXd::Zero(1), 0), 2.0);
}

TEST(QEval, ZeroWeightsGiveZero) {
  const auto inst = instance(WeightLayout::Shared, 1);
  const GmmQf zero(inst.model.layout(), inst.model.action_codes(),
                   Eigen::MatrixXd::Zero(1, 3), inst.model.means(), inst.model.covs());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(q_eval(zero, support::random_matrix(rng, 2, 1), static_cast<std::size_t>(i % 3)), 0.0);
  }
}

TEST(QEval, TwoGaussiansAreASum) {
  const SpdMatrix c1(Eigen::MatrixXd(Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal()));
  const SpdMatrix c2 = SpdMatrix::scaled_identity(3, 3.0);
  const Eigen::Vector3d m1(0.1, 0.2, -1.0), m2(-0.3, 0.0, 1.0);
  const GmmQf model(WeightLayout::Shared, {-1.0, 0.0, 1.0}, (Eigen::MatrixXd(1, 2) << 1.5, -0.7).finished(),
                    {m1, m2}, {c1, c2});
  const Eigen::Vector2d s(0.4, -0.2);
  const Eigen::Vector3d z(0.4, -0.2, 1.0);
  EXPECT_NEAR(q_eval(model, s, 2), 1.5 * gauss_eval(z, m1, c1) - 0.7 * gauss_eval(z, m2, c2), 1e-15);
}

TEST(QEval, PerActionUsesTheActionRow) {
  Eigen::MatrixXd w(3, 1);
  w << 1.0, 2.0, 3.0;
  const GmmQf model(WeightLayout::PerAction, {-1.0, 0.0, 1.0}, w, {Eigen::Vector2d::Zero()},
                    {SpdMatrix::identity(2)});
  EXPECT_DOUBLE_EQ(q_eval(model, Eigen::Vector2d::Zero(), 1), 2.0);
  EXPECT_THROW(q_eval(model, Eigen::Vector2d::Zero(), 3), std::out_of_range);
}

TEST(GmmQf, RejectsInconsistentShapes) {
  EXPECT_THROW(GmmQf(WeightLayout::Shared, {0.0, 1.0}, Eigen::MatrixXd::Zero(1, 2),
                     {Eigen::Vector2d::Zero()}, {SpdMatrix::identity(2)}),
               DimensionMismatch);
  EXPECT_THROW(GmmQf(WeightLayout::Shared, {0.0, 1.0}, Eigen::MatrixXd::Zero(1, 1),
                     {Eigen::Vector2d::Zero()}, {SpdMatrix::identity(3)}),
               DimensionMismatch);
  EXPECT_THROW(GmmQf(WeightLayout::PerAction, {0.0, 1.0}, Eigen::MatrixXd::Zero(1, 1),
                     {Eigen::Vector2d::Zero()}, {SpdMatrix::identity(2)}),
               DimensionMismatch);
}

TEST(BrLoss, ZeroWeightsGiveMeanSquaredLoss) {
  auto inst = instance(WeightLayout::Shared, 3);
  const GmmQf zero(WeightLayout::Shared, inst.model.action_codes(), Eigen::MatrixXd::Zero(1, 3),
                   inst.model.means(), inst.model.covs());
  EXPECT_NEAR(br_loss(zero, inst.batch, 0.9), inst.batch.losses.squaredNorm() / inst.batch.size(), 1e-15);
}

TEST(BrLoss, SingleRowHandValue) {
  EXPECT_DOUBLE_EQ(br_loss(one_gaussian(0.0), one_row(0.0, 0, 1.0, 0.0, 0), 0.5), 1.0);
}

TEST(BrLoss, ZeroLossesAndWeightsGiveZero) {
  auto inst = instance(WeightLayout::PerAction, 4);
  inst.batch.losses.setZero();
  const GmmQf zero(WeightLayout::PerAction, inst.model.action_codes(), Eigen::MatrixXd::Zero(3, 3),
                   inst.model.means(), inst.model.covs());
  EXPECT_EQ(br_loss(zero, inst.batch, 0.9), 0.0);
}

TEST(BrLoss, MatrixFormMatchesDirectSum) {
  for (auto layout : {WeightLayout::Shared, WeightLayout::PerAction}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto inst = instance(layout, seed);
      const double direct = br_loss(inst.model, inst.batch, inst.discount);
      EXPECT_GE(direct, 0.0);
      EXPECT_NEAR(br_loss_matrix_form(inst.model, inst.batch, inst.discount), direct, 1e-12 * direct);
    }
  }
}

TEST(BrLoss, InvalidDiscountAndEmptyBatchThrow) {
  const auto inst = instance(WeightLayout::Shared, 5);
  EXPECT_THROW(br_loss(inst.model, inst.batch, 1.0), std::invalid_argument);
  EXPECT_THROW(br_loss(inst.model, inst.batch, -0.1), std::invalid_argument);
  TransitionBatch empty;
  empty.states.resize(0, 2);
  empty.next_states.resize(0, 2);
  EXPECT_THROW(br_loss(inst.model, empty, 0.5), std::invalid_argument);
}

TEST(Workspace, ZeroWeightsResidualIsTheLoss) {
  const auto inst = instance(WeightLayout::Shared, 6);
  const GmmQf zero(WeightLayout::Shared, inst.model.action_codes(), Eigen::MatrixXd::Zero(1, 3),
                   inst.model.means(), inst.model.covs());
  const auto ws = build_workspace(zero, inst.batch, inst.discount);
  EXPECT_EQ(ws.residuals, inst.batch.losses);
}

TEST(Workspace, InputsAtTheMeanGiveZeroD) {
  // z_t = z'_t = m: both difference vectors vanish.
  const auto ws = build_workspace(one_gaussian(1.3), one_row(0.0, 0, 1.0, 0.0, 0), 0.7, true);
  EXPECT_EQ(ws.per_sample_d[0].norm(), 0.0);
  EXPECT_EQ(ws.mean_aggregates[0].norm(), 0.0);
}

TEST(Workspace, AggregatesMatchBruteForce) {
  for (auto layout : {WeightLayout::Shared, WeightLayout::PerAction}) {
    const auto inst = instance(layout, 7);
    const auto& m = inst.model;
    const auto ws = build_workspace(m, inst.batch, inst.discount, true);
    for (std::size_t k = 0; k < m.k(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      Eigen::VectorXd dbar = Eigen::VectorXd::Zero(m.dim());
      Eigen::MatrixXd bbar = Eigen::MatrixXd::Zero(m.dim(), m.dim());
      for (Eigen::Index t = 0; t < inst.batch.size(); ++t) {
        const auto a = static_cast<std::size_t>(inst.batch.actions[static_cast<std::size_t>(t)]);
        const auto b = static_cast<std::size_t>(inst.batch.next_actions[static_cast<std::size_t>(t)]);
        const Eigen::VectorXd z = m.input(inst.batch.states.row(t).transpose(), a);
        const Eigen::VectorXd zn = m.input(inst.batch.next_states.row(t).transpose(), b);
        double wz = gauss_eval(z, m.means()[k], m.covs()[k]);
        double wn = inst.discount * gauss_eval(zn, m.means()[k], m.covs()[k]);
        if (layout == WeightLayout::PerAction) {
          wz *= m.weights()(static_cast<Eigen::Index>(a), ki);
          wn *= m.weights()(static_cast<Eigen::Index>(b), ki);
        }
        const Eigen::VectorXd u = z - m.means()[k], un = zn - m.means()[k];
        const Eigen::VectorXd d = wn * un - wz * u;
        const Eigen::MatrixXd bt = wn * un * un.transpose() - wz * u * u.transpose();
        EXPECT_LT((ws.per_sample_b[k][static_cast<std::size_t>(t)] - bt).norm(), 1e-14);
        const double delta = inst.batch.losses(t) + inst.discount * q_eval(m, inst.batch.next_states.row(t).transpose(), b) -
                             q_eval(m, inst.batch.states.row(t).transpose(), a);
        dbar += delta * d;
        bbar += delta * bt;
      }
      dbar /= static_cast<double>(inst.batch.size());
      bbar /= static_cast<double>(inst.batch.size());
      EXPECT_LT((ws.mean_aggregates[k] - dbar).norm(), 1e-12);
      EXPECT_LT((ws.cov_aggregates[k] - bbar).norm(), 1e-12);
    }
  }
}

TEST(GradWeights, HandExample) {
  // alpha = 0.5, G(z) = 1, G(z') = 0.5: Delta = -0.75 and the gradient is -1.5.
  const double s_next = std::sqrt(std::log(2.0));
  const auto batch = one_row(0.0, 0, 1.0, s_next, 0);
  const auto ws = build_workspace(one_gaussian(0.0), batch, 0.5);
  EXPECT_NEAR(ws.design(0, 0), -0.75, 1e-15);
  EXPECT_NEAR(grad_weights(ws, one_gaussian(0.0))(0, 0), -1.5, 1e-15);
}

TEST(GradWeights, VanishesAtTheLeastSquaresSolution) {
  const auto inst = instance(WeightLayout::Shared, 8);
  const auto ws0 = build_workspace(inst.model, inst.batch, inst.discount);
  const Eigen::VectorXd xi = ws0.design.colPivHouseholderQr().solve(-inst.batch.losses);
  const GmmQf fitted(WeightLayout::Shared, inst.model.action_codes(), xi.transpose(),
                     inst.model.means(), inst.model.covs());
  const auto ws = build_workspace(fitted, inst.batch, inst.discount);
  EXPECT_LT(grad_weights(ws, fitted).norm(), 1e-12);
}

TEST(GradMeans, ZeroWeightAndIdentityCovariance) {
  auto inst = instance(WeightLayout::Shared, 9);
  Eigen::MatrixXd w = inst.model.weights();
  w(0, 1) = 0.0;
  std::vector<SpdMatrix> covs(3, SpdMatrix::identity(3));
  const GmmQf m(WeightLayout::Shared, inst.model.action_codes(), w, inst.model.means(), covs);
  const auto ws = build_workspace(m, inst.batch, inst.discount);
  const auto g = grad_means(ws, m);
  EXPECT_EQ(g[1].norm(), 0.0);
  EXPECT_LT((g[0] - 4.0 * w(0, 0) * ws.mean_aggregates[0]).norm(), 1e-14);
  const auto gc = grad_covs(ws, m, MetricKind::BuresWasserstein);
  EXPECT_EQ(gc[1].matrix().norm(), 0.0);
}

TEST(GradCovs, MetricFormulasAreRelated) {
  for (auto layout : {WeightLayout::Shared, WeightLayout::PerAction}) {
    const auto inst = instance(layout, 10);
    const auto ws = build_workspace(inst.model, inst.batch, inst.discount);
    const auto ai = grad_covs(ws, inst.model, MetricKind::AffineInvariant);
    const auto bw = grad_covs(ws, inst.model, MetricKind::BuresWasserstein);
    for (std::size_t k = 0; k < inst.model.k(); ++k) {
      const Eigen::MatrixXd& inv = ws.cov_inverses[k];
      const Eigen::MatrixXd expect = 2.0 * (inv * ai[k].matrix() + ai[k].matrix() * inv);
      EXPECT_LT((bw[k].matrix() - expect).norm(), 1e-12 * (1.0 + expect.norm()));
      EXPECT_EQ((bw[k].matrix() - bw[k].matrix().transpose()).norm(), 0.0);
    }
  }
}

TEST(FullGradient, EqualsPiecewiseBlocksAndIsDeterministic) {
  const auto inst = instance(WeightLayout::PerAction, 11);
  const auto g1 = full_gradient(inst.model, inst.batch, inst.discount, MetricKind::AffineInvariant);
  const auto g2 = full_gradient(inst.model, inst.batch, inst.discount, MetricKind::AffineInvariant);
  const auto ws = build_workspace(inst.model, inst.batch, inst.discount);
  EXPECT_EQ(g1.weight_dir, grad_weights(ws, inst.model));
  EXPECT_EQ(g1.weight_dir, g2.weight_dir);
  const auto gm = grad_means(ws, inst.model);
  const auto gc = grad_covs(ws, inst.model, MetricKind::AffineInvariant);
  for (std::size_t k = 0; k < inst.model.k(); ++k) {
    EXPECT_EQ(g1.mean_dirs[k], gm[k]);
    EXPECT_EQ(g1.cov_dirs[k].matrix(), gc[k].matrix());
    EXPECT_EQ(g1.cov_dirs[k].matrix(), g2.cov_dirs[k].matrix());
  }
}

TEST(GradCheck, AllTwelveCellsPass) {
  gradcheck::Options opt;
  opt.instances = 10;
  const auto report = gradcheck::run(opt);
  ASSERT_EQ(report.cells.size(), 12u);
  for (const auto& c : report.cells) {
    EXPECT_LT(c.max_rel_error, 1e-6) << to_string(c.metric) << ' ' << to_string(c.layout) << ' '
                                     << gradcheck::to_string(c.block);
  }
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, CorruptedSignFails) {
  gradcheck::Options opt;
  opt.instances = 2;
  opt.corrupt_sign = true;
  const auto report = gradcheck::run(opt);
  EXPECT_FALSE(report.passed());
  for (const auto& c : report.cells) EXPECT_GT(c.max_rel_error, 1.0);
}

TEST(ParamCount, ModelCount) {
  EXPECT_EQ(param_count(one_gaussian(0.0)), 1u + 2u + 3u);
}

TEST(Fit, ZeroDiscountLossIsTrainingMse) {
  const Eigen::MatrixXd pts = fit::square_grid(5, -1.0, 1.0);
  const auto batch = fit::regression_batch(pts);
  const auto model = fit::initial_fit_model(pts, 3, 4, 2.0);
  double mse = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double r = fit::target(pts(i, 0), pts(i, 1)) - q_eval(model, pts.row(i).transpose(), 0);
    mse += r * r;
  }
  mse /= static_cast<double>(pts.rows());
  EXPECT_NEAR(fit::training_mse(model, batch), mse, 1e-14);
}

TEST(Fit, InitialMeansAreSeededGridPoints) {
  const Eigen::MatrixXd pts = fit::square_grid(15, -2.0, 2.0);
  const auto a = fit::initial_fit_model(pts, 16, 9, 4.0);
  const auto b = fit::initial_fit_model(pts, 16, 9, 4.0);
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_EQ(a.means()[k], b.means()[k]);
    EXPECT_NEAR(a.covs()[k].matrix()(0, 0), 1.0, 1e-15);
  }
}

TEST(Fit, MseStrictlyDecreasesWithK) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    for (auto metric : {MetricKind::AffineInvariant, MetricKind::BuresWasserstein}) {
      const auto r = fit::approximation_trend(seed, {1, 4, 16}, 300, metric);
      ASSERT_EQ(r.mse.size(), 3u);
      EXPECT_TRUE(r.strictly_decreasing)
          << "seed " << seed << ": " << r.mse[0] << " " << r.mse[1] << " " << r.mse[2];
    }
  }
}

TEST(Fit, TwoDistinctCovarianceBasisIsLinearlyIndependent) {
  const auto g = fit::gram_check();
  EXPECT_LT(g.final_mse, g.initial_mse);
  EXPECT_GT(g.inverse_condition, 1e-8);
}
