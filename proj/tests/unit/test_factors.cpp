#include <doctest.h>

#include <Eigen/Dense>

#include "stpanel/factors.hpp"
#include "stpanel/synth.hpp"
#include "stpanel/twfe.hpp"

using namespace stpanel;

namespace {

ModelSpec basic_spec(int K) {
    ModelSpec spec;
    spec.name = "synthetic";
    spec.dependent = {"y", BaseTransform::Level, 0, "", true};
    for (int k = 1; k <= K; ++k)
        spec.regressors.push_back({"x" + std::to_string(k), BaseTransform::Level, 0, "", true});
    return spec;
}

synth::DgpConfig factor_cfg(int d, std::uint64_t seed) {
    synth::DgpConfig cfg;
    cfg.N = 80;
    cfg.T = 18;
    cfg.beta.resize(1);
    cfg.beta << -0.05;
    cfg.n_factors = d;
    cfg.factor_scale = 1.0;
    cfg.noise_sd = 0.1;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("d = 0 reproduces the TWFE fit exactly") {
    auto cfg = factor_cfg(1, 5);
    auto [p, truth] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    FactorFit ff = fit_htt(spec, p, 0);
    FitResult tf = fit_twfe(spec, p);
    CHECK((ff.beta - tf.beta).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ff.nobs == tf.nobs);
}

TEST_CASE("one smooth factor: beta recovery and factor correlation") {
    auto cfg = factor_cfg(1, 11);
    auto [p, truth] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    FactorFit fit = fit_htt(spec, p, 1);
    CHECK(fit.converged);
    CHECK(std::fabs(fit.beta[0] - (-0.05)) < 3.5 * fit.se[0]);
    // fitted factor tracks the true one up to sign
    Eigen::VectorXd f_true = truth.factors.col(0);
    Eigen::VectorXd f_fit = fit.factors.col(0);
    f_true.array() -= f_true.mean();
    f_fit.array() -= f_fit.mean();
    const double corr =
        f_true.dot(f_fit) / std::sqrt(f_true.squaredNorm() * f_fit.squaredNorm());
    CHECK(std::fabs(corr) > 0.95);
}

TEST_CASE("normalization: F'F = T*I and L'L diagonal") {
    auto cfg = factor_cfg(2, 23);
    auto [p, truth] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    FactorFit fit = fit_htt(spec, p, 2);
    const auto T = static_cast<double>(fit.years.size());
    Eigen::MatrixXd FtF = fit.factors.transpose() * fit.factors;
    CHECK((FtF - T * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
    Eigen::MatrixXd LtL = fit.loadings.transpose() * fit.loadings;
    CHECK(std::fabs(LtL(0, 1)) < 1e-8);
}

TEST_CASE("objective is monotone non-increasing") {
    auto cfg = factor_cfg(1, 31);
    auto [p, truth] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    FactorFit fit = fit_htt(spec, p, 1);
    REQUIRE(fit.objective_path.size() >= 2);
    for (std::size_t i = 1; i < fit.objective_path.size(); ++i)
        CHECK(fit.objective_path[i] <= fit.objective_path[i - 1] * (1.0 + 1e-12));
}

TEST_CASE("smoothed factors are no rougher than plain PCA factors") {
    auto cfg = factor_cfg(1, 41);
    cfg.noise_sd = 0.3;
    auto [p, truth] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    FactorFit fit = fit_htt(spec, p, 1);
    // plain PCA factor of the defactored-residual-plus-component matrix
    const auto T = static_cast<Eigen::Index>(fit.years.size());
    Eigen::MatrixXd R = fit.residual_mat + fit.loadings * fit.factors.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R.transpose() * R);
    Eigen::VectorXd f_pca = std::sqrt(static_cast<double>(T)) * es.eigenvectors().col(T - 1);
    auto roughness = [T](const Eigen::VectorXd& f) {
        double s = 0;
        for (Eigen::Index t = 0; t + 2 < T; ++t) {
            const double d2 = f[t] - 2 * f[t + 1] + f[t + 2];
            s += d2 * d2;
        }
        return s;
    };
    CHECK(roughness(fit.factors.col(0)) <= roughness(f_pca) + 1e-9);
}

TEST_CASE("d too large is rejected") {
    auto cfg = factor_cfg(1, 3);
    cfg.N = 10;
    cfg.T = 6;
    auto [p, truth] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    CHECK_THROWS_AS(fit_htt(spec, p, 6), Error);
}

TEST_CASE("factor count selection: white noise picks 0, two factors pick 2") {
    ModelSpec spec = basic_spec(1);
    {
        synth::DgpConfig cfg = factor_cfg(0, 7);
        cfg.n_factors = 0;
        cfg.noise_sd = 0.5;
        auto [p, truth] = synth::gen_twfe(cfg);
        FactorSelection sel = select_factors(spec, p, 3);
        CHECK(sel.chosen_aic == 0);
        CHECK(sel.chosen_bic == 0);
    }
    {
        synth::DgpConfig cfg = factor_cfg(2, 19);
        cfg.factor_scale = 2.0;
        auto [p, truth] = synth::gen_factor(cfg);
        FactorSelection sel = select_factors(spec, p, 4);
        CHECK(sel.chosen_aic == 2);
        CHECK(sel.chosen_bic == 2);
        CHECK(sel.elbow == 2);
    }
}

TEST_CASE("identical inputs give identical fits") {
    auto cfg = factor_cfg(1, 99);
    auto [p1, t1] = synth::gen_factor(cfg);
    auto [p2, t2] = synth::gen_factor(cfg);
    ModelSpec spec = basic_spec(1);
    FactorFit a = fit_htt(spec, p1, 1);
    FactorFit b = fit_htt(spec, p2, 1);
    CHECK(a.beta == b.beta);
    CHECK(a.smoothing == b.smoothing);
}
