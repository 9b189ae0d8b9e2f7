#include <doctest.h>

#include <Eigen/Dense>

#include "stpanel/spatial.hpp"
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

synth::DgpConfig spatial_cfg(double rho, double delta, std::uint64_t seed) {
    synth::DgpConfig cfg;
    cfg.N = 144; // 12x12 torus
    cfg.T = 8;
    cfg.beta.resize(2);
    cfg.beta << 1.5, -0.7;
    cfg.rho = rho;
    cfg.delta = delta;
    cfg.noise_sd = 0.3;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("DGP identity: y - rho*W*y - X*beta - FE - u = 0 at truth") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.5, 0.3, 99);
    auto [p, truth] = synth::gen_spatial(cfg, W);
    const auto& y = p.column("y").values;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(cfg.N, cfg.T);
    for (int k = 0; k < 2; ++k)
        rhs += truth.beta[k] * p.column("x" + std::to_string(k + 1)).values;
    for (int t = 0; t < cfg.T; ++t)
        rhs.col(t) += truth.alpha + Eigen::VectorXd::Constant(cfg.N, truth.gamma[t]) +
                      truth.u.col(t);
    Eigen::MatrixXd lhs = y - cfg.rho * W.apply(y);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("identical seeds give identical panels") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.4, 0.0, 7);
    auto [p1, t1] = synth::gen_spatial(cfg, W);
    auto [p2, t2] = synth::gen_spatial(cfg, W);
    CHECK(p1.column("y").values == p2.column("y").values);
    CHECK(p1.column("x1").values == p2.column("x1").values);
}

TEST_CASE("SLM with rho fixed at 0 reproduces the TWFE coefficients") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.0, 0.0, 21);
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialOptions opt;
    opt.fixed_rho = 0.0;
    SpatialFit sf = fit_slm(spec, p, W, opt);
    FitResult tf = fit_twfe(spec, p);
    CHECK((sf.beta - tf.beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("SLM recovers a moderate rho and matches its own grid audit") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.6, 0.0, 31);
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialFit fit = fit_slm(spec, p, W);
    CHECK(*fit.rho == doctest::Approx(0.6).epsilon(0.15));
    CHECK(std::fabs(fit.beta[0] - 1.5) < 0.1);
    CHECK(fit.sigma2 > 0);
    CHECK(std::isfinite(fit.loglik));
    // rho within 3 asymptotic SEs of truth (single seed smoke check)
    const double se_rho = std::sqrt(fit.vcov(fit.rho_index(), fit.rho_index()));
    CHECK(std::fabs(*fit.rho - 0.6) < 3.5 * se_rho);
}

TEST_CASE("SEM recovers beta under spatially independent noise") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.0, 0.0, 41);
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialFit fit = fit_sem(spec, p, W);
    FitResult tf = fit_twfe(spec, p);
    // delta should hover near zero and beta near the OLS oracle
    const double se_d = std::sqrt(fit.vcov(fit.delta_index(), fit.delta_index()));
    CHECK(std::fabs(*fit.delta) < 3.5 * se_d);
    CHECK((fit.beta - tf.beta).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("SARAR nests SLM and SEM") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.5, 0.3, 77);
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);

    SpatialOptions fix_d0;
    fix_d0.fixed_delta = 0.0;
    SpatialFit sarar_d0 = fit_sarar(spec, p, W, fix_d0);
    SpatialFit slm = fit_slm(spec, p, W);
    CHECK(std::fabs(*sarar_d0.rho - *slm.rho) < 1e-6);
    CHECK((sarar_d0.beta - slm.beta).cwiseAbs().maxCoeff() < 1e-6);

    SpatialOptions fix_r0;
    fix_r0.fixed_rho = 0.0;
    SpatialFit sarar_r0 = fit_sarar(spec, p, W, fix_r0);
    SpatialFit sem = fit_sem(spec, p, W);
    CHECK(std::fabs(*sarar_r0.delta - *sem.delta) < 1e-6);
    CHECK((sarar_r0.beta - sem.beta).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("SARAR recovers both parameters on a favourable instance") {
    SpatialWeights W = SpatialWeights::torus(12, 12);
    auto cfg = spatial_cfg(0.5, 0.3, 13);
    cfg.T = 10;
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialFit fit = fit_sarar(spec, p, W);
    const double se_r = std::sqrt(fit.vcov(fit.rho_index(), fit.rho_index()));
    const double se_d = std::sqrt(fit.vcov(fit.delta_index(), fit.delta_index()));
    CHECK(std::fabs(*fit.rho - 0.5) < 3.5 * se_r);
    CHECK(std::fabs(*fit.delta - 0.3) < 3.5 * se_d);
}

TEST_CASE("profile likelihood is maximal at the reported optimum (grid audit)") {
    SpatialWeights W = SpatialWeights::torus(10, 10);
    auto cfg = spatial_cfg(0.4, 0.0, 3);
    cfg.N = 100;
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialFit fit = fit_slm(spec, p, W);
    // recompute the concentrated likelihood over a coarse grid via fixed_rho fits
    const auto [lo, hi] = W.feasible_interval();
    for (int g = 1; g < 40; ++g) {
        const double rho = lo + (hi - lo) * g / 40.0;
        SpatialOptions opt;
        opt.fixed_rho = rho;
        SpatialFit at = fit_slm(spec, p, W, opt);
        CHECK(fit.loglik >= at.loglik - 1e-6);
    }
}

TEST_CASE("impacts: rho = 0 gives direct = beta, indirect = 0, exactly") {
    SpatialWeights W = SpatialWeights::torus(10, 10);
    auto cfg = spatial_cfg(0.5, 0.0, 5);
    cfg.N = 100;
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialOptions opt;
    opt.fixed_rho = 0.0;
    SpatialFit fit = fit_slm(spec, p, W, opt);
    ImpactsResult imp = impacts(fit, 200, 17);
    for (int k = 0; k < 2; ++k) {
        CHECK(imp.rows[k].direct == doctest::Approx(fit.beta[k]).epsilon(1e-12));
        CHECK(imp.rows[k].indirect == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(imp.rows[k].total == doctest::Approx(imp.rows[k].direct + imp.rows[k].indirect));
    }
}

TEST_CASE("impacts identity and SEM degenerate case") {
    SpatialWeights W = SpatialWeights::torus(10, 10);
    auto cfg = spatial_cfg(0.6, 0.0, 9);
    cfg.N = 100;
    auto [p, truth] = synth::gen_spatial(cfg, W);
    ModelSpec spec = basic_spec(2);
    SpatialFit fit = fit_slm(spec, p, W);
    ImpactsResult imp = impacts(fit, 150, 4242);
    for (const auto& r : imp.rows) {
        CHECK(r.total == doctest::Approx(r.direct + r.indirect).epsilon(1e-14));
        CHECK(r.se_direct > 0);
        CHECK(r.se_total > 0);
    }
    CHECK(imp.seed == 4242);
    // same seed reproduces the same SEs
    ImpactsResult imp2 = impacts(fit, 150, 4242);
    CHECK(imp.rows[0].se_total == imp2.rows[0].se_total);

    SpatialFit sem = fit_sem(spec, p, W);
    ImpactsResult semi = impacts(sem, 150, 1);
    for (int k = 0; k < 2; ++k) {
        CHECK(semi.rows[k].direct == doctest::Approx(sem.beta[k]));
        CHECK(semi.rows[k].indirect == 0.0);
    }
}

TEST_CASE("balance enforcement drops incomplete entities with a note") {
    SpatialWeights W = SpatialWeights::torus(10, 10);
    auto cfg = spatial_cfg(0.3, 0.0, 2);
    cfg.N = 100;
    auto [p, truth] = synth::gen_spatial(cfg, W);
    // knock out one cell of x1 for the first entity
    PanelDataset broken = p.subset([](const std::string&) { return true; });
    Column x1 = broken.column("x1");
    x1.missing(0, 3) = true;
    PanelDataset rebuilt(broken.entities(), broken.years());
    rebuilt.add_column("y", broken.column("y"));
    rebuilt.add_column("x1", std::move(x1));
    rebuilt.add_column("x2", broken.column("x2"));
    ModelSpec spec = basic_spec(2);
    SpatialFit fit = fit_slm(spec, rebuilt, W);
    CHECK(fit.entities.size() == 99);
    CHECK(fit.nobs == 99 * 8);
    REQUIRE(!fit.notes.empty());
    CHECK(fit.notes[0] == "1 entities dropped to balance the estimation sample");
}
