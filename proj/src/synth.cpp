#include "stpanel/synth.hpp"

#include <Eigen/SparseLU>
#include <cmath>

#include "stpanel/common.hpp"
#include "stpanel/rng.hpp"

namespace stpanel::synth {

std::vector<std::string> entity_names(int n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::string s = std::to_string(i);
        while (s.size() < 5) s.insert(s.begin(), '0');
        out.push_back(s);
    }
    return out;
}

namespace {

constexpr int kStartYear = 2000;

struct Core {
    std::vector<Eigen::MatrixXd> X; // K matrices, N x T
    Eigen::MatrixXd xb;             // X*beta, N x T
    Truth truth;
};

// Common pieces: regressors correlated with entity effects, FE draws.
Core gen_core(const DgpConfig& cfg, Rng& rng) {
    require(cfg.N >= 2 && cfg.T >= 3, "synth: need N >= 2, T >= 3");
    require(cfg.beta.size() >= 1, "synth: beta must have at least one entry");
    require(cfg.noise_sd > 0, "synth: noise_sd must be positive");
    const int K = static_cast<int>(cfg.beta.size());
    Core core;
    core.truth.beta = cfg.beta;
    core.truth.alpha.resize(cfg.N);
    core.truth.gamma.resize(cfg.T);
    for (int i = 0; i < cfg.N; ++i) core.truth.alpha[i] = cfg.fe_sd * rng.normal();
    for (int t = 0; t < cfg.T; ++t) core.truth.gamma[t] = cfg.fe_sd * rng.normal();

    const double c = cfg.x_alpha_corr;
    require(std::fabs(c) < 1.0, "synth: |x_alpha_corr| must be < 1");
    core.xb = Eigen::MatrixXd::Zero(cfg.N, cfg.T);
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd x(cfg.N, cfg.T);
        for (int i = 0; i < cfg.N; ++i) {
            const double a_std = cfg.fe_sd > 0 ? core.truth.alpha[i] / cfg.fe_sd : 0.0;
            for (int t = 0; t < cfg.T; ++t)
                x(i, t) = c * a_std + std::sqrt(1.0 - c * c) * rng.normal();
        }
        core.xb += cfg.beta[k] * x;
        core.X.push_back(std::move(x));
    }
    return core;
}

PanelDataset assemble(const DgpConfig& cfg, const std::vector<Eigen::MatrixXd>& X,
                      const Eigen::MatrixXd& Y) {
    std::vector<int> years;
    for (int t = 0; t < cfg.T; ++t) years.push_back(kStartYear + t);
    PanelDataset p(entity_names(cfg.N), years);
    Column yc;
    yc.values = Y;
    yc.missing = MaskXb::Constant(cfg.N, cfg.T, false);
    p.add_column("y", std::move(yc));
    for (std::size_t k = 0; k < X.size(); ++k) {
        Column c;
        c.values = X[k];
        c.missing = MaskXb::Constant(cfg.N, cfg.T, false);
        p.add_column("x" + std::to_string(k + 1), std::move(c));
    }
    return p;
}

} // namespace

std::pair<PanelDataset, Truth> gen_twfe(const DgpConfig& cfg) {
    Rng rng(cfg.seed);
    Core core = gen_core(cfg, rng);
    Eigen::MatrixXd Y(cfg.N, cfg.T);
    core.truth.u.resize(cfg.N, cfg.T);
    for (int i = 0; i < cfg.N; ++i)
        for (int t = 0; t < cfg.T; ++t) {
            const double eps = cfg.noise_sd * rng.normal();
            core.truth.u(i, t) = eps;
            Y(i, t) = core.xb(i, t) + core.truth.alpha[i] + core.truth.gamma[t] + eps;
        }
    return {assemble(cfg, core.X, Y), std::move(core.truth)};
}

std::pair<PanelDataset, Truth> gen_spatial(const DgpConfig& cfg, const SpatialWeights& W) {
    require(W.size() == cfg.N, "gen_spatial: W size must equal N");
    const auto [lo, hi] = W.feasible_interval();
    require(cfg.rho > lo && cfg.rho < hi, "gen_spatial: rho outside the feasible interval");
    require(cfg.delta > lo && cfg.delta < hi, "gen_spatial: delta outside the feasible interval");

    Rng rng(cfg.seed);
    Core core = gen_core(cfg, rng);
    core.truth.rho = cfg.rho;
    core.truth.delta = cfg.delta;

    const auto N = W.size();
    const Eigen::SparseMatrix<double> A = W.identity_minus(cfg.rho);
    const Eigen::SparseMatrix<double> B = W.identity_minus(cfg.delta);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> luA(A), luB(B);
    require(luA.info() == Eigen::Success && luB.info() == Eigen::Success,
            "gen_spatial: singular spatial filter");

    Eigen::MatrixXd Y(cfg.N, cfg.T);
    core.truth.u.resize(cfg.N, cfg.T);
    Eigen::VectorXd eps(N), rhs(N);
    for (int t = 0; t < cfg.T; ++t) {
        for (int i = 0; i < cfg.N; ++i) eps[i] = cfg.noise_sd * rng.normal();
        const Eigen::VectorXd u = cfg.delta != 0.0 ? luB.solve(eps).eval() : eps;
        core.truth.u.col(t) = u;
        rhs = core.xb.col(t) + core.truth.alpha + Eigen::VectorXd::Constant(N, core.truth.gamma[t]) + u;
        Y.col(t) = cfg.rho != 0.0 ? luA.solve(rhs).eval() : rhs;
    }
    // entity names follow W's ordering so the panel aligns with the operator
    std::vector<int> years;
    for (int t = 0; t < cfg.T; ++t) years.push_back(kStartYear + t);
    std::vector<std::string> names = W.order();
    std::vector<std::string> sorted_names = names;
    std::sort(sorted_names.begin(), sorted_names.end());
    require(sorted_names == names, "gen_spatial: W order must be sorted for panel alignment");
    PanelDataset p = assemble(cfg, core.X, Y);
    return {std::move(p), std::move(core.truth)};
}

std::pair<PanelDataset, Truth> gen_factor(const DgpConfig& cfg) {
    require(cfg.n_factors >= 1, "gen_factor: n_factors must be >= 1");
    Rng rng(cfg.seed);
    Core core = gen_core(cfg, rng);
    const int d = cfg.n_factors;
    Eigen::MatrixXd F(cfg.T, d), L(cfg.N, d);
    for (int l = 0; l < d; ++l)
        for (int t = 0; t < cfg.T; ++t) {
            const double s = static_cast<double>(t) / (cfg.T - 1);
            // smooth low-order trigonometric shapes, mutually distinct
            F(t, l) = l == 0 ? std::sin(2.0 * M_PI * s)
                             : std::cos((l + 1) * M_PI * s) + 0.3 * std::sin(M_PI * s * l);
        }
    for (int i = 0; i < cfg.N; ++i)
        for (int l = 0; l < d; ++l) L(i, l) = cfg.factor_scale * rng.normal();
    core.truth.factors = F;
    core.truth.loadings = L;

    Eigen::MatrixXd Y(cfg.N, cfg.T);
    core.truth.u.resize(cfg.N, cfg.T);
    const Eigen::MatrixXd common = L * F.transpose();
    for (int i = 0; i < cfg.N; ++i)
        for (int t = 0; t < cfg.T; ++t) {
            const double eps = cfg.noise_sd * rng.normal();
            core.truth.u(i, t) = eps;
            Y(i, t) = core.xb(i, t) + core.truth.alpha[i] + core.truth.gamma[t] +
                      common(i, t) + eps;
        }
    return {assemble(cfg, core.X, Y), std::move(core.truth)};
}

Blobs gen_blobs(int k, int n_per, double sigma, double sep, std::uint64_t seed, int dim) {
    require(k >= 2 && n_per >= 2, "gen_blobs: need k >= 2, n_per >= 2");
    require(sep > 0 && sigma > 0, "gen_blobs: sep and sigma must be positive");
    Rng rng(seed);
    // centers at the vertices of a scaled simplex: pairwise distance = sep
    if (dim <= 0) dim = k;
    require(dim >= k, "gen_blobs: dim must be at least k");
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, dim);
    for (int c = 0; c < k; ++c) centers(c, c) = sep / std::sqrt(2.0);
    Blobs b;
    b.points.resize(k * n_per, dim);
    for (int c = 0; c < k; ++c)
        for (int j = 0; j < n_per; ++j) {
            const int row = c * n_per + j;
            for (int q = 0; q < dim; ++q) b.points(row, q) = centers(c, q) + sigma * rng.normal();
            b.labels.push_back(c);
        }
    return b;
}

} // namespace stpanel::synth
