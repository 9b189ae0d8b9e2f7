#include "stpanel/spatial.hpp"

#include <Eigen/QR>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>

#include "stpanel/common.hpp"
#include "stpanel/rng.hpp"
#include "stpanel/stats.hpp"

namespace stpanel {

void demean_two_way(Eigen::MatrixXd& M) {
    const double grand = M.mean();
    const Eigen::VectorXd row_means = M.rowwise().mean();
    const Eigen::RowVectorXd col_means = M.colwise().mean();
    M.colwise() -= row_means;
    M.rowwise() -= col_means;
    M.array() += grand;
}

BalancedPanel balance_panel(const PanelDataset& p, const std::string& dependent,
                            const std::vector<std::string>& regressors) {
    std::vector<const Column*> cols{&p.column(dependent)};
    for (const auto& r : regressors) cols.push_back(&p.column(r));
    const auto N = p.n_entities();
    const auto T = p.n_years();

    MaskXb cell_ok = MaskXb::Constant(N, T, true);
    for (const auto* c : cols) cell_ok = cell_ok && !c->missing;

    // usable years: at least two complete entities
    std::vector<int> year_ids;
    for (Eigen::Index t = 0; t < T; ++t)
        if (cell_ok.col(t).count() >= 2) year_ids.push_back(static_cast<int>(t));
    require(!year_ids.empty(), "spatial/factor balance: no usable years");

    BalancedPanel bp;
    std::vector<int> ent_ids;
    for (Eigen::Index i = 0; i < N; ++i) {
        bool full = true;
        for (int t : year_ids)
            if (!cell_ok(i, t)) {
                full = false;
                break;
            }
        if (full)
            ent_ids.push_back(static_cast<int>(i));
        else
            bp.dropped.push_back(p.entities()[i]);
    }
    require(ent_ids.size() >= 2, "spatial/factor balance: fewer than 2 complete entities");

    const auto Nb = static_cast<Eigen::Index>(ent_ids.size());
    const auto Tb = static_cast<Eigen::Index>(year_ids.size());
    bp.Y.resize(Nb, Tb);
    for (std::size_t k = 0; k < regressors.size(); ++k) bp.X.emplace_back(Nb, Tb);
    for (Eigen::Index ii = 0; ii < Nb; ++ii) {
        bp.entities.push_back(p.entities()[ent_ids[ii]]);
        for (Eigen::Index tt = 0; tt < Tb; ++tt) {
            bp.Y(ii, tt) = cols[0]->values(ent_ids[ii], year_ids[tt]);
            for (std::size_t k = 0; k < regressors.size(); ++k)
                bp.X[k](ii, tt) = cols[k + 1]->values(ent_ids[ii], year_ids[tt]);
        }
    }
    for (int t : year_ids) bp.years.push_back(p.years()[t]);
    return bp;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Prepared {
    // demeaned data, flattened column-major by year
    std::string dependent;
    Eigen::VectorXd y, Wy, WWy;
    Eigen::MatrixXd X, WX; // n x K
    Eigen::MatrixXd Yd;    // N x T demeaned outcome
    std::vector<Eigen::MatrixXd> Xd;
    std::shared_ptr<const SpatialWeights> W;
    std::vector<std::string> entities;
    std::vector<int> years;
    std::vector<std::string> dropped;
    std::vector<std::string> names;
    std::vector<int> horizons;
    Eigen::Index N = 0, T = 0;
    long long n = 0;
    int K = 0;
};

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Prepared prepare(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                 bool need_wwy) {
    ResolvedModel rm = materialize(spec, p);
    Prepared pr;
    pr.dependent = rm.dependent;
    pr.names = rm.regressors;
    pr.horizons = rm.horizons;
    BalancedPanel bp = balance_panel(rm.panel, rm.dependent, rm.regressors);
    pr.entities = bp.entities;
    pr.years = bp.years;
    pr.dropped = bp.dropped;
    pr.N = static_cast<Eigen::Index>(bp.entities.size());
    pr.T = static_cast<Eigen::Index>(bp.years.size());
    pr.K = static_cast<int>(rm.regressors.size());
    pr.n = static_cast<long long>(pr.N) * pr.T;

    if (W.order() == bp.entities)
        pr.W = std::make_shared<SpatialWeights>(W);
    else
        pr.W = std::make_shared<SpatialWeights>(W.subset(bp.entities));

    demean_two_way(bp.Y);
    pr.Yd = bp.Y;
    pr.y = flatten(bp.Y);
    Eigen::MatrixXd WYmat = pr.W->apply(bp.Y);
    pr.Wy = flatten(WYmat);
    if (need_wwy) pr.WWy = flatten(pr.W->apply(WYmat));

    pr.X.resize(pr.n, pr.K);
    pr.WX.resize(pr.n, pr.K);
    pr.Xd = bp.X;
    for (int k = 0; k < pr.K; ++k) {
        demean_two_way(pr.Xd[k]);
        pr.X.col(k) = flatten(pr.Xd[k]);
        pr.WX.col(k) = flatten(pr.W->apply(pr.Xd[k]));
    }
    return pr;
}

double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol) {
    const double gr = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

// W * (I - p W)^{-1} as a dense matrix via N sparse solves.
Eigen::MatrixXd dense_WAinv(const SpatialWeights& W, double p) {
    const auto N = W.size();
    require(N <= 8000, "spatial information matrix: N too large for the dense route");
    const Eigen::SparseMatrix<double> A = W.identity_minus(p);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
    require(lu.info() == Eigen::Success, "spatial: failed to factorize I - p*W");
    Eigen::MatrixXd Ainv = lu.solve(Eigen::MatrixXd::Identity(N, N));
    return W.matrix() * Ainv;
}

struct FitStats {
    double loglik;
    double sigma2;
};

void finalize_common(SpatialFit& fit, const Prepared& pr, const ModelSpec& spec,
                     const std::vector<int>& horizons, double loglik, int n_spatial) {
    fit.model_name = spec.name;
    fit.dependent = pr.dependent;
    fit.names.clear();
    fit.entities = pr.entities;
    fit.years = pr.years;
    fit.nobs = pr.n;
    fit.K = pr.K;
    fit.horizons = horizons;
    fit.weights = pr.W;
    fit.loglik = loglik;
    const double p_params = pr.K + static_cast<double>(pr.N) + (static_cast<double>(pr.T) - 1) +
                            n_spatial + 1;
    fit.aic = -2.0 * loglik + 2.0 * p_params;
    fit.bic = -2.0 * loglik + std::log(static_cast<double>(pr.n)) * p_params;
    if (!pr.dropped.empty())
        fit.notes.push_back(std::to_string(pr.dropped.size()) +
                            " entities dropped to balance the estimation sample");
}

void check_interior(double v, double lo, double hi, const char* what) {
    const double margin = 1e-4 * (hi - lo);
    if (v <= lo + margin || v >= hi - margin)
        fail(std::string("spatial: optimum for ") + what +
             " lies on the feasible boundary (model misspecified or W degenerate)");
}

} // namespace

SpatialFit fit_slm(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                   const SpatialOptions& opt) {
    Prepared pr = prepare(spec, p, W, false);
    const auto n = static_cast<double>(pr.n);

    // residualize y and Wy on X once; SSR(rho) is quadratic
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pr.X);
    const Eigen::VectorXd beta_y = qr.solve(pr.y);
    const Eigen::VectorXd beta_wy = qr.solve(pr.Wy);
    const Eigen::VectorXd e_y = pr.y - pr.X * beta_y;
    const Eigen::VectorXd e_wy = pr.Wy - pr.X * beta_wy;
    const double a = e_y.squaredNorm();
    const double b = e_y.dot(e_wy);
    const double c = e_wy.squaredNorm();

    auto [lo, hi] = pr.W->feasible_interval();
    const double m = opt.boundary_margin * (hi - lo);
    auto loglik_at = [&](double rho) {
        const double ssr = a - 2.0 * rho * b + rho * rho * c;
        return -0.5 * n * (std::log(kTwoPi * ssr / n) + 1.0) +
               static_cast<double>(pr.T) * pr.W->log_det(rho);
    };

    double rho;
    if (opt.fixed_rho) {
        rho = *opt.fixed_rho;
    } else {
        rho = golden_max(loglik_at, lo + m, hi - m, 1e-10);
        // Newton polish on the analytic derivatives
        const Eigen::VectorXd& lam = pr.W->spectrum();
        for (int it = 0; it < 50; ++it) {
            const double S = a - 2.0 * rho * b + rho * rho * c;
            const double S1 = -2.0 * b + 2.0 * rho * c;
            const double S2 = 2.0 * c;
            double d1 = 0, d2 = 0;
            for (Eigen::Index i = 0; i < lam.size(); ++i) {
                const double denom = 1.0 - rho * lam[i];
                d1 -= lam[i] / denom;
                d2 -= lam[i] * lam[i] / (denom * denom);
            }
            const double g = -0.5 * n * S1 / S + static_cast<double>(pr.T) * d1;
            const double h = -0.5 * n * (S2 * S - S1 * S1) / (S * S) + static_cast<double>(pr.T) * d2;
            if (h >= 0) break;
            const double step = g / h;
            const double next = std::clamp(rho - step, lo + m, hi - m);
            const double moved = std::fabs(next - rho);
            rho = next;
            if (moved < 1e-9) break;
        }
        check_interior(rho, lo, hi, "rho");
    }

    SpatialFit fit;
    fit.kind = Estimator::Slm;
    fit.rho = rho;
    fit.beta = beta_y - rho * beta_wy;
    const double ssr = a - 2.0 * rho * b + rho * rho * c;
    fit.sigma2 = ssr / n;
    finalize_common(fit, pr, spec, pr.horizons, loglik_at(rho), 1);
    fit.names = pr.names;

    // idiosyncratic residuals and the analytic information matrix
    Eigen::VectorXd resid = pr.y - rho * pr.Wy - pr.X * fit.beta;
    fit.residual_mat = Eigen::Map<Eigen::MatrixXd>(resid.data(), pr.N, pr.T);

    const Eigen::MatrixXd C = dense_WAinv(*pr.W, rho);
    const Eigen::VectorXd xb = pr.X * fit.beta;
    Eigen::MatrixXd XBmat = Eigen::Map<const Eigen::MatrixXd>(xb.data(), pr.N, pr.T);
    const Eigen::MatrixXd Mu = C * XBmat;
    const Eigen::VectorXd mu = flatten(Mu);
    const Eigen::VectorXd& lam = pr.W->spectrum();
    double trC = 0, trC2 = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double r = lam[i] / (1.0 - rho * lam[i]);
        trC += r;
        trC2 += r * r;
    }
    const int K = pr.K;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(K + 2, K + 2);
    info.topLeftCorner(K, K) = pr.X.transpose() * pr.X / fit.sigma2;
    info.block(0, K, K, 1) = pr.X.transpose() * mu / fit.sigma2;
    info.block(K, 0, 1, K) = info.block(0, K, K, 1).transpose();
    info(K, K) = static_cast<double>(pr.T) * (trC2 + C.squaredNorm()) +
                 mu.squaredNorm() / fit.sigma2;
    info(K, K + 1) = info(K + 1, K) = static_cast<double>(pr.T) * trC / fit.sigma2;
    info(K + 1, K + 1) = n / (2.0 * fit.sigma2 * fit.sigma2);
    const Eigen::MatrixXd cov_full = info.inverse();
    fit.vcov = cov_full.topLeftCorner(K + 1, K + 1);
    return fit;
}

SpatialFit fit_sem(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                   const SpatialOptions& opt) {
    Prepared pr = prepare(spec, p, W, false);
    const auto n = static_cast<double>(pr.n);

    const Eigen::MatrixXd Gxx = pr.X.transpose() * pr.X;
    const Eigen::MatrixXd Gxw = pr.X.transpose() * pr.WX;
    const Eigen::MatrixXd Gww = pr.WX.transpose() * pr.WX;
    const Eigen::VectorXd gxy = pr.X.transpose() * pr.y;
    const Eigen::VectorXd gxwy = pr.X.transpose() * pr.Wy;
    const Eigen::VectorXd gwxy = pr.WX.transpose() * pr.y;
    const Eigen::VectorXd gwxwy = pr.WX.transpose() * pr.Wy;
    const double syy = pr.y.squaredNorm();
    const double sywy = pr.y.dot(pr.Wy);
    const double swywy = pr.Wy.squaredNorm();

    auto beta_ssr = [&](double d) -> std::pair<Eigen::VectorXd, double> {
        const Eigen::MatrixXd XtX =
            Gxx - d * (Gxw + Gxw.transpose()) + d * d * Gww;
        const Eigen::VectorXd Xty = gxy - d * (gxwy + gwxy) + d * d * gwxwy;
        const double yty = syy - 2.0 * d * sywy + d * d * swywy;
        const Eigen::VectorXd beta = XtX.ldlt().solve(Xty);
        return {beta, yty - Xty.dot(beta)};
    };
    auto [lo, hi] = pr.W->feasible_interval();
    const double m = opt.boundary_margin * (hi - lo);
    auto loglik_at = [&](double d) {
        const double ssr = beta_ssr(d).second;
        return -0.5 * n * (std::log(kTwoPi * ssr / n) + 1.0) +
               static_cast<double>(pr.T) * pr.W->log_det(d);
    };

    double delta;
    if (opt.fixed_delta) {
        delta = *opt.fixed_delta;
    } else {
        delta = golden_max(loglik_at, lo + m, hi - m, 1e-10);
        // finite-difference Newton polish
        const double h0 = 1e-6;
        for (int it = 0; it < 30; ++it) {
            const double f1 = (loglik_at(delta + h0) - loglik_at(delta - h0)) / (2 * h0);
            const double f2 =
                (loglik_at(delta + h0) - 2 * loglik_at(delta) + loglik_at(delta - h0)) / (h0 * h0);
            if (f2 >= 0) break;
            const double next = std::clamp(delta - f1 / f2, lo + m, hi - m);
            const double moved = std::fabs(next - delta);
            delta = next;
            if (moved < 1e-9) break;
        }
        check_interior(delta, lo, hi, "delta");
    }

    auto [beta, ssr] = beta_ssr(delta);
    SpatialFit fit;
    fit.kind = Estimator::Sem;
    fit.delta = delta;
    fit.beta = beta;
    fit.sigma2 = ssr / n;
    finalize_common(fit, pr, spec, pr.horizons, loglik_at(delta), 1);
    fit.names = pr.names;

    Eigen::VectorXd resid = (pr.y - delta * pr.Wy) - (pr.X - delta * pr.WX) * beta;
    fit.residual_mat = Eigen::Map<Eigen::MatrixXd>(resid.data(), pr.N, pr.T);

    const Eigen::MatrixXd F = dense_WAinv(*pr.W, delta);
    const Eigen::VectorXd& lam = pr.W->spectrum();
    double trF = 0, trF2 = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double r = lam[i] / (1.0 - delta * lam[i]);
        trF += r;
        trF2 += r * r;
    }
    const int K = pr.K;
    const Eigen::MatrixXd Xt = pr.X - delta * pr.WX;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(K + 2, K + 2);
    info.topLeftCorner(K, K) = Xt.transpose() * Xt / fit.sigma2;
    info(K, K) = static_cast<double>(pr.T) * (trF2 + F.squaredNorm());
    info(K, K + 1) = info(K + 1, K) = static_cast<double>(pr.T) * trF / fit.sigma2;
    info(K + 1, K + 1) = n / (2.0 * fit.sigma2 * fit.sigma2);
    const Eigen::MatrixXd cov_full = info.inverse();
    fit.vcov = cov_full.topLeftCorner(K + 1, K + 1);
    return fit;
}

SpatialFit fit_sarar(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                     const SpatialOptions& opt) {
    Prepared pr = prepare(spec, p, W, true);
    const auto n = static_cast<double>(pr.n);
    const int K = pr.K;

    // cross products among {y, Wy, WWy} and the X blocks
    const double yy = pr.y.squaredNorm();
    const double y_wy = pr.y.dot(pr.Wy);
    const double y_wwy = pr.y.dot(pr.WWy);
    const double wy_wy = pr.Wy.squaredNorm();
    const double wy_wwy = pr.Wy.dot(pr.WWy);
    const double wwy_wwy = pr.WWy.squaredNorm();
    const Eigen::MatrixXd Gxx = pr.X.transpose() * pr.X;
    const Eigen::MatrixXd Gxw = pr.X.transpose() * pr.WX;
    const Eigen::MatrixXd Gww = pr.WX.transpose() * pr.WX;
    const Eigen::VectorXd x_y = pr.X.transpose() * pr.y;
    const Eigen::VectorXd x_wy = pr.X.transpose() * pr.Wy;
    const Eigen::VectorXd x_wwy = pr.X.transpose() * pr.WWy;
    const Eigen::VectorXd wx_y = pr.WX.transpose() * pr.y;
    const Eigen::VectorXd wx_wy = pr.WX.transpose() * pr.Wy;
    const Eigen::VectorXd wx_wwy = pr.WX.transpose() * pr.WWy;

    auto beta_ssr = [&](double rho, double d) -> std::pair<Eigen::VectorXd, double> {
        // z = y - rho Wy, Wz = Wy - rho WWy, ytil = z - d Wz, Xtil = X - d WX
        const double z_z = yy - 2 * rho * y_wy + rho * rho * wy_wy;
        const double z_wz = y_wy - rho * (y_wwy + wy_wy) + rho * rho * wy_wwy;
        const double wz_wz = wy_wy - 2 * rho * wy_wwy + rho * rho * wwy_wwy;
        const double yty = z_z - 2 * d * z_wz + d * d * wz_wz;
        const Eigen::VectorXd x_z = x_y - rho * x_wy;
        const Eigen::VectorXd x_wz = x_wy - rho * x_wwy;
        const Eigen::VectorXd wx_z = wx_y - rho * wx_wy;
        const Eigen::VectorXd wx_wz = wx_wy - rho * wx_wwy;
        const Eigen::VectorXd Xty = x_z - d * (x_wz + wx_z) + d * d * wx_wz;
        const Eigen::MatrixXd XtX = Gxx - d * (Gxw + Gxw.transpose()) + d * d * Gww;
        const Eigen::VectorXd beta = XtX.ldlt().solve(Xty);
        return {beta, yty - Xty.dot(beta)};
    };
    auto [lo, hi] = pr.W->feasible_interval();
    const double m = opt.boundary_margin * (hi - lo);
    auto loglik_at = [&](double rho, double d) {
        const double ssr = beta_ssr(rho, d).second;
        return -0.5 * n * (std::log(kTwoPi * ssr / n) + 1.0) +
               static_cast<double>(pr.T) * (pr.W->log_det(rho) + pr.W->log_det(d));
    };

    double rho, delta;
    if (opt.fixed_rho && opt.fixed_delta) {
        rho = *opt.fixed_rho;
        delta = *opt.fixed_delta;
    } else {
        // restarts from a grid, then coordinate golden-section ascent
        const int G = std::max(3, opt.grid_points);
        double best_ll = -1e300;
        double best_rho = 0, best_delta = 0;
        std::vector<std::pair<double, std::pair<double, double>>> starts;
        for (int i = 0; i < G; ++i)
            for (int j = 0; j < G; ++j) {
                const double r = opt.fixed_rho
                                     ? *opt.fixed_rho
                                     : lo + m + (hi - lo - 2 * m) * (i + 0.5) / G;
                const double d = opt.fixed_delta
                                     ? *opt.fixed_delta
                                     : lo + m + (hi - lo - 2 * m) * (j + 0.5) / G;
                starts.push_back({loglik_at(r, d), {r, d}});
            }
        std::sort(starts.begin(), starts.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        const std::size_t n_restarts = std::min<std::size_t>(5, starts.size());
        for (std::size_t s = 0; s < n_restarts; ++s) {
            double r = starts[s].second.first, d = starts[s].second.second;
            for (int sweep = 0; sweep < 200; ++sweep) {
                const double r_old = r, d_old = d;
                if (!opt.fixed_rho)
                    r = golden_max([&](double v) { return loglik_at(v, d); }, lo + m, hi - m, 1e-11);
                if (!opt.fixed_delta)
                    d = golden_max([&](double v) { return loglik_at(r, v); }, lo + m, hi - m, 1e-11);
                if (std::fabs(r - r_old) < 1e-9 && std::fabs(d - d_old) < 1e-9) break;
            }
            const double ll = loglik_at(r, d);
            if (ll > best_ll) {
                best_ll = ll;
                best_rho = r;
                best_delta = d;
            }
        }
        rho = best_rho;
        delta = best_delta;
        if (!opt.fixed_rho) check_interior(rho, lo, hi, "rho");
        if (!opt.fixed_delta) check_interior(delta, lo, hi, "delta");
    }

    auto [beta, ssr] = beta_ssr(rho, delta);
    SpatialFit fit;
    fit.kind = Estimator::Sarar;
    fit.rho = rho;
    fit.delta = delta;
    fit.beta = beta;
    fit.sigma2 = ssr / n;
    finalize_common(fit, pr, spec, pr.horizons, loglik_at(rho, delta), 2);
    fit.names = pr.names;

    Eigen::VectorXd z = pr.y - rho * pr.Wy;
    Eigen::VectorXd wz = pr.Wy - rho * pr.WWy;
    Eigen::VectorXd resid = (z - delta * wz) - (pr.X - delta * pr.WX) * beta;
    fit.residual_mat = Eigen::Map<Eigen::MatrixXd>(resid.data(), pr.N, pr.T);

    // analytic information matrix of (beta, rho, delta, sigma^2)
    const Eigen::MatrixXd C = dense_WAinv(*pr.W, rho);
    const Eigen::MatrixXd F = dense_WAinv(*pr.W, delta);
    const auto N = pr.N;
    const Eigen::SparseMatrix<double> Bsp = pr.W->identity_minus(delta);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> luBt(Eigen::SparseMatrix<double>(Bsp.transpose()));
    require(luBt.info() == Eigen::Success, "sarar: failed to factorize B'");
    // P = B C B^{-1}:  solve B' P' = (B C)'
    const Eigen::MatrixXd BCt = (Bsp * C).transpose();
    const Eigen::MatrixXd P = Eigen::MatrixXd(luBt.solve(BCt)).transpose();
    // CBinv = C B^{-1}: solve B' M' = C'
    const Eigen::MatrixXd Ct = C.transpose();
    const Eigen::MatrixXd CBinv = Eigen::MatrixXd(luBt.solve(Ct)).transpose();
    const Eigen::MatrixXd WCBinv = pr.W->matrix() * CBinv;

    const Eigen::VectorXd& lam = pr.W->spectrum();
    double trC = 0, trC2 = 0, trF = 0, trF2 = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double rc = lam[i] / (1.0 - rho * lam[i]);
        const double rf = lam[i] / (1.0 - delta * lam[i]);
        trC += rc;
        trC2 += rc * rc;
        trF += rf;
        trF2 += rf * rf;
    }

    const Eigen::MatrixXd Xt = pr.X - delta * pr.WX; // B X in flat form
    const Eigen::VectorXd xb = pr.X * beta;
    Eigen::MatrixXd XBmat = Eigen::Map<const Eigen::MatrixXd>(xb.data(), N, pr.T);
    const Eigen::MatrixXd BMu = Bsp * (C * XBmat);
    const Eigen::VectorXd bmu = flatten(BMu);

    const double T_d = static_cast<double>(pr.T);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(K + 3, K + 3);
    info.topLeftCorner(K, K) = Xt.transpose() * Xt / fit.sigma2;
    info.block(0, K, K, 1) = Xt.transpose() * bmu / fit.sigma2;
    info.block(K, 0, 1, K) = info.block(0, K, K, 1).transpose();
    info(K, K) = T_d * trC2 + T_d * P.squaredNorm() + bmu.squaredNorm() / fit.sigma2;
    info(K, K + 1) = info(K + 1, K) =
        T_d * (WCBinv.trace() + (P.transpose() * F).trace());
    info(K + 1, K + 1) = T_d * (trF2 + F.squaredNorm());
    info(K, K + 2) = info(K + 2, K) = T_d * trC / fit.sigma2;
    info(K + 1, K + 2) = info(K + 2, K + 1) = T_d * trF / fit.sigma2;
    info(K + 2, K + 2) = n / (2.0 * fit.sigma2 * fit.sigma2);
    const Eigen::MatrixXd cov_full = info.inverse();
    fit.vcov = cov_full.topLeftCorner(K + 2, K + 2);
    return fit;
}

ImpactsResult impacts(const SpatialFit& fit, int n_sim, std::uint64_t seed) {
    require(n_sim >= 100, "impacts: n_sim must be at least 100");
    require(fit.weights != nullptr, "impacts: fit carries no weight operator");
    ImpactsResult out;
    out.n_sim = n_sim;
    out.seed = seed;
    Rng rng(seed);

    const int K = fit.K;
    if (fit.kind == Estimator::Sem) {
        // no spatial multiplier on the outcome: direct = beta, indirect = 0
        for (int k = 0; k < K; ++k) {
            ImpactRow r;
            r.name = fit.names[k];
            r.direct = r.total = fit.beta[k];
            r.indirect = 0.0;
            r.se_direct = r.se_total = fit.se_beta(k);
            r.se_indirect = 0.0;
            r.p_direct = r.p_total =
                stats::norm_two_sided_p(r.se_direct > 0 ? r.direct / r.se_direct : 0.0);
            r.p_indirect = 1.0;
            out.rows.push_back(r);
        }
        return out;
    }

    require(fit.rho.has_value(), "impacts: fit has no spatial lag parameter");
    const double rho = *fit.rho;
    if (rho >= 1.0) fail("impacts: rho >= 1 makes I - rho*W singular");
    const SpatialWeights& W = *fit.weights;
    const auto N = W.size();

    // Point estimates: trace and total sum of S = (I - rho W)^{-1} by N
    // sparse solves against the identity.
    const Eigen::SparseMatrix<double> A = W.identity_minus(rho);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
    require(lu.info() == Eigen::Success, "impacts: failed to factorize I - rho*W");
    double trace = 0, total = 0;
    {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
        for (Eigen::Index j = 0; j < N; ++j) {
            e[j] = 1.0;
            Eigen::VectorXd col = lu.solve(e);
            trace += col[j];
            total += col.sum();
            e[j] = 0.0;
        }
    }
    const double m_dir = trace / static_cast<double>(N);
    const double m_tot = total / static_cast<double>(N);

    // Simulation draws of (beta, rho) from the asymptotic normal.
    const int P = K + 1; // beta block + rho (SARAR's delta does not enter S)
    Eigen::MatrixXd V = fit.vcov.topLeftCorner(P, P);
    Eigen::LLT<Eigen::MatrixXd> llt(V);
    Eigen::MatrixXd L;
    if (llt.info() == Eigen::Success) {
        L = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
        L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Eigen::VectorXd theta(P);
    theta.head(K) = fit.beta;
    theta[K] = rho;
    const auto [lo_f, hi_f] = W.feasible_interval();

    Eigen::MatrixXd dir_draws(n_sim, K), tot_draws(n_sim, K);
    const Eigen::VectorXd& lam = W.spectrum();
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(N);
    for (int s = 0; s < n_sim; ++s) {
        Eigen::VectorXd z(P);
        double rho_d = 0;
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            for (int j = 0; j < P; ++j) z[j] = rng.normal();
            rho_d = (theta + L * z)[K];
            ok = rho_d > lo_f + 1e-8 && rho_d < hi_f - 1e-8;
        }
        if (!ok) rho_d = std::clamp(rho_d, lo_f + 1e-6, hi_f - 1e-6);
        const Eigen::VectorXd theta_d = theta + L * z;
        double tr_d = 0;
        for (Eigen::Index i = 0; i < lam.size(); ++i) tr_d += 1.0 / (1.0 - rho_d * lam[i]);
        const Eigen::SparseMatrix<double> Ad = W.identity_minus(rho_d);
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lud(Ad);
        const Eigen::VectorXd srow = lud.solve(ones);
        const double md = tr_d / static_cast<double>(N);
        const double mt = srow.sum() / static_cast<double>(N);
        for (int k = 0; k < K; ++k) {
            dir_draws(s, k) = md * theta_d[k];
            tot_draws(s, k) = mt * theta_d[k];
        }
    }

    for (int k = 0; k < K; ++k) {
        ImpactRow r;
        r.name = fit.names[k];
        r.direct = m_dir * fit.beta[k];
        r.total = m_tot * fit.beta[k];
        r.indirect = r.total - r.direct;
        auto sd = [&](const Eigen::VectorXd& v) {
            const double mean = v.mean();
            return std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
        };
        const Eigen::VectorXd dk = dir_draws.col(k);
        const Eigen::VectorXd tk = tot_draws.col(k);
        const Eigen::VectorXd ik = tk - dk;
        r.se_direct = sd(dk);
        r.se_total = sd(tk);
        r.se_indirect = sd(ik);
        r.p_direct = stats::norm_two_sided_p(r.se_direct > 0 ? r.direct / r.se_direct : 0.0);
        r.p_total = stats::norm_two_sided_p(r.se_total > 0 ? r.total / r.se_total : 0.0);
        r.p_indirect =
            stats::norm_two_sided_p(r.se_indirect > 0 ? r.indirect / r.se_indirect : 0.0);
        out.rows.push_back(r);
    }
    return out;
}

} // namespace stpanel
