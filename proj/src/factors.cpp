#include "stpanel/factors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

#include "stpanel/common.hpp"
#include "stpanel/spatial.hpp" // balance_panel, demean_two_way

namespace stpanel {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// (T-2) x T second-difference operator.
Eigen::MatrixXd second_difference(Eigen::Index T) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(T - 2, T);
    for (Eigen::Index r = 0; r < T - 2; ++r) {
        D(r, r) = 1.0;
        D(r, r + 1) = -2.0;
        D(r, r + 2) = 1.0;
    }
    return D;
}

// Two-way projection of a complete matrix onto row+column mean space.
Eigen::MatrixXd proj_two_way(const Eigen::MatrixXd& M) {
    const double grand = M.mean();
    const Eigen::VectorXd rm = M.rowwise().mean();
    const Eigen::RowVectorXd cm = M.colwise().mean();
    Eigen::MatrixXd P(M.rows(), M.cols());
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index t = 0; t < M.cols(); ++t) P(i, t) = rm[i] + cm[t] - grand;
    return P;
}

// GCV choice of the second-difference penalty on the rows of R.
double gcv_smoothing(const Eigen::MatrixXd& R, const Eigen::MatrixXd& DtD) {
    const auto T = R.cols();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(DtD);
    const Eigen::VectorXd s = es.eigenvalues();
    const Eigen::MatrixXd Rb = R * es.eigenvectors(); // rows in the eigenbasis
    double best_gcv = std::numeric_limits<double>::infinity();
    double best_kappa = 1.0;
    for (double lk = -2.0; lk <= 8.0; lk += 0.25) {
        const double kappa = std::pow(10.0, lk);
        double tr_h = 0;
        for (Eigen::Index j = 0; j < T; ++j) tr_h += 1.0 / (1.0 + kappa * s[j]);
        double rss = 0;
        for (Eigen::Index j = 0; j < T; ++j) {
            const double shrink = kappa * s[j] / (1.0 + kappa * s[j]);
            rss += shrink * shrink * Rb.col(j).squaredNorm();
        }
        const double denom = 1.0 - tr_h / static_cast<double>(T);
        if (denom <= 0) continue;
        const double gcv = rss / (static_cast<double>(R.rows() * T) * denom * denom);
        if (gcv < best_gcv) {
            best_gcv = gcv;
            best_kappa = kappa;
        }
    }
    return best_kappa;
}

struct Defactored {
    Eigen::VectorXd beta;
    Eigen::MatrixXd resid; // N x T residual of the demeaned regression
    double ssr = 0;
};

// beta step: OLS of demeaned (Y - component) on demeaned X.
Defactored beta_step(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& component,
                     const Eigen::MatrixXd& Xflat,
                     const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    Eigen::MatrixXd Z = Y - component;
    demean_two_way(Z);
    const Eigen::Map<const Eigen::VectorXd> zvec(Z.data(), Z.size());
    Defactored out;
    out.beta = qr.solve(zvec);
    Eigen::VectorXd resid = zvec - Xflat * out.beta;
    out.ssr = resid.squaredNorm();
    out.resid = Eigen::Map<Eigen::MatrixXd>(resid.data(), Y.rows(), Y.cols());
    return out;
}

} // namespace

FactorFit fit_htt(const ModelSpec& spec, const PanelDataset& p, int d, double smoothing) {
    ResolvedModel rm = materialize(spec, p);
    BalancedPanel bp = balance_panel(rm.panel, rm.dependent, rm.regressors);
    const auto N = static_cast<Eigen::Index>(bp.entities.size());
    const auto T = static_cast<Eigen::Index>(bp.years.size());
    require(d >= 0, "fit_htt: d must be non-negative");
    require(d <= static_cast<int>(std::min(N, T)) - 1,
            "fit_htt: d exceeds min(N,T)-1 for the balanced sample");
    require(T >= 4, "fit_htt: need at least 4 usable years");
    const int K = static_cast<int>(rm.regressors.size());
    const auto n = static_cast<long long>(N) * T;

    FactorFit fit;
    fit.model_name = spec.name;
    fit.dependent = rm.dependent;
    fit.names = rm.regressors;
    fit.horizons = rm.horizons;
    fit.entities = bp.entities;
    fit.years = bp.years;
    fit.nobs = n;
    fit.K = K;
    fit.d = d;
    if (!bp.dropped.empty())
        fit.notes.push_back(std::to_string(bp.dropped.size()) +
                            " entities dropped to balance the estimation sample");

    // demeaned regressors, flattened once
    std::vector<Eigen::MatrixXd> Xd = bp.X;
    Eigen::MatrixXd Xflat(n, K);
    for (int k = 0; k < K; ++k) {
        demean_two_way(Xd[k]);
        Xflat.col(k) = Eigen::Map<const Eigen::VectorXd>(Xd[k].data(), n);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xflat);
    qr.setThreshold(1e-9);
    if (qr.rank() < K) fail("fit_htt: collinear regressors after fixed effects");

    const double y_mean = bp.Y.mean();
    const double sst_raw = (bp.Y.array() - y_mean).square().sum();

    const Eigen::MatrixXd D2 = second_difference(T);
    const Eigen::MatrixXd DtD = D2.transpose() * D2;

    Eigen::MatrixXd component = Eigen::MatrixXd::Zero(N, T);
    Defactored cur = beta_step(bp.Y, component, Xflat, qr);

    if (d == 0) {
        fit.beta = cur.beta;
        fit.residual_mat = cur.resid;
        fit.converged = true;
        fit.iterations = 0;
        fit.smoothing = 0;
        fit.factors.resize(T, 0);
        fit.loadings.resize(N, 0);
    } else {
        // residual target given current beta and the implied two-way effects
        auto target = [&](const Eigen::VectorXd& beta,
                          const Eigen::MatrixXd& comp) -> Eigen::MatrixXd {
            Eigen::MatrixXd R = bp.Y;
            for (int k = 0; k < K; ++k) R -= beta[k] * bp.X[k];
            return R - proj_two_way(R - comp);
        };

        Eigen::MatrixXd R = target(cur.beta, component);
        const double kappa = smoothing > 0 ? smoothing : gcv_smoothing(R, DtD);
        fit.smoothing = kappa;
        const Eigen::MatrixXd H =
            (Eigen::MatrixXd::Identity(T, T) + kappa * DtD).ldlt().solve(
                Eigen::MatrixXd::Identity(T, T));

        // initialize factors from the smoothed residual covariance
        Eigen::MatrixXd Rs = R * H; // rows smoothed (H symmetric)
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Rs.transpose() * Rs);
        Eigen::MatrixXd F(T, d);
        for (int l = 0; l < d; ++l) F.col(l) = std::sqrt(static_cast<double>(T)) *
                                               es.eigenvectors().col(T - 1 - l);
        Eigen::MatrixXd L = Rs * F / static_cast<double>(T);

        Eigen::VectorXd beta_prev = cur.beta;
        bool converged = false;
        int it = 0;
        for (; it < 500; ++it) {
            // loadings and factor updates (exact minimizers of the penalized SSR)
            const Eigen::MatrixXd DF = D2 * F;
            const Eigen::MatrixXd G = F.transpose() * F + kappa * DF.transpose() * DF;
            L = R * F * G.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
            const Eigen::MatrixXd LtL = L.transpose() * L;
            F = H * R.transpose() * L * LtL.ldlt().solve(Eigen::MatrixXd::Identity(d, d));

            component = L * F.transpose();
            cur = beta_step(bp.Y, component, Xflat, qr);
            R = target(cur.beta, component);

            const Eigen::MatrixXd DFc = D2 * (F * L.transpose());
            const double obj = (R - component).squaredNorm() + kappa * DFc.squaredNorm();
            fit.objective_path.push_back(obj);

            const double dbeta = (cur.beta - beta_prev).cwiseAbs().maxCoeff();
            beta_prev = cur.beta;
            if (dbeta < 1e-7) {
                converged = true;
                ++it;
                break;
            }
        }
        if (!converged) {
            std::string msg = "fit_htt: no convergence in 500 iterations; last betas:";
            for (int k = 0; k < K; ++k)
                msg += " " + std::to_string(beta_prev[k]) + "/" + std::to_string(cur.beta[k]);
            fail(msg);
        }
        fit.iterations = it;
        fit.converged = true;

        // canonical normalization: F'F = T*I, L'L diagonal, leading sign positive
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(component,
                                              Eigen::ComputeThinU | Eigen::ComputeThinV);
        const int rank_d = std::min<int>(d, static_cast<int>(svd.singularValues().size()));
        Eigen::MatrixXd Q = svd.matrixV().leftCols(rank_d);
        for (int l = 0; l < rank_d; ++l) {
            Eigen::Index imax;
            Q.col(l).cwiseAbs().maxCoeff(&imax);
            if (Q(imax, l) < 0) Q.col(l) = -Q.col(l);
        }
        fit.factors = std::sqrt(static_cast<double>(T)) * Q;
        fit.loadings = component * fit.factors / static_cast<double>(T);
        fit.beta = cur.beta;
        fit.residual_mat = cur.resid;
    }

    fit.beta = cur.beta;
    const double ssr = cur.ssr;
    fit.r2 = sst_raw > 0 ? 1.0 - ssr / sst_raw : 0.0;
    const double df = std::max(
        1.0, static_cast<double>(n) - K - (static_cast<double>(N) + T - 1) -
                 static_cast<double>(d) * (static_cast<double>(N) + T));
    fit.sigma2 = ssr / df;
    const Eigen::MatrixXd xtx_inv =
        (Xflat.transpose() * Xflat).ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    fit.se.resize(K);
    for (int k = 0; k < K; ++k) fit.se[k] = std::sqrt(fit.sigma2 * xtx_inv(k, k));

    const double sigma2_ml = ssr / static_cast<double>(n);
    fit.loglik = -0.5 * static_cast<double>(n) * (std::log(kTwoPi * sigma2_ml) + 1.0);
    const double p_params = K + (static_cast<double>(N) + T - 1) +
                            static_cast<double>(d) * (static_cast<double>(N) + T) + 1;
    fit.aic = -2.0 * fit.loglik + 2.0 * p_params;
    fit.bic = -2.0 * fit.loglik + std::log(static_cast<double>(n)) * p_params;
    return fit;
}

FactorSelection select_factors(const ModelSpec& spec, const PanelDataset& p, int d_max,
                               double smoothing) {
    require(d_max >= 0 && d_max <= 8, "select_factors: d_max must be in 0..8");
    FactorSelection sel;
    std::vector<FactorFit> fits;
    double kappa = smoothing;
    for (int d = 0; d <= d_max; ++d) {
        fits.push_back(fit_htt(spec, p, d, kappa));
        if (d == 1 && kappa <= 0) kappa = fits.back().smoothing; // hold GCV choice fixed
        sel.aic.push_back(fits.back().aic);
        sel.bic.push_back(fits.back().bic);
    }
    sel.chosen_aic = static_cast<int>(
        std::min_element(sel.aic.begin(), sel.aic.end()) - sel.aic.begin());
    sel.chosen_bic = static_cast<int>(
        std::min_element(sel.bic.begin(), sel.bic.end()) - sel.bic.begin());

    // scree from the d = 0 fit's smoothed residual covariance
    const FactorFit& base = fits[0];
    const auto T = static_cast<Eigen::Index>(base.years.size());
    const Eigen::MatrixXd D2 = second_difference(T);
    const Eigen::MatrixXd DtD = D2.transpose() * D2;
    const double k_scree = kappa > 0 ? kappa : gcv_smoothing(base.residual_mat, DtD);
    const Eigen::MatrixXd H = (Eigen::MatrixXd::Identity(T, T) + k_scree * DtD)
                                  .ldlt()
                                  .solve(Eigen::MatrixXd::Identity(T, T));
    const Eigen::MatrixXd Rs = base.residual_mat * H;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Rs.transpose() * Rs);
    sel.scree = es.eigenvalues().reverse();
    const double tot = sel.scree.sum();
    sel.cum_share.resize(sel.scree.size());
    double acc = 0;
    for (Eigen::Index i = 0; i < sel.scree.size(); ++i) {
        acc += sel.scree[i];
        sel.cum_share[i] = tot > 0 ? acc / tot : 0.0;
    }
    // elbow: largest drop-off in the scree
    sel.elbow = 0;
    double best = -1;
    for (Eigen::Index i = 0; i + 1 < std::min<Eigen::Index>(sel.scree.size(), d_max + 2); ++i) {
        const double drop = sel.scree[i] - sel.scree[i + 1];
        if (drop > best) {
            best = drop;
            sel.elbow = static_cast<int>(i) + 1;
        }
    }
    return sel;
}

} // namespace stpanel
