#include "stpanel/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "stpanel/common.hpp"
#include "stpanel/factors.hpp"
#include "stpanel/rng.hpp"
#include "stpanel/spatial.hpp"
#include "stpanel/stats.hpp"
#include "stpanel/twfe.hpp"

namespace stpanel {

namespace {

struct PairwiseCorr {
    // accumulated over included entity pairs
    std::vector<double> rho;
    std::vector<double> t_ij;
    double sum_rho = 0, sum_abs = 0;
    std::vector<int> kept; // entity indices that survived the variance screen
    std::vector<std::string> warnings;
};

PairwiseCorr pairwise_correlations(const Eigen::MatrixXd& E, const MaskXb& missing) {
    const auto N = E.rows();
    const auto T = E.cols();
    require(T >= 3, "csd: need T >= 3");
    PairwiseCorr pc;

    // exclude zero-variance entities up front
    for (Eigen::Index i = 0; i < N; ++i) {
        double s = 0, s2 = 0;
        int n = 0;
        for (Eigen::Index t = 0; t < T; ++t)
            if (!missing(i, t)) {
                s += E(i, t);
                s2 += E(i, t) * E(i, t);
                ++n;
            }
        const double var = n > 1 ? (s2 - s * s / n) / (n - 1) : 0.0;
        if (n >= 3 && var > 1e-300)
            pc.kept.push_back(static_cast<int>(i));
        else
            pc.warnings.push_back("entity row " + std::to_string(i) +
                                  " excluded (zero variance or too few observations)");
    }
    require(pc.kept.size() >= 2, "csd: fewer than 2 entities with usable variation");

    for (std::size_t a = 0; a < pc.kept.size(); ++a)
        for (std::size_t b = a + 1; b < pc.kept.size(); ++b) {
            const int i = pc.kept[a], j = pc.kept[b];
            double si = 0, sj = 0, sii = 0, sjj = 0, sij = 0;
            int n = 0;
            for (Eigen::Index t = 0; t < T; ++t) {
                if (missing(i, t) || missing(j, t)) continue;
                const double x = E(i, t), y = E(j, t);
                si += x;
                sj += y;
                sii += x * x;
                sjj += y * y;
                sij += x * y;
                ++n;
            }
            if (n < 3) fail("csd: overlapping sample of a pair has fewer than 3 periods");
            const double cx = sii - si * si / n;
            const double cy = sjj - sj * sj / n;
            double r = 0;
            if (cx > 0 && cy > 0) r = (sij - si * sj / n) / std::sqrt(cx * cy);
            pc.rho.push_back(r);
            pc.t_ij.push_back(static_cast<double>(n));
            pc.sum_rho += r;
            pc.sum_abs += std::fabs(r);
        }
    return pc;
}

MaskXb no_missing(const Eigen::MatrixXd& E) {
    return MaskXb::Constant(E.rows(), E.cols(), false);
}

} // namespace

CsdTestResult pesaran_cd(const Eigen::MatrixXd& E, const MaskXb& missing) {
    PairwiseCorr pc = pairwise_correlations(E, missing);
    const double np = static_cast<double>(pc.kept.size());
    const double n_pairs = np * (np - 1.0) / 2.0;
    double s = 0;
    for (std::size_t q = 0; q < pc.rho.size(); ++q) s += std::sqrt(pc.t_ij[q]) * pc.rho[q];
    CsdTestResult r;
    r.method = "Pesaran CD";
    r.statistic = std::sqrt(1.0 / n_pairs) * s;
    r.p_value = stats::norm_two_sided_p(r.statistic);
    r.avg_corr = pc.sum_rho / n_pairs;
    r.avg_abs_corr = pc.sum_abs / n_pairs;
    r.warnings = pc.warnings;
    return r;
}

CsdTestResult pesaran_cd(const Eigen::MatrixXd& E) { return pesaran_cd(E, no_missing(E)); }

CsdTestResult bp_lm(const Eigen::MatrixXd& E, const MaskXb& missing) {
    PairwiseCorr pc = pairwise_correlations(E, missing);
    const double np = static_cast<double>(pc.kept.size());
    const double n_pairs = np * (np - 1.0) / 2.0;
    double lm = 0;
    for (std::size_t q = 0; q < pc.rho.size(); ++q) lm += pc.t_ij[q] * pc.rho[q] * pc.rho[q];
    CsdTestResult r;
    r.method = "Breusch-Pagan LM";
    r.statistic = lm;
    r.dof = n_pairs;
    r.p_value = stats::chisq_sf(lm, n_pairs);
    r.avg_corr = pc.sum_rho / n_pairs;
    r.avg_abs_corr = pc.sum_abs / n_pairs;
    r.warnings = pc.warnings;
    return r;
}

CsdTestResult bp_lm(const Eigen::MatrixXd& E) { return bp_lm(E, no_missing(E)); }

CsdTestResult scaled_lm(const Eigen::MatrixXd& E, const MaskXb& missing) {
    PairwiseCorr pc = pairwise_correlations(E, missing);
    const double np = static_cast<double>(pc.kept.size());
    const double n_pairs = np * (np - 1.0) / 2.0;
    double s = 0;
    for (std::size_t q = 0; q < pc.rho.size(); ++q)
        s += pc.t_ij[q] * pc.rho[q] * pc.rho[q] - 1.0;
    CsdTestResult r;
    r.method = "Scaled LM";
    r.statistic = s / std::sqrt(2.0 * n_pairs);
    r.p_value = stats::norm_two_sided_p(r.statistic);
    r.avg_corr = pc.sum_rho / n_pairs;
    r.avg_abs_corr = pc.sum_abs / n_pairs;
    r.warnings = pc.warnings;
    return r;
}

CsdTestResult scaled_lm(const Eigen::MatrixXd& E) { return scaled_lm(E, no_missing(E)); }

CsdTestResult pesaran_cd_permutation(const Eigen::MatrixXd& E, const MaskXb& missing,
                                     int n_perm, std::uint64_t seed) {
    require(n_perm >= 19, "cd permutation: need at least 19 draws");
    CsdTestResult base = pesaran_cd(E, missing);
    Rng rng(seed);
    const auto N = E.rows();
    const auto T = E.cols();
    int exceed = 0;
    Eigen::MatrixXd P(N, T);
    MaskXb Pm(N, T);
    std::vector<int> order(T);
    for (int b = 0; b < n_perm; ++b) {
        Rng sub = rng.substream(static_cast<std::uint64_t>(b) + 1);
        for (Eigen::Index i = 0; i < N; ++i) {
            for (Eigen::Index t = 0; t < T; ++t) order[t] = static_cast<int>(t);
            for (Eigen::Index t = T - 1; t > 0; --t)
                std::swap(order[t], order[sub.below(static_cast<std::uint64_t>(t) + 1)]);
            for (Eigen::Index t = 0; t < T; ++t) {
                P(i, t) = E(i, order[t]);
                Pm(i, t) = missing(i, order[t]);
            }
        }
        CsdTestResult perm = pesaran_cd(P, Pm);
        if (std::fabs(perm.statistic) >= std::fabs(base.statistic)) ++exceed;
    }
    base.method = "Pesaran CD (permutation)";
    base.p_value = (1.0 + exceed) / (1.0 + n_perm);
    base.warnings.push_back("experimental randomisation-based p-value");
    return base;
}

CsdTestResult residual_csd(const FitResult& fit) {
    auto [resid, mask] = fit.residual_matrix();
    return pesaran_cd(resid, mask);
}

CsdTestResult residual_csd(const SpatialFit& fit) { return pesaran_cd(fit.residual_mat); }

CsdTestResult residual_csd(const FactorFit& fit) { return pesaran_cd(fit.residual_mat); }

std::vector<ModelComparisonRow> compare_models(std::vector<ModelComparisonRow> fits,
                                               bool require_same_sample) {
    require(!fits.empty(), "compare_models: no fits");
    if (require_same_sample)
        for (const auto& f : fits) {
            require(f.nobs == fits.front().nobs,
                    "compare_models: fits use different samples (" + f.name + ")");
            require(f.dependent == fits.front().dependent,
                    "compare_models: fits have different dependent variables (" + f.name + ")");
        }
    std::stable_sort(fits.begin(), fits.end(),
                     [](const ModelComparisonRow& a, const ModelComparisonRow& b) {
                         return a.aic < b.aic;
                     });
    return fits;
}

} // namespace stpanel
