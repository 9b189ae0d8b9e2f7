#include "stpanel/twfe.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "stpanel/common.hpp"
#include "stpanel/stats.hpp"

namespace stpanel {

std::pair<Eigen::MatrixXd, MaskXb> FitResult::residual_matrix() const {
    const auto N = static_cast<Eigen::Index>(entities.size());
    const auto T = static_cast<Eigen::Index>(years.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(N, T);
    MaskXb mask = MaskXb::Constant(N, T, true);
    for (Eigen::Index r = 0; r < residuals.size(); ++r) {
        m(entity_of_row[r], year_of_row[r]) = residuals[r];
        mask(entity_of_row[r], year_of_row[r]) = false;
    }
    return {m, mask};
}

void within_transform(Eigen::MatrixXd& M, const std::vector<int>& entity_of_row,
                      const std::vector<int>& year_of_row,
                      const std::vector<std::string>& fe_dims) {
    require(!fe_dims.empty(), "within_transform: fe_dims must be nonempty");
    const auto n = M.rows();
    require(static_cast<std::size_t>(n) == entity_of_row.size() &&
                static_cast<std::size_t>(n) == year_of_row.size(),
            "within_transform: row bookkeeping mismatch");
    const bool use_entity = std::find(fe_dims.begin(), fe_dims.end(), "entity") != fe_dims.end();
    const bool use_year = std::find(fe_dims.begin(), fe_dims.end(), "year") != fe_dims.end();
    int max_ent = 0, max_yr = 0;
    for (auto e : entity_of_row) max_ent = std::max(max_ent, e);
    for (auto t : year_of_row) max_yr = std::max(max_yr, t);

    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    const double tol = 1e-11 * scale;
    Eigen::VectorXd mean_e(max_ent + 1), mean_t(max_yr + 1);
    Eigen::VectorXd cnt_e(max_ent + 1), cnt_t(max_yr + 1);
    cnt_e.setZero();
    cnt_t.setZero();
    for (auto e : entity_of_row) cnt_e[e] += 1.0;
    for (auto t : year_of_row) cnt_t[t] += 1.0;

    for (Eigen::Index col = 0; col < M.cols(); ++col) {
        auto v = M.col(col);
        for (int sweep = 0; sweep < 10000; ++sweep) {
            double max_change = 0.0;
            if (use_entity) {
                mean_e.setZero();
                for (Eigen::Index r = 0; r < n; ++r) mean_e[entity_of_row[r]] += v[r];
                for (int e = 0; e <= max_ent; ++e)
                    if (cnt_e[e] > 0) mean_e[e] /= cnt_e[e];
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double m = mean_e[entity_of_row[r]];
                    v[r] -= m;
                    max_change = std::max(max_change, std::fabs(m));
                }
            }
            if (use_year) {
                mean_t.setZero();
                for (Eigen::Index r = 0; r < n; ++r) mean_t[year_of_row[r]] += v[r];
                for (int t = 0; t <= max_yr; ++t)
                    if (cnt_t[t] > 0) mean_t[t] /= cnt_t[t];
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double m = mean_t[year_of_row[r]];
                    v[r] -= m;
                    max_change = std::max(max_change, std::fabs(m));
                }
            }
            if (max_change < tol || !use_entity || !use_year) break;
            if (sweep == 9999)
                fail("within_transform: demeaning did not converge in 10000 sweeps "
                     "(pathological missingness pattern)");
        }
    }
}

namespace {

// Cluster ids per row for a dimension name or the intersection.
std::vector<long long> cluster_ids(const FitResult& fit, const std::string& dim) {
    std::vector<long long> ids(fit.entity_of_row.size());
    const long long stride = static_cast<long long>(fit.years.size()) + 1;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (dim == "entity")
            ids[r] = fit.entity_of_row[r];
        else if (dim == "year")
            ids[r] = fit.year_of_row[r];
        else if (dim == "entity:year")
            ids[r] = fit.entity_of_row[r] * stride + fit.year_of_row[r];
        else
            fail("cluster_vcov: unknown dimension '" + dim + "'");
    }
    return ids;
}

Eigen::MatrixXd one_way_meat(const FitResult& fit, const std::vector<long long>& ids) {
    const int K = fit.K;
    std::map<long long, Eigen::VectorXd> sums;
    for (Eigen::Index r = 0; r < fit.Xd.rows(); ++r) {
        auto [it, fresh] = sums.try_emplace(ids[r], Eigen::VectorXd::Zero(K));
        it->second += fit.Xd.row(r).transpose() * fit.residuals[r];
    }
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(K, K);
    for (const auto& [g, s] : sums) meat += s * s.transpose();
    const auto G = static_cast<double>(sums.size());
    if (G < 2) fail("cluster_vcov: a clustering dimension has a single cluster");
    const double n = static_cast<double>(fit.Xd.rows());
    const double c = G / (G - 1.0) * (n - 1.0) / (n - static_cast<double>(K));
    return c * meat;
}

} // namespace

Eigen::MatrixXd cluster_vcov(const FitResult& fit, const std::vector<std::string>& dims,
                             bool* repaired) {
    require(!dims.empty(), "cluster_vcov: no dimensions given");
    require(fit.Xd.rows() == fit.residuals.size(), "cluster_vcov: fit lacks per-row scores");
    const Eigen::MatrixXd xtx = fit.Xd.transpose() * fit.Xd;
    const Eigen::MatrixXd bread = xtx.inverse();

    Eigen::MatrixXd meat;
    if (dims.size() == 1) {
        meat = one_way_meat(fit, cluster_ids(fit, dims[0]));
    } else if (dims.size() == 2) {
        meat = one_way_meat(fit, cluster_ids(fit, dims[0])) +
               one_way_meat(fit, cluster_ids(fit, dims[1])) -
               one_way_meat(fit, cluster_ids(fit, "entity:year"));
    } else {
        fail("cluster_vcov: at most two dimensions supported");
    }
    Eigen::MatrixXd V = bread * meat * bread;
    V = 0.5 * (V + V.transpose().eval());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
    if (es.eigenvalues().minCoeff() < 0) {
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
        V = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        if (repaired) *repaired = true;
    } else if (repaired) {
        *repaired = false;
    }
    return V;
}

FitResult fit_twfe_design(const Design& d, const std::vector<std::string>& fe_dims,
                          const std::vector<std::string>& cluster_dims,
                          const std::string& model_name, const std::string& dependent) {
    const auto n = d.y.size();
    const int K = static_cast<int>(d.X.cols());
    require(K >= 1, "fit_twfe: no regressors");
    const bool fe_e = std::find(fe_dims.begin(), fe_dims.end(), "entity") != fe_dims.end();
    const bool fe_t = std::find(fe_dims.begin(), fe_dims.end(), "year") != fe_dims.end();
    const long long min_rows =
        K + (fe_e ? d.n_entities_used : 0) + (fe_t ? d.n_years_used : 0) + (fe_dims.empty() ? 1 : 0);
    require(n >= min_rows, "fit_twfe: too few observations (" + std::to_string(n) + ") for " +
                               std::to_string(K) + " regressors and the fixed effects");

    FitResult fit;
    fit.model_name = model_name;
    fit.dependent = dependent;
    fit.names = d.names;
    fit.cluster_dims = cluster_dims;
    fit.entity_of_row = d.entity_of_row;
    fit.year_of_row = d.year_of_row;
    fit.entities = d.entities;
    fit.years = d.years;
    fit.nobs = n;
    fit.n_entities = d.n_entities_used;
    fit.n_years = d.n_years_used;
    fit.K = K;

    const double y_mean = d.y.mean();
    const double sst_raw = (d.y.array() - y_mean).square().sum();

    Eigen::VectorXd yd = d.y;
    Eigen::MatrixXd Xd = d.X;
    double absorbed = 0;
    if (!fe_dims.empty()) {
        Eigen::MatrixXd M(n, K + 1);
        M.col(0) = yd;
        M.rightCols(K) = Xd;
        within_transform(M, d.entity_of_row, d.year_of_row, fe_dims);
        yd = M.col(0);
        Xd = M.rightCols(K);
        const bool has_e = std::find(fe_dims.begin(), fe_dims.end(), "entity") != fe_dims.end();
        const bool has_t = std::find(fe_dims.begin(), fe_dims.end(), "year") != fe_dims.end();
        if (has_e && has_t)
            absorbed = d.n_entities_used + d.n_years_used - 1;
        else if (has_e)
            absorbed = d.n_entities_used;
        else
            absorbed = d.n_years_used;
    } else {
        // pooled regression with an intercept
        const double ym = yd.mean();
        yd.array() -= ym;
        for (int k = 0; k < K; ++k) Xd.col(k).array() -= Xd.col(k).mean();
        absorbed = 1;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xd);
    qr.setThreshold(1e-9);
    if (qr.rank() < K) {
        std::string cols;
        const auto perm = qr.colsPermutation().indices();
        for (int j = qr.rank(); j < K; ++j) {
            if (!cols.empty()) cols += ", ";
            cols += d.names[perm[j]];
        }
        fail("fit_twfe: collinear regressors after fixed effects: " + cols);
    }
    fit.beta = qr.solve(yd);
    fit.residuals = yd - Xd * fit.beta;
    fit.Xd = std::move(Xd);

    const double ssr = fit.residuals.squaredNorm();
    const double sst_within = yd.squaredNorm();
    fit.within_r2 = sst_within > 0 ? 1.0 - ssr / sst_within : 0.0;
    fit.r2 = sst_raw > 0 ? 1.0 - ssr / sst_raw : 0.0;

    const double df = static_cast<double>(n) - K - absorbed;
    require(df > 0, "fit_twfe: no residual degrees of freedom");
    fit.sigma2 = ssr / df;
    fit.vcov_iid = fit.sigma2 * (fit.Xd.transpose() * fit.Xd).inverse();

    if (!cluster_dims.empty())
        fit.vcov_clustered = cluster_vcov(fit, cluster_dims, &fit.vcov_psd_repaired);
    else
        fit.vcov_clustered = fit.vcov_iid;

    const double sigma2_ml = ssr / static_cast<double>(n);
    fit.loglik = -0.5 * static_cast<double>(n) *
                 (std::log(2.0 * M_PI * sigma2_ml) + 1.0);
    const double p = K + absorbed + 1;
    fit.aic = -2.0 * fit.loglik + 2.0 * p;
    fit.bic = -2.0 * fit.loglik + std::log(static_cast<double>(n)) * p;
    return fit;
}

FitResult fit_twfe(const ModelSpec& spec, const PanelDataset& panel) {
    ResolvedModel rm = materialize(spec, panel);
    Design d = assemble_design(rm.panel, rm.dependent, rm.regressors);
    require(d.n_entities_used >= 2, "fit_twfe: need at least 2 entities in the sample");
    FitResult fit =
        fit_twfe_design(d, spec.fe_dims, spec.cluster_dims, spec.name, rm.dependent);
    fit.horizons = rm.horizons;
    return fit;
}

double coef_p_value(const FitResult& fit, int k, bool t_fallback) {
    require(k >= 0 && k < fit.K, "coef_p_value: index out of range");
    const double se = fit.se(k);
    if (!(se > 0)) return fit.beta[k] == 0.0 ? 1.0 : 0.0;
    const double stat = fit.beta[k] / se;
    if (!t_fallback || fit.cluster_dims.empty()) return stats::norm_two_sided_p(stat);
    long long min_g = fit.nobs;
    for (const auto& dim : fit.cluster_dims) {
        std::set<long long> groups;
        for (std::size_t r = 0; r < fit.entity_of_row.size(); ++r)
            groups.insert(dim == "entity" ? fit.entity_of_row[r] : fit.year_of_row[r]);
        min_g = std::min<long long>(min_g, static_cast<long long>(groups.size()));
    }
    return stats::t_two_sided_p(stat, static_cast<double>(min_g - 1));
}

LinearCombination linear_combination(const FitResult& fit, const Eigen::VectorXd& weights) {
    require(weights.size() == fit.beta.size(), "linear_combination: weight length != K");
    LinearCombination lc;
    lc.estimate = weights.dot(fit.beta);
    const double var = weights.dot(fit.vcov_clustered * weights);
    lc.se = var > 0 ? std::sqrt(var) : 0.0;
    lc.z = lc.se > 0 ? lc.estimate / lc.se : 0.0;
    lc.p = lc.se > 0 ? stats::norm_two_sided_p(lc.z) : (lc.estimate == 0.0 ? 1.0 : 0.0);
    return lc;
}

} // namespace stpanel
