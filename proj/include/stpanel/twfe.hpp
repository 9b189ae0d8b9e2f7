#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "stpanel/model_spec.hpp"
#include "stpanel/panel.hpp"

namespace stpanel {

// Output of the two-way fixed-effects estimator. Holds the demeaned design
// and per-row bookkeeping so clustered covariances and residual diagnostics
// can be recomputed without re-assembling the data.
struct FitResult {
    std::string model_name;
    std::string dependent;
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::MatrixXd vcov_iid;
    Eigen::MatrixXd vcov_clustered; // = vcov_iid when no clustering requested
    std::vector<std::string> cluster_dims;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd Xd;             // demeaned regressors (scores = Xd_r * e_r)
    std::vector<int> entity_of_row;
    std::vector<int> year_of_row;
    std::vector<std::string> entities;
    std::vector<int> years;
    long long nobs = 0;
    int n_entities = 0, n_years = 0, K = 0;
    double r2 = 0, within_r2 = 0, sigma2 = 0;
    double loglik = 0, aic = 0, bic = 0;
    bool vcov_psd_repaired = false;
    std::vector<std::string> notes;
    std::vector<int> horizons; // per coefficient, for plot output

    double se(int k) const { return std::sqrt(vcov_clustered(k, k)); }
    // Residuals arranged as an entities x years matrix with a missing mask.
    std::pair<Eigen::MatrixXd, MaskXb> residual_matrix() const;
};

// Iterated alternating demeaning over the fe dimensions ("entity"/"year"),
// in place, on an already assembled row set. Converges in two sweeps on a
// balanced panel; throws after 10,000 sweeps (pathological missingness).
void within_transform(Eigen::MatrixXd& M, const std::vector<int>& entity_of_row,
                      const std::vector<int>& year_of_row,
                      const std::vector<std::string>& fe_dims);

// Cameron-Gelbach-Miller multiway clustered covariance with the
// G/(G-1) * (n-1)/(n-K) small-sample factor applied per dimension.
// Non-PSD results are repaired by flooring eigenvalues at zero.
Eigen::MatrixXd cluster_vcov(const FitResult& fit, const std::vector<std::string>& dims,
                             bool* repaired = nullptr);

FitResult fit_twfe(const ModelSpec& spec, const PanelDataset& panel);

// Runs the estimator on an already assembled design (shared with the
// spatial and factor modules and with tests that bypass materialization).
FitResult fit_twfe_design(const Design& d, const std::vector<std::string>& fe_dims,
                          const std::vector<std::string>& cluster_dims,
                          const std::string& model_name = "", const std::string& dependent = "");

struct LinearCombination {
    double estimate = 0, se = 0, z = 0, p = 1;
};
LinearCombination linear_combination(const FitResult& fit, const Eigen::VectorXd& weights);

// Two-sided p-value of coefficient k. Normal reference by default; with
// t_fallback the Student t with dof = min cluster count - 1 is used instead.
double coef_p_value(const FitResult& fit, int k, bool t_fallback = false);

} // namespace stpanel
