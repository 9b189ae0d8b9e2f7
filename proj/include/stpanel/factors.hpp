#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stpanel/model_spec.hpp"
#include "stpanel/panel.hpp"

namespace stpanel {

// Heterogeneous-time-trends fit: additive two-way effects plus d smooth
// latent time factors with unit-specific loadings, estimated by iterated
// principal components on roughness-penalized residuals.
struct FactorFit {
    std::string model_name;
    std::string dependent;
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::VectorXd se;       // iid sandwich on the defactored regression
    Eigen::MatrixXd factors;  // T x d, F'F = T*I
    Eigen::MatrixXd loadings; // N x d, L'L diagonal
    int d = 0;
    double sigma2 = 0;
    double r2 = 0;
    double smoothing = 0; // second-difference penalty weight (GCV unless given)
    int iterations = 0;
    bool converged = false;
    double loglik = 0, aic = 0, bic = 0;
    Eigen::MatrixXd residual_mat; // defactored residuals, entities x years
    std::vector<std::string> entities;
    std::vector<int> years;
    long long nobs = 0;
    int K = 0;
    std::vector<std::string> notes;
    std::vector<int> horizons;
    std::vector<double> objective_path; // penalized SSR per iteration
};

// smoothing <= 0 requests GCV selection on the first iteration.
FactorFit fit_htt(const ModelSpec& spec, const PanelDataset& p, int d, double smoothing = -1.0);

struct FactorSelection {
    Eigen::VectorXd scree;        // eigenvalues of the smoothed residual covariance
    Eigen::VectorXd cum_share;    // cumulative variance shares
    std::vector<double> aic, bic; // per candidate d = 0..d_max
    int chosen_aic = 0, chosen_bic = 0, elbow = 0;
};

FactorSelection select_factors(const ModelSpec& spec, const PanelDataset& p, int d_max,
                               double smoothing = -1.0);

} // namespace stpanel
