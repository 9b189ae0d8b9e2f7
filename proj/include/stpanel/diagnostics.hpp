#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "stpanel/panel.hpp"

namespace stpanel {

struct CsdTestResult {
    std::string method;
    double statistic = 0;
    double p_value = 1;
    std::string alternative = "cross-sectional dependence";
    double avg_corr = 0;     // rho-bar
    double avg_abs_corr = 0; // |rho|-bar
    std::vector<std::string> warnings; // zero-variance exclusions etc.
    std::optional<double> dof;         // chi-square tests only
};

// Pesaran CD statistic on an entities x years matrix. Pairwise-deletion
// correlations; entities with zero variance are excluded with a warning.
CsdTestResult pesaran_cd(const Eigen::MatrixXd& E, const MaskXb& missing);
CsdTestResult pesaran_cd(const Eigen::MatrixXd& E);

// Breusch-Pagan LM (chi-square with N(N-1)/2 dof) and its scaled
// standard-normal version.
CsdTestResult bp_lm(const Eigen::MatrixXd& E, const MaskXb& missing);
CsdTestResult bp_lm(const Eigen::MatrixXd& E);
CsdTestResult scaled_lm(const Eigen::MatrixXd& E, const MaskXb& missing);
CsdTestResult scaled_lm(const Eigen::MatrixXd& E);

// Randomisation variant: within-entity time-order permutations of the rows,
// two-sided permutation p-value for the CD statistic. Experimental.
CsdTestResult pesaran_cd_permutation(const Eigen::MatrixXd& E, const MaskXb& missing,
                                     int n_perm, std::uint64_t seed);

// Pesaran CD on the residuals of a fit, mapped back to entity x year.
struct FitResult;
struct SpatialFit;
struct FactorFit;
CsdTestResult residual_csd(const FitResult& fit);
CsdTestResult residual_csd(const SpatialFit& fit);
CsdTestResult residual_csd(const FactorFit& fit);

// Model comparison by information criteria, ranked by ascending AIC.
struct ModelComparisonRow {
    std::string name;
    std::string dependent;
    double loglik = 0, aic = 0, bic = 0;
    long long nobs = 0;
};
std::vector<ModelComparisonRow> compare_models(std::vector<ModelComparisonRow> fits,
                                               bool require_same_sample = true);

} // namespace stpanel
