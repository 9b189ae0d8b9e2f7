#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stpanel/model_spec.hpp"
#include "stpanel/panel.hpp"
#include "stpanel/weights.hpp"

namespace stpanel {

struct SpatialOptions {
    std::optional<double> fixed_rho;   // pin the lag parameter (tests/nesting checks)
    std::optional<double> fixed_delta; // pin the error parameter
    double boundary_margin = 1e-5;     // relative inset of the feasible interval
    int grid_points = 5;               // SARAR restart grid per axis
};

// Maximum-likelihood fit of a spatial panel model on two-way demeaned data.
// vcov is ordered (beta..., rho?, delta?) and comes from the analytic
// information matrix of the full likelihood.
struct SpatialFit {
    std::string model_name;
    std::string dependent;
    Estimator kind = Estimator::Slm;
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    std::optional<double> rho;
    std::optional<double> delta;
    double sigma2 = 0;
    Eigen::MatrixXd vcov;
    double loglik = 0, aic = 0, bic = 0;
    Eigen::MatrixXd residual_mat; // idiosyncratic residuals, entities x years
    std::vector<std::string> entities;
    std::vector<int> years;
    long long nobs = 0;
    int K = 0;
    std::vector<std::string> notes; // entities dropped to balance the sample, etc.
    std::vector<int> horizons;
    std::shared_ptr<const SpatialWeights> weights; // operator over `entities`

    int rho_index() const { return K; }
    int delta_index() const { return kind == Estimator::Sarar ? K + 1 : K; }
    double se_beta(int k) const { return std::sqrt(vcov(k, k)); }
};

SpatialFit fit_slm(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                   const SpatialOptions& opt = {});
SpatialFit fit_sem(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                   const SpatialOptions& opt = {});
SpatialFit fit_sarar(const ModelSpec& spec, const PanelDataset& p, const SpatialWeights& W,
                     const SpatialOptions& opt = {});

struct ImpactRow {
    std::string name;
    double direct = 0, indirect = 0, total = 0;
    double se_direct = 0, se_indirect = 0, se_total = 0;
    double p_direct = 1, p_indirect = 1, p_total = 1;
};

// LeSage-Pace impact decomposition. Point estimates use exact sparse solves
// of (I - rho W); standard errors are the spread over n_sim parametric draws
// of (beta, rho) from the fit's asymptotic normal.
struct ImpactsResult {
    std::vector<ImpactRow> rows;
    int n_sim = 0;
    std::uint64_t seed = 0;
};

ImpactsResult impacts(const SpatialFit& fit, int n_sim, std::uint64_t seed);

// Balanced extraction shared with the factor estimator: complete entities
// over the usable years of the resolved design.
struct BalancedPanel {
    Eigen::MatrixXd Y;
    std::vector<Eigen::MatrixXd> X;
    std::vector<std::string> entities;
    std::vector<int> years;
    std::vector<std::string> dropped;
};
BalancedPanel balance_panel(const PanelDataset& p, const std::string& dependent,
                            const std::vector<std::string>& regressors);

// Two-way demeaning of a complete matrix (exact closed form).
void demean_two_way(Eigen::MatrixXd& M);

} // namespace stpanel
