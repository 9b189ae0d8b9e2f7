#pragma once

#include <string>
#include <vector>

#include "stpanel/diagnostics.hpp"
#include "stpanel/factors.hpp"
#include "stpanel/spatial.hpp"
#include "stpanel/twfe.hpp"

namespace stpanel {

// Unified coefficient-table view of any fit.
struct Reportable {
    std::string model;
    std::string estimator;
    std::string dependent;
    std::vector<std::string> terms;
    std::vector<double> estimate, se, p;
    std::vector<int> horizons;
    // auxiliary parameter rows (spatial rho/delta with their SEs)
    std::vector<std::string> extra_names;
    std::vector<double> extra_est, extra_se, extra_p;
    long long nobs = 0;
    double r2 = 0, within_r2 = 0;
    double loglik = 0, aic = 0, bic = 0;
    bool has_loglik = false, has_within = false, has_r2 = false;
    std::vector<std::string> notes;
};

Reportable to_report(const FitResult& fit);
Reportable to_report(const SpatialFit& fit);
Reportable to_report(const FactorFit& fit);

// Aligned console table in the journal style: estimate rows with significance
// codes, standard errors in parentheses beneath, fit statistics block.
std::string text_table(const std::vector<Reportable>& fits);

// Tidy CSVs; every table starts with a "# manifest=<hash>" comment line.
std::string csv_coefficients(const std::vector<Reportable>& fits, const std::string& manifest);
std::string csv_fitstats(const std::vector<Reportable>& fits, const std::string& manifest);
// model, term, horizon, estimate, ci_lo, ci_hi, se, p, signif
std::string csv_plot_data(const std::vector<Reportable>& fits, bool flip_sign,
                          const std::string& manifest);
std::string csv_impacts(const std::string& model, const ImpactsResult& imp,
                        const std::string& manifest);
std::string csv_csd(const std::vector<std::pair<std::string, CsdTestResult>>& tests,
                    const std::string& manifest);
std::string csv_model_comparison(const std::vector<ModelComparisonRow>& rows,
                                 const std::string& manifest);

std::string json_report(const std::vector<Reportable>& fits, const std::string& manifest);

} // namespace stpanel
