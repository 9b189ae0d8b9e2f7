#pragma once

#include <string>
#include <vector>

namespace stpanel::stats {

// Standard normal CDF / two-sided p-value.
double norm_cdf(double z);
double norm_two_sided_p(double z);

// Upper-tail probability of a chi-square variate with `dof` degrees of
// freedom (regularized incomplete gamma).
double chisq_sf(double x, double dof);

// Two-sided p-value of a t statistic with `dof` degrees of freedom.
double t_two_sided_p(double t, double dof);

// Significance code at the thresholds 0.001 / 0.01 / 0.05 / 0.1:
// "***", "**", "*", ".", "".
std::string signif_code(double p);

// R type-7 quantile of a sample (sorted copy taken internally).
double quantile(std::vector<double> x, double prob);

struct Summary {
    long long n = 0;
    double mean = 0, sd = 0, min = 0, p25 = 0, p75 = 0, max = 0;
};
Summary summarize(const std::vector<double>& x);

} // namespace stpanel::stats
