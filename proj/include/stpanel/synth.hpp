#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stpanel/panel.hpp"
#include "stpanel/weights.hpp"

namespace stpanel::synth {

// Seeded data-generating processes used as independent oracles for the
// estimators. Identical seeds produce identical panels on every run.

struct DgpConfig {
    int N = 200;
    int T = 18;
    Eigen::VectorXd beta;      // slope truth
    double rho = 0.0;          // spatial lag
    double delta = 0.0;        // spatial error
    int n_factors = 0;
    double factor_scale = 1.0;
    double noise_sd = 0.1;
    double fe_sd = 1.0;
    double x_alpha_corr = 0.3; // correlation of regressors with entity effects
    std::uint64_t seed = 1;
};

struct Truth {
    Eigen::VectorXd beta;
    double rho = 0, delta = 0;
    Eigen::VectorXd alpha;  // entity effects
    Eigen::VectorXd gamma;  // year effects
    Eigen::MatrixXd u;      // disturbance (after spatial error filter), N x T
    Eigen::MatrixXd factors;  // T x d
    Eigen::MatrixXd loadings; // N x d
};

// y_it = x_it' beta + alpha_i + gamma_t + eps. Columns "y", "x1".."xK".
std::pair<PanelDataset, Truth> gen_twfe(const DgpConfig& cfg);

// y_t = (I - rho W)^{-1} (X_t beta + alpha + gamma_t + u_t),
// u_t = (I - delta W)^{-1} eps_t, per year. Entity names match W's order.
std::pair<PanelDataset, Truth> gen_spatial(const DgpConfig& cfg, const SpatialWeights& W);

// Adds smooth common factors with unit-specific loadings to the TWFE DGP.
std::pair<PanelDataset, Truth> gen_factor(const DgpConfig& cfg);

// k isotropic gaussian blobs at pairwise center distance `sep`.
// dim defaults to k (centers on a scaled simplex in the first k coordinates).
struct Blobs {
    Eigen::MatrixXd points; // (k*n_per) x dim
    std::vector<int> labels;
};
Blobs gen_blobs(int k, int n_per, double sigma, double sep, std::uint64_t seed, int dim = 0);

// Zero-padded deterministic entity names "00000", "00001", ...
std::vector<std::string> entity_names(int n);

} // namespace stpanel::synth
