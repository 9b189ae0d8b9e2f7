#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stpanel/common.hpp"

namespace stpanel {

// Canonical county indicator schema for the typology feature CSV.
inline const std::vector<std::string> kFeatureSchema = {
    "rural_urban", "population", "edu_attain", "median_earnings", "female_lfp",
    "diversity_index"};

struct FeatureTable {
    std::vector<std::string> ids;
    std::vector<std::string> feature_names;
    Eigen::MatrixXd raw; // original values (profiles)
    Eigen::MatrixXd z;   // standardized columns
    Eigen::VectorXd mean, sd;
    std::vector<std::string> excluded; // rows dropped for missing cells
    // passive descriptors: averaged in profiles, never clustered
    std::vector<std::string> passive_names;
    Eigen::MatrixXd passive;
};

// z-scores with the n-1 standard deviation; rejects zero-variance columns.
FeatureTable standardize(const std::vector<std::string>& ids, const Eigen::MatrixXd& raw,
                         const std::vector<std::string>& names);

// Agglomerative dendrogram. merges[m] = {a, b} joins clusters a and b
// (ids < n are leaves, id n+m is the cluster born at step m); heights are
// Ward.D2 distances, non-decreasing.
struct Dendrogram {
    int n = 0;
    std::vector<std::array<int, 2>> merges;
    std::vector<double> heights;
};

// Ward.D2 linkage on Euclidean distances via the nearest-neighbor chain and
// the Lance-Williams update. Deterministic, index-order tie-breaking.
Dendrogram hclust_ward(const Eigen::MatrixXd& pts);

// Labels 0..k-1 after cutting the dendrogram at k clusters (cluster numbers
// assigned by first appearance in row order).
std::vector<int> cut_k(const Dendrogram& dg, int k);

// Total within-cluster sum of squares at every k (index k-1 holds WSS(k)).
std::vector<double> wss_curve(const Dendrogram& dg);

struct KSelection {
    std::vector<double> wss;        // k = 1..k_max
    std::vector<double> silhouette; // k = 1..k_max (k=1 undefined, NaN)
    std::vector<double> gap;        // k = 1..k_max
    std::vector<double> gap_se;
    int k_elbow = 0, k_silhouette = 0, k_gap = 0;
    std::string note; // agreement / disagreement remark
};

KSelection choose_k(const Eigen::MatrixXd& z, const Dendrogram& dg, int k_max, int B,
                    std::uint64_t seed);

double mean_silhouette(const Eigen::MatrixXd& pts, const std::vector<int>& labels, int k);

struct TypologyResult {
    std::vector<int> types;          // 1..k, 1 = highest composite
    std::vector<int> type_sizes;     // per type
    Eigen::MatrixXd type_means_raw;  // k x n_features
    Eigen::MatrixXd type_means_passive; // k x n_passive
};

// Cuts at k and orders labels by a descending composite of the standardized
// indicators (education, earnings, female LFP, diversity, -rural, log pop
// when the canonical schema is present; the plain z-mean otherwise).
TypologyResult cut_and_label(const FeatureTable& f, const Dendrogram& dg, int k);

} // namespace stpanel
