#include <doctest.h>

#include <Eigen/Dense>
#include <map>
#include <numeric>

#include "oracles.hpp"
#include "stpanel/rng.hpp"
#include "stpanel/synth.hpp"
#include "stpanel/typology.hpp"

using namespace stpanel;

TEST_CASE("standardize: two-point column and idempotence") {
    Eigen::MatrixXd raw(2, 1);
    raw << 1, 3;
    FeatureTable f = standardize({"a", "b"}, raw, {"v"});
    CHECK(f.z(0, 0) == doctest::Approx(-0.7071067812).epsilon(1e-9));
    CHECK(f.z(1, 0) == doctest::Approx(0.7071067812).epsilon(1e-9));
    FeatureTable g = standardize({"a", "b"}, f.z, {"v"});
    CHECK((g.z - f.z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("standardize rejects a zero-variance column by name") {
    Eigen::MatrixXd raw(3, 2);
    raw << 1, 5, 2, 5, 3, 5;
    CHECK_THROWS_WITH_AS(standardize({"a", "b", "c"}, raw, {"ok", "flat"}),
                         doctest::Contains("flat"), Error);
}

TEST_CASE("two points merge at their Euclidean distance") {
    Eigen::MatrixXd pts(2, 2);
    pts << 0, 0, 3, 4;
    Dendrogram dg = hclust_ward(pts);
    REQUIRE(dg.merges.size() == 1);
    CHECK(dg.heights[0] == doctest::Approx(5.0));
}

TEST_CASE("three collinear points: nearest pair first") {
    Eigen::MatrixXd pts(3, 1);
    pts << 0, 1, 10;
    Dendrogram dg = hclust_ward(pts);
    CHECK(dg.merges[0][0] == 0);
    CHECK(dg.merges[0][1] == 1);
    // heights monotone
    CHECK(dg.heights[0] <= dg.heights[1]);
}

TEST_CASE("Ward WSS equals brute-force partition WSS at every cut") {
    Rng rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 12 + (int)rng.below(10);
        const int dim = 2 + (int)rng.below(3);
        Eigen::MatrixXd pts(n, dim);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < dim; ++d) pts(i, d) = rng.normal() * (1.0 + d);
        Dendrogram dg = hclust_ward(pts);
        const std::vector<double> wss = wss_curve(dg);
        for (int k = 1; k <= n; ++k) {
            const double brute = oracles::brute_wss(pts, cut_k(dg, k));
            const double rel = std::fabs(wss[k - 1] - brute) / std::max(1e-12, brute);
            if (brute > 1e-12)
                CHECK(rel < 1e-8);
            else
                CHECK(wss[k - 1] < 1e-10);
        }
        // merge heights are non-decreasing
        for (std::size_t m = 1; m < dg.heights.size(); ++m)
            CHECK(dg.heights[m] >= dg.heights[m - 1] - 1e-12);
    }
}

TEST_CASE("clustering partition invariant to row permutation") {
    Rng rng(5);
    const int n = 30;
    Eigen::MatrixXd pts(n, 3);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) pts(i, d) = rng.normal();
    std::vector<int> base = cut_k(hclust_ward(pts), 4);
    // random permutation
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Eigen::MatrixXd shuffled(n, 3);
    for (int i = 0; i < n; ++i) shuffled.row(i) = pts.row(perm[i]);
    std::vector<int> lab = cut_k(hclust_ward(shuffled), 4);
    // partitions agree up to label mapping
    std::map<std::pair<int, int>, int> pairs;
    for (int i = 0; i < n; ++i) {
        auto key = std::make_pair(lab[i], base[perm[i]]);
        pairs[key]++;
    }
    std::map<int, int> seen_l, seen_b;
    for (auto& [key, cnt] : pairs) {
        CHECK(seen_l.insert({key.first, key.second}).first->second == key.second);
        CHECK(seen_b.insert({key.second, key.first}).first->second == key.first);
    }
}

TEST_CASE("planted blobs: exact recovery, unanimous criteria, high silhouette") {
    synth::Blobs blobs = synth::gen_blobs(3, 25, 0.1, 10.0, 31);
    Dendrogram dg = hclust_ward(blobs.points);
    std::vector<int> lab = cut_k(dg, 3);
    // exact recovery up to relabeling
    std::map<int, int> mapping;
    bool exact = true;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        auto [it, fresh] = mapping.try_emplace(blobs.labels[i], lab[i]);
        if (it->second != lab[i]) exact = false;
    }
    CHECK(exact);
    KSelection sel = choose_k(blobs.points, dg, 8, 50, 7);
    CHECK(sel.k_elbow == 3);
    CHECK(sel.k_silhouette == 3);
    CHECK(sel.k_gap == 3);
    CHECK(sel.silhouette[2] > 0.8);

    // two planted blobs: silhouette above 0.9 at k = 2
    synth::Blobs two = synth::gen_blobs(2, 30, 0.1, 10.0, 13);
    double sil = mean_silhouette(two.points, cut_k(hclust_ward(two.points), 2), 2);
    CHECK(sil > 0.9);
}

TEST_CASE("silhouette values stay within [-1, 1]") {
    Rng rng(77);
    Eigen::MatrixXd pts(40, 2);
    for (int i = 0; i < 40; ++i)
        for (int d = 0; d < 2; ++d) pts(i, d) = rng.normal();
    Dendrogram dg = hclust_ward(pts);
    for (int k = 2; k <= 6; ++k) {
        const double s = mean_silhouette(pts, cut_k(dg, k), k);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("singleton cut: WSS is zero at k = n") {
    Rng rng(2);
    Eigen::MatrixXd pts(9, 2);
    for (int i = 0; i < 9; ++i)
        for (int d = 0; d < 2; ++d) pts(i, d) = rng.normal();
    const std::vector<double> wss = wss_curve(hclust_ward(pts));
    CHECK(wss[8] == 0.0);
}

TEST_CASE("cut_and_label orders types by composite and reports profiles") {
    // three obvious groups in the canonical schema; group quality increasing
    Rng rng(3);
    const int per = 12;
    Eigen::MatrixXd raw(3 * per, 6);
    for (int g = 0; g < 3; ++g)
        for (int i = 0; i < per; ++i) {
            const int r = g * per + i;
            const double q = static_cast<double>(g); // 0 worst, 2 best
            raw(r, 0) = 8.0 - 3.0 * q + 0.1 * rng.normal();      // rural code drops
            raw(r, 1) = 20000 + 80000 * q + 500 * rng.normal();  // population rises
            raw(r, 2) = 11 + 9 * q + 0.2 * rng.normal();         // education
            raw(r, 3) = 30000 + 4000 * q + 100 * rng.normal();   // earnings
            raw(r, 4) = 50 + 11 * q + 0.3 * rng.normal();        // female LFP
            raw(r, 5) = 0.6 + 0.3 * q + 0.01 * rng.normal();     // diversity
        }
    std::vector<std::string> ids;
    for (int i = 0; i < 3 * per; ++i) ids.push_back("c" + std::to_string(i));
    FeatureTable f = standardize(ids, raw, kFeatureSchema);
    Dendrogram dg = hclust_ward(f.z);
    TypologyResult res = cut_and_label(f, dg, 3);
    CHECK(res.type_sizes == std::vector<int>{per, per, per});
    // type 1 = least vulnerable = generated group g = 2
    for (int i = 0; i < per; ++i) CHECK(res.types[2 * per + i] == 1);
    for (int i = 0; i < per; ++i) CHECK(res.types[0 * per + i] == 3);
    // profile means reflect the raw scale
    CHECK(res.type_means_raw(0, 1) > res.type_means_raw(2, 1)); // population
    CHECK(res.type_means_raw(0, 4) > res.type_means_raw(2, 4)); // female LFP
}
