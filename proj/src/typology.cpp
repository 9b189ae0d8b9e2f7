#include "stpanel/typology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "stpanel/rng.hpp"

namespace stpanel {

FeatureTable standardize(const std::vector<std::string>& ids, const Eigen::MatrixXd& raw,
                         const std::vector<std::string>& names) {
    require(raw.rows() >= 2, "standardize: need at least 2 rows");
    require(raw.cols() >= 1, "standardize: need at least 1 column");
    require(static_cast<Eigen::Index>(ids.size()) == raw.rows(),
            "standardize: ids/rows mismatch");
    require(static_cast<Eigen::Index>(names.size()) == raw.cols(),
            "standardize: names/columns mismatch");
    FeatureTable f;
    f.ids = ids;
    f.feature_names = names;
    f.raw = raw;
    f.mean.resize(raw.cols());
    f.sd.resize(raw.cols());
    f.z.resize(raw.rows(), raw.cols());
    const double n = static_cast<double>(raw.rows());
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        f.mean[c] = raw.col(c).mean();
        const double ss = (raw.col(c).array() - f.mean[c]).square().sum();
        f.sd[c] = std::sqrt(ss / (n - 1.0));
        if (!(f.sd[c] > 0))
            fail("standardize: column '" + names[c] + "' has zero variance");
        f.z.col(c) = (raw.col(c).array() - f.mean[c]) / f.sd[c];
    }
    return f;
}

Dendrogram hclust_ward(const Eigen::MatrixXd& pts) {
    const auto n = static_cast<int>(pts.rows());
    require(n >= 2, "hclust_ward: need at least 2 points");
    Dendrogram dg;
    dg.n = n;

    // squared Euclidean distances; Ward.D2 heights are sqrt of the updated
    // values and each merge adds height^2 / 2 to the total WSS
    Eigen::MatrixXd d2(n, n);
    for (int i = 0; i < n; ++i) {
        d2(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double v = (pts.row(i) - pts.row(j)).squaredNorm();
            d2(i, j) = v;
            d2(j, i) = v;
        }
    }
    std::vector<double> size(n, 1.0);
    std::vector<bool> active(n, true);
    std::vector<int> chain;
    chain.reserve(n);
    struct RawMerge {
        int a, b;
        double h2;
    };
    std::vector<RawMerge> raw;
    raw.reserve(n - 1);

    int n_active = n;
    while (n_active > 1) {
        if (chain.empty()) {
            for (int i = 0; i < n; ++i)
                if (active[i]) {
                    chain.push_back(i);
                    break;
                }
        }
        while (true) {
            const int a = chain.back();
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < n; ++c) {
                if (!active[c] || c == a) continue;
                if (d2(a, c) < best_d) {
                    best_d = d2(a, c);
                    best = c;
                }
            }
            if (chain.size() >= 2 && best_d >= d2(a, chain[chain.size() - 2])) {
                // reciprocal nearest neighbors: merge a with the previous link
                const int b = chain[chain.size() - 2];
                chain.pop_back();
                chain.pop_back();
                raw.push_back({std::min(a, b), std::max(a, b), d2(a, b)});
                // Lance-Williams Ward update into slot min(a,b)
                const int keep = std::min(a, b), gone = std::max(a, b);
                const double si = size[keep], sj = size[gone];
                for (int c = 0; c < n; ++c) {
                    if (!active[c] || c == keep || c == gone) continue;
                    const double sk = size[c];
                    const double v = ((si + sk) * d2(keep, c) + (sj + sk) * d2(gone, c) -
                                      sk * d2(keep, gone)) /
                                     (si + sj + sk);
                    d2(keep, c) = v;
                    d2(c, keep) = v;
                }
                size[keep] += size[gone];
                active[gone] = false;
                --n_active;
                break;
            }
            chain.push_back(best);
        }
    }

    // order merges by height (stable on ties) and relabel via union-find
    std::vector<int> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        if (raw[x].h2 != raw[y].h2) return raw[x].h2 < raw[y].h2;
        return x < y;
    });
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<int> cluster_id(n);
    std::iota(cluster_id.begin(), cluster_id.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t m = 0; m < order.size(); ++m) {
        const RawMerge& rm = raw[order[m]];
        const int ra = find(rm.a), rb = find(rm.b);
        dg.merges.push_back({std::min(cluster_id[ra], cluster_id[rb]),
                             std::max(cluster_id[ra], cluster_id[rb])});
        dg.heights.push_back(std::sqrt(rm.h2));
        parent[rb] = ra;
        cluster_id[ra] = n + static_cast<int>(m);
    }
    return dg;
}

std::vector<int> cut_k(const Dendrogram& dg, int k) {
    const int n = dg.n;
    require(k >= 1 && k <= n, "cut_k: k out of range");
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    // replay merges; track the leaf slot owning each cluster id
    std::vector<int> slot_of_id(2 * n - 1, -1);
    for (int i = 0; i < n; ++i) slot_of_id[i] = i;
    for (int m = 0; m < n - k; ++m) {
        const int a = slot_of_id[dg.merges[m][0]];
        const int b = slot_of_id[dg.merges[m][1]];
        const int ra = find(a), rb = find(b);
        parent[rb] = ra;
        slot_of_id[n + m] = ra;
    }
    std::vector<int> labels(n, -1);
    int next = 0;
    std::vector<int> label_of_root(n, -1);
    for (int i = 0; i < n; ++i) {
        const int r = find(i);
        if (label_of_root[r] < 0) label_of_root[r] = next++;
        labels[i] = label_of_root[r];
    }
    return labels;
}

std::vector<double> wss_curve(const Dendrogram& dg) {
    const int n = dg.n;
    std::vector<double> wss(n, 0.0);
    // wss[k-1] = WSS at k clusters = sum of h^2/2 over the first n-k merges
    double acc = 0;
    for (int k = n; k >= 1; --k) {
        wss[k - 1] = acc;
        if (k > 1) acc += dg.heights[n - k] * dg.heights[n - k] / 2.0;
    }
    return wss;
}

double mean_silhouette(const Eigen::MatrixXd& pts, const std::vector<int>& labels, int k) {
    const auto n = pts.rows();
    require(k >= 2, "silhouette: undefined for k < 2");
    std::vector<double> cluster_count(k, 0.0);
    for (auto l : labels) cluster_count[l] += 1.0;
    double total = 0;
    std::vector<double> mean_to(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::fill(mean_to.begin(), mean_to.end(), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_to[labels[j]] += (pts.row(i) - pts.row(j)).norm();
        }
        const int li = labels[i];
        double a = cluster_count[li] > 1 ? mean_to[li] / (cluster_count[li] - 1.0) : 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == li || cluster_count[c] == 0) continue;
            b = std::min(b, mean_to[c] / cluster_count[c]);
        }
        double s = 0.0;
        if (cluster_count[li] > 1 && std::isfinite(b) && std::max(a, b) > 0)
            s = (b - a) / std::max(a, b);
        total += s;
    }
    return total / static_cast<double>(n);
}

KSelection choose_k(const Eigen::MatrixXd& z, const Dendrogram& dg, int k_max, int B,
                    std::uint64_t seed) {
    const auto n = z.rows();
    require(k_max >= 2 && k_max <= n - 1, "choose_k: k_max out of range");
    require(B >= 50, "choose_k: need at least 50 gap reference sets");
    KSelection sel;
    const std::vector<double> wss_all = wss_curve(dg);
    for (int k = 1; k <= k_max; ++k) sel.wss.push_back(wss_all[k - 1]);

    // elbow: largest curvature of the WSS profile
    sel.k_elbow = 2;
    double best_curv = -std::numeric_limits<double>::infinity();
    for (int k = 2; k < k_max; ++k) {
        const double curv = (sel.wss[k - 2] - sel.wss[k - 1]) - (sel.wss[k - 1] - sel.wss[k]);
        if (curv > best_curv) {
            best_curv = curv;
            sel.k_elbow = k;
        }
    }

    // silhouette
    sel.silhouette.assign(k_max, std::numeric_limits<double>::quiet_NaN());
    sel.k_silhouette = 2;
    double best_sil = -std::numeric_limits<double>::infinity();
    for (int k = 2; k <= k_max; ++k) {
        const double s = mean_silhouette(z, cut_k(dg, k), k);
        sel.silhouette[k - 1] = s;
        if (s > best_sil) {
            best_sil = s;
            sel.k_silhouette = k;
        }
    }

    // gap statistic with a uniform-box reference over per-feature ranges
    Eigen::VectorXd lo(z.cols()), hi(z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        lo[c] = z.col(c).minCoeff();
        hi[c] = z.col(c).maxCoeff();
    }
    Eigen::MatrixXd log_wstar(B, k_max);
    Rng rng(seed);
    for (int b = 0; b < B; ++b) {
        Rng sub = rng.substream(static_cast<std::uint64_t>(b) + 1);
        Eigen::MatrixXd ref(n, z.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index c = 0; c < z.cols(); ++c) ref(i, c) = sub.uniform(lo[c], hi[c]);
        const std::vector<double> wref = wss_curve(hclust_ward(ref));
        for (int k = 1; k <= k_max; ++k)
            log_wstar(b, k - 1) = std::log(std::max(wref[k - 1], 1e-300));
    }
    sel.gap.resize(k_max);
    sel.gap_se.resize(k_max);
    for (int k = 1; k <= k_max; ++k) {
        const double mean_star = log_wstar.col(k - 1).mean();
        const double sd_star = std::sqrt(
            (log_wstar.col(k - 1).array() - mean_star).square().sum() / B);
        sel.gap[k - 1] = mean_star - std::log(std::max(sel.wss[k - 1], 1e-300));
        sel.gap_se[k - 1] = sd_star * std::sqrt(1.0 + 1.0 / B);
    }
    sel.k_gap = k_max;
    for (int k = 1; k < k_max; ++k)
        if (sel.gap[k - 1] >= sel.gap[k] - sel.gap_se[k]) {
            sel.k_gap = k;
            break;
        }

    if (sel.k_elbow == sel.k_silhouette && sel.k_silhouette == sel.k_gap)
        sel.note = "all three criteria agree on k = " + std::to_string(sel.k_gap);
    else
        sel.note = "criteria disagree: elbow " + std::to_string(sel.k_elbow) + ", silhouette " +
                   std::to_string(sel.k_silhouette) + ", gap " + std::to_string(sel.k_gap);
    return sel;
}

TypologyResult cut_and_label(const FeatureTable& f, const Dendrogram& dg, int k) {
    require(k >= 1 && k <= dg.n, "cut_and_label: k out of range");
    const std::vector<int> raw_labels = cut_k(dg, k);
    const auto n = f.z.rows();

    // composite vulnerability ordering
    Eigen::VectorXd composite(n);
    if (f.feature_names == kFeatureSchema) {
        // education, earnings, female LFP, diversity, -rural code, log population
        Eigen::VectorXd logpop = f.raw.col(1).array().max(1.0).log();
        const double m = logpop.mean();
        const double sd = std::sqrt((logpop.array() - m).square().sum() /
                                    (static_cast<double>(n) - 1.0));
        Eigen::VectorXd zlogpop = (logpop.array() - m) / (sd > 0 ? sd : 1.0);
        composite = (f.z.col(2) + f.z.col(3) + f.z.col(4) + f.z.col(5) - f.z.col(0) + zlogpop) / 6.0;
    } else {
        composite = f.z.rowwise().mean();
    }

    std::vector<double> group_mean(k, 0.0);
    std::vector<double> group_n(k, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        group_mean[raw_labels[i]] += composite[i];
        group_n[raw_labels[i]] += 1.0;
    }
    for (int g = 0; g < k; ++g) group_mean[g] /= std::max(1.0, group_n[g]);
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return group_mean[a] > group_mean[b]; });
    std::vector<int> type_of_group(k);
    for (int t = 0; t < k; ++t) type_of_group[order[t]] = t + 1;

    TypologyResult out;
    out.types.resize(n);
    out.type_sizes.assign(k, 0);
    out.type_means_raw = Eigen::MatrixXd::Zero(k, f.raw.cols());
    out.type_means_passive = Eigen::MatrixXd::Zero(k, f.passive.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const int t = type_of_group[raw_labels[i]];
        out.types[i] = t;
        out.type_sizes[t - 1] += 1;
        out.type_means_raw.row(t - 1) += f.raw.row(i);
        if (f.passive.cols() > 0) out.type_means_passive.row(t - 1) += f.passive.row(i);
    }
    for (int t = 0; t < k; ++t) {
        const double cnt = std::max(1, out.type_sizes[t]);
        out.type_means_raw.row(t) /= cnt;
        if (f.passive.cols() > 0) out.type_means_passive.row(t) /= cnt;
    }
    return out;
}

} // namespace stpanel
