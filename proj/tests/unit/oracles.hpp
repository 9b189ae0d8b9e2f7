#pragma once

// Test-only oracles, intentionally written as independent brute-force
// computations against which the library implementations are checked.

#include <Eigen/Dense>
#include <Eigen/LU>
#include <map>
#include <set>
#include <vector>

#include "stpanel/twfe.hpp"

namespace oracles {

// Dummy-variable (LSDV) two-way fixed effects fit via one dense regression:
// K regressors + one dummy per entity + one dummy per year except the first.
inline Eigen::VectorXd lsdv_beta(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                 const std::vector<int>& ent, const std::vector<int>& yr) {
    std::set<int> ents(ent.begin(), ent.end()), yrs(yr.begin(), yr.end());
    std::map<int, int> epos, tpos;
    int c = 0;
    for (int e : ents) epos[e] = c++;
    c = 0;
    for (int t : yrs) tpos[t] = c++;
    const auto n = y.size();
    const auto K = X.cols();
    const auto nE = static_cast<Eigen::Index>(ents.size());
    const auto nT = static_cast<Eigen::Index>(yrs.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, K + nE + nT - 1);
    D.leftCols(K) = X;
    for (Eigen::Index r = 0; r < n; ++r) {
        D(r, K + epos[ent[r]]) = 1.0;
        const int tp = tpos[yr[r]];
        if (tp > 0) D(r, K + nE + tp - 1) = 1.0;
    }
    Eigen::VectorXd full = D.colPivHouseholderQr().solve(y);
    return full.head(K);
}

// Brute-force Cameron-Gelbach-Miller two-way clustered covariance:
// explicit sums over clusters, three sandwich pieces.
inline Eigen::MatrixXd brute_cgm(const Eigen::MatrixXd& Xd, const Eigen::VectorXd& e,
                                 const std::vector<int>& ent, const std::vector<int>& yr) {
    const auto n = Xd.rows();
    const int K = static_cast<int>(Xd.cols());
    const Eigen::MatrixXd A = (Xd.transpose() * Xd).inverse();
    auto piece = [&](auto label_of) {
        std::map<long long, Eigen::VectorXd> sums;
        for (Eigen::Index r = 0; r < n; ++r) {
            long long g = label_of(r);
            auto [it, fresh] = sums.try_emplace(g, Eigen::VectorXd::Zero(K));
            it->second += Xd.row(r).transpose() * e[r];
        }
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(K, K);
        for (auto& [g, s] : sums) meat += s * s.transpose();
        const double G = static_cast<double>(sums.size());
        const double c =
            G / (G - 1.0) * (static_cast<double>(n) - 1.0) / (static_cast<double>(n) - K);
        return Eigen::MatrixXd(c * A * meat * A);
    };
    Eigen::MatrixXd V = piece([&](Eigen::Index r) { return (long long)ent[r]; }) +
                        piece([&](Eigen::Index r) { return (long long)yr[r]; }) -
                        piece([&](Eigen::Index r) { return (long long)ent[r] * 100000LL + yr[r]; });
    return V;
}

// Dense LU log-determinant of I - rho*W.
inline double dense_logdet(const Eigen::MatrixXd& W, double rho) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(W.rows(), W.cols()) - rho * W;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    double s = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) s += std::log(std::fabs(lu.matrixLU()(i, i)));
    return s;
}

// Within-cluster sum of squares of a labeled partition, recomputed from raw
// points.
inline double brute_wss(const Eigen::MatrixXd& pts, const std::vector<int>& labels) {
    std::map<int, std::vector<int>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back((int)i);
    double wss = 0.0;
    for (auto& [g, idx] : groups) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(pts.cols());
        for (int i : idx) mean += pts.row(i);
        mean /= static_cast<double>(idx.size());
        for (int i : idx) wss += (pts.row(i) - mean).squaredNorm();
    }
    return wss;
}

} // namespace oracles
