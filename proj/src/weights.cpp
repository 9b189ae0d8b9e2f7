#include "stpanel/weights.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "stpanel/common.hpp"

namespace stpanel {

int AdjacencyGraph::node_index(const std::string& fips) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), fips);
    if (it == nodes.end() || *it != fips) return -1;
    return static_cast<int>(it - nodes.begin());
}

int AdjacencyGraph::degree(int i) const {
    int d = 0;
    for (const auto& [a, b] : edges)
        if (a == i || b == i) ++d;
    return d;
}

namespace {

std::string normalize_fips(const std::string& raw, int line_no) {
    std::string s;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    if (s.empty() || s.size() > 5 ||
        !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        fail("parse_adjacency: malformed FIPS '" + raw + "' at line " + std::to_string(line_no));
    while (s.size() < 5) s.insert(s.begin(), '0');
    return s;
}

} // namespace

AdjacencyGraph parse_adjacency(const std::vector<std::string>& lines,
                               const std::vector<std::string>& universe) {
    std::unordered_set<std::string> uni(universe.begin(), universe.end());
    std::set<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> pairs;
    int dropped = 0;
    int line_no = 0;
    for (const auto& line : lines) {
        ++line_no;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            fail("parse_adjacency: expected 'fips_a,fips_b' at line " + std::to_string(line_no));
        std::string a_raw = line.substr(0, comma);
        std::string b_raw = line.substr(comma + 1);
        // tolerate a header line
        const bool header =
            line_no == 1 && !std::all_of(a_raw.begin(), a_raw.end(), [](char c) {
                return std::isdigit(static_cast<unsigned char>(c)) ||
                       std::isspace(static_cast<unsigned char>(c));
            });
        if (header) continue;
        const std::string a = normalize_fips(a_raw, line_no);
        const std::string b = normalize_fips(b_raw, line_no);
        if (a == b) continue; // self-loop
        if (!uni.empty() && (!uni.count(a) || !uni.count(b))) {
            ++dropped;
            continue;
        }
        nodes.insert(a);
        nodes.insert(b);
        pairs.emplace_back(a, b);
    }
    AdjacencyGraph g;
    if (!uni.empty())
        g.nodes.assign(universe.begin(), universe.end());
    else
        g.nodes.assign(nodes.begin(), nodes.end());
    std::sort(g.nodes.begin(), g.nodes.end());
    g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end()), g.nodes.end());
    g.dropped_pairs = dropped;
    for (const auto& [a, b] : pairs) {
        int ia = g.node_index(a), ib = g.node_index(b);
        if (ia > ib) std::swap(ia, ib);
        g.edges.insert({ia, ib});
    }
    return g;
}

SpatialWeights SpatialWeights::build(const AdjacencyGraph& g, const std::vector<std::string>& order,
                                     const Eigen::VectorXd* cached_spectrum) {
    std::unordered_map<std::string, int> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
    for (const auto& n : g.nodes)
        require(pos.count(n) > 0, "row_normalize: order does not cover node " + n);

    const auto n = static_cast<Eigen::Index>(order.size());
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<std::pair<int, int>> edges_pos;
    edges_pos.reserve(g.edges.size());
    for (const auto& [a, b] : g.edges) {
        const int ia = pos.at(g.nodes[a]);
        const int ib = pos.at(g.nodes[b]);
        edges_pos.emplace_back(ia, ib);
        deg[ia] += 1.0;
        deg[ib] += 1.0;
    }
    for (const auto& [ia, ib] : edges_pos) {
        trips.emplace_back(ia, ib, 1.0 / deg[ia]);
        trips.emplace_back(ib, ia, 1.0 / deg[ib]);
    }
    SpatialWeights w;
    w.order_ = order;
    w.W_.resize(n, n);
    w.W_.setFromTriplets(trips.begin(), trips.end());
    w.W_.makeCompressed();
    if (cached_spectrum && cached_spectrum->size() == n)
        w.eigenvalues_ = *cached_spectrum;
    else
        w.compute_spectrum(deg);
    return w;
}

SpatialWeights SpatialWeights::torus(int rows, int cols) {
    require(rows >= 3 && cols >= 3, "torus: need at least 3x3");
    AdjacencyGraph g;
    auto name = [cols](int r, int c) {
        const int id = r * cols + c;
        std::string s = std::to_string(id);
        while (s.size() < 5) s.insert(s.begin(), '0');
        return s;
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g.nodes.push_back(name(r, c));
    std::sort(g.nodes.begin(), g.nodes.end());
    auto add_edge = [&](int r1, int c1, int r2, int c2) {
        int a = g.node_index(name(r1, c1));
        int b = g.node_index(name(r2, c2));
        if (a > b) std::swap(a, b);
        if (a != b) g.edges.insert({a, b});
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            add_edge(r, c, (r + 1) % rows, c);
            add_edge(r, c, r, (c + 1) % cols);
        }
    return build(g, g.nodes);
}

void SpatialWeights::compute_spectrum(const Eigen::VectorXd& degrees) {
    // W = D^{-1} A is similar to the symmetric S = D^{-1/2} A D^{-1/2}
    // (isolated nodes contribute exact zeros either way), so the spectrum is
    // real and a symmetric eigensolver applies.
    const Eigen::Index n = W_.rows();
    Eigen::VectorXd dinv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i)
        dinv_sqrt[i] = degrees[i] > 0 ? 1.0 / std::sqrt(degrees[i]) : 0.0;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(W_, i); it; ++it) {
            // W_ij = A_ij / deg(i)  =>  A_ij = W_ij * deg(i)
            const double a = it.value() * degrees[i];
            S(i, it.col()) = a * dinv_sqrt[i] * dinv_sqrt[it.col()];
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    eigenvalues_ = es.eigenvalues();
}

std::pair<double, double> SpatialWeights::feasible_interval() const {
    const double lmin = lambda_min();
    const double lo = lmin < 0 ? 1.0 / lmin : -1e6;
    return {lo, 1.0};
}

Eigen::VectorXd SpatialWeights::spmv(const Eigen::VectorXd& x) const {
    require(x.size() == W_.rows(), "spmv: dimension mismatch");
    return W_ * x;
}

Eigen::MatrixXd SpatialWeights::apply(const Eigen::MatrixXd& x) const {
    require(x.rows() == W_.rows(), "apply: dimension mismatch");
    return W_ * x;
}

double SpatialWeights::log_det(double rho) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
        const double v = 1.0 - rho * eigenvalues_[i];
        if (!(v > 0.0)) fail("log_det: I - rho*W singular or indefinite at rho=" + std::to_string(rho));
        s += std::log(v);
    }
    return s;
}

Eigen::SparseMatrix<double> SpatialWeights::identity_minus(double p) const {
    const Eigen::Index n = W_.rows();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(W_.nonZeros() + n);
    for (Eigen::Index i = 0; i < n; ++i) {
        trips.emplace_back(i, i, 1.0);
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(W_, i); it; ++it)
            trips.emplace_back(i, it.col(), -p * it.value());
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
}

SpatialWeights SpatialWeights::subset(const std::vector<std::string>& keep) const {
    std::unordered_map<std::string, int> old_pos;
    for (std::size_t i = 0; i < order_.size(); ++i) old_pos[order_[i]] = static_cast<int>(i);
    AdjacencyGraph g;
    g.nodes = keep;
    std::sort(g.nodes.begin(), g.nodes.end());
    std::unordered_map<int, int> old_to_new;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        auto it = old_pos.find(g.nodes[i]);
        require(it != old_pos.end(), "weights subset: unknown entity " + g.nodes[i]);
        old_to_new[it->second] = static_cast<int>(i);
    }
    for (Eigen::Index i = 0; i < W_.rows(); ++i) {
        auto oi = old_to_new.find(static_cast<int>(i));
        if (oi == old_to_new.end()) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(W_, i); it; ++it) {
            auto oj = old_to_new.find(static_cast<int>(it.col()));
            if (oj == old_to_new.end()) continue;
            int a = oi->second, b = oj->second;
            if (a > b) std::swap(a, b);
            if (a != b) g.edges.insert({a, b});
        }
    }
    return build(g, g.nodes);
}

} // namespace stpanel
