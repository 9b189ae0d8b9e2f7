#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <set>
#include <string>
#include <vector>

namespace stpanel {

// Undirected county contiguity graph keyed by FIPS string.
struct AdjacencyGraph {
    std::vector<std::string> nodes;                 // sorted
    std::set<std::pair<int, int>> edges;            // (i,j) with i<j, node indices
    int dropped_pairs = 0;                          // pairs outside the entity universe

    int node_index(const std::string& fips) const;
    int degree(int i) const;
};

// Parses (fips_a,fips_b) pairs. FIPS are zero-padded to width 5; anything
// that is not 1..5 digits is rejected with its line number. Self-pairs are
// removed. If `universe` is non-empty, pairs touching nodes outside it are
// dropped (counted in dropped_pairs) and the node set becomes the universe.
AdjacencyGraph parse_adjacency(const std::vector<std::string>& lines,
                               const std::vector<std::string>& universe = {});

// Row-normalized spatial weight operator W = D^{-1} A with cached real
// eigenvalue spectrum. Rows of isolated nodes are zero. Immutable; spmv and
// the log-determinant are safe for concurrent use.
class SpatialWeights {
public:
    // `order` fixes the row/column order; it must cover all graph nodes.
    // A cached spectrum skips the one-time eigensolve (workspace reloads).
    static SpatialWeights build(const AdjacencyGraph& g, const std::vector<std::string>& order,
                                const Eigen::VectorXd* cached_spectrum = nullptr);
    // Torus lattice of rows*cols nodes, every degree 4 (synthetic DGPs).
    static SpatialWeights torus(int rows, int cols);

    Eigen::Index size() const { return W_.rows(); }
    const std::vector<std::string>& order() const { return order_; }
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const { return W_; }
    const Eigen::VectorXd& spectrum() const { return eigenvalues_; }
    double lambda_min() const { return eigenvalues_.minCoeff(); }
    double lambda_max() const { return eigenvalues_.maxCoeff(); }
    // Open interval of feasible autoregressive parameters (1/lambda_min, 1).
    std::pair<double, double> feasible_interval() const;

    Eigen::VectorXd spmv(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const; // W * X (columnwise)

    // ln|I - rho*W| via the cached spectrum.
    double log_det(double rho) const;

    // I - p*W as a column-major sparse matrix (ready for SparseLU).
    Eigen::SparseMatrix<double> identity_minus(double p) const;

    // Restriction to a subset of the ordered entities, re-row-normalized.
    SpatialWeights subset(const std::vector<std::string>& keep) const;

private:
    SpatialWeights() = default;
    void compute_spectrum(const Eigen::VectorXd& degrees);

    std::vector<std::string> order_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> W_;
    Eigen::VectorXd eigenvalues_;
};

} // namespace stpanel
