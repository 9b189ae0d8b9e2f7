#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stpanel/common.hpp"

namespace stpanel {

using Eigen::MatrixXd;
using MaskXb = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// One panel variable: N×T values with an explicit missing mask.
// A masked cell's value is undefined and must never be read by estimators.
struct Column {
    MatrixXd values; // rows = entities, cols = years
    MaskXb missing;

    bool complete() const { return !missing.any(); }
    Eigen::Index n_missing() const { return missing.count(); }
};

struct PanelRecord {
    std::string entity;
    int year = 0;
    std::string var;
    double value = 0;
};

// Balanced entity×year table of named numeric variables. Entities are kept
// in lexicographic order, years ascending and contiguous. Construction and
// the transform methods are single-threaded; once a panel stops being
// extended it is safe for concurrent reads.
class PanelDataset {
public:
    PanelDataset(std::vector<std::string> entities, std::vector<int> years);

    Eigen::Index n_entities() const { return static_cast<Eigen::Index>(entities_.size()); }
    Eigen::Index n_years() const { return static_cast<Eigen::Index>(years_.size()); }
    const std::vector<std::string>& entities() const { return entities_; }
    const std::vector<int>& years() const { return years_; }
    int entity_index(const std::string& fips) const; // -1 if unknown
    int year_index(int year) const;                  // -1 if unknown

    bool has_column(const std::string& name) const { return columns_.count(name) > 0; }
    const Column& column(const std::string& name) const;
    std::vector<std::string> column_names() const;

    void add_column(const std::string& name, Column col);

    // --- transforms; each adds a new column and returns its name ---

    // d_it = x_it - x_{i,t-1}; first year masked.
    std::string first_difference(const std::string& var);
    // value at t-k (first k years masked) / t+k (last k years masked).
    std::string lag(const std::string& var, int k);
    std::string lead(const std::string& var, int k);
    // natural log; rejects non-positive unmasked cells naming entity/year.
    std::string log_col(const std::string& var);
    // 1{ num/den >= theta }; requires den > 0 on unmasked cells.
    std::string indicator_threshold(const std::string& var_num, const std::string& var_den,
                                    double theta);
    // 1{ x < 0 } / 1{ x > 0 } of an existing column.
    std::string negative_indicator(const std::string& var);
    std::string positive_indicator(const std::string& var);
    // elementwise product; mask is the union of both masks.
    std::string product(const std::string& a, const std::string& b);

    // Keeps entities satisfying `pred`; full year range retained.
    PanelDataset subset(const std::function<bool(const std::string&)>& pred) const;
    // Coal-county rule: max over years of `mines_var` > 0.
    PanelDataset subset_coal(const std::string& mines_var) const;

    std::vector<PanelRecord> export_records() const;

private:
    std::vector<std::string> entities_;
    std::vector<int> years_;
    std::map<std::string, Column> columns_;
    std::unordered_map<std::string, int> entity_idx_;
    std::unordered_map<int, int> year_idx_;
};

// Builds a balanced panel from long-format records. Entities sorted
// lexicographically, years ascending; rejects duplicate (entity,year,var)
// triples and non-contiguous year ranges. Cells not covered by any record
// for a variable are masked.
PanelDataset build_panel(const std::vector<PanelRecord>& records);

} // namespace stpanel
