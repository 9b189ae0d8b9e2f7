#include "stpanel/panel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stpanel/common.hpp"

namespace stpanel {

PanelDataset::PanelDataset(std::vector<std::string> entities, std::vector<int> years)
    : entities_(std::move(entities)), years_(std::move(years)) {
    require(!entities_.empty(), "panel: no entities");
    require(!years_.empty(), "panel: no years");
    for (std::size_t i = 0; i + 1 < entities_.size(); ++i)
        require(entities_[i] < entities_[i + 1], "panel: entities must be sorted and unique");
    for (std::size_t t = 0; t + 1 < years_.size(); ++t)
        require(years_[t] + 1 == years_[t + 1],
                "panel: years must be contiguous, gap after " + std::to_string(years_[t]));
    for (std::size_t i = 0; i < entities_.size(); ++i)
        entity_idx_[entities_[i]] = static_cast<int>(i);
    for (std::size_t t = 0; t < years_.size(); ++t)
        year_idx_[years_[t]] = static_cast<int>(t);
}

int PanelDataset::entity_index(const std::string& fips) const {
    auto it = entity_idx_.find(fips);
    return it == entity_idx_.end() ? -1 : it->second;
}

int PanelDataset::year_index(int year) const {
    auto it = year_idx_.find(year);
    return it == year_idx_.end() ? -1 : it->second;
}

const Column& PanelDataset::column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) fail("panel: unknown variable '" + name + "'");
    return it->second;
}

std::vector<std::string> PanelDataset::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns_.size());
    for (const auto& [k, v] : columns_) names.push_back(k);
    return names;
}

void PanelDataset::add_column(const std::string& name, Column col) {
    require(col.values.rows() == n_entities() && col.values.cols() == n_years(),
            "panel: column '" + name + "' has wrong shape");
    require(col.missing.rows() == col.values.rows() && col.missing.cols() == col.values.cols(),
            "panel: mask shape mismatch for '" + name + "'");
    require(columns_.count(name) == 0, "panel: column '" + name + "' already exists");
    columns_.emplace(name, std::move(col));
}

std::string PanelDataset::first_difference(const std::string& var) {
    const Column& src = column(var);
    require(n_years() >= 2, "first_difference: need T >= 2");
    const std::string name = "diff(" + var + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = MatrixXd::Zero(n_entities(), n_years());
    out.missing = MaskXb::Constant(n_entities(), n_years(), true);
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        for (Eigen::Index t = 1; t < n_years(); ++t)
            if (!src.missing(i, t) && !src.missing(i, t - 1)) {
                out.values(i, t) = src.values(i, t) - src.values(i, t - 1);
                out.missing(i, t) = false;
            }
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::lag(const std::string& var, int k) {
    const Column& src = column(var);
    require(k >= 1 && k <= static_cast<int>(n_years()) - 1,
            "lag: order " + std::to_string(k) + " out of range");
    const std::string name = "lag(" + var + "," + std::to_string(k) + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = MatrixXd::Zero(n_entities(), n_years());
    out.missing = MaskXb::Constant(n_entities(), n_years(), true);
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        for (Eigen::Index t = k; t < n_years(); ++t)
            if (!src.missing(i, t - k)) {
                out.values(i, t) = src.values(i, t - k);
                out.missing(i, t) = false;
            }
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::lead(const std::string& var, int k) {
    const Column& src = column(var);
    require(k >= 1 && k <= static_cast<int>(n_years()) - 1,
            "lead: order " + std::to_string(k) + " out of range");
    const std::string name = "lead(" + var + "," + std::to_string(k) + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = MatrixXd::Zero(n_entities(), n_years());
    out.missing = MaskXb::Constant(n_entities(), n_years(), true);
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        for (Eigen::Index t = 0; t + k < n_years(); ++t)
            if (!src.missing(i, t + k)) {
                out.values(i, t) = src.values(i, t + k);
                out.missing(i, t) = false;
            }
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::log_col(const std::string& var) {
    const Column& src = column(var);
    const std::string name = "log(" + var + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = MatrixXd::Zero(n_entities(), n_years());
    out.missing = src.missing;
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        for (Eigen::Index t = 0; t < n_years(); ++t)
            if (!src.missing(i, t)) {
                const double v = src.values(i, t);
                if (!(v > 0.0))
                    fail("log(" + var + "): non-positive value at entity " + entities_[i] +
                         ", year " + std::to_string(years_[t]));
                out.values(i, t) = std::log(v);
            }
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::indicator_threshold(const std::string& var_num,
                                              const std::string& var_den, double theta) {
    require(std::isfinite(theta), "indicator_threshold: theta must be finite");
    const Column& num = column(var_num);
    const Column& den = column(var_den);
    const std::string name = "ind(" + var_num + "/" + var_den + ">=" + std::to_string(theta) + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = MatrixXd::Zero(n_entities(), n_years());
    out.missing = num.missing || den.missing;
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        for (Eigen::Index t = 0; t < n_years(); ++t)
            if (!out.missing(i, t)) {
                const double d = den.values(i, t);
                if (!(d > 0.0))
                    fail("indicator_threshold: denominator '" + var_den +
                         "' not positive at entity " + entities_[i] + ", year " +
                         std::to_string(years_[t]));
                out.values(i, t) = (num.values(i, t) / d >= theta) ? 1.0 : 0.0;
            }
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::negative_indicator(const std::string& var) {
    const Column& src = column(var);
    const std::string name = "neg(" + var + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = (src.values.array() < 0.0).cast<double>().matrix();
    out.missing = src.missing;
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::positive_indicator(const std::string& var) {
    const Column& src = column(var);
    const std::string name = "pos(" + var + ")";
    if (columns_.count(name)) return name;
    Column out;
    out.values = (src.values.array() > 0.0).cast<double>().matrix();
    out.missing = src.missing;
    add_column(name, std::move(out));
    return name;
}

std::string PanelDataset::product(const std::string& a, const std::string& b) {
    const Column& ca = column(a);
    const Column& cb = column(b);
    const std::string name = a + "*" + b;
    if (columns_.count(name)) return name;
    Column out;
    out.values = ca.values.cwiseProduct(cb.values);
    out.missing = ca.missing || cb.missing;
    // scrub products of masked cells so no stale values leak
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        for (Eigen::Index t = 0; t < n_years(); ++t)
            if (out.missing(i, t)) out.values(i, t) = 0.0;
    add_column(name, std::move(out));
    return name;
}

PanelDataset PanelDataset::subset(const std::function<bool(const std::string&)>& pred) const {
    std::vector<std::string> kept;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n_entities(); ++i)
        if (pred(entities_[i])) {
            kept.push_back(entities_[i]);
            rows.push_back(i);
        }
    require(!kept.empty(), "subset: predicate keeps no entities");
    PanelDataset out(kept, years_);
    for (const auto& [name, col] : columns_) {
        Column c;
        c.values = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n_years());
        c.missing = MaskXb::Constant(static_cast<Eigen::Index>(rows.size()), n_years(), false);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            c.values.row(static_cast<Eigen::Index>(r)) = col.values.row(rows[r]);
            c.missing.row(static_cast<Eigen::Index>(r)) = col.missing.row(rows[r]);
        }
        out.columns_.emplace(name, std::move(c));
    }
    return out;
}

PanelDataset PanelDataset::subset_coal(const std::string& mines_var) const {
    const Column& mines = column(mines_var);
    return subset([&](const std::string& fips) {
        const int i = entity_index(fips);
        for (Eigen::Index t = 0; t < n_years(); ++t)
            if (!mines.missing(i, t) && mines.values(i, t) > 0.0) return true;
        return false;
    });
}

std::vector<PanelRecord> PanelDataset::export_records() const {
    std::vector<PanelRecord> recs;
    for (const auto& [name, col] : columns_)
        for (Eigen::Index i = 0; i < n_entities(); ++i)
            for (Eigen::Index t = 0; t < n_years(); ++t)
                if (!col.missing(i, t))
                    recs.push_back({entities_[i], years_[t], name, col.values(i, t)});
    return recs;
}

PanelDataset build_panel(const std::vector<PanelRecord>& records) {
    require(!records.empty(), "build_panel: no records");
    std::set<std::string> ents;
    std::set<int> yrs;
    for (const auto& r : records) {
        ents.insert(r.entity);
        yrs.insert(r.year);
    }
    const int y0 = *yrs.begin();
    const int y1 = *yrs.rbegin();
    std::vector<int> years;
    for (int y = y0; y <= y1; ++y) {
        if (!yrs.count(y))
            fail("build_panel: year range " + std::to_string(y0) + ".." + std::to_string(y1) +
                 " is not contiguous, no records for " + std::to_string(y));
        years.push_back(y);
    }
    PanelDataset p(std::vector<std::string>(ents.begin(), ents.end()), years);

    std::map<std::string, Column> cols;
    for (const auto& r : records) {
        auto [it, inserted] = cols.try_emplace(r.var);
        if (inserted) {
            it->second.values = MatrixXd::Zero(p.n_entities(), p.n_years());
            it->second.missing = MaskXb::Constant(p.n_entities(), p.n_years(), true);
        }
        const int i = p.entity_index(r.entity);
        const int t = p.year_index(r.year);
        if (!it->second.missing(i, t))
            fail("build_panel: duplicate record (" + r.entity + ", " + std::to_string(r.year) +
                 ", " + r.var + ")");
        it->second.values(i, t) = r.value;
        it->second.missing(i, t) = false;
    }
    for (auto& [name, col] : cols) p.add_column(name, std::move(col));
    return p;
}

} // namespace stpanel
