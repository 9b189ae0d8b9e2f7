#include "stpanel/spec_json.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "stpanel/common.hpp"

namespace stpanel {

namespace {

BaseTransform transform_from_string(const std::string& s) {
    if (s == "level") return BaseTransform::Level;
    if (s == "diff") return BaseTransform::Diff;
    if (s == "log") return BaseTransform::Log;
    if (s == "dlog") return BaseTransform::DiffLog;
    fail("unknown transform '" + s + "' (expected level|diff|log|dlog)");
}

TermSpec term_from_json(const nlohmann::json& j, int lag) {
    TermSpec t;
    t.var = j.at("var").get<std::string>();
    t.transform = transform_from_string(j.value("transform", "level"));
    t.lag = lag;
    t.interact = j.value("interact", "");
    t.interact_lag = j.value("interact_lag", true);
    return t;
}

// Replication presets: the Table 1 specifications over the canonical panel
// schema (unemployment_rate, active_mines, employed, unemployed, labor_force,
// population, real_gdp, real_gdp_pc, re_invest).
const std::map<std::string, const char*>& preset_map() {
    static const std::map<std::string, const char*> presets = {
        {"model1", R"({
  "name": "model1", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"model1_coal", R"({
  "name": "model1_coal", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "coal"
})"},
        {"model2", R"({
  "name": "model2", "estimator": "twfe",
  "dependent": {"var": "employed", "transform": "dlog"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp", "transform": "dlog"},
    {"var": "population", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"model3", R"({
  "name": "model3", "estimator": "twfe",
  "dependent": {"var": "unemployed", "transform": "dlog"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp", "transform": "dlog"},
    {"var": "population", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"model4", R"({
  "name": "model4", "estimator": "twfe",
  "dependent": {"var": "labor_force", "transform": "dlog"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp", "transform": "dlog"},
    {"var": "population", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"model5", R"({
  "name": "model5", "estimator": "twfe",
  "dependent": {"var": "population", "transform": "dlog"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"model6", R"({
  "name": "model6", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "aux": [{"name": "ree", "num": "re_invest", "den": "real_gdp", "theta": 0.001}],
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2], "interact": "ree"},
    {"var": "ree", "transform": "level", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"model1_slm", R"({
  "name": "model1_slm", "estimator": "slm",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": [], "sample": "all"
})"},
        {"model1_sem", R"({
  "name": "model1_sem", "estimator": "sem",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": [], "sample": "all"
})"},
        {"model1_sarar", R"({
  "name": "model1_sarar", "estimator": "sarar",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": [], "sample": "all"
})"},
        {"model1_htt1", R"({
  "name": "model1_htt1", "estimator": "htt", "factors": 1,
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": [], "sample": "all"
})"},
        {"model1_htt2", R"({
  "name": "model1_htt2", "estimator": "htt", "factors": 2,
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": [], "sample": "all"
})"},
        {"asym_negative", R"({
  "name": "asym_negative", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2], "interact": "@neg"},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"asym_positive", R"({
  "name": "asym_positive", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2]},
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2], "interact": "@pos"},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"asym_both", R"({
  "name": "asym_both", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2], "interact": "@neg"},
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2], "interact": "@pos"},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "all"
})"},
        {"grouped_slopes", R"({
  "name": "grouped_slopes", "estimator": "twfe",
  "dependent": {"var": "unemployment_rate", "transform": "diff"},
  "regressors": [
    {"var": "active_mines", "transform": "diff", "lags": [0, 1, 2], "interact": "@group"},
    {"var": "real_gdp_pc", "transform": "dlog"}
  ],
  "fe": ["entity", "year"], "cluster": ["entity", "year"], "sample": "coal"
})"}};
    return presets;
}

} // namespace

ModelSpec spec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        fail(std::string("model spec: invalid JSON: ") + e.what());
    }
    ModelSpec spec;
    spec.name = j.value("name", "model");
    spec.estimator = estimator_from_string(j.value("estimator", "twfe"));
    require(j.contains("dependent"), "model spec: missing 'dependent'");
    spec.dependent = term_from_json(j.at("dependent"), 0);
    require(j.contains("regressors") && j.at("regressors").is_array() &&
                !j.at("regressors").empty(),
            "model spec: missing 'regressors'");
    for (const auto& rj : j.at("regressors")) {
        std::vector<int> lags;
        if (rj.contains("lags"))
            for (const auto& l : rj.at("lags")) lags.push_back(l.get<int>());
        if (rj.contains("leads"))
            for (const auto& l : rj.at("leads")) lags.push_back(-l.get<int>());
        if (lags.empty()) lags.push_back(0);
        for (int lag : lags) spec.regressors.push_back(term_from_json(rj, lag));
    }
    for (const auto& aj : j.value("aux", nlohmann::json::array())) {
        AuxSpec a;
        a.name = aj.at("name").get<std::string>();
        a.num = aj.at("num").get<std::string>();
        a.den = aj.at("den").get<std::string>();
        a.theta = aj.at("theta").get<double>();
        spec.aux.push_back(a);
    }
    if (j.contains("fe")) {
        spec.fe_dims.clear();
        for (const auto& d : j.at("fe")) spec.fe_dims.push_back(d.get<std::string>());
    }
    if (j.contains("cluster")) {
        spec.cluster_dims.clear();
        for (const auto& d : j.at("cluster")) spec.cluster_dims.push_back(d.get<std::string>());
    }
    spec.sample = j.value("sample", "all");
    require(spec.sample == "all" || spec.sample == "coal",
            "model spec: sample must be 'all' or 'coal'");
    spec.coal_var = j.value("coal_var", "active_mines");
    spec.n_factors = j.value("factors", 0);
    for (const auto& d : spec.fe_dims)
        require(d == "entity" || d == "year", "model spec: bad fe dimension '" + d + "'");
    for (const auto& d : spec.cluster_dims)
        require(d == "entity" || d == "year", "model spec: bad cluster dimension '" + d + "'");
    return spec;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : preset_map()) names.push_back(k);
    return names;
}

bool is_preset(const std::string& name) { return preset_map().count(name) > 0; }

ModelSpec load_spec(const std::string& preset_or_path) {
    auto it = preset_map().find(preset_or_path);
    if (it != preset_map().end()) return spec_from_json(it->second);
    require(std::filesystem::exists(preset_or_path),
            "'" + preset_or_path + "' is neither a preset name nor a spec file");
    std::ifstream in(preset_or_path);
    std::stringstream buf;
    buf << in.rdbuf();
    return spec_from_json(buf.str());
}

} // namespace stpanel
