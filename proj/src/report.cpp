#include "stpanel/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "stpanel/csv.hpp"
#include "stpanel/stats.hpp"

namespace stpanel {

namespace {

std::string fixed4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string fixed5(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.5f", v);
    return buf;
}

} // namespace

Reportable to_report(const FitResult& fit) {
    Reportable r;
    r.model = fit.model_name.empty() ? "twfe" : fit.model_name;
    r.estimator = "twfe";
    r.dependent = fit.dependent;
    r.terms = fit.names;
    r.horizons = fit.horizons.empty() ? std::vector<int>(fit.names.size(), 0) : fit.horizons;
    for (int k = 0; k < fit.K; ++k) {
        r.estimate.push_back(fit.beta[k]);
        const double se = fit.se(k);
        r.se.push_back(se);
        r.p.push_back(stats::norm_two_sided_p(se > 0 ? fit.beta[k] / se : 0.0));
    }
    r.nobs = fit.nobs;
    r.r2 = fit.r2;
    r.has_r2 = true;
    r.within_r2 = fit.within_r2;
    r.has_within = true;
    r.loglik = fit.loglik;
    r.aic = fit.aic;
    r.bic = fit.bic;
    r.has_loglik = true;
    r.notes = fit.notes;
    return r;
}

Reportable to_report(const SpatialFit& fit) {
    Reportable r;
    r.model = fit.model_name.empty() ? to_string(fit.kind) : fit.model_name;
    r.estimator = to_string(fit.kind);
    r.dependent = fit.dependent;
    r.terms = fit.names;
    r.horizons = fit.horizons.empty() ? std::vector<int>(fit.names.size(), 0) : fit.horizons;
    for (int k = 0; k < fit.K; ++k) {
        const double se = fit.se_beta(k);
        r.estimate.push_back(fit.beta[k]);
        r.se.push_back(se);
        r.p.push_back(stats::norm_two_sided_p(se > 0 ? fit.beta[k] / se : 0.0));
    }
    if (fit.rho) {
        const double se = std::sqrt(fit.vcov(fit.rho_index(), fit.rho_index()));
        r.extra_names.push_back("rho (spatial lag)");
        r.extra_est.push_back(*fit.rho);
        r.extra_se.push_back(se);
        r.extra_p.push_back(stats::norm_two_sided_p(se > 0 ? *fit.rho / se : 0.0));
    }
    if (fit.delta) {
        const double se = std::sqrt(fit.vcov(fit.delta_index(), fit.delta_index()));
        r.extra_names.push_back("delta (spatial error)");
        r.extra_est.push_back(*fit.delta);
        r.extra_se.push_back(se);
        r.extra_p.push_back(stats::norm_two_sided_p(se > 0 ? *fit.delta / se : 0.0));
    }
    r.nobs = fit.nobs;
    r.loglik = fit.loglik;
    r.aic = fit.aic;
    r.bic = fit.bic;
    r.has_loglik = true;
    r.notes = fit.notes;
    return r;
}

Reportable to_report(const FactorFit& fit) {
    Reportable r;
    r.model = fit.model_name.empty() ? "htt" : fit.model_name;
    r.estimator = "htt(" + std::to_string(fit.d) + ")";
    r.dependent = fit.dependent;
    r.terms = fit.names;
    r.horizons = fit.horizons.empty() ? std::vector<int>(fit.names.size(), 0) : fit.horizons;
    for (int k = 0; k < fit.K; ++k) {
        r.estimate.push_back(fit.beta[k]);
        r.se.push_back(fit.se[k]);
        r.p.push_back(stats::norm_two_sided_p(fit.se[k] > 0 ? fit.beta[k] / fit.se[k] : 0.0));
    }
    r.extra_names.push_back("factors used");
    r.extra_est.push_back(fit.d);
    r.extra_se.push_back(0);
    r.extra_p.push_back(1);
    r.nobs = fit.nobs;
    r.r2 = fit.r2;
    r.has_r2 = true;
    r.loglik = fit.loglik;
    r.aic = fit.aic;
    r.bic = fit.bic;
    r.has_loglik = true;
    r.notes = fit.notes;
    return r;
}

std::string text_table(const std::vector<Reportable>& fits) {
    // union of term names in first-appearance order
    std::vector<std::string> terms;
    for (const auto& f : fits)
        for (const auto& t : f.terms)
            if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
    std::vector<std::string> extras;
    for (const auto& f : fits)
        for (const auto& t : f.extra_names)
            if (std::find(extras.begin(), extras.end(), t) == extras.end()) extras.push_back(t);

    std::size_t label_w = 24;
    for (const auto& t : terms) label_w = std::max(label_w, t.size() + 2);
    for (const auto& t : extras) label_w = std::max(label_w, t.size() + 2);
    const std::size_t col_w = 18;

    std::ostringstream os;
    auto pad = [&](const std::string& s, std::size_t w) {
        std::string out = s;
        if (out.size() < w) out += std::string(w - out.size(), ' ');
        return out;
    };
    auto center = [&](const std::string& s, std::size_t w) {
        if (s.size() >= w) return s;
        const std::size_t left = (w - s.size()) / 2;
        return std::string(left, ' ') + s + std::string(w - s.size() - left, ' ');
    };

    os << pad("", label_w);
    for (const auto& f : fits) os << center(f.model, col_w);
    os << "\n" << pad("", label_w);
    for (const auto& f : fits) os << center("(" + f.estimator + ")", col_w);
    os << "\n" << std::string(label_w + col_w * fits.size(), '-') << "\n";

    auto emit_block = [&](const std::vector<std::string>& names, bool extra) {
        for (const auto& t : names) {
            os << pad(t, label_w);
            for (const auto& f : fits) {
                const auto& pool_names = extra ? f.extra_names : f.terms;
                const auto& pool_est = extra ? f.extra_est : f.estimate;
                const auto& pool_p = extra ? f.extra_p : f.p;
                auto it = std::find(pool_names.begin(), pool_names.end(), t);
                if (it == pool_names.end()) {
                    os << center("", col_w);
                } else {
                    const auto k = static_cast<std::size_t>(it - pool_names.begin());
                    os << center(fixed4(pool_est[k]) + stats::signif_code(pool_p[k]), col_w);
                }
            }
            os << "\n" << pad("", label_w);
            for (const auto& f : fits) {
                const auto& pool_names = extra ? f.extra_names : f.terms;
                const auto& pool_se = extra ? f.extra_se : f.se;
                auto it = std::find(pool_names.begin(), pool_names.end(), t);
                if (it == pool_names.end())
                    os << center("", col_w);
                else
                    os << center("(" + fixed4(pool_se[it - pool_names.begin()]) + ")", col_w);
            }
            os << "\n";
        }
    };
    emit_block(terms, false);
    if (!extras.empty()) {
        os << std::string(label_w + col_w * fits.size(), '-') << "\n";
        emit_block(extras, true);
    }

    os << std::string(label_w + col_w * fits.size(), '-') << "\n";
    os << pad("Observations", label_w);
    for (const auto& f : fits) os << center(std::to_string(f.nobs), col_w);
    os << "\n" << pad("R2", label_w);
    for (const auto& f : fits) os << center(f.has_r2 ? fixed5(f.r2) : "", col_w);
    os << "\n" << pad("Within R2", label_w);
    for (const auto& f : fits) os << center(f.has_within ? fixed5(f.within_r2) : "", col_w);
    os << "\n" << pad("Log-likelihood", label_w);
    for (const auto& f : fits) os << center(f.has_loglik ? fixed4(f.loglik) : "", col_w);
    os << "\n" << pad("AIC", label_w);
    for (const auto& f : fits) os << center(f.has_loglik ? fixed4(f.aic) : "", col_w);
    os << "\n" << pad("BIC", label_w);
    for (const auto& f : fits) os << center(f.has_loglik ? fixed4(f.bic) : "", col_w);
    os << "\n";
    os << "Signif. codes: ***: 0.001, **: 0.01, *: 0.05, .: 0.1\n";
    for (const auto& f : fits)
        for (const auto& n : f.notes) os << "note [" << f.model << "]: " << n << "\n";
    return os.str();
}

std::string csv_coefficients(const std::vector<Reportable>& fits, const std::string& manifest) {
    std::ostringstream os;
    os << "# manifest=" << manifest << "\n";
    os << "model,estimator,term,horizon,estimate,se,p,signif\n";
    for (const auto& f : fits) {
        for (std::size_t k = 0; k < f.terms.size(); ++k)
            os << f.model << "," << f.estimator << "," << f.terms[k] << "," << f.horizons[k]
               << "," << fmt_num(f.estimate[k]) << "," << fmt_num(f.se[k]) << ","
               << fmt_num(f.p[k]) << "," << stats::signif_code(f.p[k]) << "\n";
        for (std::size_t k = 0; k < f.extra_names.size(); ++k)
            os << f.model << "," << f.estimator << "," << f.extra_names[k] << ",,"
               << fmt_num(f.extra_est[k]) << "," << fmt_num(f.extra_se[k]) << ","
               << fmt_num(f.extra_p[k]) << "," << stats::signif_code(f.extra_p[k]) << "\n";
    }
    return os.str();
}

std::string csv_fitstats(const std::vector<Reportable>& fits, const std::string& manifest) {
    std::ostringstream os;
    os << "# manifest=" << manifest << "\n";
    os << "model,estimator,nobs,r2,within_r2,loglik,aic,bic\n";
    for (const auto& f : fits) {
        os << f.model << "," << f.estimator << "," << f.nobs << ","
           << (f.has_r2 ? fmt_num(f.r2) : "") << ",";
        os << (f.has_within ? fmt_num(f.within_r2) : "") << ",";
        if (f.has_loglik)
            os << fmt_num(f.loglik) << "," << fmt_num(f.aic) << "," << fmt_num(f.bic);
        else
            os << ",,";
        os << "\n";
    }
    return os.str();
}

std::string csv_plot_data(const std::vector<Reportable>& fits, bool flip_sign,
                          const std::string& manifest) {
    const double z = 1.959963984540054; // 95% normal quantile
    std::ostringstream os;
    os << "# manifest=" << manifest << "\n";
    os << "model,term,horizon,estimate,ci_lo,ci_hi,se,p,signif\n";
    const double s = flip_sign ? -1.0 : 1.0;
    for (const auto& f : fits)
        for (std::size_t k = 0; k < f.terms.size(); ++k) {
            const double est = s * f.estimate[k];
            const double lo = est - z * f.se[k];
            const double hi = est + z * f.se[k];
            os << f.model << "," << f.terms[k] << "," << f.horizons[k] << "," << fmt_num(est)
               << "," << fmt_num(lo) << "," << fmt_num(hi) << "," << fmt_num(f.se[k]) << ","
               << fmt_num(f.p[k]) << "," << stats::signif_code(f.p[k]) << "\n";
        }
    return os.str();
}

std::string csv_impacts(const std::string& model, const ImpactsResult& imp,
                        const std::string& manifest) {
    std::ostringstream os;
    os << "# manifest=" << manifest << "\n";
    os << "model,term,effect,estimate,sim_se,p,signif,n_sim,seed\n";
    for (const auto& r : imp.rows) {
        auto line = [&](const char* eff, double est, double se, double p) {
            os << model << "," << r.name << "," << eff << "," << fmt_num(est) << ","
               << fmt_num(se) << "," << fmt_num(p) << "," << stats::signif_code(p) << ","
               << imp.n_sim << "," << imp.seed << "\n";
        };
        line("direct", r.direct, r.se_direct, r.p_direct);
        line("indirect", r.indirect, r.se_indirect, r.p_indirect);
        line("total", r.total, r.se_total, r.p_total);
    }
    return os.str();
}

std::string csv_csd(const std::vector<std::pair<std::string, CsdTestResult>>& tests,
                    const std::string& manifest) {
    std::ostringstream os;
    os << "# manifest=" << manifest << "\n";
    os << "subject,test,statistic,p_value,avg_corr,avg_abs_corr,warnings\n";
    for (const auto& [subject, t] : tests) {
        os << subject << "," << t.method << "," << fmt_num(t.statistic) << ","
           << fmt_num(t.p_value) << "," << fmt_num(t.avg_corr) << "," << fmt_num(t.avg_abs_corr)
           << "," << t.warnings.size() << "\n";
    }
    return os.str();
}

std::string csv_model_comparison(const std::vector<ModelComparisonRow>& rows,
                                 const std::string& manifest) {
    std::ostringstream os;
    os << "# manifest=" << manifest << "\n";
    os << "model,loglik,aic,bic,nobs\n";
    for (const auto& r : rows)
        os << r.name << "," << fmt_num(r.loglik) << "," << fmt_num(r.aic) << ","
           << fmt_num(r.bic) << "," << r.nobs << "\n";
    return os.str();
}

std::string json_report(const std::vector<Reportable>& fits, const std::string& manifest) {
    nlohmann::json out;
    out["manifest"] = manifest;
    out["models"] = nlohmann::json::array();
    for (const auto& f : fits) {
        nlohmann::json m;
        m["model"] = f.model;
        m["estimator"] = f.estimator;
        m["dependent"] = f.dependent;
        m["nobs"] = f.nobs;
        m["r2"] = f.r2;
        if (f.has_within) m["within_r2"] = f.within_r2;
        if (f.has_loglik) {
            m["loglik"] = f.loglik;
            m["aic"] = f.aic;
            m["bic"] = f.bic;
        }
        m["coefficients"] = nlohmann::json::array();
        for (std::size_t k = 0; k < f.terms.size(); ++k)
            m["coefficients"].push_back({{"term", f.terms[k]},
                                         {"horizon", f.horizons[k]},
                                         {"estimate", f.estimate[k]},
                                         {"se", f.se[k]},
                                         {"p", f.p[k]},
                                         {"signif", stats::signif_code(f.p[k])}});
        for (std::size_t k = 0; k < f.extra_names.size(); ++k)
            m["coefficients"].push_back({{"term", f.extra_names[k]},
                                         {"estimate", f.extra_est[k]},
                                         {"se", f.extra_se[k]},
                                         {"p", f.extra_p[k]},
                                         {"signif", stats::signif_code(f.extra_p[k])}});
        m["notes"] = f.notes;
        out["models"].push_back(m);
    }
    return out.dump(2) + "\n";
}

} // namespace stpanel
