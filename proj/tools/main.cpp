// stpanel: spatio-temporal panel econometrics toolkit CLI.
// Ingests county panel / adjacency / feature CSVs into a workspace, runs
// fixed-effects, spatial-ML and latent-factor model specs, cross-sectional
// dependence diagnostics, and the Ward-clustering county typology.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stpanel/csv.hpp"
#include "stpanel/diagnostics.hpp"
#include "stpanel/factors.hpp"
#include "stpanel/report.hpp"
#include "stpanel/spatial.hpp"
#include "stpanel/spec_json.hpp"
#include "stpanel/synth.hpp"
#include "stpanel/twfe.hpp"
#include "stpanel/typology.hpp"
#include "stpanel/workspace.hpp"

namespace fs = std::filesystem;
using namespace stpanel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitDiagnostics = 4;

std::map<std::string, std::string> load_group_labels(const std::string& path) {
    CsvTable t = read_csv(path);
    const int c_fips = t.column("fips");
    const int c_type = t.column("type");
    require(c_fips >= 0 && c_type >= 0, "labels csv: need columns 'fips' and 'type'");
    std::map<std::string, std::string> m;
    for (const auto& row : t.rows) {
        std::string f = row[c_fips];
        while (f.size() < 5) f.insert(f.begin(), '0');
        m[f] = row[c_type];
    }
    return m;
}

struct EstimateOutputs {
    std::vector<Reportable> reports;
    std::vector<std::pair<std::string, ImpactsResult>> impacts;
    std::vector<ModelComparisonRow> comparison;
};

// Runs one model spec against the workspace with the matching estimator.
void run_spec(const Workspace& ws, ModelSpec spec, int n_sims, std::uint64_t seed,
              EstimateOutputs& out) {
    switch (spec.estimator) {
        case Estimator::Twfe: {
            FitResult fit = fit_twfe(spec, ws.panel);
            out.reports.push_back(to_report(fit));
            out.comparison.push_back({spec.name, fit.dependent, fit.loglik, fit.aic, fit.bic, fit.nobs});
            break;
        }
        case Estimator::Slm:
        case Estimator::Sem:
        case Estimator::Sarar: {
            require(ws.weights.has_value(),
                    "model '" + spec.name + "' needs an adjacency file in the workspace");
            SpatialFit fit = spec.estimator == Estimator::Slm
                                 ? fit_slm(spec, ws.panel, *ws.weights)
                                 : (spec.estimator == Estimator::Sem
                                        ? fit_sem(spec, ws.panel, *ws.weights)
                                        : fit_sarar(spec, ws.panel, *ws.weights));
            out.reports.push_back(to_report(fit));
            out.comparison.push_back({spec.name, fit.dependent, fit.loglik, fit.aic, fit.bic, fit.nobs});
            out.impacts.emplace_back(spec.name, impacts(fit, n_sims, seed));
            break;
        }
        case Estimator::Htt: {
            FactorFit fit = fit_htt(spec, ws.panel, spec.n_factors);
            out.reports.push_back(to_report(fit));
            out.comparison.push_back({spec.name, fit.dependent, fit.loglik, fit.aic, fit.bic, fit.nobs});
            break;
        }
    }
}

void write_out(const std::string& dir, const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    write_file((fs::path(dir) / name).string(), content);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stpanel: spatio-temporal panel econometrics toolkit"};
    app.require_subcommand(1);

    // ---- ingest ----
    auto* cmd_ingest = app.add_subcommand("ingest", "validate input CSVs into a workspace");
    std::string in_panel, in_adj, in_features, in_remap, ingest_out = "workspace";
    cmd_ingest->add_option("--panel", in_panel, "panel CSV (fips,year,<vars...>)")->required();
    cmd_ingest->add_option("--adjacency", in_adj, "county adjacency CSV (fips_a,fips_b)");
    cmd_ingest->add_option("--features", in_features, "typology feature CSV");
    cmd_ingest->add_option("--fips-remap", in_remap, "optional FIPS remap CSV (from,to)");
    cmd_ingest->add_option("--out", ingest_out, "workspace directory");

    // ---- estimate ----
    auto* cmd_estimate = app.add_subcommand("estimate", "run model specs and emit tables");
    std::string est_ws = "workspace", est_out = "results", est_format = "text";
    std::vector<std::string> est_models;
    std::string est_labels;
    std::string est_subset;
    std::uint64_t est_seed = 20230817;
    int est_sims = 1000;
    bool est_flip = false;
    cmd_estimate->add_option("--workspace", est_ws, "workspace directory");
    cmd_estimate->add_option("--model", est_models, "preset name or spec JSON path (repeatable)")
        ->required();
    cmd_estimate->add_option("--group-labels", est_labels,
                             "typology labels CSV for grouped slopes");
    cmd_estimate->add_option("--subset", est_subset, "override sample: coal|all");
    cmd_estimate->add_option("--seed", est_seed, "RNG seed for impact simulation");
    cmd_estimate->add_option("--sims", est_sims, "impact simulation draws")
        ->check(CLI::Range(100, 1000000));
    cmd_estimate->add_flag("--flip-sign", est_flip,
                           "flip coefficient signs in the plot CSV (response to a decrease)");
    cmd_estimate->add_option("--format", est_format, "stdout format: text|csv|json")
        ->check(CLI::IsMember({"text", "csv", "json"}));
    cmd_estimate->add_option("--out", est_out, "output directory");

    // ---- diagnose ----
    auto* cmd_diagnose = app.add_subcommand("diagnose", "cross-sectional dependence battery");
    std::string dia_ws = "workspace", dia_out = "results";
    std::vector<std::string> dia_models;
    int dia_perm = 0;
    double dia_fail_p = -1.0;
    std::uint64_t dia_seed = 20230817;
    std::string dia_labels;
    cmd_diagnose->add_option("--workspace", dia_ws, "workspace directory");
    cmd_diagnose->add_option("--model", dia_models, "models to fit and test (repeatable)")
        ->required();
    cmd_diagnose->add_option("--group-labels", dia_labels, "labels CSV for grouped slopes");
    cmd_diagnose->add_option("--permutation", dia_perm,
                             "additionally run the randomisation CD variant with N draws");
    cmd_diagnose->add_option("--seed", dia_seed, "seed for the permutation variant");
    cmd_diagnose->add_option("--fail-on-cd", dia_fail_p,
                             "exit 4 when the residual CD p-value falls below this threshold");
    cmd_diagnose->add_option("--out", dia_out, "output directory");

    // ---- cluster ----
    auto* cmd_cluster = app.add_subcommand("cluster", "county typology clustering");
    std::string clu_ws = "workspace", clu_out = "results";
    int clu_k = 0, clu_kmax = 8, clu_B = 100;
    std::uint64_t clu_seed = 20230817;
    cmd_cluster->add_option("--workspace", clu_ws, "workspace directory");
    cmd_cluster->add_option("--k", clu_k, "force the number of types (default: gap choice)");
    cmd_cluster->add_option("--k-max", clu_kmax, "largest k examined")->check(CLI::Range(2, 50));
    cmd_cluster->add_option("--B", clu_B, "gap statistic reference sets")
        ->check(CLI::Range(50, 10000));
    cmd_cluster->add_option("--seed", clu_seed, "seed for the gap references");
    cmd_cluster->add_option("--out", clu_out, "output directory");

    // ---- synth ----
    auto* cmd_synth = app.add_subcommand("synth", "dump a synthetic dataset to CSVs");
    std::string syn_kind = "twfe", syn_out = "synth_data";
    int syn_n = 144, syn_t = 10, syn_blobs_k = 3, syn_blobs_n = 40;
    double syn_rho = 0.0, syn_delta = 0.0, syn_noise = 0.5, syn_sep = 8.0, syn_sigma = 1.0;
    std::string syn_beta = "1.5,-0.7";
    std::uint64_t syn_seed = 1;
    int syn_factors = 0;
    cmd_synth->add_option("--kind", syn_kind, "twfe|spatial|factor|blobs")
        ->check(CLI::IsMember({"twfe", "spatial", "factor", "blobs"}));
    cmd_synth->add_option("--n", syn_n, "entities (perfect square for spatial torus)");
    cmd_synth->add_option("--t", syn_t, "years");
    cmd_synth->add_option("--rho", syn_rho, "spatial lag");
    cmd_synth->add_option("--delta", syn_delta, "spatial error");
    cmd_synth->add_option("--beta", syn_beta, "true slopes, comma separated");
    cmd_synth->add_option("--noise", syn_noise, "noise sd");
    cmd_synth->add_option("--factors", syn_factors, "latent factor count");
    cmd_synth->add_option("--blob-k", syn_blobs_k, "blob count");
    cmd_synth->add_option("--blob-n", syn_blobs_n, "points per blob");
    cmd_synth->add_option("--sep", syn_sep, "blob separation");
    cmd_synth->add_option("--sigma", syn_sigma, "blob spread");
    cmd_synth->add_option("--seed", syn_seed, "RNG seed");
    cmd_synth->add_option("--out", syn_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_ingest) {
            Workspace ws = ingest(in_panel, in_adj, in_features, in_remap);
            save_workspace(ws, ingest_out);
            const std::string report = validation_report(ws);
            write_out(ingest_out, "validation_report.txt", report);
            std::cout << report;
            return kExitOk;
        }

        if (*cmd_synth) {
            fs::create_directories(syn_out);
            synth::DgpConfig cfg;
            cfg.N = syn_n;
            cfg.T = syn_t;
            cfg.rho = syn_rho;
            cfg.delta = syn_delta;
            cfg.noise_sd = syn_noise;
            cfg.n_factors = syn_factors;
            cfg.seed = syn_seed;
            std::vector<double> betas;
            {
                std::string tok;
                std::stringstream ss(syn_beta);
                while (std::getline(ss, tok, ',')) betas.push_back(std::stod(tok));
            }
            cfg.beta = Eigen::Map<Eigen::VectorXd>(betas.data(), betas.size());

            if (syn_kind == "blobs") {
                synth::Blobs b = synth::gen_blobs(syn_blobs_k, syn_blobs_n, syn_sigma, syn_sep,
                                                  syn_seed, 6);
                std::ostringstream os;
                os << "fips";
                for (const auto& n : kFeatureSchema) os << "," << n;
                os << "\n";
                for (Eigen::Index i = 0; i < b.points.rows(); ++i) {
                    std::string f = std::to_string(i);
                    while (f.size() < 5) f.insert(f.begin(), '0');
                    os << f;
                    for (Eigen::Index c = 0; c < 6; ++c)
                        os << "," << fmt_num_exact(b.points(i, c));
                    os << "\n";
                }
                write_out(syn_out, "features.csv", os.str());
                std::cout << "wrote " << syn_out << "/features.csv (" << b.points.rows()
                          << " rows)\n";
                return kExitOk;
            }

            PanelDataset panel = [&]() {
                if (syn_kind == "twfe") return synth::gen_twfe(cfg).first;
                if (syn_kind == "factor") {
                    if (cfg.n_factors == 0) cfg.n_factors = 1;
                    return synth::gen_factor(cfg).first;
                }
                const int side = static_cast<int>(std::round(std::sqrt(cfg.N)));
                require(side * side == cfg.N, "spatial synth: --n must be a perfect square");
                SpatialWeights W = SpatialWeights::torus(side, side);
                return synth::gen_spatial(cfg, W).first;
            }();

            // panel.csv
            std::ostringstream os;
            const auto cols = panel.column_names();
            os << "fips,year";
            for (const auto& c : cols) os << "," << c;
            os << "\n";
            for (Eigen::Index i = 0; i < panel.n_entities(); ++i)
                for (Eigen::Index t = 0; t < panel.n_years(); ++t) {
                    os << panel.entities()[i] << "," << panel.years()[t];
                    for (const auto& c : cols) {
                        const Column& col = panel.column(c);
                        os << ",";
                        if (!col.missing(i, t)) os << fmt_num_exact(col.values(i, t));
                    }
                    os << "\n";
                }
            write_out(syn_out, "panel.csv", os.str());

            // adjacency.csv for the torus operator used by spatial kinds
            if (syn_kind == "spatial") {
                const int side = static_cast<int>(std::round(std::sqrt(cfg.N)));
                SpatialWeights W = SpatialWeights::torus(side, side);
                std::ostringstream as;
                as << "fips_a,fips_b\n";
                const auto& M = W.matrix();
                for (Eigen::Index i = 0; i < M.rows(); ++i)
                    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(M, i);
                         it; ++it)
                        if (i < it.col())
                            as << W.order()[i] << "," << W.order()[it.col()] << "\n";
                write_out(syn_out, "adjacency.csv", as.str());
            }
            std::cout << "wrote " << syn_out << "/panel.csv\n";
            return kExitOk;
        }

        // remaining commands need a workspace
        if (*cmd_estimate) {
            Workspace ws = load_workspace(est_ws);
            Manifest run_manifest = ws.manifest;
            run_manifest.inputs.push_back({"seed", std::to_string(est_seed)});
            run_manifest.inputs.push_back({"sims", std::to_string(est_sims)});
            EstimateOutputs out;
            for (const auto& m : est_models) {
                ModelSpec spec = load_spec(m);
                if (!est_subset.empty()) spec.sample = est_subset;
                if (!est_labels.empty()) spec.group_map = load_group_labels(est_labels);
                run_manifest.inputs.push_back(
                    {"model:" + spec.name,
                     is_preset(m) ? "preset" : hash_hex(fnv1a_file(m))});
                try {
                    run_spec(ws, spec, est_sims, est_seed, out);
                } catch (const Error& e) {
                    std::cerr << "estimation failed for '" << spec.name << "': " << e.what()
                              << "\n";
                    return kExitEstimation;
                }
            }
            run_manifest.finalize();
            write_out(est_out, "run_manifest.json", run_manifest.to_json());
            const std::string& mh = run_manifest.hash;
            write_out(est_out, "coefficients.csv", csv_coefficients(out.reports, mh));
            write_out(est_out, "fitstats.csv", csv_fitstats(out.reports, mh));
            write_out(est_out, "plot_data.csv", csv_plot_data(out.reports, est_flip, mh));
            write_out(est_out, "table.txt", text_table(out.reports));
            write_out(est_out, "report.json", json_report(out.reports, mh));
            for (const auto& [name, imp] : out.impacts)
                write_out(est_out, "impacts_" + name + ".csv", csv_impacts(name, imp, mh));
            if (out.comparison.size() > 1) {
                bool same = true;
                for (const auto& c : out.comparison)
                    same = same && c.nobs == out.comparison.front().nobs &&
                           c.dependent == out.comparison.front().dependent;
                if (same)
                    write_out(est_out, "model_comparison.csv",
                              csv_model_comparison(compare_models(out.comparison), mh));
            }
            if (est_format == "text")
                std::cout << text_table(out.reports);
            else if (est_format == "csv")
                std::cout << csv_coefficients(out.reports, mh);
            else
                std::cout << json_report(out.reports, mh);
            return kExitOk;
        }

        if (*cmd_diagnose) {
            Workspace ws = load_workspace(dia_ws);
            std::vector<std::pair<std::string, CsdTestResult>> tests;
            bool threshold_hit = false;
            for (const auto& m : dia_models) {
                ModelSpec spec = load_spec(m);
                if (!dia_labels.empty()) spec.group_map = load_group_labels(dia_labels);

                // battery on the model's dependent variable (input side)
                ResolvedModel rm = materialize(spec, ws.panel);
                const Column& dep = rm.panel.column(rm.dependent);
                tests.emplace_back("input:" + rm.dependent,
                                   pesaran_cd(dep.values, dep.missing));
                tests.emplace_back("input:" + rm.dependent, bp_lm(dep.values, dep.missing));
                tests.emplace_back("input:" + rm.dependent,
                                   scaled_lm(dep.values, dep.missing));

                // battery on the fit residuals
                Eigen::MatrixXd resid;
                MaskXb mask;
                try {
                    if (spec.estimator == Estimator::Twfe) {
                        FitResult fit = fit_twfe(spec, ws.panel);
                        auto [r, mk] = fit.residual_matrix();
                        resid = r;
                        mask = mk;
                    } else if (spec.estimator == Estimator::Htt) {
                        FactorFit fit = fit_htt(spec, ws.panel, spec.n_factors);
                        resid = fit.residual_mat;
                        mask = MaskXb::Constant(resid.rows(), resid.cols(), false);
                    } else {
                        require(ws.weights.has_value(), "spatial diagnostics need weights");
                        SpatialFit fit =
                            spec.estimator == Estimator::Slm
                                ? fit_slm(spec, ws.panel, *ws.weights)
                                : (spec.estimator == Estimator::Sem
                                       ? fit_sem(spec, ws.panel, *ws.weights)
                                       : fit_sarar(spec, ws.panel, *ws.weights));
                        resid = fit.residual_mat;
                        mask = MaskXb::Constant(resid.rows(), resid.cols(), false);
                    }
                } catch (const Error& e) {
                    std::cerr << "estimation failed for '" << spec.name << "': " << e.what()
                              << "\n";
                    return kExitEstimation;
                }
                CsdTestResult cd = pesaran_cd(resid, mask);
                tests.emplace_back("residuals:" + spec.name, cd);
                tests.emplace_back("residuals:" + spec.name, bp_lm(resid, mask));
                tests.emplace_back("residuals:" + spec.name, scaled_lm(resid, mask));
                if (dia_perm > 0)
                    tests.emplace_back("residuals:" + spec.name,
                                       pesaran_cd_permutation(resid, mask, dia_perm, dia_seed));
                if (dia_fail_p >= 0 && cd.p_value < dia_fail_p) threshold_hit = true;
            }
            const std::string table = csv_csd(tests, ws.manifest.hash);
            write_out(dia_out, "csd_tests.csv", table);
            std::cout << table;
            if (threshold_hit) {
                std::cerr << "residual cross-sectional dependence below the p threshold\n";
                return kExitDiagnostics;
            }
            return kExitOk;
        }

        if (*cmd_cluster) {
            Workspace ws = load_workspace(clu_ws);
            require(ws.features.has_value(), "cluster: workspace has no feature table");
            const FeatureTable& f = *ws.features;
            Dendrogram dg = hclust_ward(f.z);
            const int k_max = std::min<int>(clu_kmax, static_cast<int>(f.z.rows()) - 1);
            KSelection sel = choose_k(f.z, dg, k_max, clu_B, clu_seed);
            const int k = clu_k > 0 ? clu_k : sel.k_gap;
            TypologyResult res = cut_and_label(f, dg, k);

            std::ostringstream curves;
            curves << "# manifest=" << ws.manifest.hash << "\n";
            curves << "k,wss,silhouette,gap,gap_se\n";
            for (int q = 1; q <= k_max; ++q)
                curves << q << "," << fmt_num(sel.wss[q - 1]) << ","
                       << (q >= 2 ? fmt_num(sel.silhouette[q - 1]) : "") << ","
                       << fmt_num(sel.gap[q - 1]) << "," << fmt_num(sel.gap_se[q - 1]) << "\n";
            write_out(clu_out, "cluster_curves.csv", curves.str());

            std::ostringstream labels;
            labels << "# manifest=" << ws.manifest.hash << "\n";
            labels << "fips,type\n";
            for (std::size_t i = 0; i < f.ids.size(); ++i)
                labels << f.ids[i] << "," << res.types[i] << "\n";
            write_out(clu_out, "labels.csv", labels.str());

            std::ostringstream prof;
            prof << "# manifest=" << ws.manifest.hash << "\n";
            prof << "type,count";
            for (const auto& n : f.feature_names) prof << "," << n;
            for (const auto& n : f.passive_names) prof << "," << n;
            prof << "\n";
            for (int t = 0; t < k; ++t) {
                prof << (t + 1) << "," << res.type_sizes[t];
                for (Eigen::Index c = 0; c < res.type_means_raw.cols(); ++c)
                    prof << "," << fmt_num(res.type_means_raw(t, c));
                for (Eigen::Index c = 0; c < res.type_means_passive.cols(); ++c)
                    prof << "," << fmt_num(res.type_means_passive(t, c));
                prof << "\n";
            }
            write_out(clu_out, "type_profile.csv", prof.str());

            std::cout << "criteria: elbow k=" << sel.k_elbow << ", silhouette k="
                      << sel.k_silhouette << ", gap k=" << sel.k_gap << " (" << sel.note
                      << ")\n";
            std::cout << "labels written for k=" << k << "; type sizes:";
            for (int t = 0; t < k; ++t) std::cout << " " << res.type_sizes[t];
            std::cout << "\n";
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kExitEstimation;
    }
    return kExitOk;
}
