#include "stpanel/workspace.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <functional>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "stpanel/csv.hpp"
#include "stpanel/stats.hpp"

namespace stpanel {

const char* kToolkitVersion = "stpanel 1.0.0";

std::uint64_t fnv1a(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open file for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto n = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (in.eof()) break;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void Manifest::finalize() {
    std::string all = version;
    for (const auto& in : inputs) all += "|" + in.path + ":" + in.hash;
    hash = hash_hex(fnv1a(all.data(), all.size()));
}

std::string Manifest::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["created"] = created;
    j["hash"] = hash;
    j["inputs"] = nlohmann::json::array();
    for (const auto& in : inputs) j["inputs"].push_back({{"path", in.path}, {"hash", in.hash}});
    return j.dump(2) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.version = j.value("version", "");
    m.created = j.value("created", "");
    m.hash = j.value("hash", "");
    for (const auto& in : j.value("inputs", nlohmann::json::array()))
        m.inputs.push_back({in.value("path", ""), in.value("hash", "")});
    return m;
}

namespace {

std::string normalize_fips_cell(const std::string& raw) {
    std::string s;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    while (s.size() < 5) s.insert(s.begin(), '0');
    return s;
}

std::vector<PanelRecord> parse_panel_csv(const std::string& path,
                                         const std::map<std::string, std::string>& remap) {
    CsvTable t = read_csv(path);
    const int c_fips = t.column("fips");
    const int c_year = t.column("year");
    require(c_fips >= 0, "panel csv: missing required column 'fips'");
    require(c_year >= 0, "panel csv: missing required column 'year'");
    std::vector<int> var_cols;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (static_cast<int>(c) != c_fips && static_cast<int>(c) != c_year)
            var_cols.push_back(static_cast<int>(c));
    require(!var_cols.empty(), "panel csv: no variable columns");

    std::vector<PanelRecord> recs;
    int line = 1;
    for (const auto& row : t.rows) {
        ++line;
        require(row.size() == t.header.size(),
                "panel csv: wrong cell count at data row " + std::to_string(line));
        std::string fips = normalize_fips_cell(row[c_fips]);
        auto it = remap.find(fips);
        if (it != remap.end()) fips = it->second;
        int year = 0;
        try {
            year = std::stoi(row[c_year]);
        } catch (...) {
            fail("panel csv: bad year '" + row[c_year] + "' at row " + std::to_string(line));
        }
        for (int c : var_cols) {
            if (is_missing_token(row[c])) continue;
            double v = 0;
            try {
                v = std::stod(row[c]);
            } catch (...) {
                fail("panel csv: bad numeric value '" + row[c] + "' in column '" +
                     t.header[c] + "' at row " + std::to_string(line));
            }
            recs.push_back({fips, year, t.header[c], v});
        }
    }
    return recs;
}

std::map<std::string, std::string> parse_remap(const std::string& path) {
    std::map<std::string, std::string> remap;
    if (path.empty()) return remap;
    CsvTable t = read_csv(path);
    const int c_from = t.column("from");
    const int c_to = t.column("to");
    require(c_from >= 0 && c_to >= 0, "fips remap csv: need columns 'from' and 'to'");
    for (const auto& row : t.rows)
        remap[normalize_fips_cell(row[c_from])] = normalize_fips_cell(row[c_to]);
    return remap;
}

FeatureTable parse_features_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const int c_fips = t.column("fips");
    require(c_fips >= 0, "features csv: missing required column 'fips'");
    for (const auto& name : kFeatureSchema)
        require(t.column(name) >= 0, "features csv: missing required column '" + name + "'");
    // extra columns ride along as passive descriptors
    std::vector<int> passive_cols;
    std::vector<std::string> passive_names;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (static_cast<int>(c) == c_fips) continue;
        if (std::find(kFeatureSchema.begin(), kFeatureSchema.end(), t.header[c]) ==
            kFeatureSchema.end()) {
            passive_cols.push_back(static_cast<int>(c));
            passive_names.push_back(t.header[c]);
        }
    }

    std::vector<std::string> ids;
    std::vector<std::string> excluded;
    std::vector<Eigen::VectorXd> rows;
    std::vector<Eigen::VectorXd> passive_rows;
    for (const auto& row : t.rows) {
        Eigen::VectorXd v(kFeatureSchema.size());
        bool ok = true;
        for (std::size_t q = 0; q < kFeatureSchema.size(); ++q) {
            const auto& cell = row[t.column(kFeatureSchema[q])];
            if (is_missing_token(cell)) {
                ok = false;
                break;
            }
            try {
                v[q] = std::stod(cell);
            } catch (...) {
                ok = false;
                break;
            }
        }
        const std::string fips = normalize_fips_cell(row[c_fips]);
        if (!ok) {
            excluded.push_back(fips);
            continue;
        }
        Eigen::VectorXd pv(passive_cols.size());
        for (std::size_t q = 0; q < passive_cols.size(); ++q) {
            const auto& cell = row[passive_cols[q]];
            pv[q] = is_missing_token(cell) ? std::numeric_limits<double>::quiet_NaN()
                                           : std::stod(cell);
        }
        ids.push_back(fips);
        rows.push_back(v);
        passive_rows.push_back(pv);
    }
    require(rows.size() >= 2, "features csv: fewer than 2 complete rows");
    Eigen::MatrixXd raw(rows.size(), kFeatureSchema.size());
    for (std::size_t r = 0; r < rows.size(); ++r) raw.row(r) = rows[r].transpose();
    FeatureTable f = standardize(ids, raw, kFeatureSchema);
    f.excluded = excluded;
    f.passive_names = passive_names;
    f.passive.resize(rows.size(), static_cast<Eigen::Index>(passive_cols.size()));
    for (std::size_t r = 0; r < passive_rows.size(); ++r)
        f.passive.row(r) = passive_rows[r].transpose();
    return f;
}

// --- tiny tagged binary writer/reader ---

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<char*>(&v), 8); }
void put_str(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}
std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string get_str(std::istream& is) {
    const auto n = get_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
void get_doubles(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
}

} // namespace

Workspace ingest(const std::string& panel_csv, const std::string& adjacency_csv,
                 const std::string& features_csv, const std::string& fips_remap_csv) {
    const auto remap = parse_remap(fips_remap_csv);
    auto records = parse_panel_csv(panel_csv, remap);

    Workspace ws{build_panel(records), std::nullopt, std::nullopt, {}, {}};

    if (!adjacency_csv.empty()) {
        std::vector<std::string> lines = read_lines(adjacency_csv);
        AdjacencyGraph g = parse_adjacency(lines, ws.panel.entities());
        if (g.dropped_pairs > 0)
            ws.warnings.push_back(std::to_string(g.dropped_pairs) +
                                  " adjacency pairs outside the panel entity set dropped");
        std::set<std::string> with_edges;
        for (const auto& [a, b] : g.edges) {
            with_edges.insert(g.nodes[a]);
            with_edges.insert(g.nodes[b]);
        }
        std::vector<std::string> isolated;
        for (const auto& e : ws.panel.entities())
            if (!with_edges.count(e)) isolated.push_back(e);
        if (!isolated.empty())
            ws.warnings.push_back(std::to_string(isolated.size()) +
                                  " panel entities absent from the adjacency file (zero rows)");
        ws.weights = SpatialWeights::build(g, ws.panel.entities());
    }
    if (!features_csv.empty()) ws.features = parse_features_csv(features_csv);

    ws.manifest.version = kToolkitVersion;
    ws.manifest.inputs.push_back(
        {panel_csv, hash_hex(fnv1a_file(panel_csv))});
    if (!adjacency_csv.empty())
        ws.manifest.inputs.push_back({adjacency_csv, hash_hex(fnv1a_file(adjacency_csv))});
    if (!features_csv.empty())
        ws.manifest.inputs.push_back({features_csv, hash_hex(fnv1a_file(features_csv))});
    if (!fips_remap_csv.empty())
        ws.manifest.inputs.push_back({fips_remap_csv, hash_hex(fnv1a_file(fips_remap_csv))});
    ws.manifest.finalize();
    return ws;
}

void save_workspace(const Workspace& ws, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "workspace.bin", std::ios::binary);
    require(static_cast<bool>(os), "cannot write workspace binary in " + dir);
    os.write("STPW0001", 8);

    // panel
    const auto& p = ws.panel;
    put_u64(os, static_cast<std::uint64_t>(p.n_entities()));
    put_u64(os, static_cast<std::uint64_t>(p.n_years()));
    for (const auto& e : p.entities()) put_str(os, e);
    for (int y : p.years()) put_u64(os, static_cast<std::uint64_t>(y));
    const auto names = p.column_names();
    put_u64(os, names.size());
    for (const auto& name : names) {
        put_str(os, name);
        const Column& c = p.column(name);
        put_doubles(os, c.values.data(), static_cast<std::size_t>(c.values.size()));
        for (Eigen::Index i = 0; i < c.missing.rows(); ++i)
            for (Eigen::Index t = 0; t < c.missing.cols(); ++t)
                os.put(c.missing(i, t) ? 1 : 0);
    }

    // weights: adjacency edges in index form (re-normalized on load)
    os.put(ws.weights ? 1 : 0);
    if (ws.weights) {
        const auto& W = *ws.weights;
        put_u64(os, static_cast<std::uint64_t>(W.size()));
        for (const auto& e : W.order()) put_str(os, e);
        std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
        const auto& M = W.matrix();
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(M, i); it; ++it)
                if (i < it.col()) edges.emplace_back(i, it.col());
        put_u64(os, edges.size());
        for (const auto& [a, b] : edges) {
            put_u64(os, a);
            put_u64(os, b);
        }
        // cache the spectrum; recomputing it at full scale is expensive
        put_doubles(os, W.spectrum().data(), static_cast<std::size_t>(W.spectrum().size()));
    }

    os.put(ws.features ? 1 : 0);
    if (ws.features) {
        const auto& f = *ws.features;
        put_u64(os, f.ids.size());
        for (const auto& id : f.ids) put_str(os, id);
        put_u64(os, f.feature_names.size());
        for (const auto& n : f.feature_names) put_str(os, n);
        put_doubles(os, f.raw.data(), static_cast<std::size_t>(f.raw.size()));
        put_u64(os, f.passive_names.size());
        for (const auto& n : f.passive_names) put_str(os, n);
        put_doubles(os, f.passive.data(), static_cast<std::size_t>(f.passive.size()));
        put_u64(os, f.excluded.size());
        for (const auto& n : f.excluded) put_str(os, n);
    }
    require(os.good(), "workspace write failed in " + dir);
    os.close();

    write_file((fs::path(dir) / "manifest.json").string(), ws.manifest.to_json());
    for (const auto& w : ws.warnings) {
        std::ofstream log(fs::path(dir) / "ingest_warnings.txt", std::ios::app);
        log << w << "\n";
    }
}

Workspace load_workspace(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / "workspace.bin", std::ios::binary);
    require(static_cast<bool>(is), "cannot open workspace binary in " + dir);
    char magic[8];
    is.read(magic, 8);
    require(std::memcmp(magic, "STPW0001", 8) == 0, "not a workspace file: " + dir);

    const auto N = static_cast<Eigen::Index>(get_u64(is));
    const auto T = static_cast<Eigen::Index>(get_u64(is));
    std::vector<std::string> entities;
    for (Eigen::Index i = 0; i < N; ++i) entities.push_back(get_str(is));
    std::vector<int> years;
    for (Eigen::Index t = 0; t < T; ++t) years.push_back(static_cast<int>(get_u64(is)));
    PanelDataset panel(entities, years);
    const auto n_cols = get_u64(is);
    for (std::uint64_t c = 0; c < n_cols; ++c) {
        const std::string name = get_str(is);
        Column col;
        col.values.resize(N, T);
        get_doubles(is, col.values.data(), static_cast<std::size_t>(N * T));
        col.missing.resize(N, T);
        for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index t = 0; t < T; ++t) col.missing(i, t) = is.get() != 0;
        panel.add_column(name, std::move(col));
    }

    Workspace ws{std::move(panel), std::nullopt, std::nullopt, {}, {}};
    if (is.get() != 0) {
        const auto n = static_cast<int>(get_u64(is));
        AdjacencyGraph g;
        for (int i = 0; i < n; ++i) g.nodes.push_back(get_str(is));
        const auto n_edges = get_u64(is);
        for (std::uint64_t e = 0; e < n_edges; ++e) {
            const auto a = static_cast<int>(get_u64(is));
            const auto b = static_cast<int>(get_u64(is));
            g.edges.insert({a, b});
        }
        Eigen::VectorXd spectrum(n);
        get_doubles(is, spectrum.data(), static_cast<std::size_t>(n));
        ws.weights = SpatialWeights::build(g, g.nodes, &spectrum);
    }
    if (is.get() != 0) {
        const auto n_ids = get_u64(is);
        std::vector<std::string> ids;
        for (std::uint64_t i = 0; i < n_ids; ++i) ids.push_back(get_str(is));
        const auto n_feat = get_u64(is);
        std::vector<std::string> fnames;
        for (std::uint64_t i = 0; i < n_feat; ++i) fnames.push_back(get_str(is));
        Eigen::MatrixXd raw(n_ids, n_feat);
        get_doubles(is, raw.data(), static_cast<std::size_t>(raw.size()));
        FeatureTable f = standardize(ids, raw, fnames);
        const auto n_pass = get_u64(is);
        f.passive_names.resize(n_pass);
        for (auto& n2 : f.passive_names) n2 = get_str(is);
        f.passive.resize(n_ids, n_pass);
        get_doubles(is, f.passive.data(), static_cast<std::size_t>(f.passive.size()));
        const auto n_ex = get_u64(is);
        f.excluded.resize(n_ex);
        for (auto& n2 : f.excluded) n2 = get_str(is);
        ws.features = std::move(f);
    }
    require(is.good(), "workspace read failed in " + dir);

    std::ifstream mf(fs::path(dir) / "manifest.json");
    require(static_cast<bool>(mf), "missing manifest.json in " + dir);
    std::stringstream buf;
    buf << mf.rdbuf();
    ws.manifest = Manifest::from_json(buf.str());
    return ws;
}

std::string validation_report(const Workspace& ws) {
    std::ostringstream os;
    os << "workspace validation report (" << ws.manifest.version << ", manifest "
       << ws.manifest.hash << ")\n";
    os << "entities: " << ws.panel.n_entities() << ", years: " << ws.panel.years().front()
       << "-" << ws.panel.years().back() << " (" << ws.panel.n_years() << ")\n";
    os << "rows per complete variable: " << ws.panel.n_entities() * ws.panel.n_years() << "\n\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %10s %8s %12s %12s %12s %12s %12s %12s\n",
                  "variable", "n", "missing", "mean", "sd", "min", "p25", "p75", "max");
    os << line;
    for (const auto& name : ws.panel.column_names()) {
        const Column& c = ws.panel.column(name);
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(c.values.size()));
        for (Eigen::Index i = 0; i < c.values.rows(); ++i)
            for (Eigen::Index t = 0; t < c.values.cols(); ++t)
                if (!c.missing(i, t)) vals.push_back(c.values(i, t));
        const auto s = stats::summarize(vals);
        std::snprintf(line, sizeof(line),
                      "%-24s %10lld %8lld %12.4g %12.4g %12.4g %12.4g %12.4g %12.4g\n",
                      name.c_str(), s.n, static_cast<long long>(c.n_missing()), s.mean, s.sd,
                      s.min, s.p25, s.p75, s.max);
        os << line;
    }
    if (ws.weights) {
        // union-find over the weight support: a contiguity file for one land
        // mass should give one component plus any isolated islands
        const auto n = ws.weights->size();
        std::vector<int> parent(n);
        for (Eigen::Index i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
        std::function<int(int)> find = [&](int x) {
            while (parent[x] != x) {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            return x;
        };
        const auto& M = ws.weights->matrix();
        int isolated = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (M.row(i).nonZeros() == 0) ++isolated;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(M, i); it; ++it)
                parent[find(static_cast<int>(i))] = find(static_cast<int>(it.col()));
        }
        std::set<int> roots;
        for (Eigen::Index i = 0; i < n; ++i)
            if (M.row(i).nonZeros() > 0) roots.insert(find(static_cast<int>(i)));
        os << "\nspatial weights: " << ws.weights->size() << " nodes, "
           << ws.weights->matrix().nonZeros() << " directed links, "
           << roots.size() << " connected components, " << isolated
           << " isolated nodes, lambda_min " << fmt_num(ws.weights->lambda_min()) << "\n";
    }
    if (ws.features) {
        os << "features: " << ws.features->ids.size() << " rows";
        if (!ws.features->excluded.empty())
            os << " (" << ws.features->excluded.size() << " excluded for missing indicators)";
        os << "\n";
    }
    for (const auto& w : ws.warnings) os << "warning: " << w << "\n";
    return os.str();
}

} // namespace stpanel
