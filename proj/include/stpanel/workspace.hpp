#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stpanel/panel.hpp"
#include "stpanel/typology.hpp"
#include "stpanel/weights.hpp"

namespace stpanel {

std::uint64_t fnv1a(const void* data, std::size_t len);
std::uint64_t fnv1a_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

struct ManifestInput {
    std::string path;
    std::string hash;
};

// Traceability record for a workspace: every emitted table embeds
// `hash`, computed over the input hashes and the toolkit version (never
// over timestamps, so reruns stay byte-identical).
struct Manifest {
    std::string version;
    std::vector<ManifestInput> inputs;
    std::string created; // informational only, excluded from the hash
    std::string hash;

    void finalize();
    std::string to_json() const;
    static Manifest from_json(const std::string& text);
};

struct Workspace {
    PanelDataset panel;
    std::optional<SpatialWeights> weights;
    std::optional<FeatureTable> features;
    Manifest manifest;
    std::vector<std::string> warnings; // entities absent from the adjacency etc.
};

// Parses and validates the three CSVs (features optional), applies the
// optional FIPS remap to the panel, builds the weight operator restricted to
// the panel's entities.
Workspace ingest(const std::string& panel_csv, const std::string& adjacency_csv,
                 const std::string& features_csv = "", const std::string& fips_remap_csv = "");

void save_workspace(const Workspace& ws, const std::string& dir);
Workspace load_workspace(const std::string& dir);

// Per-variable summary statistics table for the ingested panel.
std::string validation_report(const Workspace& ws);

extern const char* kToolkitVersion;

} // namespace stpanel
