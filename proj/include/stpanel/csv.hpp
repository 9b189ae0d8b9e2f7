#pragma once

#include <string>
#include <vector>

namespace stpanel {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 if absent
};

// Plain comma-separated files; lines starting with '#' are skipped.
CsvTable read_csv(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);
void write_file(const std::string& path, const std::string& content);

bool is_missing_token(const std::string& s); // "", "NA", "NaN", "." variants

// Fixed-precision deterministic formatting used by every emitted table.
std::string fmt_num(double v);
// Round-trip-exact formatting (synthetic data dumps).
std::string fmt_num_exact(double v);

} // namespace stpanel
