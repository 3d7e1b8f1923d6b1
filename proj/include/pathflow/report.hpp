#pragma once

#include <string>
#include <vector>

namespace pathflow {

/// One verification row. The pass flag is derived from |lhs - rhs| and the
/// tolerance at construction, never set independently.
struct CheckRow {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double se_lhs = 0.0;
    double se_rhs = 0.0;
    double tolerance = 0.0;
    bool pass = false;

    CheckRow() = default;
    CheckRow(std::string name_, double lhs_, double rhs_, double se_lhs_, double se_rhs_,
             double tol);
};

enum class CsvSchema { Generic, Flow, Ibp };

struct Report {
    std::string experiment;
    std::vector<CheckRow> rows;
    CsvSchema schema = CsvSchema::Generic;
    std::string config_json; // resolved config echo
    double wall_time_s = 0.0;
    std::vector<std::pair<std::string, double>> diagnostics;
    std::string error; // set when a solver error interrupted the run

    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return !rows.empty() && error.empty();
    }
};

/// Deterministic CSV bytes: fixed column set per schema, %.17g numbers, 0/1
/// pass flags, no timestamps.
std::string render_csv(const Report& rep);
void write_csv(const Report& rep, const std::string& path);

/// JSON sidecar with the config echo, version, schema id, wall time and
/// diagnostics (the only place timing lives).
std::string render_meta_json(const Report& rep);
void write_meta_json(const Report& rep, const std::string& path);

} // namespace pathflow
