#include "pathflow/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "pathflow/errors.hpp"
#include "pathflow/version.hpp"

namespace pathflow {

CheckRow::CheckRow(std::string name_, double lhs_, double rhs_, double se_lhs_, double se_rhs_,
                   double tol)
    : name(std::move(name_)), lhs(lhs_), rhs(rhs_), se_lhs(se_lhs_), se_rhs(se_rhs_),
      tolerance(tol) {
    pass = std::abs(lhs - rhs) <= tolerance;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string render_csv(const Report& rep) {
    std::string out;
    switch (rep.schema) {
        case CsvSchema::Flow:
            out = "functional_id,estimate_direct,estimate_reweighted,se_direct,se_reweighted,"
                  "pass\n";
            for (const auto& r : rep.rows)
                out += r.name + "," + fmt(r.lhs) + "," + fmt(r.rhs) + "," + fmt(r.se_lhs) + "," +
                       fmt(r.se_rhs) + "," + (r.pass ? "1" : "0") + "\n";
            break;
        case CsvSchema::Ibp:
            out = "name,lhs,rhs,se_lhs,se_rhs,pass\n";
            for (const auto& r : rep.rows)
                out += r.name + "," + fmt(r.lhs) + "," + fmt(r.rhs) + "," + fmt(r.se_lhs) + "," +
                       fmt(r.se_rhs) + "," + (r.pass ? "1" : "0") + "\n";
            break;
        case CsvSchema::Generic:
            out = "name,lhs,rhs,se_lhs,se_rhs,tolerance,pass\n";
            for (const auto& r : rep.rows)
                out += r.name + "," + fmt(r.lhs) + "," + fmt(r.rhs) + "," + fmt(r.se_lhs) + "," +
                       fmt(r.se_rhs) + "," + fmt(r.tolerance) + "," + (r.pass ? "1" : "0") +
                       "\n";
            break;
    }
    return out;
}

void write_csv(const Report& rep, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open report file '" + path + "'");
    os << render_csv(rep);
}

std::string render_meta_json(const Report& rep) {
    nlohmann::json meta;
    meta["experiment"] = rep.experiment;
    meta["version"] = kVersion;
    meta["schema_version"] = kReportSchemaVersion;
    meta["wall_time_s"] = rep.wall_time_s;
    meta["all_pass"] = rep.all_pass();
    if (!rep.error.empty()) meta["error"] = rep.error;
    if (!rep.config_json.empty())
        meta["config"] = nlohmann::json::parse(rep.config_json, nullptr, false);
    nlohmann::json diag = nlohmann::json::object();
    for (const auto& [k, v] : rep.diagnostics) diag[k] = v;
    meta["diagnostics"] = diag;
    return meta.dump(2) + "\n";
}

void write_meta_json(const Report& rep, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open metadata file '" + path + "'");
    os << render_meta_json(rep);
}

} // namespace pathflow
