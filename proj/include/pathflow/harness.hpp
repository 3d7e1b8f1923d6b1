#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathflow/driverflow.hpp"
#include "pathflow/report.hpp"
#include "pathflow/skorohod.hpp"

namespace pathflow {

/// Resolved experiment configuration: one human-editable file plus flag
/// overrides; every run echoes it into the report sidecar.
struct ExperimentConfig {
    std::string manifold = "sphere2";
    int n_steps = 256;
    long n_paths = 100000;
    std::uint64_t seed = 42;
    double t = 0.5;
    std::string shift = "sinusoid"; // constant | sinusoid | adapted
    double bound = 1.0;
    std::string formula = "trace";  // skorohod: trace | limits | volterra | explicit
    std::string process = "rankone"; // skorohod: step1 | rankone
    std::string functional = "all"; // ibp filter
    std::string kind = "both";      // ibp: bismut | damped | both
    std::string conv_target = "roundtrip";
    std::vector<int> conv_grids = {64, 128, 256, 512};
    int t_steps = 16;
    double picard_tol = 1e-7;
    int batch_size = 1024;

    void validate() const;
    ManifoldSpec spec() const { return parse_manifold(manifold); }
    ShiftRecipe shift_recipe() const;
    std::string to_json() const;
    static ExperimentConfig from_json_file(const std::string& path);
    void apply_json(const std::string& json_text);
};

/// The three deterministic shifts of the IBP battery.
std::vector<std::pair<std::string, ShiftRecipe>> ibp_shift_battery();

/// Step-process batteries for the anticipative suites.
std::vector<StepProcess> skorohod_battery(const ManifoldSpec& spec, const TimeGrid& grid);
std::vector<StepProcess> l1_battery(const ManifoldSpec& spec, const TimeGrid& grid);
std::vector<StepProcess> l1_holdout(const ManifoldSpec& spec, const TimeGrid& grid);

/// Experiment drivers; each fills rows, diagnostics and the schema.
Report run_simulate(const ExperimentConfig& cfg);
Report run_flow_qi(const ExperimentConfig& cfg);
Report run_ibp(const ExperimentConfig& cfg);
Report run_intertwine(const ExperimentConfig& cfg);
Report run_skorohod(const ExperimentConfig& cfg);
Report run_ito(const ExperimentConfig& cfg);
Report run_l1bound(const ExperimentConfig& cfg);
Report run_convergence(const ExperimentConfig& cfg);

/// Dispatch by experiment name; throws ConfigError for unknown names.
Report run_experiment(const ExperimentConfig& cfg, const std::string& experiment);

/// Log-log least-squares fit of error vs dt; returns (slope, r_squared).
std::pair<double, double> fit_order(const std::vector<double>& dts,
                                    const std::vector<double>& errors);

} // namespace pathflow
