#pragma once

#include "hsfusion/cb_star.hpp"
#include "hsfusion/ct_star.hpp"
#include "hsfusion/metrics.hpp"
#include "hsfusion/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hsfusion {

enum class AlgorithmKind { ct_star, cb_star };

struct AlgorithmSpec {
    AlgorithmKind kind = AlgorithmKind::ct_star;
    std::string label;  // column value in the CSVs; defaults to the algorithm name
    CtStarConfig ct;
    CbStarConfig cb;
};

FusionResult run_algorithm(const AlgorithmSpec& spec, const Tensor3& y_h, const Tensor3& y_m,
                           const DegradationOperators& ops);

enum class SweepAxis { none, snr, z_rank, psi_rank };

struct SweepConfig {
    SweepAxis axis = SweepAxis::none;
    int index = 1;  // 1-based rank index for the rank axes
    std::vector<double> values;
};

struct ExperimentConfig {
    SceneConfig scene;
    // Draw a new ground truth for every run (seeded like the noise) instead
    // of reusing scene.seed.
    bool vary_scene = false;
    std::vector<AlgorithmSpec> algorithms;
    int runs = 1;
    std::uint64_t base_seed = 1;
    SweepConfig sweep;
    std::filesystem::path output = "results";
    int threads = 1;
    bool save_tensors = false;
    // Wall time is written as NA unless set, so the CSVs stay reproducible.
    bool record_timing = false;
};

// Parses the JSON experiment description. Errors carry the source name,
// the line of the offending key and its JSON pointer.
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& source = "config");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Scene section alone, as accepted by the `generate` verb.
SceneConfig parse_scene_config(const std::string& json_text, const std::string& source = "scene");

void validate(const ExperimentConfig& cfg);

struct RunRow {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::size_t sweep_index = 0;
    double sweep_value = 0.0;
    MetricSet metrics;
    double wall_seconds = 0.0;
    int outer_iterations = 0;
    bool failed = false;
    std::string failure;
};

struct AggregateRow {
    std::string algorithm;
    std::size_t sweep_index = 0;
    double sweep_value = 0.0;
    int runs = 0;
    int failures = 0;
    // mean and sample standard deviation of SAM, ERGAS, PSNR, UIQI,
    // wall-seconds, outer-iterations, in that order.
    std::array<double, 6> mean{};
    std::array<double, 6> stddev{};
};

struct ExperimentSummary {
    std::vector<RunRow> rows;
    std::vector<AggregateRow> aggregate;
    std::filesystem::path per_run_csv;
    std::filesystem::path aggregate_csv;
    std::filesystem::path table_csv;
    int failures = 0;
};

// One Monte Carlo cell: the scene for (sweep value, run) and every algorithm on it.
std::vector<RunRow> run_cell(const ExperimentConfig& cfg, std::size_t sweep_index, int run);

std::vector<AggregateRow> aggregate(const ExperimentConfig& cfg, const std::vector<RunRow>& rows);

std::string per_run_csv(const std::vector<RunRow>& rows, bool with_timing, bool has_sweep);
std::string aggregate_csv(const std::vector<AggregateRow>& rows, bool with_timing, bool has_sweep);
// Means laid out with one row per (algorithm, metric) and one column per sweep value.
std::string table_csv(const ExperimentConfig& cfg, const std::vector<AggregateRow>& rows);

// Runs all cells on cfg.threads workers and writes per_run.csv,
// aggregate.csv and table.csv under cfg.output. Numerical failures in a
// cell are recorded as failed rows and counted.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

// Operator description stored next to tensors: blur sigma, decimation and
// SRF mode ("band_average", "identity" or "custom" with "srf_csv").
DegradationOperators load_operator_spec(const std::filesystem::path& path, const Dims& hs_dims, const Dims& ms_dims);
void save_operator_spec(const std::filesystem::path& path, const SceneConfig& scene);

// Writes z_h, psi, y_h, y_m and ops.json into `dir`.
SyntheticScene generate_files(const SceneConfig& scene, const std::filesystem::path& dir);

struct FuseRequest {
    std::filesystem::path y_h;
    std::filesystem::path y_m;
    std::filesystem::path ops_spec;
    std::filesystem::path output_dir;
    AlgorithmSpec algorithm;
};

// Loads the inputs, runs the algorithm and writes z_hat, p3_psi_hat and
// diagnostics.json into output_dir.
FusionResult fuse_files(const FuseRequest& req);

std::string diagnostics_json(const FusionResult& result);

// %.17g, with "inf", "-inf" and "nan" spelled out.
std::string format_double(double v);

}  // namespace hsfusion
