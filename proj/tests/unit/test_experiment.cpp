#include "hsfusion/errors.hpp"
#include "hsfusion/experiment.hpp"
#include "hsfusion/tensor_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace hsfusion;
using namespace hsfusion::testing;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "scene": {
    "dims": [20, 20, 16],
    "ms_bands": 4,
    "z_ranks": [3, 3, 2],
    "psi_ranks": [2, 2, 2],
    "seed": 3,
    "snr_db": 30
  },
  "algorithms": [
    {"name": "ct-star"},
    {"name": "cb-star", "lambda": 1, "max_outer": 5, "init": "interpolation"}
  ],
  "monte_carlo": {"runs": 3, "base_seed": 10},
  "sweep": {"axis": "snr", "values": [20, 40]}
})";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error(const std::string& text) {
    try {
        parse_experiment_config(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("hsfusion_exp_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(ExperimentConfig, ParsesAllSections) {
    const ExperimentConfig cfg = parse_experiment_config(kSmallConfig);
    EXPECT_EQ(cfg.scene.dims, (Dims{20, 20, 16}));
    EXPECT_EQ(cfg.scene.snr_h_db, 30.0);
    EXPECT_EQ(cfg.scene.snr_m_db, 30.0);
    ASSERT_EQ(cfg.algorithms.size(), 2u);
    EXPECT_EQ(cfg.algorithms[0].kind, AlgorithmKind::ct_star);
    EXPECT_EQ(cfg.algorithms[0].label, "ct-star");
    EXPECT_EQ(cfg.algorithms[0].ct.z_ranks, (Dims{3, 3, 2}));
    EXPECT_EQ(cfg.algorithms[1].cb.max_outer, 5);
    EXPECT_EQ(cfg.runs, 3);
    EXPECT_EQ(cfg.base_seed, 10u);
    EXPECT_EQ(cfg.sweep.axis, SweepAxis::snr);
    EXPECT_EQ(cfg.sweep.values, (std::vector<double>{20, 40}));
}

TEST(ExperimentConfig, InfiniteSnrSpellings) {
    const ExperimentConfig cfg = parse_experiment_config(R"({
      "scene": {"dims": [20, 20, 16], "ms_bands": 4, "z_ranks": [3, 3, 2], "psi_ranks": [2, 2, 2],
                "snr_h_db": "inf", "snr_m_db": null},
      "algorithms": [{"name": "ct-star"}]})");
    EXPECT_TRUE(std::isinf(cfg.scene.snr_h_db));
    EXPECT_TRUE(std::isinf(cfg.scene.snr_m_db));
}

TEST(ExperimentConfig, ErrorsCarryLineAndPointer) {
    std::string msg = config_error("{\n  \"algorithms\": [{\"name\": \"ct-star\"}],\n  \"scene\": {\n    \"bogus\": 1\n  }\n}");
    EXPECT_NE(msg.find("cfg.json:4:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/scene/bogus"), std::string::npos) << msg;

    msg = config_error("{\n  \"algorithms\": [\n    {\"name\": \"ct-star\", \"z_ranks\": [3, 3]}\n  ]\n}");
    EXPECT_NE(msg.find("cfg.json:3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/algorithms/0/z_ranks"), std::string::npos) << msg;

    msg = config_error("{\n  \"algorithms\": [\n");
    EXPECT_NE(msg.find("cfg.json:"), std::string::npos) << msg;

    msg = config_error(R"({"algorithms": [{"name": "unknown"}]})");
    EXPECT_NE(msg.find("/algorithms/0/name"), std::string::npos) << msg;

    EXPECT_FALSE(config_error(R"({"algorithms": [{"name": "ct-star"}, {"name": "ct-star"}]})").empty());
    EXPECT_FALSE(config_error(R"({"algorithms": [{"name": "cb-star", "init": "explicit"}]})").empty());
    EXPECT_FALSE(config_error(R"({"algorithms": [{"name": "ct-star"}], "threads": 0})").empty());
    EXPECT_FALSE(config_error(R"({"algorithms": [{"name": "ct-star"}], "sweep": {"axis": "z_rank", "values": [2]}})").empty());
    // K_Z,1 + K_Psi,1 = 60 + 5 > N1 = 50 with the default scene.
    EXPECT_FALSE(config_error(R"({"algorithms": [{"name": "ct-star"}],
                                  "sweep": {"axis": "z_rank", "index": 1, "values": [10, 60]}})").empty());
    EXPECT_FALSE(config_error(R"({"algorithms": []})").empty());
}

TEST(Experiment, NoiselessRunIsExact) {
    ExperimentConfig cfg = parse_experiment_config(kSmallConfig);
    cfg.scene.snr_h_db = cfg.scene.snr_m_db = kNoNoise;
    cfg.sweep = {};
    cfg.algorithms.resize(1);
    const std::vector<RunRow> rows = run_cell(cfg, 0, 0);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_FALSE(rows[0].failed);
    EXPECT_EQ(rows[0].seed, 10u);
    EXPECT_LE(rows[0].metrics.sam, 1e-6);
    EXPECT_NEAR(rows[0].metrics.uiqi, 1.0, 1e-9);
    EXPECT_GT(rows[0].metrics.psnr, 150.0);
    EXPECT_TRUE(std::isnan(rows[0].wall_seconds));
}

TEST(Experiment, AggregatesMatchRecomputation) {
    ExperimentConfig cfg = parse_experiment_config(kSmallConfig);
    cfg.output = fresh_dir("aggregate");
    const ExperimentSummary sum = run_experiment(cfg);
    ASSERT_EQ(sum.rows.size(), 2u * 2u * 3u);
    ASSERT_EQ(sum.aggregate.size(), 4u);
    EXPECT_EQ(sum.failures, 0);
    for (const AggregateRow& a : sum.aggregate) {
        std::vector<double> psnr;
        for (const RunRow& r : sum.rows) {
            if (r.algorithm == a.algorithm && r.sweep_index == a.sweep_index) psnr.push_back(r.metrics.psnr);
        }
        ASSERT_EQ(psnr.size(), 3u);
        const double mean = (psnr[0] + psnr[1] + psnr[2]) / 3.0;
        double ss = 0.0;
        for (double x : psnr) ss += (x - mean) * (x - mean);
        EXPECT_NEAR(a.mean[2], mean, 1e-12 * std::abs(mean));
        EXPECT_NEAR(a.stddev[2], std::sqrt(ss / 2.0), 1e-12 * std::max(1.0, std::sqrt(ss / 2.0)));
        EXPECT_EQ(a.runs, 3);
    }
    // Seeds follow base_seed + run.
    EXPECT_EQ(sum.rows[0].seed, 10u);
    EXPECT_EQ(sum.rows.back().seed, 12u);
    EXPECT_TRUE(fs::exists(sum.per_run_csv));
    EXPECT_TRUE(fs::exists(sum.aggregate_csv));
    EXPECT_TRUE(fs::exists(sum.table_csv));
    const std::string table = read_file(sum.table_csv);
    EXPECT_EQ(table.substr(0, table.find('\n')), "algorithm,metric,20,40");
    EXPECT_NE(table.find("cb-star,UIQI,"), std::string::npos);
    const std::string per_run = read_file(sum.per_run_csv);
    EXPECT_EQ(per_run.substr(0, per_run.find('\n')),
              "algorithm,seed,sweep-value,SAM,ERGAS,PSNR,UIQI,wall-seconds,outer-iterations");
    EXPECT_NE(per_run.find(",NA,"), std::string::npos);
}

TEST(Experiment, ConstantValuesAggregateExactly) {
    ExperimentConfig cfg = parse_experiment_config(kSmallConfig);
    cfg.sweep = {};
    cfg.algorithms.resize(1);
    std::vector<RunRow> rows(3);
    for (RunRow& r : rows) {
        r.algorithm = "ct-star";
        r.metrics = {0.1, 0.2, 0.3, 0.7};
        r.outer_iterations = 1;
    }
    rows[2].failed = true;
    rows[2].metrics = {std::nan(""), std::nan(""), std::nan(""), std::nan("")};
    const std::vector<AggregateRow> agg = aggregate(cfg, rows);
    ASSERT_EQ(agg.size(), 1u);
    EXPECT_EQ(agg[0].mean[0], 0.1);
    EXPECT_EQ(agg[0].stddev[0], 0.0);
    EXPECT_EQ(agg[0].mean[3], 0.7);
    EXPECT_EQ(agg[0].runs, 3);
    EXPECT_EQ(agg[0].failures, 1);
}

TEST(Experiment, OutputIsDeterministicAcrossRunsAndThreads) {
    ExperimentConfig cfg = parse_experiment_config(kSmallConfig);
    std::vector<std::string> outputs;
    for (int threads : {1, 1, 3}) {
        cfg.threads = threads;
        cfg.output = fresh_dir("det" + std::to_string(outputs.size()));
        const ExperimentSummary s = run_experiment(cfg);
        outputs.push_back(read_file(s.per_run_csv) + read_file(s.aggregate_csv) + read_file(s.table_csv));
    }
    EXPECT_EQ(outputs[0], outputs[1]);
    EXPECT_EQ(outputs[0], outputs[2]);
}

TEST(Experiment, RankSweepChangesAlgorithmRanks) {
    ExperimentConfig cfg = parse_experiment_config(R"({
      "scene": {"dims": [20, 20, 16], "ms_bands": 4, "z_ranks": [3, 3, 2], "psi_ranks": [2, 2, 2]},
      "algorithms": [{"name": "ct-star"}],
      "sweep": {"axis": "z_rank", "index": 3, "values": [1, 2]}})");
    const std::vector<RunRow> under = run_cell(cfg, 0, 0);
    const std::vector<RunRow> exact = run_cell(cfg, 1, 0);
    EXPECT_EQ(under[0].sweep_value, 1.0);
    EXPECT_LT(under[0].metrics.psnr, exact[0].metrics.psnr);
    EXPECT_GT(exact[0].metrics.psnr, 150.0);
}

TEST(Experiment, FormatDouble) {
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(FuseFiles, MatchesInMemoryRunBitForBit) {
    const fs::path dir = fresh_dir("fuse");
    SceneConfig sc;
    sc.dims = {20, 20, 16};
    sc.ms_bands = 4;
    sc.z_ranks = {3, 3, 2};
    sc.psi_ranks = {2, 2, 2};
    sc.snr_h_db = 35.0;
    sc.snr_m_db = 30.0;
    const SyntheticScene s = generate_files(sc, dir / "scene");
    FuseRequest req;
    req.y_h = dir / "scene" / "y_h";
    req.y_m = dir / "scene" / "y_m";
    req.ops_spec = dir / "scene" / "ops.json";
    req.output_dir = dir / "out";
    req.algorithm.ct = {sc.z_ranks, sc.psi_ranks};
    const FusionResult r = fuse_files(req);
    const FusionResult direct = ct_star(s.y_h, s.y_m, s.ops, req.algorithm.ct);
    EXPECT_EQ(r.z_hat, direct.z_hat);
    EXPECT_EQ(load_tensor(dir / "out" / "z_hat").tensor, direct.z_hat);
    EXPECT_EQ(load_tensor(dir / "out" / "p3_psi_hat").tensor, direct.p3_psi_hat);
    EXPECT_TRUE(fs::exists(dir / "out" / "diagnostics.json"));
}

TEST(OperatorSpec, RoundTripAndErrors) {
    const fs::path dir = fresh_dir("ops");
    SceneConfig sc;
    sc.dims = {12, 10, 8};
    sc.ms_bands = 4;
    sc.blur_sigma = 0.7;
    sc.decimation = 3;
    save_operator_spec(dir / "ops.json", sc);
    const DegradationOperators ops = load_operator_spec(dir / "ops.json", {4, 4, 8}, {12, 10, 4});
    const DegradationOperators ref = make_operators(sc);
    EXPECT_EQ(ops.p1, ref.p1);
    EXPECT_EQ(ops.p2, ref.p2);
    EXPECT_EQ(ops.p3, ref.p3);
    EXPECT_THROW(load_operator_spec(dir / "ops.json", {4, 4, 8}, {12, 10, 3}), ContractError);
    EXPECT_THROW(load_operator_spec(dir / "missing.json", {4, 4, 8}, {12, 10, 4}), IoError);

    sc.srf = Matrix::Identity(4, 8) + Matrix::Constant(4, 8, 0.125);
    save_operator_spec(dir / "custom.json", sc);
    const DegradationOperators custom = load_operator_spec(dir / "custom.json", {4, 4, 8}, {12, 10, 4});
    EXPECT_LE(rel_diff(custom.p3, *sc.srf), 1e-15);
}
