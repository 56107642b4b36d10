#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("hsfusion_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Runs the binary with `args`, capturing stdout and stderr into files.
    int run(const std::string& args, const std::string& env = "") {
        const std::string cmd = env + " \"" + std::string(HSFUSION_CLI_PATH) + "\" " + args + " > \"" +
                                (dir_ / "stdout.txt").string() + "\" 2> \"" + (dir_ / "stderr.txt").string() + "\"";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const fs::path& p) {
        std::ifstream in(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    std::string out() { return read(dir_ / "stdout.txt"); }
    std::string err() { return read(dir_ / "stderr.txt"); }

    void write(const fs::path& p, const std::string& s) {
        std::ofstream o(p, std::ios::trunc);
        o << s;
    }

    std::string path(const std::string& rel) { return "\"" + (dir_ / rel).string() + "\""; }

    void generate_small(const std::string& snr = "inf") {
        ASSERT_EQ(run("generate --dims 20,20,16 --ms-bands 4 --z-ranks 3,3,2 --psi-ranks 2,2,2 --seed 5 --snr " +
                      snr + " --out " + path("scene")),
                  0)
            << err();
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateFuseAndScore) {
    generate_small();
    for (const char* f : {"z_h.json", "z_h.bin", "psi.json", "y_h.json", "y_m.json", "ops.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "scene" / f)) << f;
    }
    ASSERT_EQ(run("fuse --y-h " + path("scene/y_h") + " --y-m " + path("scene/y_m") + " --ops " +
                  path("scene/ops.json") + " --z-ranks 3,3,2 --psi-ranks 2,2,2 --out " + path("fused")),
              0)
        << err();
    EXPECT_TRUE(fs::exists(dir_ / "fused" / "z_hat.bin"));
    EXPECT_TRUE(fs::exists(dir_ / "fused" / "diagnostics.json"));
    ASSERT_EQ(run("metrics --ref " + path("scene/z_h") + " --est " + path("fused/z_hat")), 0) << err();
    const std::string csv = out();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "SAM,ERGAS,PSNR,UIQI");
    // Exact recovery: PSNR well beyond any noisy value.
    std::istringstream row(csv.substr(csv.find('\n') + 1));
    std::string sam, ergas, psnr;
    std::getline(row, sam, ',');
    std::getline(row, ergas, ',');
    std::getline(row, psnr, ',');
    EXPECT_LT(std::stod(sam), 1e-6);
    EXPECT_GT(std::stod(psnr), 150.0);
}

TEST_F(Cli, CbStarFuse) {
    generate_small("30");
    EXPECT_EQ(run("fuse --algorithm cb-star --max-outer 3 --y-h " + path("scene/y_h.json") + " --y-m " +
                  path("scene/y_m.bin") + " --ops " + path("scene/ops.json") +
                  " --z-ranks 3,3,2 --psi-ranks 2,2,2 --out " + path("cb")),
              0)
        << err();
    EXPECT_NE(read(dir_ / "cb" / "diagnostics.json").find("cb-star"), std::string::npos);
}

TEST_F(Cli, MetricsNormalization) {
    generate_small();
    ASSERT_EQ(run("metrics --ref " + path("scene/z_h") + " --est " + path("scene/z_h") + " --normalize 0.999"), 0);
    EXPECT_NE(err().find("quantile"), std::string::npos);
    EXPECT_NE(out().find("0,0,inf,1"), std::string::npos) << out();
}

TEST_F(Cli, IoFailuresExitWithFour) {
    EXPECT_EQ(run("metrics --ref " + path("nothing") + " --est " + path("nothing")), 4);
    generate_small();
    write(dir_ / "scene" / "z_h.json", "{\"dims\": [20, 20");
    EXPECT_EQ(run("metrics --ref " + path("scene/z_h") + " --est " + path("scene/psi")), 4);
    EXPECT_NE(err().find("byte"), std::string::npos) << err();
}

TEST_F(Cli, ConfigFailuresExitWithTwo) {
    write(dir_ / "bad.json", "{\n  \"algorithms\": [{\"name\": \"ct-star\", \"lambda\": 2}]\n}\n");
    EXPECT_EQ(run("experiment --config " + path("bad.json")), 2);
    EXPECT_NE(err().find("/algorithms/0/lambda"), std::string::npos) << err();
    EXPECT_EQ(run("generate --dims 20,20 --out " + path("x")), 2);
    EXPECT_EQ(run("generate --out " + path("x") + " --snr loud"), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("fuse --y-h a"), 2);
    generate_small();
    EXPECT_EQ(run("fuse --y-h " + path("scene/y_h") + " --y-m " + path("scene/y_m") + " --ops " +
                  path("scene/ops.json") + " --z-ranks 9,3,2 --psi-ranks 2,2,2 --out " + path("f")),
              2);
}

TEST_F(Cli, ExperimentHonorsOutputRoot) {
    write(dir_ / "exp.json", R"({
      "scene": {"dims": [20, 20, 16], "ms_bands": 4, "z_ranks": [3, 3, 2], "psi_ranks": [2, 2, 2], "snr_db": 30},
      "algorithms": [{"name": "ct-star"}],
      "monte_carlo": {"runs": 2, "base_seed": 1},
      "output": "results"
    })");
    ASSERT_EQ(run("experiment --config " + path("exp.json") + " --threads 2",
                  "HSFUSION_OUTPUT_ROOT=\"" + (dir_ / "root").string() + "\""),
              0)
        << err();
    EXPECT_TRUE(fs::exists(dir_ / "root" / "results" / "per_run.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "root" / "results" / "aggregate.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "root" / "results" / "table.csv"));
}
