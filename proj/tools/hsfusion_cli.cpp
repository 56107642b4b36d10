// hsfusion: generate synthetic scenes, fuse HS/MS pairs, run Monte Carlo
// experiments and score reconstructions.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.

#include "hsfusion/errors.hpp"
#include "hsfusion/experiment.hpp"
#include "hsfusion/metrics.hpp"
#include "hsfusion/tensor_io.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace hsfusion;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

// Relative output locations resolve against $HSFUSION_OUTPUT_ROOT when set.
fs::path output_path(const fs::path& p) {
    const char* root = std::getenv("HSFUSION_OUTPUT_ROOT");
    if (root && *root && p.is_relative()) return fs::path(root) / p;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Dims to_dims(const std::vector<long>& v, const char* what) {
    if (v.size() != 3) throw ConfigError(std::string(what) + " needs three comma-separated values");
    return {v[0], v[1], v[2]};
}

double parse_snr(const std::string& s) {
    if (s == "inf" || s == "Inf" || s == "infinity") return kNoNoise;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid SNR '" + s + "' (expected a number in dB or inf)");
}

struct GenerateArgs {
    std::string config;
    std::vector<long> dims, z_ranks, psi_ranks;
    long ms_bands = 0;
    double psi_scale = -1.0;
    double sigma = -1.0;
    long decimation = 0;
    std::string srf_csv;
    std::string snr, snr_h, snr_m;
    std::uint64_t seed = 0, noise_seed = 0;
    std::string out;
};

struct FuseArgs {
    std::string y_h, y_m, ops, out;
    std::string algorithm = "ct-star";
    std::vector<long> z_ranks, psi_ranks;
    double lambda = 1.0;
    int inner_iters = 1;
    double tolerance = 1e-3;
    int max_outer = 50;
    std::string init = "interpolation";
};

struct ExperimentArgs {
    std::string config, output;
    int runs = 0;
    std::uint64_t base_seed = 0;
    int threads = 0;
    bool save_tensors = false;
    bool record_timing = false;
};

struct MetricsArgs {
    std::string ref, est;
    long decimation = 2;
    long n1 = 0, n2 = 0;
    double quantile = 0.0;
};

int cmd_generate(const GenerateArgs& a, CLI::App& sub) {
    SceneConfig cfg;
    if (!a.config.empty()) cfg = parse_scene_config(slurp(a.config), a.config);
    if (sub.count("--dims")) cfg.dims = to_dims(a.dims, "--dims");
    if (sub.count("--z-ranks")) cfg.z_ranks = to_dims(a.z_ranks, "--z-ranks");
    if (sub.count("--psi-ranks")) cfg.psi_ranks = to_dims(a.psi_ranks, "--psi-ranks");
    if (sub.count("--ms-bands")) cfg.ms_bands = a.ms_bands;
    if (sub.count("--psi-scale")) cfg.psi_scale = a.psi_scale;
    if (sub.count("--sigma")) cfg.blur_sigma = a.sigma;
    if (sub.count("--decimation")) cfg.decimation = a.decimation;
    if (sub.count("--srf-csv")) cfg.srf = load_srf(a.srf_csv);
    if (sub.count("--snr")) cfg.snr_h_db = cfg.snr_m_db = parse_snr(a.snr);
    if (sub.count("--snr-h")) cfg.snr_h_db = parse_snr(a.snr_h);
    if (sub.count("--snr-m")) cfg.snr_m_db = parse_snr(a.snr_m);
    if (sub.count("--seed")) cfg.seed = a.seed;
    if (sub.count("--noise-seed")) cfg.noise_seed = a.noise_seed;
    validate(cfg);
    const fs::path dir = output_path(a.out);
    generate_files(cfg, dir);
    std::cout << "wrote z_h, psi, y_h, y_m and ops.json to " << dir.string() << "\n";
    return 0;
}

int cmd_fuse(const FuseArgs& a, CLI::App& sub) {
    FuseRequest req;
    req.y_h = a.y_h;
    req.y_m = a.y_m;
    req.ops_spec = a.ops;
    req.output_dir = output_path(a.out);
    AlgorithmSpec& spec = req.algorithm;
    if (a.algorithm == "ct-star") {
        spec.kind = AlgorithmKind::ct_star;
    } else if (a.algorithm == "cb-star") {
        spec.kind = AlgorithmKind::cb_star;
    } else {
        throw ConfigError("unknown algorithm '" + a.algorithm + "' (expected ct-star or cb-star)");
    }
    spec.label = a.algorithm;
    if (sub.count("--z-ranks")) spec.ct.z_ranks = spec.cb.z_ranks = to_dims(a.z_ranks, "--z-ranks");
    if (sub.count("--psi-ranks")) spec.ct.psi_ranks = spec.cb.psi_ranks = to_dims(a.psi_ranks, "--psi-ranks");
    spec.cb.lambda = a.lambda;
    spec.cb.inner_iters = a.inner_iters;
    spec.cb.tolerance = a.tolerance;
    spec.cb.max_outer = a.max_outer;
    spec.cb.init = parse_cb_star_init(a.init);
    if (spec.cb.init == CbStarInit::explicit_factors) throw ConfigError("--init explicit is not available here");
    const FusionResult res = fuse_files(req);
    for (const auto& w : res.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote z_hat, p3_psi_hat and diagnostics.json to " << req.output_dir.string() << "\n";
    return 0;
}

int cmd_experiment(const ExperimentArgs& a, CLI::App& sub) {
    ExperimentConfig cfg = load_experiment_config(a.config);
    if (sub.count("--output")) cfg.output = a.output;
    if (sub.count("--runs")) cfg.runs = a.runs;
    if (sub.count("--base-seed")) cfg.base_seed = a.base_seed;
    if (sub.count("--threads")) cfg.threads = a.threads;
    if (sub.count("--save-tensors")) cfg.save_tensors = a.save_tensors;
    if (sub.count("--record-timing")) cfg.record_timing = a.record_timing;
    cfg.output = output_path(cfg.output);
    const ExperimentSummary sum = run_experiment(cfg);
    std::cout << "wrote " << sum.per_run_csv.string() << ", " << sum.aggregate_csv.string() << " and "
              << sum.table_csv.string() << "\n";
    if (sum.failures > 0) {
        for (const auto& r : sum.rows) {
            if (r.failed) std::cerr << r.algorithm << " seed " << r.seed << ": " << r.failure << "\n";
        }
        std::cerr << sum.failures << " run(s) failed numerically\n";
        return kExitNumerical;
    }
    return 0;
}

int cmd_metrics(const MetricsArgs& a, CLI::App& sub) {
    Tensor3 ref = load_tensor(a.ref).tensor;
    Tensor3 est = load_tensor(a.est).tensor;
    if (ref.dims() != est.dims()) throw ConfigError("reference and estimate dims differ");
    if (a.decimation < 1) throw ConfigError("--decimation must be >= 1");
    Index n1 = (ref.dims()[0] + a.decimation - 1) / a.decimation;
    Index n2 = (ref.dims()[1] + a.decimation - 1) / a.decimation;
    if (sub.count("--n1")) n1 = a.n1;
    if (sub.count("--n2")) n2 = a.n2;
    if (sub.count("--normalize")) {
        // Both images are divided by the reference's quantile.
        const double scale = quantile_nearest_rank(ref, a.quantile);
        if (scale == 0.0) throw ConfigError("reference quantile is zero");
        ref.vec() /= scale;
        est.vec() /= scale;
        std::cerr << "normalized by the nearest-rank " << a.quantile << "-quantile of the reference ("
                  << format_double(scale) << ")\n";
    }
    MetricFlags sam_flags, ergas_flags, uiqi_flags;
    const double s = sam(ref, est, &sam_flags);
    const double e = ergas(ref, est, n1, n2, &ergas_flags);
    const double p = psnr(ref, est);
    const double u = uiqi(ref, est, &uiqi_flags);
    std::cout << "SAM,ERGAS,PSNR,UIQI\n"
              << format_double(s) << "," << format_double(e) << "," << format_double(p) << "," << format_double(u)
              << "\n";
    if (sam_flags.count) std::cerr << "SAM: " << sam_flags.count << " zero-norm pixel(s) skipped\n";
    if (ergas_flags.count) std::cerr << "ERGAS: " << ergas_flags.count << " zero-mean band(s) skipped\n";
    if (uiqi_flags.count) std::cerr << "UIQI: " << uiqi_flags.count << " degenerate band(s)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral/multispectral fusion with inter-image variability"};
    app.require_subcommand(1);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Write a synthetic scene and its observations");
    gen->add_option("--config", ga.config, "Scene JSON");
    gen->add_option("--dims", ga.dims, "M1,M2,Lh")->delimiter(',');
    gen->add_option("--ms-bands", ga.ms_bands, "Lm");
    gen->add_option("--z-ranks", ga.z_ranks, "K_Z as k1,k2,k3")->delimiter(',');
    gen->add_option("--psi-ranks", ga.psi_ranks, "K_Psi as k1,k2,k3")->delimiter(',');
    gen->add_option("--psi-scale", ga.psi_scale, "Variability core scale");
    gen->add_option("--sigma", ga.sigma, "Gaussian blur sigma (0 disables blur)");
    gen->add_option("--decimation", ga.decimation, "Spatial decimation factor");
    gen->add_option("--srf-csv", ga.srf_csv, "Custom spectral response (Lm rows, Lh columns)");
    gen->add_option("--snr", ga.snr, "SNR of both observations in dB, or inf");
    gen->add_option("--snr-h", ga.snr_h, "HS SNR in dB, or inf");
    gen->add_option("--snr-m", ga.snr_m, "MS SNR in dB, or inf");
    gen->add_option("--seed", ga.seed, "Ground-truth seed");
    gen->add_option("--noise-seed", ga.noise_seed, "Noise seed");
    gen->add_option("--out", ga.out, "Output directory")->required();

    FuseArgs fa;
    auto* fuse = app.add_subcommand("fuse", "Fuse an HS/MS pair stored as tensor files");
    fuse->add_option("--y-h", fa.y_h, "HS tensor file")->required();
    fuse->add_option("--y-m", fa.y_m, "MS tensor file")->required();
    fuse->add_option("--ops", fa.ops, "Operator JSON")->required();
    fuse->add_option("--algorithm", fa.algorithm, "ct-star or cb-star");
    fuse->add_option("--z-ranks", fa.z_ranks, "K_Z as k1,k2,k3")->delimiter(',');
    fuse->add_option("--psi-ranks", fa.psi_ranks, "K_Psi as k1,k2,k3")->delimiter(',');
    fuse->add_option("--lambda", fa.lambda, "MS weight (cb-star)");
    fuse->add_option("--inner-iters", fa.inner_iters, "Z passes per outer iteration (cb-star)");
    fuse->add_option("--tolerance", fa.tolerance, "Relative cost change to stop (cb-star)");
    fuse->add_option("--max-outer", fa.max_outer, "Outer iteration cap (cb-star)");
    fuse->add_option("--init", fa.init, "interpolation, pseudoinverse or ct-star-warmstart (cb-star)");
    fuse->add_option("--out", fa.out, "Output directory")->required();

    ExperimentArgs ea;
    auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment from a JSON config");
    exp->add_option("--config", ea.config, "Experiment JSON")->required();
    exp->add_option("--output", ea.output, "Output directory (overrides the config)");
    exp->add_option("--runs", ea.runs, "Monte Carlo runs per sweep value");
    exp->add_option("--base-seed", ea.base_seed, "Seed of the first run");
    exp->add_option("--threads", ea.threads, "Worker threads");
    exp->add_flag("--save-tensors", ea.save_tensors, "Write the fused tensors");
    exp->add_flag("--record-timing", ea.record_timing, "Write wall times instead of NA");

    MetricsArgs ma;
    auto* met = app.add_subcommand("metrics", "Score an estimate against a reference");
    met->add_option("--ref", ma.ref, "Reference tensor file")->required();
    met->add_option("--est", ma.est, "Estimated tensor file")->required();
    met->add_option("--decimation", ma.decimation, "Decimation used to derive N1, N2 for ERGAS");
    met->add_option("--n1", ma.n1, "HS rows for ERGAS");
    met->add_option("--n2", ma.n2, "HS columns for ERGAS");
    met->add_option("--normalize", ma.quantile, "Divide both images by this quantile of the reference");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen) return cmd_generate(ga, *gen);
        if (*fuse) return cmd_fuse(fa, *fuse);
        if (*exp) return cmd_experiment(ea, *exp);
        if (*met) return cmd_metrics(ma, *met);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SolverError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitConfig;
}
