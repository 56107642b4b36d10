#include "hsfusion/experiment.hpp"

#include "hsfusion/errors.hpp"
#include "hsfusion/tensor_io.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace hsfusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
}

int line_at(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Reads typed fields out of a parsed JSON document and reports problems with
// the line of the key (first match along the pointer path) and the pointer.
class Reader {
public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    json parse() const {
        try {
            return json::parse(text_);
        } catch (const json::parse_error& e) {
            throw ConfigError(source_ + ":" + std::to_string(line_at(text_, e.byte == 0 ? 0 : e.byte - 1)) +
                              ": invalid JSON (byte " + std::to_string(e.byte) + ")");
        }
    }

    [[noreturn]] void fail(const json::json_pointer& where, const std::string& msg) const {
        throw ConfigError(source_ + ":" + std::to_string(line_of(where)) + ": " + where.to_string() + ": " + msg);
    }

    void only_keys(const json& obj, const json::json_pointer& where, std::initializer_list<const char*> keys) const {
        if (!obj.is_object()) fail(where, "expected an object");
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = false;
            for (const char* k : keys) known = known || it.key() == k;
            if (!known) fail(where / it.key(), "unknown key");
        }
    }

    double number(const json& v, const json::json_pointer& where, bool allow_inf = false) const {
        if (v.is_number()) return v.get<double>();
        if (allow_inf && v.is_string() && (v == "inf" || v == "Inf" || v == "infinity")) {
            return std::numeric_limits<double>::infinity();
        }
        if (allow_inf && v.is_null()) return std::numeric_limits<double>::infinity();
        fail(where, allow_inf ? "expected a number or \"inf\"" : "expected a number");
    }

    long long integer(const json& v, const json::json_pointer& where, long long lo) const {
        if (!v.is_number_integer()) fail(where, "expected an integer");
        const auto x = v.get<long long>();
        if (x < lo) fail(where, "must be >= " + std::to_string(lo));
        return x;
    }

    std::uint64_t seed(const json& v, const json::json_pointer& where) const {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail(where, "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const json& v, const json::json_pointer& where) const {
        if (!v.is_boolean()) fail(where, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const json& v, const json::json_pointer& where) const {
        if (!v.is_string()) fail(where, "expected a string");
        return v.get<std::string>();
    }

    Dims triple(const json& v, const json::json_pointer& where, long long lo) const {
        if (!v.is_array() || v.size() != 3) fail(where, "expected an array of three integers");
        Dims d{};
        for (std::size_t i = 0; i < 3; ++i) d[i] = static_cast<Index>(integer(v[i], where / i, lo));
        return d;
    }

private:
    int line_of(const json::json_pointer& where) const {
        std::size_t pos = 0;
        std::string path = where.to_string();
        std::size_t start = 1;
        while (start <= path.size() && !path.empty()) {
            const std::size_t end = path.find('/', start);
            const std::string token = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
            if (!token.empty() && !std::all_of(token.begin(), token.end(), ::isdigit)) {
                const std::size_t hit = text_.find("\"" + token + "\"", pos);
                if (hit != std::string::npos) pos = hit;
            }
            if (end == std::string::npos) break;
            start = end + 1;
        }
        return line_at(text_, pos);
    }

    const std::string& text_;
    std::string source_;
};

using Ptr = json::json_pointer;

SceneConfig read_scene(const Reader& r, const json& s, const Ptr& at, bool* vary_scene, const fs::path& base_dir) {
    r.only_keys(s, at,
                {"dims", "ms_bands", "z_ranks", "psi_ranks", "psi_scale", "blur_sigma", "decimation", "srf_csv",
                 "snr_db", "snr_h_db", "snr_m_db", "seed", "noise_seed", "vary_scene"});
    SceneConfig c;
    if (s.contains("dims")) c.dims = r.triple(s["dims"], at / "dims", 1);
    if (s.contains("ms_bands")) c.ms_bands = static_cast<Index>(r.integer(s["ms_bands"], at / "ms_bands", 1));
    if (s.contains("z_ranks")) c.z_ranks = r.triple(s["z_ranks"], at / "z_ranks", 1);
    if (s.contains("psi_ranks")) c.psi_ranks = r.triple(s["psi_ranks"], at / "psi_ranks", 1);
    if (s.contains("psi_scale")) c.psi_scale = r.number(s["psi_scale"], at / "psi_scale");
    if (s.contains("blur_sigma")) {
        c.blur_sigma = r.number(s["blur_sigma"], at / "blur_sigma");
        if (!(c.blur_sigma >= 0.0)) r.fail(at / "blur_sigma", "must be >= 0");
    }
    if (s.contains("decimation")) c.decimation = static_cast<Index>(r.integer(s["decimation"], at / "decimation", 1));
    if (s.contains("srf_csv")) {
        fs::path p = r.string(s["srf_csv"], at / "srf_csv");
        if (p.is_relative()) p = base_dir / p;
        c.srf = load_srf(p);
    }
    if (s.contains("snr_db")) c.snr_h_db = c.snr_m_db = r.number(s["snr_db"], at / "snr_db", true);
    if (s.contains("snr_h_db")) c.snr_h_db = r.number(s["snr_h_db"], at / "snr_h_db", true);
    if (s.contains("snr_m_db")) c.snr_m_db = r.number(s["snr_m_db"], at / "snr_m_db", true);
    if (s.contains("seed")) c.seed = r.seed(s["seed"], at / "seed");
    if (s.contains("noise_seed")) c.noise_seed = r.seed(s["noise_seed"], at / "noise_seed");
    if (s.contains("vary_scene")) {
        const bool v = r.boolean(s["vary_scene"], at / "vary_scene");
        if (vary_scene) *vary_scene = v;
    }
    try {
        validate(c);
    } catch (const ConfigError& e) {
        r.fail(at, e.what());
    }
    return c;
}

AlgorithmSpec read_algorithm(const Reader& r, const json& a, const Ptr& at, const SceneConfig& scene) {
    if (!a.is_object()) r.fail(at, "expected an object");
    if (!a.contains("name")) r.fail(at, "missing \"name\"");
    AlgorithmSpec spec;
    const std::string name = r.string(a["name"], at / "name");
    Dims z = scene.z_ranks;
    Dims psi = scene.psi_ranks;
    if (name == "ct-star") {
        r.only_keys(a, at, {"name", "label", "z_ranks", "psi_ranks"});
        spec.kind = AlgorithmKind::ct_star;
    } else if (name == "cb-star") {
        r.only_keys(a, at,
                    {"name", "label", "z_ranks", "psi_ranks", "lambda", "inner_iters", "tolerance", "max_outer",
                     "init"});
        spec.kind = AlgorithmKind::cb_star;
        CbStarConfig& cb = spec.cb;
        if (a.contains("lambda")) {
            cb.lambda = r.number(a["lambda"], at / "lambda");
            if (!(cb.lambda >= 0.0)) r.fail(at / "lambda", "must be >= 0");
        }
        if (a.contains("inner_iters")) cb.inner_iters = static_cast<int>(r.integer(a["inner_iters"], at / "inner_iters", 1));
        if (a.contains("tolerance")) {
            cb.tolerance = r.number(a["tolerance"], at / "tolerance");
            if (!(cb.tolerance > 0.0)) r.fail(at / "tolerance", "must be > 0");
        }
        if (a.contains("max_outer")) cb.max_outer = static_cast<int>(r.integer(a["max_outer"], at / "max_outer", 1));
        if (a.contains("init")) {
            try {
                cb.init = parse_cb_star_init(r.string(a["init"], at / "init"));
            } catch (const ConfigError& e) {
                r.fail(at / "init", e.what());
            }
            if (cb.init == CbStarInit::explicit_factors) r.fail(at / "init", "explicit factors are not available here");
        }
    } else {
        r.fail(at / "name", "unknown algorithm \"" + name + "\" (expected ct-star or cb-star)");
    }
    if (a.contains("z_ranks")) z = r.triple(a["z_ranks"], at / "z_ranks", 1);
    if (a.contains("psi_ranks")) psi = r.triple(a["psi_ranks"], at / "psi_ranks", 1);
    spec.ct.z_ranks = spec.cb.z_ranks = z;
    spec.ct.psi_ranks = spec.cb.psi_ranks = psi;
    spec.label = a.contains("label") ? r.string(a["label"], at / "label") : name;
    return spec;
}

// Rank configs of the algorithms for one sweep value.
AlgorithmSpec swept(AlgorithmSpec spec, const SweepConfig& sweep, double value) {
    if (sweep.axis != SweepAxis::z_rank && sweep.axis != SweepAxis::psi_rank) return spec;
    const auto i = static_cast<std::size_t>(sweep.index - 1);
    const auto k = static_cast<Index>(value);
    if (sweep.axis == SweepAxis::z_rank) {
        spec.ct.z_ranks[i] = spec.cb.z_ranks[i] = k;
    } else {
        spec.ct.psi_ranks[i] = spec.cb.psi_ranks[i] = k;
    }
    return spec;
}

std::size_t sweep_count(const ExperimentConfig& cfg) {
    return cfg.sweep.axis == SweepAxis::none ? 1 : cfg.sweep.values.size();
}

double sweep_value(const ExperimentConfig& cfg, std::size_t i) {
    return cfg.sweep.axis == SweepAxis::none ? kNaN : cfg.sweep.values[i];
}

std::array<double, 6> row_values(const RunRow& r) {
    return {r.metrics.sam, r.metrics.ergas, r.metrics.psnr, r.metrics.uiqi, r.wall_seconds,
            static_cast<double>(r.outer_iterations)};
}

std::string sweep_cell(double v, bool has_sweep) { return has_sweep ? format_double(v) : "NA"; }

std::string timing_cell(double v, bool with_timing) { return with_timing ? format_double(v) : "NA"; }

json trace_json(const CostTrace& trace) {
    json arr = json::array();
    for (const CostRecord& c : trace) {
        arr.push_back({{"iteration", c.iteration},
                       {"cost", c.cost},
                       {"hs_term", c.hs_term},
                       {"ms_term", c.ms_term},
                       {"z_solver_residual", c.z_solver_residual},
                       {"psi_kept_previous", c.psi_kept_previous}});
    }
    return arr;
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

FusionResult run_algorithm(const AlgorithmSpec& spec, const Tensor3& y_h, const Tensor3& y_m,
                           const DegradationOperators& ops) {
    return spec.kind == AlgorithmKind::ct_star ? ct_star(y_h, y_m, ops, spec.ct) : cb_star(y_h, y_m, ops, spec.cb);
}

SceneConfig parse_scene_config(const std::string& json_text, const std::string& source) {
    Reader r(json_text, source);
    const json doc = r.parse();
    return read_scene(r, doc, Ptr(), nullptr, fs::path(source).parent_path());
}

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& source) {
    Reader r(json_text, source);
    const json doc = r.parse();
    const Ptr root;
    r.only_keys(doc, root,
                {"scene", "algorithms", "monte_carlo", "sweep", "output", "threads", "save_tensors", "record_timing"});
    ExperimentConfig cfg;
    if (doc.contains("scene")) {
        cfg.scene = read_scene(r, doc["scene"], root / "scene", &cfg.vary_scene, fs::path(source).parent_path());
    }

    if (!doc.contains("algorithms")) r.fail(root, "missing \"algorithms\"");
    const json& algs = doc["algorithms"];
    if (!algs.is_array() || algs.empty()) r.fail(root / "algorithms", "expected a non-empty array");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < algs.size(); ++i) {
        AlgorithmSpec spec = read_algorithm(r, algs[i], root / "algorithms" / i, cfg.scene);
        if (!labels.insert(spec.label).second) r.fail(root / "algorithms" / i, "duplicate label \"" + spec.label + "\"");
        cfg.algorithms.push_back(std::move(spec));
    }

    if (doc.contains("monte_carlo")) {
        const json& mc = doc["monte_carlo"];
        const Ptr at = root / "monte_carlo";
        r.only_keys(mc, at, {"runs", "base_seed"});
        if (mc.contains("runs")) cfg.runs = static_cast<int>(r.integer(mc["runs"], at / "runs", 1));
        if (mc.contains("base_seed")) cfg.base_seed = r.seed(mc["base_seed"], at / "base_seed");
    }

    if (doc.contains("sweep") && !doc["sweep"].is_null()) {
        const json& sw = doc["sweep"];
        const Ptr at = root / "sweep";
        r.only_keys(sw, at, {"axis", "index", "values"});
        if (!sw.contains("axis")) r.fail(at, "missing \"axis\"");
        const std::string axis = r.string(sw["axis"], at / "axis");
        if (axis == "snr") {
            cfg.sweep.axis = SweepAxis::snr;
        } else if (axis == "z_rank") {
            cfg.sweep.axis = SweepAxis::z_rank;
        } else if (axis == "psi_rank") {
            cfg.sweep.axis = SweepAxis::psi_rank;
        } else {
            r.fail(at / "axis", "expected snr, z_rank or psi_rank");
        }
        if (cfg.sweep.axis != SweepAxis::snr) {
            if (!sw.contains("index")) r.fail(at, "rank sweeps need \"index\" (1, 2 or 3)");
            cfg.sweep.index = static_cast<int>(r.integer(sw["index"], at / "index", 1));
            if (cfg.sweep.index > 3) r.fail(at / "index", "must be 1, 2 or 3");
        } else if (sw.contains("index")) {
            r.fail(at / "index", "not used by the snr axis");
        }
        if (!sw.contains("values") || !sw["values"].is_array() || sw["values"].empty()) {
            r.fail(at / "values", "expected a non-empty array");
        }
        for (std::size_t i = 0; i < sw["values"].size(); ++i) {
            const Ptr vp = at / "values" / i;
            if (cfg.sweep.axis == SweepAxis::snr) {
                cfg.sweep.values.push_back(r.number(sw["values"][i], vp, true));
            } else {
                cfg.sweep.values.push_back(static_cast<double>(r.integer(sw["values"][i], vp, 1)));
            }
        }
    }

    if (doc.contains("output")) cfg.output = r.string(doc["output"], root / "output");
    if (doc.contains("threads")) cfg.threads = static_cast<int>(r.integer(doc["threads"], root / "threads", 1));
    if (doc.contains("save_tensors")) cfg.save_tensors = r.boolean(doc["save_tensors"], root / "save_tensors");
    if (doc.contains("record_timing")) cfg.record_timing = r.boolean(doc["record_timing"], root / "record_timing");

    try {
        validate(cfg);
    } catch (const ConfigError& e) {
        r.fail(root, e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    return parse_experiment_config(read_text(path), path.string());
}

void validate(const ExperimentConfig& cfg) {
    validate(cfg.scene);
    if (cfg.runs < 1) throw ConfigError("monte_carlo.runs must be >= 1");
    if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
    if (cfg.algorithms.empty()) throw ConfigError("no algorithms configured");
    if (cfg.sweep.axis != SweepAxis::none && cfg.sweep.values.empty()) throw ConfigError("sweep has no values");
    const DegradationOperators ops = make_operators(cfg.scene);
    for (std::size_t v = 0; v < sweep_count(cfg); ++v) {
        for (const AlgorithmSpec& a : cfg.algorithms) {
            const AlgorithmSpec s = swept(a, cfg.sweep, sweep_value(cfg, v));
            try {
                if (s.kind == AlgorithmKind::ct_star) {
                    validate(s.ct, ops.hs_dims(), ops.ms_dims());
                } else {
                    validate(s.cb, ops.hs_dims(), ops.ms_dims());
                }
            } catch (const ConfigError& e) {
                const std::string where = cfg.sweep.axis == SweepAxis::none
                                              ? std::string()
                                              : " at sweep value " + format_double(sweep_value(cfg, v));
                throw ConfigError(s.label + where + ": " + e.what());
            }
        }
    }
}

std::vector<RunRow> run_cell(const ExperimentConfig& cfg, std::size_t sweep_index, int run) {
    const double value = sweep_value(cfg, sweep_index);
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    SceneConfig sc = cfg.scene;
    sc.noise_seed = seed;
    if (cfg.vary_scene) sc.seed = seed;
    if (cfg.sweep.axis == SweepAxis::snr) sc.snr_h_db = sc.snr_m_db = value;
    const SyntheticScene scene = generate_scene(sc);
    const Dims hs = scene.ops.hs_dims();

    std::vector<RunRow> rows;
    for (const AlgorithmSpec& base : cfg.algorithms) {
        const AlgorithmSpec spec = swept(base, cfg.sweep, value);
        RunRow row;
        row.algorithm = spec.label;
        row.seed = seed;
        row.sweep_index = sweep_index;
        row.sweep_value = value;
        try {
            const FusionResult res = run_algorithm(spec, scene.y_h, scene.y_m, scene.ops);
            row.metrics = evaluate_all(scene.z_h, res.z_hat, hs[0], hs[1]);
            row.wall_seconds = cfg.record_timing ? res.diagnostics.wall_seconds : kNaN;
            row.outer_iterations = res.diagnostics.outer_iterations;
            if (cfg.save_tensors) {
                const std::string stem = spec.label + "_v" + std::to_string(sweep_index) + "_s" + std::to_string(seed);
                save_tensor(cfg.output / "tensors" / (stem + "_z_hat"), res.z_hat, "z_hat");
                save_tensor(cfg.output / "tensors" / (stem + "_p3_psi_hat"), res.p3_psi_hat, "p3_psi_hat");
            }
        } catch (const SolverError& e) {
            row.failed = true;
            row.failure = e.what();
            row.metrics = {kNaN, kNaN, kNaN, kNaN};
            row.wall_seconds = kNaN;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<AggregateRow> aggregate(const ExperimentConfig& cfg, const std::vector<RunRow>& rows) {
    std::vector<AggregateRow> out;
    for (std::size_t v = 0; v < sweep_count(cfg); ++v) {
        for (const AlgorithmSpec& a : cfg.algorithms) {
            AggregateRow agg;
            agg.algorithm = a.label;
            agg.sweep_index = v;
            agg.sweep_value = sweep_value(cfg, v);
            std::vector<std::array<double, 6>> vals;
            for (const RunRow& r : rows) {
                if (r.sweep_index != v || r.algorithm != a.label) continue;
                ++agg.runs;
                if (r.failed) {
                    ++agg.failures;
                } else {
                    vals.push_back(row_values(r));
                }
            }
            for (std::size_t m = 0; m < 6; ++m) {
                if (vals.empty()) {
                    agg.mean[m] = agg.stddev[m] = kNaN;
                    continue;
                }
                const bool constant = std::all_of(vals.begin(), vals.end(), [&](const auto& x) {
                    return x[m] == vals.front()[m];
                });
                double sum = 0.0;
                for (const auto& x : vals) sum += x[m];
                const double mean = sum / static_cast<double>(vals.size());
                double ss = 0.0;
                for (const auto& x : vals) ss += (x[m] - mean) * (x[m] - mean);
                agg.mean[m] = constant ? vals.front()[m] : mean;
                agg.stddev[m] = constant || vals.size() < 2 ? 0.0 : std::sqrt(ss / static_cast<double>(vals.size() - 1));
            }
            out.push_back(std::move(agg));
        }
    }
    return out;
}

std::string per_run_csv(const std::vector<RunRow>& rows, bool with_timing, bool has_sweep) {
    std::string s = "algorithm,seed,sweep-value,SAM,ERGAS,PSNR,UIQI,wall-seconds,outer-iterations\n";
    for (const RunRow& r : rows) {
        s += r.algorithm + "," + std::to_string(r.seed) + "," + sweep_cell(r.sweep_value, has_sweep) + "," +
             format_double(r.metrics.sam) + "," + format_double(r.metrics.ergas) + "," +
             format_double(r.metrics.psnr) + "," + format_double(r.metrics.uiqi) + "," +
             timing_cell(r.wall_seconds, with_timing) + "," + std::to_string(r.outer_iterations) + "\n";
    }
    return s;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows, bool with_timing, bool has_sweep) {
    static const char* names[6] = {"SAM", "ERGAS", "PSNR", "UIQI", "wall-seconds", "outer-iterations"};
    std::string s = "algorithm,sweep-value,runs,failures";
    for (const char* n : names) s += std::string(",") + n + "-mean," + n + "-stddev";
    s += "\n";
    for (const AggregateRow& a : rows) {
        s += a.algorithm + "," + sweep_cell(a.sweep_value, has_sweep) + "," + std::to_string(a.runs) + "," +
             std::to_string(a.failures);
        for (std::size_t m = 0; m < 6; ++m) {
            if (m == 4) {
                s += "," + timing_cell(a.mean[m], with_timing) + "," + timing_cell(a.stddev[m], with_timing);
            } else {
                s += "," + format_double(a.mean[m]) + "," + format_double(a.stddev[m]);
            }
        }
        s += "\n";
    }
    return s;
}

std::string table_csv(const ExperimentConfig& cfg, const std::vector<AggregateRow>& rows) {
    static const char* names[4] = {"SAM", "ERGAS", "PSNR", "UIQI"};
    const bool has_sweep = cfg.sweep.axis != SweepAxis::none;
    std::string s = std::string("algorithm,metric");
    for (std::size_t v = 0; v < sweep_count(cfg); ++v) s += "," + sweep_cell(sweep_value(cfg, v), has_sweep);
    s += "\n";
    for (const AlgorithmSpec& a : cfg.algorithms) {
        for (std::size_t m = 0; m < 4; ++m) {
            s += a.label + "," + names[m];
            for (std::size_t v = 0; v < sweep_count(cfg); ++v) {
                for (const AggregateRow& r : rows) {
                    if (r.algorithm == a.label && r.sweep_index == v) s += "," + format_double(r.mean[m]);
                }
            }
            s += "\n";
        }
    }
    return s;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    const std::size_t n_sweep = sweep_count(cfg);
    const std::size_t n_cells = n_sweep * static_cast<std::size_t>(cfg.runs);
    std::vector<std::vector<RunRow>> cells(n_cells);

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t c = next++; c < n_cells; c = next++) {
            try {
                cells[c] = run_cell(cfg, c / static_cast<std::size_t>(cfg.runs),
                                    static_cast<int>(c % static_cast<std::size_t>(cfg.runs)));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n_cells;
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), n_cells);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    ExperimentSummary sum;
    for (auto& cell : cells) {
        for (auto& row : cell) {
            if (row.failed) ++sum.failures;
            sum.rows.push_back(std::move(row));
        }
    }
    sum.aggregate = aggregate(cfg, sum.rows);
    const bool has_sweep = cfg.sweep.axis != SweepAxis::none;
    sum.per_run_csv = cfg.output / "per_run.csv";
    sum.aggregate_csv = cfg.output / "aggregate.csv";
    sum.table_csv = cfg.output / "table.csv";
    write_text(sum.per_run_csv, per_run_csv(sum.rows, cfg.record_timing, has_sweep));
    write_text(sum.aggregate_csv, aggregate_csv(sum.aggregate, cfg.record_timing, has_sweep));
    write_text(sum.table_csv, table_csv(cfg, sum.aggregate));
    return sum;
}

DegradationOperators load_operator_spec(const fs::path& path, const Dims& hs, const Dims& ms) {
    const std::string text = read_text(path);
    Reader r(text, path.string());
    const json doc = r.parse();
    const Ptr root;
    r.only_keys(doc, root, {"blur_sigma", "decimation", "srf_mode", "srf_csv"});
    double sigma = 1.0;
    Index d = 2;
    if (doc.contains("blur_sigma")) sigma = r.number(doc["blur_sigma"], root / "blur_sigma");
    if (!(sigma >= 0.0)) r.fail(root / "blur_sigma", "must be >= 0");
    if (doc.contains("decimation")) d = static_cast<Index>(r.integer(doc["decimation"], root / "decimation", 1));
    const std::string mode = doc.contains("srf_mode") ? r.string(doc["srf_mode"], root / "srf_mode") : "band_average";

    DegradationOperators ops;
    if (mode == "band_average") {
        ops = make_operators(ms[0], ms[1], hs[2], ms[2], sigma, d);
    } else if (mode == "identity" || mode == "custom") {
        Matrix srf;
        if (mode == "identity") {
            srf = Matrix::Identity(ms[2], hs[2]);
            if (ms[2] != hs[2]) r.fail(root / "srf_mode", "identity SRF needs as many MS bands as HS bands");
        } else {
            if (!doc.contains("srf_csv")) r.fail(root, "custom SRF needs \"srf_csv\"");
            fs::path p = r.string(doc["srf_csv"], root / "srf_csv");
            if (p.is_relative()) p = path.parent_path() / p;
            srf = load_srf(p);
        }
        ops = make_operators(ms[0], ms[1], sigma, d, srf);
        if (mode == "identity") ops.provenance.srf_mode = SrfMode::identity;
    } else {
        r.fail(root / "srf_mode", "expected band_average, identity or custom");
    }
    if (ops.hs_dims() != hs || ops.ms_dims() != ms) {
        throw ConfigError(path.string() + ": operators do not map the MS grid onto the HS grid of the inputs");
    }
    return ops;
}

void save_operator_spec(const fs::path& path, const SceneConfig& scene) {
    json doc{{"blur_sigma", scene.blur_sigma}, {"decimation", scene.decimation}};
    if (scene.srf) {
        const fs::path csv = path.parent_path() / "srf.csv";
        std::ostringstream ss;
        ss.precision(17);
        for (Index i = 0; i < scene.srf->rows(); ++i) {
            for (Index j = 0; j < scene.srf->cols(); ++j) ss << (j ? "," : "") << (*scene.srf)(i, j);
            ss << "\n";
        }
        write_text(csv, ss.str());
        doc["srf_mode"] = "custom";
        doc["srf_csv"] = "srf.csv";
    } else {
        doc["srf_mode"] = "band_average";
    }
    write_text(path, doc.dump(2) + "\n");
}

SyntheticScene generate_files(const SceneConfig& scene, const fs::path& dir) {
    SyntheticScene s = generate_scene(scene);
    save_tensor(dir / "z_h", s.z_h, "z_h");
    save_tensor(dir / "psi", s.psi, "psi");
    save_tensor(dir / "y_h", s.y_h, "y_h");
    save_tensor(dir / "y_m", s.y_m, "y_m");
    save_operator_spec(dir / "ops.json", scene);
    return s;
}

std::string diagnostics_json(const FusionResult& result) {
    const FusionDiagnostics& d = result.diagnostics;
    json doc{{"algorithm", d.algorithm},
             {"outer_iterations", d.outer_iterations},
             {"converged", d.converged},
             {"hs_residual", d.hs_residual},
             {"ms_residual", d.ms_residual},
             {"mixed_subspace_dims", d.mixed_subspace_dims},
             {"mixing_condition", d.mixing_condition},
             {"core_condition", d.core_condition},
             {"core_rank_deficient", d.core_rank_deficient},
             {"ridge_applied", d.ridge_applied},
             {"wall_seconds", d.wall_seconds},
             {"warnings", d.warnings},
             {"z_ranks", result.z_factors.ranks()},
             {"trace", trace_json(result.trace)}};
    return doc.dump(2) + "\n";
}

FusionResult fuse_files(const FuseRequest& req) {
    const TensorFile y_h = load_tensor(req.y_h);
    const TensorFile y_m = load_tensor(req.y_m);
    const DegradationOperators ops = load_operator_spec(req.ops_spec, y_h.tensor.dims(), y_m.tensor.dims());
    FusionResult res = run_algorithm(req.algorithm, y_h.tensor, y_m.tensor, ops);
    save_tensor(req.output_dir / "z_hat", res.z_hat, "z_hat");
    save_tensor(req.output_dir / "p3_psi_hat", res.p3_psi_hat, "p3_psi_hat");
    write_text(req.output_dir / "diagnostics.json", diagnostics_json(res));
    return res;
}

}  // namespace hsfusion
