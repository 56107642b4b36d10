#include "hsfusion/synthetic.hpp"

#include "hsfusion/errors.hpp"

#include <cmath>
#include <string>

namespace hsfusion {

namespace {

Matrix uniform_matrix(Index rows, Index cols, CounterRng& rng) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform();
    }
    return m;
}

void check_ranks(const Dims& ranks, const Dims& dims, const char* what) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (ranks[i] < 1 || ranks[i] > dims[i]) {
            throw ConfigError(std::string(what) + " rank " + std::to_string(ranks[i]) + " for mode " +
                              std::to_string(i + 1) + " must lie in [1, " + std::to_string(dims[i]) + "]");
        }
    }
}

}  // namespace

void validate(const SceneConfig& cfg) {
    for (Index n : cfg.dims) {
        if (n < 1) throw ConfigError("scene dims must be positive");
    }
    check_ranks(cfg.z_ranks, cfg.dims, "z");
    check_ranks(cfg.psi_ranks, cfg.dims, "psi");
    if (cfg.decimation < 1 || cfg.decimation > std::min(cfg.dims[0], cfg.dims[1])) {
        throw ConfigError("decimation factor must lie in [1, min(M1, M2)]");
    }
    if (cfg.blur_sigma < 0.0 || !std::isfinite(cfg.blur_sigma)) throw ConfigError("blur sigma must be >= 0");
    if (cfg.srf) {
        if (cfg.srf->cols() != cfg.dims[2]) throw ConfigError("custom SRF must have Lh columns");
    } else if (cfg.ms_bands < 1 || cfg.dims[2] % cfg.ms_bands != 0) {
        throw ConfigError("ms_bands must divide the number of HS bands for band averaging");
    }
    if (std::isnan(cfg.snr_h_db) || std::isnan(cfg.snr_m_db)) throw ConfigError("SNR must not be NaN");
}

DegradationOperators make_operators(const SceneConfig& cfg) {
    if (cfg.srf) return make_operators(cfg.dims[0], cfg.dims[1], cfg.blur_sigma, cfg.decimation, *cfg.srf);
    return make_operators(cfg.dims[0], cfg.dims[1], cfg.dims[2], cfg.ms_bands, cfg.blur_sigma, cfg.decimation);
}

TuckerFactors random_tucker(const Dims& dims, const Dims& ranks, std::uint64_t seed, std::uint64_t core_stream,
                            std::uint64_t factor_stream) {
    TuckerFactors tf;
    CounterRng core_rng(seed, core_stream);
    tf.core = Tensor3(ranks);
    for (Index i = 0; i < tf.core.size(); ++i) tf.core.vec()[i] = core_rng.uniform();
    for (std::size_t i = 0; i < 3; ++i) {
        CounterRng rng(seed, factor_stream + i);
        tf.factors[i] = uniform_matrix(dims[i], ranks[i], rng);
    }
    return tf;
}

SyntheticScene generate_scene(const SceneConfig& cfg) {
    validate(cfg);
    SyntheticScene scene;
    scene.ops = make_operators(cfg);
    scene.z_truth = random_tucker(cfg.dims, cfg.z_ranks, cfg.seed, streams::z_core, streams::z_factor);
    scene.psi_truth = random_tucker(cfg.dims, cfg.psi_ranks, cfg.seed, streams::psi_core, streams::psi_factor);
    scene.psi_truth.core *= cfg.psi_scale;
    scene.z_h = scene.z_truth.reconstruct();
    scene.psi = scene.psi_truth.reconstruct();
    Observations obs = observe(scene.z_h, scene.psi, scene.ops, cfg.snr_h_db, cfg.snr_m_db, cfg.noise_seed);
    scene.y_h = std::move(obs.y_h);
    scene.y_m = std::move(obs.y_m);
    scene.e_h = std::move(obs.e_h);
    scene.e_m = std::move(obs.e_m);
    return scene;
}

Tensor3 add_noise(const Tensor3& t, double snr, CounterRng& rng, Tensor3* noise) {
    if (std::isnan(snr)) throw ContractError("add_noise: SNR is NaN");
    Tensor3 n(t.dims());
    if (snr == kNoNoise) {
        if (noise) *noise = std::move(n);
        return t;
    }
    for (Index i = 0; i < n.size(); ++i) n.vec()[i] = rng.normal();
    const double raw = n.norm();
    const double target = t.norm() / std::pow(10.0, snr / 20.0);
    if (raw > 0.0) n *= target / raw;
    Tensor3 out = t + n;
    if (noise) *noise = std::move(n);
    return out;
}

Observations observe(const Tensor3& z_h, const Tensor3& psi, const DegradationOperators& ops, double snr_h,
                     double snr_m, std::uint64_t noise_seed) {
    if (z_h.dims() != psi.dims()) throw ContractError("observe: z_h and psi dims differ");
    if (z_h.dims() != ops.hr_dims()) throw ContractError("observe: tensor dims do not match the operators");
    Observations obs;
    CounterRng rng_h(noise_seed, streams::noise_h);
    CounterRng rng_m(noise_seed, streams::noise_m);
    obs.y_h = add_noise(apply_spatial(z_h, ops), snr_h, rng_h, &obs.e_h);
    obs.y_m = add_noise(apply_spectral(z_h + psi, ops), snr_m, rng_m, &obs.e_m);
    return obs;
}

Tensor3 degraded_variability(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops) {
    if (y_h.dims() != ops.hs_dims() || y_m.dims() != ops.ms_dims()) {
        throw ContractError("degraded_variability: observation dims do not match the operators");
    }
    return apply_spatial(y_m, ops) - apply_spectral(y_h, ops);
}

double snr_db(const Tensor3& signal, const Tensor3& noise) {
    return 10.0 * std::log10(signal.squared_norm() / noise.squared_norm());
}

}  // namespace hsfusion
