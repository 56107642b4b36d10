#pragma once

#include "hsfusion/degradation.hpp"
#include "hsfusion/rng.hpp"
#include "hsfusion/tensor.hpp"

#include <cstdint>
#include <limits>
#include <optional>

namespace hsfusion {

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct SceneConfig {
    Dims dims{100, 100, 200};  // M1, M2, Lh
    Index ms_bands = 10;       // Lm
    Dims z_ranks{10, 10, 5};
    Dims psi_ranks{5, 5, 3};
    // Multiplies the variability core; 0 gives a variability-free scene.
    double psi_scale = 1.0;
    double blur_sigma = 1.0;
    Index decimation = 2;
    // Custom spectral response (Lm x Lh); band averaging when empty.
    std::optional<Matrix> srf;
    double snr_h_db = kNoNoise;
    double snr_m_db = kNoNoise;
    std::uint64_t seed = 1;        // ground truth
    std::uint64_t noise_seed = 1;  // noise realization
};

struct Observations {
    Tensor3 y_h;
    Tensor3 y_m;
    Tensor3 e_h;
    Tensor3 e_m;
};

struct SyntheticScene {
    Tensor3 z_h;
    Tensor3 psi;
    Tensor3 y_h;
    Tensor3 y_m;
    Tensor3 e_h;
    Tensor3 e_m;
    DegradationOperators ops;
    TuckerFactors z_truth;
    TuckerFactors psi_truth;

    Tensor3 z_m() const { return z_h + psi; }
};

// Checks ranks against dims and the operator parameters.
void validate(const SceneConfig& cfg);

DegradationOperators make_operators(const SceneConfig& cfg);

// Tucker factors and core drawn elementwise uniform on [0, 1].
TuckerFactors random_tucker(const Dims& dims, const Dims& ranks, std::uint64_t seed, std::uint64_t core_stream,
                            std::uint64_t factor_stream);

SyntheticScene generate_scene(const SceneConfig& cfg);

// Adds zero-mean Gaussian noise scaled so that 10 log10(||t||^2 / ||noise||^2)
// equals snr_db exactly. Infinite snr returns t unchanged. `noise` receives
// the realization when non-null.
Tensor3 add_noise(const Tensor3& t, double snr_db, CounterRng& rng, Tensor3* noise = nullptr);

// Y_h = P12(Z_h) + E_h,  Y_m = P3(Z_h + Psi) + E_m.
Observations observe(const Tensor3& z_h, const Tensor3& psi, const DegradationOperators& ops, double snr_h_db,
                     double snr_m_db, std::uint64_t noise_seed);

// P12(Y_m) - P3(Y_h), which equals P12(P3(Psi)) on noiseless data.
Tensor3 degraded_variability(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops);

// Realized signal-to-noise ratio in dB.
double snr_db(const Tensor3& signal, const Tensor3& noise);

}  // namespace hsfusion
