#pragma once

#include "hsfusion/tensor.hpp"

#include <limits>

namespace hsfusion {

// Returned by psnr() when the estimate equals the reference.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// Pixels or bands a metric could not evaluate normally.
struct MetricFlags {
    Index count = 0;
};

// Band-averaged 10 log10(M1 M2 max(z_l)^2 / ||z_l - z_hat_l||_F^2).
// A band without error contributes +inf.
double psnr(const Tensor3& z, const Tensor3& z_hat);

// Mean spectral angle in degrees. Pixels where either spectrum has zero
// norm contribute 0 and are flagged.
double sam(const Tensor3& z, const Tensor3& z_hat, MetricFlags* flags = nullptr);

// (M1 M2 / N1 N2) sqrt(1e4 / L sum_l ||z_l - z_hat_l||_F^2 / mean(z_l)^2).
// Bands with zero mean are skipped and flagged.
double ergas(const Tensor3& z, const Tensor3& z_hat, Index n1, Index n2, MetricFlags* flags = nullptr);

// Universal image quality index evaluated over each whole band, averaged
// over bands. A band with zero variance and zero mean in both images
// contributes 1 if identical, 0 otherwise, and is flagged.
double uiqi(const Tensor3& z, const Tensor3& z_hat, MetricFlags* flags = nullptr);

struct MetricSet {
    double sam = 0.0;
    double ergas = 0.0;
    double psnr = 0.0;
    double uiqi = 0.0;
};

MetricSet evaluate_all(const Tensor3& z, const Tensor3& z_hat, Index n1, Index n2);

// Nearest-rank q-quantile of the entries: the ceil(q n)-th smallest value.
double quantile_nearest_rank(const Tensor3& t, double q);

// t divided by its nearest-rank q-quantile.
Tensor3 normalize_quantile(const Tensor3& t, double q);

}  // namespace hsfusion
