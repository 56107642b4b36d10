#pragma once

#include "hsfusion/tensor.hpp"

#include <filesystem>
#include <string>

namespace hsfusion {

enum class SrfMode { band_average, identity, custom };

std::string to_string(SrfMode mode);

struct OperatorProvenance {
    double blur_sigma = 1.0;
    Index kernel_half_width = 4;
    Index decimation = 2;
    Index phase_offset = 0;
    std::string boundary = "zero";
    SrfMode srf_mode = SrfMode::band_average;
};

// Spatial degradation P1 (N1 x M1), P2 (N2 x M2) and spectral response P3 (Lm x Lh).
struct DegradationOperators {
    Matrix p1;
    Matrix p2;
    Matrix p3;
    OperatorProvenance provenance;

    Dims hs_dims() const { return {p1.rows(), p2.rows(), p3.cols()}; }
    Dims ms_dims() const { return {p1.cols(), p2.cols(), p3.rows()}; }
    Dims hr_dims() const { return {p1.cols(), p2.cols(), p3.cols()}; }
};

// Half-width of the truncated Gaussian kernel: ceil(4 sigma).
Index gaussian_half_width(double sigma);

// Gaussian blur (zero padding, normalized kernel) followed by keeping
// samples 0, d, 2d, ... Returns a ceil(m/d) x m matrix. sigma == 0 means no blur.
Matrix build_spatial_operator(Index m, Index d, double sigma);

// lm x lh matrix averaging contiguous groups of lh/lm bands.
Matrix build_srf_averaging(Index lh, Index lm);

// Reads an lm x lh spectral response matrix from CSV (one row per MS band).
Matrix load_srf(const std::filesystem::path& csv_path);

// Operators for a scene of size m1 x m2 x lh observed with lm MS bands.
DegradationOperators make_operators(Index m1, Index m2, Index lh, Index lm, double sigma, Index d);

// Same, with a caller-supplied spectral response.
DegradationOperators make_operators(Index m1, Index m2, double sigma, Index d, const Matrix& srf);

// t x1 P1 x2 P2.
Tensor3 apply_spatial(const Tensor3& t, const DegradationOperators& ops);

// t x3 P3.
Tensor3 apply_spectral(const Tensor3& t, const DegradationOperators& ops);

// t x1 P1^+ x2 P2^+. Requires P1 and P2 to have full row rank.
Tensor3 spatial_pinv_apply(const Tensor3& t, const DegradationOperators& ops);

// m x n cubic-convolution interpolation matrix (Keys, a = -0.5) with edge
// replication. Output sample x is read at source coordinate x * n / m, so
// source sample j sits at output position j * m / n.
Matrix bicubic_upsampling_matrix(Index m, Index n);

// Spatial upscaling of t to m1 x m2 along modes 1 then 2.
Tensor3 bicubic_upsample(const Tensor3& t, Index m1, Index m2);

}  // namespace hsfusion
