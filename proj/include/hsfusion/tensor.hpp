#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <vector>

namespace hsfusion {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims = std::array<Index, 3>;

// Tensor mode. Numbered as in the usual multilinear-algebra notation.
enum class Mode : int { one = 1, two = 2, three = 3 };

inline constexpr std::array<Mode, 3> kAllModes{Mode::one, Mode::two, Mode::three};

constexpr std::size_t slot(Mode m) noexcept { return static_cast<std::size_t>(m) - 1; }

// Checked conversion from a 1-based integer.
Mode mode_from_int(int k);

// Dense order-3 tensor. The buffer is stored with the first index varying
// fastest, so data() is exactly vec(T).
class Tensor3 {
public:
    Tensor3() : dims_{0, 0, 0} {}
    explicit Tensor3(const Dims& dims);
    Tensor3(const Dims& dims, Vector data);

    static Tensor3 zeros(const Dims& dims) { return Tensor3(dims); }
    static Tensor3 constant(const Dims& dims, double value);

    const Dims& dims() const noexcept { return dims_; }
    Index dim(Mode m) const noexcept { return dims_[slot(m)]; }
    Index size() const noexcept { return data_.size(); }

    double& operator()(Index i1, Index i2, Index i3) {
        return data_[i1 + dims_[0] * (i2 + dims_[1] * i3)];
    }
    double operator()(Index i1, Index i2, Index i3) const {
        return data_[i1 + dims_[0] * (i2 + dims_[1] * i3)];
    }

    const Vector& vec() const noexcept { return data_; }
    Vector& vec() noexcept { return data_; }
    std::span<const double> values() const noexcept {
        return {data_.data(), static_cast<std::size_t>(data_.size())};
    }

    // Frontal slice (fixed third index) viewed as an N1 x N2 matrix.
    Eigen::Map<const Matrix> slice(Index i3) const {
        return Eigen::Map<const Matrix>(data_.data() + i3 * dims_[0] * dims_[1], dims_[0], dims_[1]);
    }
    Eigen::Map<Matrix> slice(Index i3) {
        return Eigen::Map<Matrix>(data_.data() + i3 * dims_[0] * dims_[1], dims_[0], dims_[1]);
    }

    double norm() const { return data_.norm(); }
    double squared_norm() const { return data_.squaredNorm(); }

    Tensor3& operator+=(const Tensor3& other);
    Tensor3& operator-=(const Tensor3& other);
    Tensor3& operator*=(double s) {
        data_ *= s;
        return *this;
    }

    friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
    friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
    friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }
    friend Tensor3 operator-(Tensor3 a) {
        a.data_ = -a.data_;
        return a;
    }

    bool operator==(const Tensor3& other) const {
        return dims_ == other.dims_ && data_ == other.data_;
    }

private:
    Dims dims_;
    Vector data_;
};

// Tucker model [[core; B1, B2, B3]] with factor i of shape N_i x K_i.
struct TuckerFactors {
    Tensor3 core;
    std::array<Matrix, 3> factors;

    Dims ranks() const { return core.dims(); }
    Dims output_dims() const {
        return {factors[0].rows(), factors[1].rows(), factors[2].rows()};
    }
    Tensor3 reconstruct() const;
};

// Multiplies every mode-k fiber of t by m.
Tensor3 mode_product(const Tensor3& t, const Matrix& m, Mode k);

// t x1 b1 x2 b2 x3 b3.
Tensor3 multilinear_product(const Tensor3& t, const Matrix& b1, const Matrix& b2, const Matrix& b3);

// Mode-k unfolding. Column ordering satisfies
//   T(1) = B1 G(1) (B3 kron B2)^T, T(2) = B2 G(2) (B3 kron B1)^T, T(3) = B3 G(3) (B2 kron B1)^T.
Matrix matricize(const Tensor3& t, Mode k);

// Inverse of matricize.
Tensor3 tensorize(const Matrix& m, const Dims& dims, Mode k);

Matrix kron(const Matrix& a, const Matrix& b);

// Left singular vectors of the r largest singular values. Each column is
// sign-normalized so that its largest-magnitude entry (first on ties) is >= 0.
Matrix tsvd(const Matrix& m, Index r);

// Same, also returning all singular values of m in decreasing order.
Matrix tsvd(const Matrix& m, Index r, Vector& singular_values);

// Truncated higher-order SVD: B_i = tsvd(T(i), K_i), core = [[t; B1^T, B2^T, B3^T]].
TuckerFactors hosvd(const Tensor3& t, const Dims& ranks);

// Sum of block reconstructions.
Tensor3 btd_reconstruct(std::span<const TuckerFactors> blocks);

// Block-diagonal core: a in the leading corner, b in the trailing corner.
Tensor3 block_diag_core(const Tensor3& a, const Tensor3& b);

// [a b] column concatenation.
Matrix hcat(const Matrix& a, const Matrix& b);

// Number of singular values above rel_tol * sigma_1.
Index numerical_rank(const Matrix& m, double rel_tol = 1e-8);

// Replaces each factor by the Q of its thin QR decomposition and absorbs
// R into the core; the reconstruction is unchanged up to rounding.
void orthonormalize_factors(TuckerFactors& tf);

// Absorbs R of factor `k` into the core (core <- core x_k R, B_k <- Q).
void orthonormalize_factor(TuckerFactors& tf, Mode k);

}  // namespace hsfusion
