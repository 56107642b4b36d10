#include "hsfusion/tensor.hpp"

#include "hsfusion/errors.hpp"

#include <cmath>
#include <string>

namespace hsfusion {

namespace {

std::string dims_str(const Dims& d) {
    return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + ")";
}

Index dims_product(const Dims& d) { return d[0] * d[1] * d[2]; }

void require_dims(const Dims& d) {
    for (Index n : d) {
        if (n < 0) throw ContractError("negative tensor dimension in " + dims_str(d));
    }
}

}  // namespace

Mode mode_from_int(int k) {
    if (k < 1 || k > 3) throw ContractError("mode index must be 1, 2 or 3, got " + std::to_string(k));
    return static_cast<Mode>(k);
}

Tensor3::Tensor3(const Dims& dims) : dims_(dims) {
    require_dims(dims);
    data_ = Vector::Zero(dims_product(dims));
}

Tensor3::Tensor3(const Dims& dims, Vector data) : dims_(dims), data_(std::move(data)) {
    require_dims(dims);
    if (data_.size() != dims_product(dims)) {
        throw ContractError("buffer length " + std::to_string(data_.size()) + " does not match dims " +
                            dims_str(dims));
    }
}

Tensor3 Tensor3::constant(const Dims& dims, double value) {
    require_dims(dims);
    return Tensor3(dims, Vector::Constant(dims_product(dims), value));
}

Tensor3& Tensor3::operator+=(const Tensor3& other) {
    if (dims_ != other.dims_) {
        throw ContractError("tensor sum: dims " + dims_str(dims_) + " vs " + dims_str(other.dims_));
    }
    data_ += other.data_;
    return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& other) {
    if (dims_ != other.dims_) {
        throw ContractError("tensor difference: dims " + dims_str(dims_) + " vs " + dims_str(other.dims_));
    }
    data_ -= other.data_;
    return *this;
}

Tensor3 TuckerFactors::reconstruct() const {
    return multilinear_product(core, factors[0], factors[1], factors[2]);
}

Tensor3 mode_product(const Tensor3& t, const Matrix& m, Mode k) {
    const Dims& d = t.dims();
    const std::size_t s = slot(k);
    if (m.cols() != d[s]) {
        throw ContractError("mode-" + std::to_string(static_cast<int>(k)) + " product: matrix has " +
                            std::to_string(m.cols()) + " columns, tensor dim is " + std::to_string(d[s]));
    }
    Dims out_dims = d;
    out_dims[s] = m.rows();
    Tensor3 out(out_dims);
    if (out.size() == 0) return out;

    switch (k) {
        case Mode::one: {
            Eigen::Map<const Matrix> in(t.vec().data(), d[0], d[1] * d[2]);
            Eigen::Map<Matrix> res(out.vec().data(), m.rows(), d[1] * d[2]);
            res.noalias() = m * in;
            break;
        }
        case Mode::two: {
            for (Index i3 = 0; i3 < d[2]; ++i3) {
                out.slice(i3).noalias() = t.slice(i3) * m.transpose();
            }
            break;
        }
        case Mode::three: {
            Eigen::Map<const Matrix> in(t.vec().data(), d[0] * d[1], d[2]);
            Eigen::Map<Matrix> res(out.vec().data(), d[0] * d[1], m.rows());
            res.noalias() = in * m.transpose();
            break;
        }
    }
    return out;
}

Tensor3 multilinear_product(const Tensor3& t, const Matrix& b1, const Matrix& b2, const Matrix& b3) {
    return mode_product(mode_product(mode_product(t, b1, Mode::one), b2, Mode::two), b3, Mode::three);
}

Matrix matricize(const Tensor3& t, Mode k) {
    const Dims& d = t.dims();
    switch (k) {
        case Mode::one:
            return Eigen::Map<const Matrix>(t.vec().data(), d[0], d[1] * d[2]);
        case Mode::two: {
            Matrix out(d[1], d[0] * d[2]);
            for (Index i3 = 0; i3 < d[2]; ++i3) {
                out.middleCols(i3 * d[0], d[0]) = t.slice(i3).transpose();
            }
            return out;
        }
        case Mode::three:
            return Eigen::Map<const Matrix>(t.vec().data(), d[0] * d[1], d[2]).transpose();
    }
    throw ContractError("invalid mode");
}

Tensor3 tensorize(const Matrix& m, const Dims& dims, Mode k) {
    require_dims(dims);
    const std::size_t s = slot(k);
    const Index other = dims_product(dims) / (dims[s] == 0 ? 1 : dims[s]);
    if (m.rows() != dims[s] || (dims[s] != 0 && m.cols() != other)) {
        throw ContractError("tensorize: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            " does not match mode-" + std::to_string(static_cast<int>(k)) + " unfolding of " +
                            dims_str(dims));
    }
    Tensor3 out(dims);
    switch (k) {
        case Mode::one:
            out.vec() = Eigen::Map<const Vector>(m.data(), m.size());
            break;
        case Mode::two:
            for (Index i3 = 0; i3 < dims[2]; ++i3) {
                out.slice(i3) = m.middleCols(i3 * dims[0], dims[0]).transpose();
            }
            break;
        case Mode::three: {
            Eigen::Map<Matrix> dst(out.vec().data(), dims[0] * dims[1], dims[2]);
            dst = m.transpose();
            break;
        }
    }
    return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index j = 0; j < a.cols(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Matrix tsvd(const Matrix& m, Index r, Vector& singular_values) {
    const Index rmax = std::min(m.rows(), m.cols());
    if (r < 0 || r > rmax) {
        throw ContractError("tsvd: rank " + std::to_string(r) + " outside [0, " + std::to_string(rmax) + "]");
    }
    Matrix u;
    if (m.rows() <= m.cols()) {
        Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
        singular_values = svd.singularValues();
        u = svd.matrixU().leftCols(r);
    } else {
        // Thin V of the transpose is the thin U of m.
        Eigen::BDCSVD<Matrix> svd(m.transpose(), Eigen::ComputeThinV);
        singular_values = svd.singularValues();
        u = svd.matrixV().leftCols(r);
    }
    for (Index j = 0; j < u.cols(); ++j) {
        Index imax = 0;
        double best = -1.0;
        for (Index i = 0; i < u.rows(); ++i) {
            const double a = std::abs(u(i, j));
            if (a > best) {
                best = a;
                imax = i;
            }
        }
        if (u.rows() > 0 && u(imax, j) < 0.0) u.col(j) = -u.col(j);
    }
    return u;
}

Matrix tsvd(const Matrix& m, Index r) {
    Vector sv;
    return tsvd(m, r, sv);
}

TuckerFactors hosvd(const Tensor3& t, const Dims& ranks) {
    const Dims& d = t.dims();
    TuckerFactors tf;
    for (Mode k : kAllModes) {
        const std::size_t s = slot(k);
        if (ranks[s] < 0 || ranks[s] > d[s]) {
            throw ContractError("hosvd: rank " + dims_str(ranks) + " exceeds dims " + dims_str(d));
        }
        tf.factors[s] = tsvd(matricize(t, k), ranks[s]);
    }
    tf.core = multilinear_product(t, tf.factors[0].transpose(), tf.factors[1].transpose(),
                                  tf.factors[2].transpose());
    return tf;
}

Tensor3 btd_reconstruct(std::span<const TuckerFactors> blocks) {
    if (blocks.empty()) throw ContractError("btd_reconstruct: no blocks");
    Tensor3 sum = blocks.front().reconstruct();
    for (std::size_t r = 1; r < blocks.size(); ++r) {
        if (blocks[r].output_dims() != sum.dims()) {
            throw ContractError("btd_reconstruct: block " + std::to_string(r) + " has dims " +
                                dims_str(blocks[r].output_dims()) + ", expected " + dims_str(sum.dims()));
        }
        sum += blocks[r].reconstruct();
    }
    return sum;
}

Tensor3 block_diag_core(const Tensor3& a, const Tensor3& b) {
    const Dims& da = a.dims();
    const Dims& db = b.dims();
    Tensor3 out({da[0] + db[0], da[1] + db[1], da[2] + db[2]});
    for (Index k = 0; k < da[2]; ++k) {
        out.slice(k).topLeftCorner(da[0], da[1]) = a.slice(k);
    }
    for (Index k = 0; k < db[2]; ++k) {
        out.slice(da[2] + k).bottomRightCorner(db[0], db[1]) = b.slice(k);
    }
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ContractError("hcat: row count mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

Index numerical_rank(const Matrix& m, double rel_tol) {
    if (m.size() == 0) return 0;
    Eigen::BDCSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s[i] > rel_tol * s[0]) ++r;
    }
    return r;
}

void orthonormalize_factor(TuckerFactors& tf, Mode k) {
    const std::size_t s = slot(k);
    const Matrix& b = tf.factors[s];
    const Index n = b.rows();
    const Index r = b.cols();
    if (r == 0) return;
    if (r > n) throw ContractError("orthonormalize_factor: factor has more columns than rows");
    Eigen::HouseholderQR<Matrix> qr(b);
    Matrix q = qr.householderQ() * Matrix::Identity(n, r);
    Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    tf.factors[s] = std::move(q);
    tf.core = mode_product(tf.core, rr, k);
}

void orthonormalize_factors(TuckerFactors& tf) {
    for (Mode k : kAllModes) orthonormalize_factor(tf, k);
}

}  // namespace hsfusion
