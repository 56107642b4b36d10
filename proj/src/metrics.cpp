#include "hsfusion/metrics.hpp"

#include "hsfusion/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace hsfusion {

namespace {

void require_same_dims(const Tensor3& z, const Tensor3& z_hat, const char* what) {
    if (z.dims() != z_hat.dims()) throw ContractError(std::string(what) + ": dims differ");
    if (z.size() == 0) throw ContractError(std::string(what) + ": empty tensor");
}

void flag(MetricFlags* flags) {
    if (flags) ++flags->count;
}

}  // namespace

double psnr(const Tensor3& z, const Tensor3& z_hat) {
    require_same_dims(z, z_hat, "psnr");
    const Dims& d = z.dims();
    const double pixels = static_cast<double>(d[0] * d[1]);
    double total = 0.0;
    for (Index l = 0; l < d[2]; ++l) {
        const double err = (z.slice(l) - z_hat.slice(l)).squaredNorm();
        if (err == 0.0) return kPsnrIdentical;
        const double peak = z.slice(l).maxCoeff();
        total += std::log10(pixels * peak * peak / err);
    }
    return 10.0 * total / static_cast<double>(d[2]);
}

double sam(const Tensor3& z, const Tensor3& z_hat, MetricFlags* flags) {
    require_same_dims(z, z_hat, "sam");
    const Dims& d = z.dims();
    const Index pixels = d[0] * d[1];
    // Pixel spectra are strided by N1 N2 in the buffer.
    Eigen::Map<const Matrix> a(z.vec().data(), pixels, d[2]);
    Eigen::Map<const Matrix> b(z_hat.vec().data(), pixels, d[2]);
    double total = 0.0;
    for (Index p = 0; p < pixels; ++p) {
        const Vector x = a.row(p).transpose();
        const Vector y = b.row(p).transpose();
        const double nx = x.norm();
        const double ny = y.norm();
        if (nx == 0.0 || ny == 0.0) {
            flag(flags);
            continue;
        }
        const Vector u = x / nx;
        const Vector v = y / ny;
        // Stable form of arccos(<u, v>).
        total += 2.0 * std::atan2((u - v).norm(), (u + v).norm());
    }
    return total / static_cast<double>(pixels) * 180.0 / std::numbers::pi;
}

double ergas(const Tensor3& z, const Tensor3& z_hat, Index n1, Index n2, MetricFlags* flags) {
    require_same_dims(z, z_hat, "ergas");
    if (n1 < 1 || n2 < 1) throw ContractError("ergas: N1 and N2 must be positive");
    const Dims& d = z.dims();
    const double pixels = static_cast<double>(d[0] * d[1]);
    double sum = 0.0;
    for (Index l = 0; l < d[2]; ++l) {
        const double mean = z.slice(l).sum() / pixels;
        if (mean == 0.0) {
            flag(flags);
            continue;
        }
        sum += (z.slice(l) - z_hat.slice(l)).squaredNorm() / (mean * mean);
    }
    const double ratio = pixels / static_cast<double>(n1 * n2);
    return ratio * std::sqrt(1e4 / static_cast<double>(d[2]) * sum);
}

double uiqi(const Tensor3& z, const Tensor3& z_hat, MetricFlags* flags) {
    require_same_dims(z, z_hat, "uiqi");
    const Dims& d = z.dims();
    const double n = static_cast<double>(d[0] * d[1]);
    double total = 0.0;
    for (Index l = 0; l < d[2]; ++l) {
        const auto x = z.slice(l).array();
        const auto y = z_hat.slice(l).array();
        const double mx = x.sum() / n;
        const double my = y.sum() / n;
        const double vx = (x - mx).square().sum() / n;
        const double vy = (y - my).square().sum() / n;
        const double cxy = ((x - mx) * (y - my)).sum() / n;
        const double den = (vx + vy) * (mx * mx + my * my);
        if (den == 0.0) {
            flag(flags);
            total += (z.slice(l) == z_hat.slice(l)) ? 1.0 : 0.0;
            continue;
        }
        if (z.slice(l) == z_hat.slice(l)) {
            total += 1.0;
            continue;
        }
        total += 4.0 * cxy * mx * my / den;
    }
    return total / static_cast<double>(d[2]);
}

MetricSet evaluate_all(const Tensor3& z, const Tensor3& z_hat, Index n1, Index n2) {
    return {sam(z, z_hat), ergas(z, z_hat, n1, n2), psnr(z, z_hat), uiqi(z, z_hat)};
}

double quantile_nearest_rank(const Tensor3& t, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw ContractError("quantile must lie in (0, 1]");
    if (t.size() == 0) throw ContractError("quantile of an empty tensor");
    std::vector<double> v(t.values().begin(), t.values().end());
    const double n = static_cast<double>(v.size());
    // The small offset keeps q n that is an integer up to rounding on that integer.
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, v.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

Tensor3 normalize_quantile(const Tensor3& t, double q) {
    const double scale = quantile_nearest_rank(t, q);
    if (scale == 0.0) throw ContractError("normalize_quantile: the quantile is zero");
    Tensor3 out = t;
    out.vec() /= scale;
    return out;
}

}  // namespace hsfusion
