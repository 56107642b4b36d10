#include "hsfusion/degradation.hpp"

#include "hsfusion/errors.hpp"
#include "hsfusion/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace hsfusion {

std::string to_string(SrfMode mode) {
    switch (mode) {
        case SrfMode::band_average:
            return "band-average";
        case SrfMode::identity:
            return "identity";
        case SrfMode::custom:
            return "custom";
    }
    return "unknown";
}

Index gaussian_half_width(double sigma) {
    if (sigma < 0.0 || !std::isfinite(sigma)) throw ContractError("blur sigma must be finite and >= 0");
    return static_cast<Index>(std::ceil(4.0 * sigma));
}

Matrix build_spatial_operator(Index m, Index d, double sigma) {
    if (m < 1) throw ContractError("spatial operator: source size must be positive");
    if (d < 1) throw ContractError("spatial operator: decimation factor must be >= 1");
    if (d > m) {
        throw ContractError("spatial operator: decimation factor " + std::to_string(d) + " exceeds size " +
                            std::to_string(m));
    }
    const Index h = gaussian_half_width(sigma);
    std::vector<double> w(static_cast<std::size_t>(2 * h + 1), 1.0);
    if (h > 0) {
        double sum = 0.0;
        for (Index k = -h; k <= h; ++k) {
            const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
            w[static_cast<std::size_t>(k + h)] = v;
            sum += v;
        }
        for (double& v : w) v /= sum;
    }
    const Index n = (m + d - 1) / d;
    Matrix p = Matrix::Zero(n, m);
    for (Index r = 0; r < n; ++r) {
        const Index centre = r * d;
        for (Index k = -h; k <= h; ++k) {
            const Index j = centre + k;
            if (j >= 0 && j < m) p(r, j) = w[static_cast<std::size_t>(k + h)];
        }
    }
    return p;
}

Matrix build_srf_averaging(Index lh, Index lm) {
    if (lh < 1 || lm < 1) throw ContractError("srf: band counts must be positive");
    if (lh % lm != 0) {
        throw ContractError("srf: " + std::to_string(lm) + " MS bands do not divide " + std::to_string(lh) +
                            " HS bands; supply a custom SRF");
    }
    const Index group = lh / lm;
    Matrix p = Matrix::Zero(lm, lh);
    for (Index r = 0; r < lm; ++r) {
        p.block(r, r * group, 1, group).setConstant(1.0 / static_cast<double>(group));
    }
    return p;
}

Matrix load_srf(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open SRF file " + csv_path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            try {
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || cell.find_first_not_of(" \t\r", used) != std::string::npos) {
                throw IoError(csv_path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw IoError(csv_path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("SRF file " + csv_path.string() + " is empty");
    Matrix p(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < p.rows(); ++i) {
        for (Index j = 0; j < p.cols(); ++j) p(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return p;
}

DegradationOperators make_operators(Index m1, Index m2, double sigma, Index d, const Matrix& srf) {
    DegradationOperators ops;
    ops.p1 = build_spatial_operator(m1, d, sigma);
    ops.p2 = build_spatial_operator(m2, d, sigma);
    ops.p3 = srf;
    ops.provenance.blur_sigma = sigma;
    ops.provenance.kernel_half_width = gaussian_half_width(sigma);
    ops.provenance.decimation = d;
    ops.provenance.srf_mode = SrfMode::custom;
    return ops;
}

DegradationOperators make_operators(Index m1, Index m2, Index lh, Index lm, double sigma, Index d) {
    DegradationOperators ops = make_operators(m1, m2, sigma, d, build_srf_averaging(lh, lm));
    ops.provenance.srf_mode = lh == lm ? SrfMode::identity : SrfMode::band_average;
    return ops;
}

Tensor3 apply_spatial(const Tensor3& t, const DegradationOperators& ops) {
    return mode_product(mode_product(t, ops.p1, Mode::one), ops.p2, Mode::two);
}

Tensor3 apply_spectral(const Tensor3& t, const DegradationOperators& ops) {
    return mode_product(t, ops.p3, Mode::three);
}

Tensor3 spatial_pinv_apply(const Tensor3& t, const DegradationOperators& ops) {
    Index r1 = 0;
    Index r2 = 0;
    const Matrix p1_pinv = pseudo_inverse(ops.p1, 1e-10, &r1);
    const Matrix p2_pinv = pseudo_inverse(ops.p2, 1e-10, &r2);
    if (r1 < ops.p1.rows() || r2 < ops.p2.rows()) {
        throw ContractError("spatial_pinv_apply: spatial operators are not full row rank");
    }
    return mode_product(mode_product(t, p1_pinv, Mode::one), p2_pinv, Mode::two);
}

namespace {

double keys_cubic(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

}  // namespace

Matrix bicubic_upsampling_matrix(Index m, Index n) {
    if (m < 1 || n < 1) throw ContractError("bicubic: sizes must be positive");
    Matrix u = Matrix::Zero(m, n);
    const double step = static_cast<double>(n) / static_cast<double>(m);
    for (Index x = 0; x < m; ++x) {
        const double src = static_cast<double>(x) * step;
        const auto base = static_cast<Index>(std::floor(src));
        for (Index k = base - 1; k <= base + 2; ++k) {
            const double w = keys_cubic(src - static_cast<double>(k));
            if (w == 0.0) continue;
            const Index j = std::clamp<Index>(k, 0, n - 1);
            u(x, j) += w;
        }
    }
    return u;
}

Tensor3 bicubic_upsample(const Tensor3& t, Index m1, Index m2) {
    const Tensor3 rows = mode_product(t, bicubic_upsampling_matrix(m1, t.dim(Mode::one)), Mode::one);
    return mode_product(rows, bicubic_upsampling_matrix(m2, t.dim(Mode::two)), Mode::two);
}

}  // namespace hsfusion
