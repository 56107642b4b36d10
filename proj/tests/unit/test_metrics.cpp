#include "hsfusion/errors.hpp"
#include "hsfusion/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace hsfusion;
using namespace hsfusion::testing;

namespace {

// Direct per-element evaluations of the metric definitions.
double psnr_oracle(const Tensor3& z, const Tensor3& e) {
    const Dims d = z.dims();
    double total = 0.0;
    for (Index l = 0; l < d[2]; ++l) {
        double peak = -1e300, err = 0.0;
        for (Index i = 0; i < d[0]; ++i) {
            for (Index j = 0; j < d[1]; ++j) {
                peak = std::max(peak, z(i, j, l));
                err += (z(i, j, l) - e(i, j, l)) * (z(i, j, l) - e(i, j, l));
            }
        }
        total += 10.0 * std::log10(static_cast<double>(d[0] * d[1]) * peak * peak / err);
    }
    return total / static_cast<double>(d[2]);
}

double sam_oracle(const Tensor3& z, const Tensor3& e) {
    const Dims d = z.dims();
    double total = 0.0;
    for (Index i = 0; i < d[0]; ++i) {
        for (Index j = 0; j < d[1]; ++j) {
            double xy = 0.0, xx = 0.0, yy = 0.0;
            for (Index l = 0; l < d[2]; ++l) {
                xy += z(i, j, l) * e(i, j, l);
                xx += z(i, j, l) * z(i, j, l);
                yy += e(i, j, l) * e(i, j, l);
            }
            total += std::acos(std::clamp(xy / std::sqrt(xx * yy), -1.0, 1.0));
        }
    }
    return total / static_cast<double>(d[0] * d[1]) * 180.0 / std::numbers::pi;
}

double ergas_oracle(const Tensor3& z, const Tensor3& e, Index n1, Index n2) {
    const Dims d = z.dims();
    double sum = 0.0;
    for (Index l = 0; l < d[2]; ++l) {
        double mean = 0.0, err = 0.0;
        for (Index i = 0; i < d[0]; ++i) {
            for (Index j = 0; j < d[1]; ++j) {
                mean += z(i, j, l);
                err += (z(i, j, l) - e(i, j, l)) * (z(i, j, l) - e(i, j, l));
            }
        }
        mean /= static_cast<double>(d[0] * d[1]);
        sum += err / (mean * mean);
    }
    return static_cast<double>(d[0] * d[1]) / static_cast<double>(n1 * n2) *
           std::sqrt(1e4 / static_cast<double>(d[2]) * sum);
}

double uiqi_oracle(const Tensor3& z, const Tensor3& e) {
    const Dims d = z.dims();
    const double n = static_cast<double>(d[0] * d[1]);
    double total = 0.0;
    for (Index l = 0; l < d[2]; ++l) {
        double mx = 0.0, my = 0.0;
        for (Index i = 0; i < d[0]; ++i) {
            for (Index j = 0; j < d[1]; ++j) {
                mx += z(i, j, l);
                my += e(i, j, l);
            }
        }
        mx /= n;
        my /= n;
        double vx = 0.0, vy = 0.0, c = 0.0;
        for (Index i = 0; i < d[0]; ++i) {
            for (Index j = 0; j < d[1]; ++j) {
                vx += (z(i, j, l) - mx) * (z(i, j, l) - mx);
                vy += (e(i, j, l) - my) * (e(i, j, l) - my);
                c += (z(i, j, l) - mx) * (e(i, j, l) - my);
            }
        }
        // (n - 1) or n normalization cancels.
        total += 4.0 * c * mx * my / ((vx + vy) * (mx * mx + my * my));
    }
    return total / static_cast<double>(d[2]);
}

}  // namespace

TEST(Metrics, IdealValuesForIdenticalImages) {
    std::mt19937_64 g(1);
    const Tensor3 z = random_tensor(g, {6, 5, 4}, 0.1, 1.0);
    EXPECT_EQ(sam(z, z), 0.0);
    EXPECT_EQ(ergas(z, z, 3, 3), 0.0);
    EXPECT_EQ(psnr(z, z), kPsnrIdentical);
    EXPECT_EQ(uiqi(z, z), 1.0);
}

TEST(Metrics, SinglePixelPsnr) {
    Tensor3 z({1, 1, 1}), e({1, 1, 1});
    z(0, 0, 0) = 1.0;
    e(0, 0, 0) = 0.9;
    EXPECT_NEAR(psnr(z, e), 20.0, 1e-12);
}

TEST(Metrics, SamIgnoresScaleAndMeasuresOrthogonality) {
    std::mt19937_64 g(2);
    const Tensor3 z = random_tensor(g, {4, 4, 5}, 0.1, 1.0);
    Tensor3 twice = z;
    twice.vec() *= 2.0;
    EXPECT_NEAR(sam(z, twice), 0.0, 1e-6);
    Tensor3 a({1, 1, 2}), b({1, 1, 2});
    a(0, 0, 0) = 1.0;
    b(0, 0, 1) = 3.0;
    EXPECT_NEAR(sam(a, b), 90.0, 1e-12);
    MetricFlags flags;
    Tensor3 zero({1, 1, 2});
    EXPECT_EQ(sam(a, zero, &flags), 0.0);
    EXPECT_EQ(flags.count, 1);
}

TEST(Metrics, ErgasClosedFormAndHomogeneity) {
    // Single band with constant value 2 and constant error 0.5 on 4 x 4 pixels.
    Tensor3 z({4, 4, 1}), e({4, 4, 1});
    z.vec().setConstant(2.0);
    e.vec().setConstant(1.5);
    // (16 / 4) sqrt(1e4 * 16 * 0.25 / 4) = 4 * 100
    EXPECT_NEAR(ergas(z, e, 2, 2), 400.0, 1e-10);
    std::mt19937_64 g(3);
    const Tensor3 a = random_tensor(g, {6, 6, 3}, 0.5, 1.0);
    const Tensor3 b = random_tensor(g, {6, 6, 3}, 0.5, 1.0);
    Tensor3 as = a, bs = b;
    as.vec() *= 7.0;
    bs.vec() *= 7.0;
    EXPECT_NEAR(ergas(as, bs, 3, 3), ergas(a, b, 3, 3), 1e-10 * ergas(a, b, 3, 3));
}

TEST(Metrics, UiqiClosedFormCases) {
    Tensor3 z({2, 1, 1}), e({2, 1, 1});
    z(0, 0, 0) = 1.0;
    z(1, 0, 0) = 3.0;
    e(0, 0, 0) = 2.0;
    e(1, 0, 0) = 4.0;
    // means 2 and 3, variances 1 and 1, covariance 1: 4*1*6 / (2 * 13)
    EXPECT_NEAR(uiqi(z, e), 24.0 / 26.0, 1e-14);
    // Reflection about the mean: equal means and variances, correlation -1.
    Tensor3 mirror = z;
    mirror.vec() = 4.0 - z.vec().array();
    EXPECT_NEAR(uiqi(z, mirror), -1.0, 1e-14);
    MetricFlags flags;
    Tensor3 zero({2, 1, 1});
    EXPECT_EQ(uiqi(zero, zero, &flags), 1.0);
    EXPECT_EQ(flags.count, 1);
}

TEST(Metrics, MatchDirectFormulas) {
    std::mt19937_64 g(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor3 z = random_tensor(g, {7, 6, 5}, 0.1, 1.0);
        Tensor3 e = z;
        e.vec() += 0.1 * random_tensor(g, {7, 6, 5}).vec();
        EXPECT_NEAR(psnr(z, e), psnr_oracle(z, e), 1e-10);
        EXPECT_NEAR(sam(z, e), sam_oracle(z, e), 1e-8);
        EXPECT_NEAR(ergas(z, e, 4, 3), ergas_oracle(z, e, 4, 3), 1e-10 * ergas_oracle(z, e, 4, 3));
        EXPECT_NEAR(uiqi(z, e), uiqi_oracle(z, e), 1e-10);
        const MetricSet all = evaluate_all(z, e, 4, 3);
        EXPECT_EQ(all.sam, sam(z, e));
        EXPECT_EQ(all.psnr, psnr(z, e));
    }
}

TEST(Metrics, RejectMismatchedShapes) {
    const Tensor3 a({2, 2, 2}), b({2, 2, 3});
    EXPECT_THROW(psnr(a, b), ContractError);
    EXPECT_THROW(sam(a, b), ContractError);
    EXPECT_THROW(ergas(a, a, 0, 1), ContractError);
    EXPECT_THROW(uiqi(a, b), ContractError);
}

TEST(Quantile, NearestRank) {
    Tensor3 t({10, 10, 10});
    for (Index i = 0; i < t.size(); ++i) t.vec()[i] = static_cast<double>(1000 - i);
    EXPECT_EQ(quantile_nearest_rank(t, 0.999), 999.0);
    EXPECT_EQ(quantile_nearest_rank(t, 1.0), 1000.0);
    EXPECT_EQ(quantile_nearest_rank(t, 0.5), 500.0);
    EXPECT_EQ(quantile_nearest_rank(t, 1e-6), 1.0);
    EXPECT_THROW(quantile_nearest_rank(t, 0.0), ContractError);
    EXPECT_THROW(quantile_nearest_rank(t, 1.5), ContractError);
}

TEST(Quantile, NormalizationIsScaleInvariant) {
    Tensor3 ones({3, 3, 3});
    ones.vec().setConstant(1.0);
    EXPECT_EQ(normalize_quantile(ones, 0.999), ones);
    std::mt19937_64 g(5);
    const Tensor3 t = random_tensor(g, {5, 5, 5}, 0.0, 1.0);
    Tensor3 scaled = t;
    scaled.vec() *= 3.5;
    EXPECT_LE(rel_diff(normalize_quantile(scaled, 0.99), normalize_quantile(t, 0.99)), 1e-15);
    EXPECT_THROW(normalize_quantile(Tensor3({2, 2, 2}), 0.5), ContractError);
}
