#include "hsfusion/ct_star.hpp"
#include "hsfusion/errors.hpp"
#include "hsfusion/synthetic.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace hsfusion;
using namespace hsfusion::testing;

namespace {

SceneConfig scene_config(std::uint64_t seed) {
    SceneConfig c;
    c.dims = {30, 28, 40};
    c.ms_bands = 5;
    c.z_ranks = {4, 4, 3};
    c.psi_ranks = {2, 2, 2};
    c.seed = seed;
    return c;
}

CtStarConfig matching(const SceneConfig& c) { return {c.z_ranks, c.psi_ranks}; }

}  // namespace

TEST(CtStar, ExactRecoveryOnNoiselessScenes) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const SceneConfig c = scene_config(seed);
        const SyntheticScene s = generate_scene(c);
        const FusionResult r = ct_star(s.y_h, s.y_m, s.ops, matching(c));
        EXPECT_LE(rel_diff(r.z_hat, s.z_h), 1e-9) << "seed " << seed;
        EXPECT_LE(rel_diff(r.p3_psi_hat, apply_spectral(s.psi, s.ops)), 1e-9) << "seed " << seed;
        EXPECT_TRUE(r.diagnostics.warnings.empty());
    }
}

TEST(CtStar, VariabilityFreeScene) {
    SceneConfig c = scene_config(3);
    c.psi_scale = 0.0;
    const SyntheticScene s = generate_scene(c);
    const FusionResult r = ct_star(s.y_h, s.y_m, s.ops, {c.z_ranks, {1, 1, 1}});
    EXPECT_LE(rel_diff(r.z_hat, s.z_h), 1e-9);
    EXPECT_LE(r.p3_psi_hat.norm(), 1e-9 * s.y_m.norm());
}

TEST(CtStar, DoesNotUseSpectralResponseForTheImage) {
    const SceneConfig c = scene_config(4);
    const SyntheticScene s = generate_scene(c);
    DegradationOperators other = s.ops;
    std::mt19937_64 g(4);
    other.p3 = random_matrix(g, other.p3.rows(), other.p3.cols(), 0.0, 1.0);
    const FusionResult a = ct_star(s.y_h, s.y_m, s.ops, matching(c));
    const FusionResult b = ct_star(s.y_h, s.y_m, other, matching(c));
    EXPECT_EQ(a.z_hat, b.z_hat);
    EXPECT_EQ(a.z_factors.core, b.z_factors.core);
}

TEST(CtStar, DegradedVariabilityIsResidualOfMsImage) {
    const SceneConfig c = scene_config(5);
    const SyntheticScene s = generate_scene(c);
    std::mt19937_64 g(5);
    const Tensor3 arbitrary = random_tensor(g, s.z_h.dims());
    const Tensor3 p = recover_degraded_psi(s.y_m, arbitrary, s.ops);
    EXPECT_EQ(p, s.y_m - apply_spectral(arbitrary, s.ops));
    EXPECT_THROW(recover_degraded_psi(s.y_m, s.y_h, s.ops), ContractError);
}

TEST(CtStar, RejectsRanksBeyondTheConditions) {
    const SceneConfig c = scene_config(6);
    const SyntheticScene s = generate_scene(c);
    // N1 = 15: 12 + 4 > 15
    EXPECT_THROW(ct_star(s.y_h, s.y_m, s.ops, {{12, 4, 3}, {4, 2, 2}}), ConfigError);
    // K_Z,3 > K_Z,1 K_Z,2
    EXPECT_THROW(ct_star(s.y_h, s.y_m, s.ops, {{2, 2, 5}, {2, 2, 2}}), ConfigError);
    EXPECT_THROW(ct_star(s.y_h, s.y_m, s.ops, {{0, 2, 2}, {2, 2, 2}}), ConfigError);
    EXPECT_THROW(ct_star(s.y_m, s.y_h, s.ops, matching(c)), ContractError);
}

TEST(CtStar, ReportsNearSingularMixing) {
    SceneConfig c = scene_config(7);
    c.dims = {12, 12, 10};
    c.z_ranks = {4, 4, 2};
    c.psi_ranks = {2, 2, 1};
    c.ms_bands = 5;
    SyntheticScene s = generate_scene(c);
    DegradationOperators ops = s.ops;
    ops.p1.row(0).setZero();
    const Tensor3 y_h = apply_spatial(s.z_h, ops);
    const FusionResult r = ct_star(y_h, s.y_m, ops, matching(c));
    EXPECT_EQ(r.diagnostics.mixed_subspace_dims[0], 6);
    EXPECT_GT(r.diagnostics.mixing_condition[0], 1e12);
    EXPECT_FALSE(r.diagnostics.warnings.empty());
}

TEST(CtStar, NoisyRunStaysFiniteAndCloserWithHigherSnr) {
    SceneConfig lo = scene_config(8), hi = scene_config(8);
    lo.snr_h_db = lo.snr_m_db = 10.0;
    hi.snr_h_db = hi.snr_m_db = 40.0;
    const SyntheticScene a = generate_scene(lo), b = generate_scene(hi);
    const double ea = rel_diff(ct_star(a.y_h, a.y_m, a.ops, matching(lo)).z_hat, a.z_h);
    const double eb = rel_diff(ct_star(b.y_h, b.y_m, b.ops, matching(hi)).z_hat, b.z_h);
    EXPECT_TRUE(std::isfinite(ea));
    EXPECT_LT(eb, ea);
}
