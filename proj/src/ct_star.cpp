#include "hsfusion/ct_star.hpp"

#include "hsfusion/errors.hpp"
#include "hsfusion/solvers.hpp"

#include <chrono>
#include <string>

namespace hsfusion {

namespace {

constexpr double kDegenerateCondition = 1e12;

std::string idx(std::size_t i) { return std::to_string(i + 1); }

}  // namespace

void validate(const CtStarConfig& cfg, const Dims& hs, const Dims& ms) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (cfg.z_ranks[i] < 1) throw ConfigError("ct-star: z rank " + idx(i) + " must be positive");
        if (cfg.psi_ranks[i] < 0) throw ConfigError("ct-star: psi rank " + idx(i) + " must be >= 0");
    }
    for (std::size_t i = 0; i < 2; ++i) {
        if (cfg.z_ranks[i] + cfg.psi_ranks[i] > hs[i]) {
            throw ConfigError("ct-star: K_Z," + idx(i) + " + K_Psi," + idx(i) + " = " +
                              std::to_string(cfg.z_ranks[i] + cfg.psi_ranks[i]) + " exceeds N" + idx(i) + " = " +
                              std::to_string(hs[i]));
        }
        if (cfg.z_ranks[i] + cfg.psi_ranks[i] > ms[i]) {
            throw ConfigError("ct-star: K_Z," + idx(i) + " + K_Psi," + idx(i) + " exceeds M" + idx(i));
        }
    }
    if (cfg.z_ranks[2] > hs[2]) throw ConfigError("ct-star: K_Z,3 exceeds the number of HS bands");
    if (cfg.z_ranks[2] > std::min(hs[0] * hs[1], cfg.z_ranks[0] * cfg.z_ranks[1])) {
        throw ConfigError("ct-star: K_Z,3 must not exceed min(N1 N2, K_Z,1 K_Z,2)");
    }
}

FusionResult ct_star(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                     const CtStarConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    if (y_h.dims() != ops.hs_dims()) throw ContractError("ct-star: Y_h dims do not match the operators");
    if (y_m.dims() != ops.ms_dims()) throw ContractError("ct-star: Y_m dims do not match the operators");
    validate(cfg, y_h.dims(), y_m.dims());

    FusionResult out;
    FusionDiagnostics& diag = out.diagnostics;
    diag.algorithm = "ct-star";

    const Matrix c_h3 = tsvd(matricize(y_h, Mode::three), cfg.z_ranks[2]);

    std::array<Matrix, 2> c_tilde;
    const std::array<const Matrix*, 2> spatial{&ops.p1, &ops.p2};
    for (std::size_t i = 0; i < 2; ++i) {
        const Mode k = kAllModes[i];
        const Index mixed = cfg.z_ranks[i] + cfg.psi_ranks[i];
        const Matrix c_m = tsvd(matricize(y_m, k), mixed);
        const Matrix degraded = *spatial[i] * c_m;
        const double cond = condition_number(degraded);
        diag.mixed_subspace_dims[i] = mixed;
        diag.mixing_condition[i] = cond;
        if (!(cond <= kDegenerateCondition)) {
            diag.warnings.push_back("P" + idx(i) + " C_m," + idx(i) + " is near singular (condition " +
                                    std::to_string(cond) + ")");
        }
        const Matrix q = pseudo_inverse(degraded, 1e-10) * tsvd(matricize(y_h, k), cfg.z_ranks[i]);
        c_tilde[i] = c_m * q;
    }

    const KronLstsqResult core = kron_lstsq(c_h3, ops.p2 * c_tilde[1], ops.p1 * c_tilde[0], y_h.vec());
    diag.core_condition = core.condition;
    diag.core_rank_deficient = core.rank_deficient;
    if (core.rank_deficient) diag.warnings.push_back("core system is rank deficient");

    out.z_factors.core = Tensor3(cfg.z_ranks, core.x);
    out.z_factors.factors = {c_tilde[0], c_tilde[1], c_h3};
    out.z_hat = out.z_factors.reconstruct();
    out.p3_psi_hat = recover_degraded_psi(y_m, out.z_hat, ops);

    const double yh_norm = y_h.norm();
    diag.hs_residual = (y_h - apply_spatial(out.z_hat, ops)).norm() / (yh_norm > 0.0 ? yh_norm : 1.0);
    diag.converged = true;
    diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

Tensor3 recover_degraded_psi(const Tensor3& y_m, const Tensor3& z_hat, const DegradationOperators& ops) {
    if (z_hat.dims() != ops.hr_dims() || y_m.dims() != ops.ms_dims()) {
        throw ContractError("recover_degraded_psi: dims do not match the operators");
    }
    return y_m - apply_spectral(z_hat, ops);
}

}  // namespace hsfusion
