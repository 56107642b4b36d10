#include "hsfusion/cb_star.hpp"

#include "hsfusion/ct_star.hpp"
#include "hsfusion/errors.hpp"
#include "hsfusion/synthetic.hpp"

#include <chrono>
#include <cmath>

namespace hsfusion {

namespace {

// Cost at or below this fraction of the data energy is round-off.
constexpr double kCostFloor = 1e-26;

std::array<Matrix, 3> hs_side(const TuckerFactors& z, const DegradationOperators& ops) {
    return {ops.p1 * z.factors[0], ops.p2 * z.factors[1], z.factors[2]};
}

std::array<Matrix, 3> ms_side(const TuckerFactors& z, const DegradationOperators& ops) {
    return {z.factors[0], z.factors[1], ops.p3 * z.factors[2]};
}

Tensor3 expand(const Tensor3& core, const std::array<Matrix, 3>& f) {
    return multilinear_product(core, f[0], f[1], f[2]);
}

// data x_j A_j^T for every j != k.
Tensor3 project_others(const Tensor3& data, const std::array<Matrix, 3>& a, Mode k) {
    Tensor3 t = data;
    for (Mode j : kAllModes) {
        if (j != k) t = mode_product(t, a[slot(j)].transpose(), j);
    }
    return t;
}

// G(k) (kron of A_j^T A_j over j != k) G(k)^T.
Matrix weighted_core_gram(const Tensor3& core, const std::array<Matrix, 3>& a, Mode k) {
    Tensor3 t = core;
    for (Mode j : kAllModes) {
        if (j != k) t = mode_product(t, a[slot(j)].transpose() * a[slot(j)], j);
    }
    return matricize(t, k) * matricize(core, k).transpose();
}

double squared_distance(const Tensor3& a, const Tensor3& b) { return (a.vec() - b.vec()).squaredNorm(); }

void check_rank_triplet(const Dims& ranks, const char* what) {
    for (Index r : ranks) {
        if (r < 1) throw ConfigError(std::string("cb-star: ") + what + " ranks must be positive");
    }
}

}  // namespace

std::string to_string(CbStarInit init) {
    switch (init) {
        case CbStarInit::interpolation:
            return "interpolation";
        case CbStarInit::pseudoinverse:
            return "pseudoinverse";
        case CbStarInit::ct_star_warmstart:
            return "ct-star-warmstart";
        case CbStarInit::explicit_factors:
            return "explicit";
    }
    return "unknown";
}

CbStarInit parse_cb_star_init(const std::string& name) {
    if (name == "interpolation") return CbStarInit::interpolation;
    if (name == "pseudoinverse") return CbStarInit::pseudoinverse;
    if (name == "ct-star-warmstart" || name == "ct-star") return CbStarInit::ct_star_warmstart;
    if (name == "explicit") return CbStarInit::explicit_factors;
    throw ConfigError("unknown cb-star initialization '" + name + "'");
}

void validate(const CbStarConfig& cfg, const Dims& hs, const Dims& ms) {
    check_rank_triplet(cfg.z_ranks, "z");
    check_rank_triplet(cfg.psi_ranks, "psi");
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("cb-star: lambda must be >= 0");
    if (cfg.inner_iters < 1) throw ConfigError("cb-star: inner_iters must be >= 1");
    if (!(cfg.tolerance > 0.0)) throw ConfigError("cb-star: tolerance must be > 0");
    if (cfg.max_outer < 1) throw ConfigError("cb-star: max_outer must be >= 1");
    for (std::size_t i = 0; i < 2; ++i) {
        if (cfg.z_ranks[i] > ms[i] || cfg.psi_ranks[i] > ms[i]) {
            throw ConfigError("cb-star: spatial rank exceeds M" + std::to_string(i + 1));
        }
    }
    if (cfg.z_ranks[2] > std::min(hs[2], hs[0] * hs[1])) {
        throw ConfigError("cb-star: K_Z,3 exceeds min(Lh, N1 N2)");
    }
    if (cfg.psi_ranks[2] > ms[2]) throw ConfigError("cb-star: K_Psi,3 exceeds the number of MS bands");
    if (cfg.init == CbStarInit::explicit_factors && !cfg.initial_state) {
        throw ConfigError("cb-star: explicit initialization requires initial factors");
    }
}

CostTerms coupled_cost(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                       const CbStarState& state) {
    CostTerms c;
    c.hs_term = squared_distance(y_h, expand(state.z.core, hs_side(state.z, ops)));
    Tensor3 fit = expand(state.z.core, ms_side(state.z, ops));
    fit += state.psi.reconstruct();
    c.ms_term = squared_distance(y_m, fit);
    return c;
}

double z_subproblem_cost(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                         const TuckerFactors& z, double lambda) {
    return squared_distance(y_h, expand(z.core, hs_side(z, ops))) +
           lambda * squared_distance(y0, expand(z.core, ms_side(z, ops)));
}

Tensor3 z_core_update(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                      const TuckerFactors& z, double lambda, bool* ridge) {
    CoreUpdateResult r = core_update_normal_eq(lambda, ms_side(z, ops), hs_side(z, ops), y0, y_h);
    if (ridge) *ridge = r.ridge_applied;
    return std::move(r.core);
}

Matrix z_factor_update(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                       const TuckerFactors& z, double lambda, Mode k, TwoSidedReport* report) {
    const auto hs = hs_side(z, ops);
    const auto ms = ms_side(z, ops);
    const Matrix gk = matricize(z.core, k);
    const Matrix s_h = weighted_core_gram(z.core, hs, k);
    const Matrix s_m = weighted_core_gram(z.core, ms, k);
    // W D(k)^T for each side, K_k x (rows of that side's mode-k data).
    const Matrix r_h = gk * matricize(project_others(y_h, hs, k), k).transpose();
    const Matrix r_m = gk * matricize(project_others(y0, ms, k), k).transpose();

    Matrix m;
    if (k == Mode::three) {
        const Matrix rhs = r_h + lambda * r_m * ops.p3;
        m = solve_two_sided(1.0, s_h, lambda * s_m, ops.p3.transpose() * ops.p3, rhs, report);
    } else {
        const Matrix& p = k == Mode::one ? ops.p1 : ops.p2;
        const Matrix rhs = lambda * r_m + r_h * p;
        m = solve_two_sided(lambda, s_m, s_h, p.transpose() * p, rhs, report);
    }
    return m.transpose();
}

TuckerFactors solve_z_subproblem(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                                 TuckerFactors state, double lambda, int passes, ZStepReport* report) {
    if (y_h.dims() != ops.hs_dims() || y0.dims() != ops.ms_dims()) {
        throw ContractError("solve_z_subproblem: data dims do not match the operators");
    }
    ZStepReport local;
    ZStepReport& rep = report ? *report : local;
    for (int pass = 0; pass < passes; ++pass) {
        bool ridge = false;
        state.core = z_core_update(y_h, y0, ops, state, lambda, &ridge);
        rep.ridge_applied = rep.ridge_applied || ridge;
        for (Mode k : kAllModes) {
            TwoSidedReport tr;
            try {
                state.factors[slot(k)] = z_factor_update(y_h, y0, ops, state, lambda, k, &tr);
            } catch (const SolverError& e) {
                throw SolverError("Z-subproblem pass " + std::to_string(pass + 1) + ", factor " +
                                      std::to_string(static_cast<int>(k)) + ": " + e.what(),
                                  e.residual());
            }
            rep.worst_residual = std::max(rep.worst_residual, tr.residual);
            orthonormalize_factor(state, k);
        }
    }
    return state;
}

TuckerFactors solve_psi_subproblem(const Tensor3& y_m, const Tensor3& z_term, const Dims& psi_ranks) {
    if (y_m.dims() != z_term.dims()) throw ContractError("solve_psi_subproblem: dims differ");
    return hosvd(y_m - z_term, psi_ranks);
}

TuckerFactors init_interpolation(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                                 const Dims& psi_ranks) {
    const Tensor3 low = degraded_variability(y_h, y_m, ops);
    const Dims ms = ops.ms_dims();
    return hosvd(bicubic_upsample(low, ms[0], ms[1]), psi_ranks);
}

TuckerFactors init_pseudoinverse(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                                 const Dims& psi_ranks) {
    return hosvd(spatial_pinv_apply(degraded_variability(y_h, y_m, ops), ops), psi_ranks);
}

TuckerFactors init_z_factors(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                             const TuckerFactors& psi, const Dims& z_ranks, double lambda) {
    const Tensor3 x = y_m - psi.reconstruct();
    TuckerFactors z;
    z.factors[0] = tsvd(matricize(x, Mode::one), z_ranks[0]);
    z.factors[1] = tsvd(matricize(x, Mode::two), z_ranks[1]);
    z.factors[2] = tsvd(matricize(y_h, Mode::three), z_ranks[2]);
    z.core = Tensor3(z_ranks);
    z.core = z_core_update(y_h, x, ops, z, lambda);
    return z;
}

CbStarState initialize(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                       const CbStarConfig& cfg) {
    CbStarState st;
    switch (cfg.init) {
        case CbStarInit::interpolation:
            st.psi = init_interpolation(y_h, y_m, ops, cfg.psi_ranks);
            st.z = init_z_factors(y_h, y_m, ops, st.psi, cfg.z_ranks, cfg.lambda);
            break;
        case CbStarInit::pseudoinverse:
            st.psi = init_pseudoinverse(y_h, y_m, ops, cfg.psi_ranks);
            st.z = init_z_factors(y_h, y_m, ops, st.psi, cfg.z_ranks, cfg.lambda);
            break;
        case CbStarInit::ct_star_warmstart: {
            FusionResult warm = ct_star(y_h, y_m, ops, CtStarConfig{cfg.z_ranks, cfg.psi_ranks});
            st.z = std::move(warm.z_factors);
            orthonormalize_factors(st.z);
            st.psi = solve_psi_subproblem(y_m, expand(st.z.core, ms_side(st.z, ops)), cfg.psi_ranks);
            break;
        }
        case CbStarInit::explicit_factors:
            st = *cfg.initial_state;
            if (st.z.ranks() != cfg.z_ranks || st.psi.ranks() != cfg.psi_ranks) {
                throw ConfigError("cb-star: explicit factors do not match the configured ranks");
            }
            if (st.z.output_dims() != ops.hr_dims() || st.psi.output_dims() != ops.ms_dims()) {
                throw ConfigError("cb-star: explicit factors do not match the data dims");
            }
            orthonormalize_factors(st.z);
            orthonormalize_factors(st.psi);
            break;
    }
    return st;
}

FusionResult cb_star(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                     const CbStarConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    if (y_h.dims() != ops.hs_dims()) throw ContractError("cb-star: Y_h dims do not match the operators");
    if (y_m.dims() != ops.ms_dims()) throw ContractError("cb-star: Y_m dims do not match the operators");
    validate(cfg, y_h.dims(), y_m.dims());

    CbStarState st = initialize(y_h, y_m, ops, cfg);
    FusionResult out;
    FusionDiagnostics& diag = out.diagnostics;
    diag.algorithm = "cb-star";

    const double floor = kCostFloor * (y_h.squared_norm() + cfg.lambda * y_m.squared_norm());
    CostTerms terms = coupled_cost(y_h, y_m, ops, st);
    out.trace.push_back({0, terms.total(cfg.lambda), terms.hs_term, terms.ms_term, 0.0, false});
    if (!std::isfinite(out.trace.back().cost)) {
        throw DivergenceError("cb-star: initial cost is not finite", out.trace);
    }

    for (int it = 1; it <= cfg.max_outer; ++it) {
        CostRecord rec;
        rec.iteration = it;

        const Tensor3 y0 = y_m - st.psi.reconstruct();
        ZStepReport zrep;
        st.z = solve_z_subproblem(y_h, y0, ops, std::move(st.z), cfg.lambda, cfg.inner_iters, &zrep);
        rec.z_solver_residual = zrep.worst_residual;
        diag.ridge_applied = diag.ridge_applied || zrep.ridge_applied;

        if (cfg.update_psi) {
            const Tensor3 y1 = y_m - expand(st.z.core, ms_side(st.z, ops));
            TuckerFactors fresh = hosvd(y1, cfg.psi_ranks);
            // Re-projecting onto the previous orthonormal factors never
            // increases the Psi residual; keep it when HOSVD is worse.
            TuckerFactors kept = st.psi;
            kept.core = multilinear_product(y1, kept.factors[0].transpose(), kept.factors[1].transpose(),
                                            kept.factors[2].transpose());
            const double fresh_res = squared_distance(y1, fresh.reconstruct());
            const double kept_res = squared_distance(y1, kept.reconstruct());
            if (kept_res < fresh_res) {
                st.psi = std::move(kept);
                rec.psi_kept_previous = true;
            } else {
                st.psi = std::move(fresh);
            }
        }

        terms = coupled_cost(y_h, y_m, ops, st);
        rec.cost = terms.total(cfg.lambda);
        rec.hs_term = terms.hs_term;
        rec.ms_term = terms.ms_term;
        const double prev = out.trace.back().cost;
        out.trace.push_back(rec);
        diag.outer_iterations = it;
        if (!std::isfinite(rec.cost)) {
            throw DivergenceError("cb-star: cost became non-finite at iteration " + std::to_string(it), out.trace);
        }
        const double change = prev > 0.0 ? std::abs(prev - rec.cost) / prev : 0.0;
        if (change < cfg.tolerance || rec.cost <= floor) {
            diag.converged = true;
            break;
        }
    }

    out.z_hat = st.z.reconstruct();
    out.p3_psi_hat = recover_degraded_psi(y_m, out.z_hat, ops);
    const double yh_norm = y_h.norm();
    const double ym_norm = y_m.norm();
    diag.hs_residual = (y_h - apply_spatial(out.z_hat, ops)).norm() / (yh_norm > 0.0 ? yh_norm : 1.0);
    diag.ms_residual = (out.p3_psi_hat - st.psi.reconstruct()).norm() / (ym_norm > 0.0 ? ym_norm : 1.0);
    if (diag.ridge_applied) diag.warnings.push_back("core normal equations needed ridge regularization");
    out.z_factors = std::move(st.z);
    out.psi_factors = std::move(st.psi);
    diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace hsfusion
