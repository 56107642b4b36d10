#pragma once

#include "hsfusion/degradation.hpp"
#include "hsfusion/errors.hpp"
#include "hsfusion/fusion_result.hpp"
#include "hsfusion/solvers.hpp"
#include "hsfusion/tensor.hpp"

#include <optional>
#include <string>

namespace hsfusion {

enum class CbStarInit { interpolation, pseudoinverse, ct_star_warmstart, explicit_factors };

std::string to_string(CbStarInit init);
CbStarInit parse_cb_star_init(const std::string& name);

// Current estimate of both Tucker blocks. psi.factors[2] holds P3 B_Psi,3.
struct CbStarState {
    TuckerFactors z;
    TuckerFactors psi;
};

struct CbStarConfig {
    Dims z_ranks{10, 10, 5};
    Dims psi_ranks{5, 5, 3};
    double lambda = 1.0;
    int inner_iters = 1;      // F
    double tolerance = 1e-3;  // relative change of the cost
    int max_outer = 50;
    CbStarInit init = CbStarInit::interpolation;
    // Used when init == explicit_factors.
    std::optional<CbStarState> initial_state;
    // When false the variability block stays at its initial value.
    bool update_psi = true;
};

void validate(const CbStarConfig& cfg, const Dims& hs_dims, const Dims& ms_dims);

// The optimizer reported a non-finite cost.
class DivergenceError : public SolverError {
public:
    DivergenceError(const std::string& what, CostTrace trace)
        : SolverError(what), trace_(std::move(trace)) {}

    const CostTrace& trace() const noexcept { return trace_; }

private:
    CostTrace trace_;
};

struct CostTerms {
    double hs_term = 0.0;
    double ms_term = 0.0;
    double total(double lambda) const { return hs_term + lambda * ms_term; }
};

// Both summands of the coupled cost for a given state.
CostTerms coupled_cost(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                       const CbStarState& state);

// Variability-free coupled Tucker objective
//   ||Y_h - [[G; P1 B1, P2 B2, B3]]||^2 + lambda ||Y_0 - [[G; B1, B2, P3 B3]]||^2.
double z_subproblem_cost(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                         const TuckerFactors& z, double lambda);

struct ZStepReport {
    double worst_residual = 0.0;
    bool ridge_applied = false;
};

// `passes` rounds of block coordinate descent: core, then B1, B2, B3. Each
// factor is replaced by its orthonormal QR factor with R absorbed into the core.
TuckerFactors solve_z_subproblem(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                                 TuckerFactors state, double lambda, int passes, ZStepReport* report = nullptr);

// Exact minimizer of the core given the factors.
Tensor3 z_core_update(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                      const TuckerFactors& z, double lambda, bool* ridge = nullptr);

// Exact minimizer of factor k given the core and the other factors (before
// any orthonormalization).
Matrix z_factor_update(const Tensor3& y_h, const Tensor3& y0, const DegradationOperators& ops,
                       const TuckerFactors& z, double lambda, Mode k, TwoSidedReport* report = nullptr);

// Truncated HOSVD of y_m - z_term; the third factor is P3 B_Psi,3.
TuckerFactors solve_psi_subproblem(const Tensor3& y_m, const Tensor3& z_term, const Dims& psi_ranks);

// Initial P3(Psi) block from bicubic upscaling of P12(Y_m) - P3(Y_h).
TuckerFactors init_interpolation(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                                 const Dims& psi_ranks);

// Initial P3(Psi) block from the spatial pseudoinverse of P12(Y_m) - P3(Y_h).
TuckerFactors init_pseudoinverse(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                                 const Dims& psi_ranks);

// B_Z,3 = tsvd(Y_h(3)), B_Z,i = tsvd(X(i)) with X = Y_m - psi term, and the
// core from the normal equations.
TuckerFactors init_z_factors(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                             const TuckerFactors& psi, const Dims& z_ranks, double lambda);

CbStarState initialize(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                       const CbStarConfig& cfg);

// Block coordinate descent on the coupled cost. The returned trace starts
// with the cost of the initialization.
FusionResult cb_star(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                     const CbStarConfig& cfg);

}  // namespace hsfusion
