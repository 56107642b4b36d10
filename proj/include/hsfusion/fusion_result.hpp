#pragma once

#include "hsfusion/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hsfusion {

// One outer iteration of the optimization-based method (iteration 0 is the
// initialization).
struct CostRecord {
    int iteration = 0;
    double cost = 0.0;        // hs_term + lambda * ms_term
    double hs_term = 0.0;     // ||Y_h - [[G_Z; P1 B1, P2 B2, B3]]||^2
    double ms_term = 0.0;     // ||Y_m - Z term - Psi term||^2
    double z_solver_residual = 0.0;  // worst relative residual of the Z-step solves
    bool psi_kept_previous = false;  // Psi step kept the re-projected previous factors
};

using CostTrace = std::vector<CostRecord>;

struct FusionDiagnostics {
    std::string algorithm;
    // CT-STAR: K_Z,i + K_Psi,i and cond(P_i C_m,i) for the two spatial modes.
    std::array<Index, 2> mixed_subspace_dims{0, 0};
    std::array<double, 2> mixing_condition{0.0, 0.0};
    double core_condition = 0.0;
    bool core_rank_deficient = false;
    bool ridge_applied = false;
    double hs_residual = 0.0;  // ||Y_h - P12(Z_hat)||_F / ||Y_h||_F
    double ms_residual = 0.0;  // ||Y_m - P3(Z_hat) - P3(Psi_hat)||_F / ||Y_m||_F (CB-STAR)
    int outer_iterations = 0;
    bool converged = false;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

struct FusionResult {
    Tensor3 z_hat;
    Tensor3 p3_psi_hat;
    TuckerFactors z_factors;
    // Variability model with the third factor stored as P3 B_Psi,3 (CB-STAR only).
    std::optional<TuckerFactors> psi_factors;
    CostTrace trace;
    FusionDiagnostics diagnostics;
};

}  // namespace hsfusion
