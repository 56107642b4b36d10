#pragma once

#include "hsfusion/degradation.hpp"
#include "hsfusion/fusion_result.hpp"
#include "hsfusion/tensor.hpp"

namespace hsfusion {

struct CtStarConfig {
    Dims z_ranks{10, 10, 5};
    Dims psi_ranks{5, 5, 3};
};

// Throws ConfigError unless K_Z,i + K_Psi,i <= N_i (i = 1, 2),
// K_Z,3 <= min(N1 N2, K_Z,1 K_Z,2) and the truncations fit the data.
void validate(const CtStarConfig& cfg, const Dims& hs_dims, const Dims& ms_dims);

// Algebraic fusion. P3 is used only for the final variability estimate.
FusionResult ct_star(const Tensor3& y_h, const Tensor3& y_m, const DegradationOperators& ops,
                     const CtStarConfig& cfg);

// P3(Psi_hat) = Y_m - Z_hat x3 P3.
Tensor3 recover_degraded_psi(const Tensor3& y_m, const Tensor3& z_hat, const DegradationOperators& ops);

}  // namespace hsfusion
