#pragma once

#include "hsfusion/tensor.hpp"

#include <array>

namespace hsfusion {

// Moore-Penrose pseudoinverse via SVD; singular values at or below
// rel_tol * sigma_1 are treated as zero. `rank` receives the retained count.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-10, Index* rank = nullptr);

// 2-norm condition number sigma_max / sigma_min over min(rows, cols) values.
double condition_number(const Matrix& m);

struct KronLstsqResult {
    Vector x;
    double condition = 1.0;      // product of the factor condition numbers
    bool rank_deficient = false;  // some factor lost column rank
};

// Minimizes || (b3 kron b2 kron b1) x - y ||_2 without forming the Kronecker
// product: x = vec(Y x1 b1^+ x2 b2^+ x3 b3^+).
KronLstsqResult kron_lstsq(const Matrix& b3, const Matrix& b2, const Matrix& b1, const Vector& y);

// Solves a X + X b = c for symmetric positive semidefinite a and b by
// diagonalizing both sides (the symmetric case of Bartels-Stewart).
// Throws SolvabilityError if some eigenvalue sum vanishes on a component of c.
Matrix sylvester_solve(const Matrix& a, const Matrix& b, const Matrix& c);

enum class TwoSidedRoute { reduce_first, reduce_second, dense };

struct TwoSidedReport {
    TwoSidedRoute route = TwoSidedRoute::reduce_first;
    double residual = 0.0;  // ||lambda s1 M + s2 M s3 - r||_F / ||r||_F
};

// Solves lambda s1 M + s2 M s3 = r for symmetric PSD s1, s2 (K x K) and
// s3 (n x n). Reduces against the better conditioned of s1, s2 by a
// generalized symmetric eigendecomposition; falls back to the dense
// vectorized system when neither reduction is usable.
Matrix solve_two_sided(double lambda, const Matrix& s1, const Matrix& s2, const Matrix& s3, const Matrix& r,
                       TwoSidedReport* report = nullptr);

// Normal equations of a factor subproblem:
//   lambda X1^T X1 M + X2^T X2 M P^T P = rhs,  M = B^T.
Matrix factor_update_sylvester(double lambda, const Matrix& x1, const Matrix& x2, const Matrix& p,
                               const Matrix& rhs, TwoSidedReport* report = nullptr);

struct CoreUpdateResult {
    Tensor3 core;
    bool ridge_applied = false;
    double residual = 0.0;  // relative residual of the normal equations
};

// Minimizes ||vec(y_h) - X2 g||^2 + lambda ||vec(y_m_adj) - X1 g||^2 with
//   X1 = (a[2] kron a[1] kron a[0]),  X2 = (c[2] kron c[1] kron c[0]).
// Gram matrices are Kronecker products of the small per-mode Grams.
CoreUpdateResult core_update_normal_eq(double lambda, const std::array<Matrix, 3>& a,
                                       const std::array<Matrix, 3>& c, const Tensor3& y_m_adj,
                                       const Tensor3& y_h);

}  // namespace hsfusion
