#include "hsfusion/solvers.hpp"

#include "hsfusion/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hsfusion {

namespace {

constexpr double kReductionMaxCondition = 1e10;
constexpr double kTwoSidedTolerance = 1e-8;
constexpr double kSylvesterTolerance = 1e-9;

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_square_symmetric(const Matrix& m, const char* name) {
    if (m.rows() != m.cols()) throw ContractError(std::string(name) + " must be square, got " + shape(m));
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw ContractError(std::string(name) + " must be symmetric");
    }
}

double relative_residual(const Matrix& res, const Matrix& rhs) {
    const double rn = rhs.norm();
    return rn > 0.0 ? res.norm() / rn : res.norm();
}

double spd_condition(const Matrix& s) {
    if (s.rows() == 0) return 1.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

Matrix two_sided_apply(double lambda, const Matrix& s1, const Matrix& s2, const Matrix& s3, const Matrix& m) {
    return lambda * (s1 * m) + s2 * m * s3;
}

// lambda s1 M + s2 M s3 = r after reducing against s_ref (SPD):
// s_other V = s_ref V D, V^T s_ref V = I, s3 = U E U^T.
// `ref_is_first` selects which of s1, s2 is the reference.
bool reduced_solve(double lambda, const Matrix& s1, const Matrix& s2, const Matrix& s3, const Matrix& r,
                   bool ref_is_first, Matrix& out) {
    const Matrix& ref = ref_is_first ? s1 : s2;
    const Matrix& other = ref_is_first ? s2 : s1;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(other, ref, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (ges.info() != Eigen::Success) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es3(s3);
    if (es3.info() != Eigen::Success) return false;
    const Matrix& v = ges.eigenvectors();
    const Vector& d = ges.eigenvalues();
    const Matrix& u = es3.eigenvectors();
    const Vector& e = es3.eigenvalues();

    Matrix t = v.transpose() * r * u;
    double scale = 0.0;
    for (Index i = 0; i < d.size(); ++i) {
        for (Index j = 0; j < e.size(); ++j) {
            // ref first:  lambda N + D N E;   ref second: lambda D N + N E
            const double den = ref_is_first ? lambda + d[i] * e[j] : lambda * d[i] + e[j];
            scale = std::max(scale, std::abs(den));
        }
    }
    for (Index i = 0; i < d.size(); ++i) {
        for (Index j = 0; j < e.size(); ++j) {
            const double den = ref_is_first ? lambda + d[i] * e[j] : lambda * d[i] + e[j];
            if (!(std::abs(den) > 1e-14 * scale)) return false;
            t(i, j) /= den;
        }
    }
    out = v * t * u.transpose();
    return out.allFinite();
}

Matrix dense_two_sided(double lambda, const Matrix& s1, const Matrix& s2, const Matrix& s3, const Matrix& r) {
    const Index k = s1.rows();
    const Index n = s3.rows();
    Matrix op = lambda * kron(Matrix::Identity(n, n), s1) + kron(s3.transpose(), s2);
    Vector rhs = Eigen::Map<const Vector>(r.data(), r.size());
    Vector x = op.completeOrthogonalDecomposition().solve(rhs);
    return Eigen::Map<const Matrix>(x.data(), k, n);
}

}  // namespace

Matrix pseudo_inverse(const Matrix& m, double rel_tol, Index* rank) {
    if (m.size() == 0) {
        if (rank) *rank = 0;
        return Matrix::Zero(m.cols(), m.rows());
    }
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cut = s.size() > 0 ? rel_tol * s[0] : 0.0;
    Index r = 0;
    Vector inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s[i] > cut && s[i] > 0.0) {
            inv[i] = 1.0 / s[i];
            ++r;
        }
    }
    if (rank) *rank = r;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double condition_number(const Matrix& m) {
    if (m.size() == 0) return 1.0;
    Eigen::BDCSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    const double lo = s[s.size() - 1];
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return s[0] / lo;
}

KronLstsqResult kron_lstsq(const Matrix& b3, const Matrix& b2, const Matrix& b1, const Vector& y) {
    const Dims rows{b1.rows(), b2.rows(), b3.rows()};
    if (rows[0] * rows[1] * rows[2] != y.size()) {
        throw ContractError("kron_lstsq: design has " + std::to_string(rows[0] * rows[1] * rows[2]) +
                            " rows, rhs has " + std::to_string(y.size()));
    }
    KronLstsqResult res;
    std::array<Matrix, 3> pinv;
    const std::array<const Matrix*, 3> factors{&b1, &b2, &b3};
    for (std::size_t i = 0; i < 3; ++i) {
        Index rank = 0;
        pinv[i] = pseudo_inverse(*factors[i], 1e-10, &rank);
        if (rank < factors[i]->cols()) res.rank_deficient = true;
        res.condition *= condition_number(*factors[i]);
    }
    Tensor3 yt(rows, y);
    res.x = multilinear_product(yt, pinv[0], pinv[1], pinv[2]).vec();
    return res;
}

Matrix sylvester_solve(const Matrix& a, const Matrix& b, const Matrix& c) {
    require_square_symmetric(a, "sylvester_solve: a");
    require_square_symmetric(b, "sylvester_solve: b");
    if (c.rows() != a.rows() || c.cols() != b.rows()) {
        throw ContractError("sylvester_solve: c is " + shape(c) + ", expected " + std::to_string(a.rows()) + "x" +
                            std::to_string(b.rows()));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> ea(a);
    Eigen::SelfAdjointEigenSolver<Matrix> eb(b);
    const Vector& la = ea.eigenvalues();
    const Vector& lb = eb.eigenvalues();
    Matrix t = ea.eigenvectors().transpose() * c * eb.eigenvectors();

    const double scale = std::max({1e-300, la.cwiseAbs().maxCoeff(), lb.cwiseAbs().maxCoeff()});
    const double cnorm = c.norm();
    double min_sum = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < la.size(); ++i) {
        for (Index j = 0; j < lb.size(); ++j) {
            const double den = la[i] + lb[j];
            min_sum = std::min(min_sum, std::abs(den));
            if (std::abs(den) <= 1e-13 * scale) {
                if (std::abs(t(i, j)) > 1e-12 * std::max(cnorm, 1e-300)) {
                    throw SolvabilityError("sylvester_solve: singular operator, eigenvalue sum " +
                                               std::to_string(den) + " on a nonzero component",
                                           std::abs(den));
                }
                t(i, j) = 0.0;
            } else {
                t(i, j) /= den;
            }
        }
    }
    Matrix x = ea.eigenvectors() * t * eb.eigenvectors().transpose();
    const double res = relative_residual(a * x + x * b - c, c);
    if (!(res <= kSylvesterTolerance)) {
        throw SolverError("sylvester_solve: residual " + std::to_string(res) + " above tolerance", res);
    }
    return x;
}

Matrix solve_two_sided(double lambda, const Matrix& s1, const Matrix& s2, const Matrix& s3, const Matrix& r,
                       TwoSidedReport* report) {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ContractError("solve_two_sided: lambda must be >= 0");
    require_square_symmetric(s1, "solve_two_sided: s1");
    require_square_symmetric(s2, "solve_two_sided: s2");
    require_square_symmetric(s3, "solve_two_sided: s3");
    if (s1.rows() != s2.rows() || r.rows() != s1.rows() || r.cols() != s3.rows()) {
        throw ContractError("solve_two_sided: shapes s1 " + shape(s1) + ", s2 " + shape(s2) + ", s3 " + shape(s3) +
                            ", r " + shape(r) + " are not conformable");
    }
    TwoSidedReport local;
    TwoSidedReport& rep = report ? *report : local;

    if (r.norm() == 0.0) {
        rep.route = TwoSidedRoute::reduce_first;
        rep.residual = 0.0;
        return Matrix::Zero(r.rows(), r.cols());
    }

    const bool first_ok = lambda > 0.0 && spd_condition(s1) <= kReductionMaxCondition;
    const bool second_ok = spd_condition(s2) <= kReductionMaxCondition;

    double best_res = std::numeric_limits<double>::infinity();
    Matrix best;
    auto attempt = [&](TwoSidedRoute route) {
        Matrix m;
        bool ok = true;
        switch (route) {
            case TwoSidedRoute::reduce_first:
                ok = reduced_solve(lambda, s1, s2, s3, r, true, m);
                break;
            case TwoSidedRoute::reduce_second:
                ok = reduced_solve(lambda, s1, s2, s3, r, false, m);
                break;
            case TwoSidedRoute::dense:
                m = dense_two_sided(lambda, s1, s2, s3, r);
                ok = m.allFinite();
                break;
        }
        if (!ok) return false;
        const double res = relative_residual(two_sided_apply(lambda, s1, s2, s3, m) - r, r);
        if (res < best_res) {
            best_res = res;
            best = std::move(m);
            rep.route = route;
            rep.residual = res;
        }
        return res <= kTwoSidedTolerance;
    };

    if (first_ok && attempt(TwoSidedRoute::reduce_first)) return best;
    if (second_ok && attempt(TwoSidedRoute::reduce_second)) return best;
    if (attempt(TwoSidedRoute::dense)) return best;
    throw SolverError("solve_two_sided: no route reached residual tolerance (best " + std::to_string(best_res) + ")",
                      best_res);
}

Matrix factor_update_sylvester(double lambda, const Matrix& x1, const Matrix& x2, const Matrix& p,
                               const Matrix& rhs, TwoSidedReport* report) {
    if (x1.cols() != x2.cols()) {
        throw ContractError("factor_update_sylvester: x1 " + shape(x1) + " and x2 " + shape(x2) +
                            " differ in column count");
    }
    const Matrix s1 = x1.transpose() * x1;
    const Matrix s2 = x2.transpose() * x2;
    const Matrix s3 = p.transpose() * p;
    return solve_two_sided(lambda, s1, s2, s3, rhs, report);
}

CoreUpdateResult core_update_normal_eq(double lambda, const std::array<Matrix, 3>& a,
                                       const std::array<Matrix, 3>& c, const Tensor3& y_m_adj,
                                       const Tensor3& y_h) {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ContractError("core_update_normal_eq: lambda must be >= 0");
    for (std::size_t i = 0; i < 3; ++i) {
        if (a[i].cols() != c[i].cols()) {
            throw ContractError("core_update_normal_eq: mode " + std::to_string(i + 1) + " factors " +
                                shape(a[i]) + " and " + shape(c[i]) + " differ in column count");
        }
        if (a[i].rows() != y_m_adj.dims()[i] || c[i].rows() != y_h.dims()[i]) {
            throw ContractError("core_update_normal_eq: mode " + std::to_string(i + 1) +
                                " factor rows do not match the data tensors");
        }
    }
    const Dims ranks{a[0].cols(), a[1].cols(), a[2].cols()};

    std::array<Matrix, 3> ga;
    std::array<Matrix, 3> gc;
    for (std::size_t i = 0; i < 3; ++i) {
        ga[i] = a[i].transpose() * a[i];
        gc[i] = c[i].transpose() * c[i];
    }
    Matrix gram = lambda * kron(kron(ga[2], ga[1]), ga[0]) + kron(kron(gc[2], gc[1]), gc[0]);
    Vector rhs = lambda * multilinear_product(y_m_adj, a[0].transpose(), a[1].transpose(), a[2].transpose()).vec() +
                 multilinear_product(y_h, c[0].transpose(), c[1].transpose(), c[2].transpose()).vec();

    CoreUpdateResult out;
    const Index n = gram.rows();
    if (n == 0) {
        out.core = Tensor3(ranks);
        return out;
    }

    Eigen::LLT<Matrix> llt(gram);
    Vector g;
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        g = llt.solve(rhs);
        const double res = relative_residual(gram * g - rhs, rhs);
        ok = g.allFinite() && res <= 1e-9;
    }
    if (!ok) {
        const double ridge = 1e-12 * gram.trace() / static_cast<double>(n);
        Matrix reg = gram;
        reg.diagonal().array() += ridge > 0.0 ? ridge : 1e-300;
        g = reg.ldlt().solve(rhs);
        out.ridge_applied = true;
    }
    out.residual = relative_residual(gram * g - rhs, rhs);
    out.core = Tensor3(ranks, std::move(g));
    return out;
}

}  // namespace hsfusion
