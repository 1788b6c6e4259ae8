#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stackemu/errors.hpp"

namespace stackemu {

/// Compressed sparse row matrix.
struct CsrMatrix {
    std::size_t rows = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> cols;
    std::vector<double> vals;

    double at(std::size_t i, std::size_t j) const {
        for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (cols[k] == j)
                return vals[k];
        return 0.0;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            d[i] = at(i, i);
        return d;
    }

    void multiply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
                s += vals[k] * x[cols[k]];
            y[i] = s;
        }
    }

    /// Copy with `extra[i]` added to each diagonal entry (entry must exist).
    CsrMatrix plus_diagonal(std::span<const double> extra) const {
        CsrMatrix m = *this;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
                if (m.cols[k] == i)
                    m.vals[k] += extra[i];
        return m;
    }
};

/// Accumulates (row, col, value) contributions; duplicates are summed.
class CsrBuilder {
  public:
    explicit CsrBuilder(std::size_t n) : rows_(n) {}

    void add(std::size_t i, std::size_t j, double v) { rows_[i].emplace_back(j, v); }

    /// Symmetric two-terminal conductance g between nodes i and j.
    void add_conductance(std::size_t i, std::size_t j, double g) {
        add(i, i, g);
        add(j, j, g);
        add(i, j, -g);
        add(j, i, -g);
    }

    CsrMatrix build() {
        CsrMatrix m;
        m.rows = rows_.size();
        m.row_ptr.assign(1, 0);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            auto& r = rows_[i];
            r.emplace_back(i, 0.0);  // every row keeps a diagonal slot
            std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t k = 0; k < r.size();) {
                std::size_t j = r[k].first;
                double s = 0.0;
                for (; k < r.size() && r[k].first == j; ++k)
                    s += r[k].second;
                m.cols.push_back(j);
                m.vals.push_back(s);
            }
            m.row_ptr.push_back(m.cols.size());
        }
        return m;
    }

  private:
    std::vector<std::vector<std::pair<std::size_t, double>>> rows_;
};

enum class SolveMethod { CG, SOR };

struct SolveOptions {
    SolveMethod method = SolveMethod::CG;
    double tolerance = 1e-8;   // relative residual ||Ax - b|| / ||b||
    int max_iterations = 0;    // 0 picks a size-based default
    double sor_omega = 1.8;
    double dt = 0.0;           // transient step, s
    bool deterministic = true;
};

inline void check_options(const SolveOptions& o) {
    if (!(o.tolerance > 0 && o.tolerance < 1))
        throw InvalidArgument("solver tolerance must lie in (0, 1)");
    if (!(o.sor_omega > 0 && o.sor_omega < 2))
        throw InvalidArgument("SOR omega must lie in (0, 2)");
    if (o.max_iterations < 0)
        throw InvalidArgument("max_iterations must be non-negative");
}

inline int default_max_iterations(std::size_t n) {
    const double guess = 50.0 * std::cbrt(static_cast<double>(n)) * 100.0;
    return static_cast<int>(std::min(guess, 2.0e6));
}

struct SolveStats {
    int iterations = 0;
    double relative_residual = 0.0;
};

namespace detail {

// Fixed-order reductions keep results bit-identical run to run.
inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double true_residual(const CsrMatrix& A, std::span<const double> x, std::span<const double> b,
                            std::vector<double>& r) {
    A.multiply(x, r);
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = b[i] - r[i];
    return norm(r);
}

inline void check_finite(double v, const char* where) {
    if (!std::isfinite(v))
        throw NumericalFailure(std::string("non-finite value in ") + where);
}

} // namespace detail

/// Jacobi-preconditioned conjugate gradients for SPD systems. `x` holds the
/// initial guess on entry.
inline SolveStats solve_cg(const CsrMatrix& A, std::span<const double> b, std::span<double> x,
                           const SolveOptions& opt) {
    const std::size_t n = A.rows;
    const int max_it = opt.max_iterations > 0 ? opt.max_iterations : default_max_iterations(n);
    const double bnorm = detail::norm(b);
    detail::check_finite(bnorm, "right-hand side");
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return {0, 0.0};
    }

    std::vector<double> inv_diag = A.diagonal();
    for (auto& d : inv_diag) {
        if (!(d > 0))
            throw NumericalFailure("matrix diagonal is not positive; operator is not SPD");
        d = 1.0 / d;
    }

    std::vector<double> r(n), z(n), p(n), q(n);
    double rnorm = detail::true_residual(A, x, b, r);
    const double target = opt.tolerance * bnorm;
    int it = 0;
    while (true) {
        if (rnorm <= target) {
            // Recursive residual can drift; confirm against the real one.
            rnorm = detail::true_residual(A, x, b, r);
            if (rnorm <= target)
                break;
        }
        if (it >= max_it)
            throw ConvergenceFailure("CG did not converge in " + std::to_string(max_it) + " iterations",
                                     rnorm / bnorm, it);
        for (std::size_t i = 0; i < n; ++i)
            z[i] = inv_diag[i] * r[i];
        p = z;
        double rz = detail::dot(r, z);
        while (rnorm > target && it < max_it) {
            A.multiply(p, q);
            const double pq = detail::dot(p, q);
            detail::check_finite(pq, "CG");
            if (pq <= 0)
                throw NumericalFailure("CG breakdown: operator is not positive definite");
            const double alpha = rz / pq;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            rnorm = detail::norm(r);
            detail::check_finite(rnorm, "CG residual");
            for (std::size_t i = 0; i < n; ++i)
                z[i] = inv_diag[i] * r[i];
            const double rz_new = detail::dot(r, z);
            const double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t i = 0; i < n; ++i)
                p[i] = z[i] + beta * p[i];
            ++it;
        }
    }
    return {it, rnorm / bnorm};
}

/// Successive over-relaxation in natural row order.
inline SolveStats solve_sor(const CsrMatrix& A, std::span<const double> b, std::span<double> x,
                            const SolveOptions& opt) {
    const std::size_t n = A.rows;
    const int max_it = opt.max_iterations > 0 ? opt.max_iterations : default_max_iterations(n);
    const double bnorm = detail::norm(b);
    detail::check_finite(bnorm, "right-hand side");
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return {0, 0.0};
    }
    const auto diag = A.diagonal();
    for (double d : diag)
        if (!(d > 0))
            throw NumericalFailure("matrix diagonal is not positive");

    std::vector<double> r(n);
    const double target = opt.tolerance * bnorm;
    double rnorm = detail::true_residual(A, x, b, r);
    int it = 0;
    while (rnorm > target) {
        if (it >= max_it)
            throw ConvergenceFailure("SOR did not converge in " + std::to_string(max_it) + " sweeps",
                                     rnorm / bnorm, it);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
                if (A.cols[k] != i)
                    s -= A.vals[k] * x[A.cols[k]];
            x[i] += opt.sor_omega * (s / diag[i] - x[i]);
        }
        ++it;
        // Residual checks cost a matvec; do them every few sweeps.
        if (it % 8 == 0 || it >= max_it) {
            rnorm = detail::true_residual(A, x, b, r);
            detail::check_finite(rnorm, "SOR residual");
        }
    }
    return {it, rnorm / bnorm};
}

inline SolveStats solve_linear(const CsrMatrix& A, std::span<const double> b, std::span<double> x,
                               const SolveOptions& opt) {
    check_options(opt);
    if (b.size() != A.rows || x.size() != A.rows)
        throw InvalidArgument("linear solve: vector length does not match the operator");
    return opt.method == SolveMethod::CG ? solve_cg(A, b, x, opt) : solve_sor(A, b, x, opt);
}

} // namespace stackemu
