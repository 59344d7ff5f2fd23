#pragma once

#include <cstdint>
#include <vector>

namespace ldm::linalg {

// Row-major GEMM kernels. The _acc variants accumulate into c.
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);   // c = a*b
void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);  // c += a*b^T, a[m,k], b[n,k]
void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);  // c += a^T*b, a[m,k], b[m,n]

/// Partially pivoted LU; throws Error(SingularMatrix) when a pivot magnitude
/// drops below 1e-12.
struct Lu {
    std::vector<double> lu;    // packed L (unit diag) and U
    std::vector<int64_t> piv;  // row permutation
    double sign = 1.0;         // permutation parity * pivot signs
    int64_t n = 0;
};
Lu lu_decompose(const double* a, int64_t n);
/// Solve a*X = B for all nrhs columns of B (row-major [n, nrhs]).
void lu_solve(const Lu& lu, const double* b, double* x, int64_t nrhs);
std::vector<double> invert(const double* a, int64_t n);

/// Cholesky factor L (lower) of an SPD matrix; throws Error(SingularMatrix)
/// if a leading minor is not positive.
std::vector<double> cholesky(const double* a, int64_t n);

/// Eigenvalues (ascending) of a symmetric matrix via cyclic Jacobi; optionally
/// accumulates eigenvectors (columns of v).
std::vector<double> jacobi_eigenvalues(const double* a, int64_t n, std::vector<double>* v = nullptr);

/// Singular values (descending) of a general [m,n] matrix via one-sided Jacobi.
std::vector<double> singular_values(const double* a, int64_t m, int64_t n);

/// log Gamma via Lanczos approximation, |error| < 1e-10 on [0.5, 1e4].
double lanczos_lgamma(double x);
double digamma(double x);

}  // namespace ldm::linalg
