#include "ldm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ldm/common.hpp"

namespace ldm::linalg {

void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    std::memset(c, 0, size_t(m * n) * sizeof(double));
#pragma omp parallel for schedule(static) if (m * k * n > 1 << 16)
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    // c[m,n] += a[m,k] * b[n,k]^T : dot products of contiguous rows
#pragma omp parallel for schedule(static) if (m * k * n > 1 << 16)
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    // c[k,n] += a[m,k]^T * b[m,n]
#pragma omp parallel for schedule(static) if (m * k * n > 1 << 16)
    for (int64_t p = 0; p < k; ++p) {
        double* crow = c + p * n;
        for (int64_t i = 0; i < m; ++i) {
            double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Lu lu_decompose(const double* a, int64_t n) {
    Lu out;
    out.n = n;
    out.lu.assign(a, a + n * n);
    out.piv.resize(static_cast<size_t>(n));
    double* m = out.lu.data();
    for (int64_t c = 0; c < n; ++c) {
        int64_t pivot = c;
        double best = std::fabs(m[c * n + c]);
        for (int64_t r = c + 1; r < n; ++r) {
            double v = std::fabs(m[r * n + c]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < 1e-12) fail(ErrorKind::SingularMatrix, "lu: pivot magnitude below 1e-12");
        out.piv[size_t(c)] = pivot;
        if (pivot != c) {
            for (int64_t j = 0; j < n; ++j) std::swap(m[c * n + j], m[pivot * n + j]);
            out.sign = -out.sign;
        }
        double inv_p = 1.0 / m[c * n + c];
        for (int64_t r = c + 1; r < n; ++r) {
            double f = m[r * n + c] * inv_p;
            m[r * n + c] = f;
            if (f == 0.0) continue;
            for (int64_t j = c + 1; j < n; ++j) m[r * n + j] -= f * m[c * n + j];
        }
    }
    for (int64_t i = 0; i < n; ++i)
        if (m[i * n + i] < 0.0) out.sign = -out.sign;
    return out;
}

void lu_solve(const Lu& lu, const double* b, double* x, int64_t nrhs) {
    int64_t n = lu.n;
    std::memcpy(x, b, size_t(n * nrhs) * sizeof(double));
    const double* m = lu.lu.data();
    // factors store row-swapped L, so the permutation applies to the rhs first
    for (int64_t c = 0; c < n; ++c) {
        int64_t p = lu.piv[size_t(c)];
        if (p != c)
            for (int64_t j = 0; j < nrhs; ++j) std::swap(x[c * nrhs + j], x[p * nrhs + j]);
    }
    for (int64_t r = 1; r < n; ++r) {
        for (int64_t c = 0; c < r; ++c) {
            double f = m[r * n + c];
            if (f == 0.0) continue;
            for (int64_t j = 0; j < nrhs; ++j) x[r * nrhs + j] -= f * x[c * nrhs + j];
        }
    }
    for (int64_t r = n - 1; r >= 0; --r) {
        for (int64_t c = r + 1; c < n; ++c) {
            double f = m[r * n + c];
            if (f == 0.0) continue;
            for (int64_t j = 0; j < nrhs; ++j) x[r * nrhs + j] -= f * x[c * nrhs + j];
        }
        double inv_d = 1.0 / m[r * n + r];
        for (int64_t j = 0; j < nrhs; ++j) x[r * nrhs + j] *= inv_d;
    }
}

std::vector<double> invert(const double* a, int64_t n) {
    Lu lu = lu_decompose(a, n);
    std::vector<double> eye(size_t(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) eye[size_t(i * n + i)] = 1.0;
    std::vector<double> inv(static_cast<size_t>(n * n));
    lu_solve(lu, eye.data(), inv.data(), n);
    return inv;
}

std::vector<double> cholesky(const double* a, int64_t n) {
    std::vector<double> l(size_t(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (int64_t p = 0; p < j; ++p) s -= l[size_t(i * n + p)] * l[size_t(j * n + p)];
            if (i == j) {
                if (s <= 0.0) fail(ErrorKind::SingularMatrix, "cholesky: matrix not positive definite");
                l[size_t(i * n + i)] = std::sqrt(s);
            } else {
                l[size_t(i * n + j)] = s / l[size_t(j * n + j)];
            }
        }
    }
    return l;
}

std::vector<double> jacobi_eigenvalues(const double* a, int64_t n, std::vector<double>* vecs) {
    std::vector<double> m(a, a + n * n);
    // symmetrize defensively against roundoff in the caller
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (m[size_t(i * n + j)] + m[size_t(j * n + i)]);
            m[size_t(i * n + j)] = m[size_t(j * n + i)] = v;
        }
    std::vector<double> v;
    if (vecs) {
        v.assign(size_t(n * n), 0.0);
        for (int64_t i = 0; i < n; ++i) v[size_t(i * n + i)] = 1.0;
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) off += m[size_t(i * n + j)] * m[size_t(i * n + j)];
        if (off < 1e-24) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                double apq = m[size_t(p * n + q)];
                if (std::fabs(apq) < 1e-300) continue;
                double app = m[size_t(p * n + p)], aqq = m[size_t(q * n + q)];
                double theta = 0.5 * (aqq - app) / apq;
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int64_t i = 0; i < n; ++i) {
                    double aip = m[size_t(i * n + p)], aiq = m[size_t(i * n + q)];
                    m[size_t(i * n + p)] = c * aip - s * aiq;
                    m[size_t(i * n + q)] = s * aip + c * aiq;
                }
                for (int64_t j = 0; j < n; ++j) {
                    double apj = m[size_t(p * n + j)], aqj = m[size_t(q * n + j)];
                    m[size_t(p * n + j)] = c * apj - s * aqj;
                    m[size_t(q * n + j)] = s * apj + c * aqj;
                }
                if (vecs)
                    for (int64_t i = 0; i < n; ++i) {
                        double vip = v[size_t(i * n + p)], viq = v[size_t(i * n + q)];
                        v[size_t(i * n + p)] = c * vip - s * viq;
                        v[size_t(i * n + q)] = s * vip + c * viq;
                    }
            }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) eig[size_t(i)] = m[size_t(i * n + i)];
    if (vecs) {
        // sort ascending, permuting vector columns alongside
        std::vector<int64_t> order(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) order[size_t(i)] = i;
        std::sort(order.begin(), order.end(), [&](int64_t x, int64_t y) { return eig[size_t(x)] < eig[size_t(y)]; });
        std::vector<double> es(static_cast<size_t>(n));
        std::vector<double> vs(static_cast<size_t>(n * n));
        for (int64_t c = 0; c < n; ++c) {
            es[size_t(c)] = eig[size_t(order[size_t(c)])];
            for (int64_t r = 0; r < n; ++r) vs[size_t(r * n + c)] = v[size_t(r * n + order[size_t(c)])];
        }
        *vecs = std::move(vs);
        return es;
    }
    std::sort(eig.begin(), eig.end());
    return eig;
}

std::vector<double> singular_values(const double* a, int64_t m, int64_t n) {
    // one-sided Jacobi on columns of a copy of A
    std::vector<double> u(a, a + m * n);
    auto col_dot = [&](int64_t i, int64_t j) {
        double s = 0.0;
        for (int64_t r = 0; r < m; ++r) s += u[size_t(r * n + i)] * u[size_t(r * n + j)];
        return s;
    };
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) {
                double aij = col_dot(i, j);
                double aii = col_dot(i, i), ajj = col_dot(j, j);
                off += aij * aij;
                if (std::fabs(aij) < 1e-300) continue;
                double tau = (ajj - aii) / (2.0 * aij);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (int64_t r = 0; r < m; ++r) {
                    double ui = u[size_t(r * n + i)], uj = u[size_t(r * n + j)];
                    u[size_t(r * n + i)] = c * ui - s * uj;
                    u[size_t(r * n + j)] = s * ui + c * uj;
                }
            }
        if (off < 1e-26) break;
    }
    std::vector<double> sv(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) sv[size_t(i)] = std::sqrt(std::max(0.0, col_dot(i, i)));
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

double lanczos_lgamma(double x) {
    // g = 7, 9-term coefficients
    static const double coef[9] = {0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
                                   771.32342877765313,   -176.61502916214059,   12.507343278686905,
                                   -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    if (x < 0.5) {
        // reflection
        return std::log(M_PI / std::fabs(std::sin(M_PI * x))) - lanczos_lgamma(1.0 - x);
    }
    double z = x - 1.0;
    double acc = coef[0];
    for (int i = 1; i < 9; ++i) acc += coef[i] / (z + i);
    double t = z + 7.5;
    return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(acc);
}

double digamma(double x) {
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv;
    result -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0))));
    return result;
}

}  // namespace ldm::linalg
