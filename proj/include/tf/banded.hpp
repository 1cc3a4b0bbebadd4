#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tf/mesh.hpp"

namespace tf {

/// Banded matrix with kl sub- and ku super-diagonals, LAPACK-style band
/// storage with extra kl rows for partial-pivoting fill.
class BandedMatrix {
public:
    BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku)
        : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1),
          ab_(ldab_ * n, 0.0), ipiv_(n, 0) {}

    std::size_t size() const { return n_; }

    double& at(std::size_t i, std::size_t j) {
        // stored at ab[kl + ku + i - j, j]
        return ab_[(kl_ + ku_ + i - j) + j * ldab_];
    }

    void add(std::size_t i, std::size_t j, double v) { at(i, j) += v; }

    bool in_band(std::size_t i, std::size_t j) const {
        return (j <= i + ku_) && (i <= j + kl_);
    }

    /// LU factorization with partial pivoting (dgbtrf-style).
    /// Returns false if a zero pivot is met.
    bool factor() {
        const long n = static_cast<long>(n_);
        const long kl = static_cast<long>(kl_);
        const long ku = static_cast<long>(ku_);
        const long kv = kl + ku; // rows of fill above the diagonal band
        auto A = [&](long i, long j) -> double& {
            return ab_[static_cast<std::size_t>((kv + i - j) + j * static_cast<long>(ldab_))];
        };
        for (long j = 0; j < n; ++j) {
            long i_max = std::min(j + kl, n - 1);
            // pivot search in column j
            long piv = j;
            double pmax = std::abs(A(j, j));
            for (long i = j + 1; i <= i_max; ++i) {
                double v = std::abs(A(i, j));
                if (v > pmax) { pmax = v; piv = i; }
            }
            if (pmax == 0.0) return false;
            ipiv_[static_cast<std::size_t>(j)] = piv;
            long j_max = std::min(j + kv, n - 1);
            if (piv != j)
                for (long c = j; c <= j_max; ++c) {
                    double tmp = A(j, c);
                    A(j, c) = A(piv, c);
                    A(piv, c) = tmp;
                }
            for (long i = j + 1; i <= i_max; ++i) {
                double m = A(i, j) / A(j, j);
                A(i, j) = m;
                for (long c = j + 1; c <= j_max; ++c) A(i, c) -= m * A(j, c);
            }
        }
        factored_ = true;
        return true;
    }

    /// Solve in place after factor().
    void solve(std::vector<double>& b) const {
        const long n = static_cast<long>(n_);
        const long kl = static_cast<long>(kl_);
        const long ku = static_cast<long>(ku_);
        const long kv = kl + ku;
        auto A = [&](long i, long j) -> double {
            return ab_[static_cast<std::size_t>((kv + i - j) + j * static_cast<long>(ldab_))];
        };
        for (long j = 0; j < n; ++j) {
            long piv = ipiv_[static_cast<std::size_t>(j)];
            if (piv != j) std::swap(b[static_cast<std::size_t>(j)], b[static_cast<std::size_t>(piv)]);
            long i_max = std::min(j + kl, n - 1);
            for (long i = j + 1; i <= i_max; ++i)
                b[static_cast<std::size_t>(i)] -= A(i, j) * b[static_cast<std::size_t>(j)];
        }
        for (long i = n - 1; i >= 0; --i) {
            long j_max = std::min(i + kv, n - 1);
            double acc = b[static_cast<std::size_t>(i)];
            for (long j = i + 1; j <= j_max; ++j) acc -= A(i, j) * b[static_cast<std::size_t>(j)];
            b[static_cast<std::size_t>(i)] = acc / A(i, i);
        }
    }

    bool factored() const { return factored_; }

private:
    std::size_t n_, kl_, ku_, ldab_;
    std::vector<double> ab_;
    std::vector<long> ipiv_;
    bool factored_ = false;
};

/// Dense LU with partial pivoting for small brute-force systems.
class DenseMatrix {
public:
    explicit DenseMatrix(std::size_t n) : n_(n), a_(n * n, 0.0), ipiv_(n) {}

    std::size_t size() const { return n_; }
    double& at(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double at(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    bool factor() {
        for (std::size_t c = 0; c < n_; ++c) {
            std::size_t piv = c;
            double pmax = std::abs(at(c, c));
            for (std::size_t r = c + 1; r < n_; ++r)
                if (std::abs(at(r, c)) > pmax) { pmax = std::abs(at(r, c)); piv = r; }
            if (pmax == 0.0) return false;
            ipiv_[c] = piv;
            if (piv != c)
                for (std::size_t k = 0; k < n_; ++k) std::swap(a_[c * n_ + k], a_[piv * n_ + k]);
            double d = at(c, c);
            for (std::size_t r = c + 1; r < n_; ++r) {
                double m = at(r, c) / d;
                at(r, c) = m;
                if (m != 0.0)
                    for (std::size_t k = c + 1; k < n_; ++k) at(r, k) -= m * at(c, k);
            }
        }
        return true;
    }

    void solve(std::vector<double>& b) const {
        // full rows (multipliers included) were interchanged during the
        // factorization, so all permutations apply before the L-solve
        for (std::size_t c = 0; c < n_; ++c)
            if (ipiv_[c] != c) std::swap(b[c], b[ipiv_[c]]);
        for (std::size_t c = 0; c < n_; ++c)
            for (std::size_t r = c + 1; r < n_; ++r) b[r] -= at(r, c) * b[c];
        for (std::size_t r = n_; r-- > 0;) {
            double acc = b[r];
            for (std::size_t k = r + 1; k < n_; ++k) acc -= at(r, k) * b[k];
            b[r] = acc / at(r, r);
        }
    }

private:
    std::size_t n_;
    std::vector<double> a_;
    std::vector<std::size_t> ipiv_;
};

} // namespace tf
