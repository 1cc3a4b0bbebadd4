#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tf/mesh.hpp"

namespace tf {

/// Cell quadratures on graded meshes for integrands that pick up
/// logarithmic singularities from the x_N^2 degeneracy.
///
/// Two fitting families are used:
///   - upoly:  per-cell fit in {1, u, u^2}, u = ln x, integrated against
///             weight x^w exactly. Exact whenever the integrand is a
///             quadratic in ln x (the model problem's v'' and v'/x are).
///   - xlog:   per-cell fit in {1, x, x^2, x ln x}, integrated exactly.
///             Exact for polynomials of degree <= 2 and x ln x profiles.
///
/// Both reduce to ordinary low-order quadrature on smooth integrands.
namespace quad {

namespace detail {

/// antiderivative of e^{a u} u^k at u (a > 0), i.e. of x^{a-1} (ln x)^k dx
/// expressed in u = ln x. Vanishes at u -> -inf.
inline double exp_poly_anti(double a, int k, double u) {
    // \int e^{au} u^k du = e^{au} sum_{i=0..k} (-1)^i k!/(k-i)! u^{k-i} / a^{i+1}
    double e = std::exp(a * u);
    double term = 1.0 / a;
    double acc = 0.0;
    double upow = 1.0;
    // build u^{k}, u^{k-1}, ... with falling factorial coefficients
    std::array<double, 8> up{};
    up[0] = 1.0;
    for (int i = 1; i <= k; ++i) up[static_cast<std::size_t>(i)] = up[static_cast<std::size_t>(i - 1)] * u;
    double fall = 1.0;
    double sign = 1.0;
    for (int i = 0; i <= k; ++i) {
        acc += sign * fall * up[static_cast<std::size_t>(k - i)] * term;
        term /= a;
        fall *= (k - i);
        sign *= -1.0;
    }
    (void)upow;
    return e * acc;
}

/// antiderivative of u^k (weight exponent a == 0 case)
inline double poly_anti(int k, double u) {
    return std::pow(u, k + 1) / (k + 1);
}

} // namespace detail

/// integral over [xa, xb] of x^w * (c0 + c1 ln x + c2 ln^2 x) dx.
/// xa == 0 allowed when w >= 0 (the integral converges).
inline double upoly_cell_integral(double xa, double xb, int w,
                                  double c0, double c1, double c2) {
    const double a = static_cast<double>(w) + 1.0; // e^{a u} weight in u
    const double ub = std::log(xb);
    if (a > 0.0) {
        double hi = c0 * detail::exp_poly_anti(a, 0, ub) +
                    c1 * detail::exp_poly_anti(a, 1, ub) +
                    c2 * detail::exp_poly_anti(a, 2, ub);
        if (xa <= 0.0) return hi; // lower limit contributes 0
        double ua = std::log(xa);
        double lo = c0 * detail::exp_poly_anti(a, 0, ua) +
                    c1 * detail::exp_poly_anti(a, 1, ua) +
                    c2 * detail::exp_poly_anti(a, 2, ua);
        return hi - lo;
    }
    // w == -1: \int (c0 + c1 u + c2 u^2) du, diverges at x = 0
    if (xa <= 0.0) throw InvalidArgument("upoly_cell_integral: w=-1 needs xa > 0");
    double ua = std::log(xa);
    auto anti = [&](double u) {
        return c0 * detail::poly_anti(0, u) + c1 * detail::poly_anti(1, u) +
               c2 * detail::poly_anti(2, u);
    };
    return anti(ub) - anti(ua);
}

/// Fit g through three (x, g) samples as c0 + c1 ln x + c2 ln^2 x.
inline std::array<double, 3> fit_upoly(const std::array<double, 3>& x,
                                       const std::array<double, 3>& g) {
    double u0 = std::log(x[0]), u1 = std::log(x[1]), u2 = std::log(x[2]);
    // Lagrange in u
    double d0 = (u0 - u1) * (u0 - u2);
    double d1 = (u1 - u0) * (u1 - u2);
    double d2 = (u2 - u0) * (u2 - u1);
    double a0 = g[0] / d0, a1 = g[1] / d1, a2 = g[2] / d2;
    double c2 = a0 + a1 + a2;
    double c1 = -(a0 * (u1 + u2) + a1 * (u0 + u2) + a2 * (u0 + u1));
    double c0 = a0 * u1 * u2 + a1 * u0 * u2 + a2 * u0 * u1;
    return {c0, c1, c2};
}

/// \int_0^1 g(x) x^w dx for nodal g on a graded mesh, g smooth in ln x.
/// The value at node 0 is never used (it may be infinite there).
/// w in {-1, 0, 1, 2}; for w == -1 the first cell requires g ~ c * x-like
/// decay and is integrated with a vanishing linear-in-x fit instead.
inline double integral_upoly(const Mesh1D& mesh, const std::vector<double>& g, int w) {
    const std::size_t n = mesh.size();
    if (n < 4) throw InvalidArgument("integral_upoly: mesh too small");
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        double xa = mesh.node(j), xb = mesh.node(j + 1);
        // pick the fitting triple: interior-biased, never node 0
        std::size_t i0 = (j == 0) ? 1 : j;
        if (i0 + 2 >= n) i0 = n - 3;
        if (i0 < 1) i0 = 1;
        std::array<double, 3> xs{mesh.node(i0), mesh.node(i0 + 1), mesh.node(i0 + 2)};
        std::array<double, 3> gs{g[i0], g[i0 + 1], g[i0 + 2]};
        if (j == 0 && w < 0) {
            // used for integrands like |v|^2 with v(0) = 0: g decays ~ x^2
            // near the origin, so \int_0^{x1} g/x dx = g1 / 2 for g = g1 (x/x1)^2
            acc += 0.5 * g[1];
            continue;
        }
        auto c = fit_upoly(xs, gs);
        acc += upoly_cell_integral(j == 0 ? 0.0 : xa, xb, w, c[0], c[1], c[2]);
    }
    return acc;
}

/// Closed-form antiderivatives for the xlog basis against weight x^w.
inline double xlog_anti(int w, int which, double x) {
    // which: 0 -> 1, 1 -> x, 2 -> x^2, 3 -> x ln x ; weight x^w folded in
    double p = static_cast<double>(w);
    auto mono = [&](double e) { return std::pow(x, e + 1.0) / (e + 1.0); };
    switch (which) {
        case 0:
            if (w == -1) return std::log(x);
            return mono(p);
        case 1: return mono(p + 1.0);
        case 2: return mono(p + 2.0);
        default: {
            // \int x^{p+1} ln x dx
            double e = p + 2.0;
            if (x == 0.0) return 0.0;
            return std::pow(x, e) * (std::log(x) / e - 1.0 / (e * e));
        }
    }
}

/// Fit through four samples in basis {1, x, x^2, x ln x} (small 4x4 solve).
inline std::array<double, 4> fit_xlog(const std::array<double, 4>& x,
                                      const std::array<double, 4>& g) {
    double A[4][5];
    for (int r = 0; r < 4; ++r) {
        double xr = x[static_cast<std::size_t>(r)];
        A[r][0] = 1.0;
        A[r][1] = xr;
        A[r][2] = xr * xr;
        A[r][3] = (xr == 0.0) ? 0.0 : xr * std::log(xr);
        A[r][4] = g[static_cast<std::size_t>(r)];
    }
    for (int c = 0; c < 4; ++c) {
        int piv = c;
        for (int r = c + 1; r < 4; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        for (int k = 0; k < 5; ++k) std::swap(A[c][k], A[piv][k]);
        for (int r = 0; r < 4; ++r) {
            if (r == c) continue;
            double f = A[r][c] / A[c][c];
            for (int k = c; k < 5; ++k) A[r][k] -= f * A[c][k];
        }
    }
    return {A[0][4] / A[0][0], A[1][4] / A[1][1], A[2][4] / A[2][2], A[3][4] / A[3][3]};
}

/// \int_0^1 g(x) x^w dx with a per-cell {1, x, x^2, x ln x} fit.
/// Node-0 values are used (g must be finite there). w in {-1, 0, 1, 2};
/// w == -1 additionally requires g(0) == 0 structurally (cell 0 drops
/// the constant by fitting through the origin).
inline double integral_xlog(const Mesh1D& mesh, const std::vector<double>& g, int w) {
    const std::size_t n = mesh.size();
    if (n < 5) throw InvalidArgument("integral_xlog: mesh too small");
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        std::size_t i0 = (j == 0) ? 0 : j - 1;
        if (i0 + 3 >= n) i0 = n - 4;
        std::array<double, 4> xs{mesh.node(i0), mesh.node(i0 + 1), mesh.node(i0 + 2), mesh.node(i0 + 3)};
        std::array<double, 4> gs{g[i0], g[i0 + 1], g[i0 + 2], g[i0 + 3]};
        auto c = fit_xlog(xs, gs);
        double xa = mesh.node(j), xb = mesh.node(j + 1);
        if (j == 0 && w < 0) {
            // the constant basis term would make \int x^{-1} diverge; a g
            // vanishing at 0 has c[0] ~ 0, drop it explicitly
            c[0] = 0.0;
        }
        double cell = 0.0;
        for (int b = 0; b < 4; ++b) {
            if (c[static_cast<std::size_t>(b)] == 0.0) continue;
            double hi = xlog_anti(w, b, xb);
            double lo = (xa == 0.0) ? 0.0 : xlog_anti(w, b, xa); // all kept terms vanish at 0
            cell += c[static_cast<std::size_t>(b)] * (hi - lo);
        }
        acc += cell;
    }
    return acc;
}

/// Plain composite trapezoid on a graded mesh (nodal values).
inline double trapezoid(const Mesh1D& mesh, const std::vector<double>& g) {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < mesh.size(); ++j)
        acc += 0.5 * (g[j] + g[j + 1]) * mesh.spacing(j);
    return acc;
}

/// Cumulative trapezoid: out[j] = \int_0^{x_j} g.
inline std::vector<double> cumulative_trapezoid(const Mesh1D& mesh, const std::vector<double>& g) {
    std::vector<double> out(mesh.size(), 0.0);
    for (std::size_t j = 0; j + 1 < mesh.size(); ++j)
        out[j + 1] = out[j] + 0.5 * (g[j] + g[j + 1]) * mesh.spacing(j);
    return out;
}

} // namespace quad
} // namespace tf
