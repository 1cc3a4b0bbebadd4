#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "tf/mesh.hpp"

namespace tf {

/// Bivariate truncated Taylor expansion to total order 4 around a base
/// point. Coefficients are stored for monomials dx^i dy^j with i+j <= 4 in
/// the order (0,0),(1,0),(0,1),(2,0),(1,1),(0,2),...; c[idx] multiplies
/// dx^i dy^j directly (factorials folded in). Exact manufactured-solution
/// forcings are assembled from these.
class Jet2 {
public:
    static constexpr std::size_t kCount = 15;

    Jet2() { c_.fill(0.0); }
    explicit Jet2(double v) {
        c_.fill(0.0);
        c_[0] = v;
    }

    static constexpr std::size_t index(int i, int j) {
        const int d = i + j;
        return static_cast<std::size_t>(d * (d + 1) / 2 + j);
    }

    static Jet2 variable_x(double v) {
        Jet2 r(v);
        r.c_[index(1, 0)] = 1.0;
        return r;
    }
    static Jet2 variable_y(double v) {
        Jet2 r(v);
        r.c_[index(0, 1)] = 1.0;
        return r;
    }

    double value() const { return c_[0]; }

    /// mixed partial d^{i+j} u / dx^i dy^j at the base point
    double deriv(int i, int j) const {
        double f = 1.0;
        for (int k = 2; k <= i; ++k) f *= k;
        for (int k = 2; k <= j; ++k) f *= k;
        return c_[index(i, j)] * f;
    }

    double coeff(int i, int j) const { return c_[index(i, j)]; }
    double& coeff(int i, int j) { return c_[index(i, j)]; }

    Jet2 operator-() const {
        Jet2 r;
        for (std::size_t k = 0; k < kCount; ++k) r.c_[k] = -c_[k];
        return r;
    }
    Jet2& operator+=(const Jet2& o) {
        for (std::size_t k = 0; k < kCount; ++k) c_[k] += o.c_[k];
        return *this;
    }
    Jet2& operator-=(const Jet2& o) {
        for (std::size_t k = 0; k < kCount; ++k) c_[k] -= o.c_[k];
        return *this;
    }
    Jet2& operator*=(double s) {
        for (std::size_t k = 0; k < kCount; ++k) c_[k] *= s;
        return *this;
    }

    friend Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
    friend Jet2 operator-(Jet2 a, const Jet2& b) { return a -= b; }
    friend Jet2 operator*(double s, Jet2 a) { return a *= s; }
    friend Jet2 operator*(Jet2 a, double s) { return a *= s; }
    friend Jet2 operator+(Jet2 a, double s) {
        a.c_[0] += s;
        return a;
    }
    friend Jet2 operator+(double s, Jet2 a) {
        a.c_[0] += s;
        return a;
    }
    friend Jet2 operator-(Jet2 a, double s) {
        a.c_[0] -= s;
        return a;
    }
    friend Jet2 operator-(double s, const Jet2& a) { return (-a) + s; }

    friend Jet2 operator*(const Jet2& a, const Jet2& b) {
        Jet2 r;
        for (int da = 0; da <= 4; ++da)
            for (int ja = 0; ja <= da; ++ja) {
                const double ca = a.c_[index(da - ja, ja)];
                if (ca == 0.0) continue;
                for (int db = 0; db + da <= 4; ++db)
                    for (int jb = 0; jb <= db; ++jb) {
                        const double cb = b.c_[index(db - jb, jb)];
                        if (cb == 0.0) continue;
                        r.c_[index(da - ja + db - jb, ja + jb)] += ca * cb;
                    }
            }
        return r;
    }

    /// jet of the x-derivative (accurate one order lower)
    Jet2 dx() const {
        Jet2 r;
        for (int d = 1; d <= 4; ++d)
            for (int j = 0; j <= d; ++j) {
                int i = d - j;
                if (i == 0) continue;
                r.c_[index(i - 1, j)] = c_[index(i, j)] * i;
            }
        return r;
    }
    Jet2 dy() const {
        Jet2 r;
        for (int d = 1; d <= 4; ++d)
            for (int j = 1; j <= d; ++j) {
                int i = d - j;
                r.c_[index(i, j - 1)] = c_[index(i, j)] * j;
            }
        return r;
    }

    /// compose a univariate function given its derivatives at value()
    Jet2 compose(const std::array<double, 5>& f) const {
        Jet2 du = *this;
        du.c_[0] = 0.0;
        Jet2 acc(f[0]);
        Jet2 pw(1.0);
        double fact = 1.0;
        for (int k = 1; k <= 4; ++k) {
            pw = pw * du;
            fact *= k;
            acc += (f[static_cast<std::size_t>(k)] / fact) * pw;
        }
        return acc;
    }

private:
    std::array<double, kCount> c_;
};

inline Jet2 jet_sin(const Jet2& u) {
    double s = std::sin(u.value()), c = std::cos(u.value());
    return u.compose({s, c, -s, -c, s});
}
inline Jet2 jet_cos(const Jet2& u) {
    double s = std::sin(u.value()), c = std::cos(u.value());
    return u.compose({c, -s, -c, s, c});
}
inline Jet2 jet_exp(const Jet2& u) {
    double e = std::exp(u.value());
    return u.compose({e, e, e, e, e});
}
inline Jet2 jet_inv(const Jet2& u) {
    double v = u.value();
    if (v == 0.0) throw InvalidArgument("jet_inv: division by zero");
    double v2 = v * v, v3 = v2 * v, v4 = v3 * v, v5 = v4 * v;
    return u.compose({1.0 / v, -1.0 / v2, 2.0 / v3, -6.0 / v4, 24.0 / v5});
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * jet_inv(b); }
inline Jet2 jet_sqrt(const Jet2& u) {
    double v = u.value();
    if (v <= 0.0) throw InvalidArgument("jet_sqrt: nonpositive argument");
    double r = std::sqrt(v);
    return u.compose({r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v),
                      -0.9375 / (r * v * v * v)});
}
inline Jet2 jet_log(const Jet2& u) {
    double v = u.value();
    if (v <= 0.0) throw InvalidArgument("jet_log: nonpositive argument");
    double v2 = v * v, v3 = v2 * v, v4 = v3 * v;
    return u.compose({std::log(v), 1.0 / v, -1.0 / v2, 2.0 / v3, -6.0 / v4});
}
inline Jet2 jet_pow(const Jet2& u, int n) {
    Jet2 acc(1.0);
    for (int k = 0; k < n; ++k) acc = acc * u;
    return acc;
}

} // namespace tf
