#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tf/collar.hpp"
#include "tf/jets.hpp"
#include "tf/mesh.hpp"

namespace tf::mms {

/// Jet calculus for the twisted chart operators on the strip. Variables:
/// x -> tangential coordinate, y -> wall-normal lambda. rank-1 problems
/// simply carry no x-dependence.
inline Jet2 twist_tangential(const Jet2& u, const Jet2& rho) {
    return u.dx() - rho.dx() * u.dy() / (1.0 + rho.dy());
}
inline Jet2 twist_lambda(const Jet2& u, const Jet2& rho) { return u.dy() / (1.0 + rho.dy()); }

inline Jet2 laplace_rho_jet(const Jet2& u, const Jet2& rho, bool with_tangential) {
    Jet2 acc = twist_lambda(twist_lambda(u, rho), rho);
    if (with_tangential) acc += twist_tangential(twist_tangential(u, rho), rho);
    return acc;
}

/// exact value of the transformed thin-film residual
///   F1 = h_t - [h_lambda/(1+rho_lambda)] rho_t + div_rho(h^2 grad_rho lap_rho h)
inline double residual_value(const Jet2& h, const Jet2& ht, const Jet2& rho, const Jet2& rhot,
                             bool with_tangential) {
    Jet2 lap = laplace_rho_jet(h, rho, with_tangential);
    Jet2 h2 = h * h;
    Jet2 div = twist_lambda(h2 * twist_lambda(lap, rho), rho);
    if (with_tangential) div += twist_tangential(h2 * twist_tangential(lap, rho), rho);
    const double b = h.dy().value() / (1.0 + rho.dy().value());
    return ht.value() - b * rhot.value() + div.value();
}

/// exact value of the linearized operator grad_sigma(w^2 grad_sigma lap_sigma u)
inline double linear_operator_value(const Jet2& u, const Jet2& w, const Jet2& sigma,
                                    bool with_tangential) {
    Jet2 lap = laplace_rho_jet(u, sigma, with_tangential);
    Jet2 w2 = w * w;
    Jet2 div = twist_lambda(w2 * twist_lambda(lap, sigma), sigma);
    if (with_tangential) div += twist_tangential(w2 * twist_tangential(lap, sigma), sigma);
    return div.value();
}

/// Manufactured data for the linearized Neumann/Dirichlet solves:
///   u*(x,t) = e^{-t} cos(x1) q(x_N),  q = -10 + 9 x + x^3
///   sigma   = s_amp * t * sin(x1) * chi(x_N)
///   w       = x_N (1 + w_amp * x_N)
/// q is compatible with the scheme's top rows (Robin for the cos mode,
/// q(1) = 0) and carries nonzero bottom data q'(0) = 9.
struct LinearMMS {
    double s_amp = 0.05;
    double w_amp = 0.1;

    Jet2 q_jet(const Jet2& xn) const {
        return -10.0 + 9.0 * xn + jet_pow(xn, 3);
    }
    Jet2 u_jet(const Jet2& xp, const Jet2& xn, double t) const {
        return std::exp(-t) * jet_cos(xp) * q_jet(xn);
    }
    Jet2 ut_jet(const Jet2& xp, const Jet2& xn, double t) const {
        return -std::exp(-t) * jet_cos(xp) * q_jet(xn);
    }
    Jet2 sigma_jet(const Jet2& xp, const Jet2& xn, double t) const {
        return (s_amp * t) * jet_sin(xp) * collar::chi_jet(xn);
    }
    Jet2 w_jet(const Jet2&, const Jet2& xn, double) const {
        return xn * (1.0 + w_amp * xn);
    }

    double exact(double xp, double xn, double t) const {
        return std::exp(-t) * std::cos(xp) * (-10.0 + 9.0 * xn + xn * xn * xn);
    }
    double forcing(double xp, double xn, double t) const {
        Jet2 X = Jet2::variable_x(xp), Y = Jet2::variable_y(xn);
        Jet2 u = u_jet(X, Y, t);
        Jet2 w = w_jet(X, Y, t);
        Jet2 s = sigma_jet(X, Y, t);
        return ut_jet(X, Y, t).value() + linear_operator_value(u, w, s, true);
    }
    double neumann_datum(double xp, double t) const {
        // d u*/d x_N at the bottom
        return std::exp(-t) * std::cos(xp) * 9.0;
    }
    double dirichlet_datum(double xp, double t) const { return exact(xp, 0.0, t); }
};

/// Manufactured free-boundary problem on the 1-D strip:
///   h*(x,t)  = x + t b(x) + t^2 c(x),   b = b_amp x(1-x), c = c_amp x(1-x)^4
///   rho*(t)  = r_amp (t + 3 t^2)        (deviation of the contact point)
/// c satisfies c(0)=c(1)=0 and the scheme's top rows exactly; the pair
/// feeds the forced residual F1(h*, rho*) computed to machine accuracy.
struct NonlinearMMS1D {
    double b_amp = 0.1;
    double c_amp = 0.2;
    double r_amp = 0.02;

    Jet2 b_jet(const Jet2& x) const { return b_amp * x * (1.0 - x); }
    Jet2 c_jet(const Jet2& x) const { return c_amp * x * jet_pow(1.0 - x, 4); }

    Jet2 h_jet(const Jet2& x, double t) const {
        return x + t * b_jet(x) + (t * t) * c_jet(x);
    }
    Jet2 ht_jet(const Jet2& x, double t) const { return b_jet(x) + (2.0 * t) * c_jet(x); }

    double rho_b(double t) const { return r_amp * (t + t * t); }
    double rho_b_dot(double t) const { return r_amp * (1.0 + 2.0 * t); }

    Jet2 rho_jet(const Jet2& x, double t, double gamma0) const {
        return rho_b(t) * collar::chi_jet(x * (1.0 / gamma0));
    }
    Jet2 rhot_jet(const Jet2& x, double t, double gamma0) const {
        return rho_b_dot(t) * collar::chi_jet(x * (1.0 / gamma0));
    }

    double h0(double x) const { return x; }

    double exact_h(double x, double t) const {
        return x + t * b_amp * x * (1.0 - x) + t * t * c_amp * x * std::pow(1.0 - x, 4.0);
    }

    /// forcing F1(h*, rho*) at a wall-normal node
    double forcing(double xn, double t, double gamma0) const {
        Jet2 X = Jet2::variable_y(xn); // 1-D: the jet variable is lambda
        Jet2 h = h_jet(X, t);
        Jet2 ht = ht_jet(X, t);
        Jet2 r = rho_jet(X, t, gamma0);
        Jet2 rt = rhot_jet(X, t, gamma0);
        return residual_value(h, ht, r, rt, false);
    }

    /// contact-angle datum (outward-normal slope of h* on Gamma); the
    /// 1-D bracket is identically 1 and rho_lambda vanishes on Gamma
    double g_datum(double t) const {
        // dh*/dlambda at 0: 1 + t b'(0) + t^2 c'(0)
        return -(1.0 + t * b_amp + t * t * c_amp);
    }
};

} // namespace tf::mms
