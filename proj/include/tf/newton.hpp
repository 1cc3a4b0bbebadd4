#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tf/collar.hpp"
#include "tf/holder.hpp"
#include "tf/linear.hpp"
#include "tf/mesh.hpp"
#include "tf/model.hpp"

namespace tf::newton {

using collar::BoundaryField;
using collar::CollarMap;
using collar::RhoFrame;

/// Ambient datum g(y, t), evaluated at chart coordinates of the image
/// point (omega..., lambda_y); must be <= -nu < 0 near Gamma.
using AmbientFn = std::function<double(const std::array<double, 3>& chart, double t)>;

struct ProblemData {
    ScalarField h0;
    AmbientFn g;
    CollarMap collar;
    double gamma = 0.5;
    double T = 0.1;
    double dt = 0.025;
    double nu = 0.1;
    std::optional<FieldSeries> forcing; // volume forcing for manufactured runs

    std::size_t nlev() const { return h0.axis_len(h0.rank() - 1); }
    std::size_t ntang() const { return h0.size() / nlev(); }

    const Mesh1D& mesh() const { return std::get<Mesh1D>(h0.axis(h0.rank() - 1)); }

    std::vector<Axis> taxes() const {
        std::vector<Axis> t;
        for (std::size_t k = 0; k + 1 < h0.rank(); ++k) t.push_back(h0.axis(k));
        return t;
    }

    /// chart coordinates of the tangential node i on Gamma
    std::array<double, 3> gamma_chart(std::size_t i, double lambda = 0.0) const {
        std::array<double, 3> c{0.0, 0.0, 0.0};
        auto tx = taxes();
        if (tx.empty()) {
            c[0] = lambda;
            return c;
        }
        if (tx.size() == 1) {
            c[0] = axis_coord(tx[0], i);
            c[1] = lambda;
            return c;
        }
        const std::size_t n1 = axis_size(tx[1]);
        c[0] = axis_coord(tx[0], i / n1);
        c[1] = axis_coord(tx[1], i % n1);
        c[2] = lambda;
        return c;
    }

    void validate() const {
        const Mesh1D& m = mesh();
        const std::size_t nl = nlev();
        // h0 = 0 on Gamma, positive inside
        for (std::size_t i = 0; i < ntang(); ++i) {
            if (std::abs(h0[i * nl]) > 1e-12)
                throw InvalidArgument("ProblemData: h0 must vanish on Gamma");
            for (std::size_t j = 1; j < nl; ++j)
                if (m.node(j) < 0.999 && !(h0[i * nl + j] > 0.0))
                    throw InvalidArgument("ProblemData: h0 must be positive inside");
        }
        // inward slope >= nu
        ScalarField dh = fd_derivative(h0, h0.rank() - 1, 1);
        for (std::size_t i = 0; i < ntang(); ++i)
            if (!(dh[i * nl] >= nu))
                throw InvalidArgument("ProblemData: inward slope of h0 below nu");
        // g <= -nu and compatibility  dh0/dn_out = g(.,0)
        for (std::size_t i = 0; i < ntang(); ++i) {
            const double gv = g(gamma_chart(i), 0.0);
            if (!(gv <= -nu + 1e-12))
                throw InvalidArgument("ProblemData: g must stay <= -nu");
            if (std::abs(-dh[i * nl] - gv) > 1e-6)
                throw InvalidArgument("ProblemData: contact-angle compatibility violated at t=0");
        }
    }
};

struct Background {
    FieldSeries w;
    FieldSeries sigma;
    BoundaryField sigma_b;
    std::vector<double> rho1; // boundary values of the initial front rate
    ScalarField h1;
    double T_used = 0.0;
    double slope_margin = 0.0;
    double positivity_margin = 0.0;
};

struct StatePair {
    FieldSeries u;
    BoundaryField delta;
};

struct NewtonTrace {
    std::vector<double> residual_history;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
    bool ball_exit = false;
    std::vector<double> picard_factors;
};

namespace detail {

/// div(h0^2 grad lap h0) with the plain chart calculus (sigma = 0)
inline ScalarField stiff_term(const ScalarField& h0, const CollarMap& cm) {
    ScalarField zero = like(h0, 0.0);
    RhoFrame fr(zero, cm);
    ScalarField lap = collar::laplace_rho(h0, fr);
    collar::VectorField flux = collar::nabla_rho(lap, fr);
    ScalarField h2 = hadamard(h0, h0);
    for (auto& c : flux.comps) c = hadamard(h2, c);
    return collar::div_rho(flux, fr);
}

inline std::vector<double> trace_bottom(const ScalarField& f) {
    const std::size_t nlev = f.axis_len(f.rank() - 1);
    const std::size_t ntang = f.size() / nlev;
    std::vector<double> out(ntang);
    for (std::size_t i = 0; i < ntang; ++i) out[i] = f[i * nlev];
    return out;
}

/// Boundary trace of div(h0^2 grad lap h0). The raw nested stencils do
/// not survive the admissible-class second derivatives (~ ln lambda) at
/// the contact line, but only the normal-flux slope survives the limit:
/// G = h0^2 d(lap h0)/dlambda vanishes like num * lambda there, and the
/// tangential flux drops out with the h0^2 factor. A least-squares fit of
/// a lambda + b lambda^2 over the first interior nodes reads off num.
inline std::vector<double> stiff_trace(const ScalarField& h0, const CollarMap& cm,
                                       ScalarField* g_field = nullptr) {
    ScalarField zero = like(h0, 0.0);
    RhoFrame fr(zero, cm);
    ScalarField lap = collar::laplace_rho(h0, fr);
    ScalarField dlap = fd_derivative(lap, h0.rank() - 1, 1);
    ScalarField G = hadamard(hadamard(h0, h0), dlap);
    if (g_field) *g_field = G;
    const Mesh1D& mesh = std::get<Mesh1D>(h0.axis(h0.rank() - 1));
    const std::size_t nlev = mesh.size();
    const std::size_t ntang = h0.size() / nlev;
    const std::size_t j_lo = 2, j_hi = std::min<std::size_t>(8, nlev - 2);
    std::vector<double> out(ntang, 0.0);
    for (std::size_t i = 0; i < ntang; ++i) {
        double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
        for (std::size_t j = j_lo; j <= j_hi; ++j) {
            const double x = mesh.node(j), g = G[i * nlev + j];
            s11 += x * x;
            s12 += x * x * x;
            s22 += x * x * x * x;
            r1 += x * g;
            r2 += x * x * g;
        }
        const double det = s11 * s22 - s12 * s12;
        out[i] = (det != 0.0) ? (s22 * r1 - s12 * r2) / det : 0.0;
    }
    return out;
}

} // namespace detail

/// Initial front rate from the t=0 limit of the transformed equation:
///   rho1 = [div(h0^2 grad lap h0) - f(.,0)] / (dh0/dlambda)  on Gamma.
inline std::vector<double> compute_rho1(const ProblemData& data) {
    std::vector<double> ntr = detail::stiff_trace(data.h0, data.collar);
    ScalarField slope = fd_derivative(data.h0, data.h0.rank() - 1, 1);
    std::vector<double> str = detail::trace_bottom(slope);
    std::vector<double> f0;
    if (data.forcing) f0 = detail::trace_bottom(data.forcing->slab(0));
    std::vector<double> out(ntr.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(str[i] >= data.nu))
            throw GeometryError("compute_rho1: contact slope degenerated below nu");
        const double f = data.forcing ? f0[i] : 0.0;
        out[i] = (ntr[i] - f) / str[i];
    }
    return out;
}

/// Initial height rate h1 = (dh0/dlambda) E rho1 - div(h0^2 grad lap h0) + f(.,0);
/// the stiff term is replaced by its fitted limit on Gamma so the trace
/// of h1 vanishes identically.
inline ScalarField compute_h1(const ProblemData& data, const ScalarField& rho1_ext) {
    ScalarField num = detail::stiff_term(data.h0, data.collar);
    std::vector<double> ntr = detail::stiff_trace(data.h0, data.collar);
    const std::size_t nlev = data.nlev();
    for (std::size_t i = 0; i < data.ntang(); ++i) num[i * nlev] = ntr[i];
    ScalarField slope = fd_derivative(data.h0, data.h0.rank() - 1, 1);
    ScalarField out = like(data.h0, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double f = data.forcing ? (*data.forcing).slab(0)[i] : 0.0;
        out[i] = slope[i] * rho1_ext[i] - num[i] + f;
    }
    return out;
}

/// Background pair: w = h0 + t h1, sigma = t E rho1, with T bisected until
/// positivity and the slope floor hold on every slab. The smooth clamp of
/// the ansatz is the plateau cutoff, identically 1 over the returned
/// horizon.
inline Background build_background(const ProblemData& data) {
    data.validate();
    Background bg;
    bg.rho1 = compute_rho1(data);
    ScalarField rho1_ext =
        collar::extend_boundary_function(bg.rho1, data.h0.axes(), data.collar, false);
    bg.h1 = compute_h1(data, rho1_ext);

    const Mesh1D& mesh = data.mesh();
    const std::size_t nlev = data.nlev();
    double T = data.T;
    double dt = data.dt;
    for (;;) {
        const int steps = std::max(1, static_cast<int>(std::llround(T / dt)));
        FieldSeries w(0.0, dt), sigma(0.0, dt);
        BoundaryField sb;
        sb.taxes = data.taxes();
        sb.dt = dt;
        bool ok = true;
        double slope_margin = 1e300, pos_margin = 1e300;
        for (int s = 0; s <= steps && ok; ++s) {
            const double t = s * dt;
            ScalarField ws = like(data.h0);
            for (std::size_t i = 0; i < ws.size(); ++i) ws[i] = data.h0[i] + t * bg.h1[i];
            ScalarField ss = like(data.h0);
            for (std::size_t i = 0; i < ss.size(); ++i) ss[i] = t * rho1_ext[i];
            ScalarField dws = fd_derivative(ws, ws.rank() - 1, 1);
            for (std::size_t i = 0; i < ws.size() && ok; ++i) {
                const double lam = mesh.node(i % nlev);
                if (lam > 1e-12 && lam < 0.999) {
                    pos_margin = std::min(pos_margin, ws[i]);
                    if (!(ws[i] > 0.0)) ok = false;
                }
            }
            for (std::size_t i = 0; i < ws.size() / nlev && ok; ++i) {
                slope_margin = std::min(slope_margin, dws[i * nlev]);
                if (!(dws[i * nlev] >= 0.5 * data.nu)) ok = false;
            }
            if (ok) {
                std::vector<double> sbv(ws.size() / nlev);
                for (std::size_t i = 0; i < sbv.size(); ++i) sbv[i] = t * bg.rho1[i];
                w.push(std::move(ws));
                sigma.push(std::move(ss));
                sb.push(std::move(sbv));
            }
        }
        if (ok) {
            bg.w = std::move(w);
            bg.sigma = std::move(sigma);
            bg.sigma_b = std::move(sb);
            bg.T_used = T;
            bg.slope_margin = slope_margin;
            bg.positivity_margin = pos_margin;
            return bg;
        }
        T *= 0.5;
        dt *= 0.5;
        if (T < 1e-4)
            throw SolverError("build_background: horizon shrank below the feasibility floor");
    }
}

struct ResidualPair {
    FieldSeries f1;
    BoundaryField f2;
};

namespace detail {

struct SlabGeometry {
    ScalarField h;
    ScalarField rho_vol;
    std::vector<double> rho_b;
};

inline SlabGeometry compose_state(const Background& bg, const StatePair& psi,
                                  const ProblemData& data, std::size_t s) {
    SlabGeometry out;
    out.h = bg.w.slab(s) + psi.u.slab(s);
    out.rho_b.resize(bg.sigma_b.slab(s).size());
    for (std::size_t i = 0; i < out.rho_b.size(); ++i)
        out.rho_b[i] = bg.sigma_b.slab(s)[i] + psi.delta.slab(s)[i];
    ScalarField Ed = collar::extend_boundary_function(psi.delta.slab(s), data.h0.axes(),
                                                      data.collar);
    out.rho_vol = bg.sigma.slab(s) + Ed;
    return out;
}

inline void check_ball(const SlabGeometry& g, const ProblemData& data) {
    ScalarField rl = fd_derivative(g.rho_vol, g.rho_vol.rank() - 1, 1);
    double m = 0.0;
    for (std::size_t i = 0; i < rl.size(); ++i) m = std::max(m, std::abs(rl[i]));
    if (m > 0.5)
        throw SolverError("residual_F: |rho_lambda| exceeded 1/2 (left the admissible ball)");
    auto fac = collar::contact_angle_factor(g.rho_b, data.taxes(), data.collar);
    for (double f : fac)
        if (f * f - 1.0 > 0.5)
            throw SolverError("residual_F: tangential bracket exceeded 1/2");
}

} // namespace detail

/// Nonlinear residual F = (F1, F2) of the transformed problem at
/// psi = (u, delta) around the background. Time derivatives are the
/// backward differences of the implicit march; slab 0 uses the forward
/// difference (the correction there is pinned to zero).
inline ResidualPair residual_F(const StatePair& psi, const Background& bg,
                               const ProblemData& data) {
    const std::size_t nsl = bg.w.size();
    const double dt = bg.w.dt();
    ResidualPair out;
    out.f1 = FieldSeries(0.0, dt);
    out.f2.taxes = data.taxes();
    out.f2.dt = dt;

    std::vector<detail::SlabGeometry> geo(nsl);
    for (std::size_t s = 0; s < nsl; ++s) {
        geo[s] = detail::compose_state(bg, psi, data, s);
        detail::check_ball(geo[s], data);
    }
    const std::size_t nlev = data.nlev();
    for (std::size_t s = 0; s < nsl; ++s) {
        ScalarField ht = like(geo[s].h);
        ScalarField rt = like(geo[s].h);
        for (std::size_t i = 0; i < ht.size(); ++i) {
            if (s == 0) {
                ht[i] = (geo[1].h[i] - geo[0].h[i]) / dt;
                rt[i] = (geo[1].rho_vol[i] - geo[0].rho_vol[i]) / dt;
            } else {
                ht[i] = (geo[s].h[i] - geo[s - 1].h[i]) / dt;
                rt[i] = (geo[s].rho_vol[i] - geo[s - 1].rho_vol[i]) / dt;
            }
        }
        ScalarField f1 =
            collar::transform_pde_residual(geo[s].h, ht, geo[s].rho_vol, rt, data.collar);
        if (data.forcing) f1 -= data.forcing->slab(s);
        out.f1.push(std::move(f1));

        // F2 = (outward slope) * bracket - g o e_rho on Gamma
        ScalarField dh = fd_derivative(geo[s].h, geo[s].h.rank() - 1, 1);
        auto fac = collar::contact_angle_factor(geo[s].rho_b, data.taxes(), data.collar);
        std::vector<double> f2(fac.size());
        const double t = static_cast<double>(s) * dt;
        for (std::size_t i = 0; i < f2.size(); ++i) {
            auto chart = data.gamma_chart(i, geo[s].rho_b[i]);
            f2[i] = -dh[i * nlev] * fac[i] - data.g(chart, t);
        }
        out.f2.push(std::move(f2));
    }
    return out;
}

/// Fréchet derivative of F at psi = 0 applied to a direction (u, delta),
/// assembled from the chain-rule identities of the shifted composition.
inline ResidualPair frechet_apply(const StatePair& dir, const Background& bg,
                                  const ProblemData& data) {
    const std::size_t nsl = bg.w.size();
    const double dt = bg.w.dt();
    const std::size_t rank = data.h0.rank();
    const std::size_t nlev = data.nlev();
    ResidualPair out;
    out.f1 = FieldSeries(0.0, dt);
    out.f2.taxes = data.taxes();
    out.f2.dt = dt;

    ScalarField rho1_ext = collar::extend_boundary_function(bg.rho1, data.h0.axes(), data.collar, false);

    for (std::size_t s = 0; s < nsl; ++s) {
        const ScalarField& w = bg.w.slab(s);
        const ScalarField& sg = bg.sigma.slab(s);
        const ScalarField& u = dir.u.slab(s);
        ScalarField Ed = collar::extend_boundary_function(dir.delta.slab(s), data.h0.axes(),
                                                          data.collar, false);
        ScalarField w_l = fd_derivative(w, rank - 1, 1);
        ScalarField sg_l = fd_derivative(sg, rank - 1, 1);
        ScalarField u_l = fd_derivative(u, rank - 1, 1);
        ScalarField Ed_l = fd_derivative(Ed, rank - 1, 1);
        // sigma_t = E rho1 exactly (sigma is linear in t)
        const ScalarField& sg_t = rho1_ext;

        // fourth-order block: exact directional derivative of the discrete
        // composition div_rho(h^2 grad_rho lap_rho h) along (u, E delta)
        collar::DualFrame dfr(sg, Ed, data.collar);
        collar::DualField h{w, u};
        collar::DualField lap = collar::dual_laplace_rho(h, dfr);
        collar::DualVector flux = collar::dual_nabla_rho(lap, dfr);
        collar::DualField h2 = collar::dual_mul(h, h);
        for (auto& c : flux.comps) c = collar::dual_mul(h2, c);
        collar::DualField div = collar::dual_div_rho(flux, dfr);

        // time differences of the direction (backward, slab0 pinned)
        ScalarField u_t = like(u, 0.0), Ed_t = like(u, 0.0);
        if (s > 0) {
            ScalarField Ed_prev = collar::extend_boundary_function(dir.delta.slab(s - 1),
                                                                   data.h0.axes(), data.collar, false);
            for (std::size_t i = 0; i < u.size(); ++i) {
                u_t[i] = (u[i] - dir.u.slab(s - 1)[i]) / dt;
                Ed_t[i] = (Ed[i] - Ed_prev[i]) / dt;
            }
        }

        ScalarField f1 = like(u, 0.0);
        for (std::size_t i = 0; i < f1.size(); ++i) {
            const double inv = 1.0 / (1.0 + sg_l[i]);
            f1[i] = u_t[i] - inv * w_l[i] * Ed_t[i] - inv * sg_t[i] * u_l[i] +
                    inv * inv * w_l[i] * sg_t[i] * Ed_l[i] + div.d[i];
        }
        out.f1.push(std::move(f1));

        // boundary part
        const double t = static_cast<double>(s) * dt;
        const std::vector<double>& sb = bg.sigma_b.slab(s);
        const std::vector<double>& dl = dir.delta.slab(s);
        auto fac = collar::contact_angle_factor(sb, data.taxes(), data.collar);
        std::vector<double> f2(sb.size());
        ScalarField du = fd_derivative(u, rank - 1, 1);
        // tangential derivatives of sigma_b and delta on Gamma
        auto tx = data.taxes();
        std::vector<std::vector<double>> sgrad, dgrad;
        if (!tx.empty()) {
            ScalarField sbf(tx, sb), dlf(tx, dl);
            for (std::size_t k = 0; k < tx.size(); ++k) {
                sgrad.push_back(fd_derivative(sbf, k, 1).values());
                dgrad.push_back(fd_derivative(dlf, k, 1).values());
            }
        }
        for (std::size_t i = 0; i < f2.size(); ++i) {
            double qprime = 0.0;
            if (!tx.empty()) {
                if (data.collar.domain.kind == collar::DomainKind::strip) {
                    for (std::size_t k = 0; k < tx.size(); ++k)
                        qprime += 2.0 * sgrad[k][i] * dgrad[k][i];
                } else {
                    const double ry = 1.0 - sb[i];
                    qprime = 2.0 * sgrad[0][i] * dgrad[0][i] / (ry * ry) +
                             2.0 * sgrad[0][i] * sgrad[0][i] * dl[i] / (ry * ry * ry);
                }
            }
            // derivative of g o e_rho along the lambda slot
            auto chart = data.gamma_chart(i, sb[i]);
            const double eps = 1e-6;
            auto cp = chart, cmn = chart;
            cp[tx.size()] += eps;
            cmn[tx.size()] -= eps;
            const double g_l = (data.g(cp, t) - data.g(cmn, t)) / (2.0 * eps);
            const double T1 = -w_l[i * nlev]; // outward slope of the background
            f2[i] = -du[i * nlev] * fac[i] + T1 * qprime / (2.0 * fac[i]) - g_l * dl[i];
        }
        out.f2.push(std::move(f2));
    }
    return out;
}

struct NewtonOptions {
    double tol = 1e-8;
    int max_iter = 12;
    double picard_tol = 1e-10;
    int max_picard = 25;
    bool full_relinearization = false;
    bool backtracking = true; // damp steps that would increase the residual
    linear::SolveOptions inner;
    holder::SamplePlan norm_plan{2000, false, 0x5DEECE66Dull};
};

namespace detail {

inline double combined_norm(const ResidualPair& r, const ProblemData& data,
                            const holder::SamplePlan& plan) {
    double s = 0.0;
    // discrete sup norms over slabs (skip slab 0: pinned corrections)
    for (std::size_t k = 1; k < r.f1.size(); ++k) s = std::max(s, linear::sup(r.f1.slab(k)));
    for (std::size_t k = 1; k < r.f2.size(); ++k)
        for (double v : r.f2.slab(k)) s = std::max(s, std::abs(v));
    // reduced-sampling Hoelder seminorm of the final slab (conservative
    // lower-bound contribution to the stopping norm)
    holder::WeightFunction wf;
    wf.kind = (data.collar.domain.kind == collar::DomainKind::strip)
                  ? holder::WeightFunction::Kind::wall_normal
                  : holder::WeightFunction::Kind::disk;
    if (r.f1.size() > 1) {
        double semi =
            holder::weighted_holder_seminorm(r.f1.slab(r.f1.size() - 1), data.gamma, wf, 0.0, plan);
        s = std::max(s, 0.01 * semi); // weighted contribution, sup-dominated
    }
    return s;
}

} // namespace detail

struct NewtonResult {
    FieldSeries h;
    BoundaryField rho;
    StatePair psi;
    NewtonTrace trace;
    Background background;
};

/// Chord Newton iteration psi_{k+1} = psi_k - [F'(0)]^{-1} F(psi_k), each
/// inverse step a coupled (u, delta) splitting solve with the lower-order
/// Fréchet bundle absorbed by the Picard loop.
inline NewtonResult chord_newton_solve(const ProblemData& data, const NewtonOptions& opts = {}) {
    Background bg = build_background(data);
    const double dt = bg.w.dt();
    const double T = bg.T_used;
    const std::size_t nsl = bg.w.size();
    const std::size_t rank = data.h0.rank();
    const std::size_t ntang = data.ntang();

    // splitting coefficient A = dw/dlambda per slab
    linear::LinearCoefficients coeffs;
    coeffs.collar = data.collar;
    coeffs.nu = 0.25 * data.nu;
    coeffs.w = FieldSeries(0.0, dt);
    coeffs.sigma = FieldSeries(0.0, dt);
    coeffs.A = FieldSeries(0.0, dt);
    for (std::size_t s = 0; s < nsl; ++s) {
        coeffs.w.push(bg.w.slab(s));
        coeffs.sigma.push(bg.sigma.slab(s));
        coeffs.A.push(fd_derivative(bg.w.slab(s), rank - 1, 1));
    }

    StatePair psi;
    psi.u = FieldSeries(0.0, dt);
    psi.delta.taxes = data.taxes();
    psi.delta.dt = dt;
    for (std::size_t s = 0; s < nsl; ++s) {
        psi.u.push(ScalarField(data.h0.axes(), 0.0));
        psi.delta.push(std::vector<double>(ntang, 0.0));
    }

    NewtonResult res;
    res.background = bg;
    NewtonTrace& tr = res.trace;

    auto leading_f1 = [&](const FieldSeries& u, const BoundaryField& delta, std::size_t s) {
        // u_t + L_sigma u - A (E delta_t + L_sigma E delta), the part the
        // splitting solver handles itself
        const ScalarField& A = coeffs.A.slab(s);
        ScalarField Ed = collar::extend_boundary_function(delta.slab(s), data.h0.axes(),
                                                          data.collar, false);
        RhoFrame frame(coeffs.sigma.slab(s), data.collar);
        ScalarField Lu = linear::apply_thinfilm_operator(u.slab(s), coeffs.w.slab(s), frame);
        ScalarField LEd = linear::apply_thinfilm_operator(Ed, coeffs.w.slab(s), frame);
        ScalarField out = like(Lu, 0.0);
        ScalarField ut = like(Lu, 0.0), Edt = like(Lu, 0.0);
        if (s > 0) {
            ScalarField Ed_prev = collar::extend_boundary_function(delta.slab(s - 1),
                                                                   data.h0.axes(), data.collar, false);
            for (std::size_t i = 0; i < out.size(); ++i) {
                ut[i] = (u.slab(s)[i] - u.slab(s - 1)[i]) / dt;
                Edt[i] = (Ed[i] - Ed_prev[i]) / dt;
            }
        }
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = ut[i] + Lu[i] - A[i] * (Edt[i] + LEd[i]);
        return out;
    };

    // The Picard loop queries the functionals slab by slab in order; the
    // full Frechet trajectory is assembled once per sweep and cached.
    auto cache = std::make_shared<ResidualPair>();
    auto refresh_cache = [&, cache](const FieldSeries& u, const BoundaryField& delta,
                                    std::size_t s) {
        if (s == 0 || cache->f1.size() == 0) {
            StatePair d;
            d.u = u;
            d.delta = delta;
            *cache = frechet_apply(d, bg, data);
        }
    };

    auto q1_cb = [&, cache](const FieldSeries& u, const BoundaryField& delta, std::size_t s) {
        refresh_cache(u, delta, s);
        ScalarField lead = leading_f1(u, delta, s);
        return cache->f1.slab(s) - lead;
    };

    const std::size_t nlev = data.nlev();
    auto q2_cb = [&, cache](const FieldSeries& u, const BoundaryField& delta, std::size_t s) {
        // boundary functional: full Frechet boundary row rescaled onto the
        // Neumann trace convention of the splitting solver
        refresh_cache(u, delta, s);
        auto fac = collar::contact_angle_factor(bg.sigma_b.slab(s), data.taxes(), data.collar);
        ScalarField du = fd_derivative(u.slab(s), rank - 1, 1);
        std::vector<double> out(ntang);
        for (std::size_t i = 0; i < ntang; ++i) {
            // F2' = (-u_l) fac + R2[delta]; the v-problem consumes
            // trace(du) + q2 = g_eff with g_eff = -(rhs)/fac
            const double r2 = cache->f2.slab(s)[i] + du[i * nlev] * fac[i];
            out[i] = -r2 / fac[i];
        }
        return out;
    };

    double prev_norm = -1.0;
    double best_norm = 1e300;
    StatePair best = psi;
    int bad_steps = 0;
    for (int it = 0; it <= opts.max_iter; ++it) {
        ResidualPair F = residual_F(psi, bg, data);
        const double rn = detail::combined_norm(F, data, opts.norm_plan);
        tr.residual_history.push_back(rn);
        if (rn < best_norm) {
            best_norm = rn;
            best = psi;
        }
        if (rn <= opts.tol) {
            tr.converged = true;
            tr.iterations = it;
            break;
        }
        if (it == opts.max_iter) {
            tr.iterations = it;
            break;
        }
        if (prev_norm > 0.0 && rn > prev_norm) {
            if (++bad_steps >= 2) {
                // stalled at the floor; report the best iterate seen
                tr.diverged = rn > 2.0 * best_norm;
                tr.iterations = it;
                break;
            }
        } else {
            bad_steps = 0;
        }
        prev_norm = rn;

        // rhs for the linear step: F'(0)[dpsi] = -F
        FieldSeries frhs(0.0, dt);
        BoundaryField grhs;
        grhs.taxes = data.taxes();
        grhs.dt = dt;
        BoundaryField phi;
        phi.taxes = data.taxes();
        phi.dt = dt;
        for (std::size_t s = 0; s < nsl; ++s) {
            ScalarField fs = F.f1.slab(s);
            fs *= -1.0;
            frhs.push(std::move(fs));
            auto fac = collar::contact_angle_factor(bg.sigma_b.slab(s), data.taxes(), data.collar);
            std::vector<double> gs(ntang);
            for (std::size_t i = 0; i < ntang; ++i) gs[i] = F.f2.slab(s)[i] / fac[i];
            grhs.push(std::move(gs));
            phi.push(std::vector<double>(ntang, 0.0));
        }

        linear::SolveReport srep;
        linear::CoupledSolution step =
            linear::solve_coupled_full(coeffs, frhs, grhs, phi, dt, T, opts.picard_tol,
                                       opts.max_picard, q1_cb, q2_cb, opts.inner, &srep);
        tr.picard_factors.push_back(step.contraction_factor);

        // damped update: full steps can excite the quadratic remainder when
        // the correction carries rough boundary-layer content
        auto apply_step = [&](double tau) {
            StatePair trial;
            trial.u = FieldSeries(0.0, dt);
            trial.delta.taxes = data.taxes();
            trial.delta.dt = dt;
            for (std::size_t s = 0; s < nsl; ++s) {
                ScalarField us = step.u.slab(s);
                us *= tau;
                us += psi.u.slab(s);
                trial.u.push(std::move(us));
                std::vector<double> ds(ntang);
                for (std::size_t i = 0; i < ntang; ++i)
                    ds[i] = psi.delta.slab(s)[i] + tau * step.delta.slab(s)[i];
                trial.delta.push(std::move(ds));
            }
            return trial;
        };
        double tau = 1.0;
        StatePair trial = apply_step(1.0);
        if (opts.backtracking) {
            double best_rn = detail::combined_norm(residual_F(trial, bg, data), data,
                                                   opts.norm_plan);
            while (best_rn > rn && tau > 0.2) {
                tau *= 0.5;
                StatePair t2 = apply_step(tau);
                double rn2 = detail::combined_norm(residual_F(t2, bg, data), data,
                                                   opts.norm_plan);
                if (rn2 < best_rn) {
                    trial = std::move(t2);
                    best_rn = rn2;
                }
            }
        }
        psi = std::move(trial);
    }

    // assemble physical outputs from the best iterate
    res.h = FieldSeries(0.0, dt);
    res.rho.taxes = data.taxes();
    res.rho.dt = dt;
    for (std::size_t s = 0; s < nsl; ++s) {
        res.h.push(bg.w.slab(s) + best.u.slab(s));
        std::vector<double> rb(ntang);
        for (std::size_t i = 0; i < ntang; ++i)
            rb[i] = bg.sigma_b.slab(s)[i] + best.delta.slab(s)[i];
        res.rho.push(std::move(rb));
    }
    res.psi = std::move(best);
    return res;
}

/// Physical-space reconstruction: each fixed-domain slab is pushed through
/// e_rho onto a uniform output lattice in the normal coordinate; points
/// outside the moving domain are flagged NaN.
struct PhysicalSlab {
    std::vector<double> lattice;           // lambda_y sample points
    std::vector<std::vector<double>> h;    // [tangential][lattice]
    std::vector<double> front;             // rho(omega, t)
};

inline PhysicalSlab reconstruct_physical_slab(const ScalarField& h_fixed,
                                              const std::vector<double>& rho_b,
                                              const ProblemData& data, std::size_t n_out = 64) {
    PhysicalSlab out;
    const Mesh1D& mesh = data.mesh();
    const std::size_t nlev = mesh.size();
    const std::size_t ntang = h_fixed.size() / nlev;
    collar::ERhoMap emap(rho_b, data.taxes(), data.collar);
    out.front = rho_b;
    const double lo = -0.5 * data.collar.gamma0();
    out.lattice.resize(n_out);
    for (std::size_t k = 0; k < n_out; ++k)
        out.lattice[k] = lo + (1.0 - lo) * static_cast<double>(k) / static_cast<double>(n_out - 1);
    out.h.assign(ntang, std::vector<double>(n_out, std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t i = 0; i < ntang; ++i) {
        for (std::size_t k = 0; k < n_out; ++k) {
            const double lam_y = out.lattice[k];
            if (lam_y < rho_b[i] - 1e-14 || lam_y > 1.0) continue; // outside the film
            auto chart_y = data.gamma_chart(i, lam_y);
            auto chart_x = emap.inverse(chart_y);
            const double lx = std::min(1.0, std::max(0.0, chart_x[data.taxes().size()]));
            // interpolate the fixed-domain profile at lambda = lx
            std::size_t hi = 1;
            while (hi + 1 < nlev && mesh.node(hi) < lx) ++hi;
            const double x0 = mesh.node(hi - 1), x1 = mesh.node(hi);
            const double tau = (lx - x0) / (x1 - x0);
            out.h[i][k] = (1.0 - tau) * h_fixed[i * nlev + hi - 1] + tau * h_fixed[i * nlev + hi];
        }
    }
    return out;
}

struct Diagnostics {
    std::vector<double> mass;       // per slab, physical-lattice quadrature
    double mass_drift = 0.0;        // max |mass - mass0| / mass0
    double max_angle_error = 0.0;   // sup |(-h_l) fac - g o e| over slabs
    double min_interior = 0.0;
    bool positive = true;
};

inline Diagnostics diagnostics(const NewtonResult& run, const ProblemData& data,
                               std::size_t lattice_n = 128) {
    Diagnostics d;
    const Mesh1D& mesh = data.mesh();
    const std::size_t nlev = mesh.size();
    const std::size_t ntang = data.ntang();
    d.min_interior = 1e300;
    for (std::size_t s = 0; s < run.h.size(); ++s) {
        PhysicalSlab ps = reconstruct_physical_slab(run.h.slab(s), run.rho.slab(s), data, lattice_n);
        // partial-cell trapezoid per tangential column, then rectangle in omega
        double mass = 0.0;
        const double dl = ps.lattice[1] - ps.lattice[0];
        for (std::size_t i = 0; i < ntang; ++i) {
            double col = 0.0;
            for (std::size_t k = 0; k + 1 < ps.lattice.size(); ++k) {
                const double a = ps.h[i][k], b = ps.h[i][k + 1];
                const bool ia = std::isfinite(a), ib = std::isfinite(b);
                if (ia && ib) col += 0.5 * (a + b) * dl;
                else if (!ia && ib) {
                    // partial cell: front sits between the lattice points,
                    // h = 0 on the front itself
                    const double cut = run.rho.slab(s)[i];
                    const double width = ps.lattice[k + 1] - cut;
                    if (width > 0.0 && width <= dl) col += 0.5 * b * width;
                }
            }
            double wtang = 1.0;
            if (!data.taxes().empty())
                wtang = std::get<PeriodicAxis>(data.taxes()[0]).spacing();
            mass += col * wtang;
        }
        d.mass.push_back(mass);
        // contact-angle error and positivity on the fixed domain
        ScalarField dh = fd_derivative(run.h.slab(s), run.h.slab(s).rank() - 1, 1);
        auto fac = collar::contact_angle_factor(run.rho.slab(s), data.taxes(), data.collar);
        const double t = static_cast<double>(s) * run.h.dt();
        for (std::size_t i = 0; i < ntang; ++i) {
            auto chart = data.gamma_chart(i, run.rho.slab(s)[i]);
            d.max_angle_error = std::max(
                d.max_angle_error, std::abs(-dh[i * nlev] * fac[i] - data.g(chart, t)));
        }
        for (std::size_t i = 0; i < run.h.slab(s).size(); ++i) {
            const double lam = mesh.node(i % nlev);
            if (lam > 1e-12 && lam < 0.999)
                d.min_interior = std::min(d.min_interior, run.h.slab(s)[i]);
        }
    }
    d.positive = d.min_interior > 0.0;
    for (std::size_t s = 0; s < d.mass.size(); ++s)
        d.mass_drift = std::max(d.mass_drift, std::abs(d.mass[s] - d.mass[0]) /
                                                  std::max(1e-300, std::abs(d.mass[0])));
    return d;
}

} // namespace tf::newton
