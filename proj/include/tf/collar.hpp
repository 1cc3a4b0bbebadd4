#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tf/jets.hpp"
#include "tf/mesh.hpp"

namespace tf::collar {

enum class DomainKind { strip, disk };

/// Reference domain: periodic strip [-pi,pi)^{N-1} x [0,1] with the
/// degenerate contact line at x_N = 0, or the unit disk with the contact
/// line at the rim. The collar chart is (omega, lambda) with lambda the
/// signed distance to Gamma, positive into the domain.
struct DomainSpec {
    DomainKind kind = DomainKind::strip;
    int dimension = 2;
    double gamma0 = 1.0;

    void validate() const {
        if (kind == DomainKind::strip) {
            if (dimension < 1 || dimension > 3)
                throw InvalidArgument("DomainSpec: strip dimension must be 1..3");
        } else {
            if (dimension != 2) throw InvalidArgument("DomainSpec: disk dimension must be 2");
            if (!(gamma0 > 0.0 && gamma0 <= 0.5))
                throw InvalidArgument("DomainSpec: disk collar depth must lie in (0, 1/2]");
        }
    }

    static DomainSpec strip(int dim) {
        DomainSpec d;
        d.kind = DomainKind::strip;
        d.dimension = dim;
        d.gamma0 = 1.0;
        d.validate();
        return d;
    }
    static DomainSpec disk(double g0 = 0.25) {
        DomainSpec d;
        d.kind = DomainKind::disk;
        d.dimension = 2;
        d.gamma0 = g0;
        d.validate();
        return d;
    }
};

/// Extension cutoff chi: identically 1 on [0, 1/4], then a C^4 degree-9
/// blend down to 0 at 1. The plateau makes the normal derivative of every
/// extension vanish on Gamma exactly, and four continuous derivatives
/// keep the fourth-order operators' view of the extension free of
/// distributional residue.
inline double chi_blend(double s, int m) {
    switch (m) {
        case 0:
            return ((((70.0 * s - 315.0) * s + 540.0) * s - 420.0) * s + 126.0) * s * s * s * s * s;
        case 1:
            return ((((630.0 * s - 2520.0) * s + 3780.0) * s - 2520.0) * s + 630.0) * s * s * s * s;
        case 2:
            return ((((5040.0 * s - 17640.0) * s + 22680.0) * s - 12600.0) * s + 2520.0) * s * s * s;
        case 3:
            return ((((35280.0 * s - 105840.0) * s + 113400.0) * s - 50400.0) * s + 7560.0) * s * s;
        case 4:
            return ((((211680.0 * s - 529200.0) * s + 453600.0) * s - 151200.0) * s + 15120.0) * s;
        default:
            return 0.0;
    }
}

inline double chi(double s) {
    if (s <= 0.25) return 1.0;
    if (s >= 1.0) return 0.0;
    return 1.0 - chi_blend((s - 0.25) / 0.75, 0);
}

inline double chi_d(double s, int m) {
    if (m == 0) return chi(s);
    if (s <= 0.25 || s >= 1.0) return 0.0;
    const double scale = std::pow(1.0 / 0.75, m);
    return -chi_blend((s - 0.25) / 0.75, m) * scale;
}

inline Jet2 chi_jet(const Jet2& s) {
    const double v = s.value();
    std::array<double, 5> d{};
    for (int m = 0; m <= 4; ++m) d[static_cast<std::size_t>(m)] = chi_d(v, m);
    return s.compose(d);
}

/// Collar chart bundled with the domain. All volume fields are stored on
/// (tangential axes...) x Mesh1D grids where the last axis is lambda
/// (strip: lambda = x_N; disk: lambda = 1 - r).
struct CollarMap {
    DomainSpec domain;

    double gamma0() const { return domain.gamma0; }

    /// chart -> physical embedding (x', x_N) or (X, Y)
    std::array<double, 3> to_physical(const std::array<double, 3>& chart) const {
        if (domain.kind == DomainKind::strip) return chart;
        const double theta = chart[0], lam = chart[1];
        const double r = 1.0 - lam;
        return {r * std::cos(theta), r * std::sin(theta), 0.0};
    }

    std::array<double, 3> to_chart(const std::array<double, 3>& phys) const {
        if (domain.kind == DomainKind::strip) return phys;
        const double r = std::hypot(phys[0], phys[1]);
        return {std::atan2(phys[1], phys[0]), 1.0 - r, 0.0};
    }
};

/// Boundary data over Gamma x time: one value per tangential node per
/// slab. The tangential axes may be empty (N = 1 strip).
struct BoundaryField {
    std::vector<Axis> taxes;
    std::vector<std::vector<double>> slabs;
    double t0 = 0.0;
    double dt = 0.0;

    std::size_t ntang() const {
        std::size_t n = 1;
        for (const auto& a : taxes) n *= axis_size(a);
        return n;
    }
    std::size_t size() const { return slabs.size(); }
    std::vector<double>& slab(std::size_t i) { return slabs.at(i); }
    const std::vector<double>& slab(std::size_t i) const { return slabs.at(i); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }

    void push(std::vector<double> v) {
        if (v.size() != ntang()) throw InvalidArgument("BoundaryField: slab size mismatch");
        slabs.push_back(std::move(v));
    }
};

/// Per-node transition matrix E_rho mapping grad_x to grad_rho for the
/// strip chart; identity where rho and grad rho vanish.
struct TransitionMatrix {
    // row-major N x N for the local dimension
    std::array<double, 9> e{};
    int n = 0;
};

inline TransitionMatrix strip_transition(const std::vector<double>& grad_t_rho, double rho_lambda,
                                         int dim) {
    TransitionMatrix m;
    m.n = dim;
    const double inv = 1.0 / (1.0 + rho_lambda);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            m.e[static_cast<std::size_t>(i * dim + j)] = (i == j) ? 1.0 : 0.0;
    for (int i = 0; i + 1 < dim; ++i)
        m.e[static_cast<std::size_t>(i * dim + (dim - 1))] =
            -grad_t_rho[static_cast<std::size_t>(i)] * inv;
    m.e[static_cast<std::size_t>(dim * dim - 1)] = inv;
    return m;
}

/// Extend a boundary slab into the volume: E rho(x) = rho(omega) chi(lambda/gamma0).
/// Commutes with time differencing by construction (chi is t-independent).
inline ScalarField extend_boundary_function(const std::vector<double>& rho_b,
                                            const std::vector<Axis>& volume_axes,
                                            const CollarMap& collar,
                                            bool check_amplitude = true) {
    const std::size_t rank = volume_axes.size();
    const Mesh1D& mesh = std::get<Mesh1D>(volume_axes[rank - 1]);
    ScalarField out(volume_axes, 0.0);
    const std::size_t nlev = mesh.size();
    const std::size_t ntang = out.size() / nlev;
    if (rho_b.size() != ntang)
        throw InvalidArgument("extend_boundary_function: boundary slab size mismatch");
    // the amplitude bound is a geometric contract for deviations fed to
    // the mapping; linear operator applications extend arbitrary
    // directions and skip it
    double amp = 0.0;
    for (double v : rho_b) amp = std::max(amp, std::abs(v));
    if (check_amplitude && amp > 0.5 * collar.gamma0())
        throw GeometryError("extend_boundary_function: amplitude exceeds gamma0/2");
    for (std::size_t i = 0; i < ntang; ++i)
        for (std::size_t j = 0; j < nlev; ++j)
            out[i * nlev + j] = rho_b[i] * chi(mesh.node(j) / collar.gamma0());
    return out;
}

namespace detail {

/// lambda-derivative (last axis) of a field
inline ScalarField d_lambda(const ScalarField& f) { return fd_derivative(f, f.rank() - 1, 1); }

inline void check_diffeo(const ScalarField& rho_lambda) {
    for (std::size_t i = 0; i < rho_lambda.size(); ++i)
        if (!(1.0 + rho_lambda[i] > 0.0))
            throw GeometryError("collar: 1 + rho_lambda <= 0, mapping is not a diffeomorphism");
}

} // namespace detail

/// Gradient in the mapped frame: components returned in the chart frame
/// (strip: Cartesian tangentials then normal; disk: orthonormal (r, theta)).
struct VectorField {
    std::vector<ScalarField> comps;
};

/// Shared precomputation for one (rho, collar) pair.
struct RhoFrame {
    ScalarField rho;
    ScalarField rho_lambda;
    std::vector<ScalarField> rho_tang; // tangential derivatives of rho
    const CollarMap* collar = nullptr;

    RhoFrame(const ScalarField& rho_vol, const CollarMap& cm) : rho(rho_vol), collar(&cm) {
        rho_lambda = detail::d_lambda(rho_vol);
        detail::check_diffeo(rho_lambda);
        for (std::size_t k = 0; k + 1 < rho_vol.rank(); ++k)
            rho_tang.push_back(fd_derivative(rho_vol, k, 1));
    }
};

/// twisted lambda-derivative: (d/dlambda_y u) o e_rho
inline ScalarField twisted_lambda(const ScalarField& u, const RhoFrame& fr) {
    ScalarField du = detail::d_lambda(u);
    ScalarField out = like(u);
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = du[i] / (1.0 + fr.rho_lambda[i]);
    return out;
}

/// twisted tangential derivative along chart axis k
inline ScalarField twisted_tangential(const ScalarField& u, const RhoFrame& fr, std::size_t k) {
    ScalarField du = fd_derivative(u, k, 1);
    ScalarField dl = detail::d_lambda(u);
    ScalarField out = like(u);
    for (std::size_t i = 0; i < u.size(); ++i)
        out[i] = du[i] - fr.rho_tang[k][i] * dl[i] / (1.0 + fr.rho_lambda[i]);
    return out;
}

namespace detail {

inline ScalarField disk_radius_mapped(const ScalarField& rho) {
    // r_y = (1 - lambda) - rho at every node
    ScalarField r = like(rho);
    const std::size_t nlev = axis_size(rho.axis(rho.rank() - 1));
    const Mesh1D& mesh = std::get<Mesh1D>(rho.axis(rho.rank() - 1));
    for (std::size_t i = 0; i < rho.size(); ++i)
        r[i] = (1.0 - mesh.node(i % nlev)) - rho[i];
    return r;
}

} // namespace detail

/// nabla_rho u: all components of the mapped gradient.
inline VectorField nabla_rho(const ScalarField& u, const RhoFrame& fr) {
    VectorField g;
    const CollarMap& cm = *fr.collar;
    if (cm.domain.kind == DomainKind::strip) {
        for (std::size_t k = 0; k + 1 < u.rank(); ++k)
            g.comps.push_back(twisted_tangential(u, fr, k));
        if (u.rank() >= 1) g.comps.push_back(twisted_lambda(u, fr));
        return g;
    }
    // disk: component along r_y, then along theta (orthonormal)
    ScalarField dr = twisted_lambda(u, fr); // d/dlambda_y
    for (std::size_t i = 0; i < dr.size(); ++i) dr[i] = -dr[i]; // d/dr_y = -d/dlambda_y
    ScalarField dth = twisted_tangential(u, fr, 0);
    ScalarField ry = detail::disk_radius_mapped(fr.rho);
    for (std::size_t i = 0; i < dth.size(); ++i)
        dth[i] = (std::abs(ry[i]) > 1e-10) ? dth[i] / ry[i] : 0.0;
    g.comps.push_back(dr);
    g.comps.push_back(dth);
    return g;
}

/// divergence of a chart-frame vector field in the mapped frame
inline ScalarField div_rho(const VectorField& F, const RhoFrame& fr) {
    const CollarMap& cm = *fr.collar;
    if (cm.domain.kind == DomainKind::strip) {
        ScalarField acc = like(F.comps[0]);
        const std::size_t n = F.comps.size();
        for (std::size_t k = 0; k + 1 < n; ++k) acc += twisted_tangential(F.comps[k], fr, k);
        acc += twisted_lambda(F.comps[n - 1], fr);
        return acc;
    }
    // disk: div = d/dr_y F_r + F_r / r_y + (1/r_y) d/dtheta_y F_theta
    ScalarField drFr = twisted_lambda(F.comps[0], fr);
    for (std::size_t i = 0; i < drFr.size(); ++i) drFr[i] = -drFr[i];
    ScalarField dthFth = twisted_tangential(F.comps[1], fr, 0);
    ScalarField ry = detail::disk_radius_mapped(fr.rho);
    ScalarField acc = like(F.comps[0]);
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double inv = (std::abs(ry[i]) > 1e-10) ? 1.0 / ry[i] : 0.0;
        acc[i] = drFr[i] + F.comps[0][i] * inv + dthFth[i] * inv;
    }
    return acc;
}

inline ScalarField laplace_rho(const ScalarField& u, const RhoFrame& fr) {
    return div_rho(nabla_rho(u, fr), fr);
}

/// Forward-mode differentiation of the twisted calculus: every field
/// carries its directional derivative along a given (du, d rho) pair, so
/// the assembled Frechet action is the exact derivative of the discrete
/// composition (the continuum shift identities do not survive a
/// lambda-dependent extension).
struct DualField {
    ScalarField v;
    ScalarField d;
};

struct DualFrame {
    RhoFrame base;           // frame at rho
    ScalarField e;           // direction in the rho slot
    ScalarField e_lambda;
    std::vector<ScalarField> e_tang;

    DualFrame(const ScalarField& rho, const ScalarField& dir, const CollarMap& cm)
        : base(rho, cm), e(dir) {
        e_lambda = detail::d_lambda(dir);
        for (std::size_t k = 0; k + 1 < dir.rank(); ++k)
            e_tang.push_back(fd_derivative(dir, k, 1));
    }
};

inline DualField dual_twisted_lambda(const DualField& u, const DualFrame& fr) {
    ScalarField dv = detail::d_lambda(u.v);
    ScalarField dd = detail::d_lambda(u.d);
    DualField out{like(u.v), like(u.v)};
    for (std::size_t i = 0; i < u.v.size(); ++i) {
        const double beta = 1.0 / (1.0 + fr.base.rho_lambda[i]);
        out.v[i] = dv[i] * beta;
        out.d[i] = dd[i] * beta - dv[i] * beta * beta * fr.e_lambda[i];
    }
    return out;
}

inline DualField dual_twisted_tangential(const DualField& u, const DualFrame& fr, std::size_t k) {
    ScalarField tv = fd_derivative(u.v, k, 1);
    ScalarField td = fd_derivative(u.d, k, 1);
    ScalarField lv = detail::d_lambda(u.v);
    ScalarField ld = detail::d_lambda(u.d);
    DualField out{like(u.v), like(u.v)};
    for (std::size_t i = 0; i < u.v.size(); ++i) {
        const double beta = 1.0 / (1.0 + fr.base.rho_lambda[i]);
        const double qk = fr.base.rho_tang[k][i] * beta;
        const double dqk = beta * fr.e_tang[k][i] -
                           fr.base.rho_tang[k][i] * beta * beta * fr.e_lambda[i];
        out.v[i] = tv[i] - qk * lv[i];
        out.d[i] = td[i] - qk * ld[i] - dqk * lv[i];
    }
    return out;
}

inline DualField dual_mul(const DualField& a, const DualField& b) {
    DualField out{like(a.v), like(a.v)};
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        out.v[i] = a.v[i] * b.v[i];
        out.d[i] = a.v[i] * b.d[i] + a.d[i] * b.v[i];
    }
    return out;
}

inline DualField dual_add(const DualField& a, const DualField& b) {
    DualField out{like(a.v), like(a.v)};
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        out.v[i] = a.v[i] + b.v[i];
        out.d[i] = a.d[i] + b.d[i];
    }
    return out;
}

struct DualVector {
    std::vector<DualField> comps;
};

inline DualVector dual_nabla_rho(const DualField& u, const DualFrame& fr) {
    DualVector g;
    const CollarMap& cm = *fr.base.collar;
    if (cm.domain.kind == DomainKind::strip) {
        for (std::size_t k = 0; k + 1 < u.v.rank(); ++k)
            g.comps.push_back(dual_twisted_tangential(u, fr, k));
        g.comps.push_back(dual_twisted_lambda(u, fr));
        return g;
    }
    DualField dr = dual_twisted_lambda(u, fr);
    for (std::size_t i = 0; i < dr.v.size(); ++i) {
        dr.v[i] = -dr.v[i];
        dr.d[i] = -dr.d[i];
    }
    DualField dth = dual_twisted_tangential(u, fr, 0);
    ScalarField ry = detail::disk_radius_mapped(fr.base.rho);
    for (std::size_t i = 0; i < dth.v.size(); ++i) {
        if (std::abs(ry[i]) > 1e-10) {
            const double inv = 1.0 / ry[i];
            // d(1/r_y) = e / r_y^2 since r_y = (1 - lambda) - rho
            dth.d[i] = dth.d[i] * inv + dth.v[i] * fr.e[i] * inv * inv;
            dth.v[i] *= inv;
        } else {
            dth.v[i] = 0.0;
            dth.d[i] = 0.0;
        }
    }
    g.comps.push_back(dr);
    g.comps.push_back(dth);
    return g;
}

inline DualField dual_div_rho(const DualVector& F, const DualFrame& fr) {
    const CollarMap& cm = *fr.base.collar;
    if (cm.domain.kind == DomainKind::strip) {
        const std::size_t n = F.comps.size();
        DualField acc{like(F.comps[0].v, 0.0), like(F.comps[0].v, 0.0)};
        for (std::size_t k = 0; k + 1 < n; ++k)
            acc = dual_add(acc, dual_twisted_tangential(F.comps[k], fr, k));
        acc = dual_add(acc, dual_twisted_lambda(F.comps[n - 1], fr));
        return acc;
    }
    DualField drFr = dual_twisted_lambda(F.comps[0], fr);
    DualField dthF = dual_twisted_tangential(F.comps[1], fr, 0);
    ScalarField ry = detail::disk_radius_mapped(fr.base.rho);
    DualField acc{like(F.comps[0].v, 0.0), like(F.comps[0].v, 0.0)};
    for (std::size_t i = 0; i < acc.v.size(); ++i) {
        const double inv = (std::abs(ry[i]) > 1e-10) ? 1.0 / ry[i] : 0.0;
        const double dinv = (std::abs(ry[i]) > 1e-10) ? fr.e[i] * inv * inv : 0.0;
        acc.v[i] = -drFr.v[i] + F.comps[0].v[i] * inv + dthF.v[i] * inv;
        acc.d[i] = -drFr.d[i] + F.comps[0].d[i] * inv + F.comps[0].v[i] * dinv +
                   dthF.d[i] * inv + dthF.v[i] * dinv;
    }
    return acc;
}

inline DualField dual_laplace_rho(const DualField& u, const DualFrame& fr) {
    return dual_div_rho(dual_nabla_rho(u, fr), fr);
}

/// Full transformed thin-film residual
///   F1 = h_t - [h_lambda/(1+rho_lambda)] rho_t + div_rho(h^2 grad_rho(Delta_rho h))
inline ScalarField transform_pde_residual(const ScalarField& h, const ScalarField& h_t,
                                          const ScalarField& rho, const ScalarField& rho_t,
                                          const CollarMap& collar) {
    RhoFrame fr(rho, collar);
    ScalarField lap = laplace_rho(h, fr);
    VectorField flux = nabla_rho(lap, fr);
    ScalarField h2 = hadamard(h, h);
    for (auto& c : flux.comps) c = hadamard(h2, c);
    ScalarField out = div_rho(flux, fr);
    ScalarField hl = detail::d_lambda(h);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += h_t[i] - hl[i] / (1.0 + fr.rho_lambda[i]) * rho_t[i];
    return out;
}

/// Contact-angle bracket evaluated on Gamma:
///   (1/(1+rho_lambda)) [1 + sum m_ij rho_{w_i} rho_{w_j}]^{1/2}
/// rho_lambda vanishes on Gamma by the extension design; strip m = delta,
/// disk m = 1/r_y^2 at the mapped radius.
inline std::vector<double> contact_angle_factor(const std::vector<double>& rho_b,
                                                const std::vector<Axis>& taxes,
                                                const CollarMap& collar) {
    double amp = 0.0;
    for (double v : rho_b) amp = std::max(amp, std::abs(v));
    if (amp > 0.5 * collar.gamma0())
        throw GeometryError("contact_angle_factor: amplitude exceeds gamma0/2");
    const std::size_t n = rho_b.size();
    std::vector<double> out(n, 1.0);
    if (taxes.empty()) return out; // N = 1: no tangential variation
    ScalarField rb(taxes, rho_b);
    std::vector<ScalarField> grads;
    for (std::size_t k = 0; k < taxes.size(); ++k) grads.push_back(fd_derivative(rb, k, 1));
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        if (collar.domain.kind == DomainKind::strip) {
            for (const auto& g : grads) q += g[i] * g[i];
        } else {
            const double ry = 1.0 - rho_b[i];
            q = grads[0][i] * grads[0][i] / (ry * ry);
        }
        out[i] = std::sqrt(1.0 + q);
    }
    return out;
}

/// e_rho in chart coordinates: (omega, lambda) -> (omega, lambda + rho chi).
/// rho_b is one boundary slab; evaluation interpolates linearly on the
/// tangential grid. Inverse by fixed-point iteration (<= 5 sweeps).
class ERhoMap {
public:
    ERhoMap(std::vector<double> rho_b, std::vector<Axis> taxes, const CollarMap& collar)
        : rho_(std::move(rho_b)), taxes_(std::move(taxes)), collar_(collar) {
        double amp = 0.0;
        for (double v : rho_) amp = std::max(amp, std::abs(v));
        if (amp > 0.5 * collar_.gamma0())
            throw GeometryError("ERhoMap: amplitude exceeds gamma0/2");
    }

    double rho_at(const std::array<double, 3>& chart) const {
        if (taxes_.empty()) return rho_[0];
        // multilinear interpolation over the periodic tangential grid
        std::array<double, 2> w{};
        std::array<std::size_t, 2> i0{}, i1{};
        for (std::size_t k = 0; k < taxes_.size(); ++k) {
            const auto& pa = std::get<PeriodicAxis>(taxes_[k]);
            double s = (chart[k] + kPi) / pa.spacing();
            double fl = std::floor(s);
            w[k] = s - fl;
            long base = static_cast<long>(fl);
            i0[k] = pa.wrap(base);
            i1[k] = pa.wrap(base + 1);
        }
        if (taxes_.size() == 1) return (1.0 - w[0]) * rho_[i0[0]] + w[0] * rho_[i1[0]];
        const std::size_t n1 = axis_size(taxes_[1]);
        auto v = [&](std::size_t a, std::size_t b) { return rho_[a * n1 + b]; };
        return (1.0 - w[0]) * ((1.0 - w[1]) * v(i0[0], i0[1]) + w[1] * v(i0[0], i1[1])) +
               w[0] * ((1.0 - w[1]) * v(i1[0], i0[1]) + w[1] * v(i1[0], i1[1]));
    }

    double extension_at(const std::array<double, 3>& chart) const {
        return rho_at(chart) * chi(chart[taxes_.size()] / collar_.gamma0());
    }

    std::array<double, 3> forward(const std::array<double, 3>& chart) const {
        std::array<double, 3> y = chart;
        y[taxes_.size()] = chart[taxes_.size()] + extension_at(chart);
        return y;
    }

    std::array<double, 3> inverse(const std::array<double, 3>& chart_y) const {
        // Newton iteration on lambda + rho(w) chi(lambda/g0) = lambda_y;
        // quadratic convergence reaches 1e-12 within a handful of sweeps
        const std::size_t lam_i = taxes_.size();
        const double g0 = collar_.gamma0();
        std::array<double, 3> x = chart_y;
        const double r = rho_at(x); // omega is preserved by the map
        for (int it = 0; it < 5; ++it) {
            const double lam = x[lam_i];
            const double res = lam + r * chi(lam / g0) - chart_y[lam_i];
            const double slope = 1.0 + r * chi_d(lam / g0, 1) / g0;
            x[lam_i] = lam - res / slope;
            if (std::abs(res) <= 1e-13) break;
        }
        return x;
    }

    const std::vector<Axis>& taxes() const { return taxes_; }

private:
    std::vector<double> rho_;
    std::vector<Axis> taxes_;
    CollarMap collar_;
};

} // namespace tf::collar
