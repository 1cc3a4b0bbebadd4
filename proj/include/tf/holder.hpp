#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tf/mesh.hpp"

namespace tf::holder {

/// Boundary-distance weight d(x). Wall-normal: d = x_N (last axis of a
/// strip field). Disk: d = lambda near the rim, smoothly capped at 1 with
/// zero slope in the interior (all such weights give equivalent norms).
struct WeightFunction {
    enum class Kind { wall_normal, disk };
    Kind kind = Kind::wall_normal;

    double value(double last_axis_coord) const {
        const double lam = last_axis_coord;
        if (kind == Kind::wall_normal) return lam;
        if (lam <= 0.5) return lam;
        // quintic Hermite cap: slope 1 at 0.5, value 1 and flat at 1
        const double s = 2.0 * (lam - 0.5);
        const double H = s + s * s * s * (4.0 - 7.0 * s + 3.0 * s * s);
        return 0.5 + 0.5 * H;
    }

    /// empirical check of nu * dist <= d <= dist / nu near the boundary
    double check_equivalence(const Mesh1D& mesh) const {
        double nu = 1.0;
        for (std::size_t j = 1; j < mesh.size(); ++j) {
            const double dist = mesh.node(j); // both charts: dist = lambda
            if (dist > 0.5) break;
            const double d = value(mesh.node(j));
            nu = std::min({nu, d / dist, dist / d});
        }
        return nu;
    }
};

/// Deterministic pair-sampling plan for the sup estimators.
struct SamplePlan {
    std::size_t random_pairs = 100000;
    bool exhaustive = false; // exact O(n^2) sweep for small fields
    std::uint64_t seed = 0x5DEECE66Dull;
};

struct NormReport {
    double sup_norm = 0.0;
    std::map<std::string, double> weighted_seminorms;
    double time_seminorm = 0.0;
    std::size_t pair_sample_count = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    s += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Geometry of one grid node: embedding coordinates (for distances) and
/// the weight value.
struct NodeGeometry {
    std::vector<std::array<double, 3>> pos; // up to 3 embedding coords
    std::vector<double> d;
    std::size_t dim = 0;
};

inline NodeGeometry node_geometry(const ScalarField& f, const WeightFunction& w) {
    NodeGeometry g;
    const std::size_t n = f.size();
    g.pos.resize(n);
    g.d.resize(n);
    const std::size_t rank = f.rank();
    std::vector<std::size_t> idx(rank, 0);
    const bool disk = (w.kind == WeightFunction::Kind::disk);
    g.dim = disk ? 2 : rank;
    for (std::size_t flat = 0; flat < n; ++flat) {
        const double lam = axis_coord(f.axis(rank - 1), idx[rank - 1]);
        if (disk) {
            const double theta = axis_coord(f.axis(0), idx[0]);
            const double r = 1.0 - lam;
            g.pos[flat] = {r * std::cos(theta), r * std::sin(theta), 0.0};
        } else {
            std::array<double, 3> p{0.0, 0.0, 0.0};
            for (std::size_t k = 0; k < rank; ++k) p[k] = axis_coord(f.axis(k), idx[k]);
            g.pos[flat] = p;
        }
        g.d[flat] = w.value(lam);
        for (std::size_t k = rank; k-- > 0;) {
            if (++idx[k] < f.axis_len(k)) break;
            idx[k] = 0;
        }
    }
    return g;
}

/// Distance respecting periodic wrap on leading strip axes.
inline double node_distance(const ScalarField& f, const WeightFunction& w,
                            const NodeGeometry& g, std::size_t a, std::size_t b) {
    if (w.kind == WeightFunction::Kind::disk) {
        double dx = g.pos[a][0] - g.pos[b][0];
        double dy = g.pos[a][1] - g.pos[b][1];
        return std::sqrt(dx * dx + dy * dy);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < g.dim; ++k) {
        double dd = std::abs(g.pos[a][k] - g.pos[b][k]);
        if (k + 1 < f.rank() && axis_periodic(f.axis(k)))
            dd = std::min(dd, 2.0 * kPi - dd);
        acc += dd * dd;
    }
    return std::sqrt(acc);
}

template <typename Visit>
inline std::size_t for_each_pair(const ScalarField& f, const SamplePlan& plan, Visit&& visit) {
    const std::size_t n = f.size();
    std::size_t count = 0;
    if (plan.exhaustive) {
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b) {
                visit(a, b);
                ++count;
            }
        return count;
    }
    // all axis-adjacent pairs
    for (std::size_t k = 0; k < f.rank(); ++k) {
        const std::size_t len = f.axis_len(k);
        const std::size_t stride = f.stride(k);
        const std::size_t nlines = n / len;
        for (std::size_t line = 0; line < nlines; ++line) {
            const std::size_t outer = line / stride;
            const std::size_t inner = line % stride;
            const std::size_t base = outer * stride * len + inner;
            for (std::size_t j = 0; j + 1 < len; ++j) {
                visit(base + j * stride, base + (j + 1) * stride);
                ++count;
            }
        }
    }
    // fixed-seed random pairs
    std::uint64_t s = plan.seed;
    for (std::size_t t = 0; t < plan.random_pairs; ++t) {
        std::size_t a = static_cast<std::size_t>(splitmix64(s) % n);
        std::size_t b = static_cast<std::size_t>(splitmix64(s) % n);
        if (a == b) continue;
        visit(a, b);
        ++count;
    }
    return count;
}

} // namespace detail

/// Lower-bound estimator of the weighted Hoelder seminorm
///   sup d(x,xb)^{gamma/2} |d^p u(x) - d^p u(xb)| / |x - xb|^gamma,
/// d(x,xb) = max(d(x), d(xb)), over adjacent plus fixed-seed random pairs.
inline double weighted_holder_seminorm(const ScalarField& field, double gamma,
                                       const WeightFunction& weight, double weight_power,
                                       const SamplePlan& plan = SamplePlan{},
                                       std::size_t* pair_count = nullptr) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw InvalidArgument("weighted_holder_seminorm: gamma must lie in (0,1)");
    if (field.size() < 2)
        throw InvalidArgument("weighted_holder_seminorm: need at least 2 nodes");

    const auto geom = detail::node_geometry(field, weight);
    std::vector<double> v(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        double w = (weight_power == 0.0) ? 1.0 : std::pow(geom.d[i], weight_power);
        v[i] = w * field[i];
    }
    double best = 0.0;
    std::size_t cnt = detail::for_each_pair(field, plan, [&](std::size_t a, std::size_t b) {
        if (!std::isfinite(v[a]) || !std::isfinite(v[b])) return;
        const double dist = detail::node_distance(field, weight, geom, a, b);
        if (dist <= 0.0) return;
        const double dmax = std::max(geom.d[a], geom.d[b]);
        const double q = std::pow(dmax, 0.5 * gamma) * std::abs(v[a] - v[b]) /
                         std::pow(dist, gamma);
        best = std::max(best, q);
    });
    if (pair_count) *pair_count = cnt;
    return best;
}

/// Plain (unweighted) Hoelder seminorm estimator with exponent `expo`.
inline double holder_seminorm(const ScalarField& field, double expo,
                              const WeightFunction& weight, const SamplePlan& plan = SamplePlan{}) {
    const auto geom = detail::node_geometry(field, weight);
    double best = 0.0;
    detail::for_each_pair(field, plan, [&](std::size_t a, std::size_t b) {
        if (!std::isfinite(field[a]) || !std::isfinite(field[b])) return;
        const double dist = detail::node_distance(field, weight, geom, a, b);
        if (dist <= 0.0) return;
        best = std::max(best, std::abs(field[a] - field[b]) / std::pow(dist, expo));
    });
    return best;
}

inline double sup_norm(const ScalarField& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (std::isfinite(f[i])) s = std::max(s, std::abs(f[i]));
    return s;
}

namespace detail {

/// All multi-indices of total order `total` over `rank` axes.
inline std::vector<std::vector<int>> multi_indices(std::size_t rank, int total) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(rank, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
        if (k + 1 == rank) {
            cur[k] = left;
            out.push_back(cur);
            return;
        }
        for (int i = 0; i <= left; ++i) {
            cur[k] = i;
            rec(k + 1, left - i);
        }
    };
    if (rank > 0) rec(0, total);
    return out;
}

inline ScalarField apply_multi_derivative(const ScalarField& f, const std::vector<int>& alpha) {
    ScalarField g = f;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        int m = alpha[k];
        while (m > 0) {
            int step = std::min(m, 4);
            g = fd_derivative(g, k, step);
            m -= step;
        }
    }
    return g;
}

inline std::string alpha_name(const std::vector<int>& alpha) {
    std::string s = "D^(";
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        if (k) s += ",";
        s += std::to_string(alpha[k]);
    }
    s += ")";
    return s;
}

inline ScalarField weight_scaled(const ScalarField& f, const WeightFunction& w, double power) {
    ScalarField g = like(f);
    const std::size_t rank = f.rank();
    const std::size_t nlev = f.axis_len(rank - 1);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double lam = axis_coord(f.axis(rank - 1), i % nlev);
        g[i] = std::pow(w.value(lam), power) * f[i];
    }
    return g;
}

} // namespace detail

/// |u|^(0) plus the weighted seminorms of all fourth derivatives,
/// the solution-space norm of the stationary problem.
inline NormReport c4gamma_norm(const ScalarField& field, double gamma,
                               const WeightFunction& weight, const SamplePlan& plan = SamplePlan{}) {
    for (std::size_t k = 0; k < field.rank(); ++k)
        if (field.axis_len(k) < 8)
            throw InvalidArgument("c4gamma_norm: each axis needs >= 8 nodes");
    NormReport rep;
    rep.sup_norm = sup_norm(field);
    for (const auto& alpha : detail::multi_indices(field.rank(), 4)) {
        ScalarField d4 = detail::apply_multi_derivative(field, alpha);
        std::size_t cnt = 0;
        double s = weighted_holder_seminorm(d4, gamma, weight, 2.0, plan, &cnt);
        rep.weighted_seminorms[detail::alpha_name(alpha)] = s;
        rep.pair_sample_count = cnt;
    }
    return rep;
}

/// Adds the gamma/4 time-difference seminorm of D_t u (second-order
/// differencing in t) to the slab-wise maxima of the space norm.
inline NormReport parabolic_norm(const FieldSeries& series, double gamma,
                                 const WeightFunction& weight, const SamplePlan& plan = SamplePlan{}) {
    if (series.size() < 3) throw InvalidArgument("parabolic_norm: need >= 3 slabs");
    NormReport rep;
    for (std::size_t s = 0; s < series.size(); ++s) {
        NormReport r = c4gamma_norm(series.slab(s), gamma, weight, plan);
        rep.sup_norm = std::max(rep.sup_norm, r.sup_norm);
        for (const auto& [k, v] : r.weighted_seminorms) {
            auto it = rep.weighted_seminorms.find(k);
            if (it == rep.weighted_seminorms.end()) rep.weighted_seminorms[k] = v;
            else it->second = std::max(it->second, v);
        }
        rep.pair_sample_count = r.pair_sample_count;
    }
    // D_t u by second-order differences
    const double dt = series.dt();
    const std::size_t ns = series.size();
    std::vector<ScalarField> dtu;
    dtu.reserve(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        ScalarField g = like(series.slab(s));
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (s == 0)
                g[i] = (-1.5 * series.slab(0)[i] + 2.0 * series.slab(1)[i] -
                        0.5 * series.slab(2)[i]) / dt;
            else if (s + 1 == ns)
                g[i] = (1.5 * series.slab(ns - 1)[i] - 2.0 * series.slab(ns - 2)[i] +
                        0.5 * series.slab(ns - 3)[i]) / dt;
            else
                g[i] = (series.slab(s + 1)[i] - series.slab(s - 1)[i]) / (2.0 * dt);
        }
        dtu.push_back(std::move(g));
    }
    double ts = 0.0;
    for (std::size_t a = 0; a < ns; ++a)
        for (std::size_t b = a + 1; b < ns; ++b) {
            const double dts = std::pow(static_cast<double>(b - a) * dt, 0.25 * gamma);
            for (std::size_t i = 0; i < dtu[a].size(); ++i)
                ts = std::max(ts, std::abs(dtu[b][i] - dtu[a][i]) / dts);
        }
    rep.time_seminorm = ts;
    return rep;
}

/// One interpolation inequality: lhs <= eps * a_term + (C/eps) * b_term.
struct InterpolationLine {
    std::string label;
    double lhs = 0.0, a_term = 0.0, b_term = 0.0;
    double calibrated_c = 0.0;
    double ratio = 0.0; // lhs / rhs at the calibrated constant
    bool pass = false;
};

struct InterpolationReport {
    std::vector<InterpolationLine> lines;
    bool all_pass = true;
};

/// Frozen constants, calibrated once on the fixed-seed 20-field corpus at
/// gamma = 0.25, eps = 0.5 (corpus maxima times a 1.25 margin). Every such
/// constant is implicit in the source estimates; pass/fail is relative to
/// these values.
namespace calib {
inline constexpr double kInterpolationC[8] = {0.18, 0.64, 0.20, 0.42, 0.60, 0.35, 0.95, 0.18};
inline constexpr double kLemma021C = 0.82;
inline constexpr double kGamma = 0.25;
inline constexpr double kEpsilon = 0.5;
} // namespace calib

/// The fixed-seed corpus the constants were frozen on.
inline std::vector<ScalarField> calibration_corpus() {
    PeriodicAxis pa(24);
    auto mesh = make_graded_mesh(24, 2.0);
    std::vector<Axis> axes{Axis(pa), Axis(mesh)};
    std::uint64_t s = 0xC0FFEE;
    auto rng = [&]() {
        double r = static_cast<double>(detail::splitmix64(s) % 100000) / 50000.0 - 1.0;
        return r;
    };
    std::vector<ScalarField> out;
    for (int t = 0; t < 20; ++t) {
        double a0 = rng(), a1 = rng(), a2 = rng(), a3 = rng(), a4 = rng(), ph = rng() * kPi;
        int k1 = 1 + (t % 3), k2 = 1 + (t % 2);
        ScalarField f(axes, 0.0);
        for (std::size_t i = 0; i < 24; ++i)
            for (std::size_t j = 0; j < mesh.size(); ++j) {
                double xp = pa.coord(i), xn = mesh.node(j);
                f[i * mesh.size() + j] = a0 + a1 * std::cos(k1 * xp + ph) * xn * xn +
                                         a2 * std::sin(k2 * xp) * (1.0 - xn) * xn +
                                         a3 * xn * xn * xn + a4 * std::cos(xp) * std::exp(-xn);
            }
        out.push_back(std::move(f));
    }
    return out;
}

/// Fixed-seed wall-normal profiles for the Hardy calibration.
inline std::vector<std::vector<double>> hardy_corpus(const Mesh1D& mesh) {
    std::uint64_t s = 0xFEEDFACE;
    auto rng = [&]() {
        return static_cast<double>(detail::splitmix64(s) % 100000) / 50000.0 - 1.0;
    };
    std::vector<std::vector<double>> out;
    for (int t = 0; t < 20; ++t) {
        double a0 = rng(), a1 = rng(), a2 = rng(), a3 = rng();
        std::vector<double> v(mesh.size());
        for (std::size_t j = 0; j < mesh.size(); ++j) {
            double x = mesh.node(j);
            v[j] = a0 + a1 * x + a2 * std::sin(3.0 * x) + a3 * x * x;
        }
        out.push_back(std::move(v));
    }
    return out;
}

namespace detail {

struct TermSet {
    double sup_d2_d4 = 0.0;  // sum_{|a|=4} |d^2 D^a u|^0
    double sem_d2_d4 = 0.0;  // sum_{|a|=4} <d^2 D^a u>
    double sem_d2_d3 = 0.0;  // sum_{|a|=3} <d^2 D^a u>
    double sup_d1_d3 = 0.0;  // sum_{|a|=3} |d D^a u|^0
    double sem_d1_d3 = 0.0;
    double sup_d1_d2 = 0.0;  // sum_{|a|=2} |d D^a u|^0
    double sem_d1_d2 = 0.0;
    double sup_d1 = 0.0;     // sum_{|a|=1} |D^a u|^0
    double sem_d1 = 0.0;     // sum_{|a|=1} <D^a u>
    double sup_u = 0.0;
    double l2_u = 0.0;
};

inline TermSet gather_terms(const ScalarField& u, double gamma, const WeightFunction& w,
                            const SamplePlan& plan) {
    TermSet t;
    t.sup_u = sup_norm(u);
    {
        ScalarField sq = hadamard(u, u);
        t.l2_u = std::sqrt(std::max(0.0, integrate(sq)));
    }
    for (const auto& alpha : multi_indices(u.rank(), 1)) {
        ScalarField g = apply_multi_derivative(u, alpha);
        t.sup_d1 += sup_norm(g);
        t.sem_d1 += weighted_holder_seminorm(g, gamma, w, 0.0, plan);
    }
    for (const auto& alpha : multi_indices(u.rank(), 2)) {
        ScalarField g = apply_multi_derivative(u, alpha);
        t.sup_d1_d2 += sup_norm(weight_scaled(g, w, 1.0));
        t.sem_d1_d2 += weighted_holder_seminorm(g, gamma, w, 1.0, plan);
    }
    for (const auto& alpha : multi_indices(u.rank(), 3)) {
        ScalarField g = apply_multi_derivative(u, alpha);
        t.sup_d1_d3 += sup_norm(weight_scaled(g, w, 1.0));
        t.sem_d1_d3 += weighted_holder_seminorm(g, gamma, w, 1.0, plan);
        t.sem_d2_d3 += weighted_holder_seminorm(g, gamma, w, 2.0, plan);
    }
    for (const auto& alpha : multi_indices(u.rank(), 4)) {
        ScalarField g = apply_multi_derivative(u, alpha);
        t.sup_d2_d4 += sup_norm(weight_scaled(g, w, 2.0));
        t.sem_d2_d4 += weighted_holder_seminorm(g, gamma, w, 2.0, plan);
    }
    return t;
}

} // namespace detail

/// Evaluate both sides of the interpolation inequalities against the
/// frozen constants; ratio <= 1 marks a pass.
inline InterpolationReport interpolation_report(const ScalarField& field, double gamma,
                                                double epsilon,
                                                const WeightFunction& weight = WeightFunction{},
                                                const SamplePlan& plan = SamplePlan{},
                                                const double* constants = calib::kInterpolationC) {
    if (!(epsilon > 0.0)) throw InvalidArgument("interpolation_report: epsilon must be positive");
    const auto t = detail::gather_terms(field, gamma, weight, plan);

    InterpolationReport rep;
    auto add = [&](const std::string& label, double lhs, double a, double b, double c) {
        InterpolationLine line;
        line.label = label;
        line.lhs = lhs;
        line.a_term = a;
        line.b_term = b;
        line.calibrated_c = c;
        const double rhs = epsilon * a + (c / epsilon) * b;
        line.ratio = (rhs > 0.0) ? lhs / rhs : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        // an lhs at FD-roundoff scale carries no signal; count it as a pass
        line.pass = (line.ratio <= 1.0 + 1e-12) || (lhs <= 1e-8 * (1.0 + t.sup_u));
        rep.all_pass = rep.all_pass && line.pass;
        rep.lines.push_back(line);
    };
    add("2.15", t.sup_d2_d4, t.sem_d2_d4, t.sup_d1_d3, constants[0]);
    add("2.16", t.sem_d2_d3, t.sup_d2_d4, t.sup_d1_d3, constants[1]);
    add("2.17", t.sup_d1_d3, t.sem_d1_d3, t.sup_d1_d2 + t.sup_d1, constants[2]);
    add("2.18", t.sem_d1_d2, t.sup_d1_d3, t.sup_d1_d2, constants[3]);
    add("2.19", t.sup_d1_d2, t.sem_d1_d2, t.sup_d1, constants[4]);
    add("2.20", t.sem_d1, t.sup_d1_d3, t.sup_d1, constants[5]);
    add("2.21", t.sup_d1, t.sem_d1, t.sup_u, constants[6]);
    add("2.22", t.sup_u, t.sup_d1, t.l2_u, constants[7]);
    return rep;
}

/// Lemma-style embedding check: the unweighted gamma/2 seminorm is
/// controlled by the weighted gamma norm.
inline double lemma021_ratio(const ScalarField& field, double gamma,
                             const WeightFunction& weight, const SamplePlan& plan = SamplePlan{}) {
    const double lhs = holder_seminorm(field, 0.5 * gamma, weight, plan);
    const double rhs = sup_norm(field) + weighted_holder_seminorm(field, gamma, weight, 0.0, plan);
    return (rhs > 0.0) ? lhs / rhs : 0.0;
}

} // namespace tf::holder
