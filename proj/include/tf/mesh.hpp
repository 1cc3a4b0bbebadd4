#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tf {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid resolution, bad argument ranges, malformed input.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

/// Degenerate geometry: mapping stopped being a diffeomorphism, slope
/// fell below the admissible floor, amplitude bound violated.
class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& what) : Error(what) {}
};

class SolverError : public Error {
public:
    explicit SolverError(const std::string& what) : Error(what) {}
};

inline constexpr double kPi = 3.14159265358979323846;

/// Graded wall-normal grid on [0,1], nodes[j] = (j/M)^q.
///
/// The grading clusters nodes at x_N = 0 where the equation degenerates
/// and second derivatives of the solution grow like |ln x_N|.
class Mesh1D {
public:
    Mesh1D() = default;

    Mesh1D(std::vector<double> nodes, double grading_exponent)
        : nodes_(std::move(nodes)), q_(grading_exponent) {
        if (nodes_.size() < 2 || nodes_.front() != 0.0 || nodes_.back() != 1.0)
            throw InvalidArgument("Mesh1D: nodes must start at 0 and end at 1");
        for (std::size_t j = 1; j < nodes_.size(); ++j)
            if (!(nodes_[j] > nodes_[j - 1]))
                throw InvalidArgument("Mesh1D: nodes must be strictly increasing");
    }

    std::size_t size() const { return nodes_.size(); }           // M+1
    std::size_t segments() const { return nodes_.size() - 1; }   // M
    double node(std::size_t j) const { return nodes_[j]; }
    double operator[](std::size_t j) const { return nodes_[j]; }
    const std::vector<double>& nodes() const { return nodes_; }
    double grading_exponent() const { return q_; }
    double spacing(std::size_t j) const { return nodes_[j + 1] - nodes_[j]; }

private:
    std::vector<double> nodes_;
    double q_ = 1.0;
};

/// make_graded_mesh(M, q): bit-reproducible power mesh x_j = (j/M)^q.
inline Mesh1D make_graded_mesh(int M, double q) {
    if (M < 8) throw InvalidArgument("make_graded_mesh: M must be >= 8");
    if (q < 1.0) throw InvalidArgument("make_graded_mesh: q must be >= 1");
    std::vector<double> nodes(static_cast<std::size_t>(M) + 1);
    for (int j = 0; j <= M; ++j)
        nodes[static_cast<std::size_t>(j)] =
            std::pow(static_cast<double>(j) / static_cast<double>(M), q);
    nodes[0] = 0.0;
    nodes[static_cast<std::size_t>(M)] = 1.0;
    return Mesh1D(std::move(nodes), q);
}

/// Relaxed constructor used by tests for tiny meshes (M < 8).
inline Mesh1D make_graded_mesh_unchecked(int M, double q) {
    std::vector<double> nodes(static_cast<std::size_t>(M) + 1);
    for (int j = 0; j <= M; ++j)
        nodes[static_cast<std::size_t>(j)] =
            std::pow(static_cast<double>(j) / static_cast<double>(M), q);
    nodes[0] = 0.0;
    nodes[static_cast<std::size_t>(M)] = 1.0;
    return Mesh1D(std::move(nodes), q);
}

/// Uniform periodic grid, x_i = -pi + i * 2pi/n. Index arithmetic wraps.
class PeriodicAxis {
public:
    PeriodicAxis() = default;
    explicit PeriodicAxis(int n) : n_(n) {
        if (n < 2) throw InvalidArgument("PeriodicAxis: need n >= 2");
    }
    std::size_t size() const { return static_cast<std::size_t>(n_); }
    double spacing() const { return 2.0 * kPi / n_; }
    double coord(std::size_t i) const { return -kPi + static_cast<double>(i) * spacing(); }
    std::size_t wrap(long i) const {
        long n = n_;
        long r = i % n;
        return static_cast<std::size_t>(r < 0 ? r + n : r);
    }

private:
    int n_ = 0;
};

using Axis = std::variant<PeriodicAxis, Mesh1D>;

inline std::size_t axis_size(const Axis& a) {
    return std::visit([](const auto& x) { return x.size(); }, a);
}
inline double axis_coord(const Axis& a, std::size_t i) {
    if (std::holds_alternative<PeriodicAxis>(a)) return std::get<PeriodicAxis>(a).coord(i);
    return std::get<Mesh1D>(a).node(i);
}
inline bool axis_periodic(const Axis& a) { return std::holds_alternative<PeriodicAxis>(a); }

/// Dense nodal values over a tensor grid, row-major in axis order.
/// Immutable by convention: operations return new fields.
class ScalarField {
public:
    ScalarField() = default;

    explicit ScalarField(std::vector<Axis> axes, double fill = 0.0)
        : axes_(std::move(axes)) {
        std::size_t n = 1;
        for (const auto& a : axes_) n *= axis_size(a);
        values_.assign(n, fill);
    }

    ScalarField(std::vector<Axis> axes, std::vector<double> values)
        : axes_(std::move(axes)), values_(std::move(values)) {
        std::size_t n = 1;
        for (const auto& a : axes_) n *= axis_size(a);
        if (n != values_.size())
            throw InvalidArgument("ScalarField: values length does not match axes");
    }

    std::size_t rank() const { return axes_.size(); }
    const std::vector<Axis>& axes() const { return axes_; }
    const Axis& axis(std::size_t k) const { return axes_.at(k); }
    std::size_t size() const { return values_.size(); }
    std::size_t axis_len(std::size_t k) const { return axis_size(axes_[k]); }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::optional<double> time_stamp;

    /// Row-major flat index from per-axis indices.
    std::size_t index(const std::vector<std::size_t>& idx) const {
        std::size_t flat = 0;
        for (std::size_t k = 0; k < axes_.size(); ++k)
            flat = flat * axis_size(axes_[k]) + idx[k];
        return flat;
    }

    /// Stride of axis k in the flat layout.
    std::size_t stride(std::size_t k) const {
        std::size_t s = 1;
        for (std::size_t m = k + 1; m < axes_.size(); ++m) s *= axis_size(axes_[m]);
        return s;
    }

    double at(const std::vector<std::size_t>& idx) const { return values_[index(idx)]; }
    double& at(const std::vector<std::size_t>& idx) { return values_[index(idx)]; }

    bool same_axes(const ScalarField& o) const {
        if (axes_.size() != o.axes_.size()) return false;
        for (std::size_t k = 0; k < axes_.size(); ++k) {
            if (axis_size(axes_[k]) != axis_size(o.axes_[k])) return false;
            if (axis_periodic(axes_[k]) != axis_periodic(o.axes_[k])) return false;
        }
        return true;
    }

private:
    std::vector<Axis> axes_;
    std::vector<double> values_;
};

inline ScalarField like(const ScalarField& f, double fill = 0.0) {
    ScalarField g(f.axes(), fill);
    g.time_stamp = f.time_stamp;
    return g;
}

inline ScalarField& operator+=(ScalarField& a, const ScalarField& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}
inline ScalarField& operator-=(ScalarField& a, const ScalarField& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}
inline ScalarField& operator*=(ScalarField& a, double c) {
    for (double& v : a.values()) v *= c;
    return a;
}
inline ScalarField operator+(ScalarField a, const ScalarField& b) { a += b; return a; }
inline ScalarField operator-(ScalarField a, const ScalarField& b) { a -= b; return a; }
inline ScalarField operator*(double c, ScalarField a) { a *= c; return a; }

inline ScalarField hadamard(const ScalarField& a, const ScalarField& b) {
    ScalarField r = like(a);
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
    return r;
}

/// Time-ordered stack of fields with uniform step dt and common axes.
class FieldSeries {
public:
    FieldSeries() = default;
    FieldSeries(double t0, double dt) : t0_(t0), dt_(dt) {}

    void push(ScalarField slab) {
        slab.time_stamp = t0_ + static_cast<double>(slabs_.size()) * dt_;
        if (!slabs_.empty() && !slabs_.front().same_axes(slab))
            throw InvalidArgument("FieldSeries: slab axes mismatch");
        slabs_.push_back(std::move(slab));
    }

    std::size_t size() const { return slabs_.size(); }
    const ScalarField& slab(std::size_t i) const { return slabs_.at(i); }
    ScalarField& slab(std::size_t i) { return slabs_.at(i); }
    double t0() const { return t0_; }
    double dt() const { return dt_; }
    double time(std::size_t i) const { return t0_ + static_cast<double>(i) * dt_; }

private:
    std::vector<ScalarField> slabs_;
    double t0_ = 0.0;
    double dt_ = 0.0;
};

namespace detail {

/// Fornberg weights: derivative order m at point z from nodes x[0..n-1].
/// Generates weights for all orders 0..m; returns the order-m row.
inline std::vector<double> fornberg_weights(double z, const std::vector<double>& x, int m) {
    const int n = static_cast<int>(x.size()) - 1;
    std::vector<std::vector<double>> c(static_cast<std::size_t>(n) + 1,
                                       std::vector<double>(static_cast<std::size_t>(m) + 1, 0.0));
    double c1 = 1.0;
    double c4 = x[0] - z;
    c[0][0] = 1.0;
    for (int i = 1; i <= n; ++i) {
        int mn = std::min(i, m);
        double c2 = 1.0;
        double c5 = c4;
        c4 = x[static_cast<std::size_t>(i)] - z;
        for (int j = 0; j <= i - 1; ++j) {
            double c3 = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
                        c1 * (k * c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(k - 1)] -
                              c5 * c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(k)]) / c2;
                c[static_cast<std::size_t>(i)][0] =
                    -c1 * c5 * c[static_cast<std::size_t>(i - 1)][0] / c2;
            }
            for (int k = mn; k >= 1; --k)
                c[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
                    (c4 * c[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] -
                     k * c[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - 1)]) / c3;
            c[static_cast<std::size_t>(j)][0] = c4 * c[static_cast<std::size_t>(j)][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) w[i] = c[i][static_cast<std::size_t>(m)];
    return w;
}

/// Apply a 1-D stencil operation along axis k of a tensor field.
/// fn(line_in, line_out) maps one extracted line.
template <typename Fn>
inline ScalarField apply_along_axis(const ScalarField& f, std::size_t k, Fn&& fn) {
    ScalarField out = like(f);
    const std::size_t len = f.axis_len(k);
    const std::size_t stride = f.stride(k);
    const std::size_t nlines = f.size() / len;
    std::vector<double> in(len), res(len);
    for (std::size_t line = 0; line < nlines; ++line) {
        // decompose line index into (outer, inner) parts around axis k
        std::size_t outer = line / stride;
        std::size_t inner = line % stride;
        std::size_t base = outer * stride * len + inner;
        for (std::size_t j = 0; j < len; ++j) in[j] = f[base + j * stride];
        fn(in, res);
        for (std::size_t j = 0; j < len; ++j) out[base + j * stride] = res[j];
    }
    return out;
}

} // namespace detail

/// k-th power difference with step h along one axis.
/// Periodic axes wrap; graded axes interpolate linearly at off-node points
/// and flag nodes whose stencil leaves [0,1] with NaN.
inline ScalarField power_difference(const ScalarField& field, std::size_t axis, double h, int order) {
    if (axis >= field.rank()) throw InvalidArgument("power_difference: axis out of range");
    if (!(h > 0.0)) throw InvalidArgument("power_difference: step must be positive");
    if (order < 1) throw InvalidArgument("power_difference: order must be >= 1");

    const Axis& ax = field.axis(axis);
    if (axis_periodic(ax)) {
        const auto& pa = std::get<PeriodicAxis>(ax);
        const double dx = pa.spacing();
        const long shift = static_cast<long>(std::llround(h / dx));
        if (std::abs(h - static_cast<double>(shift) * dx) > 1e-12 * std::max(1.0, h))
            throw InvalidArgument("power_difference: step not a multiple of spacing on periodic axis");
        return detail::apply_along_axis(field, axis, [&](const std::vector<double>& in, std::vector<double>& out) {
            std::vector<double> cur = in, next(in.size());
            for (int r = 0; r < order; ++r) {
                for (std::size_t i = 0; i < in.size(); ++i)
                    next[i] = cur[pa.wrap(static_cast<long>(i) + shift)] - cur[i];
                std::swap(cur, next);
            }
            out = cur;
        });
    }

    const auto& mesh = std::get<Mesh1D>(ax);
    const auto& xs = mesh.nodes();
    auto sample = [&xs](const std::vector<double>& vals, double x) -> double {
        if (x < xs.front() || x > xs.back()) return std::numeric_limits<double>::quiet_NaN();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - xs.begin()), xs.size() - 1);
        if (hi == 0) hi = 1;
        std::size_t lo = hi - 1;
        double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
        return (1.0 - t) * vals[lo] + t * vals[hi];
    };
    return detail::apply_along_axis(field, axis, [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t j = 0; j < in.size(); ++j) {
            // Delta^k_h u(x) = sum_{i=0..k} (-1)^(k-i) C(k,i) u(x + i h)
            double acc = 0.0;
            double binom = 1.0;
            for (int i = 0; i <= order; ++i) {
                if (i > 0) binom = binom * (order - i + 1) / i;
                double sign = ((order - i) % 2 == 0) ? 1.0 : -1.0;
                double v = (i == 0) ? in[j] : sample(in, xs[j] + i * h);
                acc += sign * binom * v;
            }
            out[j] = acc;
        }
    });
}

/// Finite-difference derivative of given order (1..4) along one axis.
/// Uniform periodic axes use centered Fornberg stencils with wraparound;
/// graded axes use sliding variable-spacing windows, one-sided at the ends.
inline ScalarField fd_derivative(const ScalarField& field, std::size_t axis, int order) {
    if (axis >= field.rank()) throw InvalidArgument("fd_derivative: axis out of range");
    if (order < 1 || order > 4) throw InvalidArgument("fd_derivative: order must be in 1..4");

    const Axis& ax = field.axis(axis);
    const std::size_t len = axis_size(ax);
    // periodic axes afford wider centered windows (order >= 4 accurate);
    // graded axes use compact sliding windows of formal order >= 2
    const std::size_t window = axis_periodic(ax)
                                   ? std::max<std::size_t>(7, static_cast<std::size_t>(order) + 5)
                                   : std::max<std::size_t>(9, static_cast<std::size_t>(order) + 3);
    if (len < window) throw InvalidArgument("fd_derivative: axis too short for requested order");

    if (axis_periodic(ax)) {
        const auto& pa = std::get<PeriodicAxis>(ax);
        const double dx = pa.spacing();
        const long half = static_cast<long>(window) / 2;
        std::vector<double> offs(window);
        for (std::size_t i = 0; i < window; ++i)
            offs[i] = (static_cast<long>(i) - half) * dx;
        std::vector<double> w = detail::fornberg_weights(0.0, offs, order);
        return detail::apply_along_axis(field, axis, [&](const std::vector<double>& in, std::vector<double>& out) {
            for (std::size_t j = 0; j < len; ++j) {
                // differences against the center value: constants are
                // annihilated exactly instead of through weight cancellation
                double acc = 0.0;
                for (std::size_t i = 0; i < window; ++i)
                    acc += w[i] * (in[pa.wrap(static_cast<long>(j) + static_cast<long>(i) - half)] - in[j]);
                out[j] = acc;
            }
        });
    }

    const auto& mesh = std::get<Mesh1D>(ax);
    const auto& xs = mesh.nodes();
    // Precompute per-node windows and weights once per axis length.
    std::vector<std::vector<double>> weights(len);
    std::vector<std::size_t> starts(len);
    for (std::size_t j = 0; j < len; ++j) {
        std::size_t lo = (j < window / 2) ? 0 : j - window / 2;
        if (lo + window > len) lo = len - window;
        starts[j] = lo;
        std::vector<double> pts(xs.begin() + static_cast<long>(lo),
                                xs.begin() + static_cast<long>(lo + window));
        weights[j] = detail::fornberg_weights(xs[j], pts, order);
    }
    return detail::apply_along_axis(field, axis, [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t j = 0; j < len; ++j) {
            double acc = 0.0;
            const auto& w = weights[j];
            for (std::size_t i = 0; i < w.size(); ++i)
                acc += w[i] * (in[starts[j] + i] - in[j]);
            out[j] = acc;
        }
    });
}

/// Trapezoid rule along graded axes, rectangle rule along periodic axes
/// (exact for trigonometric polynomials below Nyquist).
inline double integrate(const ScalarField& field) {
    // Tensor-product weights accumulated axis by axis.
    std::vector<double> vals = field.values();
    for (std::size_t k = field.rank(); k-- > 0;) {
        const Axis& ax = field.axis(k);
        const std::size_t len = axis_size(ax);
        std::vector<double> w(len);
        if (axis_periodic(ax)) {
            const double dx = std::get<PeriodicAxis>(ax).spacing();
            std::fill(w.begin(), w.end(), dx);
        } else {
            const auto& mesh = std::get<Mesh1D>(ax);
            for (std::size_t j = 0; j < len; ++j) {
                double left = (j == 0) ? 0.0 : 0.5 * (mesh.node(j) - mesh.node(j - 1));
                double right = (j + 1 == len) ? 0.0 : 0.5 * (mesh.node(j + 1) - mesh.node(j));
                w[j] = left + right;
            }
        }
        // contract the last remaining axis of the value block
        std::size_t blocks = vals.size() / len;
        std::vector<double> next(blocks, 0.0);
        for (std::size_t b = 0; b < blocks; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < len; ++j) acc += w[j] * vals[b * len + j];
            next[b] = acc;
        }
        vals = std::move(next);
    }
    return vals[0];
}

/// Quadrature weights of one axis (trapezoid / rectangle).
inline std::vector<double> axis_weights(const Axis& ax) {
    const std::size_t len = axis_size(ax);
    std::vector<double> w(len);
    if (axis_periodic(ax)) {
        std::fill(w.begin(), w.end(), std::get<PeriodicAxis>(ax).spacing());
    } else {
        const auto& mesh = std::get<Mesh1D>(ax);
        for (std::size_t j = 0; j < len; ++j) {
            double left = (j == 0) ? 0.0 : 0.5 * (mesh.node(j) - mesh.node(j - 1));
            double right = (j + 1 == len) ? 0.0 : 0.5 * (mesh.node(j + 1) - mesh.node(j));
            w[j] = left + right;
        }
    }
    return w;
}

/// Integrate along one axis of a rank-1 field.
inline double integrate(const ScalarField& field, std::size_t axis) {
    if (axis >= field.rank()) throw InvalidArgument("integrate: axis out of range");
    if (field.rank() != 1)
        throw InvalidArgument("integrate(field, axis): single-axis form expects a 1-D field");
    return integrate(field);
}

/// Reduce one axis by quadrature, keeping the remaining axes.
inline ScalarField integrate_along(const ScalarField& field, std::size_t axis) {
    if (axis >= field.rank()) throw InvalidArgument("integrate_along: axis out of range");
    const std::vector<double> w = axis_weights(field.axis(axis));
    const std::size_t len = field.axis_len(axis);
    const std::size_t stride = field.stride(axis);
    if (field.rank() == 1)
        throw InvalidArgument("integrate_along: use integrate() for 1-D fields");
    std::vector<Axis> rest;
    for (std::size_t k = 0; k < field.rank(); ++k)
        if (k != axis) rest.push_back(field.axis(k));
    ScalarField out(rest, 0.0);
    const std::size_t nlines = field.size() / len;
    for (std::size_t line = 0; line < nlines; ++line) {
        std::size_t outer = line / stride;
        std::size_t inner = line % stride;
        std::size_t base = outer * stride * len + inner;
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += w[j] * field[base + j * stride];
        out[line] = acc;
    }
    return out;
}

} // namespace tf
