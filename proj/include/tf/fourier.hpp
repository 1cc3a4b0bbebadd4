#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <vector>

#include "tf/mesh.hpp"

namespace tf {

using Complex = std::complex<double>;

/// One tangential Fourier mode of a strip field: integer wavevector
/// (one entry per periodic axis) and the complex profile on the
/// wall-normal mesh.
struct ModeIndex {
    std::vector<long> omega;
    bool operator<(const ModeIndex& o) const { return omega < o.omega; }
    double k2() const {
        double s = 0.0;
        for (long w : omega) s += static_cast<double>(w) * static_cast<double>(w);
        return s;
    }
};

using ModeMap = std::map<ModeIndex, std::vector<Complex>>;

namespace detail {

/// DFT coefficient convention: u_i = sum_w v(w) e^{-i w x_i},
/// v(w) = (1/n) sum_i u_i e^{+i w x_i}, w = -n/2+1 .. n/2.
inline long mode_of_bin(std::size_t k, std::size_t n) {
    long lk = static_cast<long>(k);
    long ln = static_cast<long>(n);
    return (lk <= ln / 2) ? lk : lk - ln;
}

} // namespace detail

/// Exact discrete Fourier transform per wall-normal level. The last axis
/// must be the Mesh1D; all leading axes must be periodic.
inline ModeMap fourier_decompose(const ScalarField& field) {
    const std::size_t rank = field.rank();
    if (rank < 1 || axis_periodic(field.axis(rank - 1)))
        throw InvalidArgument("fourier_decompose: last axis must be the wall-normal mesh");
    for (std::size_t k = 0; k + 1 < rank; ++k)
        if (!axis_periodic(field.axis(k)))
            throw InvalidArgument("fourier_decompose: leading axes must be periodic");

    const std::size_t nlev = field.axis_len(rank - 1);
    std::size_t ntang = field.size() / nlev;

    // gather tangential sizes
    std::vector<std::size_t> tsize;
    for (std::size_t k = 0; k + 1 < rank; ++k) tsize.push_back(field.axis_len(k));
    if (tsize.empty()) { // 1-D: single zero mode
        ModeMap m;
        std::vector<Complex> prof(nlev);
        for (std::size_t j = 0; j < nlev; ++j) prof[j] = field[j];
        m[ModeIndex{{}}] = std::move(prof);
        return m;
    }

    // full nested DFT over tangential indices (desk-scale sizes)
    ModeMap out;
    std::vector<std::size_t> idx(tsize.size(), 0);
    std::vector<long> omega(tsize.size(), 0);
    // enumerate all modes
    std::vector<std::size_t> mk(tsize.size(), 0);
    for (;;) {
        for (std::size_t d = 0; d < tsize.size(); ++d)
            omega[d] = detail::mode_of_bin(mk[d], tsize[d]);
        std::vector<Complex> prof(nlev, Complex(0.0, 0.0));
        // sum over all tangential nodes
        std::fill(idx.begin(), idx.end(), 0);
        for (std::size_t flat = 0; flat < ntang; ++flat) {
            double phase = 0.0;
            for (std::size_t d = 0; d < tsize.size(); ++d) {
                double x = -kPi + static_cast<double>(idx[d]) * (2.0 * kPi / static_cast<double>(tsize[d]));
                phase += static_cast<double>(omega[d]) * x;
            }
            Complex f = std::exp(Complex(0.0, phase));
            const std::size_t base = flat * nlev;
            for (std::size_t j = 0; j < nlev; ++j) prof[j] += f * field[base + j];
            // advance tangential index
            for (std::size_t d = tsize.size(); d-- > 0;) {
                if (++idx[d] < tsize[d]) break;
                idx[d] = 0;
            }
        }
        const double scale = 1.0 / static_cast<double>(ntang);
        for (auto& c : prof) c *= scale;
        out[ModeIndex{omega}] = std::move(prof);
        // advance mode index
        std::size_t d = tsize.size();
        for (; d-- > 0;) {
            if (++mk[d] < tsize[d]) break;
            mk[d] = 0;
        }
        if (d == static_cast<std::size_t>(-1)) break;
    }
    return out;
}

/// Inverse of fourier_decompose; reconstruct \sum v(w, x_N) e^{-i w x'}.
inline ScalarField fourier_reconstruct(const ModeMap& modes, const std::vector<Axis>& axes) {
    ScalarField out(axes, 0.0);
    const std::size_t rank = axes.size();
    const std::size_t nlev = axis_size(axes[rank - 1]);
    std::vector<std::size_t> tsize;
    for (std::size_t k = 0; k + 1 < rank; ++k) tsize.push_back(axis_size(axes[k]));
    if (tsize.empty()) {
        const auto& prof = modes.at(ModeIndex{{}});
        for (std::size_t j = 0; j < nlev; ++j) out[j] = prof[j].real();
        return out;
    }
    const std::size_t ntang = out.size() / nlev;
    std::vector<std::size_t> idx(tsize.size(), 0);
    for (std::size_t flat = 0; flat < ntang; ++flat) {
        const std::size_t base = flat * nlev;
        for (const auto& [mi, prof] : modes) {
            double phase = 0.0;
            for (std::size_t d = 0; d < tsize.size(); ++d) {
                double x = -kPi + static_cast<double>(idx[d]) * (2.0 * kPi / static_cast<double>(tsize[d]));
                phase -= static_cast<double>(mi.omega[d]) * x;
            }
            Complex f = std::exp(Complex(0.0, phase));
            for (std::size_t j = 0; j < nlev; ++j)
                out[base + j] += (f * prof[j]).real();
        }
        for (std::size_t d = tsize.size(); d-- > 0;) {
            if (++idx[d] < tsize[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

} // namespace tf
