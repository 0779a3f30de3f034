#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "floq/banded.hpp"
#include "floq/util.hpp"

namespace floq {

/// Monotone diverging profile used in the tail-mass functionals.
using GrowthProfile = std::function<double(double)>;

/// f(n) = (ln(2+n))^{1/5}, the default profile.
inline GrowthProfile default_profile() {
    return [](double n) { return std::pow(std::log(2.0 + n), 0.2); };
}

/// Band halfwidth 2 gives propagation speed <= 2 sites per step, so a state
/// started at the first site stays strictly inside this many sites for
/// n_steps steps; with it the truncated evolution equals the untruncated one.
inline int required_dimension(long n_steps) {
    if (n_steps < 0) throw ValidationError("required_dimension: negative step count");
    return static_cast<int>(2 * n_steps + 4);
}

/// Full-line analogue for a state started at site 1: the cone expands in
/// both directions, and the window size must stay a multiple of 4.
inline int required_dimension_full(long n_steps) {
    if (n_steps < 0) throw ValidationError("required_dimension_full: negative step count");
    return static_cast<int>(4 * n_steps + 8);
}

inline int required_dimension_for(Geometry g, long n_steps) {
    return g == Geometry::half_line ? required_dimension(n_steps) : required_dimension_full(n_steps);
}

/// State amplitudes in split re/im layout, 1-based storage index, padded by
/// two slots past the end so the banded kernel may read shifted streams.
class StateVector {
public:
    StateVector(Geometry g, int n_dim)
        : geom_(g), n_(n_dim), re_(static_cast<std::size_t>(n_dim) + 3, 0.0),
          im_(static_cast<std::size_t>(n_dim) + 3, 0.0) {}

    /// Basis state at a site (half line: site >= 1).
    static StateVector basis(const BandedUnitary& u, long site) {
        StateVector s(u.geometry(), u.n_dim());
        const int idx = u.geometry() == Geometry::half_line ? static_cast<int>(site) : u.index_of(site);
        if (idx < 1 || idx > u.n_dim()) throw ValidationError("StateVector::basis: site outside window");
        s.re_[static_cast<std::size_t>(idx)] = 1.0;
        s.front_ = idx;
        return s;
    }

    Geometry geometry() const { return geom_; }
    int n_dim() const { return n_; }
    long step_count() const { return n_step_; }
    int front() const { return front_; }

    cplx amp(int idx) const {
        return cplx(re_[static_cast<std::size_t>(idx)], im_[static_cast<std::size_t>(idx)]);
    }
    void set_amp(int idx, cplx v) {
        re_[static_cast<std::size_t>(idx)] = v.real();
        im_[static_cast<std::size_t>(idx)] = v.imag();
        front_ = std::max(front_, idx);
    }

    double norm2() const {
        double s = 0;
        for (int i = 1; i <= front_; ++i)
            s += re_[static_cast<std::size_t>(i)] * re_[static_cast<std::size_t>(i)] +
                 im_[static_cast<std::size_t>(i)] * im_[static_cast<std::size_t>(i)];
        return s;
    }

    /// Advance by one application of the kernel, tracking the light-cone front.
    void advance(const EvolutionKernel& k, std::vector<double>& scratch_re, std::vector<double>& scratch_im) {
        if (k.n_dim() != n_) throw ValidationError("StateVector::advance: dimension mismatch");
        if (scratch_re.size() != re_.size()) {
            scratch_re.assign(re_.size(), 0.0);
            scratch_im.assign(im_.size(), 0.0);
        }
        const int limit = std::min(n_, front_ + 2);
        k.apply(re_.data(), im_.data(), scratch_re.data(), scratch_im.data(), limit);
        // zero the stale region above the new front in the target buffers
        for (int i = limit + 1; i <= std::min(n_, front_ + 4) && static_cast<std::size_t>(i) < scratch_re.size(); ++i) {
            scratch_re[static_cast<std::size_t>(i)] = 0.0;
            scratch_im[static_cast<std::size_t>(i)] = 0.0;
        }
        re_.swap(scratch_re);
        im_.swap(scratch_im);
        front_ = limit;
        ++n_step_;
    }

    /// Mass at sites with weight coordinate >= a (half line: site index,
    /// full line: |site|).
    double tail_mass(double a) const {
        double s = 0;
        const bool full = geom_ == Geometry::full_line;
        const int offset = full ? n_ / 2 + 1 : 0;
        for (int i = 1; i <= front_; ++i) {
            const double coord = full ? std::abs(static_cast<double>(i - offset)) : static_cast<double>(i);
            if (coord >= a)
                s += re_[static_cast<std::size_t>(i)] * re_[static_cast<std::size_t>(i)] +
                     im_[static_cast<std::size_t>(i)] * im_[static_cast<std::size_t>(i)];
        }
        return s;
    }

    double head_mass(double a) const { return norm2() - tail_mass(a); }

    /// Sum_k coord^m |psi_k|^2 with the same weight coordinate as tail_mass.
    double moment(int order) const {
        double s = 0;
        const bool full = geom_ == Geometry::full_line;
        const int offset = full ? n_ / 2 + 1 : 0;
        for (int i = 1; i <= front_; ++i) {
            const double coord = full ? std::abs(static_cast<double>(i - offset)) : static_cast<double>(i);
            const double p = re_[static_cast<std::size_t>(i)] * re_[static_cast<std::size_t>(i)] +
                             im_[static_cast<std::size_t>(i)] * im_[static_cast<std::size_t>(i)];
            s += std::pow(coord, order) * p;
        }
        return s;
    }

private:
    Geometry geom_;
    int n_;
    long n_step_ = 0;
    int front_ = 0; // largest storage index that can be nonzero
    std::vector<double> re_, im_;
};

inline double tail_mass(const StateVector& psi, double a) { return psi.tail_mass(a); }
inline double head_mass(const StateVector& psi, double a) { return psi.head_mass(a); }

/// One step psi -> U psi through the banded kernel.
inline StateVector step(const BandedUnitary& u, const StateVector& psi) {
    if (u.n_dim() != psi.n_dim() || u.geometry() != psi.geometry())
        throw ValidationError("step: operator/state mismatch");
    EvolutionKernel k(u);
    StateVector out = psi;
    std::vector<double> sr, si;
    out.advance(k, sr, si);
    return out;
}

/// Time series of moments along psi(n+1) = U psi(n).
struct MomentSeries {
    std::vector<int> orders;
    // row: n, moments (one per order), norm2, tail_mass at a = n/f(n)
    struct Row {
        long n;
        std::vector<double> moments;
        double norm2;
        double tail;
        double ratio_growth = 0; // <X^2> / F(n), F(n) = n^2/ln(2+n), F(0) := ln 2
        double ratio_profile = 0; // <X^2> f(n)^5 / n^2, n = 0 row uses n^2 -> 1
    };
    std::vector<Row> rows;
    bool has_ratios = false;

    int order_index(int m) const {
        for (std::size_t i = 0; i < orders.size(); ++i)
            if (orders[i] == m) return static_cast<int>(i);
        return -1;
    }
};

/// Evolves from psi0 recording Sum_k k^m |psi_k(n)|^2 for each requested
/// order. Refuses dimensions that would let the light cone reach the cut.
inline MomentSeries evolve_moments(const BandedUnitary& u, const StateVector& psi0, long n_max,
                                   const std::vector<int>& orders, const GrowthProfile& f = default_profile()) {
    if (u.n_dim() < required_dimension_for(u.geometry(), n_max))
        throw ValidationError("evolve_moments: dimension " + std::to_string(u.n_dim()) +
                              " too small for " + std::to_string(n_max) + " steps; need >= " +
                              std::to_string(required_dimension_for(u.geometry(), n_max)));
    if (u.geometry() != psi0.geometry()) throw ValidationError("evolve_moments: geometry mismatch");
    MomentSeries series;
    series.orders = orders;
    EvolutionKernel kernel(u);
    StateVector psi = psi0;
    std::vector<double> sr, si;
    series.rows.reserve(static_cast<std::size_t>(n_max) + 1);
    for (long n = 0; n <= n_max; ++n) {
        if (n > 0) psi.advance(kernel, sr, si);
        MomentSeries::Row row;
        row.n = n;
        for (int m : orders) row.moments.push_back(psi.moment(m));
        row.norm2 = psi.norm2();
        row.tail = psi.tail_mass(static_cast<double>(n) / f(static_cast<double>(n)));
        if (std::abs(row.norm2 - 1.0) > 1e-10)
            throw NumericError("evolve_moments: norm drifted to " + fmt_g17(row.norm2) +
                               " at step " + std::to_string(n));
        series.rows.push_back(std::move(row));
    }
    return series;
}

/// Adds the two instability ratio columns to a series holding order 2.
/// Convention for the n = 0 row: the growth denominator F(0) is taken as
/// ln 2 and the profile ratio uses n^2 -> 1, so no division by zero occurs.
inline MomentSeries& instability_ratio(MomentSeries& series, const GrowthProfile& f = default_profile()) {
    const int ix = series.order_index(2);
    if (ix < 0) throw ValidationError("instability_ratio: series lacks the order-2 moment");
    for (auto& row : series.rows) {
        const double x2 = row.moments[static_cast<std::size_t>(ix)];
        const double n = static_cast<double>(row.n);
        const double ln2n = std::log(2.0 + n);
        const double growth_den = row.n == 0 ? std::log(2.0) : n * n / ln2n;
        const double prof_den = row.n == 0 ? 1.0 : n * n;
        const double fn = f(n);
        row.ratio_growth = x2 / growth_den;
        row.ratio_profile = x2 * std::pow(fn, 5) / prof_den;
    }
    series.has_ratios = true;
    return series;
}

/// (1/(T+1)) Sum_{j=T}^{2T} || P_{n >= T/f(T)} U^j psi0 ||^2, the inclusive
/// time-averaged tail mass.
inline double time_avg_tail(const BandedUnitary& u, const StateVector& psi0, long T,
                            const GrowthProfile& f = default_profile()) {
    if (T < 1) throw ValidationError("time_avg_tail: T must be >= 1");
    if (u.n_dim() < required_dimension_for(u.geometry(), 2 * T))
        throw ValidationError("time_avg_tail: dimension too small; need >= " +
                              std::to_string(required_dimension_for(u.geometry(), 2 * T)));
    EvolutionKernel kernel(u);
    StateVector psi = psi0;
    std::vector<double> sr, si;
    const double a = static_cast<double>(T) / f(static_cast<double>(T));
    double acc = 0;
    for (long j = 1; j <= 2 * T; ++j) {
        psi.advance(kernel, sr, si);
        if ((j & 1023) == 0 && std::abs(psi.norm2() - 1.0) > 1e-10)
            throw NumericError("time_avg_tail: norm drift at step " + std::to_string(j));
        if (j >= T) acc += psi.tail_mass(a);
    }
    return acc / static_cast<double>(T + 1);
}

} // namespace floq
