#pragma once

#include <cmath>
#include <complex>
#include <cstring>
#include <utility>
#include <vector>

#include "floq/banded.hpp"
#include "floq/model.hpp"

namespace floq {

namespace detail {
inline cplx phase(double x) { return std::polar(1.0, x); }
} // namespace detail

/// One 2x2 scattering block
///   S_k = e^{-i theta_k} [ r e^{-i alpha_k}   i t e^{+i gamma_k} ]
///                        [ i t e^{-i gamma_k} r e^{+i alpha_k}   ]
struct ScatterBlock {
    cplx a11, a12, a21, a22;
    cplx det() const { return a11 * a22 - a12 * a21; }
};

inline ScatterBlock scatter_block(const PhaseSequence& ph, double r, double t, long long k) {
    const PhaseTriple p = ph.at(k);
    const cplx pre = detail::phase(-p.theta);
    ScatterBlock s;
    s.a11 = pre * r * detail::phase(-p.alpha);
    s.a12 = pre * cplx(0, t) * detail::phase(p.gamma);
    s.a21 = pre * cplx(0, t) * detail::phase(-p.gamma);
    s.a22 = pre * r * detail::phase(p.alpha);
    return s;
}

/// The blocks S_k over a contiguous index range, with their even/odd factor
/// assignment implied by the parity of k.
struct BlockPair {
    long long k_begin = 0;
    std::vector<ScatterBlock> blocks;

    const ScatterBlock& at(long long k) const {
        const long long i = k - k_begin;
        if (i < 0 || static_cast<std::size_t>(i) >= blocks.size())
            throw ValidationError("BlockPair: block index out of range");
        return blocks[static_cast<std::size_t>(i)];
    }
};

inline BlockPair build_blocks(const PhaseSequence& ph, double r, double t, long long k_begin, long long k_end) {
    if (k_end < k_begin) throw ValidationError("build_blocks: empty range");
    BlockPair bp;
    bp.k_begin = k_begin;
    bp.blocks.reserve(static_cast<std::size_t>(k_end - k_begin + 1));
    for (long long k = k_begin; k <= k_end; ++k) bp.blocks.push_back(scatter_block(ph, r, t, k));
    return bp;
}

namespace detail {

/// Closed-form column at even site s = 2k; rows touched: s-1 .. s+2.
template <typename PutFn>
inline void column_even(const PhaseSequence& ph, double r, double t, long long s, PutFn&& put) {
    const PhaseTriple pm1 = ph.at(s - 1), p0 = ph.at(s), pp1 = ph.at(s + 1);
    const double f1 = p0.theta + pm1.theta; // theta_{2k} + theta_{2k-1}
    const double f2 = p0.theta + pp1.theta; // theta_{2k} + theta_{2k+1}
    put(s - 1, cplx(0, 1) * r * t * phase(-(f1 + p0.alpha - pm1.gamma)));
    put(s, r * r * phase(-(f1 + p0.alpha - pm1.alpha)));
    put(s + 1, cplx(0, 1) * r * t * phase(-(f2 + p0.gamma + pp1.alpha)));
    put(s + 2, -t * t * phase(-(f2 + p0.gamma + pp1.gamma)));
}

/// Closed-form column at odd site s = 2k+1; rows touched: s-2 .. s+1.
template <typename PutFn>
inline void column_odd(const PhaseSequence& ph, double r, double t, long long s, PutFn&& put) {
    const long long e = s - 1; // 2k
    const PhaseTriple pm1 = ph.at(e - 1), p0 = ph.at(e), pp1 = ph.at(e + 1);
    const double f1 = p0.theta + pm1.theta;
    const double f2 = p0.theta + pp1.theta;
    put(s - 2, -t * t * phase(-f1 + p0.gamma + pm1.gamma));
    put(s - 1, cplx(0, 1) * r * t * phase(-f1 + p0.gamma + pm1.alpha));
    put(s, r * r * phase(-f2 + p0.alpha - pp1.alpha));
    put(s + 1, cplx(0, 1) * r * t * phase(-f2 + p0.alpha - pp1.gamma));
}

inline void check_dim(Geometry geom, int n_dim) {
    if (geom == Geometry::half_line) {
        if (n_dim < 8 || n_dim % 2 != 0)
            throw ValidationError("assemble: half-line n_dim must be even and >= 8, got " +
                                  std::to_string(n_dim));
    } else if (n_dim < 8 || n_dim % 4 != 0) {
        throw ValidationError("assemble: full-line n_dim must be a multiple of 4 and >= 8, got " +
                              std::to_string(n_dim));
    }
}

} // namespace detail

/// Factorized build U = U_o U_e from the scattering blocks. This is the
/// independent cross-check path for the closed-form assembly and the
/// authoritative definition of the closed (exactly unitary) truncation:
/// any block straddling a cut is replaced by the pure phase e^{-i theta_k}
/// of its own prefactor. On the half line the block at sites (0,1) is
/// always reduced this way; that reduction is part of the operator's
/// definition, not of the truncation.
inline BandedUnitary assemble_from_blocks(const PhaseSequence& ph, double r, double t, Geometry geom,
                                          int n_dim, Boundary boundary = Boundary::open,
                                          std::uint64_t digest = 0) {
    detail::check_dim(geom, n_dim);
    BandedUnitary u(geom, boundary, n_dim, digest);
    const long off = geom == Geometry::half_line ? 0 : n_dim / 2 + 1;
    const long lo_site = geom == Geometry::half_line ? 1 : -(n_dim / 2);
    const long hi_site = lo_site + n_dim - 1;

    using SparseVec = std::vector<std::pair<long, cplx>>;
    // One block-diagonal factor applied to a sparse vector. Even factor:
    // blocks at (2k, 2k+1); odd factor: blocks at (2k+1, 2k+2).
    auto apply_factor = [&](bool even_factor, const SparseVec& in) {
        SparseVec out;
        out.reserve(in.size() * 2);
        for (const auto& [site, val] : in) {
            const bool first = even_factor ? (site % 2 == 0) : (site % 2 != 0);
            const long start = first ? site : site - 1;
            const long partner = first ? site + 1 : site - 1;
            const bool straddles = partner < lo_site || partner > hi_site ||
                                   (geom == Geometry::half_line && start == 0);
            if (straddles && (boundary == Boundary::closed ||
                              (geom == Geometry::half_line && start == 0))) {
                out.emplace_back(site, val * detail::phase(-ph.theta_at(start)));
                continue;
            }
            const ScatterBlock s = scatter_block(ph, r, t, start);
            if (first) {
                out.emplace_back(site, val * s.a11);
                out.emplace_back(site + 1, val * s.a21);
            } else {
                out.emplace_back(site - 1, val * s.a12);
                out.emplace_back(site, val * s.a22);
            }
        }
        return out;
    };

    for (long col_site = lo_site; col_site <= hi_site; ++col_site) {
        SparseVec v{{col_site, cplx(1, 0)}};
        v = apply_factor(true, v);
        v = apply_factor(false, v);
        const int col = static_cast<int>(col_site + off);
        for (const auto& [site, val] : v) {
            const long row = site + off;
            if (row >= 1 && row <= n_dim) {
                const int irow = static_cast<int>(row);
                u.set_entry(irow, col, u.entry(irow, col) + val);
            }
        }
    }
    return u;
}

/// Half-line operator on sites 1..n_dim from its closed-form columns
/// (default path). Column 1 carries the boundary form
///   r e^{-i(theta_0+theta_1)} e^{-i alpha_1} phi_1
///   + i t e^{-i(theta_0+theta_1)} e^{-i gamma_1} phi_2.
/// The closed variant is built from the block factorization.
inline BandedUnitary assemble_half(const PhaseSequence& ph, double r, double t, int n_dim,
                                   Boundary boundary = Boundary::open, std::uint64_t digest = 0) {
    detail::check_dim(Geometry::half_line, n_dim);
    if (boundary == Boundary::closed)
        return assemble_from_blocks(ph, r, t, Geometry::half_line, n_dim, boundary, digest);

    BandedUnitary u(Geometry::half_line, boundary, n_dim, digest);
    const PhaseTriple p0 = ph.at(0), p1 = ph.at(1);
    u.set_entry(1, 1, r * detail::phase(-(p0.theta + p1.theta + p1.alpha)));
    u.set_entry(2, 1, cplx(0, 1) * t * detail::phase(-(p0.theta + p1.theta + p1.gamma)));
    for (int col = 2; col <= n_dim; ++col) {
        auto put = [&](long long row, cplx v) {
            if (row >= 1 && row <= n_dim) u.set_entry(static_cast<int>(row), col, v);
        };
        if (col % 2 == 0)
            detail::column_even(ph, r, t, col, put);
        else
            detail::column_odd(ph, r, t, col, put);
    }
    return u;
}

/// Full-line operator on the window of sites -W..W-1 (n_dim = 2W, storage
/// index = site + W + 1), closed-form columns for the open truncation and
/// the block factorization for the closed one.
inline BandedUnitary assemble_full(const PhaseSequence& ph, double r, double t, int n_dim,
                                   Boundary boundary = Boundary::open, std::uint64_t digest = 0) {
    detail::check_dim(Geometry::full_line, n_dim);
    if (boundary == Boundary::closed)
        return assemble_from_blocks(ph, r, t, Geometry::full_line, n_dim, boundary, digest);

    BandedUnitary u(Geometry::full_line, boundary, n_dim, digest);
    const long w = n_dim / 2;
    for (long site = -w; site <= w - 1; ++site) {
        const int col = u.index_of(site);
        auto put = [&](long long row_site, cplx v) {
            const long idx = row_site + u.site_offset();
            if (idx >= 1 && idx <= n_dim) u.set_entry(static_cast<int>(idx), col, v);
        };
        if (site % 2 == 0)
            detail::column_even(ph, r, t, site, put);
        else
            detail::column_odd(ph, r, t, site, put);
    }
    return u;
}

/// Rank-one phase perturbation: multiplies the column at site 1 by e^{i lambda},
/// leaving every other column bit-identical. Full-line input is rejected
/// unless allow_full_line is set.
inline BandedUnitary perturb_rank_one(const BandedUnitary& u, double lambda, bool allow_full_line = false) {
    if (u.geometry() == Geometry::full_line && !allow_full_line)
        throw GeometryError("perturb_rank_one: operator is full-line; pass allow_full_line to opt in");
    BandedUnitary v = u;
    const int col = u.geometry() == Geometry::half_line ? 1 : u.index_of(1);
    v.scale_column(col, detail::phase(lambda));
    return v;
}

/// Convenience builders from model parameters (almost-periodic phases);
/// a nonzero lambda is applied as the rank-one phase at site 1.
inline BandedUnitary build_half_line(const ModelParams& p, int n_dim, Boundary boundary = Boundary::open) {
    AlmostPeriodicPhases ph(p);
    BandedUnitary u = assemble_half(ph, p.r, p.t, n_dim, boundary, p.digest());
    if (p.lambda != 0.0) u = perturb_rank_one(u, p.lambda);
    return u;
}

inline BandedUnitary build_full_line(const ModelParams& p, int n_dim, Boundary boundary = Boundary::open,
                                     bool allow_rank_one = false) {
    AlmostPeriodicPhases ph(p);
    BandedUnitary u = assemble_full(ph, p.r, p.t, n_dim, boundary, p.digest());
    if (p.lambda != 0.0) u = perturb_rank_one(u, p.lambda, allow_rank_one);
    return u;
}

/// max |U(beta,theta)+ - e^{-i 2 theta} U(beta,0)+| over the truncation.
inline double theta_covariance_check(const ModelParams& params, int n_dim = 64,
                                     Boundary boundary = Boundary::open) {
    ModelParams p0 = params;
    p0.theta = 0.0;
    AlmostPeriodicPhases ph(params), ph0(p0);
    BandedUnitary ut = assemble_half(ph, params.r, params.t, n_dim, boundary);
    BandedUnitary u0 = assemble_half(ph0, p0.r, p0.t, n_dim, boundary);
    const cplx rot = detail::phase(-2.0 * params.theta);
    double m = 0;
    for (int col = 1; col <= n_dim; ++col)
        for (int row = std::max(1, col - 2); row <= std::min(n_dim, col + 2); ++row)
            m = std::max(m, std::abs(ut.entry(row, col) - rot * u0.entry(row, col)));
    return m;
}

} // namespace floq
