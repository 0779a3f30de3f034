#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <vector>

#include "floq/errors.hpp"
#include "floq/util.hpp"

namespace floq {

using cplx = std::complex<double>;

enum class Geometry { half_line, full_line };

/// open: the infinite matrix is cut at the window edge, dropping outgoing
///       hops. Interior columns are exact; the last column is not isometric.
/// closed: the straddling scattering block at each cut is replaced by the
///       pure phase of its own theta factor, so the truncation is exactly
///       unitary. Interior columns agree with the open build.
enum class Boundary { open, closed };

/// Pentadiagonal complex matrix in gather band layout:
/// bands_[d][row-1] = entry(row, row + d - 2), nonzero only for |row-col| <= 2.
///
/// Half-line storage covers sites 1..N (storage index == site).
/// Full-line storage covers sites -W..W-1 with storage index = site + W + 1.
class BandedUnitary {
public:
    BandedUnitary(Geometry g, Boundary b, int n_dim, std::uint64_t params_digest)
        : geom_(g), boundary_(b), n_(n_dim), digest_(params_digest) {
        if (n_ < 2) throw ValidationError("BandedUnitary: dimension must be >= 2");
        for (auto& band : bands_) band.assign(static_cast<std::size_t>(n_), cplx(0, 0));
    }

    Geometry geometry() const { return geom_; }
    Boundary boundary() const { return boundary_; }
    int n_dim() const { return n_; }
    std::uint64_t params_digest() const { return digest_; }

    /// Full line: storage index = site + offset; half line: offset 0.
    int site_offset() const { return geom_ == Geometry::full_line ? n_ / 2 + 1 : 0; }
    long site_of(int storage_index) const { return storage_index - site_offset(); }
    int index_of(long site) const {
        const long idx = site + site_offset();
        if (idx < 1 || idx > n_) throw ValidationError("site " + std::to_string(site) + " outside window");
        return static_cast<int>(idx);
    }

    cplx entry(int row, int col) const {
        const int d = col - row + 2;
        if (row < 1 || row > n_ || col < 1 || col > n_ || d < 0 || d > 4) return cplx(0, 0);
        return bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(row - 1)];
    }

    void set_entry(int row, int col, cplx v) {
        const int d = col - row + 2;
        if (row < 1 || row > n_ || col < 1 || col > n_)
            throw ValidationError("BandedUnitary::set_entry: index out of range");
        if (d < 0 || d > 4) throw ValidationError("BandedUnitary::set_entry: outside the band");
        bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(row - 1)] = v;
    }

    void scale_column(int col, cplx factor) {
        for (int row = std::max(1, col - 2); row <= std::min(n_, col + 2); ++row) {
            const int d = col - row + 2;
            bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(row - 1)] *= factor;
        }
    }

    void clear_column(int col) { scale_column(col, cplx(0, 0)); }

    double column_norm2(int col) const {
        double s = 0;
        for (int row = std::max(1, col - 2); row <= std::min(n_, col + 2); ++row) s += std::norm(entry(row, col));
        return s;
    }

    /// y = U x over 1-based storage indices; x and y must hold n_dim+1 slots.
    void matvec(const cplx* x, cplx* y) const {
        for (int i = 1; i <= n_; ++i) {
            cplx acc(0, 0);
            for (int d = 0; d < 5; ++d) {
                const int col = i + d - 2;
                if (col >= 1 && col <= n_) acc += bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(i - 1)] * x[col];
            }
            y[i] = acc;
        }
    }

    /// y = U^dagger x.
    void matvec_adjoint(const cplx* x, cplx* y) const {
        for (int col = 1; col <= n_; ++col) {
            cplx acc(0, 0);
            for (int row = std::max(1, col - 2); row <= std::min(n_, col + 2); ++row)
                acc += std::conj(entry(row, col)) * x[row];
            y[col] = acc;
        }
    }

    double max_abs_diff(const BandedUnitary& o) const {
        if (o.n_ != n_) throw ValidationError("max_abs_diff: dimension mismatch");
        double m = 0;
        for (int d = 0; d < 5; ++d)
            for (int i = 0; i < n_; ++i)
                m = std::max(m, std::abs(bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)] -
                                         o.bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)]));
        return m;
    }

    bool equal_bits(const BandedUnitary& o) const {
        if (o.n_ != n_) return false;
        for (int d = 0; d < 5; ++d)
            for (int i = 0; i < n_; ++i) {
                const cplx a = bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)];
                const cplx b = o.bands_[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)];
                if (std::memcmp(&a, &b, sizeof a) != 0) return false;
            }
        return true;
    }

    /// Columnar text export: header lines, then "col row re im" rows in
    /// column-major order.
    void export_text(std::ostream& os, const std::string& params_line) const {
        os << "# floq operator export v1\n";
        os << "# geometry " << (geom_ == Geometry::half_line ? "half" : "full") << "\n";
        os << "# boundary " << (boundary_ == Boundary::open ? "open" : "closed") << "\n";
        os << "# n_dim " << n_ << "\n";
        os << "# site_offset " << site_offset() << "\n";
        os << "# params " << params_line << "\n";
        os << "# digest " << hex64(digest_) << "\n";
        os << "col row re im\n";
        for (int col = 1; col <= n_; ++col)
            for (int row = std::max(1, col - 2); row <= std::min(n_, col + 2); ++row) {
                const cplx v = entry(row, col);
                if (v == cplx(0, 0)) continue;
                os << col << " " << row << " " << fmt_g17(v.real()) << " " << fmt_g17(v.imag()) << "\n";
            }
    }

private:
    Geometry geom_;
    Boundary boundary_;
    int n_;
    std::uint64_t digest_;
    std::array<std::vector<cplx>, 5> bands_;
};

struct UnitarityDefect {
    double interior = 0; // max |(U^H U - I)_{ij}| with boundary rows/cols excluded
    double boundary = 0; // max defect among entries touching the cut columns
};

/// Gram defect computed column-by-column; only |i-j| <= 4 entries can be
/// nonzero for a pentadiagonal matrix.
inline UnitarityDefect unitarity_defect(const BandedUnitary& u) {
    const int n = u.n_dim();
    const bool full = u.geometry() == Geometry::full_line;
    const int lo_excl = full ? 2 : 0; // excluded leading cols (full line cut on both sides)
    UnitarityDefect d;
    for (int i = 1; i <= n; ++i) {
        for (int j = i; j <= std::min(n, i + 4); ++j) {
            cplx g(0, 0);
            for (int row = std::max(1, j - 2); row <= std::min(n, i + 2); ++row)
                g += std::conj(u.entry(row, i)) * u.entry(row, j);
            if (i == j) g -= 1.0;
            const double a = std::abs(g);
            const bool edge = (i > n - 2) || (j > n - 2) || (i <= lo_excl) || (j <= lo_excl);
            if (edge)
                d.boundary = std::max(d.boundary, a);
            else
                d.interior = std::max(d.interior, a);
        }
    }
    return d;
}

/// Amplitudes below this are flushed to exact zero after each step. The
/// region between the ballistic front and the light cone otherwise fills
/// with subnormal values, and subnormal operands slow the matvec by an
/// order of magnitude. Contributions of flushed mass to any observable are
/// below 1e-580 per site.
inline constexpr double kAmplitudeFloor = 1e-290;

/// Split re/im band copy in gather layout for the time-evolution hot loop.
/// Arrays are padded by 2 on both sides so shifted reads stay in bounds.
class EvolutionKernel {
public:
    explicit EvolutionKernel(const BandedUnitary& u) : n_(u.n_dim()) {
        for (int d = 0; d < 5; ++d) {
            re_[d].assign(static_cast<std::size_t>(n_) + 5, 0.0);
            im_[d].assign(static_cast<std::size_t>(n_) + 5, 0.0);
            const int off = d - 2;
            for (int row = 1; row <= n_; ++row) {
                const int col = row + off;
                if (col < 1 || col > n_) continue;
                const cplx v = u.entry(row, col);
                re_[d][static_cast<std::size_t>(row)] = v.real();
                im_[d][static_cast<std::size_t>(row)] = v.imag();
            }
        }
    }

    int n_dim() const { return n_; }

    /// y[1..limit] = (U x)[1..limit]; x must be zero-padded with 2 slots
    /// past index n. Rows beyond `limit` are left untouched.
    void apply(const double* xr, const double* xi, double* yr, double* yi, int limit) const {
        std::fill(yr + 1, yr + limit + 1, 0.0);
        std::fill(yi + 1, yi + limit + 1, 0.0);
        for (int d = 0; d < 5; ++d) {
            const int off = d - 2;
            const double* cr = re_[d].data();
            const double* ci = im_[d].data();
            const double* sxr = xr + off;
            const double* sxi = xi + off;
            const int i0 = std::max(1, 1 - off);
            const int i1 = std::min(limit, n_ - off);
            for (int i = i0; i <= i1; ++i) {
                yr[i] += cr[i] * sxr[i] - ci[i] * sxi[i];
                yi[i] += cr[i] * sxi[i] + ci[i] * sxr[i];
            }
        }
        for (int i = 1; i <= limit; ++i) {
            yr[i] = std::fabs(yr[i]) < kAmplitudeFloor ? 0.0 : yr[i];
            yi[i] = std::fabs(yi[i]) < kAmplitudeFloor ? 0.0 : yi[i];
        }
    }

private:
    int n_;
    std::array<std::vector<double>, 5> re_, im_;
};

} // namespace floq
