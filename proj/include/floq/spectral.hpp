#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "floq/assemble.hpp"
#include "floq/banded.hpp"
#include "floq/cocycle.hpp"
#include "floq/model.hpp"
#include "floq/util.hpp"

namespace floq {

/// Eigenphase/weight pairs of a truncated operator with respect to one
/// reference basis vector; phases sorted ascending in [0, 2*pi).
struct SpectralMeasure {
    std::vector<double> phase;
    std::vector<double> weight;

    double total_mass() const { return std::accumulate(weight.begin(), weight.end(), 0.0); }
    std::size_t size() const { return phase.size(); }
};

inline Eigen::MatrixXcd to_dense(const BandedUnitary& u) {
    const int n = u.n_dim();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (int col = 1; col <= n; ++col)
        for (int row = std::max(1, col - 2); row <= std::min(n, col + 2); ++row)
            m(row - 1, col - 1) = u.entry(row, col);
    return m;
}

/// Schur form of a unitary matrix. Because a unitary matrix is normal, the
/// triangular factor is diagonal up to roundoff; the orthonormal Schur basis
/// is then an eigenbasis and the strict upper triangle bounds the residual
/// ||U q_j - lambda_j q_j|| exactly.
struct UnitaryEigensystem {
    Eigen::MatrixXcd vectors;       // orthonormal columns
    std::vector<double> phases;     // arg of eigenvalue in [0, 2*pi)
    std::vector<double> residuals;  // per-column residual bound
};

namespace detail {

/// Schur pass; returns the worst per-column residual bound without throwing.
inline double schur_pass(const Eigen::MatrixXcd& m, UnitaryEigensystem& sys, int& worst_j) {
    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(m, /*computeU=*/true);
    if (schur.info() != Eigen::Success) throw NumericError("unitary_eigensystem: Schur iteration failed");
    const auto n = m.rows();
    sys.vectors = schur.matrixU();
    const auto& T = schur.matrixT();
    sys.phases.resize(static_cast<std::size_t>(n));
    sys.residuals.resize(static_cast<std::size_t>(n));
    double worst = 0;
    worst_j = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        sys.phases[static_cast<std::size_t>(j)] = reduce_angle(std::arg(T(j, j)));
        double r2 = 0;
        for (Eigen::Index i = 0; i < j; ++i) r2 += std::norm(T(i, j));
        const double res = std::sqrt(r2);
        sys.residuals[static_cast<std::size_t>(j)] = res;
        if (res > worst) {
            worst = res;
            worst_j = static_cast<int>(j);
        }
    }
    return worst;
}

/// Deterministic Haar-distributed unitary; used to break structures (pure
/// shift cycles) on which the plain QR iteration loses accuracy.
inline Eigen::MatrixXcd scramble_unitary(int n) {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(n));
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXcd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
    Eigen::MatrixXcd q = qr.householderQ();
    Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j) q.col(j) *= r(j, j) / std::abs(r(j, j));
    return q;
}

} // namespace detail

inline UnitaryEigensystem unitary_eigensystem(const BandedUnitary& u, int dense_limit = 2048) {
    const int n = u.n_dim();
    if (n > dense_limit)
        throw ValidationError("unitary_eigensystem: dimension " + std::to_string(n) +
                              " exceeds the dense limit " + std::to_string(dense_limit));
    if (u.boundary() != Boundary::closed)
        throw ValidationError("unitary_eigensystem: requires a closed (exactly unitary) truncation");
    Eigen::MatrixXcd m = to_dense(u);
    UnitaryEigensystem sys;
    int worst_j = 0;
    double worst = detail::schur_pass(m, sys, worst_j);
    if (worst > 1e-10) {
        // retry under a fixed random conjugation; eigenvalues are unchanged
        // and the residual bound transforms back exactly
        const Eigen::MatrixXcd q0 = detail::scramble_unitary(n);
        Eigen::MatrixXcd ms = q0.adjoint() * m * q0;
        UnitaryEigensystem sys2;
        int worst_j2 = 0;
        const double worst2 = detail::schur_pass(ms, sys2, worst_j2);
        if (worst2 < worst) {
            sys = std::move(sys2);
            sys.vectors = (q0 * sys.vectors).eval();
            worst = worst2;
            worst_j = worst_j2;
        }
    }
    if (worst > 1e-10)
        throw NumericError("unitary_eigensystem: eigenpair " + std::to_string(worst_j) + " residual " +
                           fmt_g17(worst) + " exceeds 1e-10");
    return sys;
}

/// Spectral measure of the truncation w.r.t. the basis vector at
/// ref_index (1-based storage index).
inline SpectralMeasure eigendecompose(const BandedUnitary& u, int ref_index = 1, int dense_limit = 2048) {
    if (ref_index < 1 || ref_index > u.n_dim())
        throw ValidationError("eigendecompose: reference index out of range");
    const UnitaryEigensystem sys = unitary_eigensystem(u, dense_limit);
    const int n = u.n_dim();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return sys.phases[static_cast<std::size_t>(a)] < sys.phases[static_cast<std::size_t>(b)];
    });
    SpectralMeasure mu;
    mu.phase.reserve(static_cast<std::size_t>(n));
    mu.weight.reserve(static_cast<std::size_t>(n));
    for (int j : order) {
        mu.phase.push_back(sys.phases[static_cast<std::size_t>(j)]);
        mu.weight.push_back(std::norm(sys.vectors(ref_index - 1, j)));
    }
    return mu;
}

// ---------------------------------------------------------------------------
// Transforms on the unit circle
// ---------------------------------------------------------------------------

namespace detail {
inline void check_off_circle(cplx z) {
    if (std::abs(std::abs(z) - 1.0) < 1e-12)
        throw ValidationError("transform: |z| = 1 is outside the domain");
}
} // namespace detail

/// F_mu(z) = Sum w_j (e^{iE_j} + z) / (e^{iE_j} - z).
inline cplx cauchy(const SpectralMeasure& mu, cplx z) {
    detail::check_off_circle(z);
    cplx s(0, 0);
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const cplx e = std::polar(1.0, mu.phase[j]);
        s += mu.weight[j] * (e + z) / (e - z);
    }
    return s;
}

/// R_mu(z) = Sum w_j / (e^{iE_j} - z).
inline cplx borel(const SpectralMeasure& mu, cplx z) {
    detail::check_off_circle(z);
    cplx s(0, 0);
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const cplx e = std::polar(1.0, mu.phase[j]);
        s += mu.weight[j] / (e - z);
    }
    return s;
}

/// Moebius transform mapping the unperturbed Cauchy transform to the one of
/// the rank-one phase family:
///   F_lambda = ((e^{il}-1) + (e^{il}+1) F_0) / ((e^{il}+1) + (e^{il}-1) F_0),
/// with the lambda = pi member degenerating to F_lambda = 1/F_0.
inline cplx clark_transform(cplx f0, double lambda) {
    if (std::abs(lambda - kPi) < 1e-15) {
        if (std::abs(f0) < 1e-14) throw NumericError("clark_transform: pole at lambda = pi, F_0 = 0");
        return 1.0 / f0;
    }
    const cplx el = std::polar(1.0, lambda);
    const cplx den = (el + 1.0) + (el - 1.0) * f0;
    if (std::abs(den) < 1e-14)
        throw NumericError("clark_transform: vanishing denominator (point mass direction)");
    return ((el - 1.0) + (el + 1.0) * f0) / den;
}

/// Re F_lambda for lambda != pi via y = sin(lambda)/(1+cos(lambda)):
///   Re F_lambda = (1+y^2) Re F_0 / |1 + i y F_0|^2.
inline double clark_real(cplx f0, double lambda) {
    if (std::abs(lambda - kPi) < 1e-15) {
        const double m2 = std::norm(f0);
        if (m2 < 1e-28) throw NumericError("clark_real: pole at lambda = pi, F_0 = 0");
        return f0.real() / m2;
    }
    const double y = std::sin(lambda) / (1.0 + std::cos(lambda));
    const cplx den = 1.0 + cplx(0, 1) * y * f0;
    return (1.0 + y * y) * f0.real() / std::norm(den);
}

/// Borel-transform form of the same family:
///   R_lambda = R_0 / (e^{il} + z (e^{il} - 1) R_0).
inline cplx borel_clark(cplx r0, cplx z, double lambda) {
    const cplx el = std::polar(1.0, lambda);
    const cplx den = el + z * (el - 1.0) * r0;
    if (std::abs(den) < 1e-14) throw NumericError("borel_clark: vanishing denominator");
    return r0 / den;
}

struct ClarkConsistency {
    double max_err_cauchy = 0;   // transform route vs direct mu_lambda, F form
    double max_err_borel = 0;    // same in the R form
    double max_err_relation = 0; // F = 2 z R + 1 on both measures
};

/// Builds mu_0 from the closed half-line truncation and mu_lambda from its
/// rank-one perturbation, then compares the direct transforms of mu_lambda
/// with the transformed ones of mu_0 over the z grid.
inline ClarkConsistency clark_consistency(const ModelParams& params, int n_dim, double lambda,
                                          const std::vector<cplx>& z_grid, int dense_limit = 2048) {
    ModelParams p0 = params;
    p0.lambda = 0.0;
    BandedUnitary u0 = build_half_line(p0, n_dim, Boundary::closed);
    BandedUnitary ul = perturb_rank_one(u0, lambda);
    const SpectralMeasure mu0 = eigendecompose(u0, 1, dense_limit);
    const SpectralMeasure mul = eigendecompose(ul, 1, dense_limit);
    ClarkConsistency out;
    for (cplx z : z_grid) {
        const cplx f0 = cauchy(mu0, z), r0 = borel(mu0, z);
        const cplx fl = cauchy(mul, z), rl = borel(mul, z);
        out.max_err_cauchy = std::max(out.max_err_cauchy, std::abs(fl - clark_transform(f0, lambda)));
        out.max_err_borel = std::max(out.max_err_borel, std::abs(rl - borel_clark(r0, z, lambda)));
        out.max_err_relation = std::max({out.max_err_relation, std::abs(f0 - (2.0 * z * r0 + 1.0)),
                                         std::abs(fl - (2.0 * z * rl + 1.0))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spectral averaging, densities
// ---------------------------------------------------------------------------

struct AveragingResult {
    double lhs = 0; // (1/2pi) * trapezoid over the lambda grid of \int f d mu_lambda
    double rhs = 0; // \int f(E) dE / 2pi
};

/// Averaging of the rank-one family over the full phase circle. The lambda
/// average carries weight d lambda / 2pi so that f == 1 gives 1 on both
/// sides (each mu_lambda is a probability measure).
inline AveragingResult spectral_average(const ModelParams& params, int n_dim,
                                        const std::function<double(double)>& f, int n_lambda,
                                        int dense_limit = 2048) {
    if (n_lambda < 8) throw ValidationError("spectral_average: need n_lambda >= 8");
    ModelParams p0 = params;
    p0.lambda = 0.0;
    BandedUnitary u0 = build_half_line(p0, n_dim, Boundary::closed);
    AveragingResult res;
    for (int i = 0; i < n_lambda; ++i) {
        const double lam = kTwoPi * static_cast<double>(i) / static_cast<double>(n_lambda);
        BandedUnitary ul = perturb_rank_one(u0, lam);
        const SpectralMeasure mu = eigendecompose(ul, 1, dense_limit);
        double integral = 0;
        for (std::size_t j = 0; j < mu.size(); ++j) integral += mu.weight[j] * f(mu.phase[j]);
        res.lhs += integral;
    }
    res.lhs /= static_cast<double>(n_lambda);
    // periodic trapezoid at high resolution; spectrally accurate for smooth f
    constexpr int kQuad = 8192;
    double q = 0;
    for (int i = 0; i < kQuad; ++i) q += f(kTwoPi * static_cast<double>(i) / kQuad);
    res.rhs = q / static_cast<double>(kQuad);
    return res;
}

/// Poisson-smoothed density at scale epsilon: Re F_mu((1-epsilon) e^{iE}).
inline double density(const SpectralMeasure& mu, double E, double epsilon) {
    if (!(epsilon > 0.0) || epsilon >= 0.5)
        throw ValidationError("density: epsilon must lie in (0, 0.5)");
    return cauchy(mu, std::polar(1.0 - epsilon, E)).real();
}

/// Max of the smoothed density over an E grid in [lo, hi]; an estimate of
/// the essential sup ||g||_inf of the density of mu on that window.
inline double sup_density(const SpectralMeasure& mu, double lo, double hi, double epsilon,
                          int grid_n = 256) {
    if (!(hi > lo)) throw ValidationError("sup_density: empty window");
    double m = 0;
    for (int i = 0; i < grid_n; ++i) {
        const double E = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(grid_n);
        m = std::max(m, density(mu, E, epsilon));
    }
    return m;
}

/// Checks the covariance of the smoothed density under the theta shift.
/// Multiplying the operator by e^{-i 2 theta} lowers every eigenphase by
/// 2 theta, so the density satisfies f_theta(E) = f_0(E + 2 theta); the
/// comparison is exact at truncation level up to eigensolver noise.
inline double covariance_density_check(const ModelParams& params, int n_dim, double epsilon, double theta,
                                       int grid_n = 128, int dense_limit = 2048) {
    ModelParams pt = params;
    pt.theta = theta;
    pt.lambda = 0.0;
    ModelParams p0 = params;
    p0.theta = 0.0;
    p0.lambda = 0.0;
    BandedUnitary ut = build_half_line(pt, n_dim, Boundary::closed);
    BandedUnitary u0 = build_half_line(p0, n_dim, Boundary::closed);
    const SpectralMeasure mt = eigendecompose(ut, 1, dense_limit);
    const SpectralMeasure m0 = eigendecompose(u0, 1, dense_limit);
    double worst = 0;
    for (int i = 0; i < grid_n; ++i) {
        const double E = kTwoPi * static_cast<double>(i) / static_cast<double>(grid_n);
        worst = std::max(worst, std::abs(density(mt, E, epsilon) - density(m0, E + 2.0 * theta, epsilon)));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Time-averaged escape bound
// ---------------------------------------------------------------------------

struct EscapeBoundPair {
    double lhs = 0;
    double rhs = 0;
};

/// For a unit vector xi = eta + psi with <eta, psi> = 0, a coordinate
/// projection P and a unitary U:
///   (1/(T+1)) Sum_{j=T}^{2T} ||(I-P) U^j xi||^2
///     >= ||psi||^2 - 3 ((1/(T+1)) Sum_{j=T}^{2T} ||P U^j psi||^2)^{1/2}.
/// Returns both sides; the caller asserts lhs >= rhs within slack.
inline EscapeBoundPair time_avg_escape_bound(const Eigen::MatrixXcd& U, const std::vector<int>& proj_sites,
                                             const Eigen::VectorXcd& eta, const Eigen::VectorXcd& psi,
                                             long T) {
    const auto n = U.rows();
    if (eta.size() != n || psi.size() != n)
        throw ValidationError("time_avg_escape_bound: vector/operator size mismatch");
    if (T < 1) throw ValidationError("time_avg_escape_bound: T must be >= 1");
    if (std::abs(eta.dot(psi)) > 1e-12)
        throw ValidationError("time_avg_escape_bound: decomposition is not orthogonal, |<eta,psi>| = " +
                              fmt_g17(std::abs(eta.dot(psi))));
    Eigen::VectorXcd xi = eta + psi;
    if (std::abs(xi.norm() - 1.0) > 1e-10)
        throw ValidationError("time_avg_escape_bound: xi = eta + psi must be a unit vector");
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(n);
    for (int s : proj_sites) {
        if (s < 1 || s > n) throw ValidationError("time_avg_escape_bound: projection site out of range");
        mask(s - 1) = 1.0;
    }
    Eigen::VectorXcd xj = xi, pj = psi;
    double acc_escape = 0, acc_proj = 0;
    for (long j = 1; j <= 2 * T; ++j) {
        xj = U * xj;
        pj = U * pj;
        if (j < T) continue;
        double in_p = 0, out_p = 0, psi_p = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double w = mask(i);
            const double x2 = std::norm(xj(i));
            in_p += w * x2;
            out_p += (1.0 - w) * x2;
            psi_p += w * std::norm(pj(i));
        }
        (void)in_p;
        acc_escape += out_p;
        acc_proj += psi_p;
    }
    EscapeBoundPair out;
    const double avg_proj = acc_proj / static_cast<double>(T + 1);
    out.lhs = acc_escape / static_cast<double>(T + 1);
    out.rhs = psi.squaredNorm() - 3.0 * std::sqrt(avg_proj);
    return out;
}

// ---------------------------------------------------------------------------
// Cyclicity and localization
// ---------------------------------------------------------------------------

/// Numerical rank of the Krylov family {U^j phi_ref : j = -n..n} on the
/// truncation (closed boundary, so U^{-1} = U^dagger is exact).
inline int cyclicity_rank(const BandedUnitary& u, int phi_index, int n_krylov, double rel_tol = 1e-8) {
    if (u.boundary() != Boundary::closed)
        throw ValidationError("cyclicity_rank: requires a closed truncation");
    const int n = u.n_dim();
    const int cols = 2 * n_krylov + 1;
    Eigen::MatrixXcd K(n, cols);
    std::vector<cplx> fwd(static_cast<std::size_t>(n) + 1, cplx(0, 0));
    std::vector<cplx> bwd(static_cast<std::size_t>(n) + 1, cplx(0, 0));
    std::vector<cplx> tmp(static_cast<std::size_t>(n) + 1, cplx(0, 0));
    fwd[static_cast<std::size_t>(phi_index)] = 1.0;
    bwd[static_cast<std::size_t>(phi_index)] = 1.0;
    auto store = [&](int col, const std::vector<cplx>& v) {
        for (int i = 1; i <= n; ++i) K(i - 1, col) = v[static_cast<std::size_t>(i)];
    };
    store(n_krylov, fwd);
    for (int j = 1; j <= n_krylov; ++j) {
        u.matvec(fwd.data(), tmp.data());
        fwd.swap(tmp);
        store(n_krylov + j, fwd);
        u.matvec_adjoint(bwd.data(), tmp.data());
        bwd.swap(tmp);
        store(n_krylov - j, bwd);
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(K);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    const double cut = rel_tol * sv(0);
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++rank;
    return rank;
}

/// Per-eigenvector localization record.
struct EigRecord {
    double phase = 0;
    double weight = 0;     // |<phi_1, v>|^2
    double ipr = 0;        // Sum |v_k|^4
    double decay = 0;      // envelope fit beyond the peak; kRateFloor if the
                           // tail is already at numerical zero
    bool boundary_flag = false; // >= 5% mass in the last 10 sites
    bool short_tail = false;    // too close to the edge for a meaningful fit
};

inline constexpr double kRateFloor = -50.0;

struct LocalizationOptions {
    double boundary_mass = 0.05;
    int boundary_sites = 10;
    int edge_margin = 5;    // sites dropped at the right edge of the fit
    int min_fit_sites = 16; // below this the record is marked short_tail
};

/// Eigenvector localization profile of a closed truncation: participation
/// ratio and the envelope decay fit away from both edges (from the peak,
/// excluding the outermost sites).
inline std::vector<EigRecord> localization_profile(const BandedUnitary& u,
                                                   const LocalizationOptions& opt = {},
                                                   int dense_limit = 2048) {
    const UnitaryEigensystem sys = unitary_eigensystem(u, dense_limit);
    const int n = u.n_dim();
    std::vector<EigRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        EigRecord rec;
        rec.phase = sys.phases[static_cast<std::size_t>(j)];
        rec.weight = std::norm(sys.vectors(0, j));
        double tail10 = 0, ipr = 0, peak = 0;
        int peak_idx = 1;
        std::vector<double> amps(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double a = std::abs(sys.vectors(i, j));
            amps[static_cast<std::size_t>(i)] = a;
            ipr += a * a * a * a;
            if (i >= n - opt.boundary_sites) tail10 += a * a;
            if (a > peak) {
                peak = a;
                peak_idx = i;
            }
        }
        rec.ipr = ipr;
        rec.boundary_flag = tail10 >= opt.boundary_mass;
        const int fit_lo = peak_idx;
        const int fit_hi = n - 1 - opt.edge_margin;
        if (fit_hi - fit_lo + 1 < opt.min_fit_sites) {
            rec.short_tail = true;
            rec.decay = 0;
        } else {
            double tail_max = 0;
            for (int i = fit_lo + 1; i <= fit_hi; ++i) tail_max = std::max(tail_max, amps[static_cast<std::size_t>(i)]);
            if (tail_max <= peak * 1e-14) {
                rec.decay = kRateFloor;
            } else {
                std::vector<double> window(amps.begin() + fit_lo, amps.begin() + fit_hi + 1);
                rec.decay = decay_rate_envelope(window, static_cast<double>(fit_lo + 1));
            }
        }
        records.push_back(rec);
    }
    return records;
}

} // namespace floq
