#pragma once

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "floq/errors.hpp"
#include "floq/model.hpp"
#include "floq/util.hpp"

namespace floq {

/// 2x2 coefficient-propagation matrix: (c_{2k}, c_{2k+1})^t = T_k(E) (c_{2k-2}, c_{2k-1})^t
/// for solutions of U psi = e^{iE} psi.
struct TransferMatrix {
    cplx a11, a12, a21, a22;

    cplx det() const { return a11 * a22 - a12 * a21; }

    /// Max row sum (the operator norm induced by the sup vector norm).
    double sup_norm() const {
        return std::max(std::abs(a11) + std::abs(a12), std::abs(a21) + std::abs(a22));
    }

    std::pair<cplx, cplx> apply(const std::pair<cplx, cplx>& v) const {
        return {a11 * v.first + a12 * v.second, a21 * v.first + a22 * v.second};
    }

    TransferMatrix inverse() const {
        const cplx d = det();
        if (std::abs(d) < 1e-300) throw NumericError("TransferMatrix::inverse: singular");
        return TransferMatrix{a22 / d, -a12 / d, -a21 / d, a11 / d};
    }

    TransferMatrix operator*(const TransferMatrix& o) const {
        return TransferMatrix{a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22,
                              a21 * o.a11 + a22 * o.a21, a21 * o.a12 + a22 * o.a22};
    }

    TransferMatrix& operator/=(double s) {
        a11 /= s;
        a12 /= s;
        a21 /= s;
        a22 /= s;
        return *this;
    }
};

namespace detail {
inline void require_transmission(double t) {
    if (!(t > 0.0)) throw ValidationError("transfer matrices are singular at t = 0");
}
inline cplx ephase(double x) { return std::polar(1.0, x); }
} // namespace detail

/// T_k(E) from the phases at indices 2k-2, 2k-1, 2k.
inline TransferMatrix transfer_matrix(const PhaseSequence& ph, double r, double t, long long k, double E) {
    detail::require_transmission(t);
    using detail::ephase;
    const PhaseTriple pa = ph.at(2 * k - 2), pb = ph.at(2 * k - 1), pc = ph.at(2 * k);
    TransferMatrix m;
    m.a11 = -ephase(-(E + pb.gamma + pa.gamma + pb.theta + pa.theta));
    m.a12 = cplx(0, 1) * (r / t) *
            (ephase(-(E + pb.gamma - pa.alpha + pb.theta + pa.theta)) - ephase(-(pb.gamma - pb.alpha)));
    m.a21 = cplx(0, 1) * (r / t) *
            (ephase(-(pa.theta - pc.theta + pc.gamma + pb.gamma + pa.gamma + pb.alpha)) -
             ephase(-(E + pa.theta + pb.theta + pc.gamma + pb.gamma + pa.gamma + pc.alpha)));
    m.a22 = -(1.0 / (t * t)) * ephase(E + pc.theta + pb.theta - pc.gamma - pb.gamma) +
            (r * r / (t * t)) * ephase(-(pc.gamma + pb.gamma)) *
                (ephase(pc.theta - pa.theta + pa.alpha - pb.alpha) + ephase(-(pc.alpha - pb.alpha))) -
            (r * r / (t * t)) *
                ephase(-(E + pa.theta + pb.theta + pc.gamma + pb.gamma + pc.alpha - pa.alpha));
    return m;
}

/// The closed-form determinant e^{-i(theta_{2k-2} - theta_{2k} + gamma_{2k}
/// + 2 gamma_{2k-1} + gamma_{2k-2})}, a pure phase.
inline cplx transfer_det_formula(const PhaseSequence& ph, long long k) {
    const PhaseTriple pa = ph.at(2 * k - 2), pb = ph.at(2 * k - 1), pc = ph.at(2 * k);
    return detail::ephase(-(pa.theta - pc.theta + pc.gamma + 2.0 * pb.gamma + pa.gamma));
}

/// Half-line boundary vector: (c_2, c_3)^t = c_1 (a_1(E), a_2(E))^t.
inline std::pair<cplx, cplx> boundary_vector(const PhaseSequence& ph, double r, double t, double E) {
    detail::require_transmission(t);
    using detail::ephase;
    const PhaseTriple p0 = ph.at(0), p1 = ph.at(1), p2 = ph.at(2);
    const cplx a1 = (cplx(0, 1) / t) *
                    (ephase(-(E + p1.gamma + p1.theta + p0.theta)) - r * ephase(-(p1.gamma - p1.alpha)));
    const cplx a2 = -(1.0 / (t * t)) * ephase(E + p2.theta + p1.theta - p2.gamma - p1.gamma) +
                    (r / (t * t)) * ephase(-(p2.gamma + p1.gamma)) *
                        (ephase(p2.theta - p0.theta - p1.alpha) + r * ephase(-(p2.alpha - p1.alpha))) -
                    (r / (t * t)) * ephase(-(E + p0.theta + p1.theta + p2.gamma + p1.gamma + p2.alpha));
    return {a1, a2};
}

/// Log-rescaled running product of 2x2 factors. Rescaling divides by the
/// sup norm and accumulates its log, so the represented matrix is
/// exp(log_scale) * current.
class CocycleAccumulator {
public:
    explicit CocycleAccumulator(long rescale_every = 16)
        : rescale_every_(rescale_every), current_{cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(1, 0)} {
        if (rescale_every_ < 1) throw ValidationError("CocycleAccumulator: rescale interval must be >= 1");
    }

    void push(const TransferMatrix& m) {
        current_ = m * current_;
        ++count_;
        if (count_ % rescale_every_ == 0) rescale();
    }

    void rescale() {
        const double s = current_.sup_norm();
        if (!std::isfinite(s) || s <= 0.0)
            throw NumericError("CocycleAccumulator: overflow after " + std::to_string(count_) +
                               " factors (norm " + fmt_g17(s) + "); lower the rescale interval");
        log_scale_ += std::log(s);
        current_ /= s;
    }

    long count() const { return count_; }
    double log_norm() const { return log_scale_ + std::log(current_.sup_norm()); }
    const TransferMatrix& current() const { return current_; }
    double log_scale() const { return log_scale_; }

private:
    long rescale_every_;
    long count_ = 0;
    double log_scale_ = 0;
    TransferMatrix current_;
};

struct CocycleResult {
    double gamma = 0;   // ln ||T_n ... T_1|| / n
    double stderr_ = 0; // batch-mean spread over 32 segments; a convergence
                        // gauge, not an i.i.d. confidence interval
    long n_factors = 0;
    bool below_model_bound = false; // set by callers that know a model bound
};

/// Lyapunov exponent estimate from n_factors transfer matrices.
inline CocycleResult lyapunov(const PhaseSequence& ph, double r, double t, double E, long n_factors,
                              long rescale_every = 16) {
    detail::require_transmission(t);
    if (n_factors < 1000) throw ValidationError("lyapunov: need at least 1e3 factors");
    constexpr int kSegments = 32;
    CocycleAccumulator acc(rescale_every);
    std::vector<double> seg_log(kSegments, 0.0);
    std::vector<long> seg_cnt(kSegments, 0);
    const long seg_len = n_factors / kSegments;
    double prev_log = 0;
    for (long k = 1; k <= n_factors; ++k) {
        acc.push(transfer_matrix(ph, r, t, k, E));
        const long seg = std::min<long>((k - 1) / std::max<long>(seg_len, 1), kSegments - 1);
        const double cur = acc.log_norm();
        if (!std::isfinite(cur))
            throw NumericError("lyapunov: non-finite log norm at factor " + std::to_string(k));
        seg_log[static_cast<std::size_t>(seg)] += cur - prev_log;
        seg_cnt[static_cast<std::size_t>(seg)] += 1;
        prev_log = cur;
    }
    CocycleResult res;
    res.n_factors = n_factors;
    res.gamma = acc.log_norm() / static_cast<double>(n_factors);
    double mean = 0;
    std::vector<double> rates;
    for (int s = 0; s < kSegments; ++s)
        if (seg_cnt[static_cast<std::size_t>(s)] > 0) {
            rates.push_back(seg_log[static_cast<std::size_t>(s)] / static_cast<double>(seg_cnt[static_cast<std::size_t>(s)]));
            mean += rates.back();
        }
    mean /= static_cast<double>(rates.size());
    double var = 0;
    for (double v : rates) var += (v - mean) * (v - mean);
    var /= static_cast<double>(rates.size()) * std::max<double>(1.0, static_cast<double>(rates.size()) - 1.0);
    res.stderr_ = std::sqrt(var);
    return res;
}

/// Coefficients c_2 .. c_{2 n_pairs + 1} of the generalized eigenfunction
/// with value c_1 at the first site: boundary vector, then the transfer
/// recursion from k = 2 upward.
inline std::vector<cplx> solve_forward(const PhaseSequence& ph, double r, double t, double E, cplx c1,
                                       long n_pairs) {
    detail::require_transmission(t);
    if (n_pairs < 1) throw ValidationError("solve_forward: need n_pairs >= 1");
    const auto [a1, a2] = boundary_vector(ph, r, t, E);
    std::vector<cplx> out;
    out.reserve(static_cast<std::size_t>(2 * n_pairs));
    std::pair<cplx, cplx> c{c1 * a1, c1 * a2};
    out.push_back(c.first);
    out.push_back(c.second);
    for (long k = 2; k <= n_pairs; ++k) {
        c = transfer_matrix(ph, r, t, k, E).apply(c);
        out.push_back(c.first);
        out.push_back(c.second);
    }
    return out;
}

/// Least-squares decay rate of a coefficient sequence: slope of
/// ln sqrt(|c_{2k}|^2 + |c_{2k+1}|^2) against the site index over the middle
/// half of the pair range. Negative = decay.
inline double decay_rate(const std::vector<cplx>& coeffs, long first_site = 2) {
    const std::size_t n_pairs = coeffs.size() / 2;
    if (n_pairs < 16) throw ValidationError("decay_rate: need at least 16 coefficient pairs");
    std::vector<double> xs, ys;
    const std::size_t lo = n_pairs / 4, hi = n_pairs - n_pairs / 4;
    double maxamp = 0;
    for (std::size_t i = lo; i < hi; ++i)
        maxamp = std::max(maxamp,
                          std::sqrt(std::norm(coeffs[2 * i]) + std::norm(coeffs[2 * i + 1])));
    if (maxamp <= 0.0) throw NumericError("decay_rate: zero tail, fit undefined");
    for (std::size_t i = lo; i < hi; ++i) {
        const double amp = std::sqrt(std::norm(coeffs[2 * i]) + std::norm(coeffs[2 * i + 1]));
        xs.push_back(static_cast<double>(first_site) + 2.0 * static_cast<double>(i));
        ys.push_back(std::log(std::max(amp, maxamp * 1e-18)));
    }
    return linear_fit_slope(xs, ys);
}

/// Same fit for a plain amplitude envelope sampled one site apart.
inline double decay_rate_envelope(const std::vector<double>& amps, double first_x = 0.0) {
    if (amps.size() < 8) throw ValidationError("decay_rate_envelope: need at least 8 samples");
    const std::size_t lo = amps.size() / 4, hi = amps.size() - amps.size() / 4;
    double maxamp = 0;
    for (std::size_t i = lo; i < hi; ++i) maxamp = std::max(maxamp, amps[i]);
    if (maxamp <= 0.0) throw NumericError("decay_rate_envelope: zero tail, fit undefined");
    std::vector<double> xs, ys;
    for (std::size_t i = lo; i < hi; ++i) {
        xs.push_back(first_x + static_cast<double>(i));
        ys.push_back(std::log(std::max(amps[i], maxamp * 1e-18)));
    }
    return linear_fit_slope(xs, ys);
}

} // namespace floq
