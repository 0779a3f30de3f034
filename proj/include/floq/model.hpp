#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "floq/dyadic.hpp"
#include "floq/errors.hpp"
#include "floq/util.hpp"

namespace floq {

/// The frequency of the almost-periodic phase sequence, in one of two modes:
/// exact dyadic (for the inductive frequency construction, whose increments
/// 2^{-kappa!} underflow doubles) or plain double (for irrational demos).
class BetaValue {
public:
    enum class Mode { exact, floating };

    static BetaValue exact(Dyadic d) {
        BetaValue b;
        b.mode_ = Mode::exact;
        b.dy_ = std::move(d);
        return b;
    }
    static BetaValue floating(double v) {
        if (!std::isfinite(v)) throw ValidationError("beta: non-finite float value");
        BetaValue b;
        b.mode_ = Mode::floating;
        b.fl_ = v;
        return b;
    }

    Mode mode() const { return mode_; }
    bool is_exact() const { return mode_ == Mode::exact; }
    const Dyadic& dyadic() const {
        if (!is_exact()) throw ValidationError("beta: float mode has no dyadic value");
        return dy_;
    }
    double to_double() const { return is_exact() ? dy_.to_double() : fl_; }

    /// frac(beta * k) in [0, 1), reduced mod 1 before any multiplication by
    /// 2*pi. Exact mode reduces in integer arithmetic; float mode recovers
    /// the product error with an fma and is exact w.r.t. the stored double
    /// for |beta*k| < 2^52.
    double frac_mod1(long long k) const {
        if (is_exact()) return dy_.frac_mod1(k);
        const double kk = static_cast<double>(k);
        const double p = fl_ * kk;
        const double e = std::fma(fl_, kk, -p);
        double f = (p - std::floor(p)) + e;
        f -= std::floor(f);
        if (f < 0.0) f += 1.0;
        if (f >= 1.0) f -= 1.0;
        return f;
    }

    std::string str() const {
        if (is_exact()) return "dyadic:" + dy_.str();
        return "float:" + fmt_g17(fl_);
    }

    /// Parses "dyadic:<p>/2^<q>", "float:<v>", or bare dyadic text.
    static BetaValue parse(const std::string& text) {
        if (text.rfind("float:", 0) == 0) {
            try {
                return floating(std::stod(text.substr(6)));
            } catch (const std::exception&) {
                throw ValidationError("beta: bad float literal '" + text + "'");
            }
        }
        std::string body = text;
        if (body.rfind("dyadic:", 0) == 0) body = body.substr(7);
        return exact(Dyadic::parse(body));
    }

private:
    Mode mode_ = Mode::exact;
    Dyadic dy_ = Dyadic::integer(1);
    double fl_ = 0.0;
};

/// theta_k = 2*pi*frac(beta*k) + theta, reduced to [0, 2*pi).
inline double phase_theta(const BetaValue& beta, double theta, long long k) {
    return reduce_angle(kTwoPi * beta.frac_mod1(k) + theta);
}

/// beta + 2^{-kappa_factorial}, exact, lowest terms.
inline Dyadic dyadic_add_pow2(const Dyadic& beta, std::uint64_t kappa_factorial) {
    if (kappa_factorial < 1) throw ValidationError("dyadic_add_pow2: exponent must be >= 1");
    return beta.add_pow2(kappa_factorial);
}

/// Model amplitudes and phases. r is derived from t via r = sqrt(1 - t^2),
/// so r^2 + t^2 = 1 holds to machine precision by construction.
struct ModelParams {
    double t = 0.0;
    double r = 1.0;
    double alpha = 0.0;
    double theta = 0.0;
    double lambda = 0.0;
    BetaValue beta = BetaValue::exact(Dyadic::integer(1));

    std::string canonical_str() const {
        return "t=" + fmt_g17(t) + ";alpha=" + fmt_g17(alpha) + ";theta=" + fmt_g17(theta) +
               ";lambda=" + fmt_g17(lambda) + ";beta=" + beta.str();
    }
    std::uint64_t digest() const { return fnv1a64(canonical_str()); }
};

inline ModelParams make_params(double t, double alpha, double theta, double lambda, BetaValue beta) {
    if (!std::isfinite(t) || t < 0.0 || t > 1.0)
        throw ValidationError("make_params: t must lie in [0, 1], got " + fmt_g17(t));
    auto check_angle = [](double v, const char* name) {
        if (!std::isfinite(v))
            throw ValidationError(std::string("make_params: non-finite angle ") + name);
    };
    check_angle(alpha, "alpha");
    check_angle(theta, "theta");
    check_angle(lambda, "lambda");
    ModelParams p;
    p.t = t;
    p.r = std::sqrt(1.0 - t * t);
    p.alpha = reduce_angle(alpha);
    p.theta = reduce_angle(theta);
    p.lambda = reduce_angle(lambda);
    p.beta = std::move(beta);
    return p;
}

/// Triple of phases attached to one site index.
struct PhaseTriple {
    double theta;
    double alpha;
    double gamma;
};

/// Abstract provider of the phase sequences theta_k, alpha_k, gamma_k.
class PhaseSequence {
public:
    virtual ~PhaseSequence() = default;
    virtual PhaseTriple at(long long k) const = 0;
    double theta_at(long long k) const { return at(k).theta; }
    double alpha_at(long long k) const { return at(k).alpha; }
    double gamma_at(long long k) const { return at(k).gamma; }
};

/// theta_k = 2*pi*beta*k + theta, alpha_k = alpha, gamma_k = (-1)^{k+1} alpha.
class AlmostPeriodicPhases final : public PhaseSequence {
public:
    AlmostPeriodicPhases(BetaValue beta, double theta, double alpha)
        : beta_(std::move(beta)), theta_(reduce_angle(theta)), alpha_(reduce_angle(alpha)) {}

    explicit AlmostPeriodicPhases(const ModelParams& p) : AlmostPeriodicPhases(p.beta, p.theta, p.alpha) {}

    PhaseTriple at(long long k) const override {
        PhaseTriple ph;
        ph.theta = phase_theta(beta_, theta_, k);
        ph.alpha = alpha_;
        ph.gamma = (k % 2 == 0) ? reduce_angle(-alpha_) : alpha_;
        return ph;
    }

private:
    BetaValue beta_;
    double theta_;
    double alpha_;
};

/// Explicit phase arrays covering indices [base, base + size), for generic
/// and randomized tests.
class ExplicitArrayPhases final : public PhaseSequence {
public:
    ExplicitArrayPhases(std::vector<double> theta, std::vector<double> alpha, std::vector<double> gamma,
                        long long base = 0)
        : theta_(std::move(theta)), alpha_(std::move(alpha)), gamma_(std::move(gamma)), base_(base) {
        if (theta_.size() != alpha_.size() || theta_.size() != gamma_.size())
            throw ValidationError("ExplicitArrayPhases: array sizes differ");
    }

    PhaseTriple at(long long k) const override {
        const long long i = k - base_;
        if (i < 0 || static_cast<std::size_t>(i) >= theta_.size())
            throw ValidationError("ExplicitArrayPhases: index " + std::to_string(k) + " out of range");
        const auto u = static_cast<std::size_t>(i);
        return PhaseTriple{theta_[u], alpha_[u], gamma_[u]};
    }

private:
    std::vector<double> theta_, alpha_, gamma_;
    long long base_;
};

} // namespace floq
