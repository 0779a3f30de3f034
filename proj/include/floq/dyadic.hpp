#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <string>

#include "floq/errors.hpp"

namespace floq {

using bigint = boost::multiprecision::cpp_int;

/// Exact dyadic rational p / 2^q, kept in lowest terms (p odd or q == 0).
///
/// All arithmetic is exact. The denominator exponent can grow into the
/// tens of thousands of bits; a hard cap guards against exponents that
/// would exhaust memory.
class Dyadic {
public:
    // 2^30 bits = 128 MiB per value; beyond that the request is treated as
    // a resource error rather than an attempt worth making.
    static constexpr std::uint64_t kMaxExponent = 1ull << 30;

    Dyadic() : p_(0), q_(0) {}
    Dyadic(bigint p, std::uint64_t q) : p_(std::move(p)), q_(q) {
        check_exponent(q_);
        normalize();
    }

    static Dyadic integer(long long v) { return Dyadic(bigint(v), 0); }

    /// 2^{-e}.
    static Dyadic pow2(std::int64_t e) {
        if (e >= 0) {
            check_exponent(static_cast<std::uint64_t>(e));
            return Dyadic(bigint(1), static_cast<std::uint64_t>(e));
        }
        check_exponent(static_cast<std::uint64_t>(-e));
        return Dyadic(bigint(1) << static_cast<unsigned>(-e), 0);
    }

    const bigint& numerator() const { return p_; }
    std::uint64_t exponent() const { return q_; }
    bool is_zero() const { return p_.is_zero(); }
    int sign() const { return p_.sign(); }

    Dyadic operator+(const Dyadic& o) const {
        const std::uint64_t q = std::max(q_, o.q_);
        check_exponent(q);
        bigint a = p_ << static_cast<unsigned>(q - q_);
        bigint b = o.p_ << static_cast<unsigned>(q - o.q_);
        return Dyadic(a + b, q);
    }
    Dyadic operator-(const Dyadic& o) const { return *this + o.negated(); }
    Dyadic negated() const {
        Dyadic r;
        r.p_ = -p_;
        r.q_ = q_;
        return r;
    }
    Dyadic scaled(long long k) const { return Dyadic(p_ * k, q_); }
    Dyadic abs() const { return p_ < 0 ? negated() : *this; }

    /// this + 2^{-e}, exact, lowest terms.
    Dyadic add_pow2(std::uint64_t e) const {
        check_exponent(e);
        return *this + Dyadic(bigint(1), e);
    }
    Dyadic sub_pow2(std::uint64_t e) const {
        check_exponent(e);
        return *this - Dyadic(bigint(1), e);
    }

    int compare(const Dyadic& o) const {
        const std::uint64_t q = std::max(q_, o.q_);
        bigint a = p_ << static_cast<unsigned>(q - q_);
        bigint b = o.p_ << static_cast<unsigned>(q - o.q_);
        return a.compare(b);
    }
    bool operator==(const Dyadic& o) const { return compare(o) == 0; }
    bool operator!=(const Dyadic& o) const { return compare(o) != 0; }
    bool operator<(const Dyadic& o) const { return compare(o) < 0; }
    bool operator<=(const Dyadic& o) const { return compare(o) <= 0; }
    bool operator>(const Dyadic& o) const { return compare(o) > 0; }
    bool operator>=(const Dyadic& o) const { return compare(o) >= 0; }

    /// Compare |this| against 2^e (e may be negative).
    int compare_abs_pow2(std::int64_t e) const {
        // |p|/2^q vs 2^e  <=>  |p| vs 2^{e+q}
        const std::int64_t rhs = e + static_cast<std::int64_t>(q_);
        bigint ap = boost::multiprecision::abs(p_);
        if (rhs < 0) return ap.is_zero() ? -1 : 1;
        check_exponent(static_cast<std::uint64_t>(rhs));
        return ap.compare(bigint(1) << static_cast<unsigned>(rhs));
    }

    /// Fractional part of this * k, reduced exactly mod 1 before any floating
    /// conversion: (p*k mod 2^q) / 2^q rounded once to double, in [0, 1).
    double frac_mod1(long long k) const {
        if (q_ == 0) return 0.0;
        bigint m = p_ * k;
        const bigint mod = bigint(1) << static_cast<unsigned>(q_);
        m %= mod;
        if (m < 0) m += mod;
        return ratio_pow2_to_double(m, q_);
    }

    /// Nearest double. Exact only when the value fits in 53 bits of mantissa.
    double to_double() const {
        if (p_.is_zero()) return 0.0;
        bigint ap = boost::multiprecision::abs(p_);
        const std::uint64_t b = boost::multiprecision::msb(ap);
        double hi;
        std::int64_t shift = 0;
        if (b <= 63) {
            hi = static_cast<double>(ap.convert_to<std::uint64_t>());
        } else {
            shift = static_cast<std::int64_t>(b) - 63;
            hi = static_cast<double>(bigint(ap >> static_cast<unsigned>(shift)).convert_to<std::uint64_t>());
        }
        double v = std::ldexp(hi, static_cast<int>(shift - static_cast<std::int64_t>(q_)));
        return p_ < 0 ? -v : v;
    }

    /// log2 of |value|; usable far outside double range.
    double log2_abs() const {
        if (p_.is_zero()) return -std::numeric_limits<double>::infinity();
        bigint ap = boost::multiprecision::abs(p_);
        const std::uint64_t b = boost::multiprecision::msb(ap);
        double hi;
        if (b <= 63) {
            hi = static_cast<double>(ap.convert_to<std::uint64_t>());
            return std::log2(hi) - static_cast<double>(q_);
        }
        const std::uint64_t shift = b - 63;
        hi = static_cast<double>(bigint(ap >> static_cast<unsigned>(shift)).convert_to<std::uint64_t>());
        return std::log2(hi) + static_cast<double>(shift) - static_cast<double>(q_);
    }

    /// Canonical text form "0x<p>/2^<q>", numerator in hex with sign.
    std::string str() const {
        std::string s = p_ < 0 ? "-0x" : "0x";
        bigint ap = boost::multiprecision::abs(p_);
        s += ap.str(0, std::ios_base::hex);
        s += "/2^" + std::to_string(q_);
        return s;
    }

    std::string numerator_hex() const {
        bigint ap = boost::multiprecision::abs(p_);
        std::string s = ap.str(0, std::ios_base::hex);
        return p_ < 0 ? "-" + s : s;
    }

    /// Parses "1", "-3", "3/2^5", "0x1b/2^7", "-0xff/2^9".
    static Dyadic parse(const std::string& text) {
        std::string s = text;
        bool neg = false;
        if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
            neg = s[0] == '-';
            s = s.substr(1);
        }
        std::uint64_t q = 0;
        auto slash = s.find('/');
        if (slash != std::string::npos) {
            const std::string den = s.substr(slash + 1);
            if (den.rfind("2^", 0) != 0)
                throw ValidationError("dyadic: denominator must be 2^<q>, got '" + den + "'");
            try {
                q = std::stoull(den.substr(2));
            } catch (const std::exception&) {
                throw ValidationError("dyadic: bad exponent in '" + text + "'");
            }
            s = s.substr(0, slash);
        }
        if (s.empty()) throw ValidationError("dyadic: empty numerator in '" + text + "'");
        bigint p;
        try {
            p = bigint(s); // handles decimal and 0x-prefixed hex
        } catch (const std::exception&) {
            throw ValidationError("dyadic: bad numerator in '" + text + "'");
        }
        if (neg) p = -p;
        return Dyadic(p, q);
    }

    /// Helper shared with BetaValue: m / 2^q as a double, for 0 <= m < 2^q.
    static double ratio_pow2_to_double(const bigint& m, std::uint64_t q) {
        if (m.is_zero()) return 0.0;
        const std::uint64_t b = boost::multiprecision::msb(m);
        double hi;
        std::int64_t shift = 0;
        if (b <= 63) {
            hi = static_cast<double>(m.convert_to<std::uint64_t>());
        } else {
            shift = static_cast<std::int64_t>(b) - 63;
            hi = static_cast<double>(bigint(m >> static_cast<unsigned>(shift)).convert_to<std::uint64_t>());
        }
        return std::ldexp(hi, static_cast<int>(shift - static_cast<std::int64_t>(q)));
    }

private:
    static void check_exponent(std::uint64_t q) {
        if (q > kMaxExponent)
            throw BudgetError("dyadic: exponent 2^-" + std::to_string(q) +
                              " exceeds the " + std::to_string(kMaxExponent) + "-bit resource cap");
    }

    void normalize() {
        if (p_.is_zero()) {
            q_ = 0;
            return;
        }
        const std::uint64_t tz = boost::multiprecision::lsb(boost::multiprecision::abs(p_));
        const std::uint64_t drop = std::min<std::uint64_t>(tz, q_);
        if (drop > 0) {
            p_ >>= static_cast<unsigned>(drop);
            q_ -= drop;
        }
    }

    bigint p_;
    std::uint64_t q_;
};

} // namespace floq
