#pragma once

//==========================================================================================
// Exact arithmetic used throughout: arbitrary-precision integers and rationals.
//==========================================================================================

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/gmp.hpp>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace panda {

using Integer = boost::multiprecision::mpz_int;
using Rational = boost::multiprecision::mpq_rational;

inline Integer numerator(const Rational& r) { return boost::multiprecision::numerator(r); }
inline Integer denominator(const Rational& r) { return boost::multiprecision::denominator(r); }

// r^e for integer e (e may be negative; r must be nonzero then)
inline Rational rational_pow(const Rational& r, long e) {
    if (e == 0) return Rational(1);
    bool neg = e < 0;
    unsigned long k = neg ? static_cast<unsigned long>(-e) : static_cast<unsigned long>(e);
    Rational acc(1), base = r;
    while (k) {
        if (k & 1) acc *= base;
        base *= base;
        k >>= 1;
    }
    if (neg) {
        if (acc == 0) throw std::domain_error("rational_pow: zero base with negative exponent");
        acc = Rational(1) / acc;
    }
    return acc;
}

inline Integer integer_pow(const Integer& b, unsigned long e) {
    Integer acc(1), base = b;
    while (e) {
        if (e & 1) acc *= base;
        base *= base;
        e >>= 1;
    }
    return acc;
}

// Floor of the q-th root of n (n >= 0, q >= 1), by binary search.
inline Integer integer_root_floor(const Integer& n, unsigned long q) {
    if (n < 0) throw std::domain_error("integer_root_floor: negative radicand");
    if (q == 0) throw std::domain_error("integer_root_floor: zeroth root");
    if (n <= 1 || q == 1) return n;
    Integer lo(1), hi(2);
    while (integer_pow(hi, q) <= n) hi <<= 1;
    // invariant: lo^q <= n < hi^q
    while (hi - lo > 1) {
        Integer mid = (lo + hi) >> 1;
        if (integer_pow(mid, q) <= n) lo = mid; else hi = mid;
    }
    return lo;
}

// ceil(base^(p/q)) for integer base >= 1 and rational exponent p/q >= 0.
inline Integer ceil_pow(const Integer& base, const Rational& exponent) {
    if (base < 1) throw std::domain_error("ceil_pow: base < 1");
    if (exponent < 0) throw std::domain_error("ceil_pow: negative exponent");
    Integer p = numerator(exponent);
    Integer qi = denominator(exponent);
    unsigned long q = qi.convert_to<unsigned long>();
    Integer np = integer_pow(base, p.convert_to<unsigned long>());
    Integer r = integer_root_floor(np, q);
    if (integer_pow(r, q) == np) return r;
    return r + 1;
}

// ceil of an exact rational
inline Integer rational_ceil(const Rational& r) {
    Integer n = numerator(r), d = denominator(r);
    Integer q = n / d;
    if (n % d != 0 && n > 0) q += 1;
    return q;
}

inline Integer rational_floor(const Rational& r) {
    Integer n = numerator(r), d = denominator(r);
    Integer q = n / d;
    if (n % d != 0 && n < 0) q -= 1;
    return q;
}

// ln(a)/ln(b) rounded to a fixed-point rational with 64 fractional bits.
// Only numeric-mode statistics go through this; symbolic mode stays exact.
inline Rational log_ratio_fixed(const Integer& a, const Integer& b) {
    if (a <= 0 || b <= 1) throw std::domain_error("log_ratio_fixed: need a > 0, b > 1");
    using Big = boost::multiprecision::cpp_bin_float_50;
    Big ratio = log(Big(a)) / log(Big(b));
    Big scaled = ratio * pow(Big(2), 64);
    Integer num = scaled.convert_to<Integer>();
    return Rational(num, integer_pow(Integer(2), 64));
}

// "3/2" or "2" when integral
inline std::string rational_str(const Rational& r) {
    if (denominator(r) == 1) return numerator(r).str();
    return numerator(r).str() + "/" + denominator(r).str();
}

// Decimal expansion with the given number of fractional digits (round half away from zero).
inline std::string rational_decimal(const Rational& r, int digits) {
    Integer n = numerator(r), d = denominator(r);
    bool neg = n < 0;
    if (neg) n = -n;
    Integer scale = integer_pow(Integer(10), static_cast<unsigned long>(digits));
    Integer v = (n * scale * 2 + d) / (2 * d);  // rounded
    Integer ip = v / scale, fp = v % scale;
    std::string frac = fp.str();
    frac.insert(frac.begin(), static_cast<size_t>(digits) - frac.size(), '0');
    std::string out = (neg ? "-" : "") + ip.str();
    if (digits > 0) out += "." + frac;
    return out;
}

}  // namespace panda
