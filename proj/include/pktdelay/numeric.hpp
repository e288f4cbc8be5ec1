#pragma once

#include <gmpxx.h>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pktdelay/error.hpp"

namespace pktdelay {

using Rational = mpq_class;
using BigInt = mpz_class;

/// Nearest double. mpq_get_d truncates toward zero, which turns 4/5 into
/// 0.7999999999999999.
inline double to_double(const Rational& q) {
  const double d = q.get_d();
  if (!std::isfinite(d)) return d;
  const double up = std::nextafter(d, q >= 0 ? HUGE_VAL : -HUGE_VAL);
  if (!std::isfinite(up)) return d;
  const Rational gap_d = abs(q - Rational(d)), gap_up = abs(Rational(up) - q);
  return gap_up < gap_d ? up : d;
}

/// Parses a plain decimal literal ("0.4", "-1.25e-3") into an exact rational.
inline Rational parse_decimal(std::string_view text) {
  std::size_t pos = 0;
  bool negative = false;
  if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) {
    negative = text[pos] == '-';
    ++pos;
  }
  BigInt mantissa = 0;
  long exponent = 0;
  bool any_digit = false;
  bool seen_dot = false;
  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (c >= '0' && c <= '9') {
      mantissa = mantissa * 10 + (c - '0');
      if (seen_dot) --exponent;
      any_digit = true;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      break;
    }
  }
  if (!any_digit) throw ConfigError("not a decimal number: '" + std::string(text) + "'");
  if (pos < text.size()) {
    if (text[pos] != 'e' && text[pos] != 'E')
      throw ConfigError("not a decimal number: '" + std::string(text) + "'");
    long e = 0;
    const char* first = text.data() + pos + 1;
    if (first < text.data() + text.size() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), e);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw ConfigError("not a decimal number: '" + std::string(text) + "'");
    exponent += e;
  }
  Rational value(mantissa);
  BigInt scale;
  mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(exponent < 0 ? -exponent : exponent));
  if (exponent < 0) {
    value /= scale;
  } else {
    value *= scale;
  }
  value.canonicalize();
  return negative ? Rational(-value) : value;
}

/// Shortest round-trip decimal text of a double.
inline std::string shortest_decimal(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, ptr);
}

/// The rational a user meant when writing `x` as a decimal (0.4 -> 2/5).
inline Rational decimal_rational(double x) { return parse_decimal(shortest_decimal(x)); }

/// Binomial coefficient with C(m, w) = 0 whenever m < w or either is negative.
inline BigInt binomial(long m, long w) {
  if (w < 0 || m < 0 || m < w) return 0;
  BigInt out;
  mpz_bin_uiui(out.get_mpz_t(), static_cast<unsigned long>(m), static_cast<unsigned long>(w));
  return out;
}

inline Rational rational_pow(const Rational& base, unsigned long exponent) {
  Rational out;
  mpz_pow_ui(out.get_num_mpz_t(), base.get_num_mpz_t(), exponent);
  mpz_pow_ui(out.get_den_mpz_t(), base.get_den_mpz_t(), exponent);
  out.canonicalize();
  return out;
}

inline std::string to_string(const Rational& q) { return q.get_str(); }

/// Numbers in machine-facing output carry 12 significant digits.
inline std::string format_g12(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

inline double round_g12(double x) {
  if (!std::isfinite(x)) return x;
  return std::strtod(format_g12(x).c_str(), nullptr);
}

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Least-squares slope of log(y) against log(x); points with y <= 0 are skipped.
inline double loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    if (xs[i] > 0 && ys[i] > 0) {
      lx.push_back(std::log(xs[i]));
      ly.push_back(std::log(ys[i]));
    }
  }
  if (lx.size() < 2) return std::nan("");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(ly.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::nan("");
}

/// 64-bit FNV-1a, used for stable string keys and config fingerprints.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pktdelay
