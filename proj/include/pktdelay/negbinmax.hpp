#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "pktdelay/analytics.hpp"
#include "pktdelay/error.hpp"
#include "pktdelay/numeric.hpp"

namespace pktdelay {

// Expected maximum A_{i,j} of two independent negative binomials: the time
// until link 1 has i successes and link 2 has j successes, with erasure
// probabilities q1 and q2.

struct NegBinMaxParams {
  std::int64_t i = 0;
  std::int64_t j = 0;
  double q1 = 0.0;
  double q2 = 0.0;

  double W() const { return (1 - q1) * q2 / (1 - q1 * q2); }
  double E() const { return q1 * (1 - q2) / (1 - q1 * q2); }
  double F() const { return (1 - q1 * q2) / (q1 * q2); }
};

namespace detail {

inline void check_negbin(std::int64_t i, std::int64_t j, double q1, double q2) {
  if (i < 0 || j < 0) throw ConfigError("i and j must be non-negative");
  check_erasure(q1);
  check_erasure(q2);
}

}  // namespace detail

/// Full (I+1) x (J+1) table of the two-dimensional recursion.
template <typename Scalar>
std::vector<std::vector<Scalar>> negbin_max_table(std::int64_t I, std::int64_t J, const Scalar& q1,
                                                  const Scalar& q2) {
  const auto ni = static_cast<std::size_t>(I), nj = static_cast<std::size_t>(J);
  std::vector<std::vector<Scalar>> A(ni + 1, std::vector<Scalar>(nj + 1, Scalar(0)));
  const Scalar s1 = Scalar(1) - q1, s2 = Scalar(1) - q2;
  const Scalar stay = Scalar(1) - q1 * q2;
  const Scalar only1 = s1 * q2, only2 = q1 * s2, both = s1 * s2;
  for (std::size_t a = 1; a <= ni; ++a) A[a][0] = Scalar(static_cast<long>(a)) / s1;
  for (std::size_t b = 1; b <= nj; ++b) A[0][b] = Scalar(static_cast<long>(b)) / s2;
  for (std::size_t a = 1; a <= ni; ++a) {
    for (std::size_t b = 1; b <= nj; ++b) {
      A[a][b] = (only1 * A[a - 1][b] + only2 * A[a][b - 1] + both * A[a - 1][b - 1] + Scalar(1)) / stay;
    }
  }
  return A;
}

inline double negbin_max_recursion(std::int64_t i, std::int64_t j, double q1, double q2) {
  detail::check_negbin(i, j, q1, q2);
  return negbin_max_table<double>(i, j, q1, q2)[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
}

inline Rational negbin_max_recursion_exact(std::int64_t i, std::int64_t j, const Rational& q1, const Rational& q2) {
  if (i < 0 || j < 0) throw ConfigError("i and j must be non-negative");
  if (q1 < 0 || q1 >= 1 || q2 < 0 || q2 >= 1) throw ConfigError("erasure probability must lie in [0, 1)");
  return negbin_max_table<Rational>(i, j, q1, q2)[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
}

/// Closed form in log space. Every summand is positive, so terms are
/// combined with log-sum-exp and no cancellation occurs. Binomials come from
/// a cached log-factorial table; S_j(m) is cached per j.
class NegBinMaxClosedForm {
 public:
  NegBinMaxClosedForm(double q1, double q2) : q1_(q1), q2_(q2) {
    detail::check_erasure(q1);
    detail::check_erasure(q2);
    degenerate_ = q1 == 0.0 || q2 == 0.0;
    if (!degenerate_) {
      const double stay = 1 - q1 * q2;
      lnE_ = std::log(q1 * (1 - q2) / stay);
      lnW_ = std::log((1 - q1) * q2 / stay);
      lnF_ = std::log(stay / (q1 * q2));
    }
  }

  double value(std::int64_t i, std::int64_t j) {
    if (i < 0 || j < 0) throw ConfigError("i and j must be non-negative");
    if (degenerate_) return negbin_max_recursion(i, j, q1_, q2_);
    if (j == 0) return static_cast<double>(i) / (1 - q1_);
    const auto& lnS = log_S(j, i);
    CompensatedSum sum;
    for (std::int64_t m = 0; m < i; ++m) {
      const double ln_term = static_cast<double>(j) * lnE_ + static_cast<double>(m) * lnW_ + lnS[static_cast<std::size_t>(m)];
      sum.add(static_cast<double>(i - m) * std::exp(ln_term));
    }
    return sum.value() / (1 - q1_) + static_cast<double>(j) / (1 - q2_);
  }

 private:
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  double ln_fact(std::int64_t k) {
    while (static_cast<std::int64_t>(ln_fact_.size()) <= k)
      ln_fact_.push_back(std::lgamma(static_cast<double>(ln_fact_.size()) + 1.0));
    return ln_fact_[static_cast<std::size_t>(k)];
  }

  double ln_binom(std::int64_t m, std::int64_t w) {
    if (w < 0 || m < 0 || m < w) return kNegInf;
    return ln_fact(m) - ln_fact(w) - ln_fact(m - w);
  }

  // ln S_j(m) for m = 0..i-1, S_j(m) = Σ_t C(j,t) C(m+j-t-1, j-1) F^t.
  const std::vector<double>& log_S(std::int64_t j, std::int64_t i) {
    auto& cache = ln_S_[j];
    std::vector<double> terms;
    for (auto m = static_cast<std::int64_t>(cache.size()); m < i; ++m) {
      terms.clear();
      double peak = kNegInf;
      for (std::int64_t t = 0; t <= j; ++t) {
        const double c = ln_binom(m + j - t - 1, j - 1);
        if (c == kNegInf) continue;
        terms.push_back(ln_binom(j, t) + c + static_cast<double>(t) * lnF_);
        peak = std::max(peak, terms.back());
      }
      if (terms.empty()) {
        cache.push_back(kNegInf);
        continue;
      }
      double acc = 0.0;
      for (double x : terms) acc += std::exp(x - peak);
      cache.push_back(peak + std::log(acc));
    }
    return cache;
  }

  double q1_, q2_;
  bool degenerate_ = false;
  double lnE_ = 0, lnW_ = 0, lnF_ = 0;
  std::vector<double> ln_fact_;
  std::map<std::int64_t, std::vector<double>> ln_S_;
};

/// Exact rational evaluation of the closed form.
class NegBinMaxClosedFormExact {
 public:
  NegBinMaxClosedFormExact(const Rational& q1, const Rational& q2) : q1_(q1), q2_(q2) {
    if (q1 < 0 || q1 >= 1 || q2 < 0 || q2 >= 1) throw ConfigError("erasure probability must lie in [0, 1)");
    degenerate_ = q1 == 0 || q2 == 0;
    if (!degenerate_) {
      const Rational stay = 1 - q1 * q2;
      E_ = q1 * (1 - q2) / stay;
      W_ = (1 - q1) * q2 / stay;
      F_ = stay / (q1 * q2);
    }
  }

  Rational value(std::int64_t i, std::int64_t j) {
    if (i < 0 || j < 0) throw ConfigError("i and j must be non-negative");
    if (degenerate_) return negbin_max_recursion_exact(i, j, q1_, q2_);
    if (j == 0) return Rational(i) / (1 - q1_);
    Rational sum = 0;
    Rational w_pow = 1;
    for (std::int64_t m = 0; m < i; ++m) {
      sum += Rational(i - m) * w_pow * S(j, m);
      w_pow *= W_;
    }
    return rational_pow(E_, static_cast<unsigned long>(j)) * sum / (1 - q1_) + Rational(j) / (1 - q2_);
  }

 private:
  const Rational& F_pow(std::int64_t t) {
    if (F_pows_.empty()) F_pows_.push_back(1);
    while (static_cast<std::int64_t>(F_pows_.size()) <= t) F_pows_.push_back(F_pows_.back() * F_);
    return F_pows_[static_cast<std::size_t>(t)];
  }

  const Rational& S(std::int64_t j, std::int64_t m) {
    auto& cache = S_[j];
    while (static_cast<std::int64_t>(cache.size()) <= m) {
      const auto mm = static_cast<long>(cache.size());
      Rational s = 0;
      for (long t = 0; t <= j; ++t) {
        const BigInt c = binomial(mm + j - t - 1, j - 1);
        if (c == 0) continue;
        s += Rational(binomial(j, t) * c) * F_pow(t);
      }
      cache.push_back(s);
    }
    return cache[static_cast<std::size_t>(m)];
  }

  Rational q1_, q2_;
  bool degenerate_ = false;
  Rational E_, W_, F_;
  std::vector<Rational> F_pows_;
  std::map<std::int64_t, std::vector<Rational>> S_;
};

inline constexpr std::int64_t kExactClosedFormLimit = 40;

inline double negbin_max_closed(const NegBinMaxParams& p) {
  detail::check_negbin(p.i, p.j, p.q1, p.q2);
  if (p.i + p.j <= kExactClosedFormLimit && p.q1 > 0 && p.q2 > 0) {
    return to_double(NegBinMaxClosedFormExact(decimal_rational(p.q1), decimal_rational(p.q2)).value(p.i, p.j));
  }
  return NegBinMaxClosedForm(p.q1, p.q2).value(p.i, p.j);
}

inline Rational negbin_max_closed_exact(std::int64_t i, std::int64_t j, const Rational& q1, const Rational& q2) {
  return NegBinMaxClosedFormExact(q1, q2).value(i, j);
}

// ---------------------------------------------------------------------------
// Routing overhead over two parallel single links

struct RoutingOverhead {
  std::int64_t n = 0;
  std::int64_t i = 0;
  std::int64_t j = 0;
  bool rounded = false;
  double A = 0.0;
  double U = 0.0;
};

/// U_n = A_{i,j} - n/(2 - q1 - q2) with the routing shares i, j. Shares that
/// are not integers are an error unless `round_shares` is set, in which case
/// the largest-remainder allocation is used and the result is flagged.
inline RoutingOverhead routing_overhead_U(std::int64_t n, double q1, double q2, bool round_shares = false,
                                          NegBinMaxClosedForm* cache = nullptr) {
  if (n < 0) throw ConfigError("packet count must be non-negative");
  detail::check_erasure(q1);
  detail::check_erasure(q2);
  const Rational r1 = decimal_rational(q1), r2 = decimal_rational(q2);
  const Rational share1 = Rational(n) * (1 - r1) / (2 - r1 - r2);
  RoutingOverhead out;
  out.n = n;
  if (share1.get_den() == 1) {
    out.i = share1.get_num().get_si();
    out.j = n - out.i;
  } else if (round_shares) {
    const double worst[] = {q1, q2};
    const auto alloc = allocate_routing(n, worst);
    out.i = alloc[0];
    out.j = alloc[1];
    out.rounded = true;
  } else {
    throw ConfigError("non-integral shares for n=" + std::to_string(n));
  }
  NegBinMaxClosedForm local(q1, q2);
  out.A = (cache ? *cache : local).value(out.i, out.j);
  out.U = out.A - static_cast<double>(n) / (2 - q1 - q2);
  return out;
}

struct GrowthFit {
  std::vector<std::int64_t> ns;
  std::vector<double> values;
  double slope = 0.0;
};

/// Least-squares slope of log U_n against log n.
inline GrowthFit routing_overhead_growth(std::span<const std::int64_t> ns, double q1, double q2,
                                         bool round_shares = false) {
  GrowthFit fit;
  NegBinMaxClosedForm cache(q1, q2);
  std::vector<double> xs;
  for (std::int64_t n : ns) {
    fit.ns.push_back(n);
    fit.values.push_back(routing_overhead_U(n, q1, q2, round_shares, &cache).U);
    xs.push_back(static_cast<double>(n));
  }
  fit.slope = loglog_slope(xs, fit.values);
  return fit;
}

}  // namespace pktdelay
