#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "pktdelay/error.hpp"
#include "pktdelay/numeric.hpp"

namespace pktdelay {

namespace detail {

inline void check_erasure(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("erasure probability must lie in [0, 1)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Routing allocation

/// Packets per path proportional to path capacity (1 - worst p), rounded by
/// largest remainder so the total is exactly n. Ties go to the lower path index.
inline std::vector<std::int64_t> allocate_routing(std::int64_t n, std::span<const double> worst_p) {
  if (n < 0) throw ConfigError("packet count must be non-negative");
  if (worst_p.empty()) throw ConfigError("allocation needs at least one path");
  Rational total_capacity = 0;
  std::vector<Rational> capacity;
  for (double p : worst_p) {
    detail::check_erasure(p);
    capacity.push_back(1 - decimal_rational(p));
    total_capacity += capacity.back();
  }
  std::vector<std::int64_t> out(worst_p.size());
  std::vector<Rational> remainder(worst_p.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < worst_p.size(); ++i) {
    const Rational share = Rational(n) * capacity[i] / total_capacity;
    BigInt whole;
    mpz_fdiv_q(whole.get_mpz_t(), share.get_num_mpz_t(), share.get_den_mpz_t());
    out[i] = whole.get_si();
    remainder[i] = share - Rational(whole);
    assigned += out[i];
  }
  std::vector<std::size_t> order(worst_p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::int64_t k = 0; k < n - assigned; ++k) ++out[order[static_cast<std::size_t>(k)]];
  return out;
}

// ---------------------------------------------------------------------------
// Line networks

struct LineDelayBounds {
  bool unique_worst = false;
  std::size_t worst_index = 0;
  double worst_p = 0.0;
  /// Upper bound on the delay function; present only with a unique worst link.
  std::optional<double> d_bar;
  /// Limit of the expected drain time as n grows (same expression as d_bar).
  std::optional<double> steady_state_limit;
};

inline LineDelayBounds line_delay_bounds(std::span<const double> p) {
  if (p.empty()) throw ConfigError("line needs at least one link");
  for (double x : p) detail::check_erasure(x);
  LineDelayBounds out;
  out.worst_index = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  out.worst_p = p[out.worst_index];
  std::size_t joint = 0;
  for (double x : p) joint += (out.worst_p - x <= 1e-9) ? 1 : 0;
  out.unique_worst = joint == 1;
  if (!out.unique_worst) return out;
  CompensatedSum sum;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != out.worst_index) sum.add(out.worst_p / (out.worst_p - p[i]));
  }
  out.d_bar = sum.value();
  out.steady_state_limit = sum.value();
  return out;
}

namespace detail {

// Expected remaining slots E[a][b] for the two-hop line, a = packets still at
// the source, b = innovative packets at the relay. The relay link idles when
// the relay holds nothing at the start of the slot.
template <typename Scalar>
std::vector<std::vector<Scalar>> two_hop_table(std::int64_t max_n, const Scalar& p1, const Scalar& p2) {
  const auto N = static_cast<std::size_t>(max_n);
  std::vector<std::vector<Scalar>> E(N + 1);
  for (std::size_t a = 0; a <= N; ++a) E[a].assign(N - a + 1, Scalar(0));
  const Scalar s1 = Scalar(1) - p1;
  const Scalar s2 = Scalar(1) - p2;
  const Scalar both = s1 * s2;
  const Scalar only1 = s1 * p2;
  const Scalar only2 = p1 * s2;
  const Scalar stay = Scalar(1) - p1 * p2;
  for (std::size_t a = 0; a <= N; ++a) {
    for (std::size_t b = 0; a + b <= N; ++b) {
      if (a == 0 && b == 0) continue;
      if (a > 0 && b > 0) {
        Scalar num = Scalar(1) + both * E[a - 1][b] + only1 * E[a - 1][b + 1] + only2 * E[a][b - 1];
        E[a][b] = num / stay;
      } else if (a > 0) {
        E[a][b] = (Scalar(1) + s1 * E[a - 1][1]) / s1;
      } else {
        E[a][b] = (Scalar(1) + s2 * E[0][b - 1]) / s2;
      }
    }
  }
  return E;
}

// Float variant with compensated accumulation of the transition terms.
inline std::vector<std::vector<double>> two_hop_table_float(std::int64_t max_n, double p1, double p2) {
  const auto N = static_cast<std::size_t>(max_n);
  std::vector<std::vector<double>> E(N + 1);
  for (std::size_t a = 0; a <= N; ++a) E[a].assign(N - a + 1, 0.0);
  const double s1 = 1 - p1, s2 = 1 - p2;
  for (std::size_t a = 0; a <= N; ++a) {
    for (std::size_t b = 0; a + b <= N; ++b) {
      if (a == 0 && b == 0) continue;
      if (a > 0 && b > 0) {
        CompensatedSum num;
        num.add(1.0);
        num.add(s1 * s2 * E[a - 1][b]);
        num.add(s1 * p2 * E[a - 1][b + 1]);
        num.add(p1 * s2 * E[a][b - 1]);
        E[a][b] = num.value() / (1 - p1 * p2);
      } else if (a > 0) {
        E[a][b] = 1 / s1 + E[a - 1][1];
      } else {
        E[a][b] = 1 / s2 + E[0][b - 1];
      }
    }
  }
  return E;
}

}  // namespace detail

enum class Arithmetic { Auto, Exact, Float };

inline constexpr std::int64_t kExactTwoHopLimit = 64;

struct TwoHopExact {
  std::int64_t n = 0;
  double expected_time = 0.0;
  /// E T_n - n / (1 - max(p1, p2)).
  double delay = 0.0;
  /// E T_n - n / (1 - p1), the tabulated form that treats link 1 as the bottleneck.
  double delay_first_link = 0.0;
  std::optional<Rational> exact_expected_time;
  std::optional<Rational> exact_delay_first_link;
};

/// Exact expected completion time of the two-hop line via dynamic programming
/// over (packets at source, innovative packets at relay).
inline TwoHopExact two_hop_exact(std::int64_t n, double p1, double p2, Arithmetic mode = Arithmetic::Auto) {
  if (n < 0) throw ConfigError("packet count must be non-negative");
  detail::check_erasure(p1);
  detail::check_erasure(p2);
  TwoHopExact out;
  out.n = n;
  const bool exact = mode == Arithmetic::Exact || (mode == Arithmetic::Auto && n <= kExactTwoHopLimit);
  if (exact) {
    const Rational q1 = decimal_rational(p1), q2 = decimal_rational(p2);
    const Rational et = detail::two_hop_table<Rational>(n, q1, q2)[static_cast<std::size_t>(n)][0];
    out.exact_expected_time = et;
    out.exact_delay_first_link = Rational(et - Rational(n) / (1 - q1));
    out.expected_time = to_double(et);
    out.delay_first_link = to_double(*out.exact_delay_first_link);
  } else {
    out.expected_time = detail::two_hop_table_float(n, p1, p2)[static_cast<std::size_t>(n)][0];
    out.delay_first_link = out.expected_time - static_cast<double>(n) / (1 - p1);
  }
  out.delay = out.expected_time - static_cast<double>(n) / (1 - std::max(p1, p2));
  return out;
}

/// E T_n for n = 0..max_n on the two-hop line (float DP).
inline std::vector<double> two_hop_expected_times(std::int64_t max_n, double p1, double p2) {
  detail::check_erasure(p1);
  detail::check_erasure(p2);
  const auto E = detail::two_hop_table_float(max_n, p1, p2);
  std::vector<double> out;
  for (std::size_t a = 0; a < E.size(); ++a) out.push_back(E[a][0]);
  return out;
}

inline constexpr std::size_t kLineDpMaxHops = 4;

/// E T_n for n = 0..max_n on an ℓ-hop line (ℓ <= 4), by dynamic programming
/// over (packets at source, queue at each relay) in lexicographic order.
inline std::vector<double> line_expected_times(std::span<const double> p, std::int64_t max_n) {
  const std::size_t hops = p.size();
  if (hops == 0 || hops > kLineDpMaxHops) throw ConfigError("line DP supports 1 to 4 hops");
  if (max_n < 0) throw ConfigError("packet count must be non-negative");
  for (double x : p) detail::check_erasure(x);
  const auto N = static_cast<std::size_t>(max_n);
  if (hops == 1) {
    std::vector<double> out;
    for (std::size_t n = 0; n <= N; ++n) out.push_back(static_cast<double>(n) / (1 - p[0]));
    return out;
  }
  const std::size_t radix = N + 1;
  std::size_t cells = 1;
  for (std::size_t h = 0; h < hops; ++h) cells *= radix;
  std::vector<double> E(cells, 0.0);
  std::vector<std::size_t> stride(hops);
  stride[hops - 1] = 1;
  for (std::size_t h = hops - 1; h-- > 0;) stride[h] = stride[h + 1] * radix;

  std::vector<std::size_t> state(hops, 0);  // state[0] = source, state[h] = relay h
  std::vector<std::size_t> active;
  for (std::size_t idx = 0; idx < cells; ++idx) {
    std::size_t rest = idx, total = 0;
    for (std::size_t h = 0; h < hops; ++h) {
      state[h] = rest / stride[h];
      rest %= stride[h];
      total += state[h];
    }
    if (total == 0 || total > N) continue;
    active.clear();
    for (std::size_t h = 0; h < hops; ++h)
      if (state[h] > 0) active.push_back(h);
    double stay = 1.0;
    for (std::size_t h : active) stay *= p[h];
    CompensatedSum num;
    num.add(1.0);
    const std::size_t subsets = std::size_t{1} << active.size();
    for (std::size_t mask = 1; mask < subsets; ++mask) {
      double prob = 1.0;
      std::ptrdiff_t next = static_cast<std::ptrdiff_t>(idx);
      for (std::size_t b = 0; b < active.size(); ++b) {
        const std::size_t h = active[b];
        if (mask & (std::size_t{1} << b)) {
          prob *= 1 - p[h];
          next -= static_cast<std::ptrdiff_t>(stride[h]);
          if (h + 1 < hops) next += static_cast<std::ptrdiff_t>(stride[h + 1]);
        } else {
          prob *= p[h];
        }
      }
      num.add(prob * E[static_cast<std::size_t>(next)]);
    }
    E[idx] = num.value() / (1 - stay);
  }
  std::vector<double> out;
  for (std::size_t n = 0; n <= N; ++n) out.push_back(E[n * stride[0]]);
  return out;
}

// ---------------------------------------------------------------------------
// k parallel links: success-count distribution and the coding recursion

struct SuccessDistribution {
  /// A[i] = probability that exactly i links succeed in one slot.
  std::vector<double> A;

  double mean() const {
    double m = 0;
    for (std::size_t i = 0; i < A.size(); ++i) m += static_cast<double>(i) * A[i];
    return m;
  }
};

/// A correlated group restricted to the links of interest: with probability
/// (1 - base_p) * sum(weights) exactly one of them succeeds.
struct GroupShare {
  double base_p = 0.0;
  std::vector<double> weights;
};

inline SuccessDistribution success_count_distribution(std::span<const double> independent_q,
                                                      std::span<const GroupShare> groups = {}) {
  std::vector<double> dist{1.0};
  auto convolve = [&](const std::vector<double>& factor) {
    std::vector<double> next(dist.size() + factor.size() - 1, 0.0);
    for (std::size_t a = 0; a < dist.size(); ++a)
      for (std::size_t b = 0; b < factor.size(); ++b) next[a + b] += dist[a] * factor[b];
    dist = std::move(next);
  };
  for (double q : independent_q) {
    detail::check_erasure(q);
    convolve({q, 1 - q});
  }
  for (const auto& g : groups) {
    detail::check_erasure(g.base_p);
    double share = 0;
    for (double w : g.weights) share += w;
    const double one = (1 - g.base_p) * share;
    std::vector<double> factor(g.weights.size() + 1, 0.0);
    factor[0] = 1 - one;
    if (factor.size() > 1) factor[1] = one;
    convolve(factor);
  }
  return {dist};
}

inline constexpr std::size_t kMaxRecursionOrder = 16;
inline constexpr double kRootTolerance = 1e-9;

struct RecursionSolution {
  /// values[n] = E T̂_n for n = 0..N (values[0] = 0).
  std::vector<double> values;
  /// Linear coefficient: inverse of the expected successes per slot.
  double D = 0.0;
  /// residuals[n] = values[n] - D * n.
  std::vector<double> residuals;
  std::vector<std::complex<double>> roots;
  bool unit_root_simple = false;
  bool others_inside_unit_disk = false;
};

/// Roots of (1 - A0) x^k - A1 x^{k-1} - ... - Ak via companion-matrix eigenvalues.
inline std::vector<std::complex<double>> characteristic_roots(const SuccessDistribution& dist) {
  const std::size_t k = dist.A.size() - 1;
  if (k == 0) return {};
  if (k > kMaxRecursionOrder) throw ConfigError("characteristic roots supported for k <= 16");
  const double lead = 1 - dist.A[0];
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) companion(0, static_cast<Eigen::Index>(i)) = dist.A[i + 1] / lead;
  for (std::size_t i = 1; i < k; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<std::complex<double>> roots;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) roots.push_back(solver.eigenvalues()[i]);
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    return a.imag() > b.imag();
  });
  return roots;
}

/// Forward evaluation of the expected coding time over k parallel links with
/// E T̂_m = 0 for m <= 0, plus the linear coefficient and root structure.
inline RecursionSolution coding_recursion(const SuccessDistribution& dist, std::int64_t N) {
  if (dist.A.size() < 2) throw ConfigError("success distribution needs at least one link");
  if (dist.A[0] >= 1.0) throw ConfigError("all links fail almost surely");
  if (N < 0) throw ConfigError("horizon must be non-negative");
  const std::size_t k = dist.A.size() - 1;
  RecursionSolution out;
  out.values.assign(static_cast<std::size_t>(N) + 1, 0.0);
  const double lead = 1 - dist.A[0];
  for (std::size_t n = 1; n <= static_cast<std::size_t>(N); ++n) {
    CompensatedSum num;
    num.add(1.0);
    for (std::size_t i = 1; i <= k && i <= n; ++i) num.add(dist.A[i] * out.values[n - i]);
    out.values[n] = num.value() / lead;
  }
  out.D = 1.0 / dist.mean();
  for (std::size_t n = 0; n < out.values.size(); ++n)
    out.residuals.push_back(out.values[n] - out.D * static_cast<double>(n));
  if (k <= kMaxRecursionOrder) {
    out.roots = characteristic_roots(dist);
    std::size_t at_unity = 0;
    bool inside = true;
    for (const auto& r : out.roots) {
      if (std::abs(r - 1.0) <= kRootTolerance) {
        ++at_unity;
      } else if (std::abs(r) >= 1 - kRootTolerance) {
        inside = false;
      }
    }
    out.unit_root_simple = at_unity == 1;
    out.others_inside_unit_disk = inside;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Harmonic numbers

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

inline Rational harmonic_number_exact(std::int64_t n) {
  Rational h = 0;
  for (std::int64_t i = 1; i <= n; ++i) h += Rational(1, static_cast<unsigned long>(i));
  return h;
}

inline double harmonic_number(std::int64_t n) {
  CompensatedSum h;
  for (std::int64_t i = n; i >= 1; --i) h.add(1.0 / static_cast<double>(i));
  return h.value();
}

struct HarmonicBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// ln n + γ + 1/(2(n+1)) < H_n < ln n + γ + 1/(2n).
inline HarmonicBounds young_bounds(std::int64_t n) {
  if (n < 1) throw ConfigError("harmonic bounds need n >= 1");
  const double base = std::log(static_cast<double>(n)) + kEulerGamma;
  return {base + 1.0 / (2.0 * static_cast<double>(n + 1)), base + 1.0 / (2.0 * static_cast<double>(n))};
}

/// Σ_{m=a}^{b} (c1 - m)/(c2 + m) = a - b - 1 + (c1 + c2)(H_{c2+b} - H_{c2+a-1}).
inline Rational harmonic_sum(std::int64_t a, std::int64_t b, std::int64_t c1, std::int64_t c2) {
  if (a < 1 || b < 1 || c1 < 1 || c2 < 1) throw ConfigError("harmonic_sum arguments must be positive");
  if (a > b) throw ConfigError("harmonic_sum requires a <= b");
  Rational diff = 0;  // H_{c2+b} - H_{c2+a-1}
  for (std::int64_t m = c2 + a; m <= c2 + b; ++m) diff += Rational(1, static_cast<unsigned long>(m));
  return Rational(a - b - 1) + Rational(c1 + c2) * diff;
}

}  // namespace pktdelay
