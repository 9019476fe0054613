#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gms/error.hpp"
#include "gms/family.hpp"
#include "gms/parallel.hpp"
#include "gms/rng.hpp"
#include "gms/sampling.hpp"
#include "gms/stats.hpp"
#include "gms/summation.hpp"
#include "gms/ustat.hpp"

namespace gms {

using Matrix4 = std::array<std::array<double, 4>, 4>;

/// Gamma(i,j) = M(i) M(j) Cov(h_i, h_j) with h_j the Hajek projections of the
/// symmetrized kernels, estimated from one row per observation.
struct GammaEstimate {
  Matrix4 gamma{};
  std::vector<std::array<double, 4>> projections;  // N x 4
  bool exact = false;                              // projections computed without sampling
  std::size_t tuples_per_row = 0;                  // L (sampled projections)
};

namespace detail {

// Increasing k-combinations of {0..n-1}; k may be 0.
template <class Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  std::array<std::size_t, 4> idx{};
  if (k > n) return;
  for (std::size_t q = 0; q < k; ++q) idx[q] = q;
  while (true) {
    fn(std::span<const std::size_t>(idx.data(), k));
    if (k == 0) return;
    std::size_t q = k;
    while (q-- > 0) {
      if (idx[q] != n - k + q) break;
      if (q == 0) return;
    }
    ++idx[q];
    for (std::size_t r = q + 1; r < k; ++r) idx[r] = idx[r - 1] + 1;
  }
}

// One row's projections for all four kernels. Sampled draws share partners
// across kernels: each draw picks m+1 other rows and kernels of order m+1
// use the first m of them.
template <MetricSpace Space>
std::array<double, 4> row_projections(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                                      std::size_t i, std::size_t L, std::uint64_t seed, TupleEvaluator<Space>& ev,
                                      std::array<bool, 4> wanted = {true, true, true, true}) {
  const std::size_t n = s.size(), m = family.order();
  std::array<double, 4> out{};
  std::size_t rows[4];
  for (int j = 1; j <= 4; ++j) {
    if (!wanted[static_cast<std::size_t>(j - 1)]) continue;
    const std::size_t order = kernel_order(j, m);
    const double partners = binomial(n - 1, order - 1);
    if (partners > static_cast<double>(L)) continue;
    KahanSum acc;
    rows[0] = i;
    for_each_combination(n - 1, order - 1, [&](std::span<const std::size_t> c) {
      for (std::size_t q = 0; q < c.size(); ++q) rows[q + 1] = c[q] < i ? c[q] : c[q] + 1;
      ev.bind_rows(s, std::span<const std::size_t>(rows, order));
      acc.add(ev.phi_sym(j));
    });
    out[static_cast<std::size_t>(j - 1)] = acc.value() / partners;
    wanted[static_cast<std::size_t>(j - 1)] = false;
  }
  if (std::none_of(wanted.begin(), wanted.end(), [](bool w) { return w; })) return out;

  std::array<KahanSum, 4> acc;
  const std::uint64_t row_seed = derive_seed(seed, {i});
  for (std::size_t l = 0; l < L; ++l) {
    CounterRng rng(row_seed, l);
    rows[0] = i;
    draw_distinct(rng, n, m + 1, i, rows + 1);
    for (int j = 1; j <= 4; ++j) {
      if (!wanted[static_cast<std::size_t>(j - 1)]) continue;
      const std::size_t order = kernel_order(j, m);
      ev.bind_rows(s, std::span<const std::size_t>(rows, order));
      acc[static_cast<std::size_t>(j - 1)].add(ev.phi_sym(j));
    }
  }
  for (std::size_t q = 0; q < 4; ++q)
    if (wanted[q]) out[q] = acc[q].value() / static_cast<double>(L);
  return out;
}

}  // namespace detail

/// Estimate of E[Phi_j^s | row i]: average of Phi_j^s over L tuples whose first
/// slot is row i and whose other M(j)-1 slots are distinct other rows; exact
/// average over all such tuples when there are at most L of them.
template <MetricSpace Space>
double hajek_projection(int j, const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                        std::size_t i, std::size_t L, std::uint64_t seed) {
  const std::size_t order = kernel_order(j, family.order());
  if (s.size() < order + 1) throw ConfigError("Hajek projection needs N >= M(j)+1");
  if (i >= s.size()) throw ConfigError("row index out of range");
  if (L < 1) throw ConfigError("projection needs L >= 1");
  detail::TupleEvaluator<Space> ev(family);
  std::array<bool, 4> wanted{};
  wanted[static_cast<std::size_t>(j - 1)] = true;
  return detail::row_projections(s, family, i, L, seed, ev, wanted)[static_cast<std::size_t>(j - 1)];
}

/// Gamma from per-row projections: M(i) M(j) times the empirical covariance
/// (N-1 normalization), mirrored so the result is exactly symmetric.
inline Matrix4 gamma_from_projections(const std::vector<std::array<double, 4>>& h, std::size_t m) {
  const std::size_t n = h.size();
  if (n < 2) throw ConfigError("Gamma needs at least two rows");
  std::array<double, 4> mean{};
  for (std::size_t q = 0; q < 4; ++q) {
    KahanSum s;
    for (const auto& row : h) s.add(row[q]);
    mean[q] = s.value() / static_cast<double>(n);
  }
  Matrix4 g{};
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a; b < 4; ++b) {
      KahanSum s;
      for (const auto& row : h) s.add((row[a] - mean[a]) * (row[b] - mean[b]));
      const double ma = static_cast<double>(kernel_order(static_cast<int>(a + 1), m));
      const double mb = static_cast<double>(kernel_order(static_cast<int>(b + 1), m));
      g[a][b] = g[b][a] = ma * mb * s.value() / static_cast<double>(n - 1);
    }
  return g;
}

/// Gamma from sampled projections (L tuples per row).
template <MetricSpace Space>
GammaEstimate estimate_gamma(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                             std::size_t L = 200, std::uint64_t seed = 0, const Executor& exec = Executor()) {
  const std::size_t n = s.size(), m = family.order();
  if (n < m + 3) throw ConfigError("Gamma estimation needs N >= m+3");
  if (L < 1) throw ConfigError("projection needs L >= 1");
  GammaEstimate out;
  out.projections.resize(n);
  out.tuples_per_row = L;
  out.exact = binomial(n - 1, m + 1) <= static_cast<double>(L);
  exec.for_chunks(n, 16, [&](std::size_t, std::size_t b, std::size_t e) {
    detail::TupleEvaluator<Space> ev(family);
    for (std::size_t i = b; i < e; ++i) out.projections[i] = detail::row_projections(s, family, i, L, seed, ev);
  });
  out.gamma = gamma_from_projections(out.projections, m);
  return out;
}

/// Gamma from the exact projections of the factorized evaluation.
template <MetricSpace Space>
GammaEstimate exact_gamma(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                          const Executor& exec = Executor()) {
  GammaEstimate out;
  out.projections = factorized_ustats(s, family, true, exec).projections;
  out.exact = true;
  out.gamma = gamma_from_projections(out.projections, family.order());
  return out;
}

/// Gradient of Psi at (x, y, z, t).
inline std::array<double, 4> psi_gradient(const std::array<double, 4>& u) {
  const double den = u[2] - u[3];
  const double eps = 1e-12 * std::max({std::abs(u[2]), std::abs(u[3]), 1.0});
  if (!(std::abs(den) > eps)) throw DegenerateVarianceError();
  const double d2 = den * den, num = u[0] - u[1];
  return {den / d2, -den / d2, -num / d2, num / d2};
}

struct DeltaVariance {
  double value = 0.0;  // max(g' Gamma g, 0)
  double raw = 0.0;
  bool floored = false;
};

inline DeltaVariance delta_variance_checked(const Matrix4& gamma, const std::array<double, 4>& components) {
  const auto g = psi_gradient(components);
  KahanSum s;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) s.add(g[a] * gamma[a][b] * g[b]);
  const double raw = s.value();
  return {std::max(raw, 0.0), raw, raw < 0.0};
}

/// sigma^2 = g' Gamma g with g the gradient of Psi at the components.
inline double delta_variance(const Matrix4& gamma, const std::array<double, 4>& components) {
  return delta_variance_checked(gamma, components).value;
}

inline double delta_variance(const GammaEstimate& gamma, const std::array<double, 4>& components) {
  return delta_variance(gamma.gamma, components);
}

/// value +- z_{(1+level)/2} sigma / sqrt(N).
inline Interval confidence_interval(double value, double sigma, std::size_t n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0,1)");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (n < 1) throw ConfigError("confidence interval needs N >= 1");
  const double half = normal_quantile(0.5 * (1.0 + level)) * sigma / std::sqrt(static_cast<double>(n));
  return {value - half, value + half};
}

inline Interval confidence_interval(const IndexEstimate& est, double sigma, double level) {
  return confidence_interval(est.value, sigma, est.n, level);
}

struct BootstrapResult {
  Interval ci;
  std::size_t replicates = 0;
  std::size_t dropped = 0;  // degenerate replicates
  std::vector<double> values;
};

/// Nearest-rank percentile interval of B re-estimates on row-resampled
/// paired samples. Replicates with a degenerate denominator are dropped;
/// more than 20% dropped is an error.
template <MetricSpace Space>
BootstrapResult bootstrap_ci(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                             std::size_t B, double level, const UStatConfig& config, std::uint64_t seed,
                             const Executor& exec = Executor()) {
  if (B < 50) throw ConfigError("bootstrap needs B >= 50");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0,1)");
  const std::size_t n = s.size();
  std::vector<std::optional<double>> reps(B);
  exec.for_chunks(B, 1, [&](std::size_t, std::size_t b, std::size_t) {
    CounterRng rng(derive_seed(seed, {0xB007, b}));
    PairedSample<typename Space::point_type> r;
    r.z.reserve(n);
    r.zu.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = rng.below(n);
      r.z.push_back(s.z[row]);
      r.zu.push_back(s.zu[row]);
    }
    UStatConfig cfg = config;
    cfg.seed = derive_seed(config.seed, {b});
    try {
      reps[b] = estimate_gms_index(r, family, cfg).value;
    } catch (const DegenerateVarianceError&) {
      reps[b].reset();
    }
  });
  BootstrapResult out;
  out.replicates = B;
  for (const auto& v : reps) {
    if (v) {
      out.values.push_back(*v);
    } else {
      ++out.dropped;
    }
  }
  if (static_cast<double>(out.dropped) > 0.2 * static_cast<double>(B))
    throw DegenerateVarianceError("bootstrap: " + std::to_string(out.dropped) + " of " + std::to_string(B) +
                                  " replicates had a degenerate denominator");
  std::vector<double> sorted = out.values;
  std::sort(sorted.begin(), sorted.end());
  auto rank = [&](double p) {
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(k, 1, sorted.size()) - 1];
  };
  out.ci = {rank(0.5 * (1.0 - level)), rank(0.5 * (1.0 + level))};
  return out;
}

// ---------------------------------------------------------------------------
// Estimate + interval in one call
// ---------------------------------------------------------------------------

enum class CiMethod { Automatic, Delta, Bootstrap, None };
enum class ProjectionMethod { Automatic, Exact, Sampled };

inline std::string_view to_string(CiMethod m) noexcept {
  switch (m) {
    case CiMethod::Automatic: return "auto";
    case CiMethod::Delta: return "delta";
    case CiMethod::Bootstrap: return "bootstrap";
    case CiMethod::None: return "none";
  }
  return "?";
}

inline CiMethod parse_ci_method(std::string_view s) {
  for (auto m : {CiMethod::Automatic, CiMethod::Delta, CiMethod::Bootstrap, CiMethod::None})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown CI method '" + std::string(s) + "' (expected auto, delta, bootstrap or none)");
}

struct InferenceConfig {
  CiMethod method = CiMethod::Automatic;
  ProjectionMethod projections = ProjectionMethod::Automatic;
  double level = 0.95;
  std::size_t tuples_per_row = 200;         // L
  std::size_t bootstrap_replicates = 500;   // B
  double projection_budget = 5e8;           // kernel evaluations allowed for projections under auto
  std::uint64_t seed = 0;
};

struct InferenceResult {
  IndexEstimate estimate;
  std::string ci_method;  // "delta/exact", "delta/sampled", "bootstrap" or "none"
  std::vector<std::string> warnings;
};

/// Runs estimate_gms_index and attaches sigma and a confidence interval.
template <MetricSpace Space>
InferenceResult estimate_with_inference(const PairedSample<typename Space::point_type>& s,
                                        const TestFamily<Space>& family, const UStatConfig& ucfg,
                                        const InferenceConfig& icfg, const Executor& exec = Executor()) {
  InferenceResult out;
  out.estimate = estimate_gms_index(s, family, ucfg, exec);
  auto& est = out.estimate;
  const std::size_t n = s.size(), m = family.order();
  if (icfg.method == CiMethod::None) {
    out.ci_method = "none";
    return out;
  }
  const double exact_cost = falling_factorial(n, m) * static_cast<double>(n) * 2.0;
  const bool rank_path = std::is_same_v<Space, ScalarSpace> && family.kind() == FamilyKind::HalfSpaceCvM;
  bool use_exact = false;
  switch (icfg.projections) {
    case ProjectionMethod::Exact: use_exact = true; break;
    case ProjectionMethod::Sampled: use_exact = false; break;
    case ProjectionMethod::Automatic: use_exact = m <= 1 && (rank_path || exact_cost <= icfg.projection_budget); break;
  }
  const double sampled_cost = static_cast<double>(n) * static_cast<double>(icfg.tuples_per_row) * 24.0;
  CiMethod method = icfg.method;
  if (method == CiMethod::Automatic)
    method = (use_exact || sampled_cost <= icfg.projection_budget) ? CiMethod::Delta : CiMethod::Bootstrap;

  if (method == CiMethod::Bootstrap) {
    const auto boot = bootstrap_ci(s, family, icfg.bootstrap_replicates, icfg.level, ucfg,
                                   derive_seed(icfg.seed, {0xB0}), exec);
    // keep lo <= value <= hi
    est.ci = Interval{std::min(boot.ci.lo, est.value), std::max(boot.ci.hi, est.value)};
    out.ci_method = "bootstrap";
    if (boot.dropped > 0) out.warnings.push_back(std::to_string(boot.dropped) + " degenerate bootstrap replicates dropped");
    return out;
  }
  const GammaEstimate g = use_exact ? exact_gamma(s, family, exec)
                                    : estimate_gamma(s, family, icfg.tuples_per_row, derive_seed(icfg.seed, {0x6A}), exec);
  const auto dv = delta_variance_checked(g.gamma, est.components);
  if (dv.floored) out.warnings.push_back("negative variance estimate floored at 0");
  est.sigma = std::sqrt(dv.value);
  est.ci = confidence_interval(est.value, *est.sigma, n, icfg.level);
  out.ci_method = use_exact ? "delta/exact" : (g.exact ? "delta/exact" : "delta/sampled");
  return out;
}

}  // namespace gms
