#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "gms/error.hpp"
#include "gms/family.hpp"
#include "gms/metric.hpp"
#include "gms/parallel.hpp"
#include "gms/rng.hpp"
#include "gms/sampling.hpp"
#include "gms/summation.hpp"

namespace gms {

// ---------------------------------------------------------------------------
// Kernel orders and helpers
// ---------------------------------------------------------------------------

inline void check_kernel_index(int j) {
  if (j < 1 || j > 4) throw ArityError("kernel index must be in 1..4, got " + std::to_string(j));
}

/// M(1) = M(3) = m + 1 and M(2) = M(4) = m + 2.
inline std::size_t kernel_order(int j, std::size_t m) {
  check_kernel_index(j);
  return (j == 1 || j == 3) ? m + 1 : m + 2;
}

struct KernelSet {
  std::size_t m = 0;
  std::array<std::size_t, 4> orders{};
};

template <MetricSpace Space>
KernelSet kernel_set(const TestFamily<Space>& family) {
  const std::size_t m = family.order();
  return {m, {m + 1, m + 2, m + 1, m + 2}};
}

/// Binomial coefficient as a double (exact below 2^53).
inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

/// Falling factorial n (n-1) ... (n-k+1).
inline double falling_factorial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 0; i < k; ++i) r *= static_cast<double>(n - i);
  return r;
}

/// Psi(x, y, z, t) = (x - y) / (z - t). The denominator is treated as zero when
/// |z - t| <= 1e-12 * max(|z|, |t|, 1).
inline double psi(double x, double y, double z, double t) {
  const double eps = 1e-12 * std::max({std::abs(z), std::abs(t), 1.0});
  if (!(std::abs(z - t) > eps)) throw DegenerateVarianceError();
  return (x - y) / (z - t);
}

template <class Point>
struct SamplePair {
  Point z;
  Point zu;
};

enum class UStatMode { Automatic, Exact, Factorized, Incomplete };

inline std::string_view to_string(UStatMode m) noexcept {
  switch (m) {
    case UStatMode::Automatic: return "auto";
    case UStatMode::Exact: return "exact";
    case UStatMode::Factorized: return "factorized";
    case UStatMode::Incomplete: return "incomplete";
  }
  return "?";
}

inline UStatMode parse_ustat_mode(std::string_view s) {
  for (auto m : {UStatMode::Automatic, UStatMode::Exact, UStatMode::Factorized, UStatMode::Incomplete})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown U-statistic mode '" + std::string(s) + "'");
}

struct UStatConfig {
  UStatMode mode = UStatMode::Automatic;
  std::size_t tuple_budget = 0;  // D for incomplete mode; 0 picks min(1e6, C(N, m+2))
  std::uint64_t seed = 0;
  std::size_t exact_cap = 10'000'000;  // max tuples enumerated in exact mode

  void validate(std::size_t n) const {
    if (mode == UStatMode::Incomplete && tuple_budget != 0 && tuple_budget < n)
      throw ConfigError("incomplete mode needs a tuple budget D >= N (D=" + std::to_string(tuple_budget) +
                        ", N=" + std::to_string(n) + ")");
  }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Index estimate. `value` is always psi(components) bit for bit; numerator
/// and denominator are the same quantities accumulated in centered form.
struct IndexEstimate {
  double value = 0.0;
  std::array<double, 4> components{};
  double numerator = 0.0;
  double denominator = 0.0;
  std::optional<double> sigma;
  std::optional<Interval> ci;
  std::size_t n = 0;
  std::string method;
  UStatMode mode = UStatMode::Automatic;
  std::size_t tuples = 0;                  // tuples drawn (incomplete mode)
  std::array<double, 4> std_errors{};      // tuple-level standard errors (incomplete mode)

  bool out_of_range() const noexcept { return value < 0.0 || value > 1.0; }
};

namespace detail {

inline const std::vector<std::array<std::uint8_t, 4>>& permutation_table(std::size_t k) {
  static const auto tables = [] {
    std::array<std::vector<std::array<std::uint8_t, 4>>, 5> t;
    for (std::size_t n = 0; n <= 4; ++n) {
      std::array<std::uint8_t, 4> p{0, 1, 2, 3};
      do {
        t[n].push_back(p);
      } while (std::next_permutation(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n)));
    }
    return t;
  }();
  return tables.at(k);
}

/// Evaluates kernels on one tuple of at most four pairs. References are
/// 2*slot (unfrozen z) and 2*slot+1 (frozen z^u). Distances and T values are
/// memoized per bound tuple.
template <MetricSpace Space>
class TupleEvaluator {
 public:
  using point_type = typename Space::point_type;
  using ref_type = std::uint8_t;

  explicit TupleEvaluator(const TestFamily<Space>& family) : family_(&family), m_(family.order()) {}

  void bind(std::size_t slot, const point_type& z, const point_type& zu) {
    pts_[2 * slot] = &z;
    pts_[2 * slot + 1] = &zu;
  }

  void bind_rows(const PairedSample<point_type>& s, std::span<const std::size_t> rows) {
    for (std::size_t k = 0; k < rows.size(); ++k) bind(k, s.z[rows[k]], s.zu[rows[k]]);
    reset();
  }

  void reset() noexcept {
    dist_valid_ = 0;
    t_valid_[0] = t_valid_[1] = 0;
  }

  const point_type& point(ref_type r) const { return *pts_[r]; }

  double distance(ref_type a, ref_type b) const {
    if (a == b) return 0.0;
    const unsigned idx = a < b ? a * 8u + b : b * 8u + a;
    if (!(dist_valid_ >> idx & 1u)) {
      dist_[idx] = family_->space().distance(*pts_[a], *pts_[b]);
      dist_valid_ |= std::uint64_t{1} << idx;
    }
    return dist_[idx];
  }

  // T_{z_{a0}, z_{a1}}(target) for parameter slots a0, a1 (unused beyond m).
  double t(std::uint8_t a0, std::uint8_t a1, ref_type target) const {
    const unsigned idx = (m_ == 0 ? 0u : m_ == 1 ? a0 * 4u : a0 * 16u + a1 * 4u) * 2u + target;
    const unsigned word = idx >> 6, bit = idx & 63u;
    if (!(t_valid_[word] >> bit & 1u)) {
      const ref_type a[2] = {static_cast<ref_type>(2 * a0), static_cast<ref_type>(2 * a1)};
      t_cache_[idx] = family_->evaluate(*this, a, target);
      t_valid_[word] |= std::uint64_t{1} << bit;
    }
    return t_cache_[idx];
  }

  // Unsymmetrized Phi_j with slots taken in the order `ord`.
  double phi(int j, const std::uint8_t* ord) const {
    const std::uint8_t a0 = m_ > 0 ? ord[0] : 0, a1 = m_ > 1 ? ord[1] : 0;
    const std::uint8_t x = ord[m_];
    const double tx = t(a0, a1, static_cast<ref_type>(2 * x));
    switch (j) {
      case 1: return tx * t(a0, a1, static_cast<ref_type>(2 * x + 1));
      case 2: return tx * t(a0, a1, static_cast<ref_type>(2 * ord[m_ + 1] + 1));
      case 3: return tx * tx;
      default: return tx * t(a0, a1, static_cast<ref_type>(2 * ord[m_ + 1]));
    }
  }

  // Phi_j^s over the given slots (size must be M(j)).
  double phi_sym(int j, std::span<const std::uint8_t> slots) const {
    const auto& perms = permutation_table(slots.size());
    double s = 0.0;
    std::uint8_t ord[4];
    for (const auto& p : perms) {
      for (std::size_t k = 0; k < slots.size(); ++k) ord[k] = slots[p[k]];
      s += phi(j, ord);
    }
    return s / static_cast<double>(perms.size());
  }

  double phi_sym(int j) const {
    static constexpr std::uint8_t all[4] = {0, 1, 2, 3};
    return phi_sym(j, std::span<const std::uint8_t>(all, kernel_order(j, m_)));
  }

  // Order-(m+1) kernel j in {1,3} lifted to the m+2 bound slots: the average of
  // Phi_j^s over the m+2 sub-tuples of size m+1. Same expectation, and it
  // pairs with Phi_2^s / Phi_4^s on the same tuple.
  double phi_lifted(int j) const {
    const std::size_t big = m_ + 2;
    double s = 0.0;
    std::uint8_t sub[4];
    for (std::size_t omit = 0; omit < big; ++omit) {
      std::size_t k = 0;
      for (std::size_t q = 0; q < big; ++q)
        if (q != omit) sub[k++] = static_cast<std::uint8_t>(q);
      s += phi_sym(j, std::span<const std::uint8_t>(sub, big - 1));
    }
    return s / static_cast<double>(big);
  }

 private:
  const TestFamily<Space>* family_;
  std::size_t m_;
  std::array<const point_type*, 8> pts_{};
  mutable std::array<double, 64> dist_{};
  mutable std::uint64_t dist_valid_ = 0;
  mutable std::array<double, 128> t_cache_{};
  mutable std::array<std::uint64_t, 2> t_valid_{};
};

/// Context over whole-sample rows: ref = 2*row + frozen.
template <MetricSpace Space>
struct SampleContext {
  using point_type = typename Space::point_type;
  using ref_type = std::uint64_t;
  const Space& space;
  const PairedSample<point_type>& sample;

  const point_type& point(ref_type r) const { return (r & 1u) ? sample.zu[r >> 1] : sample.z[r >> 1]; }
  double distance(ref_type a, ref_type b) const { return space.distance(point(a), point(b)); }
};

// Visits the increasing k-combinations of {first..n-1} whose first element is
// `head` (head itself included as the first index).
template <class Fn>
void for_each_combination_with_head(std::size_t n, std::size_t k, std::size_t head, Fn&& fn) {
  std::array<std::size_t, 4> idx{};
  idx[0] = head;
  if (k == 1) {
    fn(std::span<const std::size_t>(idx.data(), 1));
    return;
  }
  for (std::size_t q = 1; q < k; ++q) idx[q] = head + q;
  if (idx[k - 1] >= n) return;
  while (true) {
    fn(std::span<const std::size_t>(idx.data(), k));
    std::size_t q = k - 1;
    while (q >= 1 && idx[q] == n - k + q) --q;
    if (q == 0) return;
    ++idx[q];
    for (std::size_t r = q + 1; r < k; ++r) idx[r] = idx[r - 1] + 1;
  }
}

// Draws k distinct indices from [0, n) excluding `skip` (pass n to exclude none).
inline void draw_distinct(CounterRng& rng, std::size_t n, std::size_t k, std::size_t skip, std::size_t* out) {
  for (std::size_t q = 0; q < k; ++q) {
    while (true) {
      const std::size_t c = rng.below(n);
      if (c == skip) continue;
      if (std::find(out, out + q, c) != out + q) continue;
      out[q] = c;
      break;
    }
  }
}

inline constexpr std::size_t kTupleChunk = 4096;
inline constexpr std::size_t kParamChunk = 64;

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernels on explicit tuples
// ---------------------------------------------------------------------------

/// Phi_j on a tuple of M(j) pairs; parameters a = (z_1..z_m) come from the
/// unfrozen coordinates of the first m pairs.
template <MetricSpace Space>
double kernel_phi(int j, const TestFamily<Space>& family,
                  std::span<const SamplePair<typename Space::point_type>> tuple) {
  const std::size_t order = kernel_order(j, family.order());
  if (tuple.size() != order)
    throw ArityError("Phi_" + std::to_string(j) + " takes " + std::to_string(order) + " pairs, got " +
                     std::to_string(tuple.size()));
  detail::TupleEvaluator<Space> ev(family);
  for (std::size_t k = 0; k < tuple.size(); ++k) ev.bind(k, tuple[k].z, tuple[k].zu);
  ev.reset();
  static constexpr std::uint8_t identity[4] = {0, 1, 2, 3};
  return ev.phi(j, identity);
}

/// Phi_j^s: average of Phi_j over all M(j)! orderings of the tuple.
template <MetricSpace Space>
double symmetrize(int j, const TestFamily<Space>& family,
                  std::span<const SamplePair<typename Space::point_type>> tuple) {
  const std::size_t order = kernel_order(j, family.order());
  if (tuple.size() != order)
    throw ArityError("Phi_" + std::to_string(j) + "^s takes " + std::to_string(order) + " pairs, got " +
                     std::to_string(tuple.size()));
  detail::TupleEvaluator<Space> ev(family);
  for (std::size_t k = 0; k < tuple.size(); ++k) ev.bind(k, tuple[k].z, tuple[k].zu);
  ev.reset();
  return ev.phi_sym(j);
}

// ---------------------------------------------------------------------------
// Complete U-statistics
// ---------------------------------------------------------------------------

namespace detail {

template <MetricSpace Space>
void check_sample(const PairedSample<typename Space::point_type>& s) {
  if (s.z.size() != s.zu.size()) throw ShapeError("paired sample columns differ in length");
}

// Sum of Phi_j^s over all increasing M-tuples (compensated, chunk-ordered).
template <MetricSpace Space>
double exact_sum(int j, const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                 const Executor& exec) {
  const std::size_t n = s.size(), order = kernel_order(j, family.order());
  auto partial = exec.map_chunks<KahanSum>(n, 8, [&](std::size_t b, std::size_t e) {
    TupleEvaluator<Space> ev(family);
    KahanSum acc;
    for (std::size_t head = b; head < e; ++head)
      for_each_combination_with_head(n, order, head, [&](std::span<const std::size_t> rows) {
        ev.bind_rows(s, rows);
        acc.add(ev.phi_sym(j));
      });
    return acc;
  });
  KahanSum total;
  for (const auto& p : partial) total.add(p);
  return total.value();
}

}  // namespace detail

/// Per-parameter-tuple factorization of the four U-statistics, plus the
/// exact Hajek projections h_j(i) = E_N[Phi_j^s | row i] when requested.
struct FactorizedStats {
  std::array<double, 4> u{};
  double numerator = 0.0;    // mean over parameter tuples of the centered covariance of (T(z), T(z^u))
  double denominator = 0.0;  // same for the variance of T(z)
  std::vector<std::array<double, 4>> projections;
  std::size_t parameter_tuples = 0;
};

namespace detail {

// Scalar outputs with half-line indicators: every count reduces to ranks, so
// the whole computation is O(N log N) in exact integer arithmetic.
inline FactorizedStats factorized_scalar_cvm(const PairedSample<double>& s, bool with_projections) {
  __extension__ typedef __int128 i128;
  const std::size_t n = s.size();
  const auto N = static_cast<std::int64_t>(n);
  std::vector<double> zs(s.z), us(s.zu), ms(n);
  for (std::size_t i = 0; i < n; ++i) ms[i] = std::max(s.z[i], s.zu[i]);
  std::sort(zs.begin(), zs.end());
  std::sort(us.begin(), us.end());
  std::sort(ms.begin(), ms.end());
  auto count_le = [](const std::vector<double>& v, double x) {
    return static_cast<std::int64_t>(std::upper_bound(v.begin(), v.end(), x) - v.begin());
  };

  std::vector<std::int64_t> A(n), B(n), D(n), self_u(n);
  i128 tot[4] = {0, 0, 0, 0}, cov_num = 0, var_num = 0;
  const std::int64_t np = N - 1;  // rows outside the parameter tuple
  for (std::size_t i = 0; i < n; ++i) {
    self_u[i] = s.zu[i] <= s.z[i] ? 1 : 0;
    A[i] = count_le(zs, s.z[i]) - 1;
    B[i] = count_le(us, s.z[i]) - self_u[i];
    D[i] = count_le(ms, s.z[i]) - self_u[i];
    tot[0] += D[i];
    tot[1] += static_cast<i128>(A[i]) * B[i] - D[i];
    tot[2] += A[i];
    tot[3] += static_cast<i128>(A[i]) * A[i] - A[i];
    cov_num += static_cast<i128>(np) * D[i] - static_cast<i128>(A[i]) * B[i];
    var_num += static_cast<i128>(np) * A[i] - static_cast<i128>(A[i]) * A[i];
  }

  FactorizedStats out;
  out.parameter_tuples = n;
  const double nd = static_cast<double>(n);
  const double ff2 = falling_factorial(n, 2), ff3 = falling_factorial(n, 3);
  out.u = {static_cast<double>(tot[0]) / ff2, static_cast<double>(tot[1]) / ff3, static_cast<double>(tot[2]) / ff2,
           static_cast<double>(tot[3]) / ff3};
  const double scale = static_cast<double>(np) * static_cast<double>(np - 1) * nd;
  out.numerator = static_cast<double>(cov_num) / scale;
  out.denominator = static_cast<double>(var_num) / scale;
  if (!with_projections) return out;

  // Suffix sums of A and B over rows ordered by z.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.z[a] < s.z[b]; });
  std::vector<i128> suf_a(n + 1, 0), suf_b(n + 1, 0);
  for (std::size_t q = n; q-- > 0;) {
    suf_a[q] = suf_a[q + 1] + A[order[q]];
    suf_b[q] = suf_b[q + 1] + B[order[q]];
  }
  auto first_ge = [&](double x) {  // position of the first sorted z >= x
    return static_cast<std::size_t>(std::lower_bound(zs.begin(), zs.end(), x) - zs.begin());
  };

  out.projections.resize(n);
  const double norm13 = 2.0 * (nd - 1.0), norm24 = 3.0 * (nd - 1.0) * (nd - 2.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double mx = std::max(s.z[k], s.zu[k]);
    const std::size_t p_z = first_ge(s.z[k]), p_u = first_ge(s.zu[k]), p_m = first_ge(mx);
    const i128 ge_z = N - static_cast<std::int64_t>(p_z);  // #{i : z_i >= z_k}, includes k
    const i128 ge_m = N - static_cast<std::int64_t>(p_m);
    const i128 ts = ge_m - self_u[k];                       // sum_{i != k} t_ik s_ik
    const i128 sum_tb = suf_b[p_z] - B[k];                  // sum_{i != k} t_ik B_i
    const i128 sum_sa = suf_a[p_u] - (self_u[k] ? A[k] : 0);  // sum_{i != k} s_ik A_i
    const i128 sum_ta = suf_a[p_z] - A[k];
    const i128 g1 = D[k] + ts;
    const i128 g3 = A[k] + (ge_z - 1);
    const i128 g2 = (static_cast<i128>(A[k]) * B[k] - D[k]) + sum_tb + sum_sa - 2 * ts;
    const i128 g4 = (static_cast<i128>(A[k]) * A[k] - A[k]) + 2 * (sum_ta - (ge_z - 1));
    out.projections[k] = {static_cast<double>(g1) / norm13, static_cast<double>(g2) / norm24,
                          static_cast<double>(g3) / norm13, static_cast<double>(g4) / norm24};
  }
  return out;
}

struct ParamTupleSums {
  double a = 0, b = 0;  // sum T(z_k), sum T(z^u_k) over rows outside the tuple
  std::array<double, 4> tot{};
  double cov = 0, var = 0;
};

// Decodes parameter tuple index -> ordered distinct rows (m <= 2).
inline void decode_param_tuple(std::size_t idx, std::size_t n, std::size_t m, std::uint64_t* rows) {
  if (m == 1) {
    rows[0] = idx;
  } else if (m == 2) {
    const std::size_t i = idx / (n - 1), r = idx % (n - 1);
    rows[0] = i;
    rows[1] = r < i ? r : r + 1;
  }
}

}  // namespace detail

/// Factorized evaluation: for every ordered parameter tuple a the kernels are
/// products of at most two T_a evaluations, so sums over the remaining slots
/// collapse to sums over single rows, with exact corrections for coinciding
/// indices. Cost O(N^(m+1)); scalar half-line families use an O(N log N)
/// rank-counting path unless `allow_rank_path` is false.
template <MetricSpace Space>
FactorizedStats factorized_ustats(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                                  bool with_projections, const Executor& exec = Executor(),
                                  bool allow_rank_path = true, double operation_cap = 4e10) {
  detail::check_sample<Space>(s);
  const std::size_t n = s.size(), m = family.order();
  if (n < m + 2) throw ConfigError("factorized U-statistics need N >= m+2 = " + std::to_string(m + 2));
  if constexpr (std::is_same_v<Space, ScalarSpace>) {
    if (allow_rank_path && family.kind() == FamilyKind::HalfSpaceCvM)
      return detail::factorized_scalar_cvm(s, with_projections);
  }
  const double tuples_d = falling_factorial(n, m);
  if (tuples_d * static_cast<double>(n) * (with_projections ? 2.0 : 1.0) > operation_cap)
    throw CapacityError("factorized evaluation needs ~" + std::to_string(tuples_d * static_cast<double>(n)) +
                        " kernel evaluations; use incomplete mode");
  const auto tuples = static_cast<std::size_t>(tuples_d);
  const detail::SampleContext<Space> ctx{family.space(), s};
  const double np = static_cast<double>(n - m);

  auto eval_t = [&](const std::uint64_t* rows, std::uint64_t ref) {
    const std::uint64_t a[2] = {2 * rows[0], 2 * rows[1]};
    return family.evaluate(ctx, a, ref);
  };
  auto in_tuple = [m](const std::uint64_t* rows, std::size_t k) {
    return (m > 0 && rows[0] == k) || (m > 1 && rows[1] == k);
  };

  // Pass 1: per parameter tuple sums.
  std::vector<detail::ParamTupleSums> per(with_projections ? tuples : 0);
  struct Partial {
    std::array<KahanSum, 4> tot;
    KahanSum cov, var;
  };
  auto partials = exec.map_chunks<Partial>(tuples, detail::kParamChunk, [&](std::size_t b, std::size_t e) {
    Partial part;
    std::vector<double> tv(n), sv(n);
    for (std::size_t idx = b; idx < e; ++idx) {
      std::uint64_t rows[2] = {0, 0};
      detail::decode_param_tuple(idx, n, m, rows);
      KahanSum sa, sb, sd, se;
      for (std::size_t k = 0; k < n; ++k) {
        if (in_tuple(rows, k)) {
          tv[k] = sv[k] = 0.0;
          continue;
        }
        tv[k] = eval_t(rows, 2 * k);
        sv[k] = eval_t(rows, 2 * k + 1);
        sa.add(tv[k]);
        sb.add(sv[k]);
        sd.add(tv[k] * sv[k]);
        se.add(tv[k] * tv[k]);
      }
      const double A = sa.value(), B = sb.value(), D = sd.value(), E = se.value();
      const double tbar = A / np, sbar = B / np;
      KahanSum c, v;
      for (std::size_t k = 0; k < n; ++k) {
        if (in_tuple(rows, k)) continue;
        c.add((tv[k] - tbar) * (sv[k] - sbar));
        v.add((tv[k] - tbar) * (tv[k] - tbar));
      }
      detail::ParamTupleSums ps{A, B, {D, A * B - D, E, A * A - E}, c.value() / (np - 1.0), v.value() / (np - 1.0)};
      for (int q = 0; q < 4; ++q) part.tot[q].add(ps.tot[q]);
      part.cov.add(ps.cov);
      part.var.add(ps.var);
      if (with_projections) per[idx] = ps;
    }
    return part;
  });

  FactorizedStats out;
  out.parameter_tuples = tuples;
  std::array<KahanSum, 4> tot;
  KahanSum cov, var;
  for (const auto& p : partials) {
    for (int q = 0; q < 4; ++q) tot[q].add(p.tot[q]);
    cov.add(p.cov);
    var.add(p.var);
  }
  for (int q = 0; q < 4; ++q) out.u[q] = tot[q].value() / falling_factorial(n, kernel_order(q + 1, m));
  out.numerator = cov.value() / tuples_d;
  out.denominator = var.value() / tuples_d;
  if (!with_projections) return out;

  // Pass 2: projections, one target row at a time.
  out.projections.resize(n);
  const double nd = static_cast<double>(n);
  const std::array<double, 4> norm = {
      static_cast<double>(m + 1) * falling_factorial(n - 1, m), static_cast<double>(m + 2) * falling_factorial(n - 1, m + 1),
      static_cast<double>(m + 1) * falling_factorial(n - 1, m), static_cast<double>(m + 2) * falling_factorial(n - 1, m + 1)};
  (void)nd;
  exec.for_chunks(n, detail::kParamChunk, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      std::array<KahanSum, 4> g;
      for (std::size_t idx = 0; idx < tuples; ++idx) {
        std::uint64_t rows[2] = {0, 0};
        detail::decode_param_tuple(idx, n, m, rows);
        const auto& ps = per[idx];
        if (in_tuple(rows, i)) {
          for (int q = 0; q < 4; ++q) g[q].add(ps.tot[q]);
          continue;
        }
        const double t = eval_t(rows, 2 * i), su = eval_t(rows, 2 * i + 1);
        g[0].add(t * su);
        g[1].add(t * (ps.b - su) + su * (ps.a - t));
        g[2].add(t * t);
        g[3].add(2.0 * t * (ps.a - t));
      }
      for (int q = 0; q < 4; ++q) out.projections[i][q] = g[q].value() / norm[q];
    }
  });
  return out;
}

/// U_{j,N}: the binomial-normalized sum of Phi_j^s over all increasing
/// M(j)-tuples. `mode` is Exact (enumeration, capped at `exact_cap` tuples)
/// or Factorized.
template <MetricSpace Space>
double complete_ustat(int j, const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                      UStatMode mode = UStatMode::Exact, const Executor& exec = Executor(),
                      std::size_t exact_cap = 10'000'000) {
  detail::check_sample<Space>(s);
  const std::size_t order = kernel_order(j, family.order()), n = s.size();
  if (n < order)
    throw ConfigError("U_" + std::to_string(j) + " needs N >= " + std::to_string(order) + ", got N=" + std::to_string(n));
  if (mode == UStatMode::Factorized && n >= family.order() + 2)
    return factorized_ustats(s, family, false, exec).u[static_cast<std::size_t>(j - 1)];
  if (mode != UStatMode::Exact && mode != UStatMode::Factorized)
    throw ConfigError("complete_ustat supports exact or factorized mode");
  const double count = binomial(n, order);
  if (count > static_cast<double>(exact_cap))
    throw CapacityError("exact U_" + std::to_string(j) + " would enumerate " + std::to_string(count) +
                        " tuples (cap " + std::to_string(exact_cap) + "); use factorized or incomplete mode");
  return detail::exact_sum(j, s, family, exec) / count;
}

// ---------------------------------------------------------------------------
// Incomplete U-statistics
// ---------------------------------------------------------------------------

struct IncompleteUStat {
  double value = 0.0;
  double std_error = 0.0;  // standard error of the tuple average
  std::size_t tuples = 0;
  bool exhaustive = false;  // budget covered every combination: value is the complete U-statistic
};

/// Average of Phi_j^s over D tuples of M(j) distinct rows drawn uniformly.
/// When D >= C(N, M(j)) every combination is enumerated once instead.
template <MetricSpace Space>
IncompleteUStat incomplete_ustat(int j, const PairedSample<typename Space::point_type>& s,
                                 const TestFamily<Space>& family, std::size_t budget, std::uint64_t seed,
                                 const Executor& exec = Executor()) {
  detail::check_sample<Space>(s);
  const std::size_t order = kernel_order(j, family.order()), n = s.size();
  if (n < order) throw ConfigError("incomplete U-statistic needs N >= M(j)");
  if (budget < 1) throw ConfigError("tuple budget must be >= 1");
  const double combos = binomial(n, order);
  if (static_cast<double>(budget) >= combos)
    return {detail::exact_sum(j, s, family, exec) / combos, 0.0, static_cast<std::size_t>(combos), true};

  auto tuple_value = [&](detail::TupleEvaluator<Space>& ev, std::size_t t) {
    std::size_t rows[4];
    CounterRng rng(seed, t);
    detail::draw_distinct(rng, n, order, n, rows);
    ev.bind_rows(s, std::span<const std::size_t>(rows, order));
    return ev.phi_sym(j);
  };
  // sums are taken around the first tuple's value to avoid cancellation
  double shift = 0.0;
  {
    detail::TupleEvaluator<Space> ev(family);
    shift = tuple_value(ev, 0);
  }
  struct Partial {
    KahanSum sum, sq;
  };
  auto partials = exec.map_chunks<Partial>(budget, detail::kTupleChunk, [&](std::size_t b, std::size_t e) {
    Partial p;
    detail::TupleEvaluator<Space> ev(family);
    for (std::size_t t = b; t < e; ++t) {
      const double v = tuple_value(ev, t) - shift;
      p.sum.add(v);
      p.sq.add(v * v);
    }
    return p;
  });
  KahanSum sum, sq;
  for (const auto& p : partials) {
    sum.add(p.sum);
    sq.add(p.sq);
  }
  const double d = static_cast<double>(budget), centered = sum.value() / d;
  const double var = budget > 1 ? std::max(0.0, (sq.value() - d * centered * centered) / (d - 1.0)) : 0.0;
  return {shift + centered, std::sqrt(var / d), budget, false};
}

// ---------------------------------------------------------------------------
// Index estimation
// ---------------------------------------------------------------------------

/// Resolves Automatic: factorized for m <= 1; otherwise incomplete with
/// D = min(1e6, C(N, m+2)), or exact when that budget covers every tuple.
template <MetricSpace Space>
UStatConfig resolve_mode(const TestFamily<Space>& family, std::size_t n, UStatConfig cfg) {
  const std::size_t m = family.order();
  const double combos = binomial(n, m + 2);
  if (cfg.mode == UStatMode::Automatic) {
    if (m <= 1) {
      cfg.mode = UStatMode::Factorized;
    } else {
      cfg.mode = UStatMode::Incomplete;
    }
  }
  if (cfg.mode == UStatMode::Incomplete) {
    if (cfg.tuple_budget == 0) cfg.tuple_budget = static_cast<std::size_t>(std::min(1e6, combos));
    if (static_cast<double>(cfg.tuple_budget) >= combos && combos <= static_cast<double>(cfg.exact_cap))
      cfg.mode = UStatMode::Exact;
  }
  return cfg;
}

/// S_hat = Psi(U_1, U_2, U_3, U_4).
template <MetricSpace Space>
IndexEstimate estimate_gms_index(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                                 UStatConfig cfg = {}, const Executor& exec = Executor()) {
  detail::check_sample<Space>(s);
  const std::size_t n = s.size(), m = family.order();
  if (n < m + 2) throw ConfigError("index estimation needs N >= m+2 = " + std::to_string(m + 2));
  cfg.validate(n);
  cfg = resolve_mode(family, n, cfg);

  IndexEstimate est;
  est.n = n;
  est.mode = cfg.mode;
  est.method = "gms/" + std::string(to_string(cfg.mode));
  switch (cfg.mode) {
    case UStatMode::Factorized: {
      const auto f = factorized_ustats(s, family, false, exec);
      est.components = f.u;
      est.numerator = f.numerator;
      est.denominator = f.denominator;
      break;
    }
    case UStatMode::Exact: {
      for (int j = 1; j <= 4; ++j) est.components[static_cast<std::size_t>(j - 1)] = complete_ustat(j, s, family, UStatMode::Exact, exec, cfg.exact_cap);
      // Centered route: per (m+2)-tuple differences of the lifted order-(m+1)
      // kernels and the order-(m+2) kernels.
      const double count = binomial(n, m + 2);
      auto partial = exec.map_chunks<std::array<KahanSum, 2>>(n, 8, [&](std::size_t b, std::size_t e) {
        std::array<KahanSum, 2> acc;
        detail::TupleEvaluator<Space> ev(family);
        for (std::size_t head = b; head < e; ++head)
          detail::for_each_combination_with_head(n, m + 2, head, [&](std::span<const std::size_t> rows) {
            ev.bind_rows(s, rows);
            acc[0].add(ev.phi_lifted(1) - ev.phi_sym(2));
            acc[1].add(ev.phi_lifted(3) - ev.phi_sym(4));
          });
        return acc;
      });
      KahanSum num, den;
      for (const auto& p : partial) {
        num.add(p[0]);
        den.add(p[1]);
      }
      est.numerator = num.value() / count;
      est.denominator = den.value() / count;
      break;
    }
    case UStatMode::Incomplete: {
      const std::size_t budget = cfg.tuple_budget;
      auto tuple_values = [&](detail::TupleEvaluator<Space>& ev, std::size_t t) {
        std::size_t rows[4];
        CounterRng rng(cfg.seed, t);
        detail::draw_distinct(rng, n, m + 2, n, rows);
        ev.bind_rows(s, std::span<const std::size_t>(rows, m + 2));
        return std::array<double, 4>{ev.phi_lifted(1), ev.phi_sym(2), ev.phi_lifted(3), ev.phi_sym(4)};
      };
      std::array<double, 4> shift{};
      {
        detail::TupleEvaluator<Space> ev(family);
        shift = tuple_values(ev, 0);
      }
      struct Partial {
        std::array<KahanSum, 4> sum, sq;
        KahanSum num, den;
      };
      auto partials = exec.map_chunks<Partial>(budget, detail::kTupleChunk, [&](std::size_t b, std::size_t e) {
        Partial p;
        detail::TupleEvaluator<Space> ev(family);
        for (std::size_t t = b; t < e; ++t) {
          const auto v = tuple_values(ev, t);
          for (int q = 0; q < 4; ++q) {
            const double c = v[q] - shift[q];
            p.sum[q].add(c);
            p.sq[q].add(c * c);
          }
          p.num.add(v[0] - v[1]);
          p.den.add(v[2] - v[3]);
        }
        return p;
      });
      std::array<KahanSum, 4> sum, sq;
      KahanSum num, den;
      for (const auto& p : partials) {
        for (int q = 0; q < 4; ++q) {
          sum[q].add(p.sum[q]);
          sq[q].add(p.sq[q]);
        }
        num.add(p.num);
        den.add(p.den);
      }
      const double d = static_cast<double>(budget);
      for (int q = 0; q < 4; ++q) {
        const double centered = sum[q].value() / d;
        est.components[q] = shift[q] + centered;
        const double var = budget > 1 ? std::max(0.0, (sq[q].value() - d * centered * centered) / (d - 1.0)) : 0.0;
        est.std_errors[q] = std::sqrt(var / d);
      }
      est.numerator = num.value() / d;
      est.denominator = den.value() / d;
      est.tuples = budget;
      break;
    }
    case UStatMode::Automatic:
      break;
  }
  const auto& c = est.components;
  est.value = psi(c[0], c[1], c[2], c[3]);
  return est;
}

}  // namespace gms
