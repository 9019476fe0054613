#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gms/baselines.hpp"
#include "gms/error.hpp"
#include "gms/family.hpp"
#include "gms/metric.hpp"
#include "gms/parallel.hpp"
#include "gms/sampling.hpp"
#include "gms/summation.hpp"
#include "gms/ustat.hpp"

namespace gms {

/// Model with optional reference index values keyed by (family, subset),
/// e.g. "sobol:1" or "cvm:2".
template <class Point>
struct AnalyticModel {
  InputModel<Point> model;
  std::map<std::string, double> references;

  static std::string key(FamilyKind family, const SubsetU& u) {
    std::string k(to_string(family));
    k += ':';
    for (std::size_t i = 0; i < u.indices().size(); ++i) {
      if (i) k += ',';
      k += std::to_string(u.indices()[i]);
    }
    return k;
  }

  std::optional<double> reference(FamilyKind family, const SubsetU& u) const {
    const auto it = references.find(key(family, u));
    if (it == references.end()) return std::nullopt;
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Log-normal toy model Z = exp(X1 + 2 X2), X1, X2 standard normal
// ---------------------------------------------------------------------------

inline double lognormal_toy(double x1, double x2) { return std::exp(x1 + 2.0 * x2); }

struct LognormalReferences {
  double sobol1 = 0.0;
  double sobol2 = 0.0;
  double cvm1 = 0.0;
  double cvm2 = 0.0;
};

/// Reference closed forms for the toy model, evaluated from their exact
/// expressions.
///
/// NOTE: the two Sobol expressions are the reference ones. Integrating
/// Var(E[Z|X_i]) / Var(Z) directly gives (e^c - 1)/(e^5 - 1) with c = 1 and
/// c = 4, i.e. 0.011656 and 0.363591, which is what every consistent Sobol
/// estimator converges to. See lognormal_exact_sobol().
inline LognormalReferences lognormal_references() {
  const double e = std::numbers::e, pi = std::numbers::pi;
  return {(1.0 - 1.0 / e) / (std::pow(e, 4) - 1.0), (std::pow(e, 3) - std::pow(e, -3)) / (std::pow(e, 4) - 1.0),
          6.0 / pi * std::atan(2.0) - 2.0, 6.0 / pi * std::atan(std::sqrt(19.0)) - 2.0};
}

/// First-order Sobol indices of the toy model by direct integration.
inline std::pair<double, double> lognormal_exact_sobol() {
  const double den = std::expm1(5.0);
  return {std::expm1(1.0) / den, std::expm1(4.0) / den};
}

inline InputModel<double> lognormal_model() {
  InputModel<double> m;
  m.name = "lognormal_toy";
  m.coordinates = {Distribution::standard_normal(), Distribution::standard_normal()};
  m.input_names = {"X1", "X2"};
  m.f = [](std::span<const double> x) { return lognormal_toy(x[0], x[1]); };
  return m;
}

inline AnalyticModel<double> lognormal_analytic() {
  const auto r = lognormal_references();
  AnalyticModel<double> a{lognormal_model(), {}};
  a.references["sobol:1"] = r.sobol1;
  a.references["sobol:2"] = r.sobol2;
  a.references["cvm:1"] = r.cvm1;
  a.references["cvm:2"] = r.cvm2;
  return a;
}

// ---------------------------------------------------------------------------
// Gaussian plume at ground level
// ---------------------------------------------------------------------------

/// C(x, y, 0) = Q / (2 pi K x) exp(-u (y^2 + H^2) / (4 K x)).
inline double plume_concentration(double Q, double K, double u, double H, double x, double y) {
  if (!(x > 0.0)) throw DomainError("plume concentration needs x > 0");
  if (!(K > 0.0)) throw DomainError("plume concentration needs K > 0");
  if (!(u >= 0.0)) throw DomainError("plume concentration needs wind speed u >= 0");
  if (!(Q >= 0.0)) throw DomainError("plume concentration needs emission rate Q >= 0");
  return Q / (2.0 * std::numbers::pi * K * x) * std::exp(-u * (y * y + H * H) / (4.0 * K * x));
}

/// [0.1, 10] x [-10, 10] with 64 x 128 cells. The lower x bound stays away
/// from the 1/x singularity at the source.
inline GridSpec plume_default_grid() { return {0.1, 10.0, -10.0, 10.0, 64, 128}; }

inline void check_plume_grid(const GridSpec& g) {
  g.validate();
  if (!(g.x0 > 0.0)) throw DomainError("plume grid must stay in x > 0 (got x0 = " + std::to_string(g.x0) + ")");
  if (g.x1 > 10.0) throw DomainError("plume grid x-range must lie within (0, 10]");
}

/// Scalar field on a grid, row-major (ix * ny + iy).
struct FieldOutput {
  GridSpec grid;
  std::vector<double> values;

  double at(std::size_t ix, std::size_t iy) const { return values[grid.index(ix, iy)]; }
};

inline FieldOutput plume_field(double Q, double K, double u, double H, const GridSpec& grid = plume_default_grid()) {
  check_plume_grid(grid);
  FieldOutput f{grid, std::vector<double>(grid.size())};
  for (std::size_t ix = 0; ix < grid.nx; ++ix)
    for (std::size_t iy = 0; iy < grid.ny; ++iy)
      f.values[grid.index(ix, iy)] = plume_concentration(Q, K, u, H, grid.x_center(ix), grid.y_center(iy));
  return f;
}

/// G(lambda) = sum_cells w_c exp(-lambda c_c) with w_c = area / (4 pi^2 x_c^2)
/// and c_c = (y_c^2 + H^2) / (4 x_c). For fields with s = Q/K and r = u/K the
/// grid inner product is s1 s2 G(r1 + r2), so distances need only G.
///
/// G is tabulated as h(t) = log G(e^t) + e^t c_min on a uniform t grid with
/// cubic Hermite interpolation (exact derivatives); arguments outside the
/// table fall back to direct summation.
class PlumeKernelTable {
 public:
  static constexpr double kLogMin = -16.11809565095832;  // ln 1e-7
  static constexpr double kLogMax = 18.420680743952367;  // ln 1e8
  static constexpr double kNodesPerUnit = 64.0;

  PlumeKernelTable(const GridSpec& grid, double H) {
    check_plume_grid(grid);
    const double area = grid.cell_area();
    for (std::size_t ix = 0; ix < grid.nx; ++ix)
      for (std::size_t iy = 0; iy < grid.ny; ++iy) {
        const double x = grid.x_center(ix), y = grid.y_center(iy);
        w_.push_back(area / (4.0 * std::numbers::pi * std::numbers::pi * x * x));
        c_.push_back((y * y + H * H) / (4.0 * x));
      }
    c_min_ = *std::min_element(c_.begin(), c_.end());
    KahanSum s;
    for (double w : w_) s.add(w);
    g0_ = s.value();
    const auto nodes = static_cast<std::size_t>(std::ceil((kLogMax - kLogMin) * kNodesPerUnit)) + 1;
    step_ = (kLogMax - kLogMin) / static_cast<double>(nodes - 1);
    h_.resize(nodes);
    dh_.resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
      const double lambda = std::exp(kLogMin + static_cast<double>(k) * step_);
      const auto [h, cbar] = direct(lambda);
      h_[k] = h;
      dh_[k] = lambda * (c_min_ - cbar);
    }
  }

  /// G(lambda) for lambda >= 0.
  double operator()(double lambda) const {
    if (lambda <= 0.0) return g0_;
    const double t = std::log(lambda);
    double h;
    if (t < kLogMin || t >= kLogMax) {
      h = direct(lambda).first;
    } else {
      const double pos = (t - kLogMin) / step_;
      const auto k = std::min(static_cast<std::size_t>(pos), h_.size() - 2);
      const double s = pos - static_cast<double>(k), s2 = s * s, s3 = s2 * s;
      h = (2 * s3 - 3 * s2 + 1) * h_[k] + (s3 - 2 * s2 + s) * step_ * dh_[k] + (-2 * s3 + 3 * s2) * h_[k + 1] +
          (s3 - s2) * step_ * dh_[k + 1];
    }
    return std::exp(h - lambda * c_min_);
  }

  /// Direct summation, for checks.
  double exact(double lambda) const {
    if (lambda <= 0.0) return g0_;
    return std::exp(direct(lambda).first - lambda * c_min_);
  }

 private:
  // (log G(lambda) + lambda c_min, weighted mean of c under w e^{-lambda c})
  std::pair<double, double> direct(double lambda) const {
    KahanSum s, sc;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      const double v = w_[i] * std::exp(-lambda * (c_[i] - c_min_));
      s.add(v);
      sc.add(v * c_[i]);
    }
    return {std::log(s.value()), sc.value() / s.value()};
  }

  std::vector<double> w_, c_;
  double c_min_ = 0.0, g0_ = 0.0, step_ = 0.0;
  std::vector<double> h_, dh_;
};

/// Plume concentration field identified by its parameters.
struct PlumePoint {
  double Q = 0.0, K = 1.0, u = 0.0;
  double scale = 0.0;  // Q / K
  double rate = 0.0;   // u / K
  double norm2 = 0.0;  // squared grid L2 norm
};

/// Plume fields at fixed height H with the grid L2 distance, evaluated in
/// O(1) per pair from the tabulated kernel. Agrees with GridFieldSpace on the
/// materialized fields up to interpolation error. No midpoint: the average
/// of two plumes is not a plume.
class PlumeFieldSpace {
 public:
  using point_type = PlumePoint;
  static constexpr PointKind kind = PointKind::GridField;

  PlumeFieldSpace(double H, const GridSpec& grid = plume_default_grid())
      : grid_(grid), H_(H), table_(std::make_shared<const PlumeKernelTable>(grid, H)) {}

  const GridSpec& grid() const noexcept { return grid_; }
  double height() const noexcept { return H_; }
  const PlumeKernelTable& table() const noexcept { return *table_; }

  PlumePoint make_point(double Q, double K, double u) const {
    if (!(K > 0.0)) throw DomainError("plume needs K > 0");
    if (!(u >= 0.0) || !(Q >= 0.0)) throw DomainError("plume needs Q >= 0 and u >= 0");
    PlumePoint p{Q, K, u, Q / K, u / K, 0.0};
    p.norm2 = p.scale * p.scale * (*table_)(2.0 * p.rate);
    return p;
  }

  double distance(const PlumePoint& a, const PlumePoint& b) const {
    if (a.Q == b.Q && a.K == b.K && a.u == b.u) return 0.0;
    const double cross = a.scale * b.scale * (*table_)(a.rate + b.rate);
    return std::sqrt(std::max(0.0, a.norm2 + b.norm2 - 2.0 * cross));
  }

  FieldOutput materialize(const PlumePoint& p) const { return plume_field(p.Q, p.K, p.u, H_, grid_); }

 private:
  GridSpec grid_;
  double H_;
  std::shared_ptr<const PlumeKernelTable> table_;
};

inline std::vector<Distribution> plume_inputs(std::size_t count) {
  return std::vector<Distribution>(count, Distribution::uniform(0.0, 10.0));
}

/// Inputs (Q, K, u) ~ U[0,10]^3, H fixed; outputs as PlumePoint.
inline InputModel<PlumePoint> plume_model(const PlumeFieldSpace& space) {
  InputModel<PlumePoint> m;
  m.name = "plume";
  m.coordinates = plume_inputs(3);
  m.input_names = {"Q", "K", "u"};
  m.f = [space](std::span<const double> x) { return space.make_point(x[0], x[1], x[2]); };
  return m;
}

/// Same model with materialized fields (GridFieldSpace outputs).
inline InputModel<std::vector<double>> plume_field_model(double H, const GridSpec& grid = plume_default_grid()) {
  check_plume_grid(grid);
  InputModel<std::vector<double>> m;
  m.name = "plume_field";
  m.coordinates = plume_inputs(3);
  m.input_names = {"Q", "K", "u"};
  m.f = [H, grid](std::span<const double> x) { return plume_field(x[0], x[1], x[2], H, grid).values; };
  return m;
}

/// Inputs (Q, K, u, H) ~ U[0,10]^4 with the concentration field as output;
/// used for per-location maps.
inline InputModel<std::vector<double>> plume_map_model(const GridSpec& grid = plume_default_grid()) {
  check_plume_grid(grid);
  InputModel<std::vector<double>> m;
  m.name = "plume_map";
  m.coordinates = plume_inputs(4);
  m.input_names = {"Q", "K", "u", "H"};
  m.f = [grid](std::span<const double> x) { return plume_field(x[0], x[1], x[2], x[3], grid).values; };
  return m;
}

// ---------------------------------------------------------------------------
// Ubiquitous (per-location) maps
// ---------------------------------------------------------------------------

enum class MapEstimator { GmsSobol, Pf, PfEfficient };

inline std::string_view to_string(MapEstimator e) noexcept {
  switch (e) {
    case MapEstimator::GmsSobol: return "gms";
    case MapEstimator::Pf: return "pf";
    case MapEstimator::PfEfficient: return "pf_efficient";
  }
  return "?";
}

inline MapEstimator parse_map_estimator(std::string_view s) {
  if (s == "gms" || s == "gms_sobol") return MapEstimator::GmsSobol;
  if (s == "pf") return MapEstimator::Pf;
  if (s == "pf_efficient") return MapEstimator::PfEfficient;
  throw ConfigError("unknown estimator '" + std::string(s) + "' (expected gms, pf or pf_efficient)");
}

struct IndexMap {
  SubsetU subset;
  GridSpec grid;
  std::vector<double> values;  // row-major; NaN marks a degenerate node
  std::size_t missing = 0;
};

/// Sobol-type index at one node from a paired scalar sample.
inline double node_index(const PairedSample<double>& s, MapEstimator est) {
  switch (est) {
    case MapEstimator::GmsSobol: {
      static const TestFamily<ScalarSpace> sobol(FamilyKind::SobolValue, ScalarSpace{});
      UStatConfig cfg;
      cfg.mode = UStatMode::Factorized;
      return estimate_gms_index(s, sobol, cfg).value;
    }
    case MapEstimator::Pf: return sobol_pf(s);
    case MapEstimator::PfEfficient: return sobol_pf_efficient(s);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Per-node indices from one paired sample of fields.
inline IndexMap map_from_sample(const PairedSample<std::vector<double>>& s, const SubsetU& u, const GridSpec& grid,
                                MapEstimator est, const Executor& exec = Executor()) {
  const std::size_t nodes = grid.size(), n = s.size();
  for (std::size_t i = 0; i < n; ++i)
    if (s.z[i].size() != nodes || s.zu[i].size() != nodes)
      throw ShapeError("model output has " + std::to_string(s.z[i].size()) + " values, map grid has " +
                       std::to_string(nodes) + " nodes");
  IndexMap out{u, grid, std::vector<double>(nodes), 0};
  exec.for_chunks(nodes, 64, [&](std::size_t, std::size_t b, std::size_t e) {
    PairedSample<double> col;
    col.z.resize(n);
    col.zu.resize(n);
    for (std::size_t node = b; node < e; ++node) {
      for (std::size_t i = 0; i < n; ++i) {
        col.z[i] = s.z[i][node];
        col.zu[i] = s.zu[i][node];
      }
      try {
        out.values[node] = node_index(col, est);
      } catch (const DegenerateVarianceError&) {
        out.values[node] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  });
  out.missing = static_cast<std::size_t>(std::count_if(out.values.begin(), out.values.end(),
                                                       [](double v) { return std::isnan(v); }));
  return out;
}

/// Sensitivity map for subset u from a single Pick-Freeze design (2N field
/// evaluations reused by every node).
inline IndexMap ubiquitous_map(const InputModel<std::vector<double>>& model, const SubsetU& u, const GridSpec& grid,
                               std::size_t n, MapEstimator est, std::uint64_t seed, const Executor& exec = Executor()) {
  if (n < 2) throw ConfigError("maps need N >= 2");
  return map_from_sample(pick_freeze(model, u, n, seed, exec), u, grid, est, exec);
}

/// Maps for several subsets on one shared design: X is evaluated once, so the
/// cost is N (1 + number of subsets) field evaluations.
inline std::vector<IndexMap> ubiquitous_maps(const InputModel<std::vector<double>>& model,
                                             std::span<const SubsetU> subsets, const GridSpec& grid, std::size_t n,
                                             MapEstimator est, std::uint64_t seed, const Executor& exec = Executor()) {
  if (n < 2) throw ConfigError("maps need N >= 2");
  const auto samples = pick_freeze_shared(model, subsets, n, seed, exec);
  std::vector<IndexMap> out;
  for (std::size_t k = 0; k < subsets.size(); ++k) out.push_back(map_from_sample(samples[k], subsets[k], grid, est, exec));
  return out;
}

}  // namespace gms
