#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "gms/error.hpp"
#include "gms/metric.hpp"

namespace gms {

/// Test-function families T_a(x), a = (a_1..a_m) in the output space.
///
///   SobolValue        m=0  T(x) = x                        (scalar outputs)
///   HalfSpaceCvM      m=1  T_a(x) = 1{x <= a} componentwise (scalar/vector)
///   MetricBall        m=2  1{d(x,a1) <= d(a1,a2)}
///   MidpointBall      m=2  1{d(x,(a1+a2)/2) <= d(a1,a2)/2}
///   IntersectionBall  m=2  1{max(d(x,a1), d(x,a2)) <= d(a1,a2)}
///
/// All inequalities are closed.
enum class FamilyKind { SobolValue, HalfSpaceCvM, MetricBall, MidpointBall, IntersectionBall };

constexpr std::size_t family_order(FamilyKind k) noexcept {
  switch (k) {
    case FamilyKind::SobolValue: return 0;
    case FamilyKind::HalfSpaceCvM: return 1;
    default: return 2;
  }
}

constexpr std::string_view to_string(FamilyKind k) noexcept {
  switch (k) {
    case FamilyKind::SobolValue: return "sobol";
    case FamilyKind::HalfSpaceCvM: return "cvm";
    case FamilyKind::MetricBall: return "metric_ball";
    case FamilyKind::MidpointBall: return "midpoint_ball";
    case FamilyKind::IntersectionBall: return "intersection_ball";
  }
  return "?";
}

inline FamilyKind parse_family_kind(std::string_view s) {
  for (auto k : {FamilyKind::SobolValue, FamilyKind::HalfSpaceCvM, FamilyKind::MetricBall, FamilyKind::MidpointBall,
                 FamilyKind::IntersectionBall})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown family kind '" + std::string(s) +
                    "' (expected sobol, cvm, metric_ball, midpoint_ball or intersection_ball)");
}

/// Gives a family access to points by reference, and to (possibly cached)
/// distances between them.
template <class C>
concept PointContext = requires(const C& c, typename C::ref_type r) {
  typename C::ref_type;
  c.point(r);
  { c.distance(r, r) } -> std::convertible_to<double>;
};

namespace detail {

// Plain points: refs 0..m-1 are the parameters, ref m is x.
template <class Space>
struct ListContext {
  using point_type = typename Space::point_type;
  using ref_type = std::size_t;
  const Space& space;
  std::span<const point_type> a;
  const point_type& x;
  const point_type& point(std::size_t r) const { return r < a.size() ? a[r] : x; }
  double distance(std::size_t r, std::size_t s) const { return space.distance(point(r), point(s)); }
};

}  // namespace detail

template <MetricSpace Space>
class TestFamily {
 public:
  using space_type = Space;
  using point_type = typename Space::point_type;

  TestFamily(FamilyKind kind, Space space) : kind_(kind), space_(std::move(space)) {
    switch (kind_) {
      case FamilyKind::SobolValue:
        if constexpr (!std::is_same_v<point_type, double>)
          throw ConfigError("sobol family requires scalar outputs");
        break;
      case FamilyKind::HalfSpaceCvM:
        if constexpr (!HasComponentwiseOrder<Space>)
          throw ConfigError("cvm family requires scalar or vector outputs");
        break;
      case FamilyKind::MidpointBall:
        if constexpr (!HasMidpoint<Space>)
          throw UnsupportedOperation("midpoint_ball needs a midpoint, which this output space does not provide");
        break;
      default:
        break;
    }
  }

  FamilyKind kind() const noexcept { return kind_; }
  std::size_t order() const noexcept { return family_order(kind_); }
  const Space& space() const noexcept { return space_; }
  bool is_indicator() const noexcept { return kind_ != FamilyKind::SobolValue; }

  /// T_a(x) with a = (a[0], ..., a[m-1]) given as context references.
  template <PointContext Ctx>
  double evaluate(const Ctx& ctx, const typename Ctx::ref_type* a, typename Ctx::ref_type x) const {
    switch (kind_) {
      case FamilyKind::SobolValue:
        if constexpr (std::is_same_v<point_type, double>) return ctx.point(x);
        break;
      case FamilyKind::HalfSpaceCvM:
        if constexpr (HasComponentwiseOrder<Space>) return space_.leq(ctx.point(x), ctx.point(a[0])) ? 1.0 : 0.0;
        break;
      case FamilyKind::MetricBall:
        return ctx.distance(x, a[0]) <= ctx.distance(a[0], a[1]) ? 1.0 : 0.0;
      case FamilyKind::MidpointBall:
        if constexpr (HasMidpoint<Space>) {
          const auto mid = space_.midpoint(ctx.point(a[0]), ctx.point(a[1]));
          return space_.distance(ctx.point(x), mid) <= 0.5 * ctx.distance(a[0], a[1]) ? 1.0 : 0.0;
        }
        break;
      case FamilyKind::IntersectionBall: {
        const double r = ctx.distance(a[0], a[1]);
        return std::max(ctx.distance(x, a[0]), ctx.distance(x, a[1])) <= r ? 1.0 : 0.0;
      }
    }
    throw UnsupportedOperation("family '" + std::string(to_string(kind_)) + "' is not available on this space");
  }

  /// eval_family: T_a(x) on plain points; `a` must hold exactly m points.
  double operator()(std::span<const point_type> a, const point_type& x) const {
    if (a.size() != order())
      throw ArityError("family '" + std::string(to_string(kind_)) + "' takes " + std::to_string(order()) +
                       " parameter points, got " + std::to_string(a.size()));
    const detail::ListContext<Space> ctx{space_, a, x};
    const std::size_t refs[2] = {0, 1};
    return evaluate(ctx, refs, a.size());
  }

 private:
  FamilyKind kind_;
  Space space_;
};

template <MetricSpace Space>
double eval_family(const TestFamily<Space>& family, std::span<const typename Space::point_type> a,
                   const typename Space::point_type& x) {
  return family(a, x);
}

}  // namespace gms
