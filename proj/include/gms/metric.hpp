#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <string>
#include <vector>

#include "gms/error.hpp"
#include "gms/summation.hpp"

namespace gms {

enum class PointKind { Scalar, Vector, GridField, Matrix };

template <class S>
concept MetricSpace = requires(const S& s, const typename S::point_type& x) {
  typename S::point_type;
  { S::kind } -> std::convertible_to<PointKind>;
  { s.distance(x, x) } -> std::convertible_to<double>;
};

// Spaces with a midpoint between two points (vector spaces and fields).
template <class S>
concept HasMidpoint = MetricSpace<S> && requires(const S& s, const typename S::point_type& x) {
  { s.midpoint(x, x) } -> std::convertible_to<typename S::point_type>;
};

// Spaces with the componentwise partial order used by half-space indicators.
template <class S>
concept HasComponentwiseOrder = MetricSpace<S> && requires(const S& s, const typename S::point_type& x) {
  { s.leq(x, x) } -> std::convertible_to<bool>;
};

struct ScalarSpace {
  using point_type = double;
  static constexpr PointKind kind = PointKind::Scalar;

  double distance(double x, double y) const noexcept { return std::abs(x - y); }
  double midpoint(double x, double y) const noexcept { return 0.5 * (x + y); }
  bool leq(double x, double a) const noexcept { return x <= a; }
};

/// R^k with the Euclidean distance.
struct EuclideanSpace {
  using point_type = std::vector<double>;
  static constexpr PointKind kind = PointKind::Vector;

  std::size_t dim = 1;

  void check(const point_type& x) const {
    if (x.size() != dim)
      throw ShapeError("expected a point of R^" + std::to_string(dim) + ", got dimension " + std::to_string(x.size()));
  }

  double distance(const point_type& x, const point_type& y) const {
    check(x);
    check(y);
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
  }

  point_type midpoint(const point_type& x, const point_type& y) const {
    check(x);
    check(y);
    point_type m(dim);
    for (std::size_t i = 0; i < dim; ++i) m[i] = 0.5 * (x[i] + y[i]);
    return m;
  }

  // x <= a componentwise (closed)
  bool leq(const point_type& x, const point_type& a) const {
    check(x);
    check(a);
    for (std::size_t i = 0; i < dim; ++i)
      if (!(x[i] <= a[i])) return false;
    return true;
  }
};

/// Rectangular grid [x0,x1] x [y0,y1] split into nx * ny cells; field values
/// live at cell centres.
struct GridSpec {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  std::size_t nx = 1, ny = 1;

  void validate() const {
    if (!(x0 < x1 && y0 < y1) || nx == 0 || ny == 0) throw ShapeError("grid needs x0 < x1, y0 < y1 and nx, ny >= 1");
  }
  std::size_t size() const noexcept { return nx * ny; }
  double dx() const noexcept { return (x1 - x0) / static_cast<double>(nx); }
  double dy() const noexcept { return (y1 - y0) / static_cast<double>(ny); }
  double cell_area() const noexcept { return dx() * dy(); }
  double x_center(std::size_t ix) const noexcept { return x0 + (static_cast<double>(ix) + 0.5) * dx(); }
  double y_center(std::size_t iy) const noexcept { return y0 + (static_cast<double>(iy) + 0.5) * dy(); }
  // Row-major: x index is the row, y index the column.
  std::size_t index(std::size_t ix, std::size_t iy) const noexcept { return ix * ny + iy; }

  bool operator==(const GridSpec&) const = default;
};

/// Scalar fields on a grid with the midpoint-rule L2 distance
/// sqrt(sum_cells area * (a - b)^2).
struct GridFieldSpace {
  using point_type = std::vector<double>;
  static constexpr PointKind kind = PointKind::GridField;

  GridSpec grid;

  void check(const point_type& v) const {
    if (v.size() != grid.size())
      throw ShapeError("field has " + std::to_string(v.size()) + " values, grid has " + std::to_string(grid.size()) +
                       " cells");
  }

  double distance(const point_type& a, const point_type& b) const {
    check(a);
    check(b);
    KahanSum s;
    for (std::size_t i = 0; i < a.size(); ++i) s.add((a[i] - b[i]) * (a[i] - b[i]));
    return std::sqrt(grid.cell_area() * s.value());
  }

  point_type midpoint(const point_type& a, const point_type& b) const {
    check(a);
    check(b);
    point_type m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = 0.5 * (a[i] + b[i]);
    return m;
  }
};

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw ShapeError("matrix data size does not match its shape");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  bool operator==(const Matrix&) const = default;
};

/// n x k matrices with the Frobenius distance sqrt(tr((A-B)^T (A-B))).
/// There is no midpoint: the space models embedded manifolds (e.g. Stiefel)
/// where the Euclidean midpoint leaves the manifold.
struct MatrixSpace {
  using point_type = Matrix;
  static constexpr PointKind kind = PointKind::Matrix;

  std::size_t rows = 1;
  std::size_t cols = 1;

  void check(const Matrix& a) const {
    if (a.rows != rows || a.cols != cols)
      throw ShapeError("expected a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix, got " +
                       std::to_string(a.rows) + "x" + std::to_string(a.cols));
  }

  double distance(const Matrix& a, const Matrix& b) const {
    check(a);
    check(b);
    // tr((A-B)^T (A-B)) = sum of squared entries
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    return std::sqrt(s);
  }
};

}  // namespace gms
