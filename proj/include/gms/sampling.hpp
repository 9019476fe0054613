#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gms/error.hpp"
#include "gms/parallel.hpp"
#include "gms/rng.hpp"
#include "gms/stats.hpp"

namespace gms {

/// Scalar input law, sampled by inversion so that every draw is a pure
/// function of one counter-based uniform.
class Distribution {
 public:
  struct Uniform {
    double a, b;
  };
  struct StandardNormal {};
  struct ScaledUniform {
    double scale, a, b;  // scale * U(a, b)
  };
  struct Quantile {
    std::function<double(double)> fn;
    std::string name;
  };

  static Distribution uniform(double a, double b) {
    if (!(std::isfinite(a) && std::isfinite(b) && a < b))
      throw ConfigError("uniform(a,b) requires finite a < b, got a=" + fmt(a) + " b=" + fmt(b));
    return Distribution(Uniform{a, b});
  }
  static Distribution standard_normal() { return Distribution(StandardNormal{}); }
  static Distribution scaled_uniform(double scale, double a, double b) {
    if (!(std::isfinite(scale) && scale > 0.0))
      throw ConfigError("scaled uniform requires a finite positive scale");
    uniform(a, b);
    return Distribution(ScaledUniform{scale, a, b});
  }
  static Distribution from_quantile(std::function<double(double)> fn, std::string name = "custom") {
    if (!fn) throw ConfigError("custom distribution needs a quantile function");
    return Distribution(Quantile{std::move(fn), std::move(name)});
  }

  // p in (0,1)
  double quantile(double p) const {
    return std::visit(
        [p](const auto& d) -> double {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, Uniform>) {
            return d.a + (d.b - d.a) * p;
          } else if constexpr (std::is_same_v<D, StandardNormal>) {
            return normal_quantile(p);
          } else if constexpr (std::is_same_v<D, ScaledUniform>) {
            return d.scale * (d.a + (d.b - d.a) * p);
          } else {
            return d.fn(p);
          }
        },
        law_);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& d) -> std::string {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, Uniform>) {
            return "uniform(" + fmt(d.a) + "," + fmt(d.b) + ")";
          } else if constexpr (std::is_same_v<D, StandardNormal>) {
            return "normal(0,1)";
          } else if constexpr (std::is_same_v<D, ScaledUniform>) {
            return fmt(d.scale) + "*uniform(" + fmt(d.a) + "," + fmt(d.b) + ")";
          } else {
            return d.name;
          }
        },
        law_);
  }

 private:
  using Law = std::variant<Uniform, StandardNormal, ScaledUniform, Quantile>;
  explicit Distribution(Law law) : law_(std::move(law)) {}

  static std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  Law law_;
};

/// p mutually independent inputs (each a block of one or more scalar
/// coordinates) and a deterministic evaluator into the output space.
///
/// The evaluator may be called concurrently from several workers when the
/// sampling executor has more than one worker. A batch evaluator, when set,
/// takes precedence and receives all rows of a design at once (row-major).
template <class Point>
struct InputModel {
  using point_type = Point;
  using Evaluator = std::function<Point(std::span<const double>)>;
  using BatchEvaluator = std::function<std::vector<Point>(std::span<const double>, std::size_t)>;

  std::string name;
  std::vector<Distribution> coordinates;
  std::vector<std::size_t> block_sizes;  // empty: one coordinate per input
  std::vector<std::string> input_names;  // optional, one per input
  Evaluator f;
  BatchEvaluator batch;

  std::size_t inputs() const { return block_sizes.empty() ? coordinates.size() : block_sizes.size(); }
  std::size_t dimension() const { return coordinates.size(); }

  // [first, last) coordinate range of input i (0-based).
  std::pair<std::size_t, std::size_t> block(std::size_t i) const {
    if (block_sizes.empty()) return {i, i + 1};
    const std::size_t first = std::accumulate(block_sizes.begin(), block_sizes.begin() + i, std::size_t{0});
    return {first, first + block_sizes[i]};
  }

  std::string input_name(std::size_t i) const {
    return i < input_names.size() ? input_names[i] : "x" + std::to_string(i + 1);
  }

  void validate() const {
    if (coordinates.empty()) throw ConfigError("input model '" + name + "' needs at least one input");
    if (!f && !batch) throw ConfigError("input model '" + name + "' has no evaluator");
    if (!block_sizes.empty()) {
      const auto total = std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
      if (total != coordinates.size() || std::find(block_sizes.begin(), block_sizes.end(), 0u) != block_sizes.end())
        throw ConfigError("input blocks of '" + name + "' must be nonempty and cover every coordinate");
    }
    if (!input_names.empty() && input_names.size() != inputs())
      throw ConfigError("input model '" + name + "' has " + std::to_string(input_names.size()) +
                        " names for " + std::to_string(inputs()) + " inputs");
  }
};

/// Nonempty sorted subset of {1,...,p} (1-based, as in the usual notation).
class SubsetU {
 public:
  SubsetU(std::vector<std::size_t> indices, std::size_t p) : indices_(std::move(indices)), p_(p) {
    if (p_ == 0) throw ConfigError("subset: p must be >= 1");
    if (indices_.empty()) throw ConfigError("subset must be nonempty");
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
      throw ConfigError("subset " + label() + " has duplicate indices");
    if (indices_.front() < 1 || indices_.back() > p_)
      throw ConfigError("subset " + label() + " has indices outside 1.." + std::to_string(p_));
  }

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  std::size_t p() const noexcept { return p_; }
  bool contains(std::size_t one_based) const {
    return std::binary_search(indices_.begin(), indices_.end(), one_based);
  }
  bool is_full() const noexcept { return indices_.size() == p_; }

  // Complement {1..p} \ u; throws for u = {1..p}.
  SubsetU complement() const {
    std::vector<std::size_t> rest;
    for (std::size_t i = 1; i <= p_; ++i)
      if (!contains(i)) rest.push_back(i);
    if (rest.empty()) throw ConfigError("complement of the full subset is empty");
    return SubsetU(std::move(rest), p_);
  }

  std::string label() const {
    std::string s;
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (k) s += ' ';
      s += std::to_string(indices_[k]);
    }
    return s;
  }

  bool operator==(const SubsetU&) const = default;

 private:
  std::vector<std::size_t> indices_;
  std::size_t p_;
};

/// Row-major rows x cols matrix of input draws.
struct InputMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct InputDesign {
  InputMatrix x;        // X
  InputMatrix x_prime;  // independent copy X'
};

namespace detail {

inline constexpr std::uint64_t kStreamX = 0;
inline constexpr std::uint64_t kStreamXPrime = 1;
inline constexpr std::size_t kRowChunk = 256;

inline InputMatrix draw_matrix(const std::vector<Distribution>& dists, std::size_t n, std::uint64_t seed,
                               std::uint64_t stream) {
  InputMatrix m{n, dists.size(), std::vector<double>(n * dists.size())};
  const CounterRng rng(seed, stream);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) m.data[i * m.cols + j] = dists[j].quantile(rng.uniform_at(i * m.cols + j));
  return m;
}

}  // namespace detail

/// Draws X and X' (N x dimension each) from disjoint substreams of one seed.
template <class Point>
InputDesign sample_inputs(const InputModel<Point>& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_inputs: N must be >= 1");
  model.validate();
  return {detail::draw_matrix(model.coordinates, n, seed, detail::kStreamX),
          detail::draw_matrix(model.coordinates, n, seed, detail::kStreamXPrime)};
}

/// Pick-Freeze input matrix: coordinates of inputs in u come from X, the
/// others from X'.
template <class Point>
InputMatrix freeze(const InputModel<Point>& model, const InputDesign& design, const SubsetU& u) {
  InputMatrix out = design.x_prime;
  for (std::size_t input : u.indices()) {
    const auto [first, last] = model.block(input - 1);
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = first; j < last; ++j) out.data[i * out.cols + j] = design.x(i, j);
  }
  return out;
}

/// N rows (Z_i, Z_i^u) of one Pick-Freeze design.
template <class Point>
struct PairedSample {
  using point_type = Point;

  struct Design {
    std::string model;
    std::vector<std::size_t> subset;
    std::uint64_t seed = 0;
    std::size_t evaluations = 0;  // model calls spent building this sample
    std::vector<std::string> warnings;
  };

  std::vector<Point> z;
  std::vector<Point> zu;
  Design design;

  std::size_t size() const noexcept { return z.size(); }
};

/// Evaluates the model on every row of `inputs`. Evaluator failures are
/// rethrown as EvaluationError carrying the row index.
template <class Point>
std::vector<Point> evaluate_rows(const InputModel<Point>& model, const InputMatrix& inputs, const Executor& exec = Executor()) {
  if (model.batch) {
    std::vector<Point> out;
    try {
      out = model.batch(std::span<const double>(inputs.data), inputs.cols);
    } catch (const EvaluationError&) {
      throw;
    } catch (const std::exception& e) {
      throw EvaluationError(0, e.what());
    }
    if (out.size() != inputs.rows)
      throw EvaluationError(std::min(out.size(), inputs.rows),
                            "batch evaluator returned " + std::to_string(out.size()) + " rows for " +
                                std::to_string(inputs.rows) + " inputs");
    return out;
  }
  std::vector<Point> out(inputs.rows);
  exec.for_chunks(inputs.rows, detail::kRowChunk, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      try {
        out[i] = model.f(inputs.row(i));
      } catch (const std::exception& ex) {
        throw EvaluationError(i, ex.what());
      }
    }
  });
  return out;
}

/// Builds the paired sample for subset u with exactly 2N evaluator calls:
/// N on X and N on the frozen design X^u.
template <class Point>
PairedSample<Point> pick_freeze(const InputModel<Point>& model, const SubsetU& u, std::size_t n, std::uint64_t seed,
                                const Executor& exec = Executor()) {
  if (u.p() != model.inputs())
    throw ConfigError("subset is over p=" + std::to_string(u.p()) + " inputs but model '" + model.name + "' has " +
                      std::to_string(model.inputs()));
  const InputDesign design = sample_inputs(model, n, seed);
  PairedSample<Point> s;
  s.z = evaluate_rows(model, design.x, exec);
  s.zu = evaluate_rows(model, freeze(model, design, u), exec);
  s.design = {model.name, u.indices(), seed, 2 * n, {}};
  if (u.is_full()) s.design.warnings.push_back("subset u = {1..p}: every input frozen, index is 1 by construction");
  return s;
}

/// Shared-design variant: Z = f(X) is evaluated once and reused by every
/// subset, so the total cost is N * (1 + number of subsets) calls.
template <class Point>
std::vector<PairedSample<Point>> pick_freeze_shared(const InputModel<Point>& model, std::span<const SubsetU> subsets,
                                                    std::size_t n, std::uint64_t seed, const Executor& exec = Executor()) {
  for (const auto& u : subsets)
    if (u.p() != model.inputs()) throw ConfigError("subset/model input count mismatch");
  const InputDesign design = sample_inputs(model, n, seed);
  const std::vector<Point> z = evaluate_rows(model, design.x, exec);
  const std::size_t total = n * (1 + subsets.size());
  std::vector<PairedSample<Point>> out;
  out.reserve(subsets.size());
  for (const auto& u : subsets) {
    PairedSample<Point> s;
    s.z = z;
    s.zu = evaluate_rows(model, freeze(model, design, u), exec);
    s.design = {model.name, u.indices(), seed, total, {}};
    if (u.is_full()) s.design.warnings.push_back("subset u = {1..p}: every input frozen, index is 1 by construction");
    out.push_back(std::move(s));
  }
  return out;
}

/// Wraps the evaluator of `model` with a call counter.
template <class Point>
InputModel<Point> with_call_counter(InputModel<Point> model, std::shared_ptr<std::atomic<std::size_t>> counter) {
  if (model.batch) {
    auto inner = model.batch;
    model.batch = [inner, counter](std::span<const double> rows, std::size_t cols) {
      counter->fetch_add(cols == 0 ? 0 : rows.size() / cols);
      return inner(rows, cols);
    };
  }
  if (model.f) {
    auto inner = model.f;
    model.f = [inner, counter](std::span<const double> x) {
      counter->fetch_add(1);
      return inner(x);
    };
  }
  return model;
}

/// CSV export of a design: x1..xp, x1'..xp' (primes are the frozen design
/// X^u), followed by an opaque output reference column.
template <class Point>
void write_design_csv(std::ostream& os, const InputModel<Point>& model, const InputDesign& design, const SubsetU& u) {
  const InputMatrix xu = freeze(model, design, u);
  const std::size_t d = model.dimension();
  for (std::size_t j = 0; j < d; ++j) os << "x" << j + 1 << ',';
  for (std::size_t j = 0; j < d; ++j) os << "x" << j + 1 << "',";
  os << "output_ref\n";
  os.precision(17);
  for (std::size_t i = 0; i < design.x.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) os << design.x(i, j) << ',';
    for (std::size_t j = 0; j < d; ++j) os << xu(i, j) << ',';
    os << "row" << i << '\n';
  }
}

}  // namespace gms
