#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "gms/error.hpp"
#include "gms/inference.hpp"
#include "gms/sampling.hpp"
#include "gms/summation.hpp"
#include "gms/ustat.hpp"

namespace gms {

// Classical Pick-Freeze Sobol estimators on scalar paired samples.

namespace detail {

inline void check_scalar_sample(const PairedSample<double>& s) {
  if (s.z.size() != s.zu.size()) throw ShapeError("paired sample columns differ in length");
  if (s.size() < 2) throw ConfigError("Pick-Freeze Sobol estimators need N >= 2");
}

// Components (U1, (1-1/N^2) U2~, U3, (1-1/N^2) U4~) where the tilde terms keep
// the diagonal products.
inline std::array<double, 4> pf_components(const PairedSample<double>& s) {
  KahanSum sz, szu, szzu, sz2;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sz.add(s.z[i]);
    szu.add(s.zu[i]);
    szzu.add(s.z[i] * s.zu[i]);
    sz2.add(s.z[i] * s.z[i]);
  }
  const double n = static_cast<double>(s.size());
  const double shrink = 1.0 - 1.0 / (n * n);
  return {szzu.value() / n, shrink * (sz.value() * szu.value()) / (n * (n - 1.0)), sz2.value() / n,
          shrink * (sz.value() * sz.value()) / (n * (n - 1.0))};
}

// Components of the pooled estimator: (mean Z Z^u, m^2, pooled second moment, m^2)
// with m the mean over both columns.
inline std::array<double, 4> pf_efficient_components(const PairedSample<double>& s) {
  KahanSum sum, szzu, ssq;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sum.add(s.z[i] + s.zu[i]);
    szzu.add(s.z[i] * s.zu[i]);
    ssq.add(s.z[i] * s.z[i] + s.zu[i] * s.zu[i]);
  }
  const double n = static_cast<double>(s.size());
  const double mean = sum.value() / (2.0 * n);
  return {szzu.value() / n, mean * mean, ssq.value() / (2.0 * n), mean * mean};
}

// Delta-method variance of h(mean of w) from per-row vectors w_i.
template <std::size_t K, class RowFn>
double rowwise_delta_variance(std::size_t n, RowFn&& row, const std::array<double, K>& grad) {
  std::array<double, K> mean{};
  {
    std::array<KahanSum, K> acc;
    for (std::size_t i = 0; i < n; ++i) {
      const auto w = row(i);
      for (std::size_t k = 0; k < K; ++k) acc[k].add(w[k]);
    }
    for (std::size_t k = 0; k < K; ++k) mean[k] = acc[k].value() / static_cast<double>(n);
  }
  KahanSum var;
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = row(i);
    double lin = 0.0;
    for (std::size_t k = 0; k < K; ++k) lin += grad[k] * (w[k] - mean[k]);
    var.add(lin * lin);
  }
  return var.value() / static_cast<double>(n - 1);
}

}  // namespace detail

/// Classical Pick-Freeze estimator.
inline double sobol_pf(const PairedSample<double>& s) {
  detail::check_scalar_sample(s);
  const auto c = detail::pf_components(s);
  return psi(c[0], c[1], c[2], c[3]);
}

/// Pooled estimator: means and second moments use both columns, so it is
/// symmetric in (Z, Z^u).
inline double sobol_pf_efficient(const PairedSample<double>& s) {
  detail::check_scalar_sample(s);
  const auto c = detail::pf_efficient_components(s);
  return psi(c[0], c[1], c[2], c[3]);
}

/// sobol_pf with a delta-method interval on the row means (Z Z^u, Z, Z^u, Z^2).
inline IndexEstimate sobol_pf_estimate(const PairedSample<double>& s, double level = 0.95) {
  detail::check_scalar_sample(s);
  IndexEstimate est;
  est.components = detail::pf_components(s);
  const auto& c = est.components;
  est.value = psi(c[0], c[1], c[2], c[3]);
  est.numerator = c[0] - c[1];
  est.denominator = c[2] - c[3];
  est.n = s.size();
  est.method = "pf";
  const double n = static_cast<double>(s.size());
  KahanSum sz, szu;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sz.add(s.z[i]);
    szu.add(s.zu[i]);
  }
  const double mz = sz.value() / n, mzu = szu.value() / n;
  const double num = c[0] - mz * mzu, den = c[2] - mz * mz;
  if (!(std::abs(den) > 1e-12 * std::max(std::abs(c[2]), 1.0))) throw DegenerateVarianceError();
  const std::array<double, 4> grad = {1.0 / den, (-mzu * den + 2.0 * mz * num) / (den * den), -mz / den,
                                      -num / (den * den)};
  const double var = detail::rowwise_delta_variance<4>(
      s.size(), [&](std::size_t i) { return std::array<double, 4>{s.z[i] * s.zu[i], s.z[i], s.zu[i], s.z[i] * s.z[i]}; },
      grad);
  est.sigma = std::sqrt(std::max(var, 0.0));
  est.ci = confidence_interval(est.value, *est.sigma, s.size(), level);
  return est;
}

/// sobol_pf_efficient with a delta-method interval on the row means
/// (Z Z^u, (Z + Z^u)/2, (Z^2 + Z^u^2)/2).
inline IndexEstimate sobol_pf_efficient_estimate(const PairedSample<double>& s, double level = 0.95) {
  detail::check_scalar_sample(s);
  IndexEstimate est;
  est.components = detail::pf_efficient_components(s);
  const auto& c = est.components;
  est.value = psi(c[0], c[1], c[2], c[3]);
  est.numerator = c[0] - c[1];
  est.denominator = c[2] - c[3];
  est.n = s.size();
  est.method = "pf_efficient";
  KahanSum sum;
  for (std::size_t i = 0; i < s.size(); ++i) sum.add(s.z[i] + s.zu[i]);
  const double mean = sum.value() / (2.0 * static_cast<double>(s.size()));
  const double num = c[0] - c[1], den = c[2] - c[3];
  const std::array<double, 3> grad = {1.0 / den, 2.0 * mean * (num - den) / (den * den), -num / (den * den)};
  const double var = detail::rowwise_delta_variance<3>(
      s.size(),
      [&](std::size_t i) {
        return std::array<double, 3>{s.z[i] * s.zu[i], 0.5 * (s.z[i] + s.zu[i]),
                                     0.5 * (s.z[i] * s.z[i] + s.zu[i] * s.zu[i])};
      },
      grad);
  est.sigma = std::sqrt(std::max(var, 0.0));
  est.ci = confidence_interval(est.value, *est.sigma, s.size(), level);
  return est;
}

}  // namespace gms
