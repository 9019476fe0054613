#pragma once

#include <cmath>

namespace gms {

// Compensated summation (Neumaier's variant of Kahan), also robust when an
// addend is larger than the running sum.
class KahanSum {
 public:
  constexpr KahanSum() = default;
  constexpr explicit KahanSum(double init) : sum_(init) {}

  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  void add(const KahanSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
  }

  KahanSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }

  constexpr double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace gms
