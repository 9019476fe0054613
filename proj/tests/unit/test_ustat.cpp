#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gms/models.hpp"
#include "gms/ustat.hpp"
#include "oracle.hpp"
#include "samples.hpp"

using namespace gms;
using testing_support::random_scalar;
using testing_support::random_vector;
using testing_support::to_oracle;

namespace {

using SP = SamplePair<double>;

const TestFamily<ScalarSpace> kSobol(FamilyKind::SobolValue, {});
const TestFamily<ScalarSpace> kCvm(FamilyKind::HalfSpaceCvM, {});

std::string oracle_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::SobolValue: return "sobol";
    case FamilyKind::HalfSpaceCvM: return "cvm";
    case FamilyKind::MetricBall: return "metric_ball";
    case FamilyKind::MidpointBall: return "midpoint_ball";
    case FamilyKind::IntersectionBall: return "intersection_ball";
  }
  return "";
}

template <class Space>
void expect_matches_oracle(const TestFamily<Space>& fam, const PairedSample<typename Space::point_type>& s) {
  const auto o = to_oracle(s);
  const std::string name = oracle_name(fam.kind());
  const auto fs = factorized_ustats(s, fam, false);
  const auto fs_generic = factorized_ustats(s, fam, false, Executor(), false);
  for (int j = 1; j <= 4; ++j) {
    const double want = oracle::ustat(j, name, o);
    const double exact = complete_ustat(j, s, fam, UStatMode::Exact);
    EXPECT_NEAR(exact, want, 1e-12) << name << " j=" << j << " N=" << s.size();
    EXPECT_NEAR(complete_ustat(j, s, fam, UStatMode::Factorized), exact, 1e-12) << name << " j=" << j;
    EXPECT_NEAR(fs.u[j - 1], exact, 1e-12) << name << " j=" << j;
    EXPECT_NEAR(fs_generic.u[j - 1], exact, 1e-12) << name << " j=" << j;
  }
}

}  // namespace

// --- kernels ---------------------------------------------------------------

TEST(Kernel, Orders) {
  EXPECT_EQ(kernel_order(1, 0), 1u);
  EXPECT_EQ(kernel_order(2, 0), 2u);
  EXPECT_EQ(kernel_order(3, 1), 2u);
  EXPECT_EQ(kernel_order(4, 2), 4u);
  const auto ks = kernel_set(kCvm);
  EXPECT_EQ(ks.orders, (std::array<std::size_t, 4>{2, 3, 2, 3}));
  EXPECT_THROW(kernel_order(0, 1), ArityError);
  EXPECT_THROW(kernel_order(5, 1), ArityError);
}

TEST(Kernel, CvmExample) {
  const SP t[2] = {{0.5, 0.9}, {0.3, 0.7}};
  EXPECT_EQ(kernel_phi(1, kCvm, std::span<const SP>(t)), 0.0);
  EXPECT_EQ(kernel_phi(3, kCvm, std::span<const SP>(t)), 1.0);
}

TEST(Kernel, SobolExample) {
  const SP t[1] = {{2.0, 3.0}};
  EXPECT_EQ(kernel_phi(1, kSobol, std::span<const SP>(t)), 6.0);
  EXPECT_EQ(kernel_phi(3, kSobol, std::span<const SP>(t)), 4.0);
}

TEST(Kernel, IndicatorPhi3Idempotent) {
  std::mt19937_64 g(1);
  std::normal_distribution<double> n;
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  for (int r = 0; r < 200; ++r) {
    const SP t2[2] = {{n(g), n(g)}, {n(g), n(g)}};
    const double v = kernel_phi(3, kCvm, std::span<const SP>(t2));
    EXPECT_EQ(v, v * v);
    const SP t3[3] = {{n(g), n(g)}, {n(g), n(g)}, {n(g), n(g)}};
    const double w = kernel_phi(3, ball, std::span<const SP>(t3));
    EXPECT_EQ(w, w * w);
  }
}

TEST(Kernel, ArityErrors) {
  const SP one[1] = {{1.0, 2.0}};
  EXPECT_THROW(kernel_phi(2, kSobol, std::span<const SP>(one)), ArityError);
  EXPECT_THROW(symmetrize(1, kCvm, std::span<const SP>(one)), ArityError);
}

TEST(Kernel, PhiMatchesOracleOnAllFamilies) {
  std::mt19937_64 g(2);
  std::normal_distribution<double> n;
  for (auto k : {FamilyKind::SobolValue, FamilyKind::HalfSpaceCvM, FamilyKind::MetricBall, FamilyKind::MidpointBall,
                 FamilyKind::IntersectionBall}) {
    const TestFamily<ScalarSpace> f(k, {});
    for (int j = 1; j <= 4; ++j) {
      const std::size_t M = kernel_order(j, f.order());
      for (int r = 0; r < 50; ++r) {
        std::vector<SP> t;
        std::vector<oracle::Pair> o;
        for (std::size_t q = 0; q < M; ++q) {
          const double a = n(g), b = n(g);
          t.push_back({a, b});
          o.push_back({{a}, {b}});
        }
        EXPECT_NEAR(kernel_phi(j, f, std::span<const SP>(t)), oracle::phi(j, oracle_name(k), o), 1e-15);
        EXPECT_NEAR(symmetrize(j, f, std::span<const SP>(t)), oracle::phi_sym(j, oracle_name(k), o), 1e-14);
      }
    }
  }
}

TEST(Symmetrize, SobolPhi2Example) {
  const SP t[2] = {{1.0, 2.0}, {3.0, 4.0}};
  EXPECT_DOUBLE_EQ(symmetrize(2, kSobol, std::span<const SP>(t)), 5.0);
}

TEST(Symmetrize, PermutationInvariant) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> n;
  const TestFamily<EuclideanSpace> ball(FamilyKind::IntersectionBall, EuclideanSpace{2});
  for (int r = 0; r < 30; ++r) {
    std::vector<SamplePair<std::vector<double>>> t;
    for (int q = 0; q < 4; ++q) t.push_back({{n(g), n(g)}, {n(g), n(g)}});
    for (int j = 1; j <= 4; ++j) {
      auto tj = std::vector(t.begin(), t.begin() + static_cast<long>(kernel_order(j, 2)));
      const double base = symmetrize(j, ball, std::span<const SamplePair<std::vector<double>>>(tj));
      for (int p = 0; p < 5; ++p) {
        std::shuffle(tj.begin(), tj.end(), g);
        EXPECT_NEAR(symmetrize(j, ball, std::span<const SamplePair<std::vector<double>>>(tj)), base, 1e-15);
      }
    }
  }
}

TEST(Symmetrize, IdenticalPairs) {
  const SP t[3] = {{0.7, 0.2}, {0.7, 0.2}, {0.7, 0.2}};
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  for (int j : {1, 3}) EXPECT_EQ(symmetrize(j, ball, std::span<const SP>(t)), kernel_phi(j, ball, std::span<const SP>(t)));
  const SP c[2] = {{0.7, 0.2}, {0.7, 0.2}};
  for (int j : {2, 4}) EXPECT_EQ(symmetrize(j, kSobol, std::span<const SP>(c)), kernel_phi(j, kSobol, std::span<const SP>(c)));
}

// --- psi -------------------------------------------------------------------

TEST(Psi, Examples) {
  EXPECT_EQ(psi(2, 1, 4, 2), 0.5);
  EXPECT_EQ(psi(3.3, 3.3, 4, 2), 0.0);
  EXPECT_THROW(psi(1, 0, 2, 2), DegenerateVarianceError);
  EXPECT_THROW(psi(1, 0, 1e6, 1e6 + 1e-7), DegenerateVarianceError);
  EXPECT_NO_THROW(psi(1, 0, 1e6, 1e6 + 1e-3));
}

// --- complete U-statistics --------------------------------------------------

TEST(CompleteUStat, SobolOracleSmallN) {
  for (std::size_t n = 5; n <= 8; ++n) expect_matches_oracle(kSobol, random_scalar(n, 100 + n));
}

TEST(CompleteUStat, CvmOracleSmallN) {
  for (std::size_t n = 5; n <= 8; ++n) {
    expect_matches_oracle(kCvm, random_scalar(n, 200 + n));
    expect_matches_oracle(kCvm, random_scalar(n, 300 + n, 3));  // ties
  }
}

TEST(CompleteUStat, VectorCvmOracle) {
  const TestFamily<EuclideanSpace> f(FamilyKind::HalfSpaceCvM, EuclideanSpace{2});
  for (std::size_t n = 5; n <= 8; ++n) {
    expect_matches_oracle(f, random_vector(n, 2, 400 + n));
    expect_matches_oracle(f, random_vector(n, 2, 500 + n, 2));
  }
}

TEST(CompleteUStat, BallFamiliesOracle) {
  for (auto k : {FamilyKind::MetricBall, FamilyKind::MidpointBall, FamilyKind::IntersectionBall}) {
    const TestFamily<EuclideanSpace> f(k, EuclideanSpace{2});
    for (std::size_t n = 5; n <= 8; ++n) {
      expect_matches_oracle(f, random_vector(n, 2, 600 + n));
      expect_matches_oracle(f, random_vector(n, 2, 700 + n, 2));
    }
  }
}

TEST(CompleteUStat, SingleTuple) {
  const auto s = random_scalar(3, 9);
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  std::vector<SP> t;
  for (std::size_t i = 0; i < 3; ++i) t.push_back({s.z[i], s.zu[i]});
  EXPECT_NEAR(complete_ustat(1, s, ball), symmetrize(1, ball, std::span<const SP>(t)), 1e-15);
  const auto s2 = random_scalar(2, 10);
  std::vector<SP> t2 = {{s2.z[0], s2.zu[0]}, {s2.z[1], s2.zu[1]}};
  EXPECT_NEAR(complete_ustat(2, s2, kSobol), symmetrize(2, kSobol, std::span<const SP>(t2)), 1e-15);
}

TEST(CompleteUStat, SobolClosedForms) {
  const auto s = random_scalar(6, 11);
  double sz = 0, szu = 0, szzu = 0, sz2 = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    sz += s.z[i];
    szu += s.zu[i];
    szzu += s.z[i] * s.zu[i];
    sz2 += s.z[i] * s.z[i];
  }
  EXPECT_NEAR(complete_ustat(1, s, kSobol), szzu / 6, 1e-12);
  EXPECT_NEAR(complete_ustat(2, s, kSobol), (sz * szu - szzu) / 30, 1e-12);
  EXPECT_NEAR(complete_ustat(3, s, kSobol), sz2 / 6, 1e-12);
  EXPECT_NEAR(complete_ustat(4, s, kSobol), (sz * sz - sz2) / 30, 1e-12);
}

TEST(CompleteUStat, Errors) {
  const auto s = random_scalar(60, 12);
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  EXPECT_THROW(complete_ustat(2, s, ball, UStatMode::Exact, Executor(), 1000), CapacityError);
  EXPECT_THROW(complete_ustat(4, random_scalar(3, 1), ball), ConfigError);
  EXPECT_THROW(complete_ustat(1, s, kSobol, UStatMode::Incomplete), ConfigError);
  auto bad = s;
  bad.zu.pop_back();
  EXPECT_THROW(complete_ustat(1, bad, kSobol), ShapeError);
}

TEST(CompleteUStat, FactorizedMatchesExactModerateN) {
  const auto s = random_scalar(40, 13);
  const auto v = random_vector(25, 2, 14);
  const TestFamily<EuclideanSpace> ball(FamilyKind::MetricBall, EuclideanSpace{2});
  const TestFamily<EuclideanSpace> cvm2(FamilyKind::HalfSpaceCvM, EuclideanSpace{2});
  for (int j = 1; j <= 4; ++j) {
    EXPECT_NEAR(complete_ustat(j, s, kCvm, UStatMode::Factorized), complete_ustat(j, s, kCvm, UStatMode::Exact), 1e-12);
    EXPECT_NEAR(complete_ustat(j, v, ball, UStatMode::Factorized), complete_ustat(j, v, ball, UStatMode::Exact), 1e-12);
    EXPECT_NEAR(complete_ustat(j, v, cvm2, UStatMode::Factorized), complete_ustat(j, v, cvm2, UStatMode::Exact), 1e-12);
  }
}

TEST(CompleteUStat, RankPathMatchesGeneric) {
  const auto s = random_scalar(300, 15, 40);  // heavy ties
  const auto a = factorized_ustats(s, kCvm, true);
  const auto b = factorized_ustats(s, kCvm, true, Executor(), false);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.u[j], b.u[j], 1e-12);
  EXPECT_NEAR(a.numerator, b.numerator, 1e-12);
  EXPECT_NEAR(a.denominator, b.denominator, 1e-12);
  ASSERT_EQ(a.projections.size(), b.projections.size());
  for (std::size_t i = 0; i < a.projections.size(); ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.projections[i][j], b.projections[i][j], 1e-12);
}

TEST(CompleteUStat, FactorizedProjectionsMatchOracle) {
  const auto s = random_scalar(7, 16, 4);
  const auto o = to_oracle(s);
  for (const auto* f : {&kSobol, &kCvm}) {
    const auto fs = factorized_ustats(s, *f, true, Executor(), false);
    for (std::size_t i = 0; i < 7; ++i)
      for (int j = 1; j <= 4; ++j)
        EXPECT_NEAR(fs.projections[i][j - 1], oracle::projection(j, oracle_name(f->kind()), o, i), 1e-12);
  }
  const TestFamily<EuclideanSpace> ball(FamilyKind::MidpointBall, EuclideanSpace{2});
  const auto v = random_vector(7, 2, 17);
  const auto ov = to_oracle(v);
  const auto fv = factorized_ustats(v, ball, true);
  for (std::size_t i = 0; i < 7; ++i)
    for (int j = 1; j <= 4; ++j) EXPECT_NEAR(fv.projections[i][j - 1], oracle::projection(j, "midpoint_ball", ov, i), 1e-12);
}

TEST(CompleteUStat, WorkerInvariant) {
  const auto s = random_scalar(3000, 18);
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  const auto v = random_scalar(30, 19);
  for (int j = 1; j <= 4; ++j) {
    EXPECT_EQ(complete_ustat(j, s, kCvm, UStatMode::Factorized, Executor(1)),
              complete_ustat(j, s, kCvm, UStatMode::Factorized, Executor(7)));
    EXPECT_EQ(complete_ustat(j, v, ball, UStatMode::Exact, Executor(1)),
              complete_ustat(j, v, ball, UStatMode::Exact, Executor(3)));
  }
}

// Expectation of the raw kernel equals that of the symmetrized kernel under
// i.i.d. pairs: exact enumeration over a three-point joint law.
TEST(CompleteUStat, RawAndSymmetrizedKernelsHaveEqualMeans) {
  const std::vector<SP> support = {{0.0, 1.0}, {1.0, 1.0}, {2.0, 0.5}};
  const std::vector<double> prob = {0.2, 0.5, 0.3};
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  for (const auto* f : {&kSobol, &kCvm, &ball}) {
    for (int j = 1; j <= 4; ++j) {
      const std::size_t M = kernel_order(j, f->order());
      std::size_t total = 1;
      for (std::size_t q = 0; q < M; ++q) total *= 3;
      double raw = 0.0, sym = 0.0;
      for (std::size_t code = 0; code < total; ++code) {
        std::vector<SP> t;
        double p = 1.0;
        for (std::size_t q = 0, c = code; q < M; ++q, c /= 3) {
          t.push_back(support[c % 3]);
          p *= prob[c % 3];
        }
        raw += p * kernel_phi(j, *f, std::span<const SP>(t));
        sym += p * symmetrize(j, *f, std::span<const SP>(t));
      }
      EXPECT_NEAR(raw, sym, 1e-14) << to_string(f->kind()) << " j=" << j;
    }
  }
}

// --- incomplete U-statistics ----------------------------------------------

TEST(IncompleteUStat, ExhaustiveEqualsComplete) {
  const auto s = random_scalar(8, 20);
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  for (int j = 1; j <= 4; ++j) {
    const auto r = incomplete_ustat(j, s, ball, 1000, 1);
    EXPECT_TRUE(r.exhaustive);
    EXPECT_NEAR(r.value, complete_ustat(j, s, ball), 1e-12);
  }
}

TEST(IncompleteUStat, Deterministic) {
  const auto s = random_vector(50, 2, 21);
  const TestFamily<EuclideanSpace> ball(FamilyKind::IntersectionBall, EuclideanSpace{2});
  const auto a = incomplete_ustat(4, s, ball, 20000, 5, Executor(1));
  const auto b = incomplete_ustat(4, s, ball, 20000, 5, Executor(6));
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_NE(a.value, incomplete_ustat(4, s, ball, 20000, 6).value);
}

TEST(IncompleteUStat, WithinThreeStandardErrorsOfExact) {
  const TestFamily<EuclideanSpace> ball(FamilyKind::MetricBall, EuclideanSpace{2});
  const auto s = random_vector(60, 2, 22);
  for (int j = 1; j <= 4; ++j) {
    const auto r = incomplete_ustat(j, s, ball, 20000, 7);
    EXPECT_FALSE(r.exhaustive);
    EXPECT_LE(std::abs(r.value - complete_ustat(j, s, ball)), 3.0 * r.std_error) << "j=" << j;
  }
}

TEST(IncompleteUStat, ToyCvmAgainstFactorized) {
  const auto s = pick_freeze(lognormal_model(), SubsetU({2}, 2), 2000, 31);
  const auto exact = factorized_ustats(s, kCvm, false);
  for (int j = 1; j <= 4; ++j) {
    const auto r = incomplete_ustat(j, s, kCvm, 1000000, 8);
    EXPECT_LE(std::abs(r.value - exact.u[j - 1]), 3.0 * r.std_error) << "j=" << j;
  }
}

TEST(IncompleteUStat, MeanOverSeedsIsUnbiased) {
  const TestFamily<EuclideanSpace> ball(FamilyKind::IntersectionBall, EuclideanSpace{2});
  const auto s = random_vector(12, 2, 23);
  for (int j = 1; j <= 4; ++j) {
    const double exact = complete_ustat(j, s, ball);
    std::vector<double> v;
    for (std::uint64_t seed = 0; seed < 500; ++seed) v.push_back(incomplete_ustat(j, s, ball, 12, seed).value);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 500.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double se = std::sqrt(ss / 499.0 / 500.0);
    EXPECT_LE(std::abs(mean - exact), 3.0 * se + 1e-14) << "j=" << j;
  }
}

// With distinct distances, each center a1 sees its other points at ranked
// distances; only the farthest choice of a2 covers the rest. Hence
// Phi_3^s = 1/2 and Phi_4^s = 1/3 on every tuple.
TEST(IncompleteUStat, MetricBallDenominatorIsDistributionFree) {
  const TestFamily<EuclideanSpace> ball(FamilyKind::MetricBall, EuclideanSpace{3});
  const auto s = random_vector(40, 3, 30);
  EXPECT_NEAR(complete_ustat(3, s, ball), 0.5, 1e-12);
  EXPECT_NEAR(complete_ustat(4, s, ball), 1.0 / 3.0, 1e-12);
  const auto r = incomplete_ustat(4, s, ball, 5000, 1);
  EXPECT_NEAR(r.value, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.std_error, 0.0, 1e-12);
}

TEST(IncompleteUStat, Errors) {
  const auto s = random_scalar(10, 24);
  EXPECT_THROW(incomplete_ustat(1, s, kSobol, 0, 1), ConfigError);
  EXPECT_THROW(incomplete_ustat(2, random_scalar(1, 1), kSobol, 10, 1), ConfigError);
}

// --- index estimate --------------------------------------------------------

TEST(EstimateIndex, ValueIsPsiOfComponents) {
  const TestFamily<EuclideanSpace> ball(FamilyKind::MetricBall, EuclideanSpace{2});
  const auto v = random_vector(30, 2, 25);
  UStatConfig inc;
  inc.mode = UStatMode::Incomplete;
  inc.tuple_budget = 5000;
  inc.seed = 4;
  for (auto cfg : {UStatConfig{}, inc}) {
    const auto e = estimate_gms_index(v, ball, cfg);
    const auto& c = e.components;
    EXPECT_EQ(e.value, psi(c[0], c[1], c[2], c[3]));
  }
  const auto s = random_scalar(200, 26);
  for (const auto* f : {&kSobol, &kCvm}) {
    const auto e = estimate_gms_index(s, *f);
    EXPECT_EQ(e.value, psi(e.components[0], e.components[1], e.components[2], e.components[3]));
    EXPECT_NEAR(e.numerator, e.components[0] - e.components[1], 1e-12);
    EXPECT_NEAR(e.denominator, e.components[2] - e.components[3], 1e-12);
  }
}

TEST(EstimateIndex, SobolComponentsClosedForm) {
  const auto s = random_scalar(1000, 27);
  KahanSum sz, szu, szzu, sz2;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sz.add(s.z[i]);
    szu.add(s.zu[i]);
    szzu.add(s.z[i] * s.zu[i]);
    sz2.add(s.z[i] * s.z[i]);
  }
  const double n = 1000.0;
  const auto e = estimate_gms_index(s, kSobol);
  EXPECT_NEAR(e.components[0], szzu.value() / n, 1e-12);
  EXPECT_NEAR(e.components[1], (sz.value() * szu.value() - szzu.value()) / (n * (n - 1)), 1e-12);
  EXPECT_NEAR(e.components[2], sz2.value() / n, 1e-12);
  EXPECT_NEAR(e.components[3], (sz.value() * sz.value() - sz2.value()) / (n * (n - 1)), 1e-12);
}

TEST(EstimateIndex, ExactAndFactorizedAgree) {
  const auto s = random_scalar(30, 28);
  UStatConfig ex;
  ex.mode = UStatMode::Exact;
  for (const auto* f : {&kSobol, &kCvm}) {
    const auto a = estimate_gms_index(s, *f, ex);
    const auto b = estimate_gms_index(s, *f);
    EXPECT_EQ(b.mode, UStatMode::Factorized);
    EXPECT_NEAR(a.value, b.value, 1e-12);
    EXPECT_NEAR(a.numerator, b.numerator, 1e-12);
    EXPECT_NEAR(a.denominator, b.denominator, 1e-12);
  }
}

TEST(EstimateIndex, ModeResolution) {
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  EXPECT_EQ(resolve_mode(kCvm, 5000, {}).mode, UStatMode::Factorized);
  const auto big = resolve_mode(ball, 5000, {});
  EXPECT_EQ(big.mode, UStatMode::Incomplete);
  EXPECT_EQ(big.tuple_budget, 1000000u);
  EXPECT_EQ(resolve_mode(ball, 20, {}).mode, UStatMode::Exact);  // C(20,4) < 1e6
  UStatConfig small;
  small.mode = UStatMode::Incomplete;
  small.tuple_budget = 10;
  EXPECT_THROW(small.validate(50), ConfigError);
  EXPECT_EQ(parse_ustat_mode("incomplete"), UStatMode::Incomplete);
  EXPECT_THROW(parse_ustat_mode("fast"), ConfigError);
}

TEST(EstimateIndex, ConstantOutputIsDegenerate) {
  const auto s = testing_support::scalar_sample(std::vector<double>(20, 3.0), std::vector<double>(20, 3.0));
  EXPECT_THROW(estimate_gms_index(s, kCvm), DegenerateVarianceError);
  EXPECT_THROW(estimate_gms_index(s, kSobol), DegenerateVarianceError);
}

TEST(EstimateIndex, FrozenEverythingIsOne) {
  const auto s = pick_freeze(lognormal_model(), SubsetU({1, 2}, 2), 500, 3);
  EXPECT_NEAR(estimate_gms_index(s, kSobol).value, 1.0, 1e-12);
  EXPECT_NEAR(estimate_gms_index(s, kCvm).value, 1.0, 1e-12);
}

TEST(EstimateIndex, IncompleteRecordsStandardErrors) {
  const TestFamily<EuclideanSpace> ball(FamilyKind::IntersectionBall, EuclideanSpace{2});
  const auto s = random_vector(200, 2, 29);
  UStatConfig cfg;
  cfg.mode = UStatMode::Incomplete;
  cfg.tuple_budget = 50000;
  cfg.seed = 3;
  const auto e = estimate_gms_index(s, ball, cfg);
  EXPECT_EQ(e.tuples, 50000u);
  EXPECT_GT(e.std_errors[0], 0.0);
  EXPECT_GT(e.std_errors[1], 0.0);
  EXPECT_GT(e.std_errors[3], 0.0);
  // only the longest side of a triangle spans the other vertex: Phi_3^s = 1/3
  EXPECT_EQ(e.std_errors[2], 0.0);
  EXPECT_NEAR(e.components[2], 1.0 / 3.0, 1e-15);
  const auto f = factorized_ustats(s, ball, false);
  for (int j = 0; j < 4; ++j) EXPECT_LE(std::abs(e.components[j] - f.u[j]), 3.0 * e.std_errors[j]);
  EXPECT_EQ(estimate_gms_index(s, ball, cfg, Executor(5)).value, e.value);
}

TEST(EstimateIndex, NeedsMPlusTwoRows) {
  const TestFamily<ScalarSpace> ball(FamilyKind::MetricBall, {});
  EXPECT_THROW(estimate_gms_index(random_scalar(3, 1), ball), ConfigError);
}
