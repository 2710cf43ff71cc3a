#include <gtest/gtest.h>

#include "dchi/estimator.hpp"
#include "dchi/netgraph.hpp"
#include "dchi/sysmodel.hpp"

using namespace dchi;

namespace {

struct Bench {
  Mat a, w, h;
  GainSet gain;
};

Bench make_bench(std::uint64_t seed, double target_rho = 0.99) {
  GaussianSampler s(seed);
  Bench out;
  out.a = make_random_a(Digraph::cycle(3), 1.05, s);
  out.w = build_row_stochastic_w(Digraph::cycle(2), s);
  out.h = Mat{{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}};
  SynthesisOptions opt;
  opt.seed = seed;
  opt.target_rho = target_rho;
  opt.budget = 4000;
  out.gain = synthesize_gain(out.a, out.w, out.h, opt);
  return out;
}

Vec flatten(const std::vector<Vec>& v) {
  Vec out;
  for (const auto& x : v) out.insert(out.end(), x.begin(), x.end());
  return out;
}

}  // namespace

TEST(Fusion, WeightedNeighbourMix) {
  const Mat a{{2.0, 0.0}, {0.0, 1.0}};
  const Vec x1{1.0, 1.0}, x2{3.0, -1.0};
  const std::vector<NeighborEstimate> rx{{0.25, x1}, {0.75, x2}};
  const Vec prior = fuse_prior(a, rx);
  EXPECT_DOUBLE_EQ(prior[0], 2.0 * (0.25 + 2.25));
  EXPECT_DOUBLE_EQ(prior[1], 0.25 - 0.75);
}

TEST(Fusion, PredictMatchesKronForm) {
  const Bench s = make_bench(3);
  GaussianSampler g(1);
  EstimatorState st = EstimatorState::zeros(2, 3);
  for (auto& p : st.posteriors) p = g.standard_normal_vec(3);
  const Vec stacked = flatten(st.posteriors);
  predict(st, s.w, s.a);
  EXPECT_EQ(st.step, 1u);
  const Vec expect = kron(s.w, s.a) * stacked;
  const Vec got = flatten(st.priors);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-14);
}

TEST(Correction, InnovationUpdateAndResidual) {
  const Mat h{{0.0, 1.0}};
  GainSet g;
  g.blocks = {Mat{{0.0, 0.2}, {0.0, 0.6}}};
  EstimatorState st = EstimatorState::zeros(1, 2);
  st.priors[0] = {1.0, 2.0};
  const Vec y{3.0};
  correct(st, g, y, h);
  EXPECT_DOUBLE_EQ(st.posteriors[0][0], 1.0 + 0.2);
  EXPECT_DOUBLE_EQ(st.posteriors[0][1], 2.0 + 0.6);
  const auto r = residual(st, y, h);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].value, 3.0 - 2.6);
  // residual is (1 - own gain) times the innovation
  EXPECT_DOUBLE_EQ(r[0].value, (1.0 - 0.6) * 1.0);
}

TEST(ErrorRecursion, StackedFormMatchesPerSensorUpdates) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Bench s = make_bench(seed);
    const SocialSystem sys(s.a, Mat::identity(3) * 0.06, Digraph::cycle(3));
    const SensorSuite suite(s.h, {0.06, 0.06});
    const AttackSchedule atk({{1, 20, std::nullopt, 0.2, 0.5}});
    const Mat abar = assemble_abar(s.a, s.w, s.h, s.gain);
    const Mat k = assemble_k(s.gain.blocks);
    const Mat ikd = Mat::identity(6) - k * assemble_dh(s.h);
    const Mat kdb = k * assemble_dh_bar(s.h);

    GaussianSampler proc(seed, 1), noise(seed, 2), attack(seed, 3);
    Vec x{1.0, -0.5, 0.3};
    EstimatorState st = EstimatorState::zeros(2, 3);
    Vec e = stacked_error(x, st);
    for (std::size_t step = 1; step <= 60; ++step) {
      const Vec x_prev = x;
      x = step_truth(sys, x, proc);
      Vec nu(3);
      const Vec ax = s.a * x_prev;
      for (int p = 0; p < 3; ++p) nu[p] = x[p] - ax[p];
      const Vec y = measure(suite, atk, x, step, noise, attack);
      Vec disturbance(2);
      for (int i = 0; i < 2; ++i) disturbance[i] = y[i] - dot(s.h.row(i), x);
      predict(st, s.w, s.a);
      correct(st, s.gain, y, s.h);

      Vec ones_nu;
      for (int i = 0; i < 2; ++i) ones_nu.insert(ones_nu.end(), nu.begin(), nu.end());
      const Vec drive = ikd * ones_nu;
      const Vec meas = kdb * disturbance;
      Vec next = abar * e;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += drive[i] - meas[i];
      e = next;
      const Vec direct = stacked_error(x, st);
      for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(e[i], direct[i], 1e-10);
    }
  }
}

TEST(Convergence, NoiseFreeErrorDecays) {
  const Bench s = make_bench(2, 0.0);
  ASSERT_LT(s.gain.achieved_rho, 0.95);
  const SocialSystem sys(s.a, Mat(3, 3), Digraph::cycle(3));
  GaussianSampler g(5);
  Vec x{1.0, 2.0, -1.0};
  EstimatorState st = EstimatorState::zeros(2, 3);
  const double e0 = norm2(stacked_error(x, st));
  for (int k = 0; k < 400; ++k) {
    x = step_truth(sys, x, g);
    Vec y(2);
    for (int i = 0; i < 2; ++i) y[i] = dot(s.h.row(i), x);
    predict(st, s.w, s.a);
    correct(st, s.gain, y, s.h);
  }
  EXPECT_LT(norm2(stacked_error(x, st)), 1e-6 * e0);
}

TEST(Metrics, MseAndErrorTrace) {
  EstimatorState st = EstimatorState::zeros(2, 2);
  st.posteriors[0] = {1.0, 1.0};
  st.posteriors[1] = {0.0, 2.0};
  const Vec truth{1.0, 0.0};
  const Vec mse = mse_per_sensor(truth, st);
  EXPECT_DOUBLE_EQ(mse[0], 0.5);
  EXPECT_DOUBLE_EQ(mse[1], 2.5);
  const auto trace = error_trace({truth, truth}, {st, st});
  EXPECT_EQ(trace.size(), 2u);
  EXPECT_THROW(error_trace({truth}, {st, st}), std::invalid_argument);
}

TEST(Shapes, MismatchesThrow) {
  EstimatorState st = EstimatorState::zeros(2, 2);
  EXPECT_THROW(predict(st, Mat::identity(3), Mat::identity(2)), std::invalid_argument);
  GainSet g;
  g.blocks = {Mat::identity(2)};
  const Vec y{0.0, 0.0};
  EXPECT_THROW(correct(st, g, y, Mat{{1.0, 0.0}, {0.0, 1.0}}), std::invalid_argument);
}
