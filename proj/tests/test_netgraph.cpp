#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "dchi/gainsynth.hpp"
#include "dchi/netgraph.hpp"

using namespace dchi;

namespace {

// Reachability closure; two nodes share an SCC iff each reaches the other.
std::vector<std::vector<bool>> reach(const Digraph& g) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) r[i][i] = true;
  for (const auto& e : g.edges()) r[e.from][e.to] = true;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (r[i][k] && r[k][j]) r[i][j] = true;
  return r;
}

// Brute-force perfect matching search over permutations.
bool has_perfect_matching(const Digraph& g) {
  const std::size_t n = g.node_count();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  do {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) ok = g.has_edge(perm[i], i);
    if (ok) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

Digraph random_digraph(GaussianSampler& s, std::size_t n, double p) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (s.uniform() < p) e.push_back({i, j});
  return Digraph(n, e);
}

}  // namespace

TEST(Digraph, ValidatesEdges) {
  EXPECT_THROW(Digraph(2, {{0, 2}}), std::invalid_argument);
  EXPECT_THROW(Digraph(2, {{0, 1}, {0, 1}}), std::invalid_argument);
  EXPECT_THROW(Digraph(0, {}), std::invalid_argument);
}

TEST(Digraph, PatternConvention) {
  const Mat m{{1.0, 0.0}, {2.0, 0.0}};
  const Digraph g = Digraph::from_pattern(m);
  EXPECT_TRUE(g.has_edge(0, 0));
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_FALSE(g.has_edge(1, 0));
}

TEST(Digraph, EqualityIgnoresOrder) {
  EXPECT_EQ(Digraph(3, {{0, 1}, {1, 2}}), Digraph(3, {{1, 2}, {0, 1}}));
  EXPECT_FALSE(Digraph(3, {{0, 1}}) == Digraph(3, {{1, 0}}));
}

TEST(EdgeList, RoundTripAndComments) {
  std::istringstream in("# header\n0 1\n1 2  # trailing\n\n2 0\n");
  const Digraph g = read_edge_list(in);
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_EQ(g, Digraph::cycle(3));
  std::istringstream again(write_edge_list(g));
  EXPECT_EQ(read_edge_list(again), g);
}

TEST(EdgeList, MalformedLinesAreSchemaErrors) {
  std::istringstream one("0\n");
  EXPECT_THROW(read_edge_list(one), SchemaError);
  std::istringstream neg("0 -1\n");
  EXPECT_THROW(read_edge_list(neg), SchemaError);
  std::istringstream extra("0 1 2\n");
  EXPECT_THROW(read_edge_list(extra), SchemaError);
}

TEST(Scc, ThreeCycleIsOneComponent) {
  const auto comps = tarjan_scc(Digraph::cycle(3));
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].size(), 3u);
}

TEST(Scc, ChainHasSingletonComponents) {
  const auto comps = tarjan_scc(Digraph(4, {{0, 1}, {1, 2}, {2, 3}}));
  EXPECT_EQ(comps.size(), 4u);
}

TEST(Scc, MatchesReachabilityOracle) {
  GaussianSampler s(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 9;
    const Digraph g = random_digraph(s, n, 0.2);
    const auto r = reach(g);
    const auto comps = tarjan_scc(g);
    std::vector<std::size_t> comp_of(n, n);
    std::size_t covered = 0;
    for (std::size_t c = 0; c < comps.size(); ++c)
      for (std::size_t v : comps[c]) {
        EXPECT_EQ(comp_of[v], n) << "node in two components";
        comp_of[v] = c;
        ++covered;
      }
    EXPECT_EQ(covered, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(comp_of[i] == comp_of[j], r[i][j] && r[j][i]);
  }
}

TEST(FullRank, MatchesPermutationOracle) {
  GaussianSampler s(22);
  int full = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 6;
    const Digraph g = random_digraph(s, n, 0.3);
    const bool expect = has_perfect_matching(g);
    full += expect;
    EXPECT_EQ(is_structurally_full_rank(g), expect);
  }
  EXPECT_GT(full, 10);
  EXPECT_LT(full, 90);
}

TEST(FullRank, SelfLoopsAlwaysSuffice) {
  GaussianSampler s(23);
  for (int t = 0; t < 20; ++t) EXPECT_TRUE(is_structurally_full_rank(random_digraph(s, 7, 0.1).with_self_loops()));
}

TEST(SccCoverage, ChainNeedsTheSourceSensed) {
  // 0 -> 1 -> 2 with self-loops: three singleton SCCs.
  const Digraph g = Digraph(3, {{0, 1}, {1, 2}}).with_self_loops();
  const auto only_last = check_lemma1(g, SensingPattern{{2}});
  EXPECT_FALSE(only_last.satisfied);
  EXPECT_EQ(only_last.uncovered.size(), 2u);
  EXPECT_TRUE(check_lemma1(g, SensingPattern{{0, 1, 2}}).satisfied);
}

TEST(SccCoverage, CycleWithOneSensor) {
  EXPECT_TRUE(check_lemma1(Digraph::cycle(4).with_self_loops(), SensingPattern{{3}}).satisfied);
}

TEST(SccCoverage, StructurallyDeficientGraphIsInapplicable) {
  // Node 1 has no incoming edge, so no perfect matching exists.
  EXPECT_THROW(check_lemma1(Digraph(2, {{0, 0}, {1, 0}}), SensingPattern{{0}}), LemmaInapplicable);
}

TEST(SensorNetworkConnectivity, CycleVersusPath) {
  EXPECT_TRUE(check_lemma2(Digraph::cycle(5)));
  EXPECT_FALSE(check_lemma2(Digraph(3, {{0, 1}, {1, 2}})));
  EXPECT_TRUE(check_lemma2(Digraph(1, {})));
}

TEST(FusionWeights, RowStochasticOnPattern) {
  GaussianSampler s(24);
  const Digraph gn = Digraph::cycle(4);
  for (const Mat& w : {build_row_stochastic_w(gn), build_row_stochastic_w(gn, s)}) {
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        const bool edge = i == j || gn.has_edge(j, i);
        EXPECT_EQ(w(i, j) != 0.0, edge);
        EXPECT_GE(w(i, j), 0.0);
        sum += w(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-14);
    }
  }
  EXPECT_NEAR(build_row_stochastic_w(gn)(1, 0), 0.5, 1e-15);
}

TEST(Observability, ChainObservedFromTheEnd) {
  const Mat m{{0.0, 0.0}, {1.0, 0.0}};
  EXPECT_EQ(observability_rank(m, Mat{{0.0, 1.0}}), 2u);
  EXPECT_EQ(observability_rank(m, Mat{{1.0, 0.0}}), 1u);
}

TEST(Observability, RankMatchesStackedMatrixSvd) {
  GaussianSampler s(25);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 4;
    Mat m(n, n);
    for (auto& v : m.data()) v = s.uniform() < 0.4 ? s.standard_normal() : 0.0;
    Mat c(1, n);
    c(0, t % n) = 1.0;
    Mat stacked(n, n);
    Mat p = c;
    for (std::size_t k = 0; k < n; ++k) {
      stacked.set_block(k, 0, p);
      p = p * m;
    }
    EXPECT_EQ(observability_rank(m, c), numeric_rank(stacked));
  }
}

TEST(Observability, DistributedCycleWithSensedCycle) {
  GaussianSampler s(26);
  const Mat a = build_row_stochastic_w(Digraph::cycle(3), s) * 1.1;
  const Mat w = build_row_stochastic_w(Digraph::cycle(2), s);
  const Mat h{{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}};
  EXPECT_TRUE(verify_distributed_observability(a, w, assemble_dh(h)));
}

TEST(Observability, UpstreamSensorsCannotSeeDownstream) {
  // state 1 reads state 0; both sensors watch state 0 and never hear about 1
  const Mat a = Mat::identity(2) * 0.9 + Mat{{0.0, 0.0}, {0.5, 0.0}};
  const Mat w = Mat::identity(2);
  const Mat h{{1.0, 0.0}, {1.0, 0.0}};
  EXPECT_FALSE(verify_distributed_observability(a, w, assemble_dh(h)));
}

TEST(Observability, SizeCap) {
  const Mat a = Mat::identity(10), w = Mat::identity(7);
  EXPECT_THROW(verify_distributed_observability(a, w, Mat::identity(70)), InstanceTooLarge);
}
