#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "storm/core/rng.hpp"
#include "storm/planner/episode.hpp"
#include "storm/planner/mcts.hpp"

using namespace storm;
using namespace storm::planner;

namespace {

// States are action paths; the tree is fully determined by `rewards`.
using PathState = std::vector<int>;
using Tree = SearchTree<PathState, int>;

struct StubPolicy {
  int k = 3;
  std::vector<double> priors;  // empty = uniform

  CandidateList<int> propose(const PathState&, int kk, Rng&) const {
    CandidateList<int> out;
    for (int a = 0; a < kk; ++a) out.push_back({a, priors.empty() ? 1.0 / kk : priors[static_cast<std::size_t>(a)]});
    return out;
  }
};

struct TableModel {
  std::function<double(const PathState&, int)> reward;

  Prediction<PathState> predict(const PathState& s, int a) const {
    PathState next = s;
    next.push_back(a);
    return {next, reward(s, a)};
  }
};

// Deterministic pseudo-random reward in [0, 1) per (instance, path, action).
TableModel random_tree(std::uint64_t instance) {
  return {[instance](const PathState& s, int a) {
    std::uint64_t h = detail::splitmix64(instance + 0x9e37);
    for (int x : s) h = detail::splitmix64(h ^ static_cast<std::uint64_t>(x + 1));
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(a + 101));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }};
}

SearchParams params(int n_sim, int depth, int k, double c = 1.0) {
  SearchParams sp;
  sp.n_sim = n_sim;
  sp.depth = depth;
  sp.k = k;
  sp.c_puct = c;
  return sp;
}

void check_conservation(const SearchTree<PathState, int>& tree, int sims) {
  EXPECT_EQ(Tree::total_visits(tree.root()), sims);
  for (int i = 0; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    EXPECT_EQ(Tree::total_visits(n), n.visits);
    for (const auto& e : n.edges) {
      if (e.stats.n > 0) {
        EXPECT_NEAR(e.stats.q, e.stats.w / e.stats.n, 1e-12);
      }
      if (e.child >= 0) {
        EXPECT_EQ(tree.node(e.child).depth, n.depth + 1);
      }
    }
  }
}

}  // namespace

TEST(Puct, Examples) {
  EXPECT_NEAR(puct_score({3, 1.5, 0.5, 0.2}, 10, 1.0), 0.5 + 0.2 * std::sqrt(10.0) / 4.0, 1e-12);
  EXPECT_NEAR(puct_score({3, 1.5, 0.5, 0.2}, 10, 1.0), 0.658114, 1e-6);
  EXPECT_EQ(puct_score({3, 1.5, 0.5, 0.2}, 10, 0.0), 0.5);
  EXPECT_EQ(puct_score({0, 0.0, 0.0, 0.9}, 0, 1.0), 0.0);
  EXPECT_EQ(puct_score({0, 0.0, 7.0, 0.9}, 4, 0.0), 0.0);  // Q convention for unvisited edges
}

TEST(Select, FreshRootTakesHighestPrior) {
  SearchTree<PathState, int> tree({});
  tree.expand(0, {{0, 0.2}, {1, 0.5}, {2, 0.3}});
  const auto path = tree.select_path(1.0, 3);
  ASSERT_EQ(path.size(), 1u);
  EXPECT_EQ(path[0].second, 1);
}

TEST(Select, PuctArithmeticDecides) {
  SearchTree<PathState, int> tree({});
  tree.expand(0, {{0, 0.1}, {1, 0.9}});
  auto& e0 = tree.node(0).edges[0].stats;
  e0.n = 10;
  e0.w = 10.0;
  e0.q = 1.0;
  // e0: 1 + 0.1 * sqrt(10) / 11 = 1.0287; e1: 0.9 * sqrt(10) = 2.846
  EXPECT_EQ(Tree::best_edge(tree.node(0), 1.0), 1);
  EXPECT_EQ(Tree::best_edge(tree.node(0), 0.3), 0);  // 1.0086 vs 0.8538
}

TEST(Select, StopsAtDepthCap) {
  SearchTree<PathState, int> tree({});
  const TableModel model = random_tree(1);
  tree.expand(0, {{0, 1.0}});
  tree.evaluate({{0, 0}}, model);
  tree.expand(1, {{0, 1.0}});
  tree.evaluate({{0, 0}, {1, 0}}, model);
  int leaf = -2;
  const auto path = tree.select_path(1.0, 1, &leaf);
  EXPECT_EQ(path.size(), 1u);
  EXPECT_EQ(leaf, 1);
  EXPECT_EQ(tree.select_path(1.0, 2).size(), 2u);
}

TEST(Expand, CreatesFreshChildren) {
  SearchTree<PathState, int> tree({});
  Rng rng = rng_stream(1, "x");
  tree.expand(0, StubPolicy{}.propose({}, 8, rng));
  double sum = 0.0;
  ASSERT_EQ(tree.root().edges.size(), 8u);
  for (const auto& e : tree.root().edges) {
    EXPECT_EQ(e.stats.n, 0);
    EXPECT_EQ(e.stats.q, 0.0);
    sum += e.stats.p;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_THROW(tree.expand(0, {{0, 1.0}}), UsageError);
  SearchTree<PathState, int> t2({});
  EXPECT_THROW(t2.expand(0, {}), UsageError);
  t2.expand(0, StubPolicy{}.propose({}, 1, rng));
  EXPECT_EQ(t2.root().edges[0].stats.p, 1.0);
}

TEST(Evaluate, StoresChildAndReturnsReward) {
  SearchTree<PathState, int> tree({});
  tree.expand(0, {{4, 1.0}});
  const TableModel stub{[](const PathState&, int) { return 0.7; }};
  EXPECT_EQ(tree.evaluate({{0, 0}}, stub), 0.7);
  const int child = tree.root().edges[0].child;
  ASSERT_GE(child, 0);
  EXPECT_EQ(tree.node(child).state, (PathState{4}));
  EXPECT_THROW(tree.evaluate({{0, 0}}, stub), UsageError);
}

TEST(Backpropagate, SingleEdgeExample) {
  SearchTree<PathState, int> tree({});
  tree.expand(0, {{0, 1.0}});
  auto& s = tree.node(0).edges[0].stats;
  s.n = 2;
  s.w = 1.0;
  s.q = 0.5;
  tree.backpropagate({{0, 0}}, 0.5, 0.9);
  EXPECT_EQ(s.n, 3);
  EXPECT_DOUBLE_EQ(s.w, 1.5);
  EXPECT_DOUBLE_EQ(s.q, 0.5);
}

TEST(Backpropagate, DiscountedTwoEdgePath) {
  SearchTree<PathState, int> tree({});
  tree.expand(0, {{0, 1.0}});
  tree.evaluate({{0, 0}}, TableModel{[](const PathState&, int) { return 0.0; }});
  tree.expand(1, {{0, 1.0}});
  tree.evaluate({{0, 0}, {1, 0}}, TableModel{[](const PathState&, int) { return 1.0; }});
  tree.backpropagate({{0, 0}, {1, 0}}, 1.0, 0.9);
  EXPECT_DOUBLE_EQ(tree.node(0).edges[0].stats.w, 0.9);
  EXPECT_DOUBLE_EQ(tree.node(1).edges[0].stats.w, 1.0);

  SearchTree<PathState, int> t0({});
  t0.expand(0, {{0, 1.0}});
  t0.evaluate({{0, 0}}, TableModel{[](const PathState&, int) { return 0.3; }});
  t0.expand(1, {{0, 1.0}});
  t0.evaluate({{0, 0}, {1, 0}}, TableModel{[](const PathState&, int) { return 1.0; }});
  t0.backpropagate({{0, 0}, {1, 0}}, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(t0.node(0).edges[0].stats.w, 0.3);

  SearchTree<PathState, int> tu({});
  tu.expand(0, {{0, 1.0}});
  tu.evaluate({{0, 0}}, TableModel{[](const PathState&, int) { return 0.3; }});
  tu.expand(1, {{0, 1.0}});
  tu.evaluate({{0, 0}, {1, 0}}, TableModel{[](const PathState&, int) { return 1.0; }});
  tu.backpropagate({{0, 0}, {1, 0}}, 1.0, 0.9, false);
  EXPECT_DOUBLE_EQ(tu.node(0).edges[0].stats.w, 1.0);
  EXPECT_THROW(tu.backpropagate({}, 1.0, 0.9), UsageError);
}

TEST(Plan, SingleSimulation) {
  Rng rng = rng_stream(1, "plan");
  const auto r = plan<PathState, int>({}, StubPolicy{}, random_tree(2), params(1, 3, 3), rng);
  int visited = 0;
  for (int n : r.visits) visited += n;
  EXPECT_EQ(visited, 1);
  EXPECT_EQ(r.visits.size(), 3u);
  EXPECT_EQ(r.simulations, 1);
}

TEST(Plan, BanditHandSimulation) {
  const TableModel model{[](const PathState&, int a) { return a == 2 ? 0.9 : 0.1; }};
  Rng rng = rng_stream(1, "plan");
  const auto r = plan<PathState, int>({}, StubPolicy{}, model, params(8, 1, 4), rng, true);
  EXPECT_EQ(r.chosen, 2);
  EXPECT_EQ(r.visits, (std::vector<int>{1, 1, 6, 0}));
  ASSERT_EQ(r.trace.size(), 8u);
  EXPECT_EQ(r.trace[0].path, (std::vector<int>{0}));
  EXPECT_EQ(r.trace[2].path, (std::vector<int>{2}));
  EXPECT_EQ(trace_to_json(r.trace[2])["value"], 0.9);
}

TEST(Plan, RejectsBadParams) {
  Rng rng = rng_stream(1, "plan");
  EXPECT_THROW((plan<PathState, int>({}, StubPolicy{}, random_tree(1), params(0, 3, 3), rng)), ValidationError);
  EXPECT_THROW((plan<PathState, int>({}, StubPolicy{}, random_tree(1), params(8, 0, 3), rng)), ValidationError);
}

TEST(FinalChoice, TiesByQThenIndex) {
  SearchTree<PathState, int> tree({});
  tree.expand(0, {{0, 0.3}, {1, 0.3}, {2, 0.4}});
  auto& e = tree.node(0).edges;
  e[0].stats = {2, 1.0, 0.5, 0.3};
  e[1].stats = {2, 1.2, 0.6, 0.3};
  e[2].stats = {1, 5.0, 5.0, 0.4};
  EXPECT_EQ((final_choice<PathState, int>(tree.root())), 1);
  e[1].stats.q = 0.5;
  EXPECT_EQ((final_choice<PathState, int>(tree.root())), 0);
}

TEST(Oracle, DepthOneIsArgmax) {
  const TableModel model{[](const PathState&, int a) { return std::vector<double>{0.2, 0.8, 0.5}[a]; }};
  const auto o = brute_force_oracle<PathState, int>({}, StubPolicy{}, model, 3, 0.9, 1);
  EXPECT_EQ(o.first_action, 1);
  EXPECT_DOUBLE_EQ(o.value, 0.8);
}

TEST(Oracle, HandTableDepthThree) {
  // Greedy prefers action 0 (1.0 now, nothing later); action 1 pays 2.0 on
  // each later step: 0 + 0.9 * 2 + 0.81 * 2 = 3.42; action 2: 0.5 + 2.565.
  const TableModel model{[](const PathState& s, int a) {
    if (s.empty()) return std::vector<double>{1.0, 0.0, 0.5}[a];
    if (s[0] == 1) return a == 0 ? 2.0 : 0.0;
    if (s[0] == 2) return a == 2 ? 1.5 : 0.0;
    return 0.0;
  }};
  const auto o = brute_force_oracle<PathState, int>({}, StubPolicy{}, model, 3, 0.9, 3);
  EXPECT_EQ(o.first_action, 1);
  EXPECT_NEAR(o.value, 3.42, 1e-12);
  EXPECT_THROW((brute_force_oracle<PathState, int>({}, StubPolicy{}, model, 10, 0.9, 6)), ValidationError);
}

// Path returns here span roughly [0, 2.7], so the exploration constant is
// scaled to that range; with c = 1 the mean backup needs far more simulations.
int oracle_agreement(double c_puct, int n_sim) {
  int agree = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const TableModel model = random_tree(static_cast<std::uint64_t>(inst));
    const auto o = brute_force_oracle<PathState, int>({}, StubPolicy{}, model, 3, 0.9, 3);
    Rng rng = rng_stream(static_cast<std::uint64_t>(inst), "oracle-plan");
    const auto r = plan<PathState, int>({}, StubPolicy{}, model, params(n_sim, 3, 3, c_puct), rng);
    agree += r.chosen_index == o.first_action;
  }
  return agree;
}

TEST(Oracle, PlanAgreesOnRandomTrees) {
  EXPECT_GE(oracle_agreement(2.0, 200), 19);
  EXPECT_GE(oracle_agreement(1.0, 20000), 19);
}

TEST(Invariants, VisitConservationAndQBounds) {
  for (int inst = 0; inst < 10; ++inst) {
    const TableModel model = random_tree(100 + static_cast<std::uint64_t>(inst));
    SearchTree<PathState, int> tree({});
    Rng rng = rng_stream(static_cast<std::uint64_t>(inst), "conservation");
    const SearchParams sp = params(60, 3, 3, 2.0);
    for (int s = 1; s <= sp.n_sim; ++s) {
      simulate(tree, StubPolicy{}, model, sp, rng);
      check_conservation(tree, s);
    }
    for (int i = 0; i < tree.size(); ++i) {
      for (const auto& e : tree.node(i).edges) {
        EXPECT_GE(e.stats.q, 0.0 - 1e-12);
        EXPECT_LE(e.stats.q, 1.0 / (1.0 - sp.gamma) + 1e-12);
      }
    }
  }
}

TEST(Invariants, PriorScalingDoesNotChangeSelection) {
  Rng rng = rng_stream(3, "scale");
  for (int trial = 0; trial < 200; ++trial) {
    SearchTree<PathState, int> a({}), b({});
    std::vector<double> raw(5);
    for (double& x : raw) x = rng.uniform(0.01, 1.0);
    const double scale = rng.uniform(0.1, 50.0);
    auto normalized = [&](double c) {
      double sum = 0.0;
      for (double x : raw) sum += c * x;
      CandidateList<int> out;
      for (int i = 0; i < 5; ++i) out.push_back({i, c * raw[static_cast<std::size_t>(i)] / sum});
      return out;
    };
    a.expand(0, normalized(1.0));
    b.expand(0, normalized(scale));
    for (int i = 0; i < 5; ++i) {
      const int n = rng.uniform_int(4);
      const double q = rng.uniform();
      a.node(0).edges[static_cast<std::size_t>(i)].stats = {n, q * n, n ? q : 0.0, a.root().edges[i].stats.p};
      b.node(0).edges[static_cast<std::size_t>(i)].stats = {n, q * n, n ? q : 0.0, b.root().edges[i].stats.p};
    }
    EXPECT_EQ(Tree::best_edge(a.root(), 1.0), Tree::best_edge(b.root(), 1.0));
  }
}

// Three-step bandit: the exact model is the environment. The reactive arm
// executes the first sample; the search draws its candidates from the same
// stream, so that sample is always among them.
TEST(Invariants, SearchNeverWorseThanReactiveOnStubBandit) {
  struct ArmPolicy {
    CandidateList<int> propose(const int&, int k, Rng& rng) const {
      CandidateList<int> out;
      for (int i = 0; i < k; ++i) out.push_back({rng.uniform_int(8), 1.0 / k});
      return out;
    }
  };
  for (int seed = 0; seed < 50; ++seed) {
    auto reward = [seed](int step, int arm) {
      return static_cast<double>(detail::splitmix64(static_cast<std::uint64_t>(seed * 100 + step * 10 + arm)) >> 11) *
             0x1.0p-53;
    };
    struct BanditModel {
      std::function<double(int, int)> r;
      Prediction<int> predict(const int& step, const int& arm) const { return {step + 1, r(step, arm)}; }
    };
    const BanditModel model{reward};
    double storm = 0.0, reactive = 0.0;
    for (int step = 0; step < 3; ++step) {
      Rng a = rng_stream(static_cast<std::uint64_t>(seed * 10 + step), "bandit");
      Rng b = rng_stream(static_cast<std::uint64_t>(seed * 10 + step), "bandit");
      const int sampled = ArmPolicy{}.propose(step, 1, a).front().action;
      SearchParams sp = params(8, 1, 8);
      const auto r = plan<int, int>(step, ArmPolicy{}, model, sp, b);
      reactive += std::pow(0.9, step) * reward(step, sampled);
      storm += std::pow(0.9, step) * reward(step, r.chosen);
    }
    EXPECT_GE(storm, reactive - 1e-12) << "seed " << seed;
  }
}

TEST(Episode, ReactiveModeExecutesSamplesAndIsDeterministic) {
  Rng init = rng_stream(1, "policy-init");
  const policy::DiffusionPolicy pol(policy::NoiseSchedule::linear(5, 1e-3, 0.3), 9, 4, {8}, init);
  const PolicyProposer prop{&pol, PriorMode::kUniform};
  env::TaskSpec spec;
  spec.max_steps = 5;
  const EnvModel model{spec};
  Rng r1 = rng_stream(2, "ep"), r2 = rng_stream(2, "ep");
  const auto ep = run_episode(env::reset(spec), prop, model, SearchParams{}, Mode::kReactive, r1);
  env::WorldState s = env::reset(spec);
  ASSERT_EQ(ep.trajectory.steps.size(), 5u);
  for (const auto& st : ep.trajectory.steps) {
    const ActionChunk a = pol.sample(env::observe(s), r2);
    EXPECT_EQ(st.action, a);
    s = env::step(s, a).state;
  }
  Rng r3 = rng_stream(3, "ep"), r4 = rng_stream(3, "ep");
  const auto s1 = run_episode(env::reset(spec), prop, model, SearchParams{}, Mode::kStorm, r3, true);
  const auto s2 = run_episode(env::reset(spec), prop, model, SearchParams{}, Mode::kStorm, r4, true);
  EXPECT_EQ(s1.trajectory, s2.trajectory);
  EXPECT_EQ(s1.plans.size(), s1.trajectory.steps.size());
  for (std::size_t i = 0; i + 1 < s1.trajectory.steps.size(); ++i) EXPECT_FALSE(s1.trajectory.steps[i].done);
  EXPECT_TRUE(s1.trajectory.steps.back().done);
}

TEST(Episode, ModeNames) {
  EXPECT_EQ(mode_from_name("storm"), Mode::kStorm);
  EXPECT_EQ(mode_from_name("reactive"), Mode::kReactive);
  EXPECT_THROW(mode_from_name("greedy"), ValidationError);
}
