#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/candidates.hpp"
#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"

namespace storm::planner {

struct EdgeStats {
  int n = 0;
  double w = 0.0;
  double q = 0.0;
  double p = 0.0;
};

// Q + c * P * sqrt(parent_total_n) / (1 + N), with Q = 0 for unvisited edges.
inline double puct_score(const EdgeStats& e, int parent_total_n, double c_puct) {
  const double q = e.n > 0 ? e.q : 0.0;
  return q + c_puct * e.p * std::sqrt(static_cast<double>(parent_total_n)) / (1.0 + e.n);
}

template <class State>
struct Prediction {
  State next;
  double reward = 0.0;
};

template <class P, class State, class Action>
concept ProposalPolicy = requires(const P& p, const State& s, int k, Rng& rng) {
  { p.propose(s, k, rng) } -> std::convertible_to<CandidateList<Action>>;
};

template <class M, class State, class Action>
concept TransitionModel = requires(const M& m, const State& s, const Action& a) {
  { m.predict(s, a) } -> std::convertible_to<Prediction<State>>;
};

struct SearchParams {
  int n_sim = 8;
  int depth = 3;
  int k = 8;
  double gamma = 0.9;
  double c_puct = 1.0;
  bool discounted = true;
};

template <class State, class Action>
class SearchTree {
 public:
  struct Edge {
    Action action;
    EdgeStats stats;
    double reward = 0.0;
    int child = -1;  // -1 until the world model has been queried
  };

  struct Node {
    State state;
    int depth = 0;
    double reward_in = 0.0;
    bool expanded = false;
    int visits = 0;  // simulations that passed through as a non-leaf
    std::vector<Edge> edges;
  };

  // (node index, edge index) pairs from the root downwards.
  using Path = std::vector<std::pair<int, int>>;

  explicit SearchTree(State root) { nodes_.push_back(Node{std::move(root), 0, 0.0, false, 0, {}}); }

  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  const Node& root() const { return nodes_.front(); }
  int size() const { return static_cast<int>(nodes_.size()); }

  static int total_visits(const Node& n) {
    int s = 0;
    for (const auto& e : n.edges) s += e.stats.n;
    return s;
  }

  // Argmax PUCT; ties go to the higher prior, then the lower index.
  static int best_edge(const Node& n, double c_puct) {
    const int total = total_visits(n);
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n.edges.size(); ++i) {
      const double s = puct_score(n.edges[i].stats, total, c_puct);
      if (best < 0 || s > best_score ||
          (s == best_score && n.edges[i].stats.p > n.edges[static_cast<std::size_t>(best)].stats.p)) {
        best = static_cast<int>(i);
        best_score = s;
      }
    }
    return best;
  }

  void expand(int node_index, CandidateList<Action> candidates) {
    Node& n = node(node_index);
    if (n.expanded) throw UsageError("node is already expanded");
    if (candidates.empty()) throw UsageError("expansion needs at least one candidate");
    for (auto& c : candidates) n.edges.push_back(Edge{std::move(c.action), EdgeStats{0, 0.0, 0.0, c.prior}, 0.0, -1});
    n.expanded = true;
  }

  // Descends by PUCT while the current node is expanded and below the depth
  // cap, stopping at the first edge whose child is unevaluated. The returned
  // path may end at an unexpanded node (empty path or last edge evaluated);
  // `leaf` receives the node where descent stopped.
  Path select_path(double c_puct, int max_depth, int* leaf = nullptr) const {
    Path path;
    int cur = 0;
    while (node(cur).expanded && node(cur).depth < max_depth) {
      const int e = best_edge(node(cur), c_puct);
      path.emplace_back(cur, e);
      const int child = node(cur).edges[static_cast<std::size_t>(e)].child;
      if (child < 0) {
        cur = -1;
        break;
      }
      cur = child;
    }
    if (leaf) *leaf = cur;
    return path;
  }

  // Queries the model for the last edge of the path, stores the predicted
  // state as a new child node and returns V = predicted reward.
  template <class Model>
  double evaluate(const Path& path, const Model& model) {
    const auto [ni, ei] = path.back();
    if (node(ni).edges[static_cast<std::size_t>(ei)].child >= 0) throw UsageError("edge already evaluated");
    Prediction<State> pred = model.predict(node(ni).state, node(ni).edges[static_cast<std::size_t>(ei)].action);
    const int depth = node(ni).depth + 1;
    nodes_.push_back(Node{std::move(pred.next), depth, pred.reward, false, 0, {}});
    Edge& e = node(ni).edges[static_cast<std::size_t>(ei)];
    e.child = size() - 1;
    e.reward = pred.reward;
    return pred.reward;
  }

  // Edge j receives G_j = sum_{i=j}^{L-1} gamma^(i-j) r_i + gamma^(L-j) V,
  // using the stored edge rewards r_i; the undiscounted variant adds V to
  // every edge.
  void backpropagate(const Path& path, double leaf_value, double gamma, bool discounted = true) {
    if (path.empty()) throw UsageError("cannot back up an empty path");
    double g = leaf_value;
    for (std::size_t j = path.size(); j-- > 0;) {
      const auto [ni, ei] = path[j];
      Node& n = node(ni);
      Edge& e = n.edges[static_cast<std::size_t>(ei)];
      if (discounted && j + 1 < path.size()) g = e.reward + gamma * g;
      const double value = discounted ? g : leaf_value;
      e.stats.n += 1;
      e.stats.w += value;
      e.stats.q = e.stats.w / e.stats.n;
      n.visits += 1;
    }
  }

 private:
  std::vector<Node> nodes_;
};

struct SimulationTrace {
  int simulation = 0;
  std::vector<int> path;
  double value = 0.0;
  std::vector<int> n;
  std::vector<double> q;
};

template <class Action>
struct PlanResult {
  Action chosen;
  int chosen_index = 0;
  std::vector<int> visits;
  std::vector<double> q;
  std::vector<double> priors;
  std::vector<Action> candidates;
  int simulations = 0;
  std::vector<SimulationTrace> trace;
};

// Max visits, then max Q, then the lowest index.
template <class State, class Action>
int final_choice(const typename SearchTree<State, Action>::Node& root) {
  int best = 0;
  for (std::size_t i = 1; i < root.edges.size(); ++i) {
    const auto& a = root.edges[i].stats;
    const auto& b = root.edges[static_cast<std::size_t>(best)].stats;
    if (a.n > b.n || (a.n == b.n && a.q > b.q)) best = static_cast<int>(i);
  }
  return best;
}

// One simulation: select, expand the reached node if needed, evaluate one
// edge and back up. A path that ends on an already-evaluated edge into a
// depth-capped node re-uses that edge's stored reward as the leaf value.
template <class State, class Action, class Policy, class Model>
  requires ProposalPolicy<Policy, State, Action> && TransitionModel<Model, State, Action>
SimulationTrace simulate(SearchTree<State, Action>& tree, const Policy& policy, const Model& model,
                         const SearchParams& sp, Rng& rng) {
  int leaf = 0;
  auto path = tree.select_path(sp.c_puct, sp.depth, &leaf);
  double value = 0.0;
  if (leaf >= 0 && !tree.node(leaf).expanded && tree.node(leaf).depth < sp.depth) {
    tree.expand(leaf, policy.propose(tree.node(leaf).state, sp.k, rng));
    path.emplace_back(leaf, SearchTree<State, Action>::best_edge(tree.node(leaf), sp.c_puct));
  }
  if (path.empty()) throw UsageError("search depth must be at least 1");
  const auto [ni, ei] = path.back();
  const auto& edge = tree.node(ni).edges[static_cast<std::size_t>(ei)];
  value = edge.child < 0 ? tree.evaluate(path, model) : edge.reward;
  tree.backpropagate(path, value, sp.gamma, sp.discounted);

  SimulationTrace t;
  t.value = value;
  for (const auto& [n, e] : path) {
    t.path.push_back(e);
    t.n.push_back(tree.node(n).edges[static_cast<std::size_t>(e)].stats.n);
    t.q.push_back(tree.node(n).edges[static_cast<std::size_t>(e)].stats.q);
  }
  return t;
}

template <class State, class Action>
PlanResult<Action> summarize(const SearchTree<State, Action>& tree, std::vector<SimulationTrace> trace) {
  const auto& root = tree.root();
  const int best = final_choice<State, Action>(root);
  PlanResult<Action> r{root.edges[static_cast<std::size_t>(best)].action, best, {}, {}, {}, {}, 0, std::move(trace)};
  for (const auto& e : root.edges) {
    r.visits.push_back(e.stats.n);
    r.q.push_back(e.stats.q);
    r.priors.push_back(e.stats.p);
    r.candidates.push_back(e.action);
  }
  r.simulations = SearchTree<State, Action>::total_visits(root);
  return r;
}

// Fresh tree per call; exactly sp.n_sim simulations from `root`.
template <class State, class Action, class Policy, class Model>
  requires ProposalPolicy<Policy, State, Action> && TransitionModel<Model, State, Action>
PlanResult<Action> plan(const State& root, const Policy& policy, const Model& model, const SearchParams& sp, Rng& rng,
                        bool keep_trace = false) {
  if (sp.n_sim < 1) throw ValidationError("n_sim must be >= 1");
  if (sp.depth < 1) throw ValidationError("search depth must be >= 1");
  SearchTree<State, Action> tree(root);
  std::vector<SimulationTrace> trace;
  for (int s = 0; s < sp.n_sim; ++s) {
    SimulationTrace t = simulate(tree, policy, model, sp, rng);
    t.simulation = s;
    if (keep_trace) trace.push_back(std::move(t));
  }
  return summarize(tree, std::move(trace));
}

inline nlohmann::json trace_to_json(const SimulationTrace& t) {
  return {{"sim", t.simulation}, {"path", t.path}, {"value", t.value}, {"n", t.n}, {"q", t.q}};
}

// Exhaustive search over a deterministic candidate tree: returns the first
// action index of the path with the highest discounted return (ties to the
// lowest index), together with that return.
struct OracleResult {
  int first_action = 0;
  double value = 0.0;
};

template <class State, class Action, class Policy, class Model>
  requires ProposalPolicy<Policy, State, Action> && TransitionModel<Model, State, Action>
OracleResult brute_force_oracle(const State& root, const Policy& policy, const Model& model, int k, double gamma,
                                int depth) {
  if (depth < 1 || k < 1) throw ValidationError("oracle needs depth >= 1 and k >= 1");
  if (std::pow(static_cast<double>(k), depth) > 1e5) throw ValidationError("oracle tree exceeds 1e5 paths");
  Rng unused(0, "oracle");
  auto best_value = [&](auto&& self, const State& s, int d) -> OracleResult {
    const CandidateList<Action> cands = policy.propose(s, k, unused);
    OracleResult best{-1, -std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const Prediction<State> p = model.predict(s, cands[i].action);
      double v = p.reward;
      if (d > 1) v += gamma * self(self, p.next, d - 1).value;
      if (v > best.value) best = {static_cast<int>(i), v};
    }
    return best;
  };
  return best_value(best_value, root, depth);
}

}  // namespace storm::planner
