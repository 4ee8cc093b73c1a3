#pragma once

#include <vector>

namespace storm {

// A proposed action with its prior weight.
template <class Action>
struct Candidate {
  Action action;
  double prior = 0.0;
};

template <class Action>
using CandidateList = std::vector<Candidate<Action>>;

}  // namespace storm
