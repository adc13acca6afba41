#include "msp/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace msp {

ClassDistribution oracle_distribution(const OracleState& state) {
  if (state.free.empty())
    throw std::logic_error("oracle_distribution: free label multiset is empty");
  const int n = state.free.num_classes();
  const double total = static_cast<double>(state.free.cardinality());
  ClassDistribution probs(n);
  for (int c = 0; c < n; ++c) probs[c] = static_cast<double>(state.free.counts()[c]) / total;
  return probs;
}

double oracle_entropy_nats(const OracleState& state) {
  if (state.free.empty())
    throw std::logic_error("oracle_entropy_nats: free label multiset is empty");
  return std::log(static_cast<double>(state.free.cardinality()));
}

double shannon_entropy_nats(const ClassDistribution& probs) {
  double h = 0.0;
  for (int i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return h;
}

OracleState advance(const OracleState& state, int predicted) {
  return OracleState{state.free.remove_one(predicted), state.step + 1};
}

}  // namespace msp
