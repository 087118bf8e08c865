// The search loop with a user-supplied reward. Here the "accuracy" is the
// fraction of sampled ops with no geometric element, so the policy should move
// its mass onto photometric pairs within a few hundred iterations.

#include <iostream>

#include "awsaug/search.hpp"

using namespace awsaug;

int main() {
  SearchConfig cfg;
  cfg.t_max = 200;
  cfg.seed = 1;

  const PolicyEvaluator reward = [](const PolicyParams& p, int, Rng& rng) {
    const OpSampler sampler(p);
    EvalResult r{0.0, OpCounts(p.size())};
    int hits = 0;
    for (int i = 0; i < 64; ++i) {
      const auto id = sampler.sample(rng);
      r.counts.add(id);
      const auto op = op_from_id(static_cast<int>(id));
      hits += !is_geometric(op.first.kind) && !is_geometric(op.second.kind);
    }
    r.acc = hits / 64.0;
    return r;
  };

  const auto state = run_search(cfg, reward, initial_search_state(cfg), [](SearchState& s) {
    if (s.iteration % 40 == 0)
      std::cout << "iter " << s.iteration << "  reward " << s.records.back().acc << "  entropy "
                << s.records.back().entropy << '\n';
  });
  std::cout << "top ops after search:\n";
  for (auto id : top_ops(state.policy, 5))
    std::cout << "  " << op_from_id(static_cast<int>(id)).name() << "  " << probabilities(state.policy)[id] << '\n';
}
