#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "awsaug/augment.hpp"
#include "awsaug/data.hpp"
#include "awsaug/error.hpp"
#include "awsaug/model.hpp"
#include "awsaug/optim.hpp"
#include "awsaug/parallel.hpp"
#include "awsaug/policy.hpp"
#include "awsaug/rng.hpp"

namespace awsaug {

enum class Proxy { AF, NF, IT, AV };

inline constexpr Proxy kAllProxies[4] = {Proxy::AF, Proxy::NF, Proxy::IT, Proxy::AV};

inline const char* proxy_name(Proxy p) {
  switch (p) {
    case Proxy::AF: return "P_AF";
    case Proxy::NF: return "P_NF";
    case Proxy::IT: return "P_IT";
    case Proxy::AV: return "P_AV";
  }
  return "?";
}

inline Proxy parse_proxy(const std::string& s) {
  for (auto p : kAllProxies)
    if (s == proxy_name(p) || s == std::string(proxy_name(p)).substr(2)) return p;
  throw UserError("unknown proxy: " + s);
}

// How the shared weights of a proxy are obtained.
enum class SharedMode { Uniform, None, RandomInit };

inline SharedMode shared_mode_for(Proxy p) {
  switch (p) {
    case Proxy::NF: return SharedMode::None;
    case Proxy::IT: return SharedMode::RandomInit;
    default: return SharedMode::Uniform;
  }
}

// Learning rate of the fine-tuning stage. Handoff keeps the cosine value
// reached at the end of the shared stage constant; ContinueCosine finishes
// the cosine; Constant uses SearchConfig::finetune_lr.
enum class FinetuneSchedule { Handoff, ContinueCosine, Constant };

struct SearchConfig {
  int n_early = 20;
  int n_late = 3;
  int t_max = 200;
  Proxy proxy = Proxy::AF;
  PpoConfig ppo;
  double lr_theta = 0.1;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double theta_init = kDefaultThetaInit;
  TrainConfig train;  // train.epochs is ignored; the horizon is n_early + n_late
  PreprocessConfig preprocess;
  GeometryConfig geometry;
  FinetuneSchedule finetune = FinetuneSchedule::Handoff;
  double finetune_lr = 0.01;
  // Fine-tuning reuses one data-order/pre-processing stream in every
  // evaluation, so rewards differ only through the sampled operations.
  bool common_random_numbers = true;
  std::string arch;  // empty: toy network sized from the data
  std::uint64_t seed = 0;

  int total_epochs() const { return n_early + n_late; }
};

struct SearchData {
  Dataset train;
  Dataset val;
};

// RNG streams; every random decision is keyed by (seed, stream, index).
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShared = 2;
inline constexpr std::uint64_t kSearch = 3;
inline constexpr std::uint64_t kFull = 4;
inline constexpr std::uint64_t kProxy = 5;
inline constexpr std::uint64_t kPolicies = 6;
inline constexpr std::uint64_t kSchedule = 7;
inline constexpr std::uint64_t kAblate = 8;
inline constexpr std::uint64_t kScheduleInit = 9;
inline constexpr std::uint64_t kFinetune = 10;
}  // namespace stream

inline void validate(const SearchConfig& cfg) {
  validate(cfg.train);
  if (cfg.n_early < 0 || cfg.n_late < 0) throw UserError("epoch counts must be non-negative");
  if (cfg.t_max < 1) throw UserError("t_max must be at least 1");
  if (cfg.ppo.clip <= 0.0 || cfg.ppo.surrogate_epochs < 1) throw UserError("invalid ppo configuration");
  if (cfg.lr_theta < 0.0 || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw UserError("invalid Adam configuration");
  if (!std::isfinite(cfg.theta_init)) throw UserError("theta_init must be finite");
  if (cfg.finetune_lr < 0.0) throw UserError("finetune_lr must be non-negative");
}

inline Arch resolve_arch(const SearchConfig& cfg, const Dataset& d) {
  if (!cfg.arch.empty()) return Arch::parse(cfg.arch);
  if (d.empty()) throw UserError("cannot size the network from an empty dataset");
  const auto& img = d.images.front();
  if (img.height != img.width) throw UserError("toy network expects square images");
  return Arch::toy(img.channels, img.height, d.n_classes);
}

inline TrainConfig horizon_config(const SearchConfig& cfg) {
  TrainConfig tc = cfg.train;
  tc.epochs = cfg.total_epochs();
  return tc;
}

// `epochs` passes over `train`; operations come from `policy` when given.
inline void train_epochs(TrainState& st, const Dataset& train, const PolicyParams* policy, int epochs,
                         const TrainConfig& tc, const SearchConfig& cfg, Rng& rng,
                         OpCounts* counts = nullptr, Rng* op_rng = nullptr) {
  std::optional<OpSampler> sampler;
  if (policy != nullptr) sampler.emplace(*policy);
  const AugmentSource src{sampler ? &*sampler : nullptr, counts, op_rng};
  for (int e = 0; e < epochs; ++e) train_epoch(st, train, src, tc, cfg.preprocess, rng, cfg.geometry);
}

// Shared weights: the first n_early epochs of the full cosine schedule with
// every image augmented by a uniformly drawn operation (or none).
inline ModelState train_shared(const SearchConfig& cfg, const Dataset& train, SharedMode mode) {
  validate(cfg);
  const Arch arch = resolve_arch(cfg, train);
  ModelState init = init_model(arch, stream_seed(cfg.seed, stream::kInit));
  if (mode == SharedMode::RandomInit) return init;
  if (cfg.n_early < 1) throw UserError("n_early must be at least 1 for shared-weight proxies");
  TrainState st(std::move(init));
  Rng rng = Rng::derive(cfg.seed, stream::kShared, static_cast<std::uint64_t>(mode));
  const auto uniform = PolicyParams::uniform(kNumOps, cfg.theta_init);
  train_epochs(st, train, mode == SharedMode::Uniform ? &uniform : nullptr, cfg.n_early,
               horizon_config(cfg), cfg, rng);
  return st.model;
}

// Fine-tuning state starting from a checkpoint; velocity starts at zero.
inline std::pair<TrainState, TrainConfig> finetune_setup(const SearchConfig& cfg, const ModelState& start,
                                                         std::size_t n_train) {
  TrainState st(start);
  TrainConfig tc = horizon_config(cfg);
  const std::size_t ipe = iterations_per_epoch(n_train, tc.batch_size);
  const auto handoff = static_cast<std::uint64_t>(cfg.n_early) * ipe;
  switch (cfg.finetune) {
    case FinetuneSchedule::Handoff:
      tc.lr_max = learning_rate(tc, handoff, ipe);
      tc.schedule = Schedule::Constant;
      break;
    case FinetuneSchedule::ContinueCosine:
      st.iteration = handoff;
      break;
    case FinetuneSchedule::Constant:
      tc.lr_max = cfg.finetune_lr;
      tc.schedule = Schedule::Constant;
      break;
  }
  return {std::move(st), tc};
}

struct EvalResult {
  double acc = 0.0;
  OpCounts counts;
};

// Validation accuracy after each image gets one operation sampled from p and
// nothing else.
inline EvalResult evaluate_augmented(const ModelState& m, const Dataset& val, const PolicyParams& p,
                                     const GeometryConfig& geo, Rng& rng) {
  if (val.empty()) throw Error("evaluate: empty dataset");
  const OpSampler sampler(p);
  EvalResult r{0.0, OpCounts(p.size())};
  Network net(m.arch);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < val.size(); ++n) {
    const auto id = sampler.sample(rng);
    r.counts.add(id);
    const Image img = apply_op(val.images[n], static_cast<int>(id), rng, geo);
    image_to_tensor(img, m.arch.input, net.input());
    if (argmax(net.forward(m.params)) == val.labels[n]) ++correct;
  }
  r.acc = static_cast<double>(correct) / static_cast<double>(val.size());
  return r;
}

// Scores policy p under a proxy. `omega` is the proxy's starting
// checkpoint (uniform-trained, unaugmented-trained or random init); it is
// copied, never modified. Operations are drawn from `rng`.
inline EvalResult evaluate_policy(const ModelState& omega, const PolicyParams& p, Proxy proxy,
                                  const SearchConfig& cfg, const SearchData& data, Rng& rng) {
  if (proxy == Proxy::AV) return evaluate_augmented(omega, data.val, p, cfg.geometry, rng);
  auto [st, tc] = finetune_setup(cfg, omega, data.train.size());
  EvalResult r{0.0, OpCounts(p.size())};
  if (cfg.common_random_numbers) {
    Rng base = Rng::derive(cfg.seed, stream::kFinetune, 0);
    train_epochs(st, data.train, &p, cfg.n_late, tc, cfg, base, &r.counts, &rng);
  } else {
    train_epochs(st, data.train, &p, cfg.n_late, tc, cfg, rng, &r.counts);
  }
  r.acc = evaluate(st.model, data.val);
  return r;
}

// Full training from scratch for n_early + n_late epochs (policy nullptr:
// basic pre-processing only). Returns validation accuracy.
inline double train_full(const SearchConfig& cfg, const SearchData& data, const PolicyParams* policy,
                         std::uint64_t run_seed) {
  validate(cfg);
  const Arch arch = resolve_arch(cfg, data.train);
  TrainState st(init_model(arch, stream_seed(run_seed, stream::kInit)));
  Rng rng = Rng::derive(run_seed, stream::kFull, 0);
  train_epochs(st, data.train, policy, cfg.total_epochs(), horizon_config(cfg), cfg, rng);
  return evaluate(st.model, data.val);
}

// ---------------------------------------------------------------------------
// Search loop

struct SearchRecord {
  int iteration = 0;  // 1-based
  OpCounts counts;
  double acc = 0.0;
  std::optional<double> baseline_before;  // empty on the first iteration
  double advantage = 0.0;
  double entropy = 0.0;                   // of the policy that produced the samples
  std::vector<std::size_t> top5;
  std::vector<double> marginal;           // first-element marginal after the update
  std::string theta_snapshot;             // policy file written for this iteration, if any
};

struct SearchState {
  PolicyParams policy;
  AdamState adam;
  BaselineState baseline;
  int iteration = 0;  // completed iterations
  std::vector<SearchRecord> records;
};

inline SearchState initial_search_state(const SearchConfig& cfg, std::size_t k = kNumOps) {
  SearchState s;
  s.policy = PolicyParams::uniform(k, cfg.theta_init);
  s.adam = AdamState::fresh(k, cfg.lr_theta, cfg.beta1, cfg.beta2);
  return s;
}

// Reward for the current policy at a given iteration. Receives the
// iteration's private RNG stream.
using PolicyEvaluator = std::function<EvalResult(const PolicyParams&, int iteration, Rng&)>;

inline std::vector<std::size_t> top_ops(const PolicyParams& p, std::size_t n) {
  auto r = ranked_ops(p);
  if (r.size() > n) r.resize(n);
  return r;
}

// One loop body: evaluate, advantage against the old baseline, PPO, EMA.
inline void search_step(SearchState& s, const SearchConfig& cfg, const PolicyEvaluator& eval) {
  const int t = s.iteration + 1;
  Rng rng = Rng::derive(cfg.seed, stream::kSearch, static_cast<std::uint64_t>(t));
  EvalResult r = eval(s.policy, t, rng);
  if (!(r.acc >= 0.0 && r.acc <= 1.0)) throw Error("policy evaluator returned an accuracy outside [0, 1]");
  SearchRecord rec;
  rec.iteration = t;
  rec.acc = r.acc;
  if (s.baseline.initialized) rec.baseline_before = s.baseline.value;
  rec.advantage = advantage(s.baseline, r.acc);
  rec.entropy = entropy(s.policy);
  rec.top5 = top_ops(s.policy, 5);
  const PpoBatch batch = make_ppo_batch(s.policy, r.counts, r.acc, rec.advantage);
  s.policy = ppo_update(s.policy, batch, s.adam, cfg.ppo);
  s.baseline = baseline_update(s.baseline, r.acc);
  rec.marginal = first_element_marginal(s.policy);
  rec.counts = std::move(r.counts);
  s.records.push_back(std::move(rec));
  s.iteration = t;
}

// Runs the loop until cfg.t_max iterations are complete. `after_each` sees
// the state after every iteration (persistence, progress).
inline SearchState run_search(const SearchConfig& cfg, const PolicyEvaluator& eval, SearchState s,
                              const std::function<void(SearchState&)>& after_each = {}) {
  validate(cfg);
  while (s.iteration < cfg.t_max) {
    search_step(s, cfg, eval);
    if (after_each) after_each(s);
  }
  return s;
}

inline PolicyEvaluator proxy_evaluator(const ModelState& omega, const SearchConfig& cfg,
                                       const SearchData& data) {
  return [&omega, &cfg, &data](const PolicyParams& p, int, Rng& rng) {
    return evaluate_policy(omega, p, cfg.proxy, cfg, data, rng);
  };
}

// ---------------------------------------------------------------------------
// Correlation

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw Error("pearson needs two samples of equal length >= 2");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> try_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  try {
    return pearson(xs, ys);
  } catch (const Error&) {
    if (xs.size() == ys.size() && xs.size() >= 2) return std::nullopt;
    throw;
  }
}

// ---------------------------------------------------------------------------
// Proxy comparison

// A random fixed policy: 2..6 allowed elements, every ordered pair of
// allowed elements available with a gaussian logit, everything else masked.
inline PolicyParams random_fixed_policy(Rng& rng) {
  std::vector<int> elems(kNumElements);
  std::iota(elems.begin(), elems.end(), 0);
  rng.shuffle(elems.begin(), elems.end());
  const auto n = static_cast<std::size_t>(2 + rng.below(5));
  std::vector<std::uint8_t> allowed(kNumElements, 0);
  for (std::size_t i = 0; i < n; ++i) allowed[static_cast<std::size_t>(elems[i])] = 1;
  std::vector<double> theta(kNumOps, 0.0);
  std::vector<std::uint8_t> mask(kNumOps, 0);
  for (int a = 0; a < kNumElements; ++a)
    for (int b = 0; b < kNumElements; ++b) {
      const auto k = static_cast<std::size_t>(op_id(a, b));
      mask[k] = allowed[static_cast<std::size_t>(a)] && allowed[static_cast<std::size_t>(b)];
      theta[k] = rng.normal();
    }
  return PolicyParams(std::move(theta), std::move(mask));
}

struct ProxyRow {
  std::size_t policy = 0;
  double full = 0.0;
  double proxy[4] = {0, 0, 0, 0};  // indexed like kAllProxies
};

struct ProxyComparison {
  std::vector<ProxyRow> rows;
  std::optional<double> r[4];  // empty when a column has zero variance
};

inline ProxyComparison compare_proxies(const SearchConfig& cfg, const SearchData& data, std::size_t n_policies,
                                       int workers = 1) {
  if (n_policies < 5) throw UserError("compare-proxies needs at least 5 policies");
  validate(cfg);
  const ModelState shared[3] = {train_shared(cfg, data.train, SharedMode::Uniform),
                                train_shared(cfg, data.train, SharedMode::None),
                                train_shared(cfg, data.train, SharedMode::RandomInit)};
  std::vector<PolicyParams> policies;
  for (std::size_t i = 0; i < n_policies; ++i) {
    Rng rng = Rng::derive(cfg.seed, stream::kPolicies, i);
    policies.push_back(random_fixed_policy(rng));
  }
  ProxyComparison out;
  out.rows.resize(n_policies);
  parallel_for(n_policies, workers, [&](std::size_t i) {
    ProxyRow& row = out.rows[i];
    row.policy = i;
    row.full = train_full(cfg, data, &policies[i], stream_seed(cfg.seed, stream::kFull, i));
    for (std::size_t v = 0; v < 4; ++v) {
      const Proxy p = kAllProxies[v];
      const ModelState& omega = shared[static_cast<std::size_t>(shared_mode_for(p))];
      // Same stream for every variant: differences come from the proxy alone.
      Rng rng = Rng::derive(cfg.seed, stream::kProxy, i);
      row.proxy[v] = evaluate_policy(omega, policies[i], p, cfg, data, rng).acc;
    }
  });
  std::vector<double> full;
  for (const auto& row : out.rows) full.push_back(row.full);
  for (std::size_t v = 0; v < 4; ++v) {
    std::vector<double> col;
    for (const auto& row : out.rows) col.push_back(row.proxy[v]);
    out.r[v] = try_pearson(col, full);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation schedule

enum class Placement { Start, End };

inline const char* placement_name(Placement p) { return p == Placement::Start ? "start" : "end"; }

struct ScheduleConfig {
  std::vector<int> grid;
  int seeds = 5;
  // When set, un-augmented epochs also skip flip, crop and cutout, so the
  // schedule toggles the whole pipeline rather than the searched operation.
  bool toggle_basic = false;
};

inline std::vector<int> augmented_epochs(int total, int n_aug, Placement where) {
  if (n_aug < 0 || n_aug > total) throw UserError("n_aug must lie in [0, total epochs]");
  std::vector<int> e;
  const int first = where == Placement::Start ? 0 : total - n_aug;
  for (int i = 0; i < n_aug; ++i) e.push_back(first + i);
  return e;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Identity of one schedule cell: which epochs are augmented, with what, on
// which seeds. Placement itself is not part of it.
inline std::uint64_t schedule_hash(const SearchConfig& cfg, const ScheduleConfig& sc, const PolicyParams& p,
                                   const std::vector<int>& epochs) {
  std::ostringstream os;
  os << "E" << cfg.total_epochs() << ";seed" << cfg.seed << ";seeds" << sc.seeds << ";basic"
     << sc.toggle_basic << ";aug";
  for (int e : epochs) os << ',' << e;
  os << ";policy ";
  write_policy(os, p);
  return fnv1a(os.str());
}

struct ScheduleRow {
  int n_aug = 0;
  Placement placement = Placement::Start;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds
  std::vector<double> accs;
  std::uint64_t config_hash = 0;
};

inline double schedule_run(const SearchConfig& cfg, const ScheduleConfig& sc, const SearchData& data,
                           const PolicyParams& policy, const std::vector<int>& aug_epochs, int seed_index) {
  const Arch arch = resolve_arch(cfg, data.train);
  const auto run_seed = stream_seed(cfg.seed, stream::kSchedule, static_cast<std::uint64_t>(seed_index));
  TrainState st(init_model(arch, stream_seed(run_seed, stream::kScheduleInit)));
  Rng rng = Rng::derive(run_seed, stream::kFull, 0);
  const TrainConfig tc = horizon_config(cfg);
  SearchConfig plain = cfg;
  if (sc.toggle_basic) plain.preprocess = PreprocessConfig{0.0, 0, 0, cfg.preprocess.cutout_fill};
  for (int e = 0; e < cfg.total_epochs(); ++e) {
    const bool aug = std::find(aug_epochs.begin(), aug_epochs.end(), e) != aug_epochs.end();
    train_epochs(st, data.train, aug ? &policy : nullptr, 1, tc, aug ? cfg : plain, rng);
  }
  return evaluate(st.model, data.val);
}

// Paired design: seed s uses the same initialization and data order stream
// in every cell.
inline std::vector<ScheduleRow> schedule_experiment(const SearchConfig& cfg, const SearchData& data,
                                                    const PolicyParams& policy, const ScheduleConfig& sc,
                                                    int workers = 1) {
  validate(cfg);
  if (sc.seeds < 1) throw UserError("schedule needs at least one seed");
  std::vector<ScheduleRow> rows;
  for (int n : sc.grid)
    for (auto where : {Placement::Start, Placement::End}) {
      ScheduleRow r;
      r.n_aug = n;
      r.placement = where;
      const auto epochs = augmented_epochs(cfg.total_epochs(), n, where);
      r.config_hash = schedule_hash(cfg, sc, policy, epochs);
      r.accs.assign(static_cast<std::size_t>(sc.seeds), 0.0);
      rows.push_back(std::move(r));
    }
  const std::size_t per_row = static_cast<std::size_t>(sc.seeds);
  parallel_for(rows.size() * per_row, workers, [&](std::size_t job) {
    auto& r = rows[job / per_row];
    const int s = static_cast<int>(job % per_row);
    r.accs[static_cast<std::size_t>(s)] =
        schedule_run(cfg, sc, data, policy, augmented_epochs(cfg.total_epochs(), r.n_aug, r.placement), s);
  });
  for (auto& r : rows) {
    double m = 0.0;
    for (double a : r.accs) m += a;
    m /= static_cast<double>(r.accs.size());
    double v = 0.0;
    for (double a : r.accs) v += (a - m) * (a - m);
    r.mean = m;
    r.std = r.accs.size() > 1 ? std::sqrt(v / static_cast<double>(r.accs.size() - 1)) : 0.0;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Ablation: remove the k most probable operations and retrain.

struct AblationRow {
  std::size_t removed = 0;
  double mean = 0.0;
  std::vector<double> accs;
  std::vector<std::size_t> removed_ids;
};

inline std::vector<AblationRow> ablate(const SearchConfig& cfg, const SearchData& data, const PolicyParams& policy,
                                       const std::vector<std::size_t>& ks, int seeds, int workers = 1) {
  validate(cfg);
  if (seeds < 1) throw UserError("ablate needs at least one seed");
  std::vector<AblationRow> rows(ks.size());
  std::vector<PolicyParams> masked;
  const auto ranked = ranked_ops(policy);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    masked.push_back(mask_top_k(policy, ks[i]));
    rows[i].removed = ks[i];
    rows[i].removed_ids.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(ks[i]));
    rows[i].accs.assign(static_cast<std::size_t>(seeds), 0.0);
  }
  const auto per_row = static_cast<std::size_t>(seeds);
  parallel_for(ks.size() * per_row, workers, [&](std::size_t job) {
    const std::size_t i = job / per_row, s = job % per_row;
    rows[i].accs[s] = train_full(cfg, data, &masked[i], stream_seed(cfg.seed, stream::kAblate, s));
  });
  for (auto& r : rows) {
    for (double a : r.accs) r.mean += a;
    r.mean /= static_cast<double>(r.accs.size());
  }
  return rows;
}

}  // namespace awsaug
