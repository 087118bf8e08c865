// Acceptance checks, one line per criterion:
//
//   [N] PASS|FAIL  <measurement>
//
// awsaug_acceptance [--only N] [--work DIR]
// Exit status is 0 only if every selected criterion passes.

#include <chrono>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "CLI11.hpp"

#include "awsaug/commands.hpp"
#include "reference_ops.hpp"
#include "stub_reward.hpp"
#include "test_support.hpp"

using namespace awsaug;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

double max_rel_error(const std::vector<double>& g, const std::vector<double>& ref) {
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    err = std::max(err, std::abs(g[i] - ref[i]));
    norm = std::max(norm, std::abs(ref[i]));
  }
  return err / std::max(norm, 1e-3);
}

PolicyParams random_policy(Rng& rng, std::size_t k, double scale) {
  std::vector<double> th(k);
  for (auto& t : th) t = scale * rng.normal();
  return PolicyParams::from_theta(th);
}

std::string work_dir;

// --------------------------------------------------------------------------

Outcome kl_proposition() {
  const VerifyConfig v;  // 50 policies on each space up to 5 ops x 4 steps, grid resolution 10
  const auto s = run_verify(v, 0, nullptr);
  const bool closed = s.max_closed_form_error <= 1e-12;
  const bool literal = s.minimizer_pass == s.checks;
  return {closed && literal && s.checks >= 50,
          "uniform best shared policy for " + std::to_string(s.minimizer_pass) + "/" + std::to_string(s.checks) +
              " policies (min margin " + num(s.min_margin) + "); closed-form error " +
              num(s.max_closed_form_error, 3) + "; permutation-average " + std::to_string(s.expected_pass) + "/" +
              std::to_string(s.expected_checks) + ", worst-case " + std::to_string(s.worst_case_pass) + "/" +
              std::to_string(s.worst_case_checks)};
}

Outcome gradient_fidelity() {
  Rng rng(2);
  double worst_lp = 0.0, worst_ppo = 0.0, worst_net = 0.0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t k = 2 + rng.below(12);
    const auto p = random_policy(rng, k, 2.0);
    OpCounts c(k);
    for (int s = 0; s < 20; ++s) c.add(rng.below(k), 1 + rng.below(3));
    auto f = [&](const std::vector<double>& th) {
      const auto q = PolicyParams::from_theta(th);
      double v = 0.0;
      for (std::size_t j = 0; j < k; ++j) v += static_cast<double>(c.counts[j]) * log_prob(q, j);
      return v;
    };
    worst_lp = std::max(worst_lp, max_rel_error(grad_log_prob(p, c), oracle::finite_diff(f, p.theta(), 1e-6)));
  }
  for (int n = 0; n < 100;) {
    const std::size_t k = 2 + rng.below(10);
    const auto old = random_policy(rng, k, 1.0);
    auto th = old.theta();
    const double drift = rng.bernoulli(0.5) ? 0.0 : 0.4;
    for (auto& t : th) t += drift * rng.normal();
    const auto cur = PolicyParams::from_theta(th);
    OpCounts c(k);
    for (int s = 0; s < 30; ++s) c.add(rng.below(k));
    const auto batch = make_ppo_batch(old, c, 0.5, rng.normal());
    // The clipped surrogate has kinks at ratio 1 +- clip; skip draws next to one.
    const auto pc = probabilities(cur), po = probabilities(old);
    bool kink = false;
    for (std::size_t j = 0; j < k; ++j) kink = kink || std::abs(pc[j] / po[j] - 1.2) < 1e-4 || std::abs(pc[j] / po[j] - 0.8) < 1e-4;
    if (kink) continue;
    auto f = [&](const std::vector<double>& t) { return ppo_surrogate(cur.with_theta(t), batch, 0.2); };
    worst_ppo = std::max(worst_ppo, max_rel_error(ppo_surrogate_grad(cur, batch, 0.2), oracle::finite_diff(f, th, 1e-6)));
    ++n;
  }
  for (const char* text : {"input 2x3x3; dense 4", "input 2x5x5; conv 3 3; relu; dense 3",
                           "input 2x6x6; maxpool 2; dense 3",
                           "input 3x8x8; conv 4 3; relu; maxpool 2; conv 3 2; relu; dense 5"}) {
    const Arch a = Arch::parse(text);
    ModelState m = init_model(a, rng.next());
    for (auto& p : m.params) p += 0.1 * rng.normal();
    std::vector<std::vector<double>> in(3, std::vector<double>(a.input.size()));
    for (auto& x : in)
      for (auto& v : x) v = rng.normal();
    const std::vector<int> labels{0, 1, 2};
    std::vector<double> grad;
    loss_and_grad(m, in, labels, grad);
    auto f = [&](const std::vector<double>& p) {
      ModelState t = m;
      t.params = p;
      return loss_only(t, in, labels);
    };
    const auto fd = oracle::finite_diff(f, m.params, 1e-6);
    for (std::size_t i = 0; i < grad.size(); ++i)
      worst_net = std::max(worst_net, std::abs(grad[i] - fd[i]) / std::max(1.0, std::abs(fd[i])));
  }
  return {worst_lp <= 1e-5 && worst_ppo <= 1e-5 && worst_net <= 1e-4,
          "grad_log_prob " + num(worst_lp, 3) + ", PPO surrogate " + num(worst_ppo, 3) + " (limit 1e-5); backprop " +
              num(worst_net, 3) + " (limit 1e-4)"};
}

Outcome distribution() {
  Rng rng(3);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const auto p = probabilities(random_policy(rng, kNumOps, 5.0));
    worst = std::max(worst, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
  }
  const OpSampler sampler(PolicyParams::uniform());
  std::vector<double> hist(kNumOps, 0.0);
  const int draws = 1'000'000;
  for (int i = 0; i < draws; ++i) ++hist[sampler.sample(rng)];
  const double e = static_cast<double>(draws) / kNumOps;
  double chi2 = 0.0;
  for (double h : hist) chi2 += (h - e) * (h - e) / e;
  const double p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(kNumOps - 1), chi2));
  return {worst <= 1e-12 && p_value > 0.001, "max |sum - 1| " + num(worst, 3) + "; chi-square " + num(chi2, 6) +
                                                 " on 1295 dof, p = " + num(p_value) + " (reject below 0.001)"};
}

Outcome rigged_convergence() {
  std::string detail;
  int ok = 0;
  for (int s = 0; s < 5; ++s) {
    SearchConfig cfg;
    cfg.seed = 100 + static_cast<std::uint64_t>(s);
    cfg.t_max = 300;
    const std::size_t target = Rng::derive(cfg.seed, 99, 0).below(kNumOps);
    int reached = 0;
    run_search(cfg, testing::rigged_evaluator(target), initial_search_state(cfg), [&](SearchState& st) {
      if (reached == 0 && probabilities(st.policy)[target] > 0.9) reached = st.iteration;
    });
    ok += reached > 0;
    detail += (s ? ", " : "") + (reached ? std::to_string(reached) : std::string("never"));
  }
  return {ok == 5, std::to_string(ok) + "/5 seeds pushed the rewarded op above 0.9; iterations: " + detail};
}

RunConfig toy_run(const std::string& sub) {
  RunConfig c = toy_preset();
  c.out = (fs::path(work_dir) / sub).string();
  return c;
}

// The toy-preset search, run once and reused when its outputs are present.
PolicyParams searched_policy(bool fresh) {
  const RunConfig c = toy_run("search");
  const auto policy = fs::path(c.out) / "policy.txt", config = fs::path(c.out) / "config.json";
  const bool cached = fs::exists(policy) && fs::exists(config) &&
                      testing::read_file(config) == to_json(c).dump(2) + "\n";
  if (fresh || !cached) {
    std::ostringstream sink;
    if (cmd_search(c, false, sink) != exit_code::kOk) throw Error("toy search failed");
  }
  return load_policy(policy.string());
}

Outcome end_to_end() {
  const PolicyParams star = searched_policy(true);
  const RunConfig c = toy_run("search");
  const SearchData data = load_data(c);
  const auto uniform = PolicyParams::uniform();
  std::vector<double> a, b;
  std::string detail;
  // 24 pairs: with 8 the seed-to-seed spread of a 20-epoch run left p near 0.07.
  for (std::uint64_t s = 0; s < 24; ++s) {
    const auto seed = stream_seed(1000 + s, stream::kFull);
    a.push_back(train_full(c.search, data, &star, seed));
    b.push_back(train_full(c.search, data, &uniform, seed));
  }
  const auto t = stats::paired_t_greater(a, b);
  return {t.p_value < 0.05, "searched " + num(stats::mean(a)) + " vs uniform " + num(stats::mean(b)) + " over " +
                                std::to_string(a.size()) + " paired seeds; t = " + num(t.t) + ", one-sided p = " +
                                num(t.p_value, 3)};
}

Outcome proxy_ordering() {
  const RunConfig c = toy_run("proxies");
  const auto res = compare_proxies(c.search, load_data(c), c.compare.n_policies, c.workers);
  auto show = [&](int v) { return res.r[v] ? num(*res.r[v], 3) : std::string("n/a"); };
  const bool ok = res.r[0] && res.r[3] && *res.r[0] > *res.r[3];
  return {ok, std::to_string(res.rows.size()) + " policies: r(P_AF) " + show(0) + " vs r(P_AV) " + show(3) +
                  "; r(P_NF) " + show(1) + ", r(P_IT) " + show(2)};
}

Outcome schedule_direction() {
  const RunConfig c = toy_run("schedule");
  const PolicyParams policy = searched_policy(false);
  const auto rows = schedule_experiment(c.search, load_data(c), policy, c.schedule.run, c.workers);
  const auto sum = summarize_schedule(rows);
  std::string detail;
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2)
    detail += (i ? " " : "") + std::to_string(rows[i].n_aug) + ":" + num(rows[i].mean, 3) + "/" + num(rows[i + 1].mean, 3);
  return {sum.sign.p_value < 0.05, "end above start at " + std::to_string(sum.sign.positive) + "/" +
                                       std::to_string(sum.diffs.size()) + " grid points, sign test p = " +
                                       num(sum.sign.p_value, 3) + " (start/end: " + detail + ")"};
}

Outcome augmentation_correctness() {
  Rng gen(8);
  int mismatches = 0;
  for (int n = 0; n < 50; ++n) {
    const Image img = testing::random_image(gen, 4 + static_cast<int>(gen.below(24)), 4 + static_cast<int>(gen.below(24)), 3);
    const int thr = static_cast<int>(gen.below(257)), bits = 1 + static_cast<int>(gen.below(8));
    mismatches += solarize(img, thr) != reference::solarize(img, thr);
    mismatches += posterize(img, bits) != reference::posterize(img, bits);
    mismatches += invert(img) != reference::invert(img);
    mismatches += autocontrast(img) != reference::autocontrast(img);
    mismatches += equalize(img) != reference::equalize(img);
  }
  int violations = 0;
  for (int n = 0; n < 50; ++n) {
    const Image img = testing::random_image(gen);
    Rng rng(static_cast<std::uint64_t>(n));
    violations += apply_op(img, op_id(35, 35), rng) != img;                  // Invert twice
    violations += flip_horizontal(flip_horizontal(img)) != img;
    violations += equalize(equalize(img)) != equalize(img);                   // idempotent
    for (auto k : {ElementKind::Color, ElementKind::Contrast, ElementKind::Brightness, ElementKind::Sharpness})
      violations += apply_element(img, AugmentElement{k, 1.0, -1}, rng) != img;  // unit factor
  }
  return {mismatches == 0 && violations == 0, std::to_string(mismatches) + " reference mismatches over 250 comparisons; " +
                                                  std::to_string(violations) + " property violations over 350 checks"};
}

Outcome reproducibility() {
  std::ostringstream sink;
  for (const char* sub : {"repro_a", "repro_b"}) {
    fs::remove_all(fs::path(work_dir) / sub);
    if (cmd_search(toy_run(sub), false, sink) != exit_code::kOk) return {false, "search failed"};
  }
  std::string detail;
  bool same = true;
  for (const char* f : {"policy.txt", "records.csv", "marginals.csv"}) {
    const bool eq = testing::read_file(fs::path(work_dir) / "repro_a" / f) ==
                    testing::read_file(fs::path(work_dir) / "repro_b" / f);
    same = same && eq;
    detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical" : " DIFFER");
  }
  return {same, detail};
}

struct Criterion {
  int id;
  double budget_s;  // 0: no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  work_dir = (fs::temp_directory_path() / "awsaug_acceptance").string();
  app.add_option("--only", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--work", work_dir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work_dir);

  const std::vector<Criterion> all{
      {1, 30, kl_proposition},         {2, 60, gradient_fidelity},     {3, 0, distribution},
      {4, 120, rigged_convergence},    {5, 900, end_to_end},           {6, 1800, proxy_ordering},
      {7, 1800, schedule_direction},   {8, 0, augmentation_correctness}, {9, 0, reproducibility},
  };
  bool all_pass = true;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + num(c.budget_s) + " s budget";
    }
    std::cout << '[' << c.id << "] " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << " (" << num(secs, 3)
              << " s)" << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
