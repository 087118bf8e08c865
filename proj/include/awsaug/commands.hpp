#pragma once

// Command implementations behind the awsaug CLI. Each command takes an
// effective RunConfig, writes its files under c.out and returns an exit code.
// Timestamps go to <out>/run.log only, so every other file is a pure
// function of the config.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "awsaug/config.hpp"
#include "awsaug/io.hpp"
#include "awsaug/oracle.hpp"
#include "awsaug/search.hpp"
#include "awsaug/stats.hpp"

namespace awsaug {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kUser = 2;
inline constexpr int kVerificationFailed = 3;
}  // namespace exit_code

namespace fs = std::filesystem;

// Appends timestamped lines to <out>/run.log and mirrors them to `echo`.
class RunLog {
 public:
  RunLog(const std::string& dir, std::ostream* echo) : echo_(echo) {
    fs::create_directories(dir);
    file_.open(fs::path(dir) / "run.log", std::ios::app);
  }

  void operator()(const std::string& msg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    file_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << std::endl;
    if (echo_) *echo_ << msg << std::endl;
  }

 private:
  std::ofstream file_;
  std::ostream* echo_;
};

inline std::string out_path(const RunConfig& c, const std::string& name) {
  return (fs::path(c.out) / name).string();
}

inline void write_config_echo(const RunConfig& c) {
  fs::create_directories(c.out);
  write_text_atomically(out_path(c, "config.json"), to_json(c).dump(2) + "\n");
}

inline PolicyParams policy_from_spec(const std::string& spec) {
  if (spec.empty() || spec == "uniform") return PolicyParams::uniform();
  return load_policy(spec);
}

inline void print_top_ops(std::ostream& os, const PolicyParams& p, std::size_t n) {
  const auto probs = probabilities(p);
  os << "top " << n << " operations:\n";
  for (auto k : top_ops(p, n))
    os << "  " << std::setw(4) << k << "  " << std::left << std::setw(36) << op_from_id(static_cast<int>(k)).name()
       << std::right << fmt(probs[k]) << '\n';
}

// ---------------------------------------------------------------------------
// search

inline int cmd_search(const RunConfig& c, bool resume, std::ostream& out) {
  validate(c);
  const SearchData data = load_data(c);
  write_config_echo(c);
  RunLog log(c.out, nullptr);
  const std::string fingerprint = search_fingerprint(c);
  const std::string ckpt = out_path(c, "omega_share.ckpt");
  const std::string state_path = out_path(c, "search_state.json");

  SearchState state = initial_search_state(c.search);
  ModelState omega;
  const Arch arch = resolve_arch(c.search, data.train);
  if (resume && fs::exists(state_path)) {
    std::ifstream is(state_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw UserError(std::string("corrupt search state: ") + e.what());
    }
    state = state_from_json(j, fingerprint);
    omega = load_checkpoint(ckpt, arch);
    log("resumed at iteration " + std::to_string(state.iteration));
  } else {
    if (resume) log("no search state found; starting fresh");
    log("training shared weights for " + std::to_string(c.search.n_early) + " epochs");
    omega = train_shared(c.search, data.train, shared_mode_for(c.search.proxy));
    save_checkpoint(omega, ckpt);
    log("shared model val acc " + fmt(evaluate(omega, data.val)));
  }

  const fs::path snap_dir = fs::path(c.out) / "theta";
  auto persist = [&](SearchState& s) {
    auto& rec = s.records.back();
    const bool last = s.iteration == c.search.t_max;
    if (c.snapshot_every > 0 && (s.iteration % c.snapshot_every == 0 || last)) {
      fs::create_directories(snap_dir);
      std::ostringstream name;
      name << "theta/iter_" << std::setw(4) << std::setfill('0') << s.iteration << ".txt";
      save_policy(s.policy, out_path(c, name.str()));
      rec.theta_snapshot = name.str();
    }
    write_text_atomically(state_path, state_to_json(s, fingerprint).dump() + "\n");
    log("iteration " + std::to_string(s.iteration) + " acc " + fmt(rec.acc) + " entropy " + fmt(rec.entropy));
  };
  state = run_search(c.search, proxy_evaluator(omega, c.search, data), std::move(state), persist);

  std::ostringstream records, marginals, policy;
  write_records_csv(records, state.records);
  write_marginals_csv(marginals, state.records);
  write_policy(policy, state.policy);
  write_text_atomically(out_path(c, "records.csv"), records.str());
  write_text_atomically(out_path(c, "marginals.csv"), marginals.str());
  write_text_atomically(out_path(c, "policy.txt"), policy.str());
  log("search finished after " + std::to_string(state.iteration) + " iterations");
  print_top_ops(out, state.policy, 10);
  return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// compare-proxies

inline int cmd_compare_proxies(const RunConfig& c, std::ostream& out) {
  validate(c);
  const SearchData data = load_data(c);
  write_config_echo(c);
  RunLog log(c.out, nullptr);
  log("comparing proxies on " + std::to_string(c.compare.n_policies) + " policies");
  const auto res = compare_proxies(c.search, data, c.compare.n_policies, c.workers);
  std::ostringstream rows, summary;
  rows << "policy,full";
  for (auto p : kAllProxies) rows << ',' << proxy_name(p);
  rows << '\n';
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    rows << i << ',' << fmt(res.rows[i].full);
    for (double v : res.rows[i].proxy) rows << ',' << fmt(v);
    rows << '\n';
  }
  summary << "proxy,pearson_r\n";
  out << "proxy   pearson r\n";
  for (int v = 0; v < 4; ++v) {
    summary << proxy_name(kAllProxies[v]) << ',' << (res.r[v] ? fmt(*res.r[v]) : "") << '\n';
    out << std::left << std::setw(8) << proxy_name(kAllProxies[v]) << std::right
        << (res.r[v] ? fmt(*res.r[v]) : "undefined (zero variance)") << '\n';
  }
  write_text_atomically(out_path(c, "proxies.csv"), rows.str());
  write_text_atomically(out_path(c, "pearson.csv"), summary.str());
  log("done");
  return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// ablate

inline int cmd_ablate(const RunConfig& c, std::ostream& out) {
  validate(c);
  const std::string src = c.ablate.policy.empty() ? out_path(c, "policy.txt") : c.ablate.policy;
  if (!fs::exists(src)) throw UserError("policy file not found: " + src);
  const PolicyParams policy = load_policy(src);
  const SearchData data = load_data(c);
  write_config_echo(c);
  RunLog log(c.out, nullptr);
  log("ablating top operations of " + src);
  const auto rows = ablate(c.search, data, policy, c.ablate.k, c.ablate.seeds, c.workers);
  std::ostringstream csv;
  csv << "removed,mean_acc,mean_error,accs,removed_ids\n";
  out << "removed  mean acc\n";
  for (const auto& r : rows) {
    std::string accs;
    for (std::size_t i = 0; i < r.accs.size(); ++i) accs += (i ? ";" : "") + fmt(r.accs[i]);
    csv << r.removed << ',' << fmt(r.mean) << ',' << fmt(1.0 - r.mean) << ',' << accs << ','
        << join_ids(r.removed_ids) << '\n';
    out << std::setw(7) << r.removed << "  " << fmt(r.mean) << '\n';
  }
  write_text_atomically(out_path(c, "ablation.csv"), csv.str());
  log("done");
  return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// schedule

struct ScheduleSummary {
  std::vector<double> diffs;  // end - start mean per grid point
  stats::SignTest sign;
};

inline ScheduleSummary summarize_schedule(const std::vector<ScheduleRow>& rows) {
  ScheduleSummary s;
  for (const auto& r : rows) {
    if (r.placement != Placement::End) continue;
    for (const auto& o : rows)
      if (o.n_aug == r.n_aug && o.placement == Placement::Start) s.diffs.push_back(r.mean - o.mean);
  }
  s.sign = stats::sign_test(s.diffs);
  return s;
}

inline int cmd_schedule(const RunConfig& c, std::ostream& out) {
  validate(c);
  const PolicyParams policy = policy_from_spec(c.schedule.policy);
  const SearchData data = load_data(c);
  write_config_echo(c);
  RunLog log(c.out, nullptr);
  log("schedule experiment");
  const auto rows = schedule_experiment(c.search, data, policy, c.schedule.run, c.workers);
  std::ostringstream csv;
  csv << "n_aug,placement,mean_acc,std_acc,accs,config_hash\n";
  for (const auto& r : rows) {
    std::string accs;
    for (std::size_t i = 0; i < r.accs.size(); ++i) accs += (i ? ";" : "") + fmt(r.accs[i]);
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << r.config_hash;
    csv << r.n_aug << ',' << placement_name(r.placement) << ',' << fmt(r.mean) << ',' << fmt(r.std) << ','
        << accs << ',' << h.str() << '\n';
  }
  write_text_atomically(out_path(c, "schedule.csv"), csv.str());
  const auto sum = summarize_schedule(rows);
  out << "n_aug  start     end\n";
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2)
    out << std::setw(5) << rows[i].n_aug << "  " << std::fixed << std::setprecision(4) << rows[i].mean << "  "
        << rows[i + 1].mean << '\n';
  out.unsetf(std::ios::fixed);
  out << std::setprecision(6) << "end above start at " << sum.sign.positive << " of " << sum.diffs.size()
      << " grid points (ties " << sum.sign.ties << ", sign test p = " << sum.sign.p_value << ")\n";
  log("done");
  return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifySummary {
  std::size_t checks = 0;
  std::size_t minimizer_pass = 0;      // literal per-policy check
  std::size_t expected_pass = 0;       // permutation-averaged check (k_ops <= 4)
  std::size_t expected_checks = 0;
  std::size_t worst_case_pass = 0;     // minimax check, one per space (k_ops <= 4, n_steps <= 3)
  std::size_t worst_case_checks = 0;
  double max_closed_form_error = 0.0;  // |brute force - k_early * KL(p || q)|
  double min_margin = 0.0;
};

// Draws a small policy from the normalized-sigmoid family with N(0, 1) logits.
inline std::vector<double> random_small_policy(std::size_t k, Rng& rng) {
  std::vector<double> theta(k);
  for (auto& t : theta) t = rng.normal();
  return probabilities(PolicyParams(theta, std::vector<std::uint8_t>(k, 1)));
}

inline VerifySummary run_verify(const VerifyConfig& v, std::uint64_t seed, std::ostream* csv) {
  VerifySummary s;
  s.min_margin = INFINITY;
  if (csv) *csv << "space,theta,kl_uniform,best_candidate_kl,margin,uniform_is_minimizer,closed_form_error,expected_margin\n";
  for (std::size_t si = 0; si < v.spaces.size(); ++si) {
    const auto& sp = v.spaces[si];
    sp.validate();
    Rng rng = Rng::derive(seed, 0x7e51f, si);
    for (int i = 0; i < v.thetas; ++i) {
      const auto p = random_small_policy(sp.k_ops, rng);
      const auto rep = oracle::verify_uniform_minimizer(sp, p, v.grid_resolution);
      // Closed form against the uniform point and a random shared policy.
      const std::vector<double> uni(sp.k_ops, 1.0 / static_cast<double>(sp.k_ops));
      const auto q = random_small_policy(sp.k_ops, rng);
      const double err = std::max(std::abs(oracle::kl_divergence(sp, p, uni) - oracle::kl_closed_form(sp, p, uni)),
                                  std::abs(oracle::kl_divergence(sp, p, q) - oracle::kl_closed_form(sp, p, q)));
      ++s.checks;
      s.minimizer_pass += rep.uniform_is_minimizer;
      s.max_closed_form_error = std::max(s.max_closed_form_error, err);
      s.min_margin = std::min(s.min_margin, rep.margin);
      std::string expected = "";
      if (sp.k_ops <= 4) {
        const auto e = oracle::verify_uniform_expected_minimizer(sp, p, v.grid_resolution);
        ++s.expected_checks;
        s.expected_pass += e.uniform_is_minimizer;
        expected = fmt(e.margin);
      }
      if (csv)
        *csv << sp.k_ops << 'x' << sp.n_steps << 'k' << sp.k_early << ',' << i << ',' << fmt(rep.kl_uniform) << ','
             << fmt(rep.best_candidate_kl) << ',' << fmt(rep.margin) << ',' << rep.uniform_is_minimizer << ','
             << fmt(err) << ',' << expected << '\n';
    }
    if (sp.k_ops <= 4 && sp.n_steps <= 3) {
      ++s.worst_case_checks;
      s.worst_case_pass += oracle::verify_uniform_worst_case(sp, v.grid_resolution).uniform_is_minimizer;
    }
  }
  return s;
}

inline int cmd_verify(const RunConfig& c, std::ostream& out) {
  validate(c);
  write_config_echo(c);
  RunLog log(c.out, nullptr);
  std::ostringstream csv;
  const auto s = run_verify(c.verify, c.seed, &csv);
  write_text_atomically(out_path(c, "verify.csv"), csv.str());
  const bool ok = s.minimizer_pass == s.checks && s.max_closed_form_error <= 1e-12;
  out << "uniform shared policy minimizes KL(p_tt || p_bt): " << s.minimizer_pass << " of " << s.checks
      << " policies (smallest margin " << fmt(s.min_margin) << ")\n"
      << "brute-force KL equals k_early * KL(p || q): max error " << fmt(s.max_closed_form_error) << '\n'
      << "uniform minimizes the permutation-averaged KL: " << s.expected_pass << " of " << s.expected_checks << '\n'
      << "uniform minimizes the worst-case KL: " << s.worst_case_pass << " of " << s.worst_case_checks << '\n'
      << (ok ? "proposition verified\n" : "proposition NOT verified for every policy\n");
  log(ok ? "verified" : "not verified");
  return ok ? exit_code::kOk : exit_code::kVerificationFailed;
}

// ---------------------------------------------------------------------------
// apply

inline int cmd_apply(const RunConfig& c, std::ostream& out) {
  validate(c);
  if (c.apply.input.empty() || !fs::is_directory(c.apply.input))
    throw UserError("input directory not found: " + c.apply.input);
  if (c.apply.output.empty()) throw UserError("apply.output is not set");
  const PolicyParams policy = policy_from_spec(c.apply.policy);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(c.apply.input)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(c.apply.output);
  std::ostringstream csv;
  csv << "file,op_id,op\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    Rng rng = Rng::derive(c.seed, 0xa991, i);
    const Image img = load_pnm(files[i].string());
    const auto id = sample_op(policy, rng);
    save_pnm(apply_op(img, static_cast<int>(id), rng, c.search.geometry),
             (fs::path(c.apply.output) / files[i].filename()).string());
    csv << files[i].filename().string() << ',' << id << ',' << op_from_id(static_cast<int>(id)).name() << '\n';
  }
  write_text_atomically((fs::path(c.apply.output) / "applied.csv").string(), csv.str());
  out << "augmented " << files.size() << " images into " << c.apply.output << '\n';
  return exit_code::kOk;
}

}  // namespace awsaug
