// awsaug: augmentation policy search with augmentation-wise weight sharing.
//
//   awsaug search          [--config F] [--preset P] [--seed N] [--workers N] [--out DIR] [--resume]
//   awsaug compare-proxies ...
//   awsaug ablate          ... [--policy FILE]
//   awsaug schedule        ... [--policy FILE|uniform]
//   awsaug verify          ...
//   awsaug apply           ... --policy FILE|uniform --input DIR --output DIR
//
// Settings are layered: preset, then the config file, then flags.
// Exit codes: 0 ok, 1 internal failure, 2 usage or configuration error,
// 3 verification failed.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "awsaug/commands.hpp"

using namespace awsaug;

namespace {

struct Common {
  std::string config;
  std::string preset_name = "toy";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  bool resume = false;
  std::optional<std::string> policy, input, output;
};

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--preset", o.preset_name, "base profile")
      ->check(CLI::IsMember({"toy", "paper-cifar", "paper-imagenet"}));
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--workers", o.workers, "worker threads (results do not depend on it)");
  cmd->add_option("--out", o.out, "output directory");
}

RunConfig effective_config(const Common& o) {
  RunConfig c = preset(o.preset_name);
  if (!o.config.empty()) c = load_run_config(o.config, c);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = *o.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmentation policy search with augmentation-wise weight sharing"};
  app.require_subcommand(1);
  Common o;

  auto* search = app.add_subcommand("search", "train shared weights, then search a policy");
  add_common(search, o);
  search->add_flag("--resume", o.resume, "continue from <out>/search_state.json");

  auto* compare = app.add_subcommand("compare-proxies", "correlate proxy accuracy with full training");
  add_common(compare, o);

  auto* abl = app.add_subcommand("ablate", "retrain without the top-k operations");
  add_common(abl, o);
  abl->add_option("--policy", o.policy, "policy file (default <out>/policy.txt)");

  auto* sched = app.add_subcommand("schedule", "augment early vs late epochs");
  add_common(sched, o);
  sched->add_option("--policy", o.policy, "policy file or \"uniform\"");

  auto* verify = app.add_subcommand("verify", "check the shared-policy KL proposition by enumeration");
  add_common(verify, o);

  auto* apply = app.add_subcommand("apply", "augment a directory of PPM/PGM images");
  add_common(apply, o);
  apply->add_option("--policy", o.policy, "policy file or \"uniform\"");
  apply->add_option("--input", o.input, "input directory");
  apply->add_option("--output", o.output, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::kOk : exit_code::kUser;
  }

  try {
    RunConfig c = effective_config(o);
    if (o.policy) {
      c.ablate.policy = *o.policy;
      c.schedule.policy = *o.policy;
      c.apply.policy = *o.policy;
    }
    if (o.input) c.apply.input = *o.input;
    if (o.output) c.apply.output = *o.output;

    if (search->parsed()) return cmd_search(c, o.resume, std::cout);
    if (compare->parsed()) return cmd_compare_proxies(c, std::cout);
    if (abl->parsed()) return cmd_ablate(c, std::cout);
    if (sched->parsed()) return cmd_schedule(c, std::cout);
    if (verify->parsed()) return cmd_verify(c, std::cout);
    if (apply->parsed()) return cmd_apply(c, std::cout);
  } catch (const UserError& e) {
    std::cerr << "awsaug: " << e.what() << '\n';
    return exit_code::kUser;
  } catch (const std::exception& e) {
    std::cerr << "awsaug: internal error: " << e.what() << '\n';
    return exit_code::kInternal;
  }
  return exit_code::kInternal;
}
