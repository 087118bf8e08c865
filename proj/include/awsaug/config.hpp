#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "awsaug/data.hpp"
#include "awsaug/error.hpp"
#include "awsaug/oracle.hpp"
#include "awsaug/search.hpp"

namespace awsaug {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | cifar
  std::vector<std::string> cifar_files;
  SplitSpec split;
  std::size_t subsample = 0;  // >0: keep at most this many source images
  std::size_t synth_train = 500;
  std::size_t synth_val = 2000;
  int synth_size = 16;
  int synth_classes = 10;
  std::uint64_t synth_seed = 7;
  SynthConfig synth;
  // Train split without pose and polarity variation; only the validation
  // split shows them, so augmentation has something to teach.
  bool synth_narrow_train = false;
};

struct CompareConfig {
  std::size_t n_policies = 12;
};

struct ScheduleSettings {
  ScheduleConfig run{{4, 8, 12, 16, 19}, 5, true};
  std::string policy = "uniform";  // "uniform" or a policy file
};

struct AblateConfig {
  std::vector<std::size_t> k{0, 1, 2, 3};
  int seeds = 3;
  std::string policy;  // empty: <out>/policy.txt
};

struct VerifyConfig {
  int thetas = 50;
  std::size_t grid_resolution = 10;
  std::vector<oracle::TrajectorySpace> spaces{{3, 3, 2}, {4, 2, 1}, {4, 3, 2}, {5, 3, 1}, {5, 4, 2}};
};

struct ApplyConfig {
  std::string policy = "uniform";
  std::string input;
  std::string output;
};

struct RunConfig {
  std::string preset = "toy";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = "awsaug-out";
  int snapshot_every = 20;  // write a theta snapshot every N iterations (0: never)
  DataConfig data;
  SearchConfig search;
  CompareConfig compare;
  ScheduleSettings schedule;
  AblateConfig ablate;
  VerifyConfig verify;
  ApplyConfig apply;
};

// ---------------------------------------------------------------------------
// Presets

inline RunConfig toy_preset() {
  RunConfig c;
  c.preset = "toy";
  c.search.n_early = 20;
  c.search.n_late = 3;
  c.search.t_max = 200;
  c.search.train.batch_size = 16;
  c.search.train.lr_max = 0.02;
  c.search.preprocess.pad = 2;
  c.search.preprocess.cutout = 0;
  c.search.finetune = FinetuneSchedule::Constant;
  c.search.finetune_lr = 0.005;
  c.data.synth.rotate = 30.0;
  c.data.synth.shear = 0.3;
  c.data.synth_narrow_train = true;
  c.compare.n_policies = 48;  // r from 12 points swings by +-0.2 between seeds
  return c;
}

// Paper-scale hyperparameters on CIFAR-10 binaries.
inline RunConfig paper_cifar_preset() {
  RunConfig c;
  c.preset = "paper-cifar";
  c.data.source = "cifar";
  c.search.n_early = 200;
  c.search.n_late = 10;
  c.search.t_max = 500;
  c.search.train.batch_size = 256;
  c.search.train.lr_max = 0.1;
  c.search.preprocess = PreprocessConfig{};
  c.search.finetune = FinetuneSchedule::Handoff;
  c.snapshot_every = 50;
  return c;
}

inline RunConfig paper_imagenet_preset() {
  RunConfig c = paper_cifar_preset();
  c.preset = "paper-imagenet";
  c.search.n_early = 150;
  c.search.n_late = 5;
  c.search.lr_theta = 0.2;
  return c;
}

inline RunConfig preset(const std::string& name) {
  if (name == "toy") return toy_preset();
  if (name == "paper-cifar") return paper_cifar_preset();
  if (name == "paper-imagenet") return paper_imagenet_preset();
  throw UserError("unknown preset: " + name);
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline const char* finetune_name(FinetuneSchedule f) {
  switch (f) {
    case FinetuneSchedule::Handoff: return "handoff";
    case FinetuneSchedule::ContinueCosine: return "continue-cosine";
    case FinetuneSchedule::Constant: return "constant";
  }
  return "?";
}

inline FinetuneSchedule parse_finetune(const std::string& s) {
  for (auto f : {FinetuneSchedule::Handoff, FinetuneSchedule::ContinueCosine, FinetuneSchedule::Constant})
    if (s == finetune_name(f)) return f;
  throw UserError("unknown finetune schedule: " + s);
}

inline Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return Schedule::Cosine;
  if (s == "constant") return Schedule::Constant;
  throw UserError("unknown lr schedule: " + s);
}

// Reads an object, assigning only the keys present and rejecting the rest.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UserError("config: " + where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UserError("config: wrong type for " + where(key));
    }
  }

  template <class F>
  void text(const char* key, F&& assign) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (present) assign(s);
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  const nlohmann::json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw UserError("config: unknown key " + where(k.c_str()));
  }

 private:
  std::string where(const char* key = nullptr) const {
    if (key == nullptr) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& s = c.search;
  json spaces = json::array();
  for (const auto& sp : c.verify.spaces)
    spaces.push_back({{"k_ops", sp.k_ops}, {"n_steps", sp.n_steps}, {"k_early", sp.k_early}});
  return json{
      {"preset", c.preset},
      {"seed", c.seed},
      {"workers", c.workers},
      {"out", c.out},
      {"snapshot_every", c.snapshot_every},
      {"data",
       {{"source", c.data.source},
        {"cifar_files", c.data.cifar_files},
        {"subsample", c.data.subsample},
        {"split",
         {{"train_size", c.data.split.train_size},
          {"val_size", c.data.split.val_size},
          {"test_size", c.data.split.test_size},
          {"classes", c.data.split.classes},
          {"seed", c.data.split.seed}}},
        {"synthetic",
         {{"train", c.data.synth_train},
          {"val", c.data.synth_val},
          {"size", c.data.synth_size},
          {"classes", c.data.synth_classes},
          {"seed", c.data.synth_seed},
          {"jitter", c.data.synth.jitter},
          {"noise", c.data.synth.noise},
          {"min_contrast", c.data.synth.min_contrast},
          {"max_contrast", c.data.synth.max_contrast},
          {"tint", c.data.synth.tint},
          {"ramp", c.data.synth.ramp},
          {"rotate", c.data.synth.rotate},
          {"shear", c.data.synth.shear},
          {"random_polarity", c.data.synth.random_polarity},
          {"narrow_train", c.data.synth_narrow_train}}}}},
      {"search",
       {{"n_early", s.n_early},
        {"n_late", s.n_late},
        {"t_max", s.t_max},
        {"proxy", proxy_name(s.proxy)},
        {"theta_init", s.theta_init},
        {"finetune", detail::finetune_name(s.finetune)},
        {"finetune_lr", s.finetune_lr},
        {"common_random_numbers", s.common_random_numbers},
        {"arch", s.arch}}},
      {"ppo",
       {{"clip", s.ppo.clip},
        {"surrogate_epochs", s.ppo.surrogate_epochs},
        {"lr_theta", s.lr_theta},
        {"beta1", s.beta1},
        {"beta2", s.beta2}}},
      {"train",
       {{"batch_size", s.train.batch_size},
        {"lr_max", s.train.lr_max},
        {"momentum", s.train.momentum},
        {"weight_decay", s.train.weight_decay},
        {"schedule", s.train.schedule == Schedule::Cosine ? "cosine" : "constant"},
        {"eb_factor", s.train.eb_factor}}},
      {"preprocess",
       {{"flip_prob", s.preprocess.flip_prob},
        {"pad", s.preprocess.pad},
        {"cutout", s.preprocess.cutout},
        {"cutout_fill", s.preprocess.cutout_fill}}},
      {"geometry", {{"fill", s.geometry.fill}, {"random_sign", s.geometry.random_sign}}},
      {"compare", {{"n_policies", c.compare.n_policies}}},
      {"schedule",
       {{"grid", c.schedule.run.grid},
        {"seeds", c.schedule.run.seeds},
        {"toggle_basic", c.schedule.run.toggle_basic},
        {"policy", c.schedule.policy}}},
      {"ablate", {{"k", c.ablate.k}, {"seeds", c.ablate.seeds}, {"policy", c.ablate.policy}}},
      {"verify", {{"thetas", c.verify.thetas}, {"grid_resolution", c.verify.grid_resolution}, {"spaces", spaces}}},
      {"apply", {{"policy", c.apply.policy}, {"input", c.apply.input}, {"output", c.apply.output}}},
  };
}

// Overlays `j` onto `c`. A "preset" key, if present, resets c to that preset
// first; every other key overrides one field.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  detail::Section root(j, "");
  if (root.has("preset")) {
    std::string name;
    root.get("preset", name);
    const auto keep_seed = c.seed;
    c = preset(name);
    c.seed = keep_seed;
  }
  root.get("seed", c.seed);
  root.get("workers", c.workers);
  root.get("out", c.out);
  root.get("snapshot_every", c.snapshot_every);
  auto& s = c.search;
  if (root.has("data")) {
    auto d = root.sub("data");
    d.get("source", c.data.source);
    d.get("cifar_files", c.data.cifar_files);
    d.get("subsample", c.data.subsample);
    if (d.has("split")) {
      auto sp = d.sub("split");
      sp.get("train_size", c.data.split.train_size);
      sp.get("val_size", c.data.split.val_size);
      sp.get("test_size", c.data.split.test_size);
      sp.get("classes", c.data.split.classes);
      sp.get("seed", c.data.split.seed);
      sp.finish();
    }
    if (d.has("synthetic")) {
      auto sy = d.sub("synthetic");
      sy.get("train", c.data.synth_train);
      sy.get("val", c.data.synth_val);
      sy.get("size", c.data.synth_size);
      sy.get("classes", c.data.synth_classes);
      sy.get("seed", c.data.synth_seed);
      sy.get("jitter", c.data.synth.jitter);
      sy.get("noise", c.data.synth.noise);
      sy.get("min_contrast", c.data.synth.min_contrast);
      sy.get("max_contrast", c.data.synth.max_contrast);
      sy.get("tint", c.data.synth.tint);
      sy.get("ramp", c.data.synth.ramp);
      sy.get("rotate", c.data.synth.rotate);
      sy.get("shear", c.data.synth.shear);
      sy.get("random_polarity", c.data.synth.random_polarity);
      sy.get("narrow_train", c.data.synth_narrow_train);
      sy.finish();
    }
    d.finish();
  }
  if (root.has("search")) {
    auto x = root.sub("search");
    x.get("n_early", s.n_early);
    x.get("n_late", s.n_late);
    x.get("t_max", s.t_max);
    x.text("proxy", [&](const std::string& v) { s.proxy = parse_proxy(v); });
    x.get("theta_init", s.theta_init);
    x.text("finetune", [&](const std::string& v) { s.finetune = detail::parse_finetune(v); });
    x.get("finetune_lr", s.finetune_lr);
    x.get("common_random_numbers", s.common_random_numbers);
    x.get("arch", s.arch);
    x.finish();
  }
  if (root.has("ppo")) {
    auto x = root.sub("ppo");
    x.get("clip", s.ppo.clip);
    x.get("surrogate_epochs", s.ppo.surrogate_epochs);
    x.get("lr_theta", s.lr_theta);
    x.get("beta1", s.beta1);
    x.get("beta2", s.beta2);
    x.finish();
  }
  if (root.has("train")) {
    auto x = root.sub("train");
    x.get("batch_size", s.train.batch_size);
    x.get("lr_max", s.train.lr_max);
    x.get("momentum", s.train.momentum);
    x.get("weight_decay", s.train.weight_decay);
    x.text("schedule", [&](const std::string& v) { s.train.schedule = detail::parse_schedule(v); });
    x.get("eb_factor", s.train.eb_factor);
    x.finish();
  }
  if (root.has("preprocess")) {
    auto x = root.sub("preprocess");
    x.get("flip_prob", s.preprocess.flip_prob);
    x.get("pad", s.preprocess.pad);
    x.get("cutout", s.preprocess.cutout);
    x.get("cutout_fill", s.preprocess.cutout_fill);
    x.finish();
  }
  if (root.has("geometry")) {
    auto x = root.sub("geometry");
    x.get("fill", s.geometry.fill);
    x.get("random_sign", s.geometry.random_sign);
    x.finish();
  }
  if (root.has("compare")) {
    auto x = root.sub("compare");
    x.get("n_policies", c.compare.n_policies);
    x.finish();
  }
  if (root.has("schedule")) {
    auto x = root.sub("schedule");
    x.get("grid", c.schedule.run.grid);
    x.get("seeds", c.schedule.run.seeds);
    x.get("toggle_basic", c.schedule.run.toggle_basic);
    x.get("policy", c.schedule.policy);
    x.finish();
  }
  if (root.has("ablate")) {
    auto x = root.sub("ablate");
    x.get("k", c.ablate.k);
    x.get("seeds", c.ablate.seeds);
    x.get("policy", c.ablate.policy);
    x.finish();
  }
  if (root.has("verify")) {
    auto x = root.sub("verify");
    x.get("thetas", c.verify.thetas);
    x.get("grid_resolution", c.verify.grid_resolution);
    if (x.has("spaces")) {
      const auto& arr = x.raw("spaces");
      if (!arr.is_array()) throw UserError("config: verify.spaces must be an array");
      c.verify.spaces.clear();
      for (const auto& e : arr) {
        detail::Section sp(e, "verify.spaces[]");
        oracle::TrajectorySpace t;
        sp.get("k_ops", t.k_ops);
        sp.get("n_steps", t.n_steps);
        sp.get("k_early", t.k_early);
        sp.finish();
        c.verify.spaces.push_back(t);
      }
    }
    x.finish();
  }
  if (root.has("apply")) {
    auto x = root.sub("apply");
    x.get("policy", c.apply.policy);
    x.get("input", c.apply.input);
    x.get("output", c.apply.output);
    x.finish();
  }
  root.finish();
}

inline void validate(const RunConfig& c) {
  if (c.workers < 1) throw UserError("workers must be at least 1");
  if (c.snapshot_every < 0) throw UserError("snapshot_every must be non-negative");
  if (c.data.source != "synthetic" && c.data.source != "cifar")
    throw UserError("data.source must be \"synthetic\" or \"cifar\"");
  if (c.data.synth_size < 8 || c.data.synth_classes < 1 || c.data.synth_classes > kSynthShapes)
    throw UserError("invalid synthetic data configuration");
  validate(c.search);
  for (const auto& sp : c.verify.spaces) {
    try {
      sp.validate();
    } catch (const Error& e) {
      throw UserError(std::string("verify.spaces: ") + e.what());
    }
  }
}

inline RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw UserError("config file not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw UserError(std::string("config is not valid JSON: ") + e.what());
  }
  apply_json(base, j);
  return base;
}

// Stable identity of the settings that determine a search trajectory.
inline std::string search_fingerprint(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  for (const char* k : {"workers", "out", "compare", "schedule", "ablate", "verify", "apply"}) j.erase(k);
  j["search"].erase("t_max");  // a finished run may be extended
  std::ostringstream os;
  os << std::hex << fnv1a(j.dump());
  return os.str();
}

// ---------------------------------------------------------------------------
// Data loading

inline SearchData load_data(const RunConfig& c) {
  if (c.data.source == "synthetic") {
    const SynthConfig train_cfg = c.data.synth_narrow_train ? c.data.synth.narrowed() : c.data.synth;
    SearchData d{synth_dataset(c.data.synth_train, c.data.synth_classes, c.data.synth_size, c.data.synth_seed, train_cfg),
                 synth_dataset(c.data.synth_val, c.data.synth_classes, c.data.synth_size,
                               stream_seed(c.data.synth_seed, 0x7a1), c.data.synth)};
    d.val.tag = SplitTag::Val;
    return d;
  }
  if (c.data.cifar_files.empty()) throw UserError("dataset not found: data.cifar_files is empty");
  Dataset all = load_cifar_binary(c.data.cifar_files);
  if (c.data.subsample > 0) all = subsample(all, c.data.subsample, 0, c.data.split.seed);
  auto [tr, va] = split(all, c.data.split);
  return SearchData{std::move(tr), std::move(va)};
}

}  // namespace awsaug
