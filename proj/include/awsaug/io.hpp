#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "awsaug/error.hpp"
#include "awsaug/image.hpp"
#include "awsaug/policy.hpp"
#include "awsaug/search.hpp"

namespace awsaug {

// ---------------------------------------------------------------------------
// Binary PPM (P6) and PGM (P5) images with maxval 255.

inline Image read_pnm(std::istream& is) {
  std::string magic;
  is >> magic;
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw UserError("unsupported image format (expected binary PPM or PGM)");
  auto next_int = [&] {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    int v = 0;
    if (!(is >> v)) throw UserError("corrupt image header");
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw UserError("only 8-bit PPM/PGM images are supported");
  is.get();  // single whitespace byte before the raster
  Image img(h, w, channels);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw UserError("truncated image raster");
  return img;
}

inline void write_pnm(std::ostream& os, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw Error("PNM output needs 1 or 3 channels");
  os << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline Image load_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("image not found: " + path);
  return read_pnm(is);
}

inline void save_pnm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  write_pnm(os, img);
  if (!os) throw Error("cannot write " + path);
}

// ---------------------------------------------------------------------------
// CSV outputs

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string join_ids(const std::vector<std::size_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ";" : "") + std::to_string(ids[i]);
  return s;
}

inline void write_records_csv(std::ostream& os, const std::vector<SearchRecord>& records) {
  os << "iteration,acc,baseline_before,advantage,entropy,samples,top5,theta_snapshot\n";
  for (const auto& r : records)
    os << r.iteration << ',' << fmt(r.acc) << ',' << (r.baseline_before ? fmt(*r.baseline_before) : "")
       << ',' << fmt(r.advantage) << ',' << fmt(r.entropy) << ',' << r.counts.total << ','
       << join_ids(r.top5) << ',' << r.theta_snapshot << '\n';
}

inline void write_marginal_header(std::ostream& os) {
  os << "iteration";
  for (int e = 0; e < kNumElements; ++e) os << ",e" << e;
  os << '\n';
}

inline void write_marginals_csv(std::ostream& os, const std::vector<SearchRecord>& records) {
  write_marginal_header(os);
  for (const auto& r : records) {
    os << r.iteration;
    for (double m : r.marginal) os << ',' << fmt(m);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Resumable search state as JSON. nlohmann writes doubles in shortest
// round-trip form, so a reload continues bit-for-bit. Records keep only the
// sample total; per-op counts are consumed by the update and not needed again.

inline nlohmann::json counts_to_json(const OpCounts& c) {
  auto sparse = nlohmann::json::array();
  for (std::size_t k = 0; k < c.counts.size(); ++k)
    if (c.counts[k]) sparse.push_back({k, c.counts[k]});
  return {{"k", c.counts.size()}, {"nonzero", sparse}};
}

inline OpCounts counts_from_json(const nlohmann::json& j) {
  OpCounts c(j.at("k").get<std::size_t>());
  for (const auto& e : j.at("nonzero")) c.add(e.at(0).get<std::size_t>(), e.at(1).get<std::uint64_t>());
  return c;
}

inline nlohmann::json state_to_json(const SearchState& s, const std::string& fingerprint) {
  nlohmann::json j;
  j["format"] = "awsaug-search-state";
  j["version"] = 1;
  j["config_fingerprint"] = fingerprint;
  j["iteration"] = s.iteration;
  j["theta"] = s.policy.theta();
  j["mask"] = s.policy.mask();
  j["adam"] = {{"m", s.adam.m}, {"v", s.adam.v}, {"step", s.adam.step}, {"lr", s.adam.lr},
               {"beta1", s.adam.beta1}, {"beta2", s.adam.beta2}, {"eps", s.adam.eps}};
  j["baseline"] = {{"value", s.baseline.value}, {"initialized", s.baseline.initialized},
                   {"decay", s.baseline.decay}};
  // Iteration t draws from the stream derived from (seed, t), so the
  // iteration count fully determines the RNG position.
  j["rng"] = "derived-per-iteration";
  auto recs = nlohmann::json::array();
  for (const auto& r : s.records) {
    nlohmann::json jr{{"iteration", r.iteration}, {"acc", r.acc}, {"advantage", r.advantage},
                      {"entropy", r.entropy}, {"top5", r.top5}, {"samples", r.counts.total}, {"marginal", r.marginal},
                      {"theta_snapshot", r.theta_snapshot}};
    jr["baseline_before"] = r.baseline_before ? nlohmann::json(*r.baseline_before) : nlohmann::json(nullptr);
    recs.push_back(std::move(jr));
  }
  j["records"] = std::move(recs);
  return j;
}

inline SearchState state_from_json(const nlohmann::json& j, const std::string& fingerprint) {
  try {
    if (j.at("format") != "awsaug-search-state" || j.at("version") != 1)
      throw UserError("not a search state file");
    if (j.at("config_fingerprint") != fingerprint)
      throw UserError("search state was written with a different configuration");
    SearchState s;
    s.iteration = j.at("iteration").get<int>();
    s.policy = PolicyParams(j.at("theta").get<std::vector<double>>(), j.at("mask").get<std::vector<std::uint8_t>>());
    const auto& a = j.at("adam");
    s.adam = AdamState{a.at("m").get<std::vector<double>>(), a.at("v").get<std::vector<double>>(),
                       a.at("step").get<std::uint64_t>(), a.at("lr").get<double>(), a.at("beta1").get<double>(),
                       a.at("beta2").get<double>(), a.at("eps").get<double>()};
    const auto& b = j.at("baseline");
    s.baseline = BaselineState{b.at("value").get<double>(), b.at("initialized").get<bool>(), b.at("decay").get<double>()};
    for (const auto& jr : j.at("records")) {
      SearchRecord r;
      r.iteration = jr.at("iteration").get<int>();
      r.acc = jr.at("acc").get<double>();
      if (!jr.at("baseline_before").is_null()) r.baseline_before = jr.at("baseline_before").get<double>();
      r.advantage = jr.at("advantage").get<double>();
      r.entropy = jr.at("entropy").get<double>();
      r.top5 = jr.at("top5").get<std::vector<std::size_t>>();
      r.counts.total = jr.at("samples").get<std::uint64_t>();
      r.marginal = jr.at("marginal").get<std::vector<double>>();
      r.theta_snapshot = jr.at("theta_snapshot").get<std::string>();
      s.records.push_back(std::move(r));
    }
    if (static_cast<int>(s.records.size()) != s.iteration) throw UserError("corrupt search state");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("corrupt search state: ") + e.what());
  }
}

inline void write_text_atomically(const std::string& path, const std::string& text) {
  detail::write_atomically(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace awsaug
