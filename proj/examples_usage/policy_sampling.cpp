// Build a policy, push some mass toward photometric ops, sample and apply
// a few of them to a synthetic image.
//
//   ./example_policy_sampling [out_dir]

#include <cmath>
#include <filesystem>
#include <iostream>

#include "awsaug/data.hpp"
#include "awsaug/io.hpp"
#include "awsaug/policy.hpp"

using namespace awsaug;

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "policy_sampling_out";
  std::filesystem::create_directories(out);

  // Uniform start, then favour every pair whose first element is Invert.
  std::vector<double> theta(kNumOps, -8.0);
  for (int b = 0; b < kNumElements; ++b) theta[static_cast<std::size_t>(op_id(35, b))] = -4.0;
  const auto policy = PolicyParams::from_theta(theta);
  std::cout << "entropy " << entropy(policy) << " nats (uniform " << std::log(double(kNumOps)) << ")\n";

  std::cout << "most likely ops:\n";
  const auto ranked = ranked_ops(policy);
  const auto probs = probabilities(policy);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto id = ranked[i];
    std::cout << "  " << op_from_id(static_cast<int>(id)).name() << "  p=" << probs[id] << '\n';
  }

  const Image img = synth_dataset(1, 10, 32, 7).images[0];
  save_pnm(img, (out / "original.ppm").string());
  const OpSampler sampler(policy);
  Rng rng(42);
  for (int i = 0; i < 6; ++i) {
    const auto id = static_cast<int>(sampler.sample(rng));
    const Image aug = apply_op(img, id, rng);
    const auto file = out / ("sample" + std::to_string(i) + ".ppm");
    save_pnm(aug, file.string());
    std::cout << file.string() << "  " << op_from_id(id).name() << '\n';
  }
}
