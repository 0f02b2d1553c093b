// Train the desk profile, then print accuracy and the waviness of the
// last hidden layer. Usage: desk_run [out_dir] [epochs]

#include <cstdio>
#include <string>

#include "spacenet/spacenet.hpp"

using namespace spacenet;

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "desk-run";
  ExperimentConfig c;
  if (argc > 2) c.train.epochs = std::stoi(argv[2]);

  const ExperimentRecord r = run_experiment(c, out);
  std::printf("train Acc_space %.4f  test Acc_space %.4f\n", r.train_acc_space, r.acc_space);
  std::printf("last_hidden waviness %.4f (%s)\n", r.waviness, r.wave_pattern ? "wave pattern" : "no wave pattern");
  for (const auto& [name, path] : r.artifacts) std::printf("  %-10s %s\n", name.c_str(), path.c_str());
}
