// Frequency attack against the resonant oracle on flat gray images. Prints
// the wavelength × orientation score map; the dip sits at (8 px, 30°).

#include <cstdio>

#include "spacenet/spacenet.hpp"

using namespace spacenet;

int main() {
  AttackDataset<int> data;
  for (int i = 0; i < 4; ++i) {
    data.images.emplace_back(Size{64, 64}, 128.0);
    data.references.push_back(i);
  }
  const auto r = frequency_attack(make_resonant_adapter(8.0, 30.0), data, AttackGrid{}, 8.0);
  std::vector<double> ls, ts;
  const auto map = attack_score_map(r, &ls, &ts);
  std::printf("lambda\\theta");
  for (double t : ts) std::printf("%7.0f", t);
  std::printf("\n");
  for (std::size_t i = 0; i < ls.size(); ++i) {
    std::printf("%12.0f", ls[i]);
    for (std::size_t j = 0; j < ts.size(); ++j) std::printf("%7.3f", map(static_cast<int>(i), static_cast<int>(j)));
    std::printf("\n");
  }
  std::printf("strongest: lambda %g theta %g phase %g score %.4f (baseline %.4f)\n", r.strongest.wavelength,
              r.strongest.theta, r.strongest.phase, r.strongest.score, r.baseline_score);
}
