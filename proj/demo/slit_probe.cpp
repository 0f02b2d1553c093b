// Single and double slit responses of a checkpoint (or an untrained tiny
// model). Usage: slit_probe [checkpoint_dir]

#include <cstdio>

#include "spacenet/spacenet.hpp"

using namespace spacenet;

int main(int argc, char** argv) {
  ExperimentConfig c;
  const Model<float> model = argc > 1 ? load_checkpoint_model<float>(read_checkpoint(argv[1]))
                                      : build_model<float>(model_config(c), c.seed);
  const Size size = model.config().input_size;
  for (SlitKind kind : {SlitKind::single, SlitKind::double_slit}) {
    const auto probe = make_slit_probe(size, kind, c.analysis.probe.slit_length, c.analysis.probe.separation);
    const auto maps = probe_response(model, probe, kLastHidden);
    const auto agg = aggregate_waviness(maps, c.analysis.waviness_threshold, Reduction::center_line);
    std::printf("%s slit: %zu channels, mean centre-line waviness %.4f\n",
                kind == SlitKind::single ? "single" : "double", maps.size(), agg.mean);
  }
}
