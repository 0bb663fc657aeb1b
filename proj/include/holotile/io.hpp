#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holotile/encoding.hpp"
#include "holotile/grid.hpp"
#include "holotile/optimize.hpp"

namespace holotile::io {

enum class Channel { Red, Green, Blue, Gray };

/// "r", "g", "b" or "gray"; throws ConfigError otherwise.
Channel channel_from_name(const std::string& name);
const char* channel_name(Channel c);

/// Loads one channel of an 8/16-bit PNG or a binary/ASCII PGM, scaled to
/// [0, 1]. Gray sources return the same plane for every channel; gray of a
/// color source is Rec. 601 luma. When `multiple` > 1 the image is
/// center-cropped to the largest size divisible by it. Throws IoError.
Grid<double> load_image(const std::string& path, Channel channel = Channel::Gray, int multiple = 1);

/// Center crop to dimensions divisible by `multiple`.
Grid<double> center_crop(const Grid<double>& image, int multiple);

/// 8-bit gray PNG, values clamped to [0, 1] and rounded. Identical inputs
/// produce identical bytes. Throws IoError on non-finite data or write failure.
void save_image(const std::string& path, const Grid<double>& image);
/// 8-bit binary PGM with the same quantization as save_image.
void save_pgm(const std::string& path, const Grid<double>& image);
/// Hologram as an 8-bit PNG of quantize_phase levels (level k is written as gray value k).
void save_phase(const std::string& path, const PhaseMap& hologram);

/// Regular files with a .png or .pgm extension, sorted by name.
std::vector<std::string> list_images(const std::string& directory);

struct TrainerSettings {
  int steps = 200;
  opt::AdamConfig adam;
  bool augment = true;
};

struct RunConfig {
  std::uint64_t seed = 1;
  opt::PipelineConfig pipeline;  // optical.height/width are set from the data at run time
  TrainerSettings train;
  opt::IterativeConfig iterative;
  Channel image_channel = Channel::Green;
  std::string dataset_dir;
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware concurrency

  opt::TrainConfig train_config() const;
};

/// Parses a JSON document (comments allowed). Missing keys keep their
/// defaults; an empty document yields RunConfig{}. Unknown keys, wrong types
/// and out-of-range values raise ConfigError naming the field path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical JSON for a configuration; every field is present.
std::string config_to_json(const RunConfig& cfg);

/// Worker count: `requested` (0 = hardware concurrency), capped by the
/// HOLOTILE_THREADS environment variable when set. Always >= 1.
int worker_threads(int requested);

}  // namespace holotile::io
