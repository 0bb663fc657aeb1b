#pragma once

// Network components of the tiled hologram pipeline: the backbone used as
// phase generator and phase encoder, the LFMN sub-hologram merge network,
// and the two-stage pyramid merge for x4 tiling.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "holotile/autodiff.hpp"

namespace holotile::nn {

template <class T>
using Tensor = ad::Tensor<T>;
template <class T>
using Tape = ad::Tape<T>;

template <class T>
struct Conv {
  Tensor<T> weight;  // (out, in, k, k)
  Tensor<T> bias;    // (1, out, 1, 1)

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
};

/// Named view over every learnable tensor of a model, in a fixed order.
template <class T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

// ---- LFMN ------------------------------------------------------------------

struct LfmnConfig {
  int scale = 2;      // r; the network merges r^2 sub-holograms
  int features = 32;  // C
  int blocks = 4;     // B stacked LFMM blocks
  bool use_grn = true;
  bool use_lfm = true;
  bool use_eccm = true;
  double tail_gain = 0.1;  // scales the initial tail weights; the merge starts near a plain shuffle
};

template <class T>
struct LfmParams {
  Conv<T> reduce;   // C -> C/2
  Conv<T> mix;      // C/2 -> C/2
  Conv<T> restore;  // C/2 -> C
};

template <class T>
struct EccmParams {
  Conv<T> expand;   // C -> floor(1.25 C)
  Conv<T> project;  // floor(1.25 C) -> C
};

template <class T>
struct LfmmParams {
  LfmParams<T> lfm;
  EccmParams<T> eccm;
};

template <class T>
struct LfmnParams {
  LfmnConfig config;
  Conv<T> head;  // r^2 -> C
  Tensor<T> grn_gamma, grn_beta;
  std::vector<LfmmParams<T>> blocks;
  Conv<T> tail;  // C -> r^2
};

/// Hidden width of the channel mixer: floor(1.25 C).
int eccm_hidden_width(int features);

template <class T>
LfmnParams<T> init_lfmn(const LfmnConfig& cfg, std::mt19937_64& rng);

template <class T>
Tensor<T> lfm_forward(Tape<T>& tape, const Tensor<T>& features, const LfmParams<T>& p);
template <class T>
Tensor<T> eccm_forward(Tape<T>& tape, const Tensor<T>& features, const EccmParams<T>& p);
/// F' = LFM(F) + F;  F'' = ECCM(F') + F'. Disabled components are skipped.
template <class T>
Tensor<T> lfmm_forward(Tape<T>& tape, const Tensor<T>& features, const LfmmParams<T>& p,
                       bool use_lfm = true, bool use_eccm = true);

/// (1, r^2, h, w) sub-holograms -> (1, 1, h r, w r):
///   F = GRN(head(I)),  out = PS(tail(LFMM^B(F)) + I, r)
template <class T>
Tensor<T> lfmn_forward(Tape<T>& tape, const Tensor<T>& sub_holograms, const LfmnParams<T>& p);

// ---- pyramid ---------------------------------------------------------------

template <class T>
struct PyramidParams {
  LfmnParams<T> stage1;  // shared by the four groups
  LfmnParams<T> stage2;
};

template <class T>
PyramidParams<T> init_pyramid(const LfmnConfig& cfg, std::mt19937_64& rng);

/// (1, 16, h, w) -> (1, 1, 4h, 4w) through two x2 merges.
template <class T>
Tensor<T> pyramid_merge(Tape<T>& tape, const Tensor<T>& tiles16, const PyramidParams<T>& p);

// ---- backbone --------------------------------------------------------------

struct BackboneConfig {
  int in_channels = 1;
  int out_channels = 1;
  int base_width = 16;  // widest level has base_width * 2^(levels - 1) channels
  int levels = 2;       // resolution levels; each extra level halves H and W
  double output_gain = 0.1;  // scales the initial out_conv weights; predicted phases start near 0
};

template <class T>
struct BackboneParams {
  BackboneConfig config;
  Conv<T> in_conv;
  Conv<T> in_conv2;
  std::vector<Conv<T>> down;   // after space-to-depth: 4 w_{l-1} -> w_l
  std::vector<Conv<T>> down2;  // w_l -> w_l
  std::vector<Conv<T>> up;     // w_l -> 4 w_{l-1}, then depth-to-space
  std::vector<Conv<T>> up2;    // w_{l-1} -> w_{l-1}
  Conv<T> out_conv;            // w_0 -> out_channels
};

/// Channel width at level l.
int backbone_width(const BackboneConfig& cfg, int level);

template <class T>
BackboneParams<T> init_backbone(const BackboneConfig& cfg, std::mt19937_64& rng);

/// Encoder-decoder with space-to-depth downsampling, depth-to-space
/// upsampling and additive skips. Spatial dims must be divisible by
/// 2^(levels - 1).
template <class T>
Tensor<T> backbone_forward(Tape<T>& tape, const Tensor<T>& x, const BackboneParams<T>& p);

/// (1, r^2, h, w) amplitudes -> (1, r^2, h, w) unbounded phases.
template <class T>
Tensor<T> generator_forward(Tape<T>& tape, const Tensor<T>& sub_images, const BackboneParams<T>& p);

/// (1, 2 r^2, h, w) real/imag stacked SLM-plane sub-fields -> (1, r^2, h, w) phases.
template <class T>
Tensor<T> encoder_forward(Tape<T>& tape, const Tensor<T>& sub_fields, const BackboneParams<T>& p);

// ---- parameter utilities ---------------------------------------------------

template <class T>
void collect(ParamList<T>& out, const std::string& prefix, const LfmnParams<T>& p);
template <class T>
void collect(ParamList<T>& out, const std::string& prefix, const PyramidParams<T>& p);
template <class T>
void collect(ParamList<T>& out, const std::string& prefix, const BackboneParams<T>& p);

template <class T>
void zero_parameters(const ParamList<T>& params);
template <class T>
std::size_t parameter_count(const ParamList<T>& params);

// ---- checkpoint container --------------------------------------------------

/// One named array in a checkpoint. Values are stored as float64 or float32.
struct CheckpointEntry {
  std::string name;
  std::vector<std::int32_t> dims;
  bool is_f64 = false;
  std::vector<double> values;
};

inline constexpr char kCheckpointMagic[] = "HOLOTILE1";

/// Writes the versioned little-endian container. Throws IoError.
void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

template <class T>
std::vector<CheckpointEntry> to_entries(const ParamList<T>& params);
/// Copies values for every name present in both; throws DimensionError on
/// shape mismatch and ConfigError when a parameter is missing.
template <class T>
void load_entries(const std::vector<CheckpointEntry>& entries, const ParamList<T>& params);

}  // namespace holotile::nn
