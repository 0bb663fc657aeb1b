#pragma once

// End-to-end tiled hologram pipeline, its trainer, and the two classic
// iterative baselines (gradient descent on the SLM phase, Gerchberg-Saxton).
//
// Sign convention: the target plane sits at distance d in front of the SLM.
// Target -> SLM propagation uses +d, SLM -> target uses -d.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "holotile/autodiff.hpp"
#include "holotile/encoding.hpp"
#include "holotile/nnets.hpp"
#include "holotile/propagation.hpp"
#include "holotile/wavefield.hpp"

namespace holotile::opt {

enum class LossKind { Mse, L2Scaled };

const char* loss_name(LossKind kind);
/// Throws ConfigError for anything but "mse" or "l2_scaled".
LossKind loss_from_name(const std::string& name);

struct PipelineConfig {
  int scale = 2;  // r in {1, 2, 4}
  bool use_pyramid = false;  // two-stage x2 merge; requires r = 4
  OpticalConfig optical;     // height/width give the full-definition grid
  std::size_t channel = 0;   // index into optical.wavelengths
  int pad_factor = 2;
  LossKind loss = LossKind::L2Scaled;
  nn::LfmnConfig lfmn;       // its scale is derived from `scale`
  int backbone_width = 16;
  int backbone_levels = 2;
  // Ablations.
  bool shuffle_only_merge = false;  // merge by pixel shuffle alone
  bool low_definition_asm = false;  // propagate each sub-field on its own grid at pitch p r

  double wavelength() const { return optical.wavelengths.at(channel); }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Number of sub-images / sub-holograms: r^2.
inline int tile_count(const PipelineConfig& cfg) { return cfg.scale * cfg.scale; }

template <class T>
struct PipelineParams {
  nn::BackboneParams<T> generator;
  nn::BackboneParams<T> encoder;
  std::optional<nn::LfmnParams<T>> lfmn;
  std::optional<nn::PyramidParams<T>> pyramid;

  /// Stable names: "generator.*", "encoder.*", then "lfmn.*" or "pyramid.*".
  nn::ParamList<T> list() const;
};

template <class T>
PipelineParams<T> init_pipeline(const PipelineConfig& cfg, std::uint64_t seed);

/// Transfer functions shared by every forward pass of one configuration.
template <class T>
struct PipelineOptics {
  TransferFunction<T> to_slm;     // +d, full definition
  TransferFunction<T> to_target;  // -d, full definition
  std::optional<TransferFunction<T>> to_slm_low;  // +d, (H/r, W/r) at pitch p r
};

template <class T>
PipelineOptics<T> make_optics(const PipelineConfig& cfg);

/// Differentiable pass over one image.
template <class T>
struct PipelineGraph {
  ad::Tensor<T> loss;
  ad::Tensor<T> amplitude;  // (1, 1, H, W) unscaled reconstructed amplitude
  ad::Tensor<T> phase;      // (1, 1, H, W) unwrapped SLM phase
};

/// Runs stages (1)-(7) under their memory-ledger stages. `image` must match
/// cfg.optical.height x width and lie in [0, 1].
template <class T>
PipelineGraph<T> pipeline_graph(ad::Tape<T>& tape, const Grid<T>& image, const PipelineParams<T>& params,
                                const PipelineOptics<T>& optics, const PipelineConfig& cfg);

/// The same computation without any tiling: generator and encoder run on the
/// full grid and the merge is the identity. Requires cfg.scale == 1.
template <class T>
PipelineGraph<T> baseline_graph(ad::Tape<T>& tape, const Grid<T>& image, const PipelineParams<T>& params,
                                const PipelineOptics<T>& optics, const PipelineConfig& cfg);

struct Synthesis {
  PhaseMap hologram;
  Grid<double> reconstruction;  // s |u| with the closed-form s; not clamped
  double scale = 0;
};

/// Inference: hologram and scaled reconstruction.
template <class T>
Synthesis forward_pipeline(const Grid<T>& image, const PipelineParams<T>& params,
                           const PipelineOptics<T>& optics, const PipelineConfig& cfg);

// ---- losses ----------------------------------------------------------------

/// argmin_s ||s a - b||^2 = <a, b> / <a, a>; 0 when a is all zeros.
double optimal_scale(std::span<const double> a, std::span<const double> b);
double loss_mse(const Grid<double>& recon, const Grid<double>& target);
double loss_l2_scaled(const Grid<double>& recon, const Grid<double>& target);

// ---- Adam ------------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;  // one accumulator per parameter tensor
  std::vector<std::vector<T>> v;
};

template <class T>
AdamState<T> make_adam(const std::vector<std::size_t>& sizes, const AdamConfig& cfg = {});
template <class T>
AdamState<T> make_adam(const nn::ParamList<T>& params, const AdamConfig& cfg = {});

/// One bias-corrected Adam update. Throws DimensionError when counts or
/// sizes disagree with the state.
template <class T>
void adam_step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads,
               AdamState<T>& state);

/// Uses each tensor's accumulated gradient (absent = zero), then clears it.
template <class T>
void adam_step(const nn::ParamList<T>& params, AdamState<T>& state);

// ---- training --------------------------------------------------------------

struct TrainConfig {
  int steps = 200;  // total optimizer steps, counting any resumed ones
  std::uint64_t seed = 1;
  AdamConfig adam;
  bool augment = true;  // independent 50% horizontal and vertical flips
};

template <class T>
struct TrainState {
  PipelineParams<T> params;
  AdamState<T> adam;
  std::vector<double> losses;  // loss of every completed step, before its update
};

template <class T>
TrainState<T> init_training(const PipelineConfig& cfg, const TrainConfig& tcfg);

/// Which image and which flips step `step` uses. Depends only on (seed, step, n).
struct StepPlan {
  std::size_t image = 0;
  bool flip_h = false;
  bool flip_v = false;
};
StepPlan plan_step(std::uint64_t seed, std::int64_t step, std::size_t dataset_size);

template <class T>
Grid<T> apply_flips(const Grid<T>& image, bool flip_h, bool flip_v);

/// Continues from state.adam.step until tcfg.steps. Deterministic given the
/// state, the dataset and tcfg. Throws ConfigError on an empty dataset.
template <class T>
void train(TrainState<T>& state, const std::vector<Grid<T>>& dataset, const PipelineConfig& cfg,
           const PipelineOptics<T>& optics, const TrainConfig& tcfg);

/// Mean loss over the dataset without augmentation.
template <class T>
double dataset_loss(const std::vector<Grid<T>>& dataset, const PipelineParams<T>& params,
                    const PipelineOptics<T>& optics, const PipelineConfig& cfg);

/// Checkpoint entries for parameters, Adam moments, step and loss history.
template <class T>
std::vector<nn::CheckpointEntry> training_entries(const TrainState<T>& state);
/// Inverse of training_entries. Entries holding only parameters restore the
/// parameters and leave the optimizer fresh.
template <class T>
void restore_training(TrainState<T>& state, const std::vector<nn::CheckpointEntry>& entries);

// ---- evaluation ------------------------------------------------------------

struct ImageScore {
  double psnr = 0;
  double ssim = 0;
};

/// Scores every image; `threads` workers each use their own tape.
template <class T>
std::vector<ImageScore> evaluate(const std::vector<Grid<T>>& dataset, const PipelineParams<T>& params,
                                 const PipelineOptics<T>& optics, const PipelineConfig& cfg,
                                 int threads = 1);

// ---- iterative baselines ---------------------------------------------------

struct IterativeConfig {
  int iters = 1000;
  std::uint64_t seed = 1;
  double lr = 0.05;  // Adam step for the phase descent
};

/// Seeded phase, uniform in (-pi, pi].
Grid<double> random_phase(int height, int width, std::uint64_t seed);

/// loss_l2_scaled(|A e^{j phi}|, target) and its gradient with respect to
/// phi, where A propagates by `to_target`. With g = dL/dRe(u) + j dL/dIm(u)
/// obtained through the adjoint propagator, dL/dphi = Im(conj(u) g).
double phase_loss_and_gradient(const Grid<double>& phi, const Grid<double>& target,
                               const TransferFunction<double>& to_target, Grid<double>* gradient);

/// Adam on an unconstrained phase map. `history`, when given, receives the
/// loss before each update.
PhaseMap sgd_hologram(const Grid<double>& target, const OpticalConfig& optical, int pad_factor,
                      std::size_t channel, const IterativeConfig& icfg,
                      std::vector<double>* history = nullptr);

/// Alternating projections between |field| = target at the target plane and
/// |u| = 1 at the SLM plane. `history` receives mean(( |A u| - target )^2)
/// for each iterate before it is updated.
PhaseMap gs_iterate(const Grid<double>& target, const OpticalConfig& optical, int pad_factor,
                    std::size_t channel, const IterativeConfig& icfg,
                    std::vector<double>* history = nullptr);

/// DPAC of the target field (target amplitude, zero phase) propagated to the SLM.
PhaseMap dpac_hologram(const Grid<double>& target, const OpticalConfig& optical, int pad_factor,
                       std::size_t channel);

/// Propagates a phase-only hologram to the target plane and applies the
/// closed-form scale against `target`.
Synthesis reconstruct(const PhaseMap& hologram, const Grid<double>& target, const OpticalConfig& optical,
                      int pad_factor, std::size_t channel);

}  // namespace holotile::opt
