#include "holotile/optimize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numbers>
#include <thread>

#include "holotile/metrics.hpp"
#include "holotile/tiling.hpp"

namespace holotile::opt {

using metrics::Stage;
using metrics::StageScope;

const char* loss_name(LossKind kind) {
  return kind == LossKind::Mse ? "mse" : "l2_scaled";
}

LossKind loss_from_name(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "l2_scaled") return LossKind::L2Scaled;
  throw ConfigError("pipeline.loss: expected 'mse' or 'l2_scaled', got '" + name + "'");
}

void PipelineConfig::validate() const {
  if (scale != 1 && scale != 2 && scale != 4)
    throw ConfigError("pipeline.scale: must be 1, 2 or 4, got " + std::to_string(scale));
  if (use_pyramid && scale != 4) throw ConfigError("pipeline.use_pyramid: requires scale 4");
  if (pad_factor != 1 && pad_factor != 2)
    throw ConfigError("pipeline.pad_factor: must be 1 or 2, got " + std::to_string(pad_factor));
  if (channel >= optical.wavelengths.size())
    throw ConfigError("pipeline.channel: index " + std::to_string(channel) + " has no wavelength");
  if (backbone_width < 1) throw ConfigError("pipeline.backbone_width: must be >= 1");
  if (backbone_levels < 1) throw ConfigError("pipeline.backbone_levels: must be >= 1");
  if (lfmn.features < 2 || lfmn.features % 2)
    throw ConfigError("pipeline.lfmn.features: must be even and >= 2");
  if (lfmn.blocks < 0) throw ConfigError("pipeline.lfmn.blocks: must be >= 0");
  try {
    optical.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("optical: ") + e.what());
  }
  const int div = scale * (1 << (backbone_levels - 1));
  if (optical.height % div || optical.width % div)
    throw ConfigError("optical.height/width: " + std::to_string(optical.height) + "x" +
                      std::to_string(optical.width) + " not divisible by " + std::to_string(div) +
                      " (scale times 2^(levels-1))");
}

template <class T>
nn::ParamList<T> PipelineParams<T>::list() const {
  nn::ParamList<T> out;
  nn::collect(out, "generator", generator);
  nn::collect(out, "encoder", encoder);
  if (lfmn) nn::collect(out, "lfmn", *lfmn);
  if (pyramid) nn::collect(out, "pyramid", *pyramid);
  return out;
}

template <class T>
PipelineParams<T> init_pipeline(const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int t = tile_count(cfg);
  PipelineParams<T> p;
  p.generator = nn::init_backbone<T>({t, t, cfg.backbone_width, cfg.backbone_levels}, rng);
  p.encoder = nn::init_backbone<T>({2 * t, t, cfg.backbone_width, cfg.backbone_levels}, rng);
  if (cfg.scale > 1) {
    nn::LfmnConfig lc = cfg.lfmn;
    lc.scale = cfg.scale;
    if (cfg.use_pyramid)
      p.pyramid = nn::init_pyramid<T>(lc, rng);
    else
      p.lfmn = nn::init_lfmn<T>(lc, rng);
  }
  return p;
}

template <class T>
PipelineOptics<T> make_optics(const PipelineConfig& cfg) {
  cfg.validate();
  const double d = cfg.optical.distance;
  PipelineOptics<T> o{build_transfer<T>(cfg.optical, d, cfg.pad_factor, cfg.channel),
                      build_transfer<T>(cfg.optical, -d, cfg.pad_factor, cfg.channel),
                      std::nullopt};
  if (cfg.low_definition_asm) {
    OpticalConfig low = cfg.optical;
    low.height /= cfg.scale;
    low.width /= cfg.scale;
    low.pitch *= cfg.scale;
    o.to_slm_low = build_transfer<T>(low, d, cfg.pad_factor, cfg.channel);
  }
  return o;
}

namespace {

template <class T>
ad::Tensor<T> image_tensor(const Grid<T>& image, const PipelineConfig& cfg) {
  if (image.height() != cfg.optical.height || image.width() != cfg.optical.width)
    throw ConfigError("pipeline: image is " + std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + " but the configuration expects " +
                      std::to_string(cfg.optical.height) + "x" + std::to_string(cfg.optical.width));
  return ad::Tensor<T>::from_values({1, 1, image.height(), image.width()}, image.values());
}

// amplitude * exp(j phase) as a complex pair.
template <class T>
ad::ComplexPair<T> polar(ad::Tape<T>& tape, const ad::Tensor<T>& phase, std::span<const T> amplitude) {
  return {ad::mul_const(tape, ad::cos(tape, phase), amplitude),
          ad::mul_const(tape, ad::sin(tape, phase), amplitude)};
}

template <class T>
PipelineGraph<T> finish(ad::Tape<T>& tape, const ad::Tensor<T>& phase, const Grid<T>& image,
                        const PipelineOptics<T>& optics, const PipelineConfig& cfg) {
  ad::Tensor<T> amp;
  {
    StageScope stage(Stage::Asm);
    ad::ComplexPair<T> slm{ad::cos(tape, phase), ad::sin(tape, phase)};
    amp = ad::complex_abs(tape, ad::propagate(tape, slm, optics.to_target));
  }
  auto loss = cfg.loss == LossKind::Mse ? ad::mse_loss(tape, amp, image.values())
                                        : ad::l2_scaled_loss(tape, amp, image.values());
  return {loss, amp, phase};
}

}  // namespace

template <class T>
PipelineGraph<T> pipeline_graph(ad::Tape<T>& tape, const Grid<T>& image, const PipelineParams<T>& params,
                                const PipelineOptics<T>& optics, const PipelineConfig& cfg) {
  const int r = cfg.scale;
  const auto img = image_tensor(image, cfg);

  // (1) sub-images
  const auto sub_images = ad::pixel_unshuffle_t(tape, img, r);

  // (2) sub-phases at the target plane
  ad::Tensor<T> sub_phases;
  {
    StageScope stage(Stage::Generator);
    sub_phases = nn::generator_forward(tape, sub_images, params.generator);
  }

  // (3)-(5) SLM-plane sub-fields, real parts then imaginary parts
  ad::Tensor<T> sub_fields;
  if (cfg.low_definition_asm) {
    if (!optics.to_slm_low) throw ConfigError("pipeline: optics lack the low-definition transfer function");
    StageScope stage(Stage::Asm);
    const auto field = polar(tape, sub_phases, sub_images.values());
    const auto slm = ad::propagate(tape, field, *optics.to_slm_low);
    sub_fields = ad::concat_channels(tape, std::vector<ad::Tensor<T>>{slm.re, slm.im});
  } else {
    StageScope stage(Stage::Asm);
    const auto phase = ad::pixel_shuffle_t(tape, sub_phases, r);
    const auto slm = ad::propagate(tape, polar(tape, phase, image.values()), optics.to_slm);
    sub_fields = ad::concat_channels(
        tape, std::vector<ad::Tensor<T>>{ad::pixel_unshuffle_t(tape, slm.re, r),
                                         ad::pixel_unshuffle_t(tape, slm.im, r)});
  }
  ad::Tensor<T> sub_holograms;
  {
    StageScope stage(Stage::Encoder);
    sub_holograms = nn::encoder_forward(tape, sub_fields, params.encoder);
  }

  // (6) merge
  ad::Tensor<T> phase;
  {
    StageScope stage(Stage::MergeSr);
    if (r == 1) {
      phase = sub_holograms;
    } else if (cfg.shuffle_only_merge) {
      phase = ad::pixel_shuffle_t(tape, sub_holograms, r);
    } else if (cfg.use_pyramid) {
      if (!params.pyramid) throw ConfigError("pipeline: pyramid merge requested but not initialized");
      phase = nn::pyramid_merge(tape, sub_holograms, *params.pyramid);
    } else {
      if (!params.lfmn) throw ConfigError("pipeline: LFMN merge requested but not initialized");
      phase = nn::lfmn_forward(tape, sub_holograms, *params.lfmn);
    }
  }

  // (7) reconstruction and loss
  return finish(tape, phase, image, optics, cfg);
}

template <class T>
PipelineGraph<T> baseline_graph(ad::Tape<T>& tape, const Grid<T>& image, const PipelineParams<T>& params,
                                const PipelineOptics<T>& optics, const PipelineConfig& cfg) {
  if (cfg.scale != 1) throw ConfigError("baseline_graph: requires scale 1");
  const auto img = image_tensor(image, cfg);
  ad::Tensor<T> target_phase, phase;
  {
    StageScope stage(Stage::Generator);
    target_phase = nn::generator_forward(tape, img, params.generator);
  }
  ad::ComplexPair<T> slm;
  {
    StageScope stage(Stage::Asm);
    slm = ad::propagate(tape, polar(tape, target_phase, image.values()), optics.to_slm);
  }
  {
    StageScope stage(Stage::Encoder);
    phase = nn::encoder_forward(tape, ad::concat_channels(tape, std::vector<ad::Tensor<T>>{slm.re, slm.im}),
                                params.encoder);
  }
  return finish(tape, phase, image, optics, cfg);
}

template <class T>
Synthesis forward_pipeline(const Grid<T>& image, const PipelineParams<T>& params,
                           const PipelineOptics<T>& optics, const PipelineConfig& cfg) {
  ad::Tape<T> tape(false);
  const auto g = pipeline_graph(tape, image, params, optics, cfg);
  Synthesis out;
  Grid<T> phase(image.height(), image.width());
  std::copy(g.phase.values().begin(), g.phase.values().end(), phase.values().begin());
  out.hologram = make_phase_map(phase);

  std::vector<double> amp(g.amplitude.values().begin(), g.amplitude.values().end());
  std::vector<double> target(image.values().begin(), image.values().end());
  out.scale = optimal_scale(amp, target);
  out.reconstruction = Grid<double>(image.height(), image.width());
  for (std::size_t i = 0; i < amp.size(); ++i) out.reconstruction[i] = out.scale * amp[i];
  return out;
}

// ---- losses ----------------------------------------------------------------

double optimal_scale(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("optimal_scale: size mismatch");
  double ab = 0, aa = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
  }
  return aa > 0 ? ab / aa : 0.0;
}

double loss_mse(const Grid<double>& recon, const Grid<double>& target) {
  require_same_shape(recon, target, "loss_mse");
  double acc = 0;
  for (std::size_t i = 0; i < recon.size(); ++i) acc += (recon[i] - target[i]) * (recon[i] - target[i]);
  return acc / static_cast<double>(recon.size());
}

double loss_l2_scaled(const Grid<double>& recon, const Grid<double>& target) {
  require_same_shape(recon, target, "loss_l2_scaled");
  const double s = optimal_scale(recon.values(), target.values());
  double acc = 0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = s * recon[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(recon.size());
}

// ---- Adam ------------------------------------------------------------------

template <class T>
AdamState<T> make_adam(const std::vector<std::size_t>& sizes, const AdamConfig& cfg) {
  AdamState<T> st;
  st.config = cfg;
  for (auto n : sizes) {
    st.m.emplace_back(n, T(0));
    st.v.emplace_back(n, T(0));
  }
  return st;
}

template <class T>
AdamState<T> make_adam(const nn::ParamList<T>& params, const AdamConfig& cfg) {
  std::vector<std::size_t> sizes;
  for (const auto& [name, t] : params) sizes.push_back(t.size());
  return make_adam<T>(sizes, cfg);
}

template <class T>
void adam_step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads,
               AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() || state.v.size() != state.m.size())
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k].size() != grads[k].size() || params[k].size() != state.m[k].size() ||
        state.v[k].size() != state.m[k].size())
      throw DimensionError("adam_step: size mismatch for parameter " + std::to_string(k));

  const auto& c = state.config;
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = grads[k][i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      params[k][i] -= static_cast<T>(c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps));
    }
  }
  ++state.step;
}

template <class T>
void adam_step(const nn::ParamList<T>& params, AdamState<T>& state) {
  std::vector<std::span<T>> ps;
  std::vector<std::span<const T>> gs;
  std::vector<std::vector<T>> zeros;
  zeros.reserve(params.size());
  for (auto [name, t] : params) {
    ps.push_back(t.mutable_values());
    if (t.has_grad()) {
      gs.push_back(t.grad());
    } else {
      zeros.emplace_back(t.size(), T(0));
      gs.push_back(zeros.back());
    }
  }
  adam_step(ps, gs, state);
  for (auto [name, t] : params) t.zero_grad();
}

// ---- training --------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ tag);
}

}  // namespace

StepPlan plan_step(std::uint64_t seed, std::int64_t step, std::size_t dataset_size) {
  if (dataset_size == 0) throw ConfigError("train: dataset is empty");
  const auto n = dataset_size;
  const auto epoch = static_cast<std::uint64_t>(step) / n;
  const auto pos = static_cast<std::size_t>(static_cast<std::uint64_t>(step) % n);

  // Fisher-Yates with an explicit generator keeps the order independent of
  // the standard library's distribution implementations.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::uint64_t state = mix(seed, epoch, 1);
  for (std::size_t i = n - 1; i > 0; --i) {
    state = splitmix64(state);
    std::swap(order[i], order[state % (i + 1)]);
  }
  const std::uint64_t bits = mix(seed, static_cast<std::uint64_t>(step), 2);
  return {order[pos], (bits & 1) != 0, (bits & 2) != 0};
}

template <class T>
Grid<T> apply_flips(const Grid<T>& image, bool flip_h, bool flip_v) {
  Grid<T> out(image.height(), image.width());
  const int h = image.height(), w = image.width();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = image(flip_v ? h - 1 - r : r, flip_h ? w - 1 - c : c);
  return out;
}

template <class T>
TrainState<T> init_training(const PipelineConfig& cfg, const TrainConfig& tcfg) {
  TrainState<T> st;
  st.params = init_pipeline<T>(cfg, tcfg.seed);
  st.adam = make_adam(st.params.list(), tcfg.adam);
  return st;
}

template <class T>
void train(TrainState<T>& state, const std::vector<Grid<T>>& dataset, const PipelineConfig& cfg,
           const PipelineOptics<T>& optics, const TrainConfig& tcfg) {
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const auto params = state.params.list();
  state.adam.config = tcfg.adam;
  while (state.adam.step < tcfg.steps) {
    const auto plan = plan_step(tcfg.seed, state.adam.step, dataset.size());
    const Grid<T>& source = dataset[plan.image];
    const Grid<T> image = tcfg.augment ? apply_flips(source, plan.flip_h, plan.flip_v) : source;
    double loss = 0;
    {
      ad::Tape<T> tape;
      const auto g = pipeline_graph(tape, image, state.params, optics, cfg);
      loss = static_cast<double>(g.loss.item());
      tape.backward(g.loss);
    }
    if (!std::isfinite(loss)) throw DomainError("train: loss became non-finite at step " +
                                                std::to_string(state.adam.step));
    state.losses.push_back(loss);
    adam_step(params, state.adam);
  }
}

template <class T>
double dataset_loss(const std::vector<Grid<T>>& dataset, const PipelineParams<T>& params,
                    const PipelineOptics<T>& optics, const PipelineConfig& cfg) {
  if (dataset.empty()) throw ConfigError("dataset_loss: dataset is empty");
  double acc = 0;
  for (const auto& image : dataset) {
    ad::Tape<T> tape(false);
    acc += static_cast<double>(pipeline_graph(tape, image, params, optics, cfg).loss.item());
  }
  return acc / static_cast<double>(dataset.size());
}

namespace {

constexpr const char* kStepEntry = "train.step";
constexpr const char* kLossEntry = "train.losses";

nn::CheckpointEntry vector_entry(const std::string& name, const std::vector<double>& v) {
  nn::CheckpointEntry e;
  e.name = name;
  e.is_f64 = true;
  e.dims = {static_cast<std::int32_t>(v.size())};
  e.values = v;
  return e;
}

}  // namespace

template <class T>
std::vector<nn::CheckpointEntry> training_entries(const TrainState<T>& state) {
  const auto params = state.params.list();
  auto entries = nn::to_entries(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& name = params[k].first;
    std::vector<double> m(state.adam.m[k].begin(), state.adam.m[k].end());
    std::vector<double> v(state.adam.v[k].begin(), state.adam.v[k].end());
    auto em = vector_entry("adam.m." + name, m);
    auto ev = vector_entry("adam.v." + name, v);
    em.is_f64 = ev.is_f64 = std::is_same_v<T, double>;
    entries.push_back(std::move(em));
    entries.push_back(std::move(ev));
  }
  entries.push_back(vector_entry(kStepEntry, {static_cast<double>(state.adam.step)}));
  entries.push_back(vector_entry(kLossEntry, state.losses));
  return entries;
}

template <class T>
void restore_training(TrainState<T>& state, const std::vector<nn::CheckpointEntry>& entries) {
  const auto params = state.params.list();
  nn::load_entries(entries, params);
  std::map<std::string, const nn::CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  const auto step = by_name.find(kStepEntry);
  if (step == by_name.end()) {
    state.adam = make_adam(params, state.adam.config);
    state.losses.clear();
    return;
  }
  if (step->second->values.size() != 1) throw IoError("checkpoint: malformed " + std::string(kStepEntry));
  state.adam.step = static_cast<std::int64_t>(step->second->values[0]);
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (const char* which : {"adam.m.", "adam.v."}) {
      const auto it = by_name.find(which + params[k].first);
      if (it == by_name.end()) throw ConfigError("checkpoint is missing '" + std::string(which) + params[k].first + "'");
      if (it->second->values.size() != params[k].second.size())
        throw DimensionError("checkpoint entry '" + it->first + "' has the wrong size");
      auto& dst = which[5] == 'm' ? state.adam.m[k] : state.adam.v[k];
      dst.assign(it->second->values.begin(), it->second->values.end());
    }
  }
  const auto losses = by_name.find(kLossEntry);
  state.losses = losses == by_name.end() ? std::vector<double>{} : losses->second->values;
}

// ---- evaluation ------------------------------------------------------------

template <class T>
std::vector<ImageScore> evaluate(const std::vector<Grid<T>>& dataset, const PipelineParams<T>& params,
                                 const PipelineOptics<T>& optics, const PipelineConfig& cfg, int threads) {
  std::vector<ImageScore> scores(dataset.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      const auto syn = forward_pipeline(dataset[i], params, optics, cfg);
      Grid<double> target(dataset[i].height(), dataset[i].width());
      std::copy(dataset[i].values().begin(), dataset[i].values().end(), target.values().begin());
      scores[i] = {metrics::psnr(syn.reconstruction, target), metrics::ssim(syn.reconstruction, target)};
    }
  };
  const int n = std::clamp<int>(threads, 1, static_cast<int>(std::max<std::size_t>(dataset.size(), 1)));
  if (n == 1) {
    worker();
    return scores;
  }
  std::vector<std::thread> pool;
  for (int k = 0; k < n; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return scores;
}

// ---- iterative baselines ---------------------------------------------------

Grid<double> random_phase(int height, int width, std::uint64_t seed) {
  Grid<double> phi(height, width);
  std::uint64_t state = mix(seed, 0, 3);
  for (auto& v : phi.values()) {
    state = splitmix64(state);
    const double u = static_cast<double>(state >> 11) * 0x1.0p-53;  // [0, 1)
    v = std::numbers::pi - 2.0 * std::numbers::pi * u;                // (-pi, pi]
  }
  return phi;
}

namespace {

Grid<std::complex<double>> unit_field(const Grid<double>& phi) {
  Grid<std::complex<double>> u(phi.height(), phi.width());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::polar(1.0, phi[i]);
  return u;
}

OpticalConfig sized(const OpticalConfig& optical, const Grid<double>& target) {
  OpticalConfig o = optical;
  o.height = target.height();
  o.width = target.width();
  return o;
}

}  // namespace

double phase_loss_and_gradient(const Grid<double>& phi, const Grid<double>& target,
                               const TransferFunction<double>& to_target, Grid<double>* gradient) {
  require_same_shape(phi, target, "phase_loss_and_gradient");
  const auto u = unit_field(phi);
  const auto v = apply_transfer(u, to_target, false);
  Grid<double> a(v.height(), v.width());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(v[i]);
  const double s = optimal_scale(a.values(), target.values());
  const double n = static_cast<double>(a.size());
  double loss = 0;
  Grid<std::complex<double>> gv(v.height(), v.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = s * a[i] - target[i];
    loss += d * d;
    // s is optimal, so only the explicit dependence on a contributes.
    const double ga = 2.0 * s * d / n;
    gv[i] = a[i] > 0 ? ga * v[i] / a[i] : std::complex<double>(0, 0);
  }
  if (gradient) {
    const auto gu = apply_transfer(gv, to_target, true);
    *gradient = Grid<double>(phi.height(), phi.width());
    for (std::size_t i = 0; i < gu.size(); ++i) (*gradient)[i] = std::imag(std::conj(u[i]) * gu[i]);
  }
  return loss / n;
}

PhaseMap sgd_hologram(const Grid<double>& target, const OpticalConfig& optical, int pad_factor,
                      std::size_t channel, const IterativeConfig& icfg, std::vector<double>* history) {
  const auto cfg = sized(optical, target);
  auto phi = random_phase(target.height(), target.width(), icfg.seed);
  if (icfg.iters <= 0) return make_phase_map(phi);
  const auto tf = build_transfer<double>(cfg, -cfg.distance, pad_factor, channel);
  AdamConfig ac;
  ac.lr = icfg.lr;
  auto adam = make_adam<double>(std::vector<std::size_t>{phi.size()}, ac);
  Grid<double> grad;
  for (int k = 0; k < icfg.iters; ++k) {
    const double loss = phase_loss_and_gradient(phi, target, tf, &grad);
    if (history) history->push_back(loss);
    adam_step<double>({phi.values()}, {std::span<const double>(grad.values())}, adam);
  }
  return make_phase_map(phi);
}

PhaseMap gs_iterate(const Grid<double>& target, const OpticalConfig& optical, int pad_factor,
                    std::size_t channel, const IterativeConfig& icfg, std::vector<double>* history) {
  const auto cfg = sized(optical, target);
  const auto phi0 = random_phase(target.height(), target.width(), icfg.seed);
  if (icfg.iters <= 0) return make_phase_map(phi0);
  const auto tf = build_transfer<double>(cfg, -cfg.distance, pad_factor, channel);
  auto u = unit_field(phi0);
  for (int k = 0; k < icfg.iters; ++k) {
    auto v = apply_transfer(u, tf, false);
    double err = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double a = std::abs(v[i]);
      err += (a - target[i]) * (a - target[i]);
      v[i] = a > 0 ? target[i] * v[i] / a : std::complex<double>(target[i], 0);
    }
    if (history) history->push_back(err / static_cast<double>(v.size()));
    // Back-propagation to the SLM is the adjoint of the forward operator.
    u = apply_transfer(v, tf, true);
    for (auto& x : u.values()) {
      const double a = std::abs(x);
      x = a > 0 ? x / a : std::complex<double>(1, 0);
    }
  }
  Grid<double> phi(u.height(), u.width());
  for (std::size_t i = 0; i < u.size(); ++i) phi[i] = std::arg(u[i]);
  return make_phase_map(phi);
}

PhaseMap dpac_hologram(const Grid<double>& target, const OpticalConfig& optical, int pad_factor,
                       std::size_t channel) {
  const auto cfg = sized(optical, target);
  const auto tf = build_transfer<double>(cfg, cfg.distance, pad_factor, channel);
  Grid<std::complex<double>> field(target.height(), target.width());
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = {target[i], 0.0};
  const ComplexField<double> slm(apply_transfer(field, tf, false), cfg.pitch, tf.wavelength);
  return dpac_encode_normalized(slm);
}

Synthesis reconstruct(const PhaseMap& hologram, const Grid<double>& target, const OpticalConfig& optical,
                      int pad_factor, std::size_t channel) {
  require_same_shape(hologram.phase, target, "reconstruct");
  const auto cfg = sized(optical, target);
  const auto tf = build_transfer<double>(cfg, -cfg.distance, pad_factor, channel);
  const auto v = apply_transfer(unit_field(hologram.phase), tf, false);
  Synthesis out;
  out.hologram = hologram;
  out.reconstruction = Grid<double>(target.height(), target.width());
  for (std::size_t i = 0; i < v.size(); ++i) out.reconstruction[i] = std::abs(v[i]);
  out.scale = optimal_scale(out.reconstruction.values(), target.values());
  for (auto& x : out.reconstruction.values()) x *= out.scale;
  return out;
}

#define HOLOTILE_INSTANTIATE(T)                                                                          \
  template struct PipelineParams<T>;                                                                     \
  template PipelineParams<T> init_pipeline<T>(const PipelineConfig&, std::uint64_t);                   \
  template PipelineOptics<T> make_optics<T>(const PipelineConfig&);                                      \
  template PipelineGraph<T> pipeline_graph(ad::Tape<T>&, const Grid<T>&, const PipelineParams<T>&,     \
                                           const PipelineOptics<T>&, const PipelineConfig&);             \
  template PipelineGraph<T> baseline_graph(ad::Tape<T>&, const Grid<T>&, const PipelineParams<T>&,     \
                                           const PipelineOptics<T>&, const PipelineConfig&);             \
  template Synthesis forward_pipeline(const Grid<T>&, const PipelineParams<T>&,                        \
                                      const PipelineOptics<T>&, const PipelineConfig&);                  \
  template AdamState<T> make_adam<T>(const std::vector<std::size_t>&, const AdamConfig&);              \
  template AdamState<T> make_adam<T>(const nn::ParamList<T>&, const AdamConfig&);                      \
  template void adam_step(const std::vector<std::span<T>>&, const std::vector<std::span<const T>>&,    \
                          AdamState<T>&);                                                                \
  template void adam_step(const nn::ParamList<T>&, AdamState<T>&);                                       \
  template Grid<T> apply_flips(const Grid<T>&, bool, bool);                                              \
  template TrainState<T> init_training<T>(const PipelineConfig&, const TrainConfig&);                  \
  template void train(TrainState<T>&, const std::vector<Grid<T>>&, const PipelineConfig&,              \
                      const PipelineOptics<T>&, const TrainConfig&);                                     \
  template double dataset_loss(const std::vector<Grid<T>>&, const PipelineParams<T>&,                  \
                               const PipelineOptics<T>&, const PipelineConfig&);                         \
  template std::vector<nn::CheckpointEntry> training_entries(const TrainState<T>&);                     \
  template void restore_training(TrainState<T>&, const std::vector<nn::CheckpointEntry>&);              \
  template std::vector<ImageScore> evaluate(const std::vector<Grid<T>>&, const PipelineParams<T>&,     \
                                            const PipelineOptics<T>&, const PipelineConfig&, int);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile::opt
