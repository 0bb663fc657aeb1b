#include "holotile/nnets.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "holotile/tiling.hpp"

namespace holotile::nn {

namespace {

constexpr double kLeakySlope = 0.1;

// Kaiming-uniform for LeakyReLU(0.1): bound = gain * sqrt(3 / fan_in).
template <class T>
Conv<T> make_conv(int in, int out, int k, std::mt19937_64& rng) {
  Conv<T> c;
  c.weight = Tensor<T>::zeros({out, in, k, k}, true);
  c.bias = Tensor<T>::zeros({1, out, 1, 1}, true);
  const double fan_in = static_cast<double>(in) * k * k;
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : c.weight.mutable_values()) v = static_cast<T>(dist(rng));
  return c;
}

template <class T>
Tensor<T> apply(Tape<T>& tape, const Tensor<T>& x, const Conv<T>& c) {
  return ad::conv2d(tape, x, c.weight, c.bias);
}

template <class T>
Tensor<T> lrelu(Tape<T>& tape, const Tensor<T>& x) {
  return ad::leaky_relu(tape, x, static_cast<T>(kLeakySlope));
}

template <class T>
void push(ParamList<T>& out, const std::string& name, const Conv<T>& c) {
  out.emplace_back(name + ".weight", c.weight);
  out.emplace_back(name + ".bias", c.bias);
}

}  // namespace

int eccm_hidden_width(int features) { return (features * 5) / 4; }

int backbone_width(const BackboneConfig& cfg, int level) { return cfg.base_width << level; }

template <class T>
LfmnParams<T> init_lfmn(const LfmnConfig& cfg, std::mt19937_64& rng) {
  if (cfg.scale < 1) throw ConfigError("lfmn: scale must be >= 1");
  if (cfg.features < 2 || cfg.features % 2 != 0)
    throw ConfigError("lfmn: feature count must be even and >= 2, got " + std::to_string(cfg.features));
  if (cfg.blocks < 0) throw ConfigError("lfmn: block count must be >= 0");
  const int r2 = cfg.scale * cfg.scale;
  const int c = cfg.features, half = c / 2, hidden = eccm_hidden_width(c);
  LfmnParams<T> p;
  p.config = cfg;
  p.head = make_conv<T>(r2, c, 3, rng);
  p.grn_gamma = Tensor<T>::zeros({1, c, 1, 1}, true);
  p.grn_beta = Tensor<T>::zeros({1, c, 1, 1}, true);
  for (int b = 0; b < cfg.blocks; ++b) {
    LfmmParams<T> blk;
    blk.lfm.reduce = make_conv<T>(c, half, 3, rng);
    blk.lfm.mix = make_conv<T>(half, half, 3, rng);
    blk.lfm.restore = make_conv<T>(half, c, 3, rng);
    blk.eccm.expand = make_conv<T>(c, hidden, 3, rng);
    blk.eccm.project = make_conv<T>(hidden, c, 3, rng);
    p.blocks.push_back(std::move(blk));
  }
  p.tail = make_conv<T>(c, r2, 3, rng);
  for (auto& v : p.tail.weight.mutable_values()) v = static_cast<T>(v * cfg.tail_gain);
  return p;
}

template <class T>
Tensor<T> lfm_forward(Tape<T>& tape, const Tensor<T>& features, const LfmParams<T>& p) {
  if (features.shape().c % 2 != 0)
    throw ConfigError("lfm: channel count must be even, got " + std::to_string(features.shape().c));
  auto a = lrelu(tape, apply(tape, features, p.reduce));
  a = lrelu(tape, apply(tape, a, p.mix));
  a = ad::sigmoid(tape, apply(tape, a, p.restore));
  return ad::mul(tape, features, a);
}

template <class T>
Tensor<T> eccm_forward(Tape<T>& tape, const Tensor<T>& features, const EccmParams<T>& p) {
  auto h = lrelu(tape, apply(tape, features, p.expand));
  return apply(tape, h, p.project);
}

template <class T>
Tensor<T> lfmm_forward(Tape<T>& tape, const Tensor<T>& features, const LfmmParams<T>& p,
                       bool use_lfm, bool use_eccm) {
  Tensor<T> f = features;
  if (use_lfm) f = ad::residual_add(tape, lfm_forward(tape, f, p.lfm), f);
  if (use_eccm) f = ad::residual_add(tape, eccm_forward(tape, f, p.eccm), f);
  return f;
}

template <class T>
Tensor<T> lfmn_forward(Tape<T>& tape, const Tensor<T>& sub_holograms, const LfmnParams<T>& p) {
  const int r = p.config.scale;
  if (sub_holograms.shape().c != r * r)
    throw DimensionError("lfmn: expected " + std::to_string(r * r) + " sub-holograms, got " +
                         std::to_string(sub_holograms.shape().c));
  auto f = apply(tape, sub_holograms, p.head);
  if (p.config.use_grn) f = ad::grn(tape, f, p.grn_gamma, p.grn_beta);
  for (const auto& blk : p.blocks) f = lfmm_forward(tape, f, blk, p.config.use_lfm, p.config.use_eccm);
  auto refined = ad::residual_add(tape, apply(tape, f, p.tail), sub_holograms);
  return ad::pixel_shuffle_t(tape, refined, r);
}

template <class T>
PyramidParams<T> init_pyramid(const LfmnConfig& cfg, std::mt19937_64& rng) {
  LfmnConfig c = cfg;
  c.scale = 2;
  PyramidParams<T> p;
  p.stage1 = init_lfmn<T>(c, rng);
  p.stage2 = init_lfmn<T>(c, rng);
  return p;
}

template <class T>
Tensor<T> pyramid_merge(Tape<T>& tape, const Tensor<T>& tiles16, const PyramidParams<T>& p) {
  if (tiles16.shape().c != 16)
    throw DimensionError("pyramid_merge: expected 16 channels, got " + std::to_string(tiles16.shape().c));
  if (p.stage1.config.scale != 2 || p.stage2.config.scale != 2)
    throw ConfigError("pyramid_merge: both stages must merge by 2");
  std::vector<Tensor<T>> stage1;
  for (int g = 0; g < 4; ++g) {
    const auto m = group_members(g);
    auto group = ad::select_channels(tape, tiles16, std::vector<int>(m.begin(), m.end()));
    stage1.push_back(lfmn_forward(tape, group, p.stage1));
  }
  auto stack = ad::concat_channels(tape, stage1);
  return lfmn_forward(tape, stack, p.stage2);
}

template <class T>
BackboneParams<T> init_backbone(const BackboneConfig& cfg, std::mt19937_64& rng) {
  if (cfg.in_channels < 1 || cfg.out_channels < 1 || cfg.base_width < 1 || cfg.levels < 1)
    throw ConfigError("backbone: channel counts, width and levels must be >= 1");
  BackboneParams<T> p;
  p.config = cfg;
  const int w0 = backbone_width(cfg, 0);
  p.in_conv = make_conv<T>(cfg.in_channels, w0, 3, rng);
  p.in_conv2 = make_conv<T>(w0, w0, 3, rng);
  for (int l = 1; l < cfg.levels; ++l) {
    const int prev = backbone_width(cfg, l - 1), cur = backbone_width(cfg, l);
    p.down.push_back(make_conv<T>(4 * prev, cur, 3, rng));
    p.down2.push_back(make_conv<T>(cur, cur, 3, rng));
  }
  for (int l = cfg.levels - 1; l >= 1; --l) {
    const int prev = backbone_width(cfg, l - 1), cur = backbone_width(cfg, l);
    p.up.push_back(make_conv<T>(cur, 4 * prev, 3, rng));
    p.up2.push_back(make_conv<T>(prev, prev, 3, rng));
  }
  p.out_conv = make_conv<T>(w0, cfg.out_channels, 3, rng);
  for (auto& v : p.out_conv.weight.mutable_values()) v = static_cast<T>(v * cfg.output_gain);
  return p;
}

template <class T>
Tensor<T> backbone_forward(Tape<T>& tape, const Tensor<T>& x, const BackboneParams<T>& p) {
  const auto& cfg = p.config;
  if (x.shape().c != cfg.in_channels)
    throw DimensionError("backbone: expected " + std::to_string(cfg.in_channels) +
                         " input channels, got " + std::to_string(x.shape().c));
  const int div = 1 << (cfg.levels - 1);
  if (x.shape().h % div != 0 || x.shape().w % div != 0)
    throw DimensionError("backbone: spatial size must be divisible by " + std::to_string(div));

  auto h = lrelu(tape, apply(tape, x, p.in_conv));
  h = lrelu(tape, apply(tape, h, p.in_conv2));
  std::vector<Tensor<T>> skips{h};
  for (std::size_t l = 0; l < p.down.size(); ++l) {
    h = ad::pixel_unshuffle_t(tape, h, 2);
    h = lrelu(tape, apply(tape, h, p.down[l]));
    h = lrelu(tape, apply(tape, h, p.down2[l]));
    skips.push_back(h);
  }
  skips.pop_back();
  for (std::size_t u = 0; u < p.up.size(); ++u) {
    h = ad::pixel_shuffle_t(tape, apply(tape, h, p.up[u]), 2);
    h = ad::residual_add(tape, lrelu(tape, h), skips.back());
    skips.pop_back();
    h = lrelu(tape, apply(tape, h, p.up2[u]));
  }
  return apply(tape, h, p.out_conv);
}

template <class T>
Tensor<T> generator_forward(Tape<T>& tape, const Tensor<T>& sub_images, const BackboneParams<T>& p) {
  if (p.config.in_channels != p.config.out_channels)
    throw ConfigError("generator: input and output channel counts must both be r^2");
  return backbone_forward(tape, sub_images, p);
}

template <class T>
Tensor<T> encoder_forward(Tape<T>& tape, const Tensor<T>& sub_fields, const BackboneParams<T>& p) {
  if (p.config.in_channels != 2 * p.config.out_channels)
    throw ConfigError("encoder: input channels must be 2 r^2 (real/imag) for r^2 outputs");
  return backbone_forward(tape, sub_fields, p);
}

template <class T>
void collect(ParamList<T>& out, const std::string& prefix, const LfmnParams<T>& p) {
  push(out, prefix + ".head", p.head);
  out.emplace_back(prefix + ".grn.gamma", p.grn_gamma);
  out.emplace_back(prefix + ".grn.beta", p.grn_beta);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    push(out, bp + ".lfm.reduce", p.blocks[b].lfm.reduce);
    push(out, bp + ".lfm.mix", p.blocks[b].lfm.mix);
    push(out, bp + ".lfm.restore", p.blocks[b].lfm.restore);
    push(out, bp + ".eccm.expand", p.blocks[b].eccm.expand);
    push(out, bp + ".eccm.project", p.blocks[b].eccm.project);
  }
  push(out, prefix + ".tail", p.tail);
}

template <class T>
void collect(ParamList<T>& out, const std::string& prefix, const PyramidParams<T>& p) {
  collect(out, prefix + ".stage1", p.stage1);
  collect(out, prefix + ".stage2", p.stage2);
}

template <class T>
void collect(ParamList<T>& out, const std::string& prefix, const BackboneParams<T>& p) {
  push(out, prefix + ".in", p.in_conv);
  push(out, prefix + ".in2", p.in_conv2);
  for (std::size_t l = 0; l < p.down.size(); ++l) {
    push(out, prefix + ".down" + std::to_string(l), p.down[l]);
    push(out, prefix + ".down" + std::to_string(l) + "b", p.down2[l]);
  }
  for (std::size_t u = 0; u < p.up.size(); ++u) {
    push(out, prefix + ".up" + std::to_string(u), p.up[u]);
    push(out, prefix + ".up" + std::to_string(u) + "b", p.up2[u]);
  }
  push(out, prefix + ".out", p.out_conv);
}

template <class T>
void zero_parameters(const ParamList<T>& params) {
  for (const auto& [name, t] : params) {
    auto copy = t;
    for (auto& v : copy.mutable_values()) v = T(0);
  }
}

template <class T>
std::size_t parameter_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

// ---- checkpoint container --------------------------------------------------
//
// Layout (all integers little-endian):
//   magic     9 bytes "HOLOTILE1"
//   count     u32
//   entries   count x {
//     name_len u32, name bytes (UTF-8, no terminator),
//     dtype    u8 (0 = float32, 1 = float64),
//     ndim     u32, dims i32[ndim],
//     data     prod(dims) little-endian IEEE-754 values
//   }

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::istream& is, const std::string& path) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V)))
    throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 9);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint8_t>(os, e.is_f64 ? 1 : 0);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.dims.size()));
    std::size_t count = 1;
    for (auto d : e.dims) {
      put<std::int32_t>(os, d);
      count *= static_cast<std::size_t>(d);
    }
    if (count != e.values.size()) throw DimensionError("checkpoint entry '" + e.name + "' size mismatch");
    for (double v : e.values) {
      if (e.is_f64) put<double>(os, v);
      else put<float>(os, static_cast<float>(v));
    }
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[9];
  if (!is.read(magic, 9) || std::memcmp(magic, kCheckpointMagic, 9) != 0)
    throw IoError("not a HOLOTILE1 checkpoint: " + path);
  const auto count = get<std::uint32_t>(is, path);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto len = get<std::uint32_t>(is, path);
    if (len > (1u << 16)) throw IoError("corrupt checkpoint name length: " + path);
    e.name.resize(len);
    if (!is.read(e.name.data(), len)) throw IoError("truncated checkpoint: " + path);
    e.is_f64 = get<std::uint8_t>(is, path) == 1;
    const auto ndim = get<std::uint32_t>(is, path);
    if (ndim > 8) throw IoError("corrupt checkpoint rank: " + path);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = get<std::int32_t>(is, path);
      if (dim < 0) throw IoError("corrupt checkpoint dims: " + path);
      e.dims.push_back(dim);
      n *= static_cast<std::size_t>(dim);
    }
    e.values.resize(n);
    for (auto& v : e.values) v = e.is_f64 ? get<double>(is, path) : get<float>(is, path);
    entries.push_back(std::move(e));
  }
  return entries;
}

template <class T>
std::vector<CheckpointEntry> to_entries(const ParamList<T>& params) {
  std::vector<CheckpointEntry> out;
  for (const auto& [name, t] : params) {
    const auto& s = t.shape();
    CheckpointEntry e{name, {s.n, s.c, s.h, s.w}, std::is_same_v<T, double>, {}};
    e.values.assign(t.values().begin(), t.values().end());
    out.push_back(std::move(e));
  }
  return out;
}

template <class T>
void load_entries(const std::vector<CheckpointEntry>& entries, const ParamList<T>& params) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (const auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing parameter '" + name + "'");
    if (it->second->values.size() != t.size())
      throw DimensionError("checkpoint parameter '" + name + "' has the wrong shape");
    auto copy = t;
    auto dst = copy.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
  }
}

#define HOLOTILE_INSTANTIATE(T)                                                                   \
  template LfmnParams<T> init_lfmn<T>(const LfmnConfig&, std::mt19937_64&);                       \
  template Tensor<T> lfm_forward(Tape<T>&, const Tensor<T>&, const LfmParams<T>&);                \
  template Tensor<T> eccm_forward(Tape<T>&, const Tensor<T>&, const EccmParams<T>&);              \
  template Tensor<T> lfmm_forward(Tape<T>&, const Tensor<T>&, const LfmmParams<T>&, bool, bool);  \
  template Tensor<T> lfmn_forward(Tape<T>&, const Tensor<T>&, const LfmnParams<T>&);              \
  template PyramidParams<T> init_pyramid<T>(const LfmnConfig&, std::mt19937_64&);                 \
  template Tensor<T> pyramid_merge(Tape<T>&, const Tensor<T>&, const PyramidParams<T>&);          \
  template BackboneParams<T> init_backbone<T>(const BackboneConfig&, std::mt19937_64&);           \
  template Tensor<T> backbone_forward(Tape<T>&, const Tensor<T>&, const BackboneParams<T>&);      \
  template Tensor<T> generator_forward(Tape<T>&, const Tensor<T>&, const BackboneParams<T>&);     \
  template Tensor<T> encoder_forward(Tape<T>&, const Tensor<T>&, const BackboneParams<T>&);       \
  template void collect(ParamList<T>&, const std::string&, const LfmnParams<T>&);                 \
  template void collect(ParamList<T>&, const std::string&, const PyramidParams<T>&);              \
  template void collect(ParamList<T>&, const std::string&, const BackboneParams<T>&);             \
  template void zero_parameters(const ParamList<T>&);                                             \
  template std::size_t parameter_count(const ParamList<T>&);                                      \
  template std::vector<CheckpointEntry> to_entries(const ParamList<T>&);                          \
  template void load_entries(const std::vector<CheckpointEntry>&, const ParamList<T>&);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile::nn
