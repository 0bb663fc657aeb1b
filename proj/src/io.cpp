#include "holotile/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace holotile::io {

using nlohmann::json;

Channel channel_from_name(const std::string& name) {
  if (name == "r") return Channel::Red;
  if (name == "g") return Channel::Green;
  if (name == "b") return Channel::Blue;
  if (name == "gray") return Channel::Gray;
  throw ConfigError("channel: expected r, g, b or gray, got '" + name + "'");
}

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::Red: return "r";
    case Channel::Green: return "g";
    case Channel::Blue: return "b";
    case Channel::Gray: return "gray";
  }
  return "gray";
}

namespace {

// Decoded samples, interleaved, normalized to [0, 1].
struct Raster {
  int height = 0, width = 0, channels = 0;
  std::vector<double> samples;
};

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path + ": cannot open for " + (mode[0] == 'r' ? "reading" : "writing"));
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  const auto* path = static_cast<const std::string*>(png_get_error_ptr(png));
  throw IoError((path ? *path : std::string("png")) + ": " + msg);
}

void png_warn(png_structp, png_const_charp) {}

Raster read_png(const std::string& path) {
  File f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, const_cast<std::string*>(&path),
                                           png_fail, png_warn);
  if (!png) throw IoError(path + ": libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p; png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw IoError(path + ": libpng initialization failed");

  png_init_io(png, f.get());
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  } else if (depth != 8 && depth != 16) {
    throw IoError(path + ": unsupported bit depth " + std::to_string(depth) + " (need 8 or 16)");
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Raster r;
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> bytes(rowbytes * r.height);
  std::vector<png_bytep> rows(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = bytes.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
  r.samples.resize(n);
  for (int y = 0; y < r.height; ++y) {
    const png_byte* row = rows[y];
    for (std::size_t k = 0; k < static_cast<std::size_t>(r.width) * r.channels; ++k) {
      const std::size_t i = static_cast<std::size_t>(y) * r.width * r.channels + k;
      r.samples[i] = out_depth == 16 ? ((row[2 * k] << 8) | row[2 * k + 1]) / 65535.0 : row[k] / 255.0;
    }
  }
  return r;
}

Raster read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    if (t.empty()) throw IoError(path + ": truncated PGM header");
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const long v = std::stol(t, &used);
      if (used != t.size() || v < 1) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw IoError(path + ": malformed PGM header field '" + t + "'");
    }
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw IoError(path + ": not a PGM file");
  Raster r;
  r.width = static_cast<int>(number());
  r.height = static_cast<int>(number());
  const long maxval = number();
  if (maxval > 65535) throw IoError(path + ": unsupported PGM maxval " + std::to_string(maxval));
  r.channels = 1;
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
  r.samples.resize(n);
  if (magic == "P5") {
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> buf(n * bytes);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw IoError(path + ": truncated PGM data");
    for (std::size_t i = 0; i < n; ++i) {
      const long v = bytes == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
      r.samples[i] = static_cast<double>(std::min(v, maxval)) / static_cast<double>(maxval);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      long v = 0;
      if (!(in >> v) || v < 0) throw IoError(path + ": truncated or malformed PGM data");
      r.samples[i] = static_cast<double>(std::min(v, maxval)) / static_cast<double>(maxval);
    }
  }
  return r;
}

bool has_extension(const std::string& path, const char* ext) {
  std::string e = std::filesystem::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png_gray8(const std::string& path, int height, int width, const std::vector<std::uint8_t>& pixels) {
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, const_cast<std::string*>(&path),
                                            png_fail, png_warn);
  if (!png) throw IoError(path + ": libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p; png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw IoError(path + ": libpng initialization failed");
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  if (std::fflush(f.get()) != 0) throw IoError(path + ": write failed");
}

std::vector<std::uint8_t> to_bytes(const Grid<double>& image, const std::string& path) {
  std::vector<std::uint8_t> px(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!std::isfinite(image[i])) throw IoError(path + ": image contains non-finite values");
    px[i] = quantize8(image[i]);
  }
  return px;
}

}  // namespace

Grid<double> center_crop(const Grid<double>& image, int multiple) {
  if (multiple < 1) throw ConfigError("crop multiple must be >= 1");
  const int h = image.height() / multiple * multiple;
  const int w = image.width() / multiple * multiple;
  if (h < 1 || w < 1)
    throw DimensionError("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                         " is smaller than the crop multiple " + std::to_string(multiple));
  if (h == image.height() && w == image.width()) return image;
  const int r0 = (image.height() - h) / 2, c0 = (image.width() - w) / 2;
  Grid<double> out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = image(r0 + r, c0 + c);
  return out;
}

Grid<double> load_image(const std::string& path, Channel channel, int multiple) {
  if (!std::filesystem::is_regular_file(path)) throw IoError(path + ": no such file");
  const Raster r = has_extension(path, ".pgm") ? read_pgm(path) : read_png(path);
  if (r.width < 1 || r.height < 1) throw IoError(path + ": empty image");
  Grid<double> out(r.height, r.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* px = &r.samples[i * r.channels];
    if (r.channels < 3) {
      out[i] = px[0];
    } else {
      switch (channel) {
        case Channel::Red: out[i] = px[0]; break;
        case Channel::Green: out[i] = px[1]; break;
        case Channel::Blue: out[i] = px[2]; break;
        case Channel::Gray: out[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]; break;
      }
    }
  }
  return multiple > 1 ? center_crop(out, multiple) : out;
}

void save_image(const std::string& path, const Grid<double>& image) {
  write_png_gray8(path, image.height(), image.width(), to_bytes(image, path));
}

void save_pgm(const std::string& path, const Grid<double>& image) {
  const auto px = to_bytes(image, path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError(path + ": write failed");
}

void save_phase(const std::string& path, const PhaseMap& hologram) {
  const auto q = quantize_phase(hologram, 256);
  std::vector<std::uint8_t> px(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) px[i] = static_cast<std::uint8_t>(q[i]);
  write_png_gray8(path, q.height(), q.width(), px);
}

std::vector<std::string> list_images(const std::string& directory) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) throw IoError(directory + ": not a directory");
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(directory)) {
    if (!e.is_regular_file()) continue;
    const auto p = e.path().string();
    if (has_extension(p, ".png") || has_extension(p, ".pgm")) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- configuration ---------------------------------------------------------

opt::TrainConfig RunConfig::train_config() const {
  opt::TrainConfig t;
  t.steps = train.steps;
  t.seed = seed;
  t.adam = train.adam;
  t.augment = train.augment;
  return t;
}

namespace {

// Reads typed fields from a JSON object, tracking the dotted path for
// diagnostics and rejecting keys that were never asked for.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, value] : node_.items())
      if (!seen_.count(key)) throw ConfigError(join(key) + ": unknown key");
  }

  template <class F>
  void object(const char* key, F&& f) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    Reader sub(node_.at(key), join(key));
    f(sub);
  }

  void number(const char* key, double& out, bool positive = false) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number()) throw ConfigError(join(key) + ": expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(join(key) + ": must be finite");
    if (positive && !(d > 0)) throw ConfigError(join(key) + ": must be > 0");
    out = d;
  }

  template <class I>
  void integer(const char* key, I& out, long long lo, long long hi) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer()) throw ConfigError(join(key) + ": expected an integer");
    const long long x = v->is_number_unsigned() ? static_cast<long long>(v->get<unsigned long long>())
                                                : v->get<long long>();
    if (x < lo || x > hi)
      throw ConfigError(join(key) + ": must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out = static_cast<I>(x);
  }

  void seed(const char* key, std::uint64_t& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      throw ConfigError(join(key) + ": expected a non-negative integer");
    out = v->get<std::uint64_t>();
  }

  void boolean(const char* key, bool& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) throw ConfigError(join(key) + ": expected true or false");
    out = v->get<bool>();
  }

  void string(const char* key, std::string& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) throw ConfigError(join(key) + ": expected a string");
    out = v->get<std::string>();
  }

  void positive_list(const char* key, std::vector<double>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array() || v->empty()) throw ConfigError(join(key) + ": expected a non-empty array");
    std::vector<double> vals;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      const std::string p = join(key) + "[" + std::to_string(i) + "]";
      if (!e.is_number()) throw ConfigError(p + ": expected a number");
      const double d = e.get<double>();
      if (!(d > 0) || !std::isfinite(d)) throw ConfigError(p + ": must be > 0");
      vals.push_back(d);
    }
    out = std::move(vals);
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    // Whitespace and comments alone count as an empty document.
    if (json::accept(text + "\nnull", true) && json::parse(text + "\nnull", nullptr, true, true).is_null())
      return RunConfig{};
    throw ConfigError(std::string("config: malformed document: ") + e.what());
  }
  if (doc.is_null()) return RunConfig{};

  RunConfig cfg;
  auto& p = cfg.pipeline;
  {
    Reader root(doc, "");
    root.seed("seed", cfg.seed);
    root.integer("threads", cfg.threads, 0, 4096);
    root.object("optical", [&](Reader& r) {
      r.number("pitch", p.optical.pitch, true);
      r.positive_list("wavelengths", p.optical.wavelengths);
      r.number("distance", p.optical.distance, true);
    });
    root.object("pipeline", [&](Reader& r) {
      r.integer("scale", p.scale, 1, 4);
      r.boolean("use_pyramid", p.use_pyramid);
      r.integer("channel", p.channel, 0, 64);
      r.integer("pad_factor", p.pad_factor, 1, 2);
      std::string loss = opt::loss_name(p.loss);
      r.string("loss", loss);
      try {
        p.loss = opt::loss_from_name(loss);
      } catch (const ConfigError&) {
        throw ConfigError(r.join("loss") + ": expected 'mse' or 'l2_scaled', got '" + loss + "'");
      }
      r.object("backbone", [&](Reader& b) {
        b.integer("width", p.backbone_width, 1, 4096);
        b.integer("levels", p.backbone_levels, 1, 8);
      });
      r.object("lfmn", [&](Reader& l) {
        l.integer("features", p.lfmn.features, 2, 4096);
        l.integer("blocks", p.lfmn.blocks, 0, 64);
        l.boolean("use_grn", p.lfmn.use_grn);
        l.boolean("use_lfm", p.lfmn.use_lfm);
        l.boolean("use_eccm", p.lfmn.use_eccm);
      });
    });
    root.object("train", [&](Reader& r) {
      r.integer("steps", cfg.train.steps, 0, 100000000);
      r.number("lr", cfg.train.adam.lr, true);
      r.number("beta1", cfg.train.adam.beta1);
      r.number("beta2", cfg.train.adam.beta2);
      r.number("eps", cfg.train.adam.eps, true);
      r.boolean("augment", cfg.train.augment);
      for (const char* k : {"beta1", "beta2"}) {
        const double b = k[4] == '1' ? cfg.train.adam.beta1 : cfg.train.adam.beta2;
        if (!(b >= 0 && b < 1)) throw ConfigError(r.join(k) + ": must lie in [0, 1)");
      }
    });
    root.object("iterative", [&](Reader& r) {
      r.integer("iters", cfg.iterative.iters, 0, 100000000);
      r.number("lr", cfg.iterative.lr, true);
    });
    root.object("data", [&](Reader& r) {
      std::string ch = channel_name(cfg.image_channel);
      r.string("channel", ch);
      try {
        cfg.image_channel = channel_from_name(ch);
      } catch (const ConfigError&) {
        throw ConfigError(r.join("channel") + ": expected r, g, b or gray, got '" + ch + "'");
      }
      r.string("dataset_dir", cfg.dataset_dir);
      r.string("out_dir", cfg.out_dir);
    });
  }
  if (p.scale != 1 && p.scale != 2 && p.scale != 4) throw ConfigError("pipeline.scale: must be 1, 2 or 4");
  if (p.use_pyramid && p.scale != 4) throw ConfigError("pipeline.use_pyramid: requires pipeline.scale = 4");
  if (p.lfmn.features % 2) throw ConfigError("pipeline.lfmn.features: must be even");
  if (p.channel >= p.optical.wavelengths.size())
    throw ConfigError("pipeline.channel: no wavelength with index " + std::to_string(p.channel));
  cfg.iterative.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open configuration");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  const auto& p = cfg.pipeline;
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["optical"] = {{"pitch", p.optical.pitch}, {"wavelengths", p.optical.wavelengths},
                  {"distance", p.optical.distance}};
  j["pipeline"] = {{"scale", p.scale},
                   {"use_pyramid", p.use_pyramid},
                   {"channel", p.channel},
                   {"pad_factor", p.pad_factor},
                   {"loss", opt::loss_name(p.loss)},
                   {"backbone", {{"width", p.backbone_width}, {"levels", p.backbone_levels}}},
                   {"lfmn",
                    {{"features", p.lfmn.features},
                     {"blocks", p.lfmn.blocks},
                     {"use_grn", p.lfmn.use_grn},
                     {"use_lfm", p.lfmn.use_lfm},
                     {"use_eccm", p.lfmn.use_eccm}}}};
  j["train"] = {{"steps", cfg.train.steps},       {"lr", cfg.train.adam.lr},
                {"beta1", cfg.train.adam.beta1}, {"beta2", cfg.train.adam.beta2},
                {"eps", cfg.train.adam.eps},     {"augment", cfg.train.augment}};
  j["iterative"] = {{"iters", cfg.iterative.iters}, {"lr", cfg.iterative.lr}};
  j["data"] = {{"channel", channel_name(cfg.image_channel)},
               {"dataset_dir", cfg.dataset_dir},
               {"out_dir", cfg.out_dir}};
  return j.dump(2) + "\n";
}

int worker_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HOLOTILE_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1)
      throw ConfigError(std::string("HOLOTILE_THREADS: expected a positive integer, got '") + env + "'");
    n = std::min<long>(n, cap);
  }
  return std::max(n, 1);
}

}  // namespace holotile::io
