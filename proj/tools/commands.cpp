#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "holotile/io.hpp"
#include "holotile/memory_ledger.hpp"
#include "holotile/metrics.hpp"
#include "holotile/nnets.hpp"
#include "holotile/optimize.hpp"
#include "holotile/oracle.hpp"
#include "holotile/simd.hpp"
#include "json.hpp"

namespace holotile::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

io::RunConfig load_run_config(const std::string& path) {
  return path.empty() ? io::RunConfig{} : io::load_config(path);
}

int crop_multiple(const opt::PipelineConfig& p) { return p.scale * (1 << (p.backbone_levels - 1)); }

Grid<float> to_float(const Grid<double>& g) {
  Grid<float> f(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = static_cast<float>(g[i]);
  return f;
}

// SSIM needs an 11x11 window; smaller images report NaN.
double safe_ssim(const Grid<double>& a, const Grid<double>& b) {
  if (a.height() < 11 || a.width() < 11) return std::nan("");
  return metrics::ssim(a, b);
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir + ": cannot create directory");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path + ": write failed");
}

std::string fmt(double v, int precision = 4) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Dataset {
  std::vector<std::string> files;
  std::vector<Grid<float>> images;
};

Dataset load_dataset(const std::string& dir, const io::RunConfig& cfg) {
  if (dir.empty()) throw ConfigError("data.dataset_dir: no dataset directory given (--dataset-dir)");
  Dataset d;
  d.files = io::list_images(dir);
  if (d.files.empty()) throw ConfigError("data.dataset_dir: '" + dir + "' contains no .png or .pgm images");
  for (const auto& f : d.files) {
    d.images.push_back(to_float(io::load_image(f, cfg.image_channel, crop_multiple(cfg.pipeline))));
    if (!d.images.back().same_shape(d.images.front()))
      throw ConfigError("data.dataset_dir: " + f + " differs in size from " + d.files.front() +
                        " after cropping; all images must share one size");
  }
  return d;
}

opt::PipelineConfig sized(opt::PipelineConfig p, int height, int width) {
  p.optical.height = height;
  p.optical.width = width;
  p.validate();
  return p;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, losses[i]);
    out << buf;
  }
  return out.str();
}

}  // namespace

// ---- synthesize -------------------------------------------------------------

namespace {

struct ChannelRun {
  io::Channel channel;
  std::size_t wavelength_index;
  opt::Synthesis result;
  Grid<double> target;
  double psnr = 0, ssim = 0;
};

std::vector<std::pair<io::Channel, std::size_t>> parse_channels(const std::string& spec, const io::RunConfig& cfg) {
  if (spec.empty()) {
    const auto c = cfg.image_channel;
    const std::size_t idx = c == io::Channel::Gray ? cfg.pipeline.channel : static_cast<std::size_t>(c);
    return {{c, idx}};
  }
  if (spec == "gray") return {{io::Channel::Gray, cfg.pipeline.channel}};
  std::vector<std::pair<io::Channel, std::size_t>> out;
  for (char ch : spec) {
    const auto c = io::channel_from_name(std::string(1, ch));
    out.emplace_back(c, static_cast<std::size_t>(c));
  }
  return out;
}

ChannelRun synthesize_channel(const SynthesizeArgs& args, const io::RunConfig& cfg, io::Channel channel,
                              std::size_t wl) {
  ChannelRun run{channel, wl, {}, {}, 0, 0};
  auto pcfg = cfg.pipeline;
  pcfg.channel = wl;
  if (wl >= pcfg.optical.wavelengths.size())
    throw ConfigError("optical.wavelengths: no wavelength for channel " + std::string(io::channel_name(channel)));
  const int multiple = args.method == "pipeline" ? crop_multiple(pcfg) : 1;
  run.target = io::load_image(args.image, channel, multiple);
  auto icfg = cfg.iterative;
  if (args.iters) icfg.iters = *args.iters;

  if (args.method == "pipeline") {
    pcfg = sized(pcfg, run.target.height(), run.target.width());
    auto params = opt::init_pipeline<float>(pcfg, cfg.seed);
    if (!args.checkpoint.empty()) nn::load_entries(nn::read_checkpoint(args.checkpoint), params.list());
    const auto optics = opt::make_optics<float>(pcfg);
    run.result = opt::forward_pipeline(to_float(run.target), params, optics, pcfg);
  } else {
    pcfg.optical.height = run.target.height();
    pcfg.optical.width = run.target.width();
    PhaseMap holo;
    if (args.method == "sgd")
      holo = opt::sgd_hologram(run.target, pcfg.optical, pcfg.pad_factor, wl, icfg);
    else if (args.method == "gs")
      holo = opt::gs_iterate(run.target, pcfg.optical, pcfg.pad_factor, wl, icfg);
    else
      holo = opt::dpac_hologram(run.target, pcfg.optical, pcfg.pad_factor, wl);
    run.result = opt::reconstruct(holo, run.target, pcfg.optical, pcfg.pad_factor, wl);
  }
  run.psnr = metrics::psnr(run.result.reconstruction, run.target);
  run.ssim = safe_ssim(run.result.reconstruction, run.target);
  return run;
}

}  // namespace

int synthesize(const SynthesizeArgs& args) {
  const auto cfg = load_run_config(args.config);
  const std::string out_dir = args.out_dir.empty() ? cfg.out_dir : args.out_dir;
  const auto channels = parse_channels(args.channels, cfg);

  std::vector<ChannelRun> runs(channels.size());
  if (args.parallel_channels && channels.size() > 1) {
    const int workers = io::worker_threads(cfg.threads);
    std::vector<std::exception_ptr> errors(channels.size());
    std::size_t next = 0;
    std::mutex m;
    auto work = [&] {
      for (;;) {
        std::size_t k;
        {
          std::lock_guard<std::mutex> lock(m);
          if (next >= channels.size()) return;
          k = next++;
        }
        try {
          runs[k] = synthesize_channel(args, cfg, channels[k].first, channels[k].second);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < std::min<int>(workers, static_cast<int>(channels.size())); ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t k = 0; k < channels.size(); ++k)
      runs[k] = synthesize_channel(args, cfg, channels[k].first, channels[k].second);
  }

  ensure_dir(out_dir);
  const std::string stem = fs::path(args.image).stem().string();
  std::ostringstream csv;
  csv << "image,method,channel,wavelength_nm,psnr_db,ssim\n";
  json report = json::array();
  double psnr_sum = 0;
  for (const auto& run : runs) {
    const std::string base = (fs::path(out_dir) / (stem + "_" + args.method + "_" + io::channel_name(run.channel))).string();
    io::save_phase(base + "_phase.png", run.result.hologram);
    io::save_image(base + "_recon.png", run.result.reconstruction);
    const double nm = cfg.pipeline.optical.wavelengths.at(run.wavelength_index) * 1e9;
    csv << stem << ',' << args.method << ',' << io::channel_name(run.channel) << ',' << fmt(nm, 1) << ','
        << fmt(run.psnr) << ',' << fmt(run.ssim) << '\n';
    report.push_back({{"image", stem},
                      {"method", args.method},
                      {"channel", io::channel_name(run.channel)},
                      {"wavelength_nm", nm},
                      {"psnr_db", number_or_null(run.psnr)},
                      {"ssim", number_or_null(run.ssim)},
                      {"hologram", base + "_phase.png"},
                      {"reconstruction", base + "_recon.png"}});
    psnr_sum += run.psnr;
    if (!args.json)
      std::cout << "method=" << args.method << " channel=" << io::channel_name(run.channel)
                << " psnr_db=" << fmt(run.psnr) << " ssim=" << fmt(run.ssim) << '\n';
  }
  write_text((fs::path(out_dir) / (stem + "_" + args.method + "_metrics.csv")).string(), csv.str());
  const double mean_psnr = psnr_sum / static_cast<double>(runs.size());
  if (args.json) {
    std::cout << json{{"runs", report}, {"mean_psnr_db", number_or_null(mean_psnr)}}.dump(2) << '\n';
  } else if (runs.size() > 1) {
    std::cout << "mean_psnr_db=" << fmt(mean_psnr) << " (per-channel PSNR, averaged)\n";
  }
  return kOk;
}

// ---- train ------------------------------------------------------------------

int train(const TrainArgs& args) {
  const auto cfg = load_run_config(args.config);
  const auto data = load_dataset(args.dataset_dir.empty() ? cfg.dataset_dir : args.dataset_dir, cfg);
  const auto pcfg = sized(cfg.pipeline, data.images.front().height(), data.images.front().width());
  auto tcfg = cfg.train_config();
  if (args.steps) tcfg.steps = *args.steps;
  if (args.seed) tcfg.seed = *args.seed;
  if (tcfg.steps < 0) throw ConfigError("train.steps: must be >= 0");

  auto state = opt::init_training<float>(pcfg, tcfg);
  if (!args.resume.empty()) opt::restore_training(state, nn::read_checkpoint(args.resume));
  const auto start_step = state.adam.step;
  const auto optics = opt::make_optics<float>(pcfg);
  opt::train(state, data.images, pcfg, optics, tcfg);

  if (!args.checkpoint_out.empty()) {
    ensure_dir(fs::path(args.checkpoint_out).parent_path().string());
    nn::write_checkpoint(args.checkpoint_out, opt::training_entries(state));
  }
  const std::string csv_path =
      !args.loss_csv.empty() ? args.loss_csv : (args.checkpoint_out.empty() ? "" : args.checkpoint_out + ".loss.csv");
  if (!csv_path.empty()) write_text(csv_path, loss_csv(state.losses));

  const double first = state.losses.empty() ? std::nan("") : state.losses.front();
  const double last = state.losses.empty() ? std::nan("") : state.losses.back();
  if (args.json) {
    std::cout << json{{"images", data.files.size()},
                      {"resumed_from_step", start_step},
                      {"steps", state.adam.step},
                      {"first_loss", number_or_null(first)},
                      {"last_loss", number_or_null(last)},
                      {"checkpoint", args.checkpoint_out},
                      {"loss_csv", csv_path}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "images=" << data.files.size() << " steps=" << state.adam.step << " resumed_from=" << start_step
              << " first_loss=" << fmt(first, 6) << " last_loss=" << fmt(last, 6) << '\n';
  }
  return kOk;
}

// ---- ablate -----------------------------------------------------------------

namespace {

opt::PipelineConfig apply_scenario(opt::PipelineConfig p, const std::string& scenario) {
  if (scenario == "full") return p;
  if (scenario == "asm-low-def") p.low_definition_asm = true;
  else if (scenario == "sr-none") p.shuffle_only_merge = true;
  else if (scenario == "no-grn") p.lfmn.use_grn = false;
  else if (scenario == "no-lfm") p.lfmn.use_lfm = false;
  else if (scenario == "no-eccm") p.lfmn.use_eccm = false;
  else throw ConfigError("--scenario: unknown scenario '" + scenario + "'");
  return p;
}

}  // namespace

int ablate(const AblateArgs& args) {
  const auto cfg = load_run_config(args.config);
  std::vector<std::string> scenarios{"full"};
  for (const auto& s : args.scenarios.empty() ? kScenarios : args.scenarios) {
    apply_scenario({}, s);
    if (std::find(scenarios.begin(), scenarios.end(), s) == scenarios.end()) scenarios.push_back(s);
  }
  const auto data = load_dataset(args.dataset_dir.empty() ? cfg.dataset_dir : args.dataset_dir, cfg);
  const auto base = sized(cfg.pipeline, data.images.front().height(), data.images.front().width());
  auto tcfg = cfg.train_config();
  if (args.steps) tcfg.steps = *args.steps;
  if (!args.checkpoint_dir.empty()) ensure_dir(args.checkpoint_dir);
  const int threads = io::worker_threads(cfg.threads);

  struct Row {
    std::string scenario;
    double psnr, ssim;
    bool trained;
  };
  std::vector<Row> rows;
  for (const auto& s : scenarios) {
    const auto pcfg = apply_scenario(base, s);
    const auto optics = opt::make_optics<float>(pcfg);
    auto state = opt::init_training<float>(pcfg, tcfg);
    const std::string ckpt = args.checkpoint_dir.empty() ? "" : (fs::path(args.checkpoint_dir) / (s + ".ckpt")).string();
    bool trained = false;
    if (!ckpt.empty() && fs::exists(ckpt)) {
      nn::load_entries(nn::read_checkpoint(ckpt), state.params.list());
    } else {
      opt::train(state, data.images, pcfg, optics, tcfg);
      trained = true;
      if (!ckpt.empty()) nn::write_checkpoint(ckpt, opt::training_entries(state));
    }
    const auto scores = opt::evaluate(data.images, state.params, optics, pcfg, threads);
    double p = 0, q = 0;
    for (const auto& sc : scores) {
      p += sc.psnr;
      q += sc.ssim;
    }
    rows.push_back({s, p / scores.size(), q / scores.size(), trained});
  }

  std::ostringstream csv;
  csv << "scenario,psnr_db,ssim,delta_psnr_db\n";
  for (const auto& r : rows)
    csv << r.scenario << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << ',' << fmt(r.psnr - rows.front().psnr) << '\n';
  if (!args.csv.empty()) write_text(args.csv, csv.str());

  if (args.json) {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back({{"scenario", r.scenario},
                    {"psnr_db", number_or_null(r.psnr)},
                    {"ssim", number_or_null(r.ssim)},
                    {"delta_psnr_db", number_or_null(r.psnr - rows.front().psnr)},
                    {"trained_steps", r.trained ? tcfg.steps : 0}});
    std::cout << json{{"images", data.files.size()}, {"scenarios", j}}.dump(2) << '\n';
  } else {
    std::printf("%-12s %10s %8s %10s\n", "scenario", "psnr_db", "ssim", "delta_db");
    for (const auto& r : rows)
      std::printf("%-12s %10s %8s %10s\n", r.scenario.c_str(), fmt(r.psnr, 3).c_str(), fmt(r.ssim).c_str(),
                  fmt(r.psnr - rows.front().psnr, 3).c_str());
  }
  return kOk;
}

// ---- bench ------------------------------------------------------------------

namespace {

struct BenchRow {
  int size, scale;
  double total_s, network_s;
  metrics::LedgerReport ledger;
};

Grid<float> bench_image(int n) {
  Grid<float> g(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      g(r, c) = static_cast<float>(0.5 + 0.25 * std::sin(0.21 * r) * std::cos(0.17 * c) + 0.2 * (r + c) / (2.0 * n));
  return g;
}

}  // namespace

int bench(const BenchArgs& args) {
  const auto cfg = load_run_config(args.config);
  if (args.repeats < 1) throw ConfigError("--repeats: must be >= 1");
  std::vector<BenchRow> rows;
  for (int size : args.sizes) {
    for (int r : args.scales) {
      auto pcfg = cfg.pipeline;
      pcfg.scale = r;
      pcfg.use_pyramid = pcfg.use_pyramid && r == 4;
      pcfg = sized(pcfg, size, size);
      const auto params = opt::init_pipeline<float>(pcfg, cfg.seed);
      const auto optics = opt::make_optics<float>(pcfg);
      const auto image = bench_image(size);

      const auto total = metrics::stopwatch([&] { opt::forward_pipeline(image, params, optics, pcfg); }, args.repeats);

      // Network stages alone, on inputs of the shapes the pipeline feeds them.
      const int t = r * r, h = size / r;
      const auto sub_images = ad::Tensor<float>::filled({1, t, h, h}, 0.5f);
      const auto sub_fields = ad::Tensor<float>::filled({1, 2 * t, h, h}, 0.25f);
      const auto network = metrics::stopwatch([&] {
        ad::Tape<float> tape(false);
        const auto g = nn::generator_forward(tape, sub_images, params.generator);
        const auto e = nn::encoder_forward(tape, sub_fields, params.encoder);
        if (params.pyramid) nn::pyramid_merge(tape, e, *params.pyramid);
        else if (params.lfmn) nn::lfmn_forward(tape, e, *params.lfmn);
      }, args.repeats);

      metrics::MemoryLedger ledger;
      ledger.set_grid(size, size, r);
      {
        metrics::LedgerScope scope(ledger);
        ad::Tape<float> tape;
        const auto g = opt::pipeline_graph(tape, image, params, optics, pcfg);
        tape.backward(g.loss);
      }
      rows.push_back({size, r, total.median_seconds, network.median_seconds, ledger.report()});
    }
  }

  using metrics::Stage;
  std::ostringstream csv;
  csv << "size,scale,total_median_s,total_fps,network_median_s,network_fps,asm_peak_bytes,generator_peak_bytes,"
         "encoder_peak_bytes,merge_sr_peak_bytes,autodiff_tape_peak_bytes,backbone_peak_bytes\n";
  char buf[512];
  for (const auto& row : rows) {
    const auto& l = row.ledger;
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.3f,%.6f,%.3f,%lld,%lld,%lld,%lld,%lld,%lld\n", row.size, row.scale,
                  row.total_s, 1.0 / row.total_s, row.network_s, 1.0 / row.network_s,
                  static_cast<long long>(l.peak(Stage::Asm)), static_cast<long long>(l.peak(Stage::Generator)),
                  static_cast<long long>(l.peak(Stage::Encoder)), static_cast<long long>(l.peak(Stage::MergeSr)),
                  static_cast<long long>(l.peak(Stage::AutodiffTape)),
                  static_cast<long long>(l.peak(Stage::Generator) + l.peak(Stage::Encoder)));
    csv << buf;
  }
  if (!args.csv.empty()) write_text(args.csv, csv.str());
  if (args.json) {
    json j = json::array();
    for (const auto& row : rows)
      j.push_back({{"size", row.size},
                   {"scale", row.scale},
                   {"total_median_s", row.total_s},
                   {"network_median_s", row.network_s},
                   {"total_fps", 1.0 / row.total_s},
                   {"network_fps", 1.0 / row.network_s},
                   {"ledger", json::parse(row.ledger.to_json())}});
    std::cout << json{{"simd", std::string(simd::isa_name(simd::active_isa()))}, {"repeats", args.repeats}, {"rows", j}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << csv.str();
  }
  return kOk;
}

// ---- oracle-check -------------------------------------------------------------

int oracle_check(const OracleArgs& args) {
  if (args.seeds < 1) throw ConfigError("--seeds: must be >= 1");
  if (args.inject_fault) simd::force_isa(simd::Isa::FaultyForTesting);
  const auto results = oracle::run_all(args.seeds);
  bool all = true;
  json j = json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    if (args.json) {
      j.push_back({{"check", r.name},
                   {"passed", r.passed},
                   {"measured", number_or_null(r.measured)},
                   {"tolerance", r.tolerance},
                   {"detail", r.detail}});
    } else {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%.3e < %.1e", r.measured, r.tolerance);
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << buf
                << (r.detail.empty() ? "" : "  (" + r.detail + ")") << '\n';
    }
  }
  if (args.json)
    std::cout << json{{"passed", all}, {"simd", std::string(simd::isa_name(simd::active_isa()))}, {"checks", j}}.dump(2)
              << '\n';
  else
    std::cout << (all ? "oracle-check: all checks passed\n" : "oracle-check: FAILED\n");
  return all ? kOk : kCheckFailed;
}

}  // namespace holotile::cli
