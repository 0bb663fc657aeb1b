#include <chrono>
#include <cmath>
#include <thread>

#include "doctest.h"
#include "holotile/metrics.hpp"
#include "holotile/optimize.hpp"
#include "holotile/propagation.hpp"
#include "reference_metrics.hpp"
#include "support.hpp"

using namespace holotile;
using metrics::Stage;

using testing::naive_psnr;
using testing::naive_ssim;

TEST_SUITE("metrics") {

TEST_CASE("psnr closed forms") {
  const Grid<double> zero(8, 8, 0.0), tenth(8, 8, 0.1);
  CHECK(metrics::psnr(zero, tenth) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::isinf(metrics::psnr(tenth, tenth)));
  CHECK(metrics::psnr_channels({zero, zero}, {tenth, zero}) == std::numeric_limits<double>::infinity());
  CHECK(metrics::psnr_channels({zero, zero}, {tenth, tenth}) == doctest::Approx(20.0));
  CHECK_THROWS_AS(metrics::psnr(zero, Grid<double>(8, 7)), DimensionError);
}

TEST_CASE("psnr and ssim match naive references on 50 random pairs") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const int h = 11 + static_cast<int>(rng() % 14), w = 11 + static_cast<int>(rng() % 14);
    const auto a = testing::random_grid(h, w, rng);
    auto b = a;
    const double noise = testing::uniform(rng, 0.01, 0.5);
    for (auto& v : b.values()) v = std::clamp(v + noise * testing::uniform(rng), 0.0, 1.0);
    CHECK(std::abs(metrics::psnr(a, b) - naive_psnr(a, b)) < 1e-9);
    CHECK(std::abs(metrics::ssim(a, b) - naive_ssim(a, b)) < 1e-9);
    CHECK(metrics::psnr(a, b) == metrics::psnr(b, a));
    CHECK(std::abs(metrics::ssim(a, b) - metrics::ssim(b, a)) < 1e-15);
    const double s = metrics::ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("psnr falls as noise grows") {
  std::mt19937_64 rng(2);
  const auto a = testing::random_grid(32, 32, rng, 0.2, 0.8);
  double prev = INFINITY;
  for (double sigma : {0.01, 0.05, 0.2}) {
    auto b = a;
    for (auto& v : b.values()) v += sigma * testing::uniform(rng);
    const double p = metrics::psnr(a, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim of an image with itself is one") {
  std::mt19937_64 rng(3);
  const auto a = testing::random_grid(20, 30, rng);
  CHECK(std::abs(metrics::ssim(a, a) - 1.0) < 1e-9);
}

TEST_CASE("constant patches follow the luminance formula") {
  const double x = 0.3, y = 0.7, c1 = 1e-4;
  const double expected = (2 * x * y + c1) / (x * x + y * y + c1);
  CHECK(metrics::ssim(Grid<double>(16, 16, x), Grid<double>(16, 16, y)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("shared offset changes only the luminance term as predicted") {
  std::mt19937_64 rng(4);
  const auto a = testing::random_grid(24, 24, rng, 0, 0.5);
  const auto b = testing::random_grid(24, 24, rng, 0, 0.5);
  const double k = 0.25, c1 = 1e-4;
  auto a2 = a, b2 = b;
  for (auto& v : a2.values()) v += k;
  for (auto& v : b2.values()) v += k;
  const auto t1 = metrics::ssim_terms(a, b), t2 = metrics::ssim_terms(a2, b2);
  // Window means shift by k (normalized window); variances and covariance do not change.
  for (std::size_t i = 0; i < t1.luminance.size(); ++i)
    CHECK(std::abs(t2.contrast_structure[i] - t1.contrast_structure[i]) < 1e-6);
  const auto taps = metrics::gaussian_window(11, 1.5);
  for (int r = 0; r < 14; r += 3)
    for (int c = 0; c < 14; c += 3) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += taps[i] * taps[j] * a(r + i, c + j);
          mb += taps[i] * taps[j] * b(r + i, c + j);
        }
      const double shifted = (2 * (ma + k) * (mb + k) + c1) / ((ma + k) * (ma + k) + (mb + k) * (mb + k) + c1);
      CHECK(std::abs(t2.luminance(r, c) - shifted) < 1e-6);
    }
}

TEST_CASE("gaussian window") {
  const auto w = metrics::gaussian_window(11, 1.5);
  double s = 0;
  for (auto v : w) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w[5] > w[4]);
  CHECK(w[0] == doctest::Approx(w[10]).epsilon(1e-15));
  CHECK_THROWS_AS(metrics::ssim(Grid<double>(10, 20), Grid<double>(10, 20)), DimensionError);
}

TEST_CASE("stopwatch calibration") {
  const auto t = metrics::stopwatch([] { std::this_thread::sleep_for(std::chrono::milliseconds(30)); }, 5);
  CHECK(t.samples.size() == 5);
  for (auto s : t.samples) CHECK(s >= 0.0);
  CHECK(t.median_seconds == doctest::Approx(0.030).epsilon(0.2));
  CHECK(t.fps == doctest::Approx(1.0 / t.median_seconds));
  auto sorted = t.samples;
  std::sort(sorted.begin(), sorted.end());
  CHECK(t.median_seconds == sorted[2]);
}

TEST_CASE("ledger readings track peaks") {
  metrics::MemoryLedger ledger;
  ledger.record("asm", 100);
  ledger.record("asm", 50);
  ledger.record(Stage::Encoder, 10);
  const auto rep = ledger.report();
  CHECK(rep.peak(Stage::Asm) == 100);
  CHECK(rep.peak(Stage::Encoder) == 10);
  CHECK(rep.peak(Stage::Generator) == 0);
  CHECK(rep.sum_of_peaks == 110);
  CHECK_THROWS_AS(ledger.record("gpu", 1), UsageError);
  CHECK_THROWS_AS(ledger.record(Stage::Asm, -1), DomainError);
  for (auto s : {"asm", "generator", "encoder", "merge_sr", "autodiff_tape"}) CHECK(metrics::stage_name(metrics::stage_from_name(s)) == s);
  const auto text = rep.to_text();
  CHECK(text.find("merge_sr") != std::string::npos);
  CHECK(rep.to_csv().rfind("stage,", 0) == 0);
}

TEST_CASE("tracked buffers charge the active stage and refund on free") {
  metrics::MemoryLedger ledger;
  {
    metrics::LedgerScope scope(ledger);
    metrics::StageScope stage(Stage::Generator);
    metrics::TrackedVector<double> v(1000);
    {
      metrics::StageScope inner(Stage::MergeSr);
      metrics::TrackedVector<double> w(500);
    }
    CHECK(ledger.report().rows[static_cast<int>(Stage::Generator)].live_bytes == 8000);
  }
  const auto rep = ledger.report();
  CHECK(rep.peak(Stage::Generator) == 8000);
  CHECK(rep.peak(Stage::MergeSr) == 4000);
  for (const auto& row : rep.rows) CHECK(row.live_bytes == 0);
  CHECK(rep.overall_peak == 12000);
}

TEST_CASE("concurrent charging is consistent") {
  metrics::MemoryLedger ledger;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      metrics::LedgerScope scope(ledger);
      metrics::StageScope stage(Stage::Encoder);
      for (int k = 0; k < 200; ++k) metrics::TrackedVector<float> v(64);
    });
  for (auto& th : threads) th.join();
  const auto rep = ledger.report();
  CHECK(rep.rows[static_cast<int>(Stage::Encoder)].live_bytes == 0);
  CHECK(rep.peak(Stage::Encoder) >= 256);
  CHECK(rep.peak(Stage::Encoder) <= 8 * 256);
}

TEST_CASE("asm bytes scale with grid area") {
  auto asm_peak = [](int n) {
    metrics::MemoryLedger ledger;
    metrics::LedgerScope scope(ledger);
    const auto cfg = testing::grid_config(n, n, 1e-3);
    const auto tf = build_transfer<double>(cfg, cfg.distance, 2, 0);
    ComplexField<double> x(n, n, cfg.pitch, tf.wavelength);
    propagate(x, tf);
    return ledger.report().peak(Stage::Asm);
  };
  const double a = static_cast<double>(asm_peak(32)), b = static_cast<double>(asm_peak(64));
  CHECK(b / a == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("pipeline ledger: merge network is lighter than the generator") {
  opt::PipelineConfig cfg;
  cfg.optical.height = cfg.optical.width = 128;
  cfg.optical.distance = 1e-3;
  cfg.channel = 1;
  cfg.backbone_width = 20;
  cfg.lfmn.features = 8;
  cfg.lfmn.blocks = 2;
  const auto params = opt::init_pipeline<float>(cfg, 1);
  const auto optics = opt::make_optics<float>(cfg);
  Grid<float> image(128, 128, 0.5f);
  metrics::MemoryLedger ledger;
  {
    metrics::LedgerScope scope(ledger);
    ad::Tape<float> tape;
    tape.backward(opt::pipeline_graph(tape, image, params, optics, cfg).loss);
  }
  const auto rep = ledger.report();
  CHECK(rep.peak(Stage::MergeSr) > 0);
  CHECK(rep.peak(Stage::Asm) > 0);
  CHECK(rep.peak(Stage::MergeSr) < rep.peak(Stage::Generator));
}

}
