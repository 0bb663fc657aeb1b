#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "holotile/errors.hpp"

namespace {

// One line on stderr: "holotile: error[<kind>]: <message>".
int fail(const std::string& kind, std::string message, int code) {
  for (auto& c : message)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "holotile: error[" << kind << "]: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace holotile::cli;
  CLI::App app{"Tiled phase-only hologram synthesis, training and evaluation"};
  app.require_subcommand(1);

  SynthesizeArgs syn;
  auto* s = app.add_subcommand("synthesize", "Compute a phase-only hologram and its reconstruction");
  s->add_option("--image", syn.image, "Target image (PNG or PGM)")->required();
  s->add_option("--config", syn.config, "JSON configuration");
  s->add_option("--method", syn.method, "Synthesis method")
      ->check(CLI::IsMember({"pipeline", "sgd", "gs", "dpac"}));
  s->add_option("--out-dir", syn.out_dir, "Output directory (default: data.out_dir)");
  s->add_option("--checkpoint", syn.checkpoint, "Trained weights for --method pipeline");
  s->add_option("--channels", syn.channels, "Image channels: gray or any of r, g, b (e.g. rgb)");
  s->add_option("--iters", syn.iters, "Iterations for sgd and gs");
  s->add_flag("--parallel-channels", syn.parallel_channels, "Run color channels concurrently");
  s->add_flag("--json", syn.json, "Machine-readable report on stdout");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the pipeline on a directory of images");
  t->add_option("--dataset-dir", tr.dataset_dir, "Directory of PNG/PGM images (default: data.dataset_dir)");
  t->add_option("--config", tr.config, "JSON configuration");
  t->add_option("--steps", tr.steps, "Total optimizer steps, counting resumed ones");
  t->add_option("--seed", tr.seed, "Seed for initialization and augmentation");
  t->add_option("--checkpoint-out", tr.checkpoint_out, "Checkpoint to write");
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--loss-csv", tr.loss_csv, "Loss curve CSV (default: <checkpoint-out>.loss.csv)");
  t->add_flag("--json", tr.json, "Machine-readable report on stdout");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Compare the full pipeline against ablated variants");
  a->add_option("--scenario", ab.scenarios,
                "Scenario (repeatable; default all): asm-low-def, sr-none, no-grn, no-lfm, no-eccm")
      ->check(CLI::IsMember(kScenarios));
  a->add_option("--dataset-dir", ab.dataset_dir, "Directory of PNG/PGM images (default: data.dataset_dir)");
  a->add_option("--config", ab.config, "JSON configuration");
  a->add_option("--checkpoint-dir", ab.checkpoint_dir,
                "Per-scenario checkpoints <scenario>.ckpt; missing ones are trained and saved");
  a->add_option("--steps", ab.steps, "Training steps for scenarios without a checkpoint");
  a->add_option("--csv", ab.csv, "Write the comparison table as CSV");
  a->add_flag("--json", ab.json, "Machine-readable report on stdout");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Time the pipeline and report per-stage memory peaks");
  b->add_option("--sizes", be.sizes, "Square grid sizes")->delimiter(',');
  b->add_option("--scales", be.scales, "Tiling factors")->delimiter(',')->check(CLI::IsMember({1, 2, 4}));
  b->add_option("--repeats", be.repeats, "Timed repetitions (median reported)");
  b->add_option("--config", be.config, "JSON configuration");
  b->add_option("--csv", be.csv, "Write the table as CSV");
  b->add_flag("--json", be.json, "Machine-readable report on stdout");

  OracleArgs orc;
  auto* o = app.add_subcommand("oracle-check", "Run the numerical self-checks");
  o->add_option("--seeds", orc.seeds, "Random draws per gradient check");
  o->add_flag("--inject-fault", orc.inject_fault, "Use a deliberately broken kernel (tests the checks)")
      ->group("");
  o->add_flag("--json", orc.json, "Machine-readable report on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kConfigError);
  }

  try {
    if (s->parsed()) return synthesize(syn);
    if (t->parsed()) return train(tr);
    if (a->parsed()) return ablate(ab);
    if (b->parsed()) return bench(be);
    if (o->parsed()) return oracle_check(orc);
  } catch (const holotile::IoError& e) {
    return fail("io", e.what(), kIoError);
  } catch (const holotile::ConfigError& e) {
    return fail("config", e.what(), kConfigError);
  } catch (const holotile::UsageError& e) {
    return fail("usage", e.what(), kConfigError);
  } catch (const holotile::Error& e) {
    return fail(e.kind(), e.what(), kCheckFailed);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kCheckFailed);
  }
  return kOk;
}
