// blocksurgeon: saliency-guided block surgery with training-free
// multi-objective search, one subcommand per pipeline stage.
//
// Exit codes: 0 ok, 2 usage, 3 missing artifact, 4 corrupt/mismatched data.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blocksurgeon/errors.hpp"
#include "blocksurgeon/pipeline.hpp"

namespace bs = blocksurgeon;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitCorruptData = 4;

std::vector<bs::BlockKind> parse_kinds(const std::string& csv) {
  std::vector<bs::BlockKind> kinds;
  std::string item;
  for (std::size_t i = 0; i <= csv.size(); ++i) {
    if (i == csv.size() || csv[i] == ',') {
      if (!item.empty()) kinds.push_back(bs::block_kind_from_string(item));
      item.clear();
    } else {
      item += csv[i];
    }
  }
  return kinds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hardware-aware block surgery for a toy deblurring network"};
  app.require_subcommand(1);

  std::string workspace;
  std::string preset = "desk";
  std::uint64_t seed = 7;
  int budget = 120;
  double fraction = 0.25;
  std::string select_rule = "knee";
  std::string profile_source = "simulate";
  std::string kinds_csv;
  int dataset_count = 96;
  int image_size = 32;
  double noise_sigma = 0.01;
  int train_epochs = 60;
  double train_lr = 1e-3;
  int freeze_k = 1;
  int distill_steps = 400;
  double distill_lr = 2e-3;
  int pool = 64;
  double penalty_floor = 0.1;
  double profile_noise = 0.05;
  int finetune_epochs = 12;
  double finetune_lr = 3e-4;
  int workers = 0;

  std::vector<CLI::App*> subs;
  for (const auto& stage : bs::pipeline_stages()) {
    subs.push_back(app.add_subcommand(stage, "run the " + stage + " stage"));
  }
  CLI::App* run_sub = app.add_subcommand("run", "run every stage in order");
  subs.push_back(run_sub);

  for (CLI::App* sub : subs) {
    sub->add_option("--workspace", workspace, "workspace directory")->required();
    sub->add_option("--preset", preset, "network preset: desk | paper-shape");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--budget", budget, "search evaluation budget");
    sub->add_option("--fraction", fraction, "distillation data fraction in (0,1]");
    sub->add_option("--select", select_rule, "selection rule: knee | least-latency");
    sub->add_option("--profile", profile_source,
                    "latency source: 'simulate' or a profile JSON path");
    sub->add_option("--kinds", kinds_csv,
                    "comma list restricting the alternatives, e.g. alt1,alt3");
    sub->add_option("--dataset-count", dataset_count, "number of image pairs");
    sub->add_option("--image-size", image_size, "square image size");
    sub->add_option("--noise-sigma", noise_sigma, "blur noise sigma");
    sub->add_option("--train-epochs", train_epochs, "base training epochs");
    sub->add_option("--train-lr", train_lr, "base training learning rate");
    sub->add_option("--freeze-k", freeze_k, "slots frozen by saliency consensus");
    sub->add_option("--distill-steps", distill_steps, "distillation steps per pair");
    sub->add_option("--distill-lr", distill_lr, "distillation learning rate");
    sub->add_option("--pool", pool, "EHVI candidate pool size");
    sub->add_option("--penalty-floor", penalty_floor, "minimum penalty alpha");
    sub->add_option("--profile-noise", profile_noise, "simulated profile noise");
    sub->add_option("--finetune-epochs", finetune_epochs, "finetune epochs");
    sub->add_option("--finetune-lr", finetune_lr, "finetune learning rate");
    sub->add_option("--workers", workers,
                    "worker pool cap (BLOCKSURGEON_WORKERS also applies)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "%s\n", e.what());
    return kExitUsage;
  }

  try {
    bs::RunConfig cfg;
    const std::string stored = workspace + "/run_config.json";
    const bool is_gen = app.get_subcommand("gen-data")->parsed() ||
                        app.get_subcommand("run")->parsed();
    if (!is_gen && bs::workspace_has_config(workspace)) {
      cfg = bs::load_run_config(workspace);
    }
    cfg.workspace = workspace;
    // Explicit flags override; unspecified flags keep stored/default values.
    auto passed = [&](const char* name) {
      for (CLI::App* sub : subs) {
        if (sub->parsed() && sub->count(name) > 0) return true;
      }
      return false;
    };
    if (is_gen || passed("--preset")) cfg.preset = preset;
    if (is_gen || passed("--seed")) cfg.seed = seed;
    if (is_gen || passed("--budget")) cfg.budget = budget;
    if (is_gen || passed("--fraction")) cfg.fraction = fraction;
    if (is_gen || passed("--select")) cfg.select_rule = select_rule;
    if (is_gen || passed("--profile")) cfg.profile_source = profile_source;
    if (is_gen || passed("--dataset-count")) cfg.dataset_count = dataset_count;
    if (is_gen || passed("--image-size")) cfg.image_size = image_size;
    if (is_gen || passed("--noise-sigma")) cfg.noise_sigma = noise_sigma;
    if (is_gen || passed("--train-epochs")) cfg.train_epochs = train_epochs;
    if (is_gen || passed("--train-lr")) cfg.train_lr = train_lr;
    if (is_gen || passed("--freeze-k")) cfg.freeze_k = freeze_k;
    if (is_gen || passed("--distill-steps")) cfg.distill_steps = distill_steps;
    if (is_gen || passed("--distill-lr")) cfg.distill_lr = distill_lr;
    if (is_gen || passed("--pool")) cfg.pool = pool;
    if (is_gen || passed("--penalty-floor")) cfg.penalty_floor = penalty_floor;
    if (is_gen || passed("--profile-noise")) cfg.profile_noise = profile_noise;
    if (is_gen || passed("--finetune-epochs")) cfg.finetune_epochs = finetune_epochs;
    if (is_gen || passed("--finetune-lr")) cfg.finetune_lr = finetune_lr;
    if (!kinds_csv.empty()) cfg.kinds = parse_kinds(kinds_csv);
    cfg.workers = workers;

    bs::Pipeline pipeline(cfg);
    if (run_sub->parsed()) {
      pipeline.run_all();
    } else {
      for (const auto& stage : bs::pipeline_stages()) {
        if (app.get_subcommand(stage)->parsed()) {
          pipeline.run_stage(stage);
          break;
        }
      }
    }
    (void)stored;
    return 0;
  } catch (const bs::MissingArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingArtifact;
  } catch (const bs::CorruptArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCorruptData;
  } catch (const bs::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCorruptData;
  } catch (const bs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
