#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blocksurgeon/network.hpp"

namespace blocksurgeon {

// Everything a run needs; a run is reproducible from this plus its seeds.
// workspace and workers are runtime knobs and stay out of the serialized
// form and digest.
struct RunConfig {
  std::string workspace;
  std::string preset = "desk";  // desk | paper-shape
  std::uint64_t seed = 7;

  int dataset_count = 96;
  int image_size = 32;
  double noise_sigma = 0.01;

  int train_epochs = 60;
  double train_lr = 1e-3;

  int freeze_k = 1;

  double fraction = 0.25;
  int distill_steps = 400;
  double distill_lr = 2e-3;

  int budget = 120;
  int pool = 64;
  double penalty_floor = 0.1;
  std::string select_rule = "knee";         // knee | least-latency
  std::string profile_source = "simulate";  // "simulate" or a profile file path
  double profile_noise = 0.05;
  std::vector<BlockKind> kinds = alternative_kinds();

  int finetune_epochs = 12;
  double finetune_lr = 3e-4;

  int workers = 0;  // 0 = hardware concurrency; BLOCKSURGEON_WORKERS caps it

  std::string to_json() const;  // canonical
  static RunConfig from_json_text(const std::string& text);
  std::string digest() const;

  NetworkConfig network_config() const;
  std::uint64_t stage_seed(const std::string& stage) const;
};

// Stage names in pipeline order.
const std::vector<std::string>& pipeline_stages();
// Workspace subdirectory of a stage.
std::string stage_dir_name(const std::string& stage);

bool workspace_has_config(const std::string& workspace);
RunConfig load_run_config(const std::string& workspace);

// Seeded, resumable stage runner over one workspace directory. Each stage
// writes its artifacts plus a stage manifest; the manifests form a hash
// chain that `report` verifies end to end.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return cfg_; }

  void gen_data();
  void train_base();
  void profile();
  void saliency();
  void distill();
  void search();
  void finetune();
  void report();

  void run_stage(const std::string& stage);
  void run_all();

 private:
  std::string ws_path(const std::string& stage, const std::string& file = "") const;
  void require_stage(const std::string& stage, const std::string& artifact) const;
  void check_stored_config() const;
  void write_manifest(const std::string& stage,
                      const std::vector<std::string>& outputs) const;
  void verify_chain(const std::string& through_stage) const;

  RunConfig cfg_;
};

}  // namespace blocksurgeon
