#include "blocksurgeon/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>

#include "blocksurgeon/checkpoint.hpp"
#include "blocksurgeon/dataset.hpp"
#include "blocksurgeon/distill.hpp"
#include "blocksurgeon/latency.hpp"
#include "blocksurgeon/metrics.hpp"
#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/saliency.hpp"
#include "blocksurgeon/search.hpp"
#include "blocksurgeon/training.hpp"
#include "io_util.hpp"
#include "json.hpp"

namespace blocksurgeon {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  return hex64(fnv1a64(io::read_file(path)));
}

constexpr int kManifestVersion = 1;

}  // namespace

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["dataset_count"] = dataset_count;
  j["image_size"] = image_size;
  j["noise_sigma"] = noise_sigma;
  j["train_epochs"] = train_epochs;
  j["train_lr"] = train_lr;
  j["freeze_k"] = freeze_k;
  j["fraction"] = fraction;
  j["distill_steps"] = distill_steps;
  j["distill_lr"] = distill_lr;
  j["budget"] = budget;
  j["pool"] = pool;
  j["penalty_floor"] = penalty_floor;
  j["select_rule"] = select_rule;
  j["profile_source"] = profile_source;
  j["profile_noise"] = profile_noise;
  j["kinds"] = nlohmann::ordered_json::array();
  for (BlockKind k : kinds) j["kinds"].push_back(to_string(k));
  j["finetune_epochs"] = finetune_epochs;
  j["finetune_lr"] = finetune_lr;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    c.preset = j.at("preset").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.dataset_count = j.at("dataset_count").get<int>();
    c.image_size = j.at("image_size").get<int>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.train_epochs = j.at("train_epochs").get<int>();
    c.train_lr = j.at("train_lr").get<double>();
    c.freeze_k = j.at("freeze_k").get<int>();
    c.fraction = j.at("fraction").get<double>();
    c.distill_steps = j.at("distill_steps").get<int>();
    c.distill_lr = j.at("distill_lr").get<double>();
    c.budget = j.at("budget").get<int>();
    c.pool = j.at("pool").get<int>();
    c.penalty_floor = j.at("penalty_floor").get<double>();
    c.select_rule = j.at("select_rule").get<std::string>();
    c.profile_source = j.at("profile_source").get<std::string>();
    c.profile_noise = j.at("profile_noise").get<double>();
    c.kinds.clear();
    for (const auto& k : j.at("kinds")) {
      c.kinds.push_back(block_kind_from_string(k.get<std::string>()));
    }
    c.finetune_epochs = j.at("finetune_epochs").get<int>();
    c.finetune_lr = j.at("finetune_lr").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run config field error: ") + e.what());
  }
  return c;
}

std::string RunConfig::digest() const { return hex64(fnv1a64(to_json())); }

NetworkConfig RunConfig::network_config() const {
  if (preset == "desk") return desk_config();
  if (preset == "paper-shape") return paper_shape_config();
  throw ValueError("unknown preset '" + preset + "' (expected desk or paper-shape)");
}

std::uint64_t RunConfig::stage_seed(const std::string& stage) const {
  return mix_seed(seed, fnv1a64(stage));
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> kStages = {
      "gen-data", "train-base", "profile", "saliency",
      "distill",  "search",     "finetune", "report"};
  return kStages;
}

std::string stage_dir_name(const std::string& stage) {
  if (stage == "gen-data") return "data";
  if (stage == "train-base") return "base";
  if (stage == "distill") return "surrogates";
  return stage;  // profile, saliency, search, finetune, report
}

bool workspace_has_config(const std::string& workspace) {
  return io::exists(io::join(workspace, "run_config.json"));
}

RunConfig load_run_config(const std::string& workspace) {
  RunConfig cfg =
      RunConfig::from_json_text(io::read_file(io::join(workspace, "run_config.json")));
  cfg.workspace = workspace;
  return cfg;
}

Pipeline::Pipeline(RunConfig config) : cfg_(std::move(config)) {
  if (cfg_.workspace.empty()) throw ValueError("pipeline needs a workspace directory");
  cfg_.network_config();  // validates the preset
  if (!(cfg_.fraction > 0.0) || cfg_.fraction > 1.0) {
    throw ValueError("fraction must be in (0, 1]");
  }
  if (cfg_.select_rule != "knee" && cfg_.select_rule != "least-latency") {
    throw ValueError("select_rule must be 'knee' or 'least-latency'");
  }
  for (BlockKind k : cfg_.kinds) {
    if (k == BlockKind::Base) throw ValueError("kinds list must not contain 'base'");
  }
  if (cfg_.kinds.empty()) throw ValueError("kinds list must not be empty");
}

std::string Pipeline::ws_path(const std::string& stage, const std::string& file) const {
  const std::string dir = io::join(cfg_.workspace, stage_dir_name(stage));
  return file.empty() ? dir : io::join(dir, file);
}

void Pipeline::require_stage(const std::string& stage, const std::string& artifact) const {
  if (!io::exists(ws_path(stage, "stage.json"))) {
    throw MissingArtifactError("missing " + artifact + ": stage '" + stage +
                               "' has not run in workspace '" + cfg_.workspace +
                               "' (expected " + ws_path(stage, "stage.json") + ")");
  }
}

void Pipeline::check_stored_config() const {
  const std::string path = io::join(cfg_.workspace, "run_config.json");
  if (!io::exists(path)) {
    throw MissingArtifactError("missing run config: run gen-data first (expected " +
                               path + ")");
  }
  if (hex64(fnv1a64(io::read_file(path))) != cfg_.digest()) {
    throw CorruptArtifactError(
        "config/workspace mismatch: flags disagree with " + path +
        "; start a new workspace or drop the conflicting flags");
  }
}

void Pipeline::write_manifest(const std::string& stage,
                              const std::vector<std::string>& outputs) const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["version"] = kManifestVersion;
  j["seed"] = cfg_.stage_seed(stage);
  j["config_digest"] = cfg_.digest();
  const auto& stages = pipeline_stages();
  const auto it = std::find(stages.begin(), stages.end(), stage);
  std::string parent;
  if (it != stages.begin()) {
    parent = file_digest(ws_path(*(it - 1), "stage.json"));
  }
  j["parent"] = parent;
  j["outputs"] = nlohmann::ordered_json::object();
  for (const auto& f : outputs) j["outputs"][f] = file_digest(ws_path(stage, f));
  io::write_file(ws_path(stage, "stage.json"), j.dump(2) + "\n");
}

void Pipeline::verify_chain(const std::string& through_stage) const {
  std::string prev_digest;
  for (const auto& stage : pipeline_stages()) {
    require_stage(stage, "stage '" + stage + "' manifest");
    const std::string manifest_path = ws_path(stage, "stage.json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptArtifactError("corrupt manifest " + manifest_path + ": " + e.what());
    }
    try {
      if (j.at("config_digest").get<std::string>() != cfg_.digest()) {
        throw CorruptArtifactError("manifest " + manifest_path +
                                   " was produced by a different run config");
      }
      if (j.at("parent").get<std::string>() != prev_digest) {
        throw CorruptArtifactError("hash chain broken at stage '" + stage + "'");
      }
      for (const auto& [file, digest] : j.at("outputs").items()) {
        const std::string path = ws_path(stage, file);
        if (!io::exists(path)) {
          throw MissingArtifactError("artifact " + path + " listed in manifest is missing");
        }
        if (file_digest(path) != digest.get<std::string>()) {
          throw CorruptArtifactError("artifact " + path + " does not match its manifest digest");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw CorruptArtifactError("manifest " + manifest_path + " field error: " + e.what());
    }
    prev_digest = file_digest(manifest_path);
    if (stage == through_stage) break;
  }
}

void Pipeline::gen_data() {
  io::ensure_dir(cfg_.workspace);
  io::write_file(io::join(cfg_.workspace, "run_config.json"), cfg_.to_json());

  DatasetSpec spec;
  spec.count = cfg_.dataset_count;
  spec.image_size = cfg_.image_size;
  spec.channels = cfg_.network_config().in_channels;
  spec.noise_sigma = cfg_.noise_sigma;
  spec.seed = cfg_.stage_seed("gen-data");
  const Dataset ds = generate_dataset(spec);
  save_dataset(ds, ws_path("gen-data"));
  write_manifest("gen-data", {"manifest.json", "sharp.f32", "blurred.f32"});
}

void Pipeline::train_base() {
  check_stored_config();
  require_stage("gen-data", "dataset");
  const Dataset ds = load_dataset(ws_path("gen-data"));

  Network network(cfg_.network_config(), cfg_.stage_seed("init"));
  const TrainReport tr = blocksurgeon::train_base(
      network, ds, cfg_.train_epochs, cfg_.train_lr, cfg_.stage_seed("train-base"));

  save_checkpoint(network, ws_path("train-base"), "base");
  nlohmann::ordered_json m;
  m["val_psnr_db"] = tr.val_psnr_db;
  m["degraded_psnr_db"] = tr.degraded_psnr_db;
  m["epoch_losses"] = tr.epoch_losses;
  io::write_file(ws_path("train-base", "metrics.json"), m.dump(2) + "\n");
  write_manifest("train-base", {"base.json", "base.bin", "metrics.json"});
}

void Pipeline::profile() {
  check_stored_config();
  require_stage("train-base", "base checkpoint");
  const NetworkConfig netcfg = cfg_.network_config();

  LatencyProfile p;
  if (cfg_.profile_source == "simulate") {
    p = simulate_profile(netcfg, cfg_.stage_seed("profile"), cfg_.profile_noise,
                         cfg_.image_size);
  } else {
    p = load_profile(cfg_.profile_source);
    // The frozen set is not known yet (saliency runs later), so only the
    // per-slot base entries are checked here; the search stage validates
    // full coverage against the frozen-aware config.
    for (const auto& slot : netcfg.slots) p.lookup(slot.id, BlockKind::Base);
  }
  io::ensure_dir(ws_path("profile"));
  save_profile(p, ws_path("profile", "profile.json"));
  write_manifest("profile", {"profile.json"});
}

void Pipeline::saliency() {
  check_stored_config();
  require_stage("gen-data", "dataset");
  require_stage("train-base", "base checkpoint");
  const Dataset ds = load_dataset(ws_path("gen-data"));
  const Network base = load_checkpoint(ws_path("train-base"), "base");

  const SaliencyReport report =
      compute_saliency(base, ds, cfg_.stage_seed("saliency"));
  const SaliencyRanking ranking = rank_blocks(report);
  const std::set<std::string> frozen = select_frozen(ranking, cfg_.freeze_k);

  io::ensure_dir(ws_path("saliency"));
  write_saliency_csv(report, ws_path("saliency", "report.csv"));
  nlohmann::ordered_json j;
  j["k"] = cfg_.freeze_k;
  j["frozen"] = nlohmann::ordered_json::array();
  for (const auto& slot : report.slot_order) {
    if (frozen.count(slot)) j["frozen"].push_back(slot);
  }
  j["consensus"] = report.consensus;
  io::write_file(ws_path("saliency", "frozen.json"), j.dump(2) + "\n");
  write_manifest("saliency", {"report.csv", "frozen.json"});
}

namespace {

std::set<std::string> load_frozen_set(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("frozen list is not valid JSON: ") + e.what());
  }
  std::set<std::string> frozen;
  for (const auto& s : j.at("frozen")) frozen.insert(s.get<std::string>());
  return frozen;
}

NetworkConfig apply_frozen(NetworkConfig cfg, const std::set<std::string>& frozen) {
  for (auto& s : cfg.slots) {
    if (frozen.count(s.id)) {
      s.frozen = true;
      s.kind = BlockKind::Base;
    }
  }
  return cfg;
}

}  // namespace

void Pipeline::distill() {
  check_stored_config();
  require_stage("gen-data", "dataset");
  require_stage("train-base", "base checkpoint");
  require_stage("saliency", "frozen-slot list");
  const Dataset ds = load_dataset(ws_path("gen-data"));
  const Network base = load_checkpoint(ws_path("train-base"), "base");
  const std::set<std::string> frozen =
      load_frozen_set(ws_path("saliency", "frozen.json"));
  const NetworkConfig effective = apply_frozen(cfg_.network_config(), frozen);

  const Dataset train_split = ds.subset(ds.train_indices());
  const Dataset subset =
      subsample(train_split, cfg_.fraction, cfg_.stage_seed("subsample"));

  DistillOptions opts;
  opts.steps = cfg_.distill_steps;
  opts.lr = cfg_.distill_lr;
  opts.batch = kTrainBatchSize;
  opts.fraction = cfg_.fraction;
  const SurrogateSet set =
      distill_all(base, subset, cfg_.kinds, effective.searchable_slots(), opts,
                  cfg_.stage_seed("distill"), cfg_.workers);

  save_surrogates(set, ws_path("distill"));
  std::vector<std::string> outputs = {"index.json"};
  for (const auto& [key, s] : set.items()) {
    const std::string stem = key.first + "__" + to_string(s.block.kind());
    outputs.push_back(stem + ".json");
    outputs.push_back(stem + ".bin");
  }
  write_manifest("distill", outputs);
}

namespace {

struct SearchArtifacts {
  MoboResult result;
  PenaltyScale scale;
  double base_val_psnr = 0.0;
  std::vector<std::string> slots;
  std::vector<BlockKind> kind_table;
};

std::string kinds_label(const std::vector<int>& kinds,
                        const std::vector<BlockKind>& table) {
  std::string label;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) label += "-";
    label += to_string(table[static_cast<std::size_t>(kinds[i])]);
  }
  return label;
}

std::string render_runlog_csv(const MoboResult& result,
                              const std::vector<BlockKind>& table) {
  std::set<int> pareto_orders;
  for (const auto& m : result.archive.members()) pareto_orders.insert(m.order);
  std::string csv = "iteration,kinds,f1_db,f2,latency_ms,pareto_member\n";
  char buf[256];
  for (const auto& obs : result.log) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.12g,%.12g,%.12g,%d\n", obs.order,
                  kinds_label(obs.kinds, table).c_str(), obs.f1, obs.f2,
                  obs.latency_ms, pareto_orders.count(obs.order) ? 1 : 0);
    csv += buf;
  }
  return csv;
}

std::string render_pareto_svg(const MoboResult& result, int selected_order,
                              const std::string& preset, std::uint64_t seed) {
  constexpr int kW = 720, kH = 520, kL = 80, kR = 30, kT = 50, kB = 70;
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const auto& obs : result.log) {
    min_x = std::min(min_x, obs.latency_ms);
    max_x = std::max(max_x, obs.latency_ms);
    min_y = std::min(min_y, obs.f1);
    max_y = std::max(max_y, obs.f1);
  }
  if (max_x <= min_x) max_x = min_x + 1.0;
  if (max_y <= min_y) max_y = min_y + 1.0;
  const double pad_x = 0.05 * (max_x - min_x), pad_y = 0.05 * (max_y - min_y);
  min_x -= pad_x;
  max_x += pad_x;
  min_y -= pad_y;
  max_y += pad_y;

  auto sx = [&](double v) {
    return kL + (v - min_x) / (max_x - min_x) * (kW - kL - kR);
  };
  auto sy = [&](double v) {
    return kH - kB - (v - min_y) / (max_y - min_y) * (kH - kT - kB);
  };
  char buf[512];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "viewBox=\"0 0 %d %d\">\n",
                kW, kH, kW, kH);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\">"
                "accuracy loss vs latency (%s, seed %llu)</text>\n",
                kL, preset.c_str(), static_cast<unsigned long long>(seed));
  svg += buf;

  // Axes and ticks.
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n"
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n",
                kL, kH - kB, kW - kR, kH - kB, kL, kT, kL, kH - kB);
  svg += buf;
  for (int t = 0; t <= 4; ++t) {
    const double vx = min_x + (max_x - min_x) * t / 4.0;
    const double vy = min_y + (max_y - min_y) * t / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%d\" x2=\"%.2f\" y2=\"%d\" stroke=\"black\"/>\n"
                  "<text x=\"%.2f\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.4g</text>\n",
                  sx(vx), kH - kB, sx(vx), kH - kB + 6, sx(vx), kH - kB + 20, vx);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%.2f\" x2=\"%d\" y2=\"%.2f\" stroke=\"black\"/>\n"
                  "<text x=\"%d\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"end\">%.4g</text>\n",
                  kL - 6, sy(vy), kL, sy(vy), kL - 10, sy(vy) + 4, vy);
    svg += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
                "text-anchor=\"middle\">latency (ms)</text>\n",
                (kL + kW - kR) / 2, kH - 20);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"22\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
                "text-anchor=\"middle\" transform=\"rotate(-90 22 %d)\">PSNR loss (dB)"
                "</text>\n",
                (kT + kH - kB) / 2, (kT + kH - kB) / 2);
  svg += buf;

  // All observations.
  for (const auto& obs : result.log) {
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#b0b0b0\"/>\n",
                  sx(obs.latency_ms), sy(obs.f1));
    svg += buf;
  }

  // Pareto front, sorted by latency.
  std::vector<SearchObservation> front = result.archive.members();
  std::sort(front.begin(), front.end(),
            [](const SearchObservation& a, const SearchObservation& b) {
              return a.latency_ms < b.latency_ms;
            });
  std::string path;
  for (std::size_t i = 0; i < front.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f %.2f", i ? " L" : "M",
                  sx(front[i].latency_ms), sy(front[i].f1));
    path += buf;
  }
  if (!path.empty()) {
    svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"#1f6fd6\" stroke-width=\"1.5\"/>\n";
  }
  for (const auto& m : front) {
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"#1f6fd6\"/>\n",
                  sx(m.latency_ms), sy(m.f1));
    svg += buf;
  }

  // Selected point.
  for (const auto& obs : result.log) {
    if (obs.order != selected_order) continue;
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"7\" fill=\"none\" "
                  "stroke=\"#d62728\" stroke-width=\"2.5\"/>\n",
                  sx(obs.latency_ms), sy(obs.f1));
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

void Pipeline::search() {
  check_stored_config();
  require_stage("gen-data", "dataset");
  require_stage("train-base", "base checkpoint");
  require_stage("profile", "latency profile");
  require_stage("saliency", "frozen-slot list");
  require_stage("distill", "surrogate set");

  const Dataset ds = load_dataset(ws_path("gen-data"));
  const Network base = load_checkpoint(ws_path("train-base"), "base");
  const LatencyProfile prof = load_profile(ws_path("profile", "profile.json"));
  const std::set<std::string> frozen =
      load_frozen_set(ws_path("saliency", "frozen.json"));
  const SurrogateSet surrogates = load_surrogates(ws_path("distill"));
  const NetworkConfig effective = apply_frozen(cfg_.network_config(), frozen);
  validate_profile(prof, effective, cfg_.kinds);

  SearchArtifacts art;
  art.slots = effective.searchable_slots();
  art.kind_table.push_back(BlockKind::Base);
  for (BlockKind k : cfg_.kinds) art.kind_table.push_back(k);
  art.base_val_psnr = validation_psnr(base, ds);

  const Evaluator evaluator =
      make_stitched_evaluator(base, surrogates, prof, ds, art.base_val_psnr,
                              art.slots, art.kind_table);
  auto scale_box = std::make_shared<PenaltyScale>();
  const ScaleFactory factory = [this, &prof, &effective,
                                scale_box](const std::vector<EvalPoint>& init) {
    std::vector<double> losses;
    for (const auto& p : init) losses.push_back(p.f1);
    *scale_box = make_penalty_scale(prof, effective, losses, cfg_.penalty_floor);
    const PenaltyScale scale = *scale_box;
    return [scale](double latency_ms) { return penalty(scale, latency_ms); };
  };

  MoboOptions opts;
  opts.budget = cfg_.budget;
  opts.pool = cfg_.pool;
  opts.seed = cfg_.stage_seed("search");
  art.result = mobo_run(static_cast<int>(art.slots.size()),
                        static_cast<int>(art.kind_table.size()), evaluator,
                        factory, opts);
  art.scale = *scale_box;
  art.result.scale_used = art.scale;

  const SearchObservation selected = cfg_.select_rule == "knee"
                                         ? knee_select(art.result.archive)
                                         : least_latency_select(art.result.archive);

  io::ensure_dir(ws_path("search"));
  // Archive JSON: enough to re-verify every number offline.
  std::set<int> pareto_orders;
  for (const auto& m : art.result.archive.members()) pareto_orders.insert(m.order);
  nlohmann::ordered_json j;
  j["seed"] = opts.seed;
  j["budget"] = cfg_.budget;
  j["dims"] = art.slots.size();
  j["options_per_dim"] = art.kind_table.size();
  j["searchable_slots"] = art.slots;
  j["kind_table"] = nlohmann::ordered_json::array();
  for (BlockKind k : art.kind_table) j["kind_table"].push_back(to_string(k));
  j["base_val_psnr_db"] = art.base_val_psnr;
  j["ref"] = {art.result.ref.first, art.result.ref.second};
  j["scale"] = {{"alpha", art.scale.alpha},
                {"l_min", art.scale.l_min},
                {"l_base", art.scale.l_base}};
  j["selection_rule"] = cfg_.select_rule;
  j["selected_order"] = selected.order;
  j["observations"] = nlohmann::ordered_json::array();
  for (const auto& obs : art.result.log) {
    nlohmann::ordered_json o;
    o["order"] = obs.order;
    o["kinds"] = nlohmann::ordered_json::array();
    for (int k : obs.kinds) {
      o["kinds"].push_back(to_string(art.kind_table[static_cast<std::size_t>(k)]));
    }
    o["encoding"] = obs.encoding;
    o["f1_db"] = obs.f1;
    o["f2"] = obs.f2;
    o["latency_ms"] = obs.latency_ms;
    o["pareto"] = pareto_orders.count(obs.order) != 0;
    j["observations"].push_back(std::move(o));
  }
  io::write_file(ws_path("search", "archive.json"), j.dump(2) + "\n");
  io::write_file(ws_path("search", "runlog.csv"),
                 render_runlog_csv(art.result, art.kind_table));

  nlohmann::ordered_json sel;
  sel["rule"] = cfg_.select_rule;
  sel["order"] = selected.order;
  sel["slot_kinds"] = nlohmann::ordered_json::object();
  for (const auto& slot : effective.slots) {
    std::string kind_name = to_string(BlockKind::Base);
    for (std::size_t i = 0; i < art.slots.size(); ++i) {
      if (art.slots[i] == slot.id) {
        kind_name =
            to_string(art.kind_table[static_cast<std::size_t>(selected.kinds[i])]);
      }
    }
    sel["slot_kinds"][slot.id] = kind_name;
  }
  sel["f1_db"] = selected.f1;
  sel["f2"] = selected.f2;
  sel["latency_ms"] = selected.latency_ms;
  io::write_file(ws_path("search", "selected.json"), sel.dump(2) + "\n");
  write_manifest("search", {"archive.json", "runlog.csv", "selected.json"});
}

void Pipeline::finetune() {
  check_stored_config();
  require_stage("gen-data", "dataset");
  require_stage("train-base", "base checkpoint");
  require_stage("saliency", "frozen-slot list");
  require_stage("distill", "surrogate set");
  require_stage("search", "search selection");

  const Dataset ds = load_dataset(ws_path("gen-data"));
  const Network base = load_checkpoint(ws_path("train-base"), "base");
  const SurrogateSet surrogates = load_surrogates(ws_path("distill"));
  const std::set<std::string> frozen =
      load_frozen_set(ws_path("saliency", "frozen.json"));

  nlohmann::json sel;
  try {
    sel = nlohmann::json::parse(io::read_file(ws_path("search", "selected.json")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("selected.json is not valid JSON: ") + e.what());
  }
  NetworkConfig target = apply_frozen(cfg_.network_config(), frozen);
  for (auto& slot : target.slots) {
    const std::string kind_name = sel.at("slot_kinds").at(slot.id).get<std::string>();
    slot.kind = block_kind_from_string(kind_name);
    if (slot.kind != BlockKind::Base) slot.repeat = 1;
  }

  Network stitched = stitch(base, surrogates, target);
  const double pre = validation_psnr(stitched, ds);
  blocksurgeon::finetune(stitched, ds, cfg_.finetune_epochs, cfg_.finetune_lr,
                         cfg_.stage_seed("finetune"));
  const double post = validation_psnr(stitched, ds);

  save_checkpoint(stitched, ws_path("finetune"), "model");
  nlohmann::ordered_json m;
  m["pre_finetune_psnr_db"] = pre;
  m["post_finetune_psnr_db"] = post;
  io::write_file(ws_path("finetune", "metrics.json"), m.dump(2) + "\n");
  write_manifest("finetune", {"model.json", "model.bin", "metrics.json"});
}

void Pipeline::report() {
  check_stored_config();
  verify_chain("finetune");

  nlohmann::json base_metrics =
      nlohmann::json::parse(io::read_file(ws_path("train-base", "metrics.json")));
  nlohmann::json archive =
      nlohmann::json::parse(io::read_file(ws_path("search", "archive.json")));
  nlohmann::json sel =
      nlohmann::json::parse(io::read_file(ws_path("search", "selected.json")));
  nlohmann::json ft_metrics =
      nlohmann::json::parse(io::read_file(ws_path("finetune", "metrics.json")));

  const double l_base = archive.at("scale").at("l_base").get<double>();
  const double sel_latency = sel.at("latency_ms").get<double>();

  nlohmann::ordered_json j;
  j["preset"] = cfg_.preset;
  j["seed"] = cfg_.seed;
  j["base_psnr_db"] = base_metrics.at("val_psnr_db").get<double>();
  j["degraded_psnr_db"] = base_metrics.at("degraded_psnr_db").get<double>();
  j["selected"] = nlohmann::ordered_json::object();
  j["selected"]["slot_kinds"] = sel.at("slot_kinds");
  j["selected"]["psnr_loss_db"] = sel.at("f1_db").get<double>();
  j["selected"]["latency_ms"] = sel_latency;
  j["selected"]["penalty"] = sel.at("f2").get<double>();
  j["base_latency_ms"] = l_base;
  j["speedup"] = speedup(l_base, sel_latency);
  j["pre_finetune_psnr_db"] = ft_metrics.at("pre_finetune_psnr_db").get<double>();
  j["finetuned_psnr_db"] = ft_metrics.at("post_finetune_psnr_db").get<double>();
  j["selection_rule"] = cfg_.select_rule;
  j["evaluations"] = archive.at("observations").size();
  std::size_t pareto_size = 0;
  for (const auto& o : archive.at("observations")) {
    if (o.at("pareto").get<bool>()) ++pareto_size;
  }
  j["pareto_size"] = pareto_size;

  io::ensure_dir(ws_path("report"));
  io::write_file(ws_path("report", "summary.json"), j.dump(2) + "\n");
  io::write_file(ws_path("report", "runlog.csv"),
                 io::read_file(ws_path("search", "runlog.csv")));

  // Rebuild the scatter inputs from the archive JSON so `report` has no
  // hidden state beyond workspace artifacts.
  MoboResult plot;
  for (const auto& o : archive.at("observations")) {
    SearchObservation obs;
    obs.order = o.at("order").get<int>();
    obs.f1 = o.at("f1_db").get<double>();
    obs.f2 = o.at("f2").get<double>();
    obs.latency_ms = o.at("latency_ms").get<double>();
    if (o.at("pareto").get<bool>()) plot.archive.insert(obs);
    plot.log.push_back(std::move(obs));
  }
  io::write_file(ws_path("report", "pareto.svg"),
                 render_pareto_svg(plot, archive.at("selected_order").get<int>(),
                                   cfg_.preset, cfg_.seed));
  write_manifest("report", {"summary.json", "runlog.csv", "pareto.svg"});
}

void Pipeline::run_stage(const std::string& stage) {
  if (stage == "gen-data") return gen_data();
  if (stage == "train-base") return train_base();
  if (stage == "profile") return profile();
  if (stage == "saliency") return saliency();
  if (stage == "distill") return distill();
  if (stage == "search") return search();
  if (stage == "finetune") return finetune();
  if (stage == "report") return report();
  throw ValueError("unknown stage '" + stage + "'");
}

void Pipeline::run_all() {
  for (const auto& stage : pipeline_stages()) run_stage(stage);
}

}  // namespace blocksurgeon
