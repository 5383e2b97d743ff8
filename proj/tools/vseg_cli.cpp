// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// vseg command-line front end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vseg/checkpoint.hpp"
#include "vseg/dataset.hpp"
#include "vseg/localize.hpp"
#include "vseg/pgm.hpp"
#include "vseg/phantom.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/run_config.hpp"
#include "vseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string keys_help() {
  RunConfig defaults;
  std::string out = "Configuration keys (config file '[section]' + 'name: value', or --set section.name=value):\n";
  for (const ConfigKey& k : config_schema()) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-26s default %-8s %s\n", k.key.c_str(), k.get(defaults).c_str(), k.help.c_str());
    out += line;
  }
  out += "Precedence: defaults < --config file < --set < dedicated flags.\n";
  out += "Exit codes: 0 ok, 2 usage, 3 I/O, 4 contract violation.";
  return out;
}

/// Options shared by every subcommand: config file, generic overrides and
/// dedicated flags bound to schema keys.
struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> bound;  // key, flag value
  std::map<std::string, std::string> flag_values;

  void add_common(CLI::App* sub) {
    sub->add_option("--config", config_file, "configuration file");
    sub->add_option("--set", sets, "override one key, section.name=value (repeatable)");
    bind(sub, "--seed", "run.seed");
  }

  void bind(CLI::App* sub, const std::string& flag, const std::string& key) {
    const ConfigKey* k = find_key(key);
    if (!k) throw std::logic_error("unbound key " + key);
    sub->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { flag_values[key] = v; }, "sets " + key);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config(cfg, ConfigText::parse(read_text(config_file), config_file));
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects section.name=value, got '" + s + "'");
      set_key(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    for (const auto& [key, value] : flag_values) set_key(cfg, key, value);
    cfg.sync_seeds();
    cfg.validate();
    return cfg;
  }
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::optional<RegressionForest> maybe_forest(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_forest(path);
}

std::vector<LoadedCase> load_cases(const std::string& manifest, const RunConfig& cfg,
                                   const std::optional<RegressionForest>& forest) {
  std::vector<LoadedCase> out;
  for (const CaseRecord& r : read_manifest(manifest))
    out.push_back(load_case(r, forest ? &*forest : nullptr, cfg.localize.margin, cfg.localize.oracle_box));
  return out;
}

std::vector<Case> crop_all(const std::vector<LoadedCase>& cases, std::size_t size) {
  std::vector<Case> out;
  out.reserve(cases.size());
  for (const LoadedCase& c : cases) out.push_back(crop_case(c, size));
  return out;
}

std::string table_line(const EvalStats& s) {
  return "dice(%) " + format_stats(s) + "  n=" + std::to_string(s.per_case.size());
}

// ---------------------------------------------------------------------------

int cmd_phantom_gen(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  std::vector<CaseRecord> records;
  for (std::size_t i = 0; i < cfg.phantom.count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case%03zu", i);
    const Phantom p = generate_phantom(stream_seed(cfg.seed, {streams::kPhantom, i}), cfg.phantom.size, cfg.phantom.params);
    const std::string image = std::string(id) + "_image.vol";
    const std::string label = std::string(id) + "_label.vol";
    write_volume(p.image, (fs::path(out_dir) / image).string());
    write_volume(p.label, (fs::path(out_dir) / label).string());
    records.push_back({id, image, label, std::nullopt});
    std::size_t fg = 0;
    for (auto v : p.label.values) fg += v;
    std::printf("%s  size %zu  foreground %.4f  box %s\n", id, cfg.phantom.size, double(fg) / double(p.label.size()),
                label_extent(p.label).str().c_str());
  }
  write_manifest((fs::path(out_dir) / "manifest.tsv").string(), records);
  if (cfg.data.n_train + cfg.data.n_test > 0) {
    const Split s = split_dataset(records, cfg.data.n_train, cfg.data.n_test, cfg.seed);
    write_manifest((fs::path(out_dir) / "train.tsv").string(), s.train);
    write_manifest((fs::path(out_dir) / "test.tsv").string(), s.test);
    std::printf("split  train %zu  test %zu\n", s.train.size(), s.test.size());
  }
  return 0;
}

int cmd_localize_train(const RunConfig& cfg, const std::string& manifest, const std::string& out) {
  std::vector<ForestSample> samples;
  for (const CaseRecord& r : read_manifest(manifest))
    samples.push_back({extract_features(read_image(r.image)), box_target(label_extent(read_label(r.label)))});
  const RegressionForest forest = train_forest(samples, cfg.localize.forest);
  save_forest(forest, out);
  std::printf("forest  trees %zu  depth %zu  samples %zu  features %zu  oob margin %ld  -> %s\n", forest.trees.size(),
              forest.depth, samples.size(), forest.feature_count, forest.oob_margin, out.c_str());
  return 0;
}

int cmd_localize_predict(RunConfig cfg, const std::string& manifest, const std::string& forest_path, bool oracle,
                         const std::string& out) {
  if (oracle) cfg.localize.oracle_box = true;
  if (!cfg.localize.oracle_box && forest_path.empty()) throw UsageError("localize-predict needs --forest or --oracle-box");
  const auto forest = cfg.localize.oracle_box ? std::nullopt : maybe_forest(forest_path);
  std::vector<CaseRecord> records = read_manifest(manifest);
  std::size_t full = 0, labelled = 0;
  double worst = 1.0;
  for (CaseRecord& r : records) {
    const ImageVolume image = read_image(r.image);
    std::optional<LabelVolume> label;
    if (fs::exists(r.label)) label = read_label(r.label);
    CaseRecord plain = r;
    plain.box.reset();
    const BoundingBox box =
        select_box(plain, image, label ? &*label : nullptr, forest ? &*forest : nullptr, cfg.localize.margin, cfg.localize.oracle_box);
    r.box = box;
    r.image = fs::absolute(r.image).string();
    r.label = fs::absolute(r.label).string();
    std::printf("%s  box %s", r.id.c_str(), box.str().c_str());
    if (label) {
      const double recall = box_recall(box, *label);
      ++labelled;
      full += recall == 1.0;
      worst = std::min(worst, recall);
      std::printf("  recall %.4f", recall);
    }
    std::printf("\n");
  }
  write_manifest(out, records);
  if (labelled > 0)
    std::printf("recall  %zu/%zu cases fully covered  min %.4f  margin %ld\n", full, labelled, worst,
                cfg.localize.margin.value_or(forest && !cfg.localize.oracle_box ? forest->oob_margin : kLabelMargin));
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& train_manifest, const std::string& test_manifest,
              const std::string& forest_path, const std::string& out, const std::string& log_path) {
  const auto forest = maybe_forest(forest_path);
  const std::size_t size = cfg.train.network.input_size;
  const std::vector<Case> train_cases = crop_all(load_cases(train_manifest, cfg, forest), size);
  const std::vector<Case> test_cases =
      test_manifest.empty() ? std::vector<Case>{} : crop_all(load_cases(test_manifest, cfg, forest), size);
  std::printf("train  cases %zu/%zu  size %zu  skip %s  base %zu  batch %zu  workers %zu  iterations %zu  augmentation %s\n",
              train_cases.size(), test_cases.size(), size, to_string(cfg.train.network.skip_mode).c_str(),
              cfg.train.network.base_channels, cfg.train.batch_size, cfg.train.workers, cfg.train.iterations,
              cfg.train.augmentation ? "on" : "off");
  std::printf("iteration,loss,train_dice,test_dice,seconds,train_pseudo_dice\n");
  std::fflush(stdout);
  const TrainResult<float> result = train<float>(cfg.train, train_cases, test_cases, [](const MetricRow& r) {
    std::printf("%zu,%.6f,%.6f,%.6f,%.1f,%.6f\n", r.iteration, r.loss, r.train_dice, r.test_dice, r.seconds,
                r.train_pseudo_dice);
    std::fflush(stdout);
  });
  save_checkpoint(result.network, out, &result.optimizer);
  if (!log_path.empty()) {
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open log '" + log_path + "' for writing");
    log << result.log.to_csv();
  }
  if (!test_cases.empty()) std::printf("test  %s\n", table_line(evaluate(result.network, test_cases, cfg.train.workers)).c_str());
  std::printf("checkpoint  %s\n", out.c_str());
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint, const std::string& manifest,
              const std::string& forest_path, const std::string& out_dir) {
  const Checkpoint<float> ck = load_checkpoint<float>(checkpoint);
  const auto forest = maybe_forest(forest_path);
  const std::size_t size = ck.network.config().input_size;
  ensure_dir(out_dir);
  for (const CaseRecord& r : read_manifest(manifest)) {
    const ImageVolume image = read_image(r.image);
    std::optional<LabelVolume> label;
    if (fs::exists(r.label)) label = read_label(r.label);
    const BoundingBox box = select_box(r, image, label ? &*label : nullptr, forest ? &*forest : nullptr, cfg.localize.margin,
                                       cfg.localize.oracle_box);
    const ImageVolume prob = infer(ck.network, crop_resample(image, box, size, Interp::Trilinear));
    const ImageVolume full = paste_prediction(prob, box, image);
    const std::string base = (fs::path(out_dir) / r.id).string();
    write_volume(full, base + "_prob.vol");
    const LabelVolume mask = threshold(full, cfg.eval.threshold);
    write_volume(mask, base + "_mask.vol");
    std::size_t fg = 0;
    for (auto v : mask.values) fg += v;
    std::printf("%s  box %s  foreground %zu  -> %s_prob.vol %s_mask.vol\n", r.id.c_str(), box.str().c_str(), fg,
                base.c_str(), base.c_str());
  }
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint, const std::string& manifest,
                 const std::string& forest_path) {
  const Checkpoint<float> ck = load_checkpoint<float>(checkpoint);
  const auto forest = maybe_forest(forest_path);
  const std::size_t size = ck.network.config().input_size;
  const std::vector<LoadedCase> cases = load_cases(manifest, cfg, forest);
  std::vector<std::pair<std::string, double>> scores(cases.size());
  detail::parallel_for(cases.size(), cfg.train.workers, [&](std::size_t i) {
    const LoadedCase& c = cases[i];
    const Case crop = crop_case(c, size);
    const ImageVolume prob = infer(ck.network, crop.image);
    double d;
    if (cfg.eval.space == EvalSpace::Crop)
      d = dice_score(threshold(prob, cfg.eval.threshold), crop.label);
    else
      d = dice_score(threshold(paste_prediction(prob, c.box, c.image), cfg.eval.threshold), c.label);
    scores[i] = {c.id, d};
  });
  for (const auto& [id, d] : scores) std::printf("%s  dice %.4f\n", id.c_str(), d);
  std::printf("%s\n", table_line(summarize(scores)).c_str());
  return 0;
}

int cmd_paramcount(const RunConfig& cfg) {
  const NetworkConfig& net = cfg.train.network;
  const ParameterCount pc = plan_parameters(net);
  std::printf("%-12s %-9s %6s %6s %2s %12s %8s %6s\n", "layer", "kind", "in", "out", "k", "weights", "biases", "bn");
  for (const LayerCount& l : pc.layers)
    std::printf("%-12s %-9s %6zu %6zu %2zu %12zu %8zu %6zu\n", l.name.c_str(), l.kind.c_str(), l.in_channels,
                l.out_channels, l.kernel, l.weights, l.biases, l.bn);
  std::printf("skip_mode %s  base_channels %zu  levels %zu  upconv_kernel %zu\n", to_string(net.skip_mode).c_str(),
              net.base_channels, net.levels, net.upconv_kernel);
  std::printf("conv weights %zu\nbiases %zu\nbatchnorm %zu\ntotal %zu\n", pc.weights, pc.biases, pc.bn, pc.total());
  if (net.skip_mode == SkipMode::Sum) {
    NetworkConfig other = net;
    other.skip_mode = SkipMode::Concat;
    const std::size_t concat = plan_parameters(other).weights;
    std::printf("concat mode conv weights %zu (summation uses %.1f%% of that)\n", concat,
                100.0 * double(pc.weights) / double(concat));
    std::printf(
        "note: the summation variant is usually quoted at about 12M parameters; this channel plan (up-convolutions "
        "mapped to the skip width, all other widths unchanged) gives %.1fM. The widths behind the 12M figure are "
        "not known, so the count is reported as is.\n",
        double(pc.total()) / 1e6);
  }
  return 0;
}

int cmd_augment_preview(const RunConfig& cfg, const std::string& manifest, const std::string& case_id,
                        std::string image_path, std::string label_path, const std::string& out_dir) {
  if (!manifest.empty()) {
    const std::vector<CaseRecord> records = read_manifest(manifest);
    const CaseRecord* hit = nullptr;
    for (const CaseRecord& r : records)
      if (case_id.empty() || r.id == case_id) {
        hit = &r;
        break;
      }
    if (!hit) throw UsageError("case '" + case_id + "' not found in '" + manifest + "'");
    image_path = hit->image;
    label_path = hit->label;
  }
  if (image_path.empty() || label_path.empty()) throw UsageError("augment-preview needs --manifest or --image and --label");
  const ImageVolume image = read_image(image_path);
  const LabelVolume label = read_label(label_path);
  const AugmentedPair after = augment_pair(image, label, cfg.train.augment, stream_seed(cfg.seed, {streams::kAugment}));
  const std::size_t z = image.dims[0] / 2;
  const auto [lo, hi] = std::minmax_element(image.values.begin(), image.values.end());
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  write_pgm(slice_image(image, z, *lo, *hi), (dir / "image_before.pgm").string());
  write_pgm(slice_image(after.image, z, *lo, *hi), (dir / "image_after.pgm").string());
  write_pgm(slice_image(label, z, 0.0, 1.0), (dir / "label_before.pgm").string());
  write_pgm(slice_image(after.label, z, 0.0, 1.0), (dir / "label_after.pgm").string());
  std::printf("slice z=%zu  -> %s/{image,label}_{before,after}.pgm\n", z, out_dir.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"vseg: volumetric segmentation with an encoder-decoder network"};
  app.footer(keys_help());
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Options opt;
  std::string out, manifest, forest, checkpoint, train_manifest, test_manifest, log, case_id, image, label;
  bool oracle = false;

  auto* gen = app.add_subcommand("phantom-gen", "write synthetic phantom cases and a manifest");
  opt.add_common(gen);
  gen->add_option("--out", out, "output directory")->required();
  opt.bind(gen, "--count", "phantom.count");
  opt.bind(gen, "--size", "phantom.size");
  opt.bind(gen, "--train-count", "data.n_train");
  opt.bind(gen, "--test-count", "data.n_test");

  auto* ltrain = app.add_subcommand("localize-train", "fit the bounding-box regression forest");
  opt.add_common(ltrain);
  ltrain->add_option("--manifest", manifest, "training manifest")->required();
  ltrain->add_option("--out", out, "forest file")->required();
  opt.bind(ltrain, "--trees", "localize.trees");
  opt.bind(ltrain, "--depth", "localize.depth");

  auto* lpred = app.add_subcommand("localize-predict", "predict margin-expanded boxes into a new manifest");
  opt.add_common(lpred);
  lpred->add_option("--manifest", manifest, "input manifest")->required();
  lpred->add_option("--forest", forest, "forest file");
  lpred->add_flag("--oracle-box", oracle, "use the label extent instead of the forest");
  lpred->add_option("--out", out, "output manifest")->required();
  opt.bind(lpred, "--margin", "localize.margin");

  auto* tr = app.add_subcommand("train", "train the segmentation network");
  opt.add_common(tr);
  tr->add_option("--train", train_manifest, "training manifest")->required();
  tr->add_option("--test", test_manifest, "test manifest evaluated during training");
  tr->add_option("--forest", forest, "forest for cases without a box");
  tr->add_option("--out", out, "checkpoint file")->required();
  tr->add_option("--log", log, "metric log (CSV)");
  opt.bind(tr, "--iterations", "train.iterations");
  opt.bind(tr, "--batch-size", "train.batch_size");
  opt.bind(tr, "--workers", "train.workers");
  opt.bind(tr, "--eval-every", "train.eval_every");
  opt.bind(tr, "--augmentation", "train.augmentation");
  opt.bind(tr, "--skip-mode", "network.skip_mode");
  opt.bind(tr, "--base-channels", "network.base_channels");
  opt.bind(tr, "--input-size", "network.input_size");
  opt.bind(tr, "--lr", "adam.lr");
  opt.bind(tr, "--margin", "localize.margin");

  auto* inf = app.add_subcommand("infer", "write probability maps and masks in original space");
  opt.add_common(inf);
  inf->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  inf->add_option("--manifest", manifest, "cases")->required();
  inf->add_option("--forest", forest, "forest for cases without a box");
  inf->add_option("--out-dir", out, "output directory")->required();
  opt.bind(inf, "--margin", "localize.margin");
  opt.bind(inf, "--threshold", "eval.threshold");

  auto* ev = app.add_subcommand("evaluate", "Dice per case and mean +/- std [min, max]");
  opt.add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--manifest", manifest, "labelled cases")->required();
  ev->add_option("--forest", forest, "forest for cases without a box");
  opt.bind(ev, "--workers", "train.workers");
  opt.bind(ev, "--margin", "localize.margin");
  opt.bind(ev, "--threshold", "eval.threshold");
  opt.bind(ev, "--space", "eval.space");

  auto* pc = app.add_subcommand("paramcount", "per-layer parameter table and totals");
  opt.add_common(pc);
  opt.bind(pc, "--skip-mode", "network.skip_mode");
  opt.bind(pc, "--base-channels", "network.base_channels");
  opt.bind(pc, "--levels", "network.levels");
  opt.bind(pc, "--upconv-kernel", "network.upconv_kernel");

  auto* prev = app.add_subcommand("augment-preview", "before/after mid-slice graymaps of one random deformation");
  opt.add_common(prev);
  prev->add_option("--manifest", manifest, "manifest to take the case from");
  prev->add_option("--case", case_id, "case id (default: first)");
  prev->add_option("--image", image, "image volume");
  prev->add_option("--label", label, "label volume");
  prev->add_option("--out-dir", out, "output directory")->required();
  opt.bind(prev, "--max-displacement", "augment.max_displacement");
  opt.bind(prev, "--rot-range", "augment.rot_range");
  opt.bind(prev, "--trans-range", "augment.trans_range");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "ERROR 2: %s\n", e.what());
    return 2;
  }

  const RunConfig cfg = opt.resolve();
  if (gen->parsed()) return cmd_phantom_gen(cfg, out);
  if (ltrain->parsed()) return cmd_localize_train(cfg, manifest, out);
  if (lpred->parsed()) return cmd_localize_predict(cfg, manifest, forest, oracle, out);
  if (tr->parsed()) return cmd_train(cfg, train_manifest, test_manifest, forest, out, log);
  if (inf->parsed()) return cmd_infer(cfg, checkpoint, manifest, forest, out);
  if (ev->parsed()) return cmd_evaluate(cfg, checkpoint, manifest, forest);
  if (pc->parsed()) return cmd_paramcount(cfg);
  if (prev->parsed()) return cmd_augment_preview(cfg, manifest, case_id, image, label, out);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "ERROR %d: %s\n", e.exit_code(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ERROR 4: %s\n", e.what());
    return 4;
  }
}
