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

// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. `--only 1,4` runs a subset.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "vseg/checkpoint.hpp"
#include "vseg/phantom.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/run_config.hpp"
#include "vseg/trainer.hpp"

namespace vseg {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

fs::path artifact_dir() {
  const char* env = std::getenv("VSEG_ACCEPTANCE_DIR");
  fs::path p = env ? fs::path(env) : fs::current_path() / "acceptance_artifacts";
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// 1. parameter count

struct Exec {
  int code = -1;
  std::string out;
  double seconds = 0.0;
};

Exec run_cli(const std::string& args) {
  Exec e;
  const auto start = Clock::now();
  FILE* p = popen((std::string(VSEG_CLI_PATH) + " " + args + " 2>&1").c_str(), "r");
  if (!p) return e;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) e.out.append(buf, n);
  const int status = pclose(p);
  e.seconds = seconds_since(start);
  e.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return e;
}

std::optional<std::size_t> field(const std::string& out, const std::string& label) {
  const auto p = out.find("\n" + label + " ");
  if (p == std::string::npos) return std::nullopt;
  return std::stoull(out.substr(p + label.size() + 2));
}

// Layer-by-layer count written out independently of the library's planner.
std::array<std::size_t, 3> analytic_count(std::size_t b, bool concat) {
  std::size_t w = 0, bias = 0, bn = 0;
  const std::size_t enc[4][2] = {{1, b}, {2 * b, 2 * b}, {4 * b, 4 * b}, {8 * b, 8 * b}};
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t in = enc[l][0], mid = enc[l][1], out = 2 * mid;
    w += 27 * (in * mid + mid * out);
    bias += mid + out;
    bn += 2 * (mid + out);
  }
  std::size_t below = 16 * b;
  for (std::size_t skip : {8 * b, 4 * b, 2 * b}) {
    const std::size_t up = concat ? below : skip;
    w += 27 * (below * up + (concat ? skip + up : skip) * skip + skip * skip);
    bias += up + 2 * skip;
    bn += 4 * skip;
    below = skip;
  }
  return {w + below, bias + 1, bn};
}

Outcome criterion_param_count() {
  const Exec concat = run_cli("paramcount");
  const Exec sum = run_cli("paramcount --skip-mode sum");
  if (concat.code != 0 || sum.code != 0) return {false, "paramcount exited with " + std::to_string(concat.code)};
  const auto w = field("\n" + concat.out, "conv weights");
  const auto b = field("\n" + concat.out, "biases");
  const auto n = field("\n" + concat.out, "batchnorm");
  const auto t = field("\n" + concat.out, "total");
  const auto ws = field("\n" + sum.out, "conv weights");
  if (!w || !b || !n || !t || !ws) return {false, "could not parse the paramcount output"};
  const auto want = analytic_count(32, true);
  const auto want_sum = analytic_count(32, false);
  note(fmt("concat: weights %zu (analytic %zu), biases %zu, batchnorm %zu, total %zu, %.3f s", *w, want[0], *b, *n, *t,
           concat.seconds));
  note(fmt("sum: weights %zu (analytic %zu), %.3f s", *ws, want_sum[0], sum.seconds));
  const bool documented = sum.out.find("12M") != std::string::npos;
  const bool pass = *w == 25602976 && *w == want[0] && *b == want[1] && *n == want[2] && *t >= 25000000 &&
                    *t <= 26500000 && *ws < *w && *ws == want_sum[0] && documented && concat.seconds < 1.0 &&
                    sum.seconds < 1.0;
  return {pass, fmt("concat %zu weights, total %zu; sum %zu weights; gap note %s", *w, *t, *ws,
                    documented ? "present" : "missing")};
}

// ---------------------------------------------------------------------------
// 2. gradient correctness

double micro_network_error(SkipMode mode, std::uint64_t seed) {
  NetworkConfig c;
  c.levels = 2;  // one pooling level: conv, bn, relu, pool, upsample, merge, sigmoid
  c.base_channels = 4;
  c.input_size = 8;
  c.skip_mode = mode;
  Network<double> net = Network<double>::build(c, seed);
  const Tensor5<double> x = test::random_tensor({2, 1, 8, 8, 8}, seed + 1);
  Tensor5<double> target(x.shape());
  const Tensor5<double> u = test::random_tensor(x.shape(), seed + 2, 0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) target[i] = u[i] < 0.3 ? 1.0 : 0.0;
  auto loss = [&] {
    Tape<double> tape;
    return tape.value(pseudo_dice_loss(tape, net.forward(tape, tape.leaf(x)), target))[0];
  };
  net.zero_grad();
  {
    Tape<double> tape;
    tape.backward(pseudo_dice_loss(tape, net.forward(tape, tape.leaf(x)), target));
  }
  std::mt19937_64 gen(seed + 3);
  double worst = 0.0;
  for (Parameter<double>* p : net.parameters()) {
    const Tensor5<double> analytic = p->grad;
    std::vector<std::size_t> coords;
    if (p->value.size() <= 64) {
      for (std::size_t i = 0; i < p->value.size(); ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
      for (int i = 0; i < 64; ++i) coords.push_back(pick(gen));
    }
    worst = std::max(worst, test::fd_max_error(p->value, loss, analytic, 1e-6, &coords, 1e-5));
  }
  return worst;
}

Outcome criterion_gradients() {
  const auto start = Clock::now();
  using test::random_tensor;
  const Shape5 s{2, 3, 4, 4, 4};
  std::vector<std::pair<std::string, double>> errs;
  for (std::size_t k : {1u, 3u, 5u}) {
    ConvLayer<double> layer("c", 3, 2, k);
    layer.weight.value = random_tensor(layer.weight.value.shape(), 10 + k);
    layer.bias.value = random_tensor(layer.bias.value.shape(), 20 + k);
    errs.emplace_back("conv k=" + std::to_string(k),
                      test::check_op(random_tensor(s, 30 + k), [&](Tape<double>& t, Var x) { return conv3d(t, x, layer); },
                                     {&layer.weight, &layer.bias}, 40 + k));
  }
  errs.emplace_back("maxpool", test::check_op(random_tensor(s, 50),
                                              [](Tape<double>& t, Var x) { return maxpool3d(t, x); }, {}, 51));
  errs.emplace_back("upsample", test::check_op(random_tensor({2, 3, 2, 2, 2}, 52),
                                               [](Tape<double>& t, Var x) { return upsample_nearest2x(t, x); }, {}, 53));
  {
    BatchNorm<double> bn("bn", 3);
    bn.gamma.value = random_tensor(bn.gamma.value.shape(), 54, 0.5, 1.5);
    bn.beta.value = random_tensor(bn.beta.value.shape(), 55);
    errs.emplace_back("batchnorm train",
                      test::check_op(random_tensor(s, 56), [&](Tape<double>& t, Var x) { return batchnorm(t, x, bn, Mode::Train); },
                                     {&bn.gamma, &bn.beta}, 57));
    bn.set_running({0.1, -0.2, 0.3}, {0.5, 1.5, 0.9});
    errs.emplace_back("batchnorm infer",
                      test::check_op(random_tensor(s, 58), [&](Tape<double>& t, Var x) { return batchnorm(t, x, bn, Mode::Infer); },
                                     {&bn.gamma, &bn.beta}, 59));
  }
  {
    Tensor5<double> in = random_tensor(s, 60);
    for (double& v : in.values())
      if (std::abs(v) < 1e-2) v = 0.5;
    errs.emplace_back("relu", test::check_op(in, [](Tape<double>& t, Var x) { return relu(t, x); }, {}, 61));
  }
  errs.emplace_back("sigmoid",
                    test::check_op(random_tensor(s, 62), [](Tape<double>& t, Var x) { return sigmoid(t, x); }, {}, 63));
  const Tensor5<double> other = random_tensor(s, 64);
  errs.emplace_back("add", test::check_op(random_tensor(s, 65),
                                          [&](Tape<double>& t, Var x) { return add(t, x, t.leaf(other)); }, {}, 66));
  errs.emplace_back("concat", test::check_op(random_tensor(s, 67),
                                             [&](Tape<double>& t, Var x) { return concat_channels(t, t.leaf(other), x); },
                                             {}, 68));
  {
    Tensor5<double> p = random_tensor(s, 69, 0.05, 0.95);
    Tensor5<double> g = random_tensor(s, 70, 0.0, 1.0);
    for (double& v : g.values()) v = v < 0.3 ? 1.0 : 0.0;
    Tape<double> tape;
    const Var pv = tape.leaf(p, true);
    tape.backward(pseudo_dice_loss(tape, pv, g));
    const Tensor5<double> analytic = tape.grad(pv);
    errs.emplace_back("pseudo-Dice loss", test::fd_max_error(p, [&] {
      Tape<double> t;
      return t.value(pseudo_dice_loss(t, t.leaf(p), g))[0];
    }, analytic));
  }
  bool ops_ok = true;
  std::string worst_op;
  double worst = 0.0;
  for (const auto& [name, e] : errs) {
    note(fmt("%-18s max rel err %.3e", name.c_str(), e));
    ops_ok = ops_ok && e < 1e-5;
    if (e >= worst) {
      worst = e;
      worst_op = name;
    }
  }
  const double net_concat = micro_network_error(SkipMode::Concat, 7);
  const double net_sum = micro_network_error(SkipMode::Sum, 8);
  note(fmt("micro-network concat max rel err %.3e, sum %.3e", net_concat, net_sum));
  const double secs = seconds_since(start);
  const bool pass = ops_ok && net_concat < 1e-4 && net_sum < 1e-4 && secs < 120.0;
  return {pass, fmt("ops worst %.2e (%s), micro-network %.2e / %.2e, %.0f s", worst, worst_op.c_str(), net_concat,
                    net_sum, secs)};
}

// ---------------------------------------------------------------------------
// 3. overfit smoke and 8. determinism

constexpr std::uint64_t kSeed = 11;

std::vector<Case> whole_phantoms(std::size_t count, std::size_t size, std::uint64_t first) {
  std::vector<Case> out;
  for (std::size_t i = 0; i < count; ++i) {
    const Phantom p = generate_phantom(stream_seed(first, {streams::kPhantom, i}), size);
    out.push_back({"case" + std::to_string(i), p.image, p.label});
  }
  return out;
}

TrainConfig overfit_config(std::size_t workers) {
  TrainConfig c;
  c.iterations = 200;
  c.batch_size = 2;
  c.workers = workers;
  c.eval_every = 50;
  c.augmentation = false;
  c.seed = kSeed;
  c.network.skip_mode = SkipMode::Sum;
  c.network.base_channels = 8;
  c.network.input_size = 32;
  return c;
}

struct OverfitRun {
  TrainResult<float> result;
  std::string checkpoint;
  double seconds = 0.0;
};

OverfitRun run_overfit(std::size_t workers, const std::string& tag) {
  const std::vector<Case> cases = whole_phantoms(2, 32, 3);
  const auto start = Clock::now();
  OverfitRun r{train<float>(overfit_config(workers), cases, {},
                            [&](const MetricRow& m) {
                              note(fmt("[%s] it %4zu  loss %.4f  train dice %.4f  %.0f s", tag.c_str(), m.iteration,
                                       m.loss, m.train_dice, m.seconds));
                            }),
               (artifact_dir() / ("overfit_" + tag + ".ckpt")).string(), 0.0};
  r.seconds = seconds_since(start);
  save_checkpoint(r.result.network, r.checkpoint, &r.result.optimizer);
  return r;
}

std::optional<OverfitRun> g_overfit;

Outcome criterion_overfit() {
  g_overfit = run_overfit(2, "w2");
  const std::vector<Case> cases = whole_phantoms(2, 32, 3);
  const CaseScores s = score_cases(g_overfit->result.network, cases);
  bool pass = g_overfit->seconds < 600.0;
  std::string detail;
  for (const auto& [id, d] : s.dice) {
    pass = pass && d >= 0.95;
    detail += fmt("%s dice %.4f, ", id.c_str(), d);
  }
  return {pass, detail + fmt("2 workers, %.0f s", g_overfit->seconds)};
}

int ulp_distance(double a, double b) {
  if (a == b) return 0;
  const auto key = [](double v) {
    const auto bits = std::bit_cast<std::int64_t>(v);
    return bits < 0 ? std::numeric_limits<std::int64_t>::min() - bits : bits;
  };
  const std::int64_t d = key(a) - key(b);
  return d > 1000 || d < -1000 ? 1000 : int(std::abs(d));
}

Outcome criterion_determinism() {
  const OverfitRun a = run_overfit(1, "w1_a");
  const OverfitRun b = run_overfit(1, "w1_b");
  const bool same = read_file_bytes(a.checkpoint) == read_file_bytes(b.checkpoint);
  std::string detail = fmt("W=1 repeat checkpoints %s", same ? "identical" : "DIFFER");
  if (g_overfit) {
    const bool w2 = read_file_bytes(a.checkpoint) == read_file_bytes(g_overfit->checkpoint);
    detail += fmt("; W=2 run %s", w2 ? "identical" : "differs");
  }

  // one batch of 4 on the micro-network, 64-bit, 1 and 4 workers
  TrainConfig c;
  c.batch_size = 4;
  c.augmentation = true;
  c.seed = kSeed;
  c.network.levels = 2;
  c.network.base_channels = 4;
  c.network.input_size = 16;
  c.augment.grid_spacing = 8.0;
  std::vector<Case> cases;
  for (const Case& k : whole_phantoms(4, 32, 5)) {
    const BoundingBox box = expand_margin(label_extent(k.label), 2, k.label.dims);
    cases.push_back(crop_case(k.id, k.image, k.label, box, 16));
  }
  c.workers = 1;
  Trainer<double> one(c, Network<double>::build(c.network, kSeed));
  c.workers = 4;
  Trainer<double> four(c, Network<double>::build(c.network, kSeed));
  const auto batch = one.sample_batch(1, cases.size());
  one.compute_gradients(batch, cases, 1);
  four.compute_gradients(batch, cases, 1);
  int worst = 0;
  std::size_t coords = 0;
  auto pa = one.network().parameters(), pb = four.network().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i]->grad.size(); ++k, ++coords)
      worst = std::max(worst, ulp_distance(pa[i]->grad[k], pb[i]->grad[k]));
  detail += fmt("; W=4 vs W=1 gradients max %d ulp over %zu coordinates", worst, coords);
  return {same && worst <= 1, detail};
}

// ---------------------------------------------------------------------------
// 4. generalization and 5. augmentation effect

struct DeskData {
  std::vector<Case> train, test;
};

const DeskData& desk_data() {
  static const DeskData data = [] {
    DeskData d;
    for (std::size_t i = 0; i < 30; ++i) {
      const Phantom p = generate_phantom(stream_seed(100, {streams::kPhantom, i}), 64);
      const BoundingBox box = expand_margin(label_extent(p.label), 10, p.label.dims);
      (i < 20 ? d.train : d.test).push_back(crop_case("case" + std::to_string(i), p.image, p.label, box, 48));
    }
    return d;
  }();
  return data;
}

struct DeskRun {
  MetricLog log;
  EvalStats test;
  double seconds = 0.0;
};

std::map<std::pair<SkipMode, bool>, DeskRun> g_desk;

const DeskRun& desk_run(SkipMode mode, bool augmentation) {
  const auto key = std::make_pair(mode, augmentation);
  if (auto it = g_desk.find(key); it != g_desk.end()) return it->second;
  TrainConfig c;
  c.iterations = 1000;
  c.batch_size = 4;
  c.workers = 1;
  c.eval_every = 50;
  c.augmentation = augmentation;
  c.seed = kSeed;
  c.network.skip_mode = mode;
  c.network.base_channels = 8;
  c.network.input_size = 48;
  const std::string tag = to_string(mode) + (augmentation ? "_aug" : "_noaug");
  const DeskData& d = desk_data();
  const auto start = Clock::now();
  const TrainResult<float> r = train<float>(c, d.train, d.test, [&](const MetricRow& m) {
    note(fmt("[%s] it %4zu  loss %.4f  train %.4f  test %.4f  %.0f s", tag.c_str(), m.iteration, m.loss, m.train_dice,
             m.test_dice, m.seconds));
  });
  DeskRun run{r.log, evaluate(r.network, d.test), seconds_since(start)};
  std::ofstream(artifact_dir() / ("curve_" + tag + ".csv")) << r.log.to_csv();
  save_checkpoint(r.network, (artifact_dir() / ("desk_" + tag + ".ckpt")).string());
  return g_desk.emplace(key, std::move(run)).first->second;
}

Outcome criterion_generalization() {
  bool pass = true;
  std::string detail;
  for (SkipMode mode : {SkipMode::Sum, SkipMode::Concat}) {
    const DeskRun& r = desk_run(mode, true);
    note(fmt("%s  dice(%%) %s  n=%zu", to_string(mode).c_str(), format_stats(r.test).c_str(), r.test.per_case.size()));
    pass = pass && r.test.mean >= 0.85 && r.seconds < 7200.0;
    detail += fmt("%s %s (%.0f s); ", to_string(mode).c_str(), format_stats(r.test).c_str(), r.seconds);
  }
  return {pass, detail + "threshold 85.0"};
}

Outcome criterion_augmentation_effect() {
  bool pass = true;
  std::string detail;
  for (SkipMode mode : {SkipMode::Sum, SkipMode::Concat}) {
    const MetricRow on = desk_run(mode, true).log.rows.back();
    const MetricRow off = desk_run(mode, false).log.rows.back();
    const double gap_on = on.train_dice - on.test_dice, gap_off = off.train_dice - off.test_dice;
    note(fmt("%s curves (iteration, train, test) with augmentation on | off:", to_string(mode).c_str()));
    const auto& a = desk_run(mode, true).log.rows;
    const auto& b = desk_run(mode, false).log.rows;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
      note(fmt("  %4zu  %.4f %.4f | %.4f %.4f", a[i].iteration, a[i].train_dice, a[i].test_dice, b[i].train_dice,
               b[i].test_dice));
    pass = pass && gap_off > gap_on;
    detail += fmt("%s gap off %.4f vs on %.4f; ", to_string(mode).c_str(), gap_off, gap_on);
  }
  return {pass, detail + "curves in " + artifact_dir().string()};
}

// ---------------------------------------------------------------------------
// 6. augmentation invariants

Outcome criterion_augment_invariants() {
  const auto start = Clock::now();
  const AugmentParams defaults;
  const Dims3 dims{48, 48, 48};
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 10000; ++i)
    worst = std::max(worst, bspline_field(sample_spec(defaults, dims, stream_seed(kSeed, {streams::kAugment, i})), dims)
                                .sup_norm());
  const DeskData& d = desk_data();
  bool identity = true, binary = true;
  for (std::size_t i = 0; i < 20; ++i) {
    const Case& k = d.train[i];
    const AugmentedPair same = augment_pair(k.image, k.label, AugmentParams::identity(), i);
    identity = identity && same.image == k.image && same.label == k.label;
    const AugmentedPair moved = augment_pair(k.image, k.label, defaults, stream_seed(kSeed, {streams::kAugment, i}));
    for (auto v : moved.label.values) binary = binary && v <= 1;
  }
  const double secs = seconds_since(start);
  return {worst <= defaults.max_displacement && identity && binary && secs < 60.0,
          fmt("10000 fields sup-norm max %.4f (bound %.1f); identity %s; labels %s; %.0f s", worst,
              defaults.max_displacement, identity ? "exact" : "NOT exact", binary ? "binary" : "NOT binary", secs)};
}

// ---------------------------------------------------------------------------
// 7. localization recall

Outcome criterion_recall() {
  const auto start = Clock::now();
  std::vector<ForestSample> samples;
  for (std::size_t i = 0; i < 30; ++i) {
    const Phantom p = generate_phantom(stream_seed(200, {streams::kPhantom, i}), 64);
    samples.push_back({extract_features(p.image), box_target(label_extent(p.label))});
  }
  ForestParams fp;
  fp.seed = kSeed;
  const RegressionForest forest = train_forest(samples, fp);
  const LocalizeConfig defaults;
  double worst = 1.0;
  std::size_t full = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const Phantom p = generate_phantom(stream_seed(300, {streams::kPhantom, i}), 64);
    const CaseRecord record{"held" + std::to_string(i), "", "", std::nullopt};
    const double r = box_recall(select_box(record, p.image, nullptr, &forest, defaults.margin, false), p.label);
    worst = std::min(worst, r);
    full += r == 1.0;
  }
  const long margin = defaults.margin.value_or(forest.oob_margin);
  const double secs = seconds_since(start);
  return {full == 20 && secs < 120.0, fmt("%zu/20 held-out cases at 100%% recall, min %.4f, margin %ld, %.0f s", full,
                                          worst, margin, secs)};
}

// ---------------------------------------------------------------------------
// 9. inference speed and conv path agreement

Outcome criterion_speed() {
  NetworkConfig c;
  c.skip_mode = SkipMode::Sum;
  c.base_channels = 16;
  c.input_size = 64;
  Network<float> net = Network<float>::build(c, kSeed);
  for (BatchNorm<float>* b : net.batch_norms())
    b->set_running(std::vector<float>(b->channels(), 0.0f), std::vector<float>(b->channels(), 1.0f));
  const Phantom p = generate_phantom(kSeed, 64);
  const auto start = Clock::now();
  const ImageVolume prob = infer(net, p.image);
  const double secs = seconds_since(start);
  note(fmt("64^3 sum-mode base-16 forward: %.2f s", secs));

  // Every conv layer of that network in 64-bit, direct loops vs fast path. The
  // first layer runs at full resolution, the rest at half their native size.
  bool exact = true;
  std::size_t layers = 0, values = 0;
  Network<double> dnet = net.cast<double>();
  for (const ConvLayer<double>* layer : dnet.conv_layers()) {
    const std::string& name = layer->weight.name;
    std::size_t level = 0;
    if (const auto d = name.find_first_of("0123456789"); d != std::string::npos && name != "head")
      level = std::size_t(name[d] - '0');
    const std::size_t side = layers == 0 ? 64 : std::max<std::size_t>((64 >> level) / 2, 4);
    const Tensor5<double> x = test::random_tensor({1, layer->in_channels(), side, side, side}, 900 + layers);
    const Tensor5<double> a = conv3d_forward(x, layer->weight.value, layer->bias.value, ConvAlgo::Direct);
    const Tensor5<double> b = conv3d_forward(x, layer->weight.value, layer->bias.value, ConvAlgo::Fast);
    exact = exact && a == b;
    values += a.size();
    ++layers;
  }
  return {secs < 30.0 && exact && prob.size() == 64u * 64u * 64u,
          fmt("forward %.2f s (limit 30); direct vs fast %s over %zu layers, %zu outputs", secs,
              exact ? "bit-identical" : "DIFFER", layers, values)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

}  // namespace
}  // namespace vseg

int main(int argc, char** argv) {
  using namespace vseg;
  const Criterion all[] = {
      {1, "parameter count", criterion_param_count},
      {2, "gradient correctness", criterion_gradients},
      {3, "overfit smoke", criterion_overfit},
      {4, "generalization", criterion_generalization},
      {5, "augmentation effect", criterion_augmentation_effect},
      {6, "augmentation invariants", criterion_augment_invariants},
      {7, "localization recall", criterion_recall},
      {8, "determinism", criterion_determinism},
      {9, "inference speed", criterion_speed},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  int failed = 0;
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::printf("[%d] %s\n", c.id, c.name);
    std::fflush(stdout);
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %d  %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
