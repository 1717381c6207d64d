// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only N ...] [--work DIR]
//
// Exit status 0 when every selected criterion passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "egr/dataset.hpp"
#include "egr/egrnet.hpp"
#include "egr/error.hpp"
#include "egr/gradcheck.hpp"
#include "egr/harness.hpp"
#include "egr/kernels/gemm.hpp"
#include "egr/metrics.hpp"
#include "egr/rng.hpp"
#include "egr/signal.hpp"

namespace fs = std::filesystem;
using namespace egr;

namespace {

// Criterion 4 is settled by the compiler: these must hold for the build to succeed.
constexpr auto kEgrTrace = shape_trace(kCanonicalBlocks, NetworkVariant::egr_net, 64);
constexpr auto kNoBcTrace = shape_trace(kCanonicalBlocks, NetworkVariant::egr_net_no_bc, 64);
constexpr auto kRsmTrace = shape_trace(kCanonicalBlocks, NetworkVariant::cnn_rsm, 64);
static_assert(kEgrTrace[0].egr_channels == 64 && kEgrTrace[1].egr_channels == 64 && kEgrTrace[2].egr_channels == 128 &&
              kEgrTrace[3].egr_channels == 128 && kEgrTrace[4].egr_channels == 256);
static_assert(kEgrTrace[0].side == 64 && kEgrTrace[1].side == 64 && kEgrTrace[2].side == 64 && kEgrTrace[3].side == 32 &&
              kEgrTrace[4].side == 16);
static_assert(kEgrTrace[4].rsm_channels + kEgrTrace[4].egr_channels == 384);
static_assert(kNoBcTrace[4].rsm_channels + kNoBcTrace[4].egr_channels == 256);
static_assert(kRsmTrace[4].rsm_channels + kRsmTrace[4].egr_channels == 128);

// Fixed experiment settings. Criteria 5 and 6 use the published schedule
// (batch 32, lr 1e-4, x0.1 every 15 epochs) with the epoch count pinned here.
constexpr int kClassificationEpochs = 20;
constexpr int kAblationEpochs = 10;
constexpr std::uint64_t kExperimentSeed = 2024;
constexpr double kTrialBudgetSeconds = 30.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path source_dir;
};

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void progress(const std::string& line) { std::cerr << "  " << line << '\n'; }

// Synthetic 4-class set from the shipped spec, written under `dir`.
fs::path synthetic_manifest(const Context& ctx, const fs::path& dir) {
  std::ifstream in(ctx.source_dir / "configs" / "synthetic_4class.json");
  if (!in) throw InputError("cannot read configs/synthetic_4class.json under " + ctx.source_dir.string());
  const auto spec = synthetic_spec_from_json(nlohmann::json::parse(in));
  generate_synthetic(spec, dir);
  return dir / "manifest.json";
}

Signal random_signal(Rng& rng, std::size_t length) {
  std::vector<double> v(length);
  for (double& x : v) x = rng.gaussian();
  return Signal(std::move(v), 1.0);
}

// ---------------------------------------------------------------------------

Outcome gramian_algebra(const Context&) {
  const auto start = Clock::now();
  Rng rng(derive_seed(kExperimentSeed, {1}));
  double worst_sym = 0.0;
  double worst_psd = std::numeric_limits<double>::infinity();  // smallest v'Gv / (|v|^2 trace G)
  double worst_scale = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(48);
    const std::size_t n = 1 + rng.below(48);
    const Signal s = random_signal(rng, m * n);
    const Egr g = gram(build_rsm(s, {m, n}));
    const Matrix& G = g.values;
    const double scale = std::max(G.max_abs(), 1e-300);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) worst_sym = std::max(worst_sym, std::abs(G(i, j) - G(j, i)) / scale);
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += G(i, i);
    for (int q = 0; q < 100; ++q) {
      std::vector<double> v(n);
      double norm2 = 0.0;
      for (double& x : v) {
        x = rng.gaussian();
        norm2 += x * x;
      }
      double form = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += G(i, j) * v[j];
        form += v[i] * row;
      }
      worst_psd = std::min(worst_psd, form / (norm2 * std::max(trace, 1e-300)));
    }
    const double alpha = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
    std::vector<double> scaled(s.samples().begin(), s.samples().end());
    for (double& x : scaled) x *= alpha;
    const Egr ga = gram(build_rsm(scaled, {m, n}));
    for (std::size_t i = 0; i < n * n; ++i) {
      worst_scale =
          std::max(worst_scale, std::abs(ga.values.values()[i] - alpha * alpha * G.values()[i]) / (alpha * alpha * scale));
    }
  }
  const double secs = elapsed(start);
  const bool pass = worst_sym <= 1e-12 && worst_psd >= -1e-12 && worst_scale <= 1e-12 && secs < 10.0;
  return {pass, "1000 RSMs: asymmetry " + fmt("%.2e", worst_sym) + ", min normalized v'Gv " + fmt("%.2e", worst_psd) +
                    ", alpha^2 error " + fmt("%.2e", worst_scale) + ", " + fmt("%.2f", secs) + " s (< 10 s)"};
}

Outcome periodicity(const Context&) {
  const auto start = Clock::now();
  Rng rng(derive_seed(kExperimentSeed, {2}));
  // (T, n) with T | n, 2 <= T <= n/2 and n <= 64.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t n = 4; n <= 64; ++n) {
    for (std::size_t t = 2; t <= n / 2; ++t) {
      if (n % t == 0) pairs.emplace_back(t, n);
    }
  }
  int hits = 0;
  std::string misses;
  for (int trial = 0; trial < 50; ++trial) {
    const auto [t, n] = pairs[rng.below(pairs.size())];
    const std::size_t m = 2 + rng.below(63);
    std::vector<double> pattern(t);
    for (double& p : pattern) p = rng.gaussian();
    std::vector<double> x(m * n);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = pattern[i % t];
    const std::size_t lag = stripe_profile(gram(build_rsm(x, {m, n}))).dominant_lag(1, n / 2);
    if (lag == t) {
      ++hits;
    } else {
      misses += " (T=" + std::to_string(t) + ",n=" + std::to_string(n) + "->" + std::to_string(lag) + ")";
    }
  }
  const double secs = elapsed(start);
  return {hits == 50 && secs < 30.0,
          std::to_string(hits) + "/50 argmax lag == T" + misses + ", " + fmt("%.2f", secs) + " s (< 30 s)"};
}

Outcome gradients(const Context&) {
  const auto start = Clock::now();
  GradcheckOptions options;
  const GradcheckReport report = run_gradcheck_suites(GradcheckScope::all, options);
  const double secs = elapsed(start);
  std::set<std::string> suites;
  bool tolerances_ok = true;
  for (const auto& e : report.entries) {
    suites.insert(e.suite);
    tolerances_ok = tolerances_ok && e.tolerance <= 1e-4;
  }
  const bool has_net = std::any_of(suites.begin(), suites.end(), [](const std::string& s) {
    return s.rfind("net", 0) == 0;
  });
  const bool pass = report.passed() && tolerances_ok && has_net && secs < 300.0;
  return {pass, std::to_string(suites.size()) + " suites, " + std::to_string(report.entries.size()) +
                    " tensors, max relative error " + fmt("%.2e", report.max_rel_error()) + " (<= 1e-4), " +
                    fmt("%.1f", secs) + " s (< 300 s)"};
}

Outcome shapes(const Context&) {
  // The static_asserts above already hold; this runs real blocks as a cross-check.
  const std::size_t expected_width[] = {384, 256, 128};
  const NetworkVariant variants[] = {NetworkVariant::egr_net, NetworkVariant::egr_net_no_bc, NetworkVariant::cnn_rsm};
  std::string detail = "constexpr trace asserted at build time; forward";
  bool pass = true;
  for (int v = 0; v < 3; ++v) {
    std::size_t rsm_in = 1;
    std::size_t egr_in = 1;
    Tensor<float> x({1, 1, 64, 64}, 0.5f);
    Tensor<float> g({1, 1, 64, 64}, 0.25f);
    std::vector<std::size_t> channels;
    std::vector<std::size_t> sides;
    for (const GcbSpec& spec : kCanonicalBlocks) {
      GramConvBlock<float> block(spec, rsm_in, egr_in, variants[v]);
      BlockOutput<float> out = block.infer(x, g);
      x = std::move(out.x);
      if (variants[v] != NetworkVariant::cnn_rsm) g = std::move(out.g);
      channels.push_back(variants[v] == NetworkVariant::cnn_rsm ? 0 : g.dim(1));
      sides.push_back(x.dim(2));
      rsm_in = x.dim(1);
      egr_in = variants[v] == NetworkVariant::cnn_rsm ? 1 : g.dim(1);
    }
    const std::size_t width = x.dim(1) + (variants[v] == NetworkVariant::cnn_rsm ? 0 : g.dim(1));
    NetworkConfig cfg;
    cfg.variant = variants[v];
    cfg.num_classes = 4;
    pass = pass && width == expected_width[v] && classifier_width(cfg) == expected_width[v];
    if (variants[v] == NetworkVariant::egr_net) {
      pass = pass && channels == std::vector<std::size_t>{64, 64, 128, 128, 256} &&
             sides == std::vector<std::size_t>{64, 64, 64, 32, 16};
    }
    detail += " " + to_string(variants[v]) + "=" + std::to_string(width);
  }
  return {pass, detail + " (want 384/256/128)"};
}

ExperimentConfig synthetic_experiment(const fs::path& manifest, const fs::path& out) {
  ExperimentConfig cfg;
  cfg.manifest = manifest;
  cfg.batch_size = 32;
  cfg.initial_lr = 1e-4;
  cfg.lr_decay_factor = 0.1;
  cfg.lr_decay_every_epochs = 15;
  cfg.split.train_fraction = 0.5;
  cfg.rng_seed = kExperimentSeed;
  cfg.record_timing = true;
  cfg.out_dir = out;
  return cfg;
}

Outcome classification(const Context& ctx) {
  const fs::path dir = ctx.work / "c5";
  ExperimentConfig cfg = synthetic_experiment(synthetic_manifest(ctx, dir / "data"), dir / "sweep");
  cfg.variant = NetworkVariant::egr_net;
  cfg.snr_db = {0.0};
  cfg.trials = 3;
  cfg.epochs = kClassificationEpochs;
  const SweepResult r = run_snr_sweep(cfg, progress);
  double slowest = 0.0;
  std::string accs;
  for (const auto& t : r.trials) {
    slowest = std::max(slowest, t.seconds);
    accs += (accs.empty() ? "" : ", ") + fmt("%.2f", t.test_accuracy_pct);
  }
  const double mean = r.summary.front().accuracy.mean;
  const bool pass = mean >= 95.0 && slowest < kTrialBudgetSeconds;
  return {pass, "0 dB, " + std::to_string(cfg.epochs) + " epochs, 3 seeds: test accuracy " + accs + " (mean " +
                    fmt("%.2f", mean) + "% >= 95%), slowest trial " + fmt("%.0f", slowest) + " s (< 1800 s)"};
}

Outcome ablation(const Context& ctx) {
  const fs::path dir = ctx.work / "c6";
  ExperimentConfig cfg = synthetic_experiment(synthetic_manifest(ctx, dir / "data"), dir / "ablation");
  cfg.snr_db = {-6.0};
  cfg.trials = 5;
  cfg.epochs = kAblationEpochs;
  const auto runs = run_ablation(cfg, progress);
  std::map<NetworkVariant, double> mean;
  for (const auto& [variant, sweep] : runs) mean[variant] = sweep.summary.front().accuracy.mean;
  const double full = mean.at(NetworkVariant::egr_net);
  const double no_bc = mean.at(NetworkVariant::egr_net_no_bc);
  const double rsm = mean.at(NetworkVariant::cnn_rsm);
  const bool pass = full >= no_bc - 1.0 && no_bc >= rsm - 1.0;
  return {pass, "-6 dB, " + std::to_string(cfg.epochs) + " epochs, 5 seeds: mean accuracy egr_net " +
                    fmt("%.2f", full) + "%, egr_net_no_bc " + fmt("%.2f", no_bc) + "%, cnn_rsm " + fmt("%.2f", rsm) +
                    "% (each >= the next minus 1 point)"};
}

Outcome separability(const Context& ctx) {
  const fs::path manifest = synthetic_manifest(ctx, ctx.work / "c7" / "data");
  const SeparabilityReport report = separability_report(manifest, 0.0, kExperimentSeed);
  std::map<std::string, SeparabilityScore> by;
  for (const auto& s : report.scores) by[s.representation] = s;
  const auto& rsm = by.at("rsm");
  const auto& egr = by.at("egr");
  const bool pass = egr.silhouette > rsm.silhouette && egr.knn_accuracy_pct >= rsm.knn_accuracy_pct;
  return {pass, "0 dB: silhouette egr " + fmt("%.3f", egr.silhouette) + " > rsm " + fmt("%.3f", rsm.silhouette) +
                    "; 1-NN egr " + fmt("%.2f", egr.knn_accuracy_pct) + "% >= rsm " +
                    fmt("%.2f", rsm.knn_accuracy_pct) + "%"};
}

Outcome snr_fidelity(const Context& ctx) {
  const fs::path manifest = synthetic_manifest(ctx, ctx.work / "c8" / "data");
  const DatasetManifest m = load_manifest(manifest);
  std::vector<Signal> pool;
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    auto s = load_samples(m, static_cast<int>(c));
    pool.insert(pool.end(), s.begin(), s.end());
  }
  constexpr double kTargets[] = {-6.0, -4.0, -2.0, 0.0};
  std::size_t outside = 0;
  double worst = 0.0;
  std::string means;
  for (std::size_t ti = 0; ti < std::size(kTargets); ++ti) {
    double sum = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      const Signal& x = pool[(ti * 100 + trial) % pool.size()];
      const Signal y = add_noise_snr(x, {kTargets[ti], derive_seed(kExperimentSeed, {8, ti, trial})});
      double noise = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) noise += std::pow(y.samples()[i] - x.samples()[i], 2);
      noise /= static_cast<double>(x.size());
      const double realized = 10.0 * std::log10(signal_power(x.samples()) / noise);
      const double dev = realized - kTargets[ti];
      sum += dev;
      worst = std::max(worst, std::abs(dev));
      if (std::abs(dev) > 0.3) ++outside;
    }
    means += (means.empty() ? "" : ", ") + fmt("%+.3f", sum / 100.0);
  }
  return {outside == 0, "400 windows of " + std::to_string(pool.front().size()) + " samples: " +
                            std::to_string(outside) + " outside +-0.3 dB, worst " + fmt("%.3f", worst) +
                            " dB; mean deviation per target " + means + " dB"};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism(const Context& ctx) {
  const fs::path dir = ctx.work / "c9";
  std::ifstream in(ctx.source_dir / "configs" / "smoke_2class.json");
  if (!in) throw InputError("cannot read configs/smoke_2class.json");
  generate_synthetic(synthetic_spec_from_json(nlohmann::json::parse(in)), dir / "data");
  // Canonical architecture on the small 8x8 set: two SNRs, two trials.
  ExperimentConfig cfg;
  cfg.manifest = dir / "data" / "manifest.json";
  cfg.snr_db = {0.0, -6.0};
  cfg.trials = 2;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.initial_lr = 1e-3;
  cfg.rng_seed = kExperimentSeed;
  std::vector<fs::path> outs{dir / "run_a", dir / "run_b"};
  for (const auto& out : outs) {
    fs::remove_all(out);
    cfg.out_dir = out;
    run_snr_sweep(cfg);
  }
  std::vector<fs::path> files{"results.csv"};
  for (const auto& e : fs::directory_iterator(outs[0] / "checkpoints")) files.push_back(fs::path("checkpoints") / e.path().filename());
  std::size_t identical = 0;
  std::string differing;
  for (const auto& f : files) {
    const std::string a = read_bytes(outs[0] / f);
    if (!a.empty() && a == read_bytes(outs[1] / f)) {
      ++identical;
    } else {
      differing += " " + f.string();
    }
  }
  return {identical == files.size() && files.size() > 1,
          std::to_string(identical) + "/" + std::to_string(files.size()) +
              " files bytewise identical (results.csv and checkpoints)" + differing};
}

Outcome size_sanity(const Context&) {
  NetworkConfig cfg;
  cfg.variant = NetworkVariant::egr_net;
  cfg.num_classes = 4;
  const EgrNet<float> net(cfg);
  const std::size_t params = net.parameter_count();
  const double flops = static_cast<double>(count_flops(cfg));
  const double ratio = flops / 1.26e9;
  const bool pass = params >= 350000 && params <= 550000 && ratio >= 0.6 && ratio <= 2.5;
  return {pass, std::to_string(params) + " parameters (350k-550k); " + fmt("%.0f", flops) + " FLOPs = " +
                    fmt("%.3f", ratio) + " x 1.26e9 (0.6-2.5)"};
}

Outcome confusion_accuracy(const Context&) {
  Rng rng(derive_seed(kExperimentSeed, {11}));
  std::size_t agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    std::vector<int> truth;
    std::vector<int> predicted;
    for (std::size_t t = 0; t < k; ++t) {
      for (std::size_t p = 0; p < k; ++p) {
        const std::size_t count = rng.below(t == p ? 60 : 20);
        truth.insert(truth.end(), count, static_cast<int>(t));
        predicted.insert(predicted.end(), count, static_cast<int>(p));
      }
    }
    if (truth.empty()) {
      truth.push_back(0);
      predicted.push_back(0);
    }
    // Oracle: count matching label pairs one by one.
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == predicted[i];
    const double oracle = 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
    const ConfusionMatrix cm = confusion_matrix(truth, predicted, k);
    bool ok = accuracy_pct(cm) == oracle && cm.trace() == correct && cm.total() == truth.size();
    if (k == 2) {
      const double tp = static_cast<double>(cm(1, 1));
      const double tn = static_cast<double>(cm(0, 0));
      const double fn = static_cast<double>(cm(1, 0));
      const double fp = static_cast<double>(cm(0, 1));
      ok = ok && std::abs(100.0 * (tp + tn) / (tp + tn + fn + fp) - oracle) <= 1e-12;
    }
    agree += ok;
  }
  return {agree == 1000, std::to_string(agree) + "/1000 random confusion matrices match the label-by-label oracle"};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)(const Context&);
};

constexpr Criterion kCriteria[] = {
    {1, "Gramian algebra", gramian_algebra},
    {2, "periodicity", periodicity},
    {3, "gradient suite", gradients},
    {4, "channel/shape accounting", shapes},
    {5, "synthetic classification", classification},
    {6, "ablation trend", ablation},
    {7, "separability trend", separability},
    {8, "SNR fidelity", snr_fidelity},
    {9, "determinism", determinism},
    {10, "parameter/FLOP sanity", size_sanity},
    {11, "accuracy from confusion counts", confusion_accuracy},
};

}  // namespace

int main(int argc, char** argv) {
  kernels::set_thread_limit_from_env();
  retain_freed_memory();
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = "acceptance_work";
  std::string source_dir = EGR_SOURCE_DIR;
  app.add_option("--only", only, "Run only these criteria (repeatable)")->check(CLI::Range(1, 11));
  app.add_option("--work", work, "Scratch directory for datasets and runs");
  app.add_option("--source-dir", source_dir, "Repository root (for configs/)");
  CLI11_PARSE(app, argc, argv);

  const Context ctx{fs::absolute(work), source_dir};
  fs::create_directories(ctx.work);
  bool all_pass = true;
  for (const Criterion& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
