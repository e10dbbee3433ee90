// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ubr/cli.hpp"
#include "ubr/dataset.hpp"
#include "ubr/evaluate.hpp"
#include "ubr/losses.hpp"
#include "ubr/selfcheck.hpp"
#include "ubr/stats.hpp"
#include "ubr/trainer.hpp"

using namespace ubr;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainSeed = 1;
constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kHeldOutSeed = 2;
constexpr std::uint64_t kAnomalySeed = 3;
constexpr std::uint64_t kCalibrationSeed = 77;
constexpr std::size_t kTrainVolumes = 60;
constexpr std::size_t kHeldOutVolumes = 20;
constexpr std::size_t kAnomalyVolumes = 100;
constexpr std::size_t kAblationIterations = 2000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Shared fixtures, built lazily so each criterion only pays for what it uses.
struct Fixtures {
  PhantomSpec spec;
  std::vector<Volume> train_volumes;
  std::vector<Volume> held_out;
  std::vector<Volume> calibration;
  Dataset train_set;
  bool have_model = false;
  TrainResult main_run;

  Fixtures() {
    train_volumes = generate_volumes(kTrainVolumes, spec, 0.0, kDataSeed, default_anomaly_kinds()).volumes;
    held_out = generate_volumes(kHeldOutVolumes, spec, 0.0, kHeldOutSeed, default_anomaly_kinds()).volumes;
    PhantomSpec wide = spec;
    wide.min_span = 0.9;
    calibration = generate_volumes(2, wide, 0.0, kCalibrationSeed, default_anomaly_kinds()).volumes;
    std::vector<Volume> blind = train_volumes;
    for (auto& v : blind) v.latent.clear();
    train_set = Dataset(std::move(blind));
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.seed = seed;
    c.network.seed = seed;
    return c;
  }

  const TrainResult& model() {
    if (!have_model) {
      main_run = train(train_set, config(kTrainSeed));
      have_model = true;
    }
    return main_run;
  }
};

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  diff::GradCheckOptions options;
  options.tolerance = 1e-4;
  options.step = 1e-5;
  diff::GradCheckOptions strided = options;
  strided.max_checks_per_tensor = 6;

  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0, elements = 0, skipped = 0;
  auto record = [&](const NamedCheck& c, std::uint64_t seed) {
    ++checks;
    skipped += c.report.kinks_skipped();
    for (const auto& t : c.report.tensors) elements += t.checked;
    if (c.report.max_relative_error() >= worst) {
      worst = c.report.max_relative_error();
      worst_name = c.name + " seed " + std::to_string(seed);
    }
  };
  const std::size_t seeds = 20;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    for (const auto& c : op_grad_checks(seed, options)) record(c, seed);
    record(network_grad_check(tiny_network_config(), 2, 4, seed, options), seed);
    NetworkConfig full;
    full.seed = seed;
    auto c = network_grad_check(full, 2, 4, seed, strided);
    c.name = "default_network";
    record(c, seed);
  }
  const double elapsed = seconds_since(t0);
  Outcome out;
  out.pass = worst < options.tolerance && elapsed < 60.0;
  out.detail = std::to_string(checks) + " checks (" + std::to_string(elements) + " elements, " +
               std::to_string(skipped) + " kink-straddling probes skipped) over " + std::to_string(seeds) +
               " seeds, max rel error " +
               fmt_g(worst) + " (" + worst_name + ") < 1e-4, " + fmt(elapsed, 1) + " s < 60 s";
  return out;
}

Outcome loss_unit_values() {
  const double ln2 = order_loss(ScoreTable(1, 2, {0, 0})).value;
  const double o1 = order_loss(ScoreTable(1, 2, {0, 1})).value;
  double ap = 0.0;
  for (double step : {0.5, 1.0, 3.0, -2.0}) {
    std::vector<double> row;
    for (int j = 0; j < 8; ++j) row.push_back(1.5 + step * j);
    ap = std::max(ap, std::fabs(distance_loss(ScoreTable(1, 8, row)).value));
  }
  const double d = distance_loss(ScoreTable(1, 3, {0, 1, 1.5})).value;

  const ScoreTable base(3, 8, {0.3, -1.2, 0.8, 2.2, 1.9, 3.0, 2.5, 4.1, -0.4, 0.0, 0.7, 0.2, 1.5, 1.1, 2.8, 3.3,
                               5.0, 4.2, 4.9, 6.1, 5.5, 7.0, 8.2, 7.7});
  ScoreTable shifted = base;
  for (std::size_t j = 0; j < 8; ++j) {
    shifted(0, j) += 12.5;
    shifted(2, j) -= 3.25;
  }
  const auto a = total_loss(base), b = total_loss(shifted);
  const double shift_err =
      std::max({std::fabs(a.order - b.order), std::fabs(a.dist - b.dist), std::fabs(a.total - b.total)});

  const bool pass = std::fabs(ln2 - std::log(2.0)) <= 1e-12 && std::fabs(o1 - 0.3132617) <= 1e-6 && ap == 0.0 &&
                    std::fabs(d - 0.125) <= 1e-12 && shift_err <= 1e-12;
  return {pass, "order([0,0]) - ln2 = " + fmt_g(ln2 - std::log(2.0)) + ", order([0,1]) = " + fmt(o1, 9) +
                    ", dist(arithmetic) = " + fmt_g(ap) + ", dist([0,1,1.5]) = " + fmt(d, 12) +
                    ", row-shift change " + fmt_g(shift_err)};
}

Outcome self_organization(Fixtures& fx) {
  const auto& run = fx.model();
  std::vector<double> pairwise, spearman, pearson;
  for (const auto& v : fx.held_out) {
    const auto curve = score_volume(run.params, v);
    const auto m = ordering_metrics(curve.scores, v.latent);
    pairwise.push_back(m.pairwise_accuracy);
    spearman.push_back(m.spearman);
    pearson.push_back(curve.pearson_r);
  }
  const double pw = stats::median(pairwise), mean_pw = stats::mean(pairwise);
  const double sp = stats::median(spearman), pr = stats::median(pearson);
  const double minutes = run.log.wall_seconds / 60.0;
  Outcome out;
  out.pass = pw >= 0.98 && sp >= 0.99 && pr >= 0.99 && minutes < 10.0;
  out.detail = "median pairwise " + fmt(pw) + " (mean " + fmt(mean_pw) + ", min " +
               fmt(*std::min_element(pairwise.begin(), pairwise.end())) + ") >= 0.98, median spearman " + fmt(sp) +
               " >= 0.99, median pearson r " + fmt(pr) + " >= 0.99, training " + fmt(minutes, 2) + " min < 10";
  return out;
}

double mean_abs_second_difference(const std::vector<double>& s) {
  if (s.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 2; i < s.size(); ++i) acc += std::fabs(s[i] - 2.0 * s[i - 1] + s[i - 2]);
  return acc / static_cast<double>(s.size() - 2);
}

Outcome ablation(Fixtures& fx) {
  struct Arm {
    const char* name;
    std::size_t g, m;
    double dist_weight;
    double r2 = 0.0, curvature = 0.0;
  };
  std::vector<Arm> arms{{"m8", 6, 8, 1.0}, {"m2", 24, 2, 1.0}, {"m8-nodist", 6, 8, 0.0}};
  const std::uint64_t seeds[] = {1, 2, 3};
  for (auto& arm : arms) {
    for (std::uint64_t seed : seeds) {
      TrainConfig c = fx.config(seed);
      c.iterations = kAblationIterations;
      c.sampler.g = arm.g;
      c.sampler.m = arm.m;
      c.dist_weight = arm.dist_weight;
      const bool reuse = fx.have_model && c == fx.config(kTrainSeed);
      const ModelParams params = reuse ? fx.main_run.params : train(fx.train_set, c).params;
      double r2 = 0.0, curv = 0.0;
      for (const auto& v : fx.held_out) {
        const auto curve = score_volume(params, v);
        r2 += ordering_metrics(curve.scores, v.latent).r_squared;
        curv += mean_abs_second_difference(curve.scores);
      }
      arm.r2 += r2 / static_cast<double>(fx.held_out.size()) / 3.0;
      arm.curvature += curv / static_cast<double>(fx.held_out.size()) / 3.0;
    }
  }
  const bool a = arms[0].r2 > arms[1].r2;
  const bool b = arms[2].curvature > arms[0].curvature;
  return {a && b, "(a) R^2 m8 " + fmt(arms[0].r2, 5) + (a ? " > " : " <= ") + "m2 " + fmt(arms[1].r2, 5) +
                      "; (b) |2nd diff| no-dist " + fmt(arms[2].curvature) + (b ? " > " : " <= ") + "with-dist " +
                      fmt(arms[0].curvature) + "; " + std::to_string(kAblationIterations) +
                      " iterations, g*m = 48, 3 seeds"};
}

Outcome calibration(Fixtures& fx) {
  const auto& params = fx.model().params;
  std::vector<ScoreCurve> curves;
  std::vector<std::vector<int>> labels;
  for (const auto& v : fx.calibration) {
    curves.push_back(score_volume(params, v));
    std::vector<int> row;
    for (double z : v.latent) row.push_back(latent_band(z));
    labels.push_back(row);
  }
  const auto cal = calibrate_thresholds(curves, labels);
  std::size_t total = 0, wrong = 0, near = 0;
  for (const auto& v : fx.held_out) {
    const auto curve = score_volume(params, v);
    const auto predicted = classify_slices(curve.scores, cal.thresholds);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      ++total;
      if (predicted[i] == latent_band(v.latent[i])) continue;
      ++wrong;
      const double s = curve.scores[i];
      if (std::min(std::fabs(s - cal.thresholds.t1), std::fabs(s - cal.thresholds.t2)) <= 1.0) ++near;
    }
  }
  const double acc = 1.0 - static_cast<double>(wrong) / static_cast<double>(total);
  const double near_frac = wrong == 0 ? 1.0 : static_cast<double>(near) / static_cast<double>(wrong);
  return {acc >= 0.90 && near_frac >= 0.80,
          "accuracy " + fmt(acc) + " >= 0.90 on " + std::to_string(total) + " held-out slices (calibration " +
              fmt(cal.accuracy) + ", t1 " + fmt(cal.thresholds.t1, 3) + ", t2 " + fmt(cal.thresholds.t2, 3) + "), " +
              std::to_string(near) + "/" + std::to_string(wrong) + " = " + fmt(near_frac, 3) +
              " of errors within 1 unit of a threshold >= 0.80"};
}

Outcome anomaly_detection(Fixtures& fx) {
  const auto& params = fx.model().params;
  auto volumes = generate_volumes(kAnomalyVolumes, fx.spec, 0.0, kAnomalySeed, default_anomaly_kinds()).volumes;
  const AnomalyKind kinds[] = {AnomalyKind::shuffled, AnomalyKind::reversed_segment, AnomalyKind::duplicated_slices};
  Rng rng = make_rng(kAnomalySeed, "acceptance.anomalies");
  std::size_t injected = 0;
  for (std::size_t i = 0; i < volumes.size(); i += 5) {
    volumes[i] = inject_anomaly(volumes[i], kinds[injected % 3], rng);
    ++injected;
  }
  std::size_t hits = 0, false_flags = 0, normals = 0;
  std::size_t kind_hits[3] = {0, 0, 0}, kind_total[3] = {0, 0, 0};
  for (const auto& v : volumes) {
    const auto report = assess_curve(score_volume(params, v), kDefaultRThreshold);
    if (v.anomaly == AnomalyKind::none) {
      ++normals;
      false_flags += report.flagged ? 1 : 0;
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(std::find(std::begin(kinds), std::end(kinds), v.anomaly) - kinds);
    ++kind_total[k];
    if (report.flagged) {
      ++hits;
      ++kind_hits[k];
    }
  }
  const double recall = static_cast<double>(hits) / static_cast<double>(injected);
  const double ffr = static_cast<double>(false_flags) / static_cast<double>(normals);

  std::size_t reversed_ok = 0;
  for (const auto& v : fx.held_out) {
    AnomalySpec whole{AnomalyKind::reversed_segment, 0, v.slice_count(), 1.0};
    const auto report = assess_curve(score_volume(params, inject_anomaly(v, whole, rng)), kDefaultRThreshold);
    reversed_ok += report.flagged && report.direction < 0 ? 1 : 0;
  }
  const bool pass = recall >= 0.90 && ffr <= 0.05 && reversed_ok == fx.held_out.size();
  std::string detail = "recall " + fmt(recall, 3) + " >= 0.90 (shuffled " + std::to_string(kind_hits[0]) + "/" +
                       std::to_string(kind_total[0]) + ", reversed-segment " + std::to_string(kind_hits[1]) + "/" +
                       std::to_string(kind_total[1]) + ", duplicated " + std::to_string(kind_hits[2]) + "/" +
                       std::to_string(kind_total[2]) + "), false-flag rate " + fmt(ffr, 3) + " <= 0.05 over " +
                       std::to_string(normals) + " normal, whole reversals flagged with negative direction " +
                       std::to_string(reversed_ok) + "/" + std::to_string(fx.held_out.size());
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the CLI pipeline inside `dir` with relative paths only.
bool run_pipeline(const fs::path& dir, std::string& failure) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto previous = fs::current_path();
  fs::current_path(dir);
  std::ostringstream out, err;
  auto step = [&](std::vector<std::string> args) {
    const int code = cli::run(args, out, err);
    if (code != 0 && failure.empty()) failure = args[0] + " exited " + std::to_string(code) + ": " + err.str();
    return code == 0;
  };
  const std::string label_file = "data/labels.csv";
  bool ok = step({"gen-data", "--out", "data", "--volumes", "8", "--seed", "5", "--anomaly-fraction", "0.25",
                  "--min-slices", "40", "--max-slices", "60"}) &&
            step({"gen-data", "--out", "cal", "--volumes", "2", "--seed", "6", "--set", "phantom.min_span=0.9"}) &&
            step({"train", "--data", "data", "--out", "run", "--iterations", "40", "--seed", "5", "--progress-every",
                  "0"}) &&
            step({"score", "--model", "run/model.ubrc", "--data", "data", "--out", "scores.csv"}) &&
            step({"calibrate", "--model", "run/model.ubrc", "--data", "cal", "--volumes", "vol0000,vol0001",
                  "--labels", "cal/labels.csv", "--out", "thresholds.ini"}) &&
            step({"classify", "--model", "run/model.ubrc", "--thresholds", "thresholds.ini", "--data", "data",
                  "--out", "classes.csv", "--labels", label_file, "--histogram", "histogram.csv"}) &&
            step({"detect-anomaly", "--model", "run/model.ubrc", "--data", "data", "--out", "anomalies.csv"}) &&
            step({"metrics", "--model", "run/model.ubrc", "--data", "data", "--sidecar", "data/latents.ubrz", "--out",
                  "metrics.csv"});
  fs::current_path(previous);
  return ok;
}

Outcome determinism(Fixtures& fx) {
  std::vector<std::string> problems;

  // resume: 60 + 40 iterations against 100 straight, default network
  const auto tmp = fs::temp_directory_path() / "ubr_acceptance";
  fs::remove_all(tmp);
  TrainConfig c = fx.config(11);
  c.iterations = 100;
  const auto straight = train(fx.train_set, c);
  TrainConfig first = c;
  first.iterations = 60;
  TrainOptions opts;
  opts.checkpoint_dir = tmp / "first";
  train(fx.train_set, first, opts);
  const auto resumed = resume(tmp / "first" / kModelFileName, fx.train_set, c);
  const bool resume_ok = resumed.params == straight.params && resumed.state.velocity == straight.state.velocity;
  if (!resume_ok) problems.push_back("resume differs");

  // checkpoint round trip of the trained model and of a training state
  const auto& model = fx.model().params;
  save_params(model, tmp / "model.ubrc");
  const bool params_ok = load_params(tmp / "model.ubrc") == model;
  const auto state = load_train_state(tmp / "first" / kModelFileName);
  save_train_state(tmp / "state.ubrc", state, first);
  const auto state2 = load_train_state(tmp / "state.ubrc");
  const bool state_ok = state2.params == state.params && state2.velocity == state.velocity &&
                        state2.iteration == state.iteration && state2.rng == state.rng &&
                        slurp(tmp / "state.ubrc") == slurp(tmp / "first" / kModelFileName);
  if (!params_ok) problems.push_back("model round trip differs");
  if (!state_ok) problems.push_back("training state round trip differs");

  // pipeline rerun
  std::string failure;
  const bool ran = run_pipeline(tmp / "a", failure) && run_pipeline(tmp / "b", failure);
  std::size_t files = 0, csvs = 0, mismatched = 0;
  if (!ran) {
    problems.push_back("pipeline failed: " + failure);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(tmp / "a")) {
      if (!entry.is_regular_file()) continue;
      ++files;
      const auto rel = fs::relative(entry.path(), tmp / "a");
      csvs += entry.path().extension() == ".csv" ? 1 : 0;
      if (slurp(entry.path()) != slurp(tmp / "b" / rel)) {
        ++mismatched;
        problems.push_back(rel.string() + " differs");
      }
    }
  }
  fs::remove_all(tmp);
  std::string detail = std::string("resume 60+40 == 100 ") + (resume_ok ? "bit-exact" : "MISMATCH") +
                       ", checkpoint round trip " + (params_ok && state_ok ? "bit-exact" : "MISMATCH") +
                       ", pipeline rerun " + std::to_string(files - mismatched) + "/" + std::to_string(files) +
                       " files identical (" + std::to_string(csvs) + " CSV)";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && files > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::ofstream results;
  if (argc > 1) results.open(argv[1]);
  Fixtures fx;
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient correctness", gradient_correctness},
      {"loss unit values", loss_unit_values},
      {"self-organization", [&] { return self_organization(fx); }},
      {"ablation trend", [&] { return ablation(fx); }},
      {"zone calibration", [&] { return calibration(fx); }},
      {"anomaly detection", [&] { return anomaly_detection(fx); }},
      {"determinism and persistence", [&] { return determinism(fx); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].name << ": " << o.detail << " ("
         << fmt(seconds_since(t0), 1) << " s)";
    std::cout << line.str() << std::endl;
    if (results) results << line.str() << std::endl;
  }
  return all ? 0 : 1;
}
