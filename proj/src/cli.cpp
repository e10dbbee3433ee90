#include "ubr/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ubr/config.hpp"
#include "ubr/dataset.hpp"
#include "ubr/error.hpp"
#include "ubr/evaluate.hpp"
#include "ubr/selfcheck.hpp"
#include "ubr/stats.hpp"
#include "ubr/trainer.hpp"

namespace ubr::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

/// Config file (optional) followed by --set overrides, in order.
RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw usage_error("--set expects section.key=value, got '" + kv + "'");
    set_option(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

/// Reproducibility record for commands whose inputs are files rather than a RunConfig.
void write_run_record(const fs::path& output, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& fields) {
  std::ofstream out(fs::path(output.string() + ".run.ini"), std::ios::trunc);
  if (!out) throw data_error(output.string() + ".run.ini: cannot open for writing");
  out << '[' << command << "]\n";
  for (const auto& [k, v] : fields) out << k << " = " << v << '\n';
}

std::vector<ScoreCurve> score_dataset(const ModelParams& params, const Dataset& dataset) {
  std::vector<ScoreCurve> curves;
  curves.reserve(dataset.size());
  for (const auto& v : dataset.volumes()) curves.push_back(score_volume(params, v));
  return curves;
}

struct GenDataArgs {
  std::string out_dir;
  std::size_t volumes = 0;
  double anomaly_fraction = 0.0;
  std::uint64_t seed = 0;
  std::string config;
  std::vector<std::string> overrides;
  std::string kinds = "shuffled,reversed-segment,duplicated-slices";
  std::optional<std::size_t> min_slices, max_slices, image_size;
  std::optional<double> noise_sigma, translate_max;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  RunConfig config = resolve_config(a.config, a.overrides);
  if (a.min_slices) config.phantom.min_slices = *a.min_slices;
  if (a.max_slices) config.phantom.max_slices = *a.max_slices;
  if (a.image_size) config.phantom.image_height = config.phantom.image_width = *a.image_size;
  if (a.noise_sigma) config.phantom.noise_sigma = *a.noise_sigma;
  if (a.translate_max) config.phantom.translate_max = *a.translate_max;
  config.phantom.seed = a.seed;
  config.phantom.validate();

  std::vector<AnomalyKind> kinds;
  for (const auto& name : split_list(a.kinds)) {
    try {
      kinds.push_back(anomaly_kind_from_string(name));
    } catch (const Error&) {
      throw usage_error("--anomaly-kinds: unknown kind '" + name + "'");
    }
  }
  const auto generated = generate_dataset(a.out_dir, a.volumes, config.phantom, a.anomaly_fraction, a.seed, kinds);

  std::ostringstream header;
  header << "; ubr gen-data --volumes " << a.volumes << " --anomaly-fraction " << format_double(a.anomaly_fraction)
         << " --seed " << a.seed << " --anomaly-kinds " << a.kinds << '\n';
  std::ofstream record(fs::path(a.out_dir) / "run_config.ini", std::ios::trunc);
  record << header.str() << to_ini(config);

  std::size_t anomalous = 0;
  for (const auto& e : generated.manifest) anomalous += e.anomaly != AnomalyKind::none ? 1 : 0;
  out << "wrote " << generated.manifest.size() << " volumes (" << anomalous << " anomalous) to " << a.out_dir << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string data_dir;
  std::string out_dir;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> iterations, g, m;
  std::optional<double> lr, momentum, dist_weight;
  std::optional<std::uint64_t> seed;
  std::string resume;
  std::size_t progress_every = 100;
};

int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(a.config, a.overrides);
  if (a.iterations) config.train.iterations = *a.iterations;
  if (a.g) config.train.sampler.g = *a.g;
  if (a.m) config.train.sampler.m = *a.m;
  if (a.lr) config.train.learning_rate = *a.lr;
  if (a.momentum) config.train.momentum = *a.momentum;
  if (a.dist_weight) config.train.dist_weight = *a.dist_weight;
  if (a.seed) config.train.seed = config.train.network.seed = *a.seed;
  config.train.validate();

  const Dataset dataset = Dataset::open(a.data_dir);
  fs::create_directories(a.out_dir);
  write_run_config(fs::path(a.out_dir) / "run_config.ini", config);

  TrainOptions options;
  options.checkpoint_dir = a.out_dir;
  options.on_iteration = [&](const IterationRecord& r) {
    if (a.progress_every > 0 && (r.iteration % a.progress_every == 0 || r.iteration == config.train.iterations)) {
      err << "iter " << r.iteration << "  order " << format_double(r.order) << "  dist " << format_double(r.dist)
          << "  total " << format_double(r.total) << '\n';
    }
  };
  const TrainResult result = a.resume.empty() ? train(dataset, config.train, options)
                                              : resume(a.resume, dataset, config.train, options);
  write_train_log(fs::path(a.out_dir) / "train_log.txt", result.log);
  for (const auto& note : result.log.notes) err << "note: " << note << '\n';
  out << "trained " << result.log.records.size() << " iterations in " << format_double(result.log.wall_seconds)
      << " s; checkpoint " << result.log.final_checkpoint.string() << '\n';
  return kExitOk;
}

int score_cmd(const std::string& model, const std::string& data, const std::string& csv, std::ostream& out) {
  const auto params = load_params(model);
  const auto dataset = Dataset::open(data);
  const auto curves = score_dataset(params, dataset);
  write_score_csv(csv, curves);
  write_run_record(csv, "score", {{"model", model}, {"data", data}});
  out << "scored " << curves.size() << " volumes -> " << csv << '\n';
  return kExitOk;
}

std::vector<int> labels_for(const SliceLabels& labels, const std::string& labels_path, const Volume& volume) {
  auto it = labels.find(volume.id);
  if (it == labels.end()) throw data_error(labels_path + ": no labels for volume " + volume.id);
  if (it->second.size() != volume.slice_count()) {
    throw data_error(labels_path + ": volume " + volume.id + " has " + std::to_string(volume.slice_count()) +
                     " slices but " + std::to_string(it->second.size()) + " labels");
  }
  return it->second;
}

int calibrate_cmd(const std::string& model, const std::string& data, const std::string& ids,
                  const std::string& labels_path, const std::string& out_path, std::ostream& out) {
  const auto params = load_params(model);
  const auto dataset = Dataset::open(data);
  const auto labels = read_labels(labels_path);
  std::vector<ScoreCurve> curves;
  std::vector<std::vector<int>> rows;
  for (const auto& id : split_list(ids)) {
    const Volume& v = dataset.find(id);
    curves.push_back(score_volume(params, v));
    rows.push_back(labels_for(labels, labels_path, v));
  }
  if (curves.empty()) throw usage_error("--volumes lists no volume ids");
  const auto calibration = calibrate_thresholds(curves, rows);
  write_thresholds(out_path, calibration);
  write_run_record(out_path, "calibrate", {{"model", model}, {"data", data}, {"volumes", ids}, {"labels", labels_path}});
  out << "t1 " << format_double(calibration.thresholds.t1) << "  t2 " << format_double(calibration.thresholds.t2)
      << "  calibration accuracy " << format_double(calibration.accuracy) << '\n';
  return kExitOk;
}

int classify_cmd(const std::string& model, const std::string& thresholds_path, const std::string& data,
                 const std::string& csv, const std::string& labels_path, const std::string& histogram_path,
                 double bin_width, std::ostream& out) {
  const auto params = load_params(model);
  const auto thresholds = read_thresholds(thresholds_path);
  const auto dataset = Dataset::open(data);
  const auto labels = labels_path.empty() ? SliceLabels{} : read_labels(labels_path);

  std::ofstream csv_out(csv, std::ios::trunc);
  if (!csv_out) throw data_error(csv + ": cannot open for writing");
  csv_out << "volume_id,slice_index,score,class\n";
  std::vector<double> all_scores;
  std::vector<int> all_pred, all_truth;
  for (const auto& v : dataset.volumes()) {
    const auto curve = score_volume(params, v);
    const auto pred = classify_slices(curve.scores, thresholds);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      csv_out << v.id << ',' << i << ',' << format_double(curve.scores[i]) << ',' << pred[i] << '\n';
    }
    all_scores.insert(all_scores.end(), curve.scores.begin(), curve.scores.end());
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    if (!labels_path.empty()) {
      const auto truth = labels_for(labels, labels_path, v);
      all_truth.insert(all_truth.end(), truth.begin(), truth.end());
    }
  }
  write_run_record(csv, "classify", {{"model", model}, {"thresholds", thresholds_path}, {"data", data},
                                     {"labels", labels_path}});
  out << "classified " << all_pred.size() << " slices -> " << csv << '\n';
  if (!labels_path.empty()) {
    out << "accuracy " << format_double(accuracy(all_pred, all_truth)) << '\n';
    if (!histogram_path.empty()) write_histogram_csv(histogram_path, histogram(all_scores, all_truth, bin_width));
  } else if (!histogram_path.empty()) {
    write_histogram_csv(histogram_path, histogram(all_scores, all_pred, bin_width));
  }
  return kExitOk;
}

int detect_cmd(const std::string& model, const std::string& data, double r_threshold, const std::string& csv,
               bool fail_on_flag, std::ostream& out) {
  const auto params = load_params(model);
  const auto dataset = Dataset::open(data);
  const auto reports = detect_anomalies(params, dataset.volumes(), r_threshold);
  write_anomaly_csv(csv, reports);
  write_run_record(csv, "detect-anomaly", {{"model", model}, {"data", data}, {"r_threshold", format_double(r_threshold)}});
  const auto flagged = std::count_if(reports.begin(), reports.end(), [](const AnomalyReport& r) { return r.flagged; });
  out << "flagged " << flagged << " of " << reports.size() << " volumes (r < " << format_double(r_threshold) << ") -> "
      << csv << '\n';
  return fail_on_flag && flagged > 0 ? kExitData : kExitOk;
}

int metrics_cmd(const std::string& model, const std::string& data, const std::string& sidecar, const std::string& csv,
                std::ostream& out) {
  const auto params = load_params(model);
  const auto dataset = Dataset::open(data);
  const auto latents = read_latents(sidecar);
  std::ofstream csv_out(csv, std::ios::trunc);
  if (!csv_out) throw data_error(csv + ": cannot open for writing");
  csv_out << "volume_id,pairwise_accuracy,spearman,r_squared\n";
  std::vector<double> pairwise, spearman, r2;
  for (const auto& v : dataset.volumes()) {
    auto it = latents.find(v.id);
    if (it == latents.end()) throw data_error(sidecar + ": no latent record for volume " + v.id);
    const auto curve = score_volume(params, v);
    const auto m = ordering_metrics(curve.scores, it->second);
    csv_out << v.id << ',' << format_double(m.pairwise_accuracy) << ',' << format_double(m.spearman) << ','
            << format_double(m.r_squared) << '\n';
    pairwise.push_back(m.pairwise_accuracy);
    spearman.push_back(m.spearman);
    r2.push_back(m.r_squared);
  }
  write_run_record(csv, "metrics", {{"model", model}, {"data", data}, {"sidecar", sidecar}});
  out << "median pairwise accuracy " << format_double(stats::median(pairwise)) << "  median spearman "
      << format_double(stats::median(spearman)) << "  median r^2 " << format_double(stats::median(r2)) << '\n';
  return kExitOk;
}

int grad_check_cmd(double tolerance, std::size_t seeds, std::size_t max_checks, std::ostream& out) {
  diff::GradCheckOptions options;
  options.tolerance = tolerance;
  bool ok = true;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    for (const auto& c : op_grad_checks(seed, options)) {
      worst = std::max(worst, c.report.max_relative_error());
      if (!c.report.passed()) {
        ok = false;
        out << "FAIL " << c.name << " seed " << seed << " max rel error " << c.report.max_relative_error() << '\n';
      }
    }
  }
  diff::GradCheckOptions net_options = options;
  net_options.max_checks_per_tensor = max_checks;
  const auto net = network_grad_check(NetworkConfig{}, 2, 4, 1, net_options);
  for (const auto& t : net.report.tensors) {
    out << "  " << t.name << "  max rel error " << t.max_relative_error << "  (" << t.checked << " checked, "
        << t.kinks_skipped << " skipped at kinks)\n";
  }
  worst = std::max(worst, net.report.max_relative_error());
  ok = ok && net.report.passed();
  out << (ok ? "PASS" : "FAIL") << " grad-check (ops x " << seeds << " seeds, default network); worst relative error "
      << worst << " vs tolerance " << tolerance << '\n';
  return ok ? kExitOk : kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised body-part regression on synthetic volumes"};
  app.require_subcommand(1);
  int status = kExitOk;
  std::function<int()> action;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--volumes", gen.volumes, "Number of volumes")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--anomaly-fraction", gen.anomaly_fraction, "Probability that a volume is anomalous")
      ->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--anomaly-kinds", gen.kinds, "Comma-separated anomaly kinds");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--config", gen.config, "INI config file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--set", gen.overrides, "Override section.key=value");
  gen_cmd->add_option("--min-slices", gen.min_slices);
  gen_cmd->add_option("--max-slices", gen.max_slices);
  gen_cmd->add_option("--image-size", gen.image_size);
  gen_cmd->add_option("--noise-sigma", gen.noise_sigma);
  gen_cmd->add_option("--translate-max", gen.translate_max);
  gen_cmd->callback([&] { action = [&] { return gen_data(gen, out); }; });

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train the regressor on a dataset");
  train_sub->add_option("--data", tr.data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_sub->add_option("--out", tr.out_dir, "Output directory")->required();
  train_sub->add_option("--config", tr.config, "INI config file")->check(CLI::ExistingFile);
  train_sub->add_option("--set", tr.overrides, "Override section.key=value");
  train_sub->add_option("--iterations", tr.iterations);
  train_sub->add_option("--lr", tr.lr);
  train_sub->add_option("--momentum", tr.momentum);
  train_sub->add_option("--dist-weight", tr.dist_weight);
  train_sub->add_option("--g", tr.g);
  train_sub->add_option("--m", tr.m);
  train_sub->add_option("--seed", tr.seed);
  train_sub->add_option("--resume", tr.resume, "Continue from a training checkpoint")->check(CLI::ExistingFile);
  train_sub->add_option("--progress-every", tr.progress_every, "Print progress every N iterations (0 = never)");
  train_sub->callback([&] { action = [&] { return train_cmd(tr, out, err); }; });

  std::string model, data, csv, sidecar, thresholds, labels, ids, histogram_path;
  double r_threshold = kDefaultRThreshold;
  double bin_width = 1.0;
  bool fail_on_flag = false;

  auto* score_sub = app.add_subcommand("score", "Write per-slice scores for every volume");
  score_sub->add_option("--model", model)->required()->check(CLI::ExistingFile);
  score_sub->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  score_sub->add_option("--out", csv)->required();
  score_sub->callback([&] { action = [&] { return score_cmd(model, data, csv, out); }; });

  auto* cal_sub = app.add_subcommand("calibrate", "Fit the two zone thresholds on labeled volumes");
  cal_sub->add_option("--model", model)->required()->check(CLI::ExistingFile);
  cal_sub->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  cal_sub->add_option("--volumes", ids, "Comma-separated volume ids")->required();
  cal_sub->add_option("--labels", labels, "CSV volume_id,slice_index,class")->required()->check(CLI::ExistingFile);
  cal_sub->add_option("--out", csv, "Thresholds file")->required();
  cal_sub->callback([&] { action = [&] { return calibrate_cmd(model, data, ids, labels, csv, out); }; });

  auto* cls_sub = app.add_subcommand("classify", "Assign every slice to a zone");
  cls_sub->add_option("--model", model)->required()->check(CLI::ExistingFile);
  cls_sub->add_option("--thresholds", thresholds)->required()->check(CLI::ExistingFile);
  cls_sub->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  cls_sub->add_option("--out", csv)->required();
  cls_sub->add_option("--labels", labels, "Ground-truth labels; prints accuracy")->check(CLI::ExistingFile);
  cls_sub->add_option("--histogram", histogram_path, "Per-class score histogram CSV");
  cls_sub->add_option("--bin-width", bin_width)->check(CLI::PositiveNumber);
  cls_sub->callback([&] {
    action = [&] { return classify_cmd(model, thresholds, data, csv, labels, histogram_path, bin_width, out); };
  });

  auto* det_sub = app.add_subcommand("detect-anomaly", "Flag volumes whose score curve is not linear");
  det_sub->add_option("--model", model)->required()->check(CLI::ExistingFile);
  det_sub->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  det_sub->add_option("--r-threshold", r_threshold);
  det_sub->add_option("--out", csv)->required();
  det_sub->add_flag("--fail-on-flag", fail_on_flag, "Exit 2 when any volume is flagged");
  det_sub->callback([&] { action = [&] { return detect_cmd(model, data, r_threshold, csv, fail_on_flag, out); }; });

  auto* met_sub = app.add_subcommand("metrics", "Ordering metrics against the latent sidecar");
  met_sub->add_option("--model", model)->required()->check(CLI::ExistingFile);
  met_sub->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  met_sub->add_option("--sidecar", sidecar)->required()->check(CLI::ExistingFile);
  met_sub->add_option("--out", csv)->required();
  met_sub->callback([&] { action = [&] { return metrics_cmd(model, data, sidecar, csv, out); }; });

  double tolerance = 1e-4;
  std::size_t seeds = 20;
  std::size_t max_checks = 24;
  auto* gc_sub = app.add_subcommand("grad-check", "Finite-difference check of all gradients");
  gc_sub->add_option("--tolerance", tolerance)->check(CLI::PositiveNumber);
  gc_sub->add_option("--seeds", seeds)->check(CLI::PositiveNumber);
  gc_sub->add_option("--max-checks", max_checks, "Elements checked per network tensor (0 = all)");
  gc_sub->callback([&] { action = [&] { return grad_check_cmd(tolerance, seeds, max_checks, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    status = action ? action() : kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::usage ? kExitUsage : kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return status;
}

}  // namespace ubr::cli
