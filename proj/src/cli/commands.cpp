#include "petlab/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <mutex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "petlab/errors.hpp"
#include "petlab/io/checkpoint.hpp"
#include "petlab/io/dataset_store.hpp"
#include "petlab/io/pgm.hpp"
#include "petlab/parallel.hpp"

namespace petlab::cli {
namespace {

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && (!fs::is_directory(p) || !fs::is_empty(p)); }

void prepare_dir(const fs::path& dir, bool force) {
  if (non_empty_dir(dir)) {
    if (!force) throw DataError("output " + dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::string fold_dir_name(std::size_t fold) { return fmt::format("fold_{:02}", fold); }

std::vector<std::string> subject_ids(const recon::Dataset& ds) {
  std::vector<std::string> ids;
  for (const auto& s : ds.subjects) ids.push_back(s.id);
  return ids;
}

void check_network_fits(const io::ExperimentConfig& config, const recon::Dataset& ds) {
  const auto& s = ds.subjects.front().standard;
  config.network.validate_input(s.height, s.width);
  if (std::find(ds.drfs.begin(), ds.drfs.end(), config.train_drf) == ds.drfs.end()) {
    throw DataError("dataset has no reconstructions at DRF " + io::format_number(config.train_drf));
  }
}

std::vector<metrics::MetricsRecord> with_means(const train::EvaluationResult& e) {
  auto rows = e.rows;
  rows.push_back(e.lowdose_mean);
  rows.push_back(e.prediction_mean);
  return rows;
}

} // namespace

std::vector<std::size_t> select_folds(const std::string& spec, std::size_t n_subjects) {
  std::vector<std::size_t> out;
  if (spec == "all") {
    for (std::size_t i = 0; i < n_subjects; ++i) out.push_back(i);
    return out;
  }
  std::size_t k = 0;
  const auto [p, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), k);
  if (ec != std::errc() || p != spec.data() + spec.size()) throw ConfigError("--fold must be 'all' or an index, got '" + spec + "'");
  if (k >= n_subjects) {
    throw ConfigError("--fold " + spec + " out of range: dataset has " + std::to_string(n_subjects) + " folds");
  }
  return {k};
}

recon::Dataset cmd_simulate(const SimulateOptions& options) {
  const auto& c = options.config;
  c.validate();
  if (non_empty_dir(options.out) && !options.force) {
    throw DataError("output " + options.out.string() + " already exists; pass --force to overwrite");
  }
  spdlog::info("simulating {} subjects, {}x{}x{}, DRF {}", c.phantom.n_subjects, c.phantom.depth, c.phantom.height,
               c.phantom.width, fmt::join(c.drfs, ","));
  auto ds = recon::build_dataset(recon::generate_phantoms(c.phantom), c.acquisition, c.drfs, c.recon,
                                 worker_count(options.jobs));
  prepare_dir(options.out, options.force);
  io::save_dataset(options.out, ds, c.phantom);
  io::write_text(options.out / "config.ini", c.to_ini());
  spdlog::info("wrote dataset to {}", options.out.string());
  return ds;
}

FoldResult run_fold(const recon::Dataset& dataset, const io::ExperimentConfig& config, std::size_t fold,
                    const std::optional<fs::path>& out) {
  const auto folds = train::loocv_folds(subject_ids(dataset));
  if (fold >= folds.size()) throw ConfigError("fold " + std::to_string(fold) + " out of range");
  check_network_fits(config, dataset);
  FoldResult r;
  r.fold = fold;
  r.test_subject = folds[fold].test_subject;
  net::Network net(config.network);
  r.n_params = net.parameter_count();
  r.training = train::train(net, dataset, folds[fold], config.train_drf, config.train, [&](const auto& h) {
    if (h.validated) {
      spdlog::info("fold {} epoch {} loss {:.5f} val psnr {:.2f} ssim {:.4f}", fold, h.epoch, h.train_loss, h.val_psnr,
                   h.val_ssim);
    }
  });
  r.evaluation = train::evaluate(net, dataset.subject(r.test_subject), config.train_drf, config.train.batch_size);
  if (out) {
    fs::create_directories(*out);
    io::save_checkpoint(*out / "checkpoint", net,
                        {r.test_subject, fold, config.train_drf, config.train.epochs, config.to_ini()});
    io::write_history_csv(*out / "history.csv", r.training.history);
    io::write_metrics_csv(*out / "metrics.csv", with_means(r.evaluation));
  }
  return r;
}

std::vector<FoldResult> cmd_train(const TrainOptions& options) {
  options.config.validate();
  const auto stored = io::load_dataset(options.dataset);
  const auto& ds = stored.dataset;
  check_network_fits(options.config, ds);
  const auto folds = select_folds(options.folds, ds.subjects.size());
  for (auto f : folds) {
    const auto dir = options.out / fold_dir_name(f);
    if (non_empty_dir(dir) && !options.force) {
      throw DataError("output " + dir.string() + " already exists; pass --force to overwrite");
    }
  }
  fs::create_directories(options.out);
  io::write_text(options.out / "config.ini", options.config.to_ini());

  std::vector<std::optional<FoldResult>> results(folds.size());
  std::vector<std::string> errors(folds.size());
  parallel_for(folds.size(), worker_count(options.jobs), [&](std::size_t i) {
    const auto dir = options.out / fold_dir_name(folds[i]);
    try {
      fs::remove_all(dir);
      results[i] = run_fold(ds, options.config, folds[i], dir);
      const auto& e = results[i]->evaluation;
      spdlog::info("fold {} ({}) psnr {:.2f} -> {:.2f} dB, ssim {:.4f} -> {:.4f}", folds[i], results[i]->test_subject,
                   e.lowdose_mean.psnr_db, e.prediction_mean.psnr_db, e.lowdose_mean.ssim, e.prediction_mean.ssim);
    } catch (const Error& e) {
      errors[i] = e.what();
      spdlog::error("fold {} failed: {}", folds[i], e.what());
    }
  });

  std::vector<FoldResult> done;
  std::vector<metrics::MetricsRecord> rows;
  std::string failed;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (results[i]) {
      const auto r = with_means(results[i]->evaluation);
      rows.insert(rows.end(), r.begin(), r.end());
      done.push_back(std::move(*results[i]));
    } else {
      failed += fmt::format(" fold {}: {};", folds[i], errors[i]);
    }
  }
  io::write_metrics_csv(options.out / "metrics.csv", rows);
  if (!failed.empty()) throw RuntimeFailure("training failed for" + failed);
  return done;
}

std::vector<metrics::MetricsRecord> cmd_evaluate(const EvaluateOptions& options) {
  auto ckpt = io::load_checkpoint(options.checkpoint);
  const auto stored = io::load_dataset(options.dataset);
  const auto subject = options.subject.empty() ? ckpt.info.test_subject : options.subject;
  const auto& s = stored.dataset.subject(subject);
  if (!ckpt.info.config_ini.empty()) {
    const auto trained = io::parse_config(ckpt.info.config_ini, options.checkpoint.string());
    if (trained.phantom.height != s.standard.height || trained.phantom.width != s.standard.width) {
      throw DataError(fmt::format("checkpoint was trained on {}x{} slices but {} has {}x{}", trained.phantom.height,
                                  trained.phantom.width, subject, s.standard.height, s.standard.width));
    }
  }
  try {
    ckpt.network.config().validate_input(s.standard.height, s.standard.width);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint does not fit the dataset: ") + e.what());
  }
  const auto result = train::evaluate(ckpt.network, s, ckpt.info.drf);
  const auto rows = with_means(result);
  if (!options.out_csv.empty()) {
    if (options.out_csv.has_parent_path()) fs::create_directories(options.out_csv.parent_path());
    io::write_metrics_csv(options.out_csv, rows);
  }
  spdlog::info("{}: psnr {:.2f} -> {:.2f} dB, ssim {:.4f} -> {:.4f}", subject, result.lowdose_mean.psnr_db,
               result.prediction_mean.psnr_db, result.lowdose_mean.ssim, result.prediction_mean.ssim);
  return rows;
}

Study parse_study(const std::string& name) {
  if (name == "skip") return Study::skip;
  if (name == "slices") return Study::slices;
  if (name == "depth") return Study::depth;
  if (name == "loss") return Study::loss;
  throw ConfigError("unknown study '" + name + "' (expected skip, slices, depth or loss)");
}

std::string to_string(Study study) {
  switch (study) {
  case Study::skip: return "skip";
  case Study::slices: return "slices";
  case Study::depth: return "depth";
  case Study::loss: return "loss";
  }
  return "?";
}

std::string depth_infeasibility(std::size_t n_p, std::size_t height, std::size_t width) {
  const std::size_t f = std::size_t{1} << n_p;
  if (height % f != 0 || width % f != 0) {
    return fmt::format("{}x{} input not divisible by 2^{}", height, width, n_p);
  }
  if (height / f < 3 || width / f < 3) {
    return fmt::format("bottleneck {}x{} is smaller than the 3x3 kernel", height / f, width / f);
  }
  return {};
}

std::vector<Variant> study_variants(Study study, const io::ExperimentConfig& base) {
  std::vector<Variant> out;
  switch (study) {
  case Study::skip:
    for (auto m : {net::SkipMode::both, net::SkipMode::concat_only, net::SkipMode::residual_only, net::SkipMode::none}) {
      auto c = base;
      c.network.skip_mode = m;
      out.push_back({net::to_string(m), c, {}});
    }
    break;
  case Study::slices:
    for (std::size_t n : {1, 3, 5, 7}) {
      auto c = base;
      c.network.n_slices = n;
      out.push_back({fmt::format("slices{}", n), c, {}});
    }
    break;
  case Study::depth:
    for (std::size_t n_p = 2; n_p <= 5; ++n_p)
      for (std::size_t n_c = 1; n_c <= 3; ++n_c) {
        auto c = base;
        c.network.n_p = n_p;
        c.network.n_c = n_c;
        out.push_back({fmt::format("np{}_nc{}", n_p, n_c), c,
                       depth_infeasibility(n_p, base.phantom.height, base.phantom.width)});
      }
    break;
  case Study::loss:
    for (auto k : {metrics::LossKind::l1, metrics::LossKind::mse, metrics::LossKind::ssim, metrics::LossKind::msssim}) {
      auto c = base;
      c.train.loss = k;
      std::string reason;
      if (k == metrics::LossKind::msssim) {
        const auto need = metrics::SSIMParams::for_dynamic_range(1.0, c.train.msssim_levels).min_image_size();
        if (std::min(base.phantom.height, base.phantom.width) < need) {
          reason = fmt::format("{}-level MS-SSIM needs slices of at least {}x{}", c.train.msssim_levels, need, need);
        }
      }
      out.push_back({metrics::to_string(k), c, reason});
    }
    break;
  }
  return out;
}

std::vector<io::StudyRow> run_study(Study study, const recon::Dataset& dataset, const io::ExperimentConfig& config,
                                    const std::vector<std::size_t>& folds, std::size_t jobs,
                                    const std::optional<fs::path>& out) {
  auto base = config;
  const auto& first = dataset.subjects.front().standard;
  base.phantom.height = first.height;
  base.phantom.width = first.width;
  const auto variants = study_variants(study, base);
  const auto ids = subject_ids(dataset);

  std::vector<io::StudyRow> rows(variants.size() * folds.size());
  parallel_for(rows.size(), worker_count(jobs), [&](std::size_t i) {
    const auto& v = variants[i / folds.size()];
    const std::size_t fold = folds[i % folds.size()];
    auto& row = rows[i];
    row.study = to_string(study);
    row.variant = v.name;
    row.fold = fold;
    row.subject = ids.at(fold);
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    row.nrmse = row.psnr_db = row.ssim = nan;
    const auto& s = dataset.subject(row.subject);
    const auto low = metrics::aggregate(recon::baseline_metrics(s, v.config.train_drf), s.id, train::kLowDoseMethod,
                                        v.config.train_drf);
    row.lowdose_nrmse = low.nrmse;
    row.lowdose_psnr_db = low.psnr_db;
    row.lowdose_ssim = low.ssim;
    if (!v.skip_reason.empty()) {
      row.status = "skipped";
      row.reason = v.skip_reason;
      return;
    }
    try {
      std::optional<fs::path> dir;
      if (out) dir = *out / v.name / fold_dir_name(fold);
      const auto r = run_fold(dataset, v.config, fold, dir);
      row.status = "ok";
      row.n_params = r.n_params;
      row.nrmse = r.evaluation.prediction_mean.nrmse;
      row.psnr_db = r.evaluation.prediction_mean.psnr_db;
      row.ssim = r.evaluation.prediction_mean.ssim;
      spdlog::info("{} {} fold {}: psnr {:.2f} dB ssim {:.4f}", row.study, row.variant, fold, row.psnr_db, row.ssim);
    } catch (const Error& e) {
      row.status = "failed";
      row.reason = e.what();
      spdlog::error("{} {} fold {} failed: {}", row.study, row.variant, fold, e.what());
    }
  });
  return rows;
}

std::vector<io::StudyRow> cmd_ablate(const AblateOptions& options) {
  options.config.validate();
  const auto stored = io::load_dataset(options.dataset);
  const auto folds = select_folds(options.folds, stored.dataset.subjects.size());
  const auto name = to_string(options.study);
  const auto csv = options.out / (name + ".csv");
  if (fs::exists(csv) && !options.force) {
    throw DataError("output " + csv.string() + " already exists; pass --force to overwrite");
  }
  fs::remove_all(options.out / name);
  fs::create_directories(options.out);
  const auto rows = run_study(options.study, stored.dataset, options.config, folds, options.jobs, options.out / name);
  io::write_study_csv(csv, rows);
  io::write_text(options.out / (name + "_summary.csv"), summary_csv(aggregate_study(rows)));
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.status == "failed"; });
  if (failed > 0) throw RuntimeFailure(fmt::format("{} of {} runs in the {} study failed", failed, rows.size(), name));
  return rows;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) {
    s.mean = s.std = s.min = s.max = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

std::vector<AggregateRow> aggregate_study(const std::vector<io::StudyRow>& rows) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const io::StudyRow*>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.study, r.variant);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    AggregateRow a;
    a.source = key.first;
    a.group = key.second;
    std::vector<double> n, p, s;
    for (const auto* r : groups[key]) {
      if (r->status != "ok") {
        ++a.n_skipped;
        continue;
      }
      n.push_back(r->nrmse);
      p.push_back(r->psnr_db);
      s.push_back(r->ssim);
    }
    a.n = n.size();
    a.nrmse = summarize(n);
    a.psnr_db = summarize(p);
    a.ssim = summarize(s);
    out.push_back(a);
  }
  return out;
}

std::vector<AggregateRow> aggregate_metrics(const std::vector<metrics::MetricsRecord>& rows) {
  const bool have_means = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.slice < 0; });
  std::vector<std::string> order;
  std::map<std::string, std::vector<const metrics::MetricsRecord*>> groups;
  for (const auto& r : rows) {
    if (have_means != (r.slice < 0)) continue;
    const auto key = r.method + "@drf" + io::format_number(r.drf);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    AggregateRow a;
    a.source = "metrics";
    a.group = key;
    std::vector<double> n, p, s;
    for (const auto* r : groups[key]) {
      n.push_back(r->nrmse);
      p.push_back(r->psnr_db);
      s.push_back(r->ssim);
    }
    a.n = n.size();
    a.nrmse = summarize(n);
    a.psnr_db = summarize(p);
    a.ssim = summarize(s);
    out.push_back(a);
  }
  return out;
}

std::string summary_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  const auto f = io::format_number;
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.source, r.group, r.n, r.n_skipped,
                       f(r.nrmse.mean), f(r.nrmse.std), f(r.nrmse.min), f(r.nrmse.max), f(r.psnr_db.mean),
                       f(r.psnr_db.std), f(r.psnr_db.min), f(r.psnr_db.max), f(r.ssim.mean), f(r.ssim.std),
                       f(r.ssim.min), f(r.ssim.max));
  }
  return out;
}

std::vector<AggregateRow> cmd_report(const ReportOptions& options) {
  if (options.csvs.empty()) throw ConfigError("report needs at least one CSV");
  std::vector<AggregateRow> all;
  for (const auto& path : options.csvs) {
    const auto text = io::read_text(path);
    const auto header = text.substr(0, text.find('\n'));
    std::vector<AggregateRow> rows;
    if (header == io::kStudyHeader) {
      rows = aggregate_study(io::read_study_csv(path));
    } else if (header == io::kMetricsHeader) {
      rows = aggregate_metrics(io::read_metrics_csv(path));
    } else {
      throw DataError(path.string() + ": not a study or metrics CSV");
    }
    if (rows.empty()) throw DataError(path.string() + " has no data rows");
    all.insert(all.end(), rows.begin(), rows.end());
  }
  prepare_dir(options.out, options.force);
  io::write_text(options.out / "summary.csv", summary_csv(all));
  for (const auto& r : all) {
    spdlog::info("{:>8} {:<16} n={:<3} psnr {:7.2f} +- {:5.2f}  ssim {:.4f} +- {:.4f}  nrmse {:.4f}", r.source, r.group,
                 r.n, r.psnr_db.mean, r.psnr_db.std, r.ssim.mean, r.ssim.std, r.nrmse.mean);
  }

  if (options.checkpoint && options.dataset) {
    auto ckpt = io::load_checkpoint(*options.checkpoint);
    const auto stored = io::load_dataset(*options.dataset);
    const auto& s = stored.dataset.subject(ckpt.info.test_subject);
    const auto& low = s.low(ckpt.info.drf);
    const auto pred = train::predict_volume(ckpt.network, low);
    const std::size_t z = s.depth() / 2;
    const auto ref = s.standard.slice(z), lo = low.slice(z), pr = pred.slice(z);
    const float hi = *std::max_element(ref.pixels.begin(), ref.pixels.end());
    const auto dir = options.out / "images";
    fs::create_directories(dir);
    const auto stem = fmt::format("{}_z{:02}_", s.id, z);
    io::write_pgm16(dir / (stem + "reference.pgm"), ref, 0.0f, hi);
    io::write_pgm16(dir / (stem + "lowdose.pgm"), lo, 0.0f, hi);
    io::write_pgm16(dir / (stem + "prediction.pgm"), pr, 0.0f, hi);
    io::write_pgm16(dir / (stem + "error_lowdose.pgm"), io::error_map(lo, ref));
    io::write_pgm16(dir / (stem + "error_prediction.pgm"), io::error_map(pr, ref));
    spdlog::info("wrote images for {} slice {} to {}", s.id, z, dir.string());
  } else if (options.checkpoint || options.dataset) {
    throw ConfigError("image dumps need both --checkpoint and --dataset");
  }
  return all;
}

} // namespace petlab::cli
