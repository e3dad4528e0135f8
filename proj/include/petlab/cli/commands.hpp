#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "petlab/io/config.hpp"
#include "petlab/io/csv.hpp"
#include "petlab/recon/dataset.hpp"
#include "petlab/train/trainer.hpp"

namespace petlab::cli {

namespace fs = std::filesystem;

/// "all" or a zero-based fold index; out-of-range indices throw ConfigError.
std::vector<std::size_t> select_folds(const std::string& spec, std::size_t n_subjects);

struct SimulateOptions {
  io::ExperimentConfig config;
  fs::path out;
  bool force = false;
  std::size_t jobs = 0;
};

/// Builds the dataset and writes it to `out` (plus a copy of the config).
/// An existing non-empty directory is refused unless `force`.
recon::Dataset cmd_simulate(const SimulateOptions& options);

/// One trained and evaluated LOOCV fold.
struct FoldResult {
  std::size_t fold = 0;
  std::string test_subject;
  std::size_t n_params = 0;
  train::TrainResult training;
  train::EvaluationResult evaluation;
};

/// Trains a fresh network for fold `fold` of `dataset` and evaluates it on
/// the held-out subject. When `out` is set, writes checkpoint/,
/// history.csv and metrics.csv there.
FoldResult run_fold(const recon::Dataset& dataset, const io::ExperimentConfig& config, std::size_t fold,
                    const std::optional<fs::path>& out = std::nullopt);

struct TrainOptions {
  io::ExperimentConfig config;
  fs::path dataset;
  fs::path out;
  std::string folds = "all";
  bool force = false;
  std::size_t jobs = 1;
};

/// Runs the selected folds into out/fold_XX and writes out/metrics.csv for
/// the folds that completed. Throws RuntimeFailure if any fold failed.
std::vector<FoldResult> cmd_train(const TrainOptions& options);

struct EvaluateOptions {
  fs::path checkpoint;
  fs::path dataset;
  fs::path out_csv;
  std::string subject; // default: the checkpoint's held-out subject
};

std::vector<metrics::MetricsRecord> cmd_evaluate(const EvaluateOptions& options);

enum class Study { skip, slices, depth, loss };
Study parse_study(const std::string& name);
std::string to_string(Study study);

struct Variant {
  std::string name;
  io::ExperimentConfig config;
  std::string skip_reason; // non-empty when the variant cannot run
};

/// skip: 4 skip modes; slices: 1, 3, 5, 7; depth: n_p 2..5 x n_c 1..3;
/// loss: l1, mse, ssim, msssim.
std::vector<Variant> study_variants(Study study, const io::ExperimentConfig& base);

/// Empty when the encoder depth fits the slice size, else the reason.
std::string depth_infeasibility(std::size_t n_p, std::size_t height, std::size_t width);

struct AblateOptions {
  Study study = Study::skip;
  io::ExperimentConfig config;
  fs::path dataset;
  fs::path out;
  std::string folds = "all";
  bool force = false;
  std::size_t jobs = 1;
};

/// In-memory form used by cmd_ablate and by tests.
std::vector<io::StudyRow> run_study(Study study, const recon::Dataset& dataset, const io::ExperimentConfig& config,
                                    const std::vector<std::size_t>& folds, std::size_t jobs,
                                    const std::optional<fs::path>& out = std::nullopt);

/// Writes out/<study>.csv. Throws RuntimeFailure if any variant failed.
std::vector<io::StudyRow> cmd_ablate(const AblateOptions& options);

struct Summary {
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};
Summary summarize(const std::vector<double>& values);

struct AggregateRow {
  std::string source; // study name or "metrics"
  std::string group;  // variant, or method@drf
  std::size_t n = 0;
  std::size_t n_skipped = 0;
  Summary nrmse, psnr_db, ssim;
};

inline constexpr const char* kSummaryHeader =
    "source,group,n,n_skipped,nrmse_mean,nrmse_std,nrmse_min,nrmse_max,psnr_db_mean,psnr_db_std,psnr_db_min,"
    "psnr_db_max,ssim_mean,ssim_std,ssim_min,ssim_max";

/// One row per (study, variant), in order of first appearance.
std::vector<AggregateRow> aggregate_study(const std::vector<io::StudyRow>& rows);
/// One row per (method, drf) over the per-subject aggregate rows.
std::vector<AggregateRow> aggregate_metrics(const std::vector<metrics::MetricsRecord>& rows);
std::string summary_csv(const std::vector<AggregateRow>& rows);

struct ReportOptions {
  std::vector<fs::path> csvs;
  fs::path out;
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> dataset;
  bool force = false;
};

/// Writes out/summary.csv and, given a checkpoint and dataset, greyscale
/// dumps of the held-out subject's central slice to out/images/.
std::vector<AggregateRow> cmd_report(const ReportOptions& options);

} // namespace petlab::cli
