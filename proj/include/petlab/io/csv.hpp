#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "petlab/metrics/quality.hpp"
#include "petlab/train/trainer.hpp"

namespace petlab::io {

inline constexpr const char* kMetricsHeader = "subject,slice,method,drf,nrmse,psnr_db,ssim";
inline constexpr const char* kHistoryHeader = "epoch,lr,train_loss,val_nrmse,val_psnr,val_ssim";
inline constexpr const char* kStudyHeader =
    "study,variant,fold,subject,status,reason,n_params,nrmse,psnr_db,ssim,lowdose_nrmse,lowdose_psnr_db,lowdose_ssim";

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for
/// non-finite values. Independent of the locale.
std::string format_number(double v);
double parse_number(const std::string& text, const std::string& where);

/// Aggregate rows (slice < 0) are written with slice "mean".
std::string metrics_csv(const std::vector<metrics::MetricsRecord>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<metrics::MetricsRecord>& rows);
std::vector<metrics::MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

/// Epochs without validation leave the val_* fields empty.
void write_history_csv(const std::filesystem::path& path, const std::vector<train::HistoryRecord>& history);

struct StudyRow {
  std::string study;
  std::string variant;
  std::size_t fold = 0;
  std::string subject;
  std::string status; // "ok", "skipped" or "failed"
  std::string reason;
  std::size_t n_params = 0;
  double nrmse = 0.0, psnr_db = 0.0, ssim = 0.0;
  double lowdose_nrmse = 0.0, lowdose_psnr_db = 0.0, lowdose_ssim = 0.0;
};

std::string study_csv(const std::vector<StudyRow>& rows);
void write_study_csv(const std::filesystem::path& path, const std::vector<StudyRow>& rows);
std::vector<StudyRow> read_study_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace petlab::io
