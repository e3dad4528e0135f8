#include "petlab/io/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "petlab/errors.hpp"

namespace petlab::io {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string clean_field(std::string s) {
  for (auto& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  if (line != header) throw DataError(path.string() + ": unexpected header '" + line + "'");
  const std::size_t n = split_line(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_line(line);
    if (f.size() != n) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(n) + " fields");
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

std::size_t parse_size(const std::string& text, const std::string& where) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) throw DataError(where + ": bad integer '" + text + "'");
  return v;
}

} // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

double parse_number(const std::string& text, const std::string& where) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) throw DataError(where + ": bad number '" + text + "'");
  return v;
}

std::string metrics_csv(const std::vector<metrics::MetricsRecord>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", clean_field(r.subject), r.slice < 0 ? "mean" : std::to_string(r.slice),
                       clean_field(r.method), format_number(r.drf), format_number(r.nrmse), format_number(r.psnr_db),
                       format_number(r.ssim));
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<metrics::MetricsRecord>& rows) {
  write_text(path, metrics_csv(rows));
}

std::vector<metrics::MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::vector<metrics::MetricsRecord> out;
  const auto where = path.string();
  for (const auto& f : read_table(path, kMetricsHeader)) {
    metrics::MetricsRecord r;
    r.subject = f[0];
    r.slice = f[1] == "mean" ? -1 : static_cast<int>(parse_size(f[1], where));
    r.method = f[2];
    r.drf = parse_number(f[3], where);
    r.nrmse = parse_number(f[4], where);
    r.psnr_db = parse_number(f[5], where);
    r.ssim = parse_number(f[6], where);
    out.push_back(r);
  }
  return out;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<train::HistoryRecord>& history) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& h : history) {
    out += fmt::format("{},{},{},", h.epoch, format_number(h.lr), format_number(h.train_loss));
    out += h.validated ? fmt::format("{},{},{}\n", format_number(h.val_nrmse), format_number(h.val_psnr),
                                     format_number(h.val_ssim))
                       : std::string(",,\n");
  }
  write_text(path, out);
}

std::string study_csv(const std::vector<StudyRow>& rows) {
  std::string out = std::string(kStudyHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", clean_field(r.study), clean_field(r.variant), r.fold,
                       clean_field(r.subject), clean_field(r.status), clean_field(r.reason), r.n_params,
                       format_number(r.nrmse), format_number(r.psnr_db), format_number(r.ssim),
                       format_number(r.lowdose_nrmse), format_number(r.lowdose_psnr_db), format_number(r.lowdose_ssim));
  }
  return out;
}

void write_study_csv(const std::filesystem::path& path, const std::vector<StudyRow>& rows) {
  write_text(path, study_csv(rows));
}

std::vector<StudyRow> read_study_csv(const std::filesystem::path& path) {
  std::vector<StudyRow> out;
  const auto where = path.string();
  for (const auto& f : read_table(path, kStudyHeader)) {
    StudyRow r;
    r.study = f[0];
    r.variant = f[1];
    r.fold = parse_size(f[2], where);
    r.subject = f[3];
    r.status = f[4];
    r.reason = f[5];
    r.n_params = parse_size(f[6], where);
    r.nrmse = parse_number(f[7], where);
    r.psnr_db = parse_number(f[8], where);
    r.ssim = parse_number(f[9], where);
    r.lowdose_nrmse = parse_number(f[10], where);
    r.lowdose_psnr_db = parse_number(f[11], where);
    r.lowdose_ssim = parse_number(f[12], where);
    if (r.status != "ok" && r.status != "skipped" && r.status != "failed") throw DataError(where + ": bad status '" + r.status + "'");
    out.push_back(std::move(r));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace petlab::io
