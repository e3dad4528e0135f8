#include <cmath>
#include <filesystem>

#include <fmt/format.h>
#include <json.hpp>

#include "doctest.h"
#include "petlab/cli/commands.hpp"
#include "petlab/io/checkpoint.hpp"
#include "petlab/io/pgm.hpp"

using namespace petlab;
using namespace petlab::cli;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("petlab_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

io::ExperimentConfig tiny_config(std::size_t n_subjects) {
  return io::parse_config(R"(
[phantom]
n_subjects = )" + std::to_string(n_subjects) + R"(
depth = 8
height = 32
width = 32
seed = 5
[acquisition]
n_angles = 48
n_bins = 48
seed = 6
[network]
n_p = 2
n_c = 1
base_channels = 8
seed = 1
[train]
epochs = 2
batch_size = 4
seed = 2
)");
}

} // namespace

TEST_CASE("fold selection") {
  CHECK(select_folds("all", 3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(select_folds("1", 3) == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(select_folds("3", 3), ConfigError);
  CHECK_THROWS_AS(select_folds("one", 3), ConfigError);
  CHECK_THROWS_AS(select_folds("-1", 3), ConfigError);
}

TEST_CASE("study variants") {
  io::ExperimentConfig c;
  CHECK(study_variants(Study::skip, c).size() == 4);
  CHECK(study_variants(Study::slices, c).size() == 4);
  CHECK(study_variants(Study::loss, c).size() == 4);
  const auto depth = study_variants(Study::depth, c);
  REQUIRE(depth.size() == 12);
  std::size_t skipped = 0;
  for (const auto& v : depth) {
    if (!v.skip_reason.empty()) {
      ++skipped;
      CHECK(v.config.network.n_p == 5);
    }
  }
  CHECK(skipped == 3);
  CHECK(depth_infeasibility(4, 64, 64).empty());
  CHECK(depth_infeasibility(5, 64, 64).find("2x2") != std::string::npos);
  CHECK(depth_infeasibility(3, 36, 36).find("divisible") != std::string::npos);
  CHECK(parse_study("depth") == Study::depth);
  CHECK_THROWS_AS(parse_study("width"), ConfigError);
}

TEST_CASE("summary statistics") {
  const auto s = summarize({1.0, 2.0, 4.0});
  CHECK(s.mean == doctest::Approx(7.0 / 3.0));
  CHECK(s.std == doctest::Approx(std::sqrt((16.0 / 9 + 1.0 / 9 + 25.0 / 9) / 2.0)));
  CHECK(s.min == 1.0);
  CHECK(s.max == 4.0);
  CHECK(summarize({3.0}).std == 0.0);

  std::vector<io::StudyRow> rows;
  for (const char* v : {"a", "b", "a", "b", "c"}) {
    io::StudyRow r;
    r.study = "skip";
    r.variant = v;
    r.status = std::string(v) == "c" ? "skipped" : "ok";
    r.psnr_db = std::string(v) == "a" ? 10.0 : 20.0;
    rows.push_back(r);
  }
  const auto agg = aggregate_study(rows);
  REQUIRE(agg.size() == 3);
  CHECK(agg[0].group == "a");
  CHECK(agg[0].n == 2);
  CHECK(agg[1].psnr_db.mean == 20.0);
  CHECK(agg[2].n == 0);
  CHECK(agg[2].n_skipped == 1);
}

TEST_CASE("simulate, train, evaluate and report") {
  TempDir dir("pipeline");
  auto config = tiny_config(2);
  config.drfs = {4.0, 20.0, 200.0};
  const auto ds = cmd_simulate({config, dir.path / "data", false, 1});
  CHECK_THROWS_AS(cmd_simulate({config, dir.path / "data", false, 1}), DataError);
  const auto hash = io::read_text(dir.path / "data" / "manifest.json");
  cmd_simulate({config, dir.path / "data", true, 1});
  CHECK(io::read_text(dir.path / "data" / "manifest.json") == hash);
  const auto manifest = nlohmann::json::parse(hash);
  std::size_t volumes = 0;
  for (const auto& s : manifest.at("subjects")) volumes += 1 + s.at("low_dose").size();
  CHECK(volumes == 2 * (1 + 3));

  const auto results = cmd_train({config, dir.path / "data", dir.path / "run", "all", false, 1});
  CHECK(results.size() == 2);
  CHECK(fs::exists(dir.path / "run" / "fold_00" / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(dir.path / "run" / "fold_01" / "checkpoint" / "manifest.json"));
  CHECK(io::read_text(dir.path / "run" / "fold_00" / "history.csv").rfind(io::kHistoryHeader, 0) == 0);
  CHECK_THROWS_AS(cmd_train({config, dir.path / "data", dir.path / "run", "0", false, 1}), DataError);
  CHECK_THROWS_AS(cmd_train({config, dir.path / "missing", dir.path / "run2", "0", false, 1}), DataError);

  const auto rows = cmd_evaluate({dir.path / "run" / "fold_01" / "checkpoint", dir.path / "data", dir.path / "ev.csv", ""});
  for (const auto& method : {"lowdose", "proposed"}) {
    double sum = 0.0, mean = -1.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.method != method) continue;
      if (r.slice < 0) {
        mean = r.psnr_db;
      } else {
        sum += r.psnr_db;
        ++n;
      }
    }
    CHECK(n == ds.subjects[1].depth());
    CHECK(std::abs(mean - sum / double(n)) < 1e-9);
  }
  CHECK(io::read_metrics_csv(dir.path / "ev.csv").size() == rows.size());

  auto other = tiny_config(2);
  other.phantom.height = other.phantom.width = 48;
  other.phantom.seed = 9;
  cmd_simulate({other, dir.path / "data48", false, 1});
  CHECK_THROWS_WITH_AS(
      cmd_evaluate({dir.path / "run" / "fold_01" / "checkpoint", dir.path / "data48", dir.path / "ev48.csv", ""}),
      doctest::Contains("32x32"), DataError);

  ReportOptions rep;
  rep.csvs = {dir.path / "run" / "metrics.csv"};
  rep.out = dir.path / "report";
  rep.checkpoint = dir.path / "run" / "fold_00" / "checkpoint";
  rep.dataset = dir.path / "data";
  const auto agg = cmd_report(rep);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].group == "lowdose@drf200");
  CHECK(agg[0].n == 2);

  // the error map's brightest pixel sits at the largest |prediction - reference|
  auto ckpt = io::load_checkpoint(*rep.checkpoint);
  const auto& s = ds.subjects[0];
  const std::size_t z = s.depth() / 2;
  const auto pred = train::predict_volume(ckpt.network, s.low(200.0)).slice(z);
  const auto ref = s.standard.slice(z);
  std::size_t best = 0;
  float best_err = -1.0f;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const float e = std::abs(pred.pixels[i] - ref.pixels[i]);
    if (e > best_err) {
      best_err = e;
      best = i;
    }
  }
  std::size_t h = 0, w = 0;
  const auto px = io::read_pgm16(rep.out / "images" / fmt::format("{}_z{:02}_error_prediction.pgm", s.id, z), h, w);
  CHECK(px[best] == 65535);
  CHECK(io::error_map(ref, ref).pixels == std::vector<float>(ref.size(), 0.0f));

  rep.out = dir.path / "report";
  CHECK_THROWS_AS(cmd_report(rep), DataError);
  io::write_text(dir.path / "empty.csv", std::string(io::kStudyHeader) + "\n");
  CHECK_THROWS_AS(cmd_report({{dir.path / "empty.csv"}, dir.path / "r2", {}, {}, false}), DataError);
}

TEST_CASE("ablation rows are complete and deterministic") {
  const auto config = tiny_config(2);
  const auto ds = recon::build_dataset(recon::generate_phantoms(config.phantom), config.acquisition, config.drfs,
                                       config.recon, 1);
  const auto a = run_study(Study::skip, ds, config, {0}, 1);
  const auto b = run_study(Study::skip, ds, config, {0}, 1);
  CHECK(io::study_csv(a) == io::study_csv(b));
  REQUIRE(a.size() == 4);
  for (const auto& r : a) CHECK(r.status == "ok");
  CHECK(a[0].psnr_db != a[3].psnr_db);
  CHECK(aggregate_study(a).size() == 4);

  const auto depth = run_study(Study::depth, ds, config, {0, 1}, 1);
  CHECK(depth.size() == 24);
  for (const auto& r : depth) {
    if (r.status == "skipped") CHECK_FALSE(r.reason.empty());
    else CHECK(r.status == "ok");
  }
}
