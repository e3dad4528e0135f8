#include "petlab/io/dataset_store.hpp"

#include <fstream>

#include <json.hpp>

#include "petlab/errors.hpp"
#include "petlab/io/csv.hpp"
#include "petlab/io/tensor_file.hpp"

namespace petlab::io {
namespace {

using nlohmann::json;

void check_volume(const Volume& v, const json& shape, const std::string& what) {
  const auto s = shape.get<std::vector<std::size_t>>();
  if (s != std::vector<std::size_t>{v.depth, v.height, v.width}) throw DataError(what + ": shape does not match manifest");
}

} // namespace

std::string drf_tag(double drf) { return "drf" + format_number(drf); }

void save_dataset(const std::filesystem::path& dir, const recon::Dataset& dataset,
                  const recon::PhantomConfig& phantom) {
  std::filesystem::create_directories(dir);
  json subjects = json::array();
  for (const auto& s : dataset.subjects) {
    const auto sub = dir / s.id;
    std::filesystem::create_directories(sub);
    write_volume(sub / "phantom.tensor", s.phantom);
    write_volume(sub / "standard.tensor", s.standard);
    json low = json::array();
    for (const auto& l : s.low_dose) {
      const auto file = drf_tag(l.drf) + ".tensor";
      write_volume(sub / file, l.volume);
      low.push_back({{"drf", l.drf}, {"dose_fraction", 1.0 / l.drf}, {"file", s.id + "/" + file}});
    }
    subjects.push_back({{"id", s.id},
                        {"phantom_seed", s.phantom_seed},
                        {"slice_indices", s.slice_indices},
                        {"shape", {s.standard.depth, s.standard.height, s.standard.width}},
                        {"count_scale", s.count_scale},
                        {"phantom", s.id + "/phantom.tensor"},
                        {"standard", s.id + "/standard.tensor"},
                        {"low_dose", low}});
  }
  const json manifest{
      {"format", kDatasetFormat},
      {"phantom",
       {{"n_subjects", phantom.n_subjects},
        {"depth", phantom.depth},
        {"height", phantom.height},
        {"width", phantom.width},
        {"n_lesions", phantom.n_lesions},
        {"seed", phantom.seed}}},
      {"acquisition",
       {{"n_angles", dataset.acquisition.n_angles},
        {"n_bins", dataset.acquisition.n_bins},
        {"total_counts", dataset.acquisition.total_counts},
        {"seed", dataset.acquisition.seed}}},
      {"recon",
       {{"n_subsets", dataset.recon.n_subsets},
        {"n_iterations", dataset.recon.n_iterations},
        {"init_value", dataset.recon.init_value}}},
      {"drfs", dataset.drfs},
      {"subjects", subjects}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_metrics_csv(dir / "baseline.csv", dataset.baseline);
}

StoredDataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw DataError("no dataset manifest at " + path.string());
  json m;
  try {
    m = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.value("format", "") != kDatasetFormat) throw DataError(path.string() + ": not a " + kDatasetFormat + " manifest");

  StoredDataset out;
  try {
    const auto& p = m.at("phantom");
    out.phantom = {p.at("n_subjects").get<std::size_t>(), p.at("depth").get<std::size_t>(),
                   p.at("height").get<std::size_t>(),     p.at("width").get<std::size_t>(),
                   p.at("n_lesions").get<std::size_t>(),  p.at("seed").get<std::uint64_t>()};
    auto& d = out.dataset;
    const auto& a = m.at("acquisition");
    d.acquisition = {a.at("n_angles").get<std::size_t>(), a.at("n_bins").get<std::size_t>(),
                     a.at("total_counts").get<double>(), a.at("seed").get<std::uint64_t>()};
    const auto& r = m.at("recon");
    d.recon = {r.at("n_subsets").get<std::size_t>(), r.at("n_iterations").get<std::size_t>(),
               r.at("init_value").get<double>()};
    d.drfs = m.at("drfs").get<std::vector<double>>();
    for (const auto& js : m.at("subjects")) {
      recon::Subject s;
      s.id = js.at("id").get<std::string>();
      s.phantom_seed = js.at("phantom_seed").get<std::uint64_t>();
      s.slice_indices = js.at("slice_indices").get<std::vector<std::size_t>>();
      s.count_scale = js.at("count_scale").get<double>();
      s.phantom = read_volume(dir / js.at("phantom").get<std::string>());
      s.standard = read_volume(dir / js.at("standard").get<std::string>());
      check_volume(s.phantom, js.at("shape"), s.id + " phantom");
      check_volume(s.standard, js.at("shape"), s.id + " standard");
      for (const auto& jl : js.at("low_dose")) {
        recon::LowDoseVolume l{jl.at("drf").get<double>(), read_volume(dir / jl.at("file").get<std::string>())};
        check_volume(l.volume, js.at("shape"), s.id + " " + drf_tag(l.drf));
        s.low_dose.push_back(std::move(l));
      }
      if (s.slice_indices.size() != s.standard.depth) throw DataError(s.id + ": slice list does not match depth");
      d.subjects.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  auto& d = out.dataset;
  if (d.subjects.size() < 2) throw DataError(path.string() + ": fewer than two subjects");
  for (const auto& s : d.subjects)
    for (double drf : d.drfs) {
      const auto rows = recon::baseline_metrics(s, drf);
      d.baseline.insert(d.baseline.end(), rows.begin(), rows.end());
    }
  return out;
}

} // namespace petlab::io
