#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "petlab/cli/commands.hpp"
#include "petlab/errors.hpp"

using namespace petlab;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, config_error = 1, data_error = 2, runtime_failure = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool force = false;
  std::size_t jobs = 1;
};

io::ExperimentConfig load(const Common& c) {
  const auto base = c.config.empty() ? io::ExperimentConfig{} : io::load_config(c.config);
  return io::with_overrides(base, c.overrides);
}

void add_config(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (INI)");
  cmd->add_option("--set", c.overrides, "Override a config value, section.key=value")->take_all();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic low-dose PET denoising lab"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  Common sim, tr, ab;
  std::string dataset, folds = "all";
  std::string checkpoint, subject, study;
  std::vector<std::string> csvs;

  auto* simulate = app.add_subcommand("simulate", "Simulate phantoms, sinograms and reconstructions");
  add_config(simulate, sim);
  simulate->add_option("--out", sim.out, "Dataset directory (default: paths.dataset)");
  simulate->add_flag("--force", sim.force, "Overwrite an existing directory");
  simulate->add_option("--jobs", sim.jobs, "Worker threads")->default_val(0);

  auto* train = app.add_subcommand("train", "Train LOOCV folds");
  add_config(train, tr);
  train->add_option("--dataset", dataset, "Dataset directory (default: paths.dataset)");
  train->add_option("--out", tr.out, "Run directory (default: paths.output/train)");
  train->add_option("--fold", folds, "Fold index or 'all'")->default_val("all");
  train->add_flag("--force", tr.force, "Overwrite existing fold directories");
  train->add_option("--jobs", tr.jobs, "Folds trained in parallel")->default_val(1);

  Common ev;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset subject");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  evaluate->add_option("--dataset", dataset, "Dataset directory")->required();
  evaluate->add_option("--out", ev.out, "Metrics CSV path")->required();
  evaluate->add_option("--subject", subject, "Subject id (default: the checkpoint's held-out subject)");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation study");
  ablate->add_option("study", study, "skip, slices, depth or loss")
      ->required()
      ->check(CLI::IsMember({"skip", "slices", "depth", "loss"}));
  add_config(ablate, ab);
  ablate->add_option("--dataset", dataset, "Dataset directory (default: paths.dataset)");
  ablate->add_option("--out", ab.out, "Output directory (default: paths.output/ablate)");
  ablate->add_option("--fold", folds, "Fold index or 'all'")->default_val("all");
  ablate->add_flag("--force", ab.force, "Overwrite an existing study CSV");
  ablate->add_option("--jobs", ab.jobs, "Runs in parallel")->default_val(1);

  Common rep;
  std::string rep_dataset;
  auto* report = app.add_subcommand("report", "Aggregate study or metrics CSVs and dump images");
  report->add_option("csv", csvs, "Study or metrics CSV files")->required();
  report->add_option("--out", rep.out, "Report directory")->required();
  report->add_option("--checkpoint", checkpoint, "Checkpoint for image dumps");
  report->add_option("--dataset", rep_dataset, "Dataset for image dumps");
  report->add_flag("--force", rep.force, "Overwrite an existing directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::config_error;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (simulate->parsed()) {
      const auto c = load(sim);
      cli::cmd_simulate({c, sim.out.empty() ? fs::path(c.dataset_dir) : fs::path(sim.out), sim.force, sim.jobs});
    } else if (train->parsed()) {
      const auto c = load(tr);
      cli::cmd_train({c, dataset.empty() ? fs::path(c.dataset_dir) : fs::path(dataset),
                      tr.out.empty() ? fs::path(c.output_dir) / "train" : fs::path(tr.out), folds, tr.force, tr.jobs});
    } else if (evaluate->parsed()) {
      cli::cmd_evaluate({checkpoint, dataset, ev.out, subject});
    } else if (ablate->parsed()) {
      const auto c = load(ab);
      cli::cmd_ablate({cli::parse_study(study), c, dataset.empty() ? fs::path(c.dataset_dir) : fs::path(dataset),
                       ab.out.empty() ? fs::path(c.output_dir) / "ablate" : fs::path(ab.out), folds, ab.force,
                       ab.jobs});
    } else if (report->parsed()) {
      cli::ReportOptions o;
      o.csvs.assign(csvs.begin(), csvs.end());
      o.out = rep.out;
      o.force = rep.force;
      if (!checkpoint.empty()) o.checkpoint = checkpoint;
      if (!rep_dataset.empty()) o.dataset = rep_dataset;
      cli::cmd_report(o);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return Exit::config_error;
  } catch (const RuntimeFailure& e) {
    spdlog::error("runtime failure: {}", e.what());
    return Exit::runtime_failure;
  } catch (const Error& e) {
    spdlog::error("data error: {}", e.what());
    return Exit::data_error;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("data error: {}", e.what());
    return Exit::data_error;
  } catch (const std::exception& e) {
    spdlog::error("runtime failure: {}", e.what());
    return Exit::runtime_failure;
  }
  return Exit::ok;
}
