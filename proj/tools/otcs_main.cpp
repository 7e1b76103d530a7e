#include "otcs/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

namespace {

int report_error(const std::string& kind, const std::string& message) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return 1;
}

nlohmann::json summary(nlohmann::json j) {
  j.erase("config");
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-transport-guided conditional score-based generation"};
  app.require_subcommand(1);

  std::string config_path, log_level = "info";
  std::vector<std::string> overrides;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")->capture_default_str();

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override a config key (key=value), repeatable");
  };

  auto* fit_ot = app.add_subcommand("fit-ot", "train dual potentials");
  common(fit_ot);

  std::string potentials;
  auto* oracle = app.add_subcommand("oracle", "exact discrete plan and comparison with trained potentials");
  common(oracle);
  oracle->add_option("--potentials", potentials, "potentials checkpoint to compare against");

  bool unconditional = false;
  auto* fit_score = app.add_subcommand("fit-score", "train the conditional score model");
  common(fit_score);
  fit_score->add_option("--potentials", potentials, "potentials checkpoint (default: output_dir/checkpoints)");
  fit_score->add_flag("--unconditional", unconditional, "train an unconditional model of the target instead");

  otcs::SampleRequest req;
  auto* sample = app.add_subcommand("sample", "draw conditional samples");
  common(sample);
  sample->add_option("--model", req.model, "score checkpoint")->required()->check(CLI::ExistingFile);
  sample->add_option("--conditions", req.conditions, "CSV of condition points")->required()->check(CLI::ExistingFile);
  sample->add_option("-o,--output", req.output, "samples CSV")->required();
  sample->add_option("-n,--n-samples", req.n_samples, "samples per condition")->capture_default_str();
  sample->add_option("--potentials", req.potentials, "guide an unconditional model with these potentials");

  auto* fig2 = app.add_subcommand("reproduce-fig2", "epsilon sweep of OTCS against SCONES on the 1-D toy");
  common(fig2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", e.what()) + 1;
  }

  try {
    spdlog::set_default_logger(spdlog::stderr_color_mt("otcs"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    const otcs::ExperimentConfig cfg = otcs::ExperimentConfig::load(config_path, overrides);
    nlohmann::json out;
    if (*fit_ot) {
      out = otcs::cmd_fit_ot(cfg);
    } else if (*oracle) {
      out = otcs::cmd_oracle(cfg, potentials);
    } else if (*fit_score) {
      if (potentials.empty() && !unconditional) potentials = otcs::potentials_path(cfg);
      out = otcs::cmd_fit_score(cfg, potentials, unconditional);
    } else if (*sample) {
      out = otcs::cmd_sample(cfg, req);
    } else {
      out = otcs::cmd_reproduce_fig2(cfg);
    }
    std::cout << summary(out).dump(2) << '\n';
  } catch (const otcs::Error& e) {
    return report_error(otcs::to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
