// fpk command-line front end. Links only the C interface.
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "fpk/fpk.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitJobFailures = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool force = false;
  std::string condition;
  std::size_t jobs = 0;
  CLI::Option* seed_opt = nullptr;
};

void print_line(const char* line, void*) { std::printf("%s\n", line); }

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* cfg = cmd->add_option("--config", c.config, "Experiment config (JSON)");
  if (config_required) cfg->required();
  cmd->add_option("--output-dir", c.output_dir, "Override the config's output directory");
  c.seed_opt = cmd->add_option("--seed", c.seed, "Override the experiment seed");
  cmd->add_flag("--force", c.force, "Re-run jobs even when their outputs are current");
}

fpk_command_options options(const Common& c) {
  fpk_command_options o;
  fpk_command_options_init(&o);
  o.config_path = c.config.c_str();
  o.output_dir = c.output_dir.empty() ? nullptr : c.output_dir.c_str();
  o.override_seed = c.seed_opt && c.seed_opt->count() > 0;
  o.seed = c.seed;
  o.force = c.force ? 1 : 0;
  o.jobs = c.jobs;
  o.condition = c.condition.empty() ? nullptr : c.condition.c_str();
  o.log = print_line;
  return o;
}

// Failures while computing map to 1; bad or missing inputs map to 2.
int report_error(fpk_status s) {
  std::fprintf(stderr, "error: %s\n", fpk_last_error());
  switch (s) {
    case FPK_ERR_INTERNAL:
    case FPK_ERR_NON_FINITE_LOSS:
    case FPK_ERR_EIGEN_FAILURE:
      return kExitJobFailures;
    default:
      return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frozen-feature linear-probe harness"};
  app.set_version_flag("--version", std::string(fpk_version()));
  app.require_subcommand(1);

  Common validate, fit, train, evaluate, sweep, report;
  std::string features, manifest;
  auto* c_validate = app.add_subcommand("validate", "Check feature digests, manifest hashes and split invariants");
  add_common(c_validate, validate, false);
  c_validate->add_option("--features", features, "FPK1 feature file");
  c_validate->add_option("--manifest", manifest, "Sample manifest CSV");

  auto* c_fit = app.add_subcommand("fit-conditioner", "Fit conditioners on the ID train split");
  add_common(c_fit, fit);
  c_fit->add_option("--condition", fit.condition, "Restrict to one condition");

  auto* c_train = app.add_subcommand("train", "Train ID probes with checkpoint selection");
  add_common(c_train, train);
  c_train->add_option("--condition", train.condition, "Restrict to one condition");

  auto* c_eval = app.add_subcommand("evaluate", "Score trained ID probes on the test and external sets");
  add_common(c_eval, evaluate);
  c_eval->add_option("--condition", evaluate.condition, "Restrict to one condition");

  auto* c_sweep = app.add_subcommand("sweep", "Run every condition x protocol job");
  add_common(c_sweep, sweep);
  c_sweep->add_option("--condition", sweep.condition, "Restrict to one condition");
  c_sweep->add_option("--jobs", sweep.jobs, "Concurrent jobs")->check(CLI::PositiveNumber);

  auto* c_report = app.add_subcommand("report", "Write CSV tables from saved score artifacts");
  add_common(c_report, report, false);

  std::string synth_dir, preset = "shift";
  std::uint64_t synth_seed = 7;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic fixture and config");
  c_synth->add_option("dir", synth_dir, "Destination directory")->required();
  c_synth->add_option("--preset", preset, "shift or separable")->check(CLI::IsMember({"shift", "separable"}));
  c_synth->add_option("--seed", synth_seed, "Fixture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (c_validate->parsed()) {
    int ok = 0;
    fpk_status s;
    if (!validate.config.empty()) {
      auto o = options(validate);
      s = fpk_validate_config(&o, &ok);
    } else if (!features.empty() || !manifest.empty()) {
      s = fpk_validate_files(features.empty() ? nullptr : features.c_str(),
                             manifest.empty() ? nullptr : manifest.c_str(), print_line, nullptr, &ok);
    } else {
      std::fprintf(stderr, "error: validate needs --config or --features/--manifest\n");
      return kExitConfig;
    }
    if (s != FPK_OK) {
      std::fprintf(stderr, "error: %s\n", fpk_last_error());
      return kExitConfig;
    }
    return ok ? kExitOk : kExitConfig;
  }

  if (c_sweep->parsed()) {
    auto o = options(sweep);
    fpk_sweep_summary summary{};
    if (auto s = fpk_sweep(&o, &summary); s != FPK_OK) {
      std::fprintf(stderr, "error: %s\n", fpk_last_error());
      return kExitConfig;
    }
    std::printf("executed %zu, skipped %zu, failed %zu\n", summary.executed, summary.skipped, summary.failed);
    return summary.failed ? kExitJobFailures : kExitOk;
  }

  if (c_report->parsed()) {
    fpk_status s;
    if (!report.config.empty()) {
      auto o = options(report);
      s = fpk_report_config(&o);
    } else if (!report.output_dir.empty()) {
      s = fpk_report(report.output_dir.c_str(), print_line, nullptr);
    } else {
      std::fprintf(stderr, "error: report needs --config or --output-dir\n");
      return kExitConfig;
    }
    return s == FPK_OK ? kExitOk : report_error(s);
  }

  if (c_synth->parsed()) {
    if (auto s = fpk_synth_fixture(synth_dir.c_str(), preset.c_str(), synth_seed, print_line, nullptr); s != FPK_OK)
      return report_error(s);
    return kExitOk;
  }

  fpk_status (*cmd)(const fpk_command_options*) = nullptr;
  const Common* common = nullptr;
  if (c_fit->parsed()) cmd = fpk_fit_conditioners, common = &fit;
  if (c_train->parsed()) cmd = fpk_train, common = &train;
  if (c_eval->parsed()) cmd = fpk_evaluate, common = &evaluate;
  auto o = options(*common);
  if (auto s = cmd(&o); s != FPK_OK) return report_error(s);
  return kExitOk;
}
