#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fpk/conditioning.hpp"
#include "fpk/featstore.hpp"
#include "fpk/probe.hpp"
#include "fpk/protocols.hpp"

namespace fpk {

using MessageSink = std::function<void(std::string_view line)>;

struct ExternalSet {
  std::string name;
  std::filesystem::path features;
  std::filesystem::path manifest;
};

// Flat JSON document; relative paths resolve against the config file's
// directory.
struct ExperimentConfig {
  std::filesystem::path features_path;
  std::filesystem::path manifest_path;
  std::optional<std::filesystem::path> affine_path;
  std::vector<ExternalSet> externals;
  std::vector<ConditionKind> conditions = all_conditions();
  std::vector<std::string> protocols = {"ID", "LOMO", "XD"};
  std::vector<Manipulation> held_out = standard_manipulations();
  ProbeConfig probe;
  double ln_eps = 1e-6;
  double pca_eps = 1e-5;
  std::optional<std::size_t> pca_components;
  std::size_t n_boot = 1000;
  double ci_level = 0.95;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  bool wants(std::string_view protocol) const;
  ConditionerConfig conditioner(ConditionKind kind) const;
  // Throws ConfigError when a referenced input does not exist or a value is
  // out of range.
  void validate() const;
};

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Diagnostic {
  bool ok = true;
  std::string check;
  std::string location;
  std::string detail;
};

// Feature digest, manifest hash and invariants, pairing, ID and LOMO
// feasibility, external sets.
std::vector<Diagnostic> validate_experiment(const ExperimentConfig& config);
// Either path may be empty. LOMO feasibility is checked for `held_out` when
// a manifest is given.
std::vector<Diagnostic> validate_files(const std::filesystem::path& features, const std::filesystem::path& manifest,
                                       std::span<const Manipulation> held_out = {});

struct SweepOptions {
  bool force = false;
  MessageSink log;
};

struct SweepSummary {
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;
};

// Every condition x protocol job; completed jobs whose stamp and outputs
// still match are skipped unless `force`.
SweepSummary run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

// Single-step commands over the ID split; they write the same files the ID
// and XD sweep jobs write.
std::vector<ConditionerState> fit_conditioners(const ExperimentConfig& config, const MessageSink& log = {});
std::vector<LinearProbe> train_probes(const ExperimentConfig& config, const MessageSink& log = {});
std::vector<ScoreArtifact> evaluate_probes(const ExperimentConfig& config, const MessageSink& log = {});

// Output layout helpers.
std::filesystem::path artifact_path(const std::filesystem::path& out, ConditionKind kind, std::string_view fold);
std::filesystem::path metrics_path(const std::filesystem::path& out, ConditionKind kind, std::string_view fold);
std::filesystem::path roc_path(const std::filesystem::path& out, ConditionKind kind, std::string_view fold);
std::filesystem::path probe_path(const std::filesystem::path& out, ConditionKind kind, std::string_view fold);
std::filesystem::path state_path(const std::filesystem::path& out, ConditionKind kind, std::string_view fold);

std::string roc_csv(const std::vector<RocPoint>& points);
std::string format_double(double v);

}  // namespace fpk
