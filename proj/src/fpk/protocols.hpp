#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fpk/conditioning.hpp"
#include "fpk/featstore.hpp"
#include "fpk/metrics.hpp"
#include "fpk/probe.hpp"

namespace fpk {

enum class ProtocolKind { kID, kLOMO, kCrossDataset };

std::string_view protocol_kind_name(ProtocolKind kind) noexcept;  // "ID", "LOMO", "CROSS_DATASET"

struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::kID;
  std::optional<Manipulation> held_out;      // LOMO only
  std::optional<std::string> external_source;  // CROSS_DATASET only

  static ProtocolSpec id() { return {}; }
  static ProtocolSpec lomo(Manipulation held_out) { return {ProtocolKind::kLOMO, std::move(held_out), std::nullopt}; }
  static ProtocolSpec cross_dataset(std::string source) {
    return {ProtocolKind::kCrossDataset, std::nullopt, std::move(source)};
  }

  void validate() const;
  // "ID", "LOMO-DF", "XD-<source>".
  std::string fold_name() const;
  friend bool operator==(const ProtocolSpec&, const ProtocolSpec&) = default;
};

// Record positions (indices into SampleManifest::records) for each split.
struct FoldPlan {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  std::vector<std::size_t> test_rows;
  std::string description;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

FoldPlan build_id(const SampleManifest& manifest);
FoldPlan build_lomo(const SampleManifest& manifest, const Manipulation& held_out);
FoldPlan build_cross_dataset(const SampleManifest& external);

struct VideoScores {
  std::vector<std::string> video_ids;  // first-appearance order
  std::vector<double> scores;
  std::vector<int> labels;

  ScoredSet as_scored_set() const { return {scores, labels, ScoreUnit::kVideo}; }
};

// Arithmetic mean of each video's frame scores.
VideoScores aggregate_video(std::span<const double> frame_scores, std::span<const std::string> video_ids,
                            std::span<const int> labels);
VideoScores aggregate_video(std::span<const double> frame_scores, const SampleManifest& manifest,
                            std::span<const std::size_t> positions);

struct FrameScore {
  std::uint64_t row = 0;
  double score = 0.0;
  friend bool operator==(const FrameScore&, const FrameScore&) = default;
};

struct VideoScore {
  std::string video_id;
  int label = 0;
  double score = 0.0;
  friend bool operator==(const VideoScore&, const VideoScore&) = default;
};

struct Provenance {
  std::string manifest_hash;
  std::string probe_digest;
  std::string conditioner_digest;
  std::string fold_description;
  std::optional<double> val_auc;
  std::vector<std::string> pooled_from;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ScoreArtifact {
  ProtocolSpec protocol;
  bool pooled = false;  // concatenation of LOMO folds
  ConditionKind condition = ConditionKind::kLN;
  std::string fold;
  Provenance provenance;
  std::vector<FrameScore> frames;
  std::vector<VideoScore> videos;

  ScoredSet video_set() const;
  friend bool operator==(const ScoreArtifact&, const ScoreArtifact&) = default;
};

nlohmann::json artifact_to_json(const ScoreArtifact& artifact);
ScoreArtifact artifact_from_json(const nlohmann::json& doc);
void write_artifact(const ScoreArtifact& artifact, const std::filesystem::path& path);
ScoreArtifact read_artifact(const std::filesystem::path& path);

nlohmann::json metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& doc);

// Probe seed for one (fold, condition) job, independent of scheduling.
std::uint64_t job_seed(std::uint64_t experiment_seed, std::string_view fold, ConditionKind kind);

struct RunOptions {
  ConditionerConfig conditioner;
  ProbeConfig probe;
  std::optional<std::filesystem::path> cache_dir;
};

struct FoldResult {
  ScoreArtifact artifact;
  ConditionerState conditioner;
  LinearProbe probe;
};

// Fits the conditioner on the plan's train rows only, trains the probe with
// val-AUC checkpoint selection, and scores the test rows. Uses
// options.probe.seed as given.
FoldResult run_fold(const FeatureMatrix& features, const SampleManifest& manifest, const FoldPlan& plan,
                    const ProtocolSpec& spec, const RunOptions& options);

FoldResult run_id(const FeatureMatrix& features, const SampleManifest& manifest, const RunOptions& options);

struct LomoResult {
  std::vector<FoldResult> folds;
  ScoreArtifact pooled;
};

// One fold per held-out family; fold seeds are job_seed(options.probe.seed, fold, kind).
LomoResult run_lomo(const FeatureMatrix& features, const SampleManifest& manifest,
                    std::span<const Manipulation> held_out, const RunOptions& options);

// Concatenates out-of-fold video and frame scores. Video ids are prefixed
// with "<fold>/" since real test videos appear in every fold.
ScoreArtifact pool_artifacts(std::span<const ScoreArtifact> folds);

// Scores the given rows with a frozen conditioner and probe.
ScoreArtifact score_rows(const FeatureMatrix& features, const SampleManifest& manifest,
                         std::span<const std::size_t> positions, const ConditionerState& conditioner,
                         const LinearProbe& probe, const ProtocolSpec& spec, const std::string& description);

// Test-only transfer: nothing is refit. `name` labels the external set
// (defaults to the first record's source).
ScoreArtifact run_cross_dataset(const FeatureMatrix& external_features, const SampleManifest& external_manifest,
                                const ConditionerState& conditioner, const LinearProbe& probe,
                                std::string_view name = {});

}  // namespace fpk
