#include "fpk/protocols.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include "fpk/bytes.hpp"
#include "fpk/error.hpp"
#include "fpk/rng.hpp"

namespace fpk {

namespace {

using nlohmann::json;

void require_both_classes(const SampleManifest& m, std::span<const std::size_t> rows, std::string_view what) {
  bool pos = false, neg = false;
  for (auto p : rows) (m.records[p].label == 1 ? pos : neg) = true;
  if (!pos || !neg) fail(ErrorCode::kSingleClassSplit, std::string(what) + " split lacks one class");
}

std::vector<std::size_t> row_indices(const SampleManifest& m, std::span<const std::size_t> positions) {
  std::vector<std::size_t> out;
  out.reserve(positions.size());
  for (auto p : positions) out.push_back(static_cast<std::size_t>(m.records.at(p).row_index));
  return out;
}

std::vector<int> labels_of(const SampleManifest& m, std::span<const std::size_t> positions) {
  std::vector<int> out;
  out.reserve(positions.size());
  for (auto p : positions) out.push_back(m.records[p].label);
  return out;
}

std::string manipulation_summary(const SampleManifest& m, std::span<const std::size_t> rows) {
  std::set<std::string> codes;
  for (auto p : rows) codes.insert(m.records[p].manipulation.code());
  std::string out;
  for (const auto& c : codes) out += (out.empty() ? "" : "+") + c;
  return out;
}

}  // namespace

std::string_view protocol_kind_name(ProtocolKind kind) noexcept {
  switch (kind) {
    case ProtocolKind::kID: return "ID";
    case ProtocolKind::kLOMO: return "LOMO";
    case ProtocolKind::kCrossDataset: return "CROSS_DATASET";
  }
  return "?";
}

void ProtocolSpec::validate() const {
  if (held_out.has_value() != (kind == ProtocolKind::kLOMO))
    fail(ErrorCode::kInvalidArgument, "held_out must be set exactly for LOMO");
  if (external_source.has_value() != (kind == ProtocolKind::kCrossDataset))
    fail(ErrorCode::kInvalidArgument, "external_source must be set exactly for CROSS_DATASET");
}

std::string ProtocolSpec::fold_name() const {
  switch (kind) {
    case ProtocolKind::kID: return "ID";
    case ProtocolKind::kLOMO: return "LOMO-" + (held_out ? held_out->code() : std::string("?"));
    case ProtocolKind::kCrossDataset: return "XD-" + external_source.value_or("?");
  }
  return "?";
}

FoldPlan build_id(const SampleManifest& manifest) {
  FoldPlan plan;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    switch (manifest.records[i].split) {
      case Split::kTrain: plan.train_rows.push_back(i); break;
      case Split::kVal: plan.val_rows.push_back(i); break;
      case Split::kTest: plan.test_rows.push_back(i); break;
    }
  }
  if (plan.train_rows.empty()) fail(ErrorCode::kMissingSplit, "manifest has no TRAIN rows");
  if (plan.val_rows.empty()) fail(ErrorCode::kMissingSplit, "manifest has no VAL rows");
  if (plan.test_rows.empty()) fail(ErrorCode::kMissingSplit, "manifest has no TEST rows");
  require_both_classes(manifest, plan.train_rows, "TRAIN");
  require_both_classes(manifest, plan.val_rows, "VAL");
  require_both_classes(manifest, plan.test_rows, "TEST");
  plan.description = "ID: train=" + std::to_string(plan.train_rows.size()) +
                     " val=" + std::to_string(plan.val_rows.size()) + " test=" + std::to_string(plan.test_rows.size());
  return plan;
}

FoldPlan build_lomo(const SampleManifest& manifest, const Manipulation& held_out) {
  if (held_out.is_real()) fail(ErrorCode::kInvalidArgument, "cannot hold out REAL");
  bool present = false, other_fake = false;
  for (const auto& r : manifest.records) {
    if (r.manipulation == held_out) present = true;
    else if (!r.manipulation.is_real()) other_fake = true;
  }
  if (!present) fail(ErrorCode::kUnknownManipulation, "manipulation " + held_out.code() + " not in manifest");
  if (!other_fake) fail(ErrorCode::kEmptyHeldOut, "no other fake manipulation left to train on");

  FoldPlan plan;
  bool held_out_in_test = false;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.records[i];
    const bool is_held = r.manipulation == held_out;
    switch (r.split) {
      case Split::kTrain:
        if (!is_held) plan.train_rows.push_back(i);
        break;
      case Split::kVal:
        if (!is_held) plan.val_rows.push_back(i);
        break;
      case Split::kTest:
        if (is_held || r.label == 0) plan.test_rows.push_back(i);
        held_out_in_test = held_out_in_test || is_held;
        break;
    }
  }
  if (!held_out_in_test) fail(ErrorCode::kEmptyHeldOut, "no TEST rows for " + held_out.code());
  if (plan.train_rows.empty() || plan.val_rows.empty()) fail(ErrorCode::kMissingSplit, "empty train or val fold");
  require_both_classes(manifest, plan.train_rows, "TRAIN");
  require_both_classes(manifest, plan.val_rows, "VAL");
  require_both_classes(manifest, plan.test_rows, "TEST");
  plan.description = "LOMO held-out " + held_out.code() + ": train " + manipulation_summary(manifest, plan.train_rows) +
                     " (" + std::to_string(plan.train_rows.size()) + "), val " +
                     std::to_string(plan.val_rows.size()) + ", test " + manipulation_summary(manifest, plan.test_rows) +
                     " (" + std::to_string(plan.test_rows.size()) + ")";
  return plan;
}

FoldPlan build_cross_dataset(const SampleManifest& external) {
  if (external.records.empty()) fail(ErrorCode::kSchemaError, "external manifest is empty");
  FoldPlan plan;
  plan.test_rows.resize(external.size());
  for (std::size_t i = 0; i < external.size(); ++i) plan.test_rows[i] = i;
  std::set<std::string> sources;
  for (const auto& r : external.records) sources.insert(r.source);
  std::string names;
  for (const auto& s : sources) names += (names.empty() ? "" : "+") + s;
  plan.description = "cross-dataset test-only: " + names + " (" + std::to_string(external.size()) + " rows)";
  return plan;
}

VideoScores aggregate_video(std::span<const double> frame_scores, std::span<const std::string> video_ids,
                            std::span<const int> labels) {
  if (frame_scores.size() != video_ids.size() || frame_scores.size() != labels.size())
    fail(ErrorCode::kDimMismatch, "frame scores, video ids and labels differ in length");
  VideoScores out;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < frame_scores.size(); ++i) {
    auto [it, inserted] = slot.try_emplace(video_ids[i], out.video_ids.size());
    if (inserted) {
      out.video_ids.push_back(video_ids[i]);
      out.scores.push_back(0.0);
      out.labels.push_back(labels[i]);
      counts.push_back(0);
    }
    out.scores[it->second] += frame_scores[i];
    ++counts[it->second];
  }
  for (std::size_t v = 0; v < out.scores.size(); ++v) out.scores[v] /= static_cast<double>(counts[v]);
  return out;
}

VideoScores aggregate_video(std::span<const double> frame_scores, const SampleManifest& manifest,
                            std::span<const std::size_t> positions) {
  std::vector<std::string> ids;
  ids.reserve(positions.size());
  for (auto p : positions) ids.push_back(manifest.records.at(p).video_id);
  return aggregate_video(frame_scores, ids, labels_of(manifest, positions));
}

ScoredSet ScoreArtifact::video_set() const {
  ScoredSet s;
  s.unit = ScoreUnit::kVideo;
  for (const auto& v : videos) {
    s.scores.push_back(v.score);
    s.labels.push_back(v.label);
  }
  return s;
}

json artifact_to_json(const ScoreArtifact& a) {
  json protocol = {{"kind", protocol_kind_name(a.protocol.kind)},
                   {"held_out", a.protocol.held_out ? json(a.protocol.held_out->code()) : json(nullptr)},
                   {"external_source", a.protocol.external_source ? json(*a.protocol.external_source) : json(nullptr)},
                   {"pooled", a.pooled}};
  json prov = {{"manifest_hash", a.provenance.manifest_hash},
               {"probe_digest", a.provenance.probe_digest},
               {"conditioner_digest", a.provenance.conditioner_digest},
               {"fold_description", a.provenance.fold_description},
               {"val_auc", a.provenance.val_auc ? json(*a.provenance.val_auc) : json(nullptr)},
               {"pooled_from", a.provenance.pooled_from}};
  json frames = json::array();
  for (const auto& f : a.frames) frames.push_back({{"row", f.row}, {"score", f.score}});
  json videos = json::array();
  for (const auto& v : a.videos) videos.push_back({{"video_id", v.video_id}, {"label", v.label}, {"score", v.score}});
  return {{"protocol", protocol}, {"condition", condition_name(a.condition)}, {"fold", a.fold},
          {"provenance", prov},   {"frames", frames},                        {"videos", videos}};
}

ScoreArtifact artifact_from_json(const json& doc) {
  try {
    ScoreArtifact a;
    const auto& p = doc.at("protocol");
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "ID") a.protocol.kind = ProtocolKind::kID;
    else if (kind == "LOMO") a.protocol.kind = ProtocolKind::kLOMO;
    else if (kind == "CROSS_DATASET") a.protocol.kind = ProtocolKind::kCrossDataset;
    else fail(ErrorCode::kSchemaError, "unknown protocol kind " + kind);
    if (!p.at("held_out").is_null()) a.protocol.held_out = Manipulation::parse(p.at("held_out").get<std::string>());
    if (!p.at("external_source").is_null()) a.protocol.external_source = p.at("external_source").get<std::string>();
    a.pooled = p.value("pooled", false);
    a.condition = parse_condition(doc.at("condition").get<std::string>());
    a.fold = doc.at("fold").get<std::string>();
    const auto& prov = doc.at("provenance");
    a.provenance.manifest_hash = prov.at("manifest_hash").get<std::string>();
    a.provenance.probe_digest = prov.at("probe_digest").get<std::string>();
    a.provenance.conditioner_digest = prov.at("conditioner_digest").get<std::string>();
    a.provenance.fold_description = prov.at("fold_description").get<std::string>();
    if (!prov.at("val_auc").is_null()) a.provenance.val_auc = prov.at("val_auc").get<double>();
    a.provenance.pooled_from = prov.value("pooled_from", std::vector<std::string>{});
    for (const auto& f : doc.at("frames")) a.frames.push_back({f.at("row").get<std::uint64_t>(), f.at("score").get<double>()});
    for (const auto& v : doc.at("videos"))
      a.videos.push_back({v.at("video_id").get<std::string>(), v.at("label").get<int>(), v.at("score").get<double>()});
    return a;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, std::string("score artifact: ") + e.what());
  }
}

void write_artifact(const ScoreArtifact& artifact, const std::filesystem::path& path) {
  write_file_atomic(path, artifact_to_json(artifact).dump(1) + "\n");
}

ScoreArtifact read_artifact(const std::filesystem::path& path) {
  auto text = read_file_text(path);
  auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::kSchemaError, path.string() + ": invalid JSON");
  return artifact_from_json(doc);
}

json metric_report_to_json(const MetricReport& r) {
  auto ci = [](const std::optional<Interval>& i) { return i ? json::array({i->lo, i->hi}) : json(nullptr); };
  return {{"auc", r.auc},
          {"ap", r.ap},
          {"eer", r.eer},
          {"fpr_at_95", r.fpr_at_95},
          {"ci", {{"auc", ci(r.auc_ci)}, {"ap", ci(r.ap_ci)}, {"eer", ci(r.eer_ci)}, {"fpr_at_95", ci(r.fpr_at_95_ci)}}},
          {"n_boot", r.n_boot},
          {"seed", r.seed},
          {"n_positive", r.n_positive},
          {"n_negative", r.n_negative}};
}

MetricReport metric_report_from_json(const json& doc) {
  try {
    MetricReport r;
    r.auc = doc.at("auc").get<double>();
    r.ap = doc.at("ap").get<double>();
    r.eer = doc.at("eer").get<double>();
    r.fpr_at_95 = doc.at("fpr_at_95").get<double>();
    auto ci = [&](const char* key) -> std::optional<Interval> {
      const auto& v = doc.at("ci").at(key);
      if (v.is_null()) return std::nullopt;
      return Interval{v.at(0).get<double>(), v.at(1).get<double>()};
    };
    r.auc_ci = ci("auc");
    r.ap_ci = ci("ap");
    r.eer_ci = ci("eer");
    r.fpr_at_95_ci = ci("fpr_at_95");
    r.n_boot = doc.at("n_boot").get<std::size_t>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.n_positive = doc.at("n_positive").get<std::size_t>();
    r.n_negative = doc.at("n_negative").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, std::string("metric report: ") + e.what());
  }
}

std::uint64_t job_seed(std::uint64_t experiment_seed, std::string_view fold, ConditionKind kind) {
  return derive_seed(derive_seed(experiment_seed, fold), condition_name(kind));
}

ScoreArtifact score_rows(const FeatureMatrix& features, const SampleManifest& manifest,
                         std::span<const std::size_t> positions, const ConditionerState& conditioner,
                         const LinearProbe& probe, const ProtocolSpec& spec, const std::string& description) {
  spec.validate();
  auto rows = row_indices(manifest, positions);
  auto x = condition_matrix(conditioner, features, rows);
  auto frame_scores = score_frames(probe, x);
  auto videos = aggregate_video(frame_scores, manifest, positions);

  ScoreArtifact a;
  a.protocol = spec;
  a.condition = conditioner.config.kind;
  a.fold = spec.fold_name();
  a.provenance.manifest_hash = to_hex(manifest.content_hash);
  a.provenance.probe_digest = to_hex(probe_digest(probe));
  a.provenance.conditioner_digest = to_hex(state_digest(conditioner));
  a.provenance.fold_description = description;
  a.frames.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) a.frames.push_back({manifest.records[positions[i]].row_index, frame_scores[i]});
  for (std::size_t v = 0; v < videos.video_ids.size(); ++v)
    a.videos.push_back({videos.video_ids[v], videos.labels[v], videos.scores[v]});
  return a;
}

FoldResult run_fold(const FeatureMatrix& features, const SampleManifest& manifest, const FoldPlan& plan,
                    const ProtocolSpec& spec, const RunOptions& options) {
  spec.validate();
  check_paired(features, manifest);
  if (plan.train_rows.empty() || plan.val_rows.empty() || plan.test_rows.empty())
    fail(ErrorCode::kMissingSplit, "fold plan needs train, val and test rows");

  auto [train_features, train_manifest] = select_positions(features, manifest, plan.train_rows);
  ConditionerState state =
      options.cache_dir
          ? fit_or_load(train_features, options.conditioner, train_manifest.content_hash, *options.cache_dir)
          : fit_conditioner(train_features, options.conditioner, train_manifest.content_hash);

  TrainingSet train{condition_matrix(state, train_features), labels_of(manifest, plan.train_rows)};
  ValidationSet val;
  val.x = condition_matrix(state, features, row_indices(manifest, plan.val_rows));
  val.labels = labels_of(manifest, plan.val_rows);
  for (auto p : plan.val_rows) val.video_ids.push_back(manifest.records[p].video_id);

  auto probe = train_probe(train, val, options.probe);
  auto artifact = score_rows(features, manifest, plan.test_rows, state, probe, spec, plan.description);
  artifact.provenance.val_auc = probe.val_auc_history.at(probe.best_epoch);
  return {std::move(artifact), std::move(state), std::move(probe)};
}

FoldResult run_id(const FeatureMatrix& features, const SampleManifest& manifest, const RunOptions& options) {
  return run_fold(features, manifest, build_id(manifest), ProtocolSpec::id(), options);
}

LomoResult run_lomo(const FeatureMatrix& features, const SampleManifest& manifest,
                    std::span<const Manipulation> held_out, const RunOptions& options) {
  LomoResult out;
  std::vector<ScoreArtifact> artifacts;
  for (const auto& m : held_out) {
    auto spec = ProtocolSpec::lomo(m);
    RunOptions fold_options = options;
    fold_options.probe.seed = job_seed(options.probe.seed, spec.fold_name(), options.conditioner.kind);
    out.folds.push_back(run_fold(features, manifest, build_lomo(manifest, m), spec, fold_options));
    artifacts.push_back(out.folds.back().artifact);
  }
  out.pooled = pool_artifacts(artifacts);
  return out;
}

ScoreArtifact pool_artifacts(std::span<const ScoreArtifact> folds) {
  if (folds.empty()) fail(ErrorCode::kMissingArtifacts, "nothing to pool");
  ScoreArtifact pooled;
  pooled.protocol.kind = ProtocolKind::kLOMO;
  pooled.pooled = true;
  pooled.condition = folds.front().condition;
  pooled.fold = "LOMO-pooled";
  pooled.provenance.manifest_hash = folds.front().provenance.manifest_hash;
  Sha256 probes, conditioners;
  std::string description = "pooled out-of-fold video scores:";
  for (const auto& f : folds) {
    if (f.protocol.kind != ProtocolKind::kLOMO || f.pooled)
      fail(ErrorCode::kInvalidArgument, "only per-fold LOMO artifacts can be pooled");
    if (f.condition != pooled.condition) fail(ErrorCode::kInvalidArgument, "folds mix conditioning kinds");
    probes.update(f.provenance.probe_digest);
    conditioners.update(f.provenance.conditioner_digest);
    pooled.provenance.pooled_from.push_back(f.fold);
    description += " " + f.fold;
    pooled.frames.insert(pooled.frames.end(), f.frames.begin(), f.frames.end());
    for (const auto& v : f.videos) pooled.videos.push_back({f.fold + "/" + v.video_id, v.label, v.score});
  }
  pooled.provenance.probe_digest = to_hex(probes.finish());
  pooled.provenance.conditioner_digest = to_hex(conditioners.finish());
  pooled.provenance.fold_description = description;
  return pooled;
}

ScoreArtifact run_cross_dataset(const FeatureMatrix& external_features, const SampleManifest& external_manifest,
                                const ConditionerState& conditioner, const LinearProbe& probe,
                                std::string_view name) {
  check_paired(external_features, external_manifest);
  auto plan = build_cross_dataset(external_manifest);
  std::string source = name.empty() ? external_manifest.records.front().source : std::string(name);
  return score_rows(external_features, external_manifest, plan.test_rows, conditioner, probe,
                    ProtocolSpec::cross_dataset(source), plan.description);
}

}  // namespace fpk
