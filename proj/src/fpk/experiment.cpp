#include "fpk/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "fpk/bytes.hpp"
#include "fpk/error.hpp"
#include "fpk/rng.hpp"

namespace fpk {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kJobKeyVersion = "fpk-job-v1";

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("config key '") + key + "': " + e.what());
  }
}

struct LoadedExternal {
  ExternalSet set;
  FeatureMatrix features;
  SampleManifest manifest;
};

struct Inputs {
  FeatureMatrix features;
  SampleManifest manifest;
  std::vector<LoadedExternal> externals;
};

Inputs load_inputs(const ExperimentConfig& config) {
  Inputs in;
  in.features = read_features(config.features_path);
  in.manifest = load_manifest(config.manifest_path);
  check_paired(in.features, in.manifest);
  if (config.wants("XD")) {
    for (const auto& ext : config.externals) {
      LoadedExternal e{ext, read_features(ext.features), load_manifest(ext.manifest)};
      check_paired(e.features, e.manifest);
      if (e.features.dim() != in.features.dim())
        fail(ErrorCode::kDimMismatch, "external set '" + ext.name + "' has a different feature dim");
      in.externals.push_back(std::move(e));
    }
  }
  return in;
}

void emit(const MessageSink& log, const std::string& line) {
  if (log) log(line);
}

std::string rel(const fs::path& out, const fs::path& p) { return fs::relative(p, out).generic_string(); }

std::string file_digest_hex(const fs::path& p) { return to_hex(sha256(read_file_bytes(p))); }

// Artifact + metric report + ROC CSV for one scored fold. Returns written paths.
std::vector<fs::path> write_evaluation(const ExperimentConfig& config, const ScoreArtifact& artifact,
                                       const std::optional<json>& extra = std::nullopt) {
  const auto& out = config.output_dir;
  auto set = artifact.video_set();
  BootstrapOptions boot{config.n_boot, derive_seed(config.seed, "bootstrap/" + std::string(condition_name(artifact.condition)) + "/" + artifact.fold), config.ci_level};
  auto report = evaluate(set, boot);
  json doc = metric_report_to_json(report);
  doc["condition"] = condition_name(artifact.condition);
  doc["fold"] = artifact.fold;
  doc["unit"] = "VIDEO";
  if (artifact.provenance.val_auc) doc["val_auc"] = *artifact.provenance.val_auc;
  if (extra) doc.update(*extra);

  auto a = artifact_path(out, artifact.condition, artifact.fold);
  auto m = metrics_path(out, artifact.condition, artifact.fold);
  auto r = roc_path(out, artifact.condition, artifact.fold);
  write_artifact(artifact, a);
  write_file_atomic(m, doc.dump(1) + "\n");
  write_file_atomic(r, roc_csv(roc_curve(set)));
  return {a, m, r};
}

std::vector<fs::path> write_model(const fs::path& out, ConditionKind kind, std::string_view fold,
                                  const LinearProbe& probe, const ConditionerState& state) {
  auto p = probe_path(out, kind, fold);
  auto s = state_path(out, kind, fold);
  write_probe(probe, p);
  write_file_atomic(s, encode_state(state));
  return {p, s};
}

ConditionerState read_state_file(const fs::path& p) {
  try {
    return decode_state(read_file_bytes(p));
  } catch (const Error& e) {
    throw Error(e.code(), p.string() + ": " + e.what());
  }
}

RunOptions run_options(const ExperimentConfig& config, ConditionKind kind, std::string_view fold) {
  RunOptions o;
  o.conditioner = config.conditioner(kind);
  o.probe = config.probe;
  o.probe.seed = job_seed(config.seed, fold, kind);
  o.cache_dir = config.output_dir / "cache";
  return o;
}

enum class JobType { kId, kLomoFold, kLomoPooled, kCrossDataset };

struct Job {
  JobType type;
  ConditionKind kind;
  std::string fold;
  std::optional<Manipulation> held_out;
  std::size_t external = 0;
  std::vector<std::size_t> deps;
  std::string name() const { return std::string(condition_name(kind)) + "/" + fold; }
};

struct JobState {
  bool done = false;
  bool ok = false;
  std::vector<fs::path> outputs;
};

fs::path stamp_path(const fs::path& out, const Job& job) {
  return out / "jobs" / (std::string(condition_name(job.kind)) + "__" + job.fold + ".json");
}

json probe_config_json(const ProbeConfig& p) {
  return {{"epochs", p.epochs}, {"batch_size", p.batch_size}, {"learning_rate", p.learning_rate},
          {"momentum", p.momentum}, {"l2_reg", p.l2_reg}};
}

std::string job_key(const ExperimentConfig& config, const Inputs& in, const Job& job,
                    const std::vector<JobState>& states) {
  json k;
  k["version"] = kJobKeyVersion;
  k["job"] = job.name();
  k["features"] = to_hex(in.features.payload_digest());
  k["manifest"] = to_hex(in.manifest.content_hash);
  k["seed"] = config.seed;
  k["probe"] = probe_config_json(config.probe);
  auto cc = config.conditioner(job.kind);
  k["conditioner"] = {{"ln_eps", cc.ln_eps}, {"pca_eps", cc.pca_eps}, {"pca_components", cc.pca_components.value_or(0)}};
  if (cc.affine_source) k["affine"] = file_digest_hex(*cc.affine_source);
  k["n_boot"] = config.n_boot;
  k["ci_level"] = config.ci_level;
  if (job.type == JobType::kCrossDataset) {
    const auto& e = in.externals.at(job.external);
    k["external"] = {{"name", e.set.name}, {"features", to_hex(e.features.payload_digest())},
                     {"manifest", to_hex(e.manifest.content_hash)}};
  }
  json deps = json::array();
  for (auto d : job.deps)
    for (const auto& p : states[d].outputs) deps.push_back(file_digest_hex(p));
  k["deps"] = deps;
  return to_hex(sha256(k.dump()));
}

bool stamp_matches(const fs::path& out, const Job& job, const std::string& key, std::vector<fs::path>& outputs) {
  auto sp = stamp_path(out, job);
  std::error_code ec;
  if (!fs::exists(sp, ec)) return false;
  auto doc = json::parse(read_file_text(sp), nullptr, false);
  if (doc.is_discarded() || doc.value("job_key", "") != key || !doc.contains("outputs")) return false;
  outputs.clear();
  for (const auto& entry : doc.at("outputs")) {
    auto p = out / entry.at("path").get<std::string>();
    if (!fs::exists(p, ec) || file_digest_hex(p) != entry.at("sha256").get<std::string>()) return false;
    outputs.push_back(p);
  }
  return true;
}

void write_stamp(const fs::path& out, const Job& job, const std::string& key, const std::vector<fs::path>& outputs) {
  json doc;
  doc["job"] = job.name();
  doc["job_key"] = key;
  json list = json::array();
  for (const auto& p : outputs) list.push_back({{"path", rel(out, p)}, {"sha256", file_digest_hex(p)}});
  doc["outputs"] = list;
  write_file_atomic(stamp_path(out, job), doc.dump(1) + "\n");
}

std::vector<fs::path> execute(const ExperimentConfig& config, const Inputs& in, const Job& job) {
  const auto& out = config.output_dir;
  switch (job.type) {
    case JobType::kId: {
      auto result = run_id(in.features, in.manifest, run_options(config, job.kind, job.fold));
      auto files = write_model(out, job.kind, job.fold, result.probe, result.conditioner);
      auto eval = write_evaluation(config, result.artifact);
      files.insert(files.end(), eval.begin(), eval.end());
      return files;
    }
    case JobType::kLomoFold: {
      auto spec = ProtocolSpec::lomo(*job.held_out);
      auto result = run_fold(in.features, in.manifest, build_lomo(in.manifest, *job.held_out), spec,
                             run_options(config, job.kind, job.fold));
      auto files = write_model(out, job.kind, job.fold, result.probe, result.conditioner);
      auto eval = write_evaluation(config, result.artifact);
      files.insert(files.end(), eval.begin(), eval.end());
      return files;
    }
    case JobType::kLomoPooled: {
      std::vector<ScoreArtifact> folds;
      std::vector<ScoredSet> sets;
      json fold_aucs = json::array();
      json fold_names = json::array();
      double sum = 0.0;
      for (const auto& m : config.held_out) {
        auto fold = ProtocolSpec::lomo(m).fold_name();
        folds.push_back(read_artifact(artifact_path(out, job.kind, fold)));
        sets.push_back(folds.back().video_set());
        const double auc = roc_auc(sets.back());
        sum += auc;
        fold_aucs.push_back(auc);
        fold_names.push_back(fold);
      }
      const double mean = sum / static_cast<double>(sets.size());
      double var = 0.0;
      for (const auto& a : fold_aucs) var += (a.get<double>() - mean) * (a.get<double>() - mean);
      const double stddev = std::sqrt(var / static_cast<double>(sets.size()));
      BootstrapOptions boot{config.n_boot, derive_seed(config.seed, "bootstrap/" + std::string(condition_name(job.kind)) + "/LOMO-mean"), config.ci_level};
      auto ci = bootstrap_fold_mean_ci(sets, MetricId::kAUC, boot);
      json extra;
      extra["fold_mean"] = {{"folds", fold_names}, {"fold_auc", fold_aucs}, {"mean_auc", mean},
                            {"std_auc", stddev},   {"ci", {ci.lo, ci.hi}}};
      return write_evaluation(config, pool_artifacts(folds), extra);
    }
    case JobType::kCrossDataset: {
      const auto& e = in.externals.at(job.external);
      auto probe = read_probe(probe_path(out, job.kind, "ID"));
      auto state = read_state_file(state_path(out, job.kind, "ID"));
      return write_evaluation(config, run_cross_dataset(e.features, e.manifest, state, probe, e.set.name));
    }
  }
  fail(ErrorCode::kInternal, "unknown job type");
}

std::vector<Job> plan_jobs(const ExperimentConfig& config, const Inputs& in) {
  std::vector<Job> jobs;
  for (auto kind : config.conditions) {
    std::optional<std::size_t> id_job;
    if (config.wants("ID") || config.wants("XD")) {
      id_job = jobs.size();
      jobs.push_back({JobType::kId, kind, "ID", std::nullopt, 0, {}});
    }
    if (config.wants("LOMO")) {
      std::vector<std::size_t> folds;
      for (const auto& m : config.held_out) {
        folds.push_back(jobs.size());
        jobs.push_back({JobType::kLomoFold, kind, ProtocolSpec::lomo(m).fold_name(), m, 0, {}});
      }
      jobs.push_back({JobType::kLomoPooled, kind, "LOMO-pooled", std::nullopt, 0, folds});
    }
    if (config.wants("XD")) {
      for (std::size_t e = 0; e < in.externals.size(); ++e)
        jobs.push_back({JobType::kCrossDataset, kind, ProtocolSpec::cross_dataset(in.externals[e].set.name).fold_name(),
                        std::nullopt, e, {*id_job}});
    }
  }
  return jobs;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : threads) t.join();
}

}  // namespace

bool ExperimentConfig::wants(std::string_view protocol) const {
  return std::find(protocols.begin(), protocols.end(), protocol) != protocols.end();
}

ConditionerConfig ExperimentConfig::conditioner(ConditionKind kind) const {
  ConditionerConfig c;
  c.kind = kind;
  c.ln_eps = ln_eps;
  c.pca_eps = pca_eps;
  c.pca_components = pca_components;
  if (kind == ConditionKind::kLNAffine) c.affine_source = affine_path;
  return c;
}

void ExperimentConfig::validate() const {
  std::error_code ec;
  auto need = [&](const fs::path& p, const std::string& what) {
    if (p.empty() || !fs::exists(p, ec)) fail(ErrorCode::kConfigError, what + " not found: " + p.string());
  };
  need(features_path, "features file");
  need(manifest_path, "manifest file");
  if (affine_path) need(*affine_path, "affine sidecar");
  std::set<std::string> names;
  for (const auto& e : externals) {
    if (e.name.empty() || e.name.find_first_of("/\\ ") != std::string::npos)
      fail(ErrorCode::kConfigError, "external set names must be non-empty path-safe tokens");
    if (!names.insert(e.name).second) fail(ErrorCode::kConfigError, "duplicate external set '" + e.name + "'");
    need(e.features, "external features (" + e.name + ")");
    need(e.manifest, "external manifest (" + e.name + ")");
  }
  if (conditions.empty()) fail(ErrorCode::kConfigError, "conditions list is empty");
  if (protocols.empty()) fail(ErrorCode::kConfigError, "protocols list is empty");
  for (const auto& p : protocols)
    if (p != "ID" && p != "LOMO" && p != "XD") fail(ErrorCode::kConfigError, "unknown protocol '" + p + "'");
  if (wants("LOMO") && held_out.empty()) fail(ErrorCode::kConfigError, "LOMO requested with no held-out families");
  if (n_boot == 0) fail(ErrorCode::kConfigError, "n_boot must be positive");
  if (!(ci_level > 0.0 && ci_level < 1.0)) fail(ErrorCode::kConfigError, "ci_level must be in (0,1)");
  try {
    probe.validate();
    conditioner(ConditionKind::kPCAWhiten).validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfigError, e.what());
  }
}

ExperimentConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  auto doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::kConfigError, "config is not a JSON object");
  static const std::set<std::string> known = {
      "features", "manifest", "affine",   "externals", "conditions", "protocols",  "held_out",
      "epochs",   "batch_size", "learning_rate", "momentum", "l2_reg", "ln_eps", "pca_eps",
      "pca_components", "n_boot", "ci_level", "output_dir", "seed", "jobs"};
  for (const auto& [key, _] : doc.items())
    if (!known.contains(key)) fail(ErrorCode::kConfigError, "unknown config key '" + key + "'");

  ExperimentConfig c;
  try {
    if (!doc.contains("features") || !doc.contains("manifest"))
      fail(ErrorCode::kConfigError, "config needs 'features' and 'manifest'");
    c.features_path = resolve(base_dir, doc.at("features").get<std::string>());
    c.manifest_path = resolve(base_dir, doc.at("manifest").get<std::string>());
    if (doc.contains("affine") && !doc.at("affine").is_null())
      c.affine_path = resolve(base_dir, doc.at("affine").get<std::string>());
    if (doc.contains("externals")) {
      for (const auto& e : doc.at("externals"))
        c.externals.push_back({e.at("name").get<std::string>(), resolve(base_dir, e.at("features").get<std::string>()),
                               resolve(base_dir, e.at("manifest").get<std::string>())});
    }
    if (doc.contains("conditions")) {
      c.conditions.clear();
      for (const auto& k : doc.at("conditions")) c.conditions.push_back(parse_condition(k.get<std::string>()));
    }
    if (doc.contains("protocols")) c.protocols = doc.at("protocols").get<std::vector<std::string>>();
    if (doc.contains("held_out")) {
      c.held_out.clear();
      for (const auto& m : doc.at("held_out")) c.held_out.push_back(Manipulation::parse(m.get<std::string>()));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, e.what());
  } catch (const Error& e) {
    fail(ErrorCode::kConfigError, e.what());
  }
  c.probe.epochs = get_or<std::size_t>(doc, "epochs", c.probe.epochs);
  c.probe.batch_size = get_or<std::size_t>(doc, "batch_size", c.probe.batch_size);
  c.probe.learning_rate = get_or<double>(doc, "learning_rate", c.probe.learning_rate);
  c.probe.momentum = get_or<double>(doc, "momentum", c.probe.momentum);
  c.probe.l2_reg = get_or<double>(doc, "l2_reg", c.probe.l2_reg);
  c.ln_eps = get_or<double>(doc, "ln_eps", c.ln_eps);
  c.pca_eps = get_or<double>(doc, "pca_eps", c.pca_eps);
  if (auto k = get_or<std::size_t>(doc, "pca_components", 0); k != 0) c.pca_components = k;
  c.n_boot = get_or<std::size_t>(doc, "n_boot", c.n_boot);
  c.ci_level = get_or<double>(doc, "ci_level", c.ci_level);
  c.output_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "out"));
  c.seed = get_or<std::uint64_t>(doc, "seed", c.seed);
  c.jobs = get_or<std::size_t>(doc, "jobs", c.jobs);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) fail(ErrorCode::kConfigError, "config file not found: " + path.string());
  auto base = fs::absolute(path).parent_path();
  return parse_config(read_file_text(path), base);
}

std::vector<Diagnostic> validate_files(const fs::path& features, const fs::path& manifest,
                                       std::span<const Manipulation> held_out) {
  std::vector<Diagnostic> out;
  auto check = [&](const std::string& name, const std::string& where, auto&& fn) -> bool {
    try {
      auto detail = fn();
      out.push_back({true, name, where, detail});
      return true;
    } catch (const std::exception& e) {
      out.push_back({false, name, where, e.what()});
      return false;
    }
  };
  std::optional<FeatureMatrix> fm;
  std::optional<SampleManifest> mf;
  if (!features.empty())
    check("feature-digest", features.string(), [&] {
      fm = read_features(features);
      return std::to_string(fm->rows()) + " rows x " + std::to_string(fm->dim()) + " dims, payload sha256 " +
             to_hex(fm->payload_digest());
    });
  if (!manifest.empty())
    check("manifest", manifest.string(), [&] {
      mf = load_manifest(manifest);
      return std::to_string(mf->size()) + " records, hash ok, splits disjoint by video";
    });
  if (fm && mf)
    check("pairing", features.string() + " + " + manifest.string(), [&] {
      check_paired(*fm, *mf);
      return std::string("row counts match");
    });
  if (mf && !held_out.empty()) {
    for (const auto& m : held_out)
      check("lomo-feasible", manifest.string() + " [" + m.code() + "]", [&] {
        return build_lomo(*mf, m).description;
      });
  }
  return out;
}

std::vector<Diagnostic> validate_experiment(const ExperimentConfig& config) {
  std::vector<Diagnostic> out;
  try {
    config.validate();
    out.push_back({true, "config", config.output_dir.string(), "inputs present"});
  } catch (const std::exception& e) {
    out.push_back({false, "config", "", e.what()});
  }
  std::vector<Manipulation> held;
  if (config.wants("LOMO")) held = config.held_out;
  auto main = validate_files(config.features_path, config.manifest_path, held);
  out.insert(out.end(), main.begin(), main.end());
  if (config.wants("ID")) {
    try {
      auto m = load_manifest(config.manifest_path);
      out.push_back({true, "id-feasible", config.manifest_path.string(), build_id(m).description});
    } catch (const std::exception& e) {
      out.push_back({false, "id-feasible", config.manifest_path.string(), e.what()});
    }
  }
  if (config.affine_path) {
    try {
      auto a = read_affine(*config.affine_path);
      out.push_back({true, "affine", config.affine_path->string(), std::to_string(a.gamma.size()) + " dims"});
    } catch (const std::exception& e) {
      out.push_back({false, "affine", config.affine_path->string(), e.what()});
    }
  }
  for (const auto& e : config.externals) {
    auto ext = validate_files(e.features, e.manifest);
    out.insert(out.end(), ext.begin(), ext.end());
  }
  return out;
}

SweepSummary run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  config.validate();
  Inputs in = load_inputs(config);
  auto jobs = plan_jobs(config, in);
  std::vector<JobState> states(jobs.size());
  SweepSummary summary;
  std::mutex mutex;
  auto log = [&](const std::string& line) {
    std::lock_guard lock(mutex);
    emit(options.log, line);
  };

  auto run_one = [&](std::size_t i) {
    const auto& job = jobs[i];
    for (auto d : job.deps) {
      if (!states[d].ok) {
        std::lock_guard lock(mutex);
        states[i] = {true, false, {}};
        ++summary.failed;
        summary.failures.push_back(job.name() + ": dependency " + jobs[d].name() + " failed");
        emit(options.log, "[fail] " + job.name() + ": dependency failed");
        return;
      }
    }
    try {
      auto key = job_key(config, in, job, states);
      std::vector<fs::path> outputs;
      if (!options.force && stamp_matches(config.output_dir, job, key, outputs)) {
        std::lock_guard lock(mutex);
        states[i] = {true, true, outputs};
        ++summary.skipped;
        emit(options.log, "[skip] " + job.name());
        return;
      }
      log("[run]  " + job.name());
      outputs = execute(config, in, job);
      write_stamp(config.output_dir, job, key, outputs);
      std::lock_guard lock(mutex);
      states[i] = {true, true, outputs};
      ++summary.executed;
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex);
      states[i] = {true, false, {}};
      ++summary.failed;
      summary.failures.push_back(job.name() + ": " + e.what());
      emit(options.log, "[fail] " + job.name() + ": " + e.what());
    }
  };

  // Two waves: independent fits first, then jobs that consume their outputs.
  std::vector<std::size_t> wave1, wave2;
  for (std::size_t i = 0; i < jobs.size(); ++i) (jobs[i].deps.empty() ? wave1 : wave2).push_back(i);
  parallel_for(wave1.size(), config.jobs, [&](std::size_t k) { run_one(wave1[k]); });
  parallel_for(wave2.size(), config.jobs, [&](std::size_t k) { run_one(wave2[k]); });

  std::sort(summary.failures.begin(), summary.failures.end());
  return summary;
}

std::vector<ConditionerState> fit_conditioners(const ExperimentConfig& config, const MessageSink& log) {
  config.validate();
  auto features = read_features(config.features_path);
  auto manifest = load_manifest(config.manifest_path);
  check_paired(features, manifest);
  auto plan = build_id(manifest);
  auto [train, train_manifest] = select_positions(features, manifest, plan.train_rows);
  std::vector<ConditionerState> states;
  for (auto kind : config.conditions) {
    bool hit = false;
    auto state = fit_or_load(train, config.conditioner(kind), train_manifest.content_hash,
                             config.output_dir / "cache", &hit);
    write_file_atomic(state_path(config.output_dir, kind, "ID"), encode_state(state));
    emit(log, std::string(condition_name(kind)) + ": fit_key " + to_hex(state.fit_key) + (hit ? " (cached)" : ""));
    states.push_back(std::move(state));
  }
  return states;
}

std::vector<LinearProbe> train_probes(const ExperimentConfig& config, const MessageSink& log) {
  config.validate();
  auto features = read_features(config.features_path);
  auto manifest = load_manifest(config.manifest_path);
  std::vector<LinearProbe> probes;
  for (auto kind : config.conditions) {
    auto result = run_id(features, manifest, run_options(config, kind, "ID"));
    write_model(config.output_dir, kind, "ID", result.probe, result.conditioner);
    emit(log, std::string(condition_name(kind)) + ": best epoch " + std::to_string(result.probe.best_epoch) +
                  ", val AUC " + format_double(result.probe.val_auc_history[result.probe.best_epoch]));
    probes.push_back(std::move(result.probe));
  }
  return probes;
}

std::vector<ScoreArtifact> evaluate_probes(const ExperimentConfig& config, const MessageSink& log) {
  config.validate();
  Inputs in = load_inputs(config);
  auto plan = build_id(in.manifest);
  std::vector<ScoreArtifact> artifacts;
  for (auto kind : config.conditions) {
    auto probe = read_probe(probe_path(config.output_dir, kind, "ID"));
    auto state = read_state_file(state_path(config.output_dir, kind, "ID"));
    if (state.config.kind != kind) fail(ErrorCode::kSchemaError, "stored conditioner kind does not match");
    auto id = score_rows(in.features, in.manifest, plan.test_rows, state, probe, ProtocolSpec::id(), plan.description);
    id.provenance.val_auc = probe.val_auc_history.at(probe.best_epoch);
    write_evaluation(config, id);
    emit(log, std::string(condition_name(kind)) + "/ID: video AUC " + format_double(roc_auc(id.video_set())));
    artifacts.push_back(std::move(id));
    for (const auto& e : in.externals) {
      auto xd = run_cross_dataset(e.features, e.manifest, state, probe, e.set.name);
      write_evaluation(config, xd);
      emit(log, std::string(condition_name(kind)) + "/" + xd.fold + ": video AUC " +
                    format_double(roc_auc(xd.video_set())));
      artifacts.push_back(std::move(xd));
    }
  }
  return artifacts;
}

fs::path artifact_path(const fs::path& out, ConditionKind kind, std::string_view fold) {
  return out / "artifacts" / std::string(condition_name(kind)) / (std::string(fold) + ".json");
}
fs::path metrics_path(const fs::path& out, ConditionKind kind, std::string_view fold) {
  return out / "metrics" / std::string(condition_name(kind)) / (std::string(fold) + ".json");
}
fs::path roc_path(const fs::path& out, ConditionKind kind, std::string_view fold) {
  return out / "roc" / std::string(condition_name(kind)) / (std::string(fold) + ".csv");
}
fs::path probe_path(const fs::path& out, ConditionKind kind, std::string_view fold) {
  return out / "probes" / std::string(condition_name(kind)) / (std::string(fold) + ".fpkp");
}
fs::path state_path(const fs::path& out, ConditionKind kind, std::string_view fold) {
  return out / "probes" / std::string(condition_name(kind)) / (std::string(fold) + ".fpkc");
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : points) out += format_double(p.threshold) + "," + format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  return out;
}

}  // namespace fpk
