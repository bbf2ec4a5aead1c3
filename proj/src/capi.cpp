#include "fpk/fpk.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "fpk/bytes.hpp"
#include "fpk/conditioning.hpp"
#include "fpk/error.hpp"
#include "fpk/experiment.hpp"
#include "fpk/featstore.hpp"
#include "fpk/metrics.hpp"
#include "fpk/probe.hpp"
#include "fpk/report.hpp"
#include "fpk/synth.hpp"

struct fpk_features {
  fpk::FeatureMatrix m;
};
struct fpk_manifest {
  fpk::SampleManifest m;
};
struct fpk_conditioner {
  fpk::ConditionerState s;
};
struct fpk_probe {
  fpk::LinearProbe p;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
fpk_status guard(Fn&& fn) noexcept {
  g_last_error.clear();
  try {
    fn();
    return FPK_OK;
  } catch (const fpk::Error& e) {
    g_last_error = e.what();
    return static_cast<fpk_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FPK_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FPK_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fpk::fail(fpk::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

void copy_hex(const fpk::Digest& d, char hex[65]) {
  auto s = fpk::to_hex(d);
  std::memcpy(hex, s.data(), 64);
  hex[64] = '\0';
}

fpk::ScoredSet scored(const double* scores, const int* labels, size_t n) {
  if (n > 0) {
    need(scores, "scores");
    need(labels, "labels");
  }
  fpk::ScoredSet s;
  s.scores.assign(scores, scores + n);
  s.labels.assign(labels, labels + n);
  return s;
}

fpk::MetricId metric_id(fpk_metric m) {
  switch (m) {
    case FPK_METRIC_AUC: return fpk::MetricId::kAUC;
    case FPK_METRIC_AP: return fpk::MetricId::kAP;
    case FPK_METRIC_EER: return fpk::MetricId::kEER;
    case FPK_METRIC_FPR95: return fpk::MetricId::kFPR95;
  }
  fpk::fail(fpk::ErrorCode::kInvalidArgument, "unknown metric id");
}

fpk::MessageSink sink(fpk_message_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](std::string_view line) {
    std::string s(line);
    fn(s.c_str(), user);
  };
}

fpk::ExperimentConfig load(const fpk_command_options* o) {
  need(o, "options");
  need(o->config_path, "config_path");
  auto c = fpk::load_config(o->config_path);
  if (o->output_dir) c.output_dir = o->output_dir;
  if (o->override_seed) c.seed = o->seed;
  if (o->jobs) c.jobs = o->jobs;
  if (o->condition) c.conditions = {fpk::parse_condition(o->condition)};
  return c;
}

void log_diagnostics(const std::vector<fpk::Diagnostic>& diags, const fpk::MessageSink& log, int* all_ok) {
  bool ok = true;
  for (const auto& d : diags) {
    ok = ok && d.ok;
    if (log) log(std::string(d.ok ? "ok   " : "FAIL ") + d.check + " " + d.location + ": " + d.detail);
  }
  if (all_ok) *all_ok = ok ? 1 : 0;
}

}  // namespace

extern "C" {

const char* fpk_version(void) { return "1.0.0"; }

const char* fpk_status_name(fpk_status status) {
  static thread_local std::string name;
  name = fpk::error_name(static_cast<fpk::ErrorCode>(status));
  return name.c_str();
}

const char* fpk_last_error(void) { return g_last_error.c_str(); }

fpk_status fpk_features_create(size_t rows, size_t dim, const float* values, fpk_features** out) {
  return guard([&] {
    need(out, "out");
    if (rows * dim > 0) need(values, "values");
    std::vector<float> v(values, values + rows * dim);
    *out = new fpk_features{fpk::FeatureMatrix(rows, dim, std::move(v))};
  });
}

fpk_status fpk_features_read(const char* path, fpk_features** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fpk_features{fpk::read_features(path)};
  });
}

fpk_status fpk_features_write(const fpk_features* f, const char* path) {
  return guard([&] {
    need(f, "features");
    need(path, "path");
    fpk::write_features(f->m, path);
  });
}

size_t fpk_features_rows(const fpk_features* f) { return f ? f->m.rows() : 0; }
size_t fpk_features_dim(const fpk_features* f) { return f ? f->m.dim() : 0; }
const float* fpk_features_data(const fpk_features* f) { return f ? f->m.values().data() : nullptr; }

fpk_status fpk_features_digest(const fpk_features* f, char hex[65]) {
  return guard([&] {
    need(f, "features");
    need(hex, "hex");
    copy_hex(f->m.payload_digest(), hex);
  });
}

void fpk_features_free(fpk_features* f) { delete f; }

fpk_status fpk_manifest_read(const char* path, fpk_manifest** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fpk_manifest{fpk::load_manifest(path)};
  });
}

size_t fpk_manifest_size(const fpk_manifest* m) { return m ? m->m.size() : 0; }

fpk_status fpk_manifest_hash(const fpk_manifest* m, char hex[65]) {
  return guard([&] {
    need(m, "manifest");
    need(hex, "hex");
    copy_hex(m->m.content_hash, hex);
  });
}

fpk_status fpk_check_paired(const fpk_features* f, const fpk_manifest* m) {
  return guard([&] {
    need(f, "features");
    need(m, "manifest");
    fpk::check_paired(f->m, m->m);
  });
}

void fpk_manifest_free(fpk_manifest* m) { delete m; }

void fpk_conditioner_options_init(fpk_conditioner_options* o) {
  if (!o) return;
  fpk::ConditionerConfig c;
  o->kind = "LN";
  o->ln_eps = c.ln_eps;
  o->pca_eps = c.pca_eps;
  o->pca_components = 0;
  o->affine_path = nullptr;
}

fpk_status fpk_conditioner_fit(const fpk_features* train, const fpk_manifest* train_manifest,
                               const fpk_conditioner_options* o, const char* cache_dir, fpk_conditioner** out) {
  return guard([&] {
    need(train, "train");
    need(o, "options");
    need(o->kind, "options->kind");
    need(out, "out");
    fpk::ConditionerConfig c;
    c.kind = fpk::parse_condition(o->kind);
    c.ln_eps = o->ln_eps;
    c.pca_eps = o->pca_eps;
    if (o->pca_components) c.pca_components = o->pca_components;
    if (o->affine_path) c.affine_source = std::filesystem::path(o->affine_path);
    c.validate();
    const fpk::Digest hash = train_manifest ? train_manifest->m.content_hash : fpk::Digest{};
    auto state = cache_dir ? fpk::fit_or_load(train->m, c, hash, cache_dir) : fpk::fit_conditioner(train->m, c, hash);
    *out = new fpk_conditioner{std::move(state)};
  });
}

fpk_status fpk_conditioner_read(const char* path, fpk_conditioner** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fpk_conditioner{fpk::decode_state(fpk::read_file_bytes(path))};
  });
}

fpk_status fpk_conditioner_write(const fpk_conditioner* c, const char* path) {
  return guard([&] {
    need(c, "conditioner");
    need(path, "path");
    fpk::write_file_atomic(path, fpk::encode_state(c->s));
  });
}

size_t fpk_conditioner_input_dim(const fpk_conditioner* c) { return c ? c->s.input_dim : 0; }
size_t fpk_conditioner_output_dim(const fpk_conditioner* c) { return c ? c->s.output_dim() : 0; }

fpk_status fpk_conditioner_apply(const fpk_conditioner* c, const double* x, size_t x_len, double* y, size_t y_len) {
  return guard([&] {
    need(c, "conditioner");
    need(x, "x");
    need(y, "y");
    if (y_len < c->s.output_dim()) fpk::fail(fpk::ErrorCode::kInvalidArgument, "output buffer too small");
    auto out = fpk::apply_conditioner(c->s, std::span<const double>(x, x_len));
    std::copy(out.begin(), out.end(), y);
  });
}

fpk_status fpk_conditioner_digest(const fpk_conditioner* c, char hex[65]) {
  return guard([&] {
    need(c, "conditioner");
    need(hex, "hex");
    copy_hex(fpk::state_digest(c->s), hex);
  });
}

void fpk_conditioner_free(fpk_conditioner* c) { delete c; }

fpk_status fpk_probe_read(const char* path, fpk_probe** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fpk_probe{fpk::read_probe(path)};
  });
}

size_t fpk_probe_dim(const fpk_probe* p) { return p ? p->p.weights.size() : 0; }
const double* fpk_probe_weights(const fpk_probe* p) { return p ? p->p.weights.data() : nullptr; }
double fpk_probe_bias(const fpk_probe* p) { return p ? p->p.bias : 0.0; }
size_t fpk_probe_best_epoch(const fpk_probe* p) { return p ? p->p.best_epoch : 0; }

fpk_status fpk_probe_score(const fpk_probe* p, const double* x, size_t x_len, double* out) {
  return guard([&] {
    need(p, "probe");
    need(x, "x");
    need(out, "out");
    if (x_len != p->p.weights.size()) fpk::fail(fpk::ErrorCode::kDimMismatch, "row length does not match the probe");
    double z = p->p.bias;
    for (size_t i = 0; i < x_len; ++i) z += p->p.weights[i] * x[i];
    *out = z;
  });
}

void fpk_probe_free(fpk_probe* p) { delete p; }

fpk_status fpk_metric_compute(const double* scores, const int* labels, size_t n, fpk_metric metric, double* out) {
  return guard([&] {
    need(out, "out");
    *out = fpk::compute_metric(scored(scores, labels, n), metric_id(metric));
  });
}

fpk_status fpk_bootstrap_ci(const double* scores, const int* labels, size_t n, fpk_metric metric, size_t n_boot,
                            uint64_t seed, double level, double* lo, double* hi) {
  return guard([&] {
    need(lo, "lo");
    need(hi, "hi");
    auto ci = fpk::bootstrap_ci(scored(scores, labels, n), metric_id(metric), {n_boot, seed, level});
    *lo = ci.lo;
    *hi = ci.hi;
  });
}

fpk_status fpk_roc_curve(const double* scores, const int* labels, size_t n, double* thresholds, double* fpr,
                         double* tpr, size_t capacity, size_t* count) {
  return guard([&] {
    need(count, "count");
    auto pts = fpk::roc_curve(scored(scores, labels, n));
    *count = pts.size();
    for (size_t i = 0; i < pts.size() && i < capacity; ++i) {
      if (thresholds) thresholds[i] = pts[i].threshold;
      if (fpr) fpr[i] = pts[i].fpr;
      if (tpr) tpr[i] = pts[i].tpr;
    }
  });
}

void fpk_command_options_init(fpk_command_options* o) {
  if (o) *o = fpk_command_options{};
}

fpk_status fpk_validate_config(const fpk_command_options* o, int* all_ok) {
  return guard([&] {
    auto c = load(o);
    log_diagnostics(fpk::validate_experiment(c), sink(o->log, o->log_user), all_ok);
  });
}

fpk_status fpk_validate_files(const char* features_path, const char* manifest_path, fpk_message_fn log,
                              void* log_user, int* all_ok) {
  return guard([&] {
    if (!features_path && !manifest_path) fpk::fail(fpk::ErrorCode::kInvalidArgument, "no paths to validate");
    auto diags = fpk::validate_files(features_path ? features_path : "", manifest_path ? manifest_path : "",
                                     fpk::standard_manipulations());
    log_diagnostics(diags, sink(log, log_user), all_ok);
  });
}

fpk_status fpk_sweep(const fpk_command_options* o, fpk_sweep_summary* summary) {
  return guard([&] {
    auto c = load(o);
    auto s = fpk::run_sweep(c, {o->force != 0, sink(o->log, o->log_user)});
    if (summary) *summary = {s.executed, s.skipped, s.failed};
  });
}

fpk_status fpk_fit_conditioners(const fpk_command_options* o) {
  return guard([&] { fpk::fit_conditioners(load(o), sink(o->log, o->log_user)); });
}

fpk_status fpk_train(const fpk_command_options* o) {
  return guard([&] { fpk::train_probes(load(o), sink(o->log, o->log_user)); });
}

fpk_status fpk_evaluate(const fpk_command_options* o) {
  return guard([&] { fpk::evaluate_probes(load(o), sink(o->log, o->log_user)); });
}

fpk_status fpk_report(const char* output_dir, fpk_message_fn log, void* log_user) {
  return guard([&] {
    need(output_dir, "output_dir");
    auto files = fpk::write_report(output_dir);
    auto s = sink(log, log_user);
    if (s)
      for (const auto& f : files) s(f.string());
  });
}

fpk_status fpk_report_config(const fpk_command_options* o) {
  return guard([&] {
    auto c = load(o);
    auto files = fpk::write_report(c.output_dir);
    if (auto s = sink(o->log, o->log_user))
      for (const auto& f : files) s(f.string());
  });
}

fpk_status fpk_synth_fixture(const char* dir, const char* preset, uint64_t seed, fpk_message_fn log, void* log_user) {
  return guard([&] {
    need(dir, "dir");
    fpk::SynthOptions opts;
    opts.preset = fpk::parse_synth_preset(preset ? preset : "shift");
    opts.seed = seed;
    auto path = fpk::write_synth_fixture(dir, opts);
    if (auto s = sink(log, log_user)) s(path.string());
  });
}

}  // extern "C"
