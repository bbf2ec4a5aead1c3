#include "fpk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fpk/error.hpp"
#include "fpk/rng.hpp"

namespace fpk {

namespace {

void require_same_length(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size()) fail(ErrorCode::kDimMismatch, "scores and labels differ in length");
  for (double v : s.scores)
    if (std::isnan(v)) fail(ErrorCode::kNonFiniteValue, "NaN score");
}

void require_both_classes(const ScoredSet& s) {
  require_same_length(s);
  if (s.positives() == 0 || s.negatives() == 0) fail(ErrorCode::kSingleClass, "both classes are required");
}

// Indices ordered by descending score.
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Cumulative (tp, fp) after each distinct-score group, descending.
struct Sweep {
  std::vector<std::size_t> tp, fp;
  std::vector<double> threshold;
};

Sweep sweep(const ScoredSet& s) {
  auto order = descending_order(s.scores);
  Sweep out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = s.scores[order[i]];
    while (i < order.size() && s.scores[order[i]] == t) {
      if (s.labels[order[i]] == 1) ++tp;
      else ++fp;
      ++i;
    }
    out.tp.push_back(tp);
    out.fp.push_back(fp);
    out.threshold.push_back(t);
  }
  return out;
}

}  // namespace

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredSet::negatives() const { return labels.size() - positives(); }

double roc_auc(const ScoredSet& s) {
  require_both_classes(s);
  std::vector<std::size_t> order(s.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  // Sum of midranks of positives, kept in doubled units so ties stay exact.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) ++j;
    const std::uint64_t doubled_midrank = (i + 1) + j;  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (s.labels[order[k]] == 1) doubled_rank_sum += doubled_midrank;
    i = j;
  }
  const std::uint64_t n_pos = s.positives();
  const std::uint64_t n_neg = s.negatives();
  // U doubled = 2*R - n_pos*(n_pos+1)
  const std::uint64_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const ScoredSet& s) {
  require_same_length(s);
  const std::size_t n_pos = s.positives();
  if (n_pos == 0) fail(ErrorCode::kNoPositives, "average precision needs a positive");
  auto sw = sweep(s);
  double ap = 0.0;
  std::size_t prev_tp = 0;
  for (std::size_t k = 0; k < sw.tp.size(); ++k) {
    if (sw.tp[k] == prev_tp) continue;
    const double recall_step = static_cast<double>(sw.tp[k] - prev_tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(sw.tp[k]) / static_cast<double>(sw.tp[k] + sw.fp[k]);
    ap += recall_step * precision;
    prev_tp = sw.tp[k];
  }
  return ap;
}

std::vector<RocPoint> roc_curve(const ScoredSet& s) {
  require_both_classes(s);
  const auto n_pos = static_cast<double>(s.positives());
  const auto n_neg = static_cast<double>(s.negatives());
  auto sw = sweep(s);
  std::vector<RocPoint> out;
  out.reserve(sw.tp.size() + 1);
  out.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (std::size_t k = 0; k < sw.tp.size(); ++k)
    out.push_back({static_cast<double>(sw.fp[k]) / n_neg, static_cast<double>(sw.tp[k]) / n_pos, sw.threshold[k]});
  return out;
}

double eer(const ScoredSet& s) {
  auto roc = roc_curve(s);
  double prev_diff = roc.front().fpr - (1.0 - roc.front().tpr);
  for (std::size_t k = 1; k < roc.size(); ++k) {
    const double fnr = 1.0 - roc[k].tpr;
    const double diff = roc[k].fpr - fnr;
    if (diff >= 0.0) {
      if (diff == 0.0) return roc[k].fpr;
      const double t = -prev_diff / (diff - prev_diff);
      return roc[k - 1].fpr + t * (roc[k].fpr - roc[k - 1].fpr);
    }
    prev_diff = diff;
  }
  return roc.back().fpr;  // unreachable: the last point has diff = 1
}

double fpr_at_tpr(const ScoredSet& s, double target_tpr) {
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) fail(ErrorCode::kInvalidArgument, "target TPR must be in (0,1]");
  require_both_classes(s);
  const std::size_t n_pos = s.positives();
  const auto n_neg = static_cast<double>(s.negatives());
  // Count-based comparison so that 19 of 20 meets 0.95 exactly.
  const auto needed = static_cast<std::size_t>(std::ceil(target_tpr * static_cast<double>(n_pos) - 1e-9));
  auto sw = sweep(s);
  // fp is non-decreasing along the sweep, so the first qualifying point is the minimum.
  for (std::size_t k = 0; k < sw.tp.size(); ++k)
    if (sw.tp[k] >= needed) return static_cast<double>(sw.fp[k]) / n_neg;
  return 1.0;
}

std::string_view metric_name(MetricId id) noexcept {
  switch (id) {
    case MetricId::kAUC: return "auc";
    case MetricId::kAP: return "ap";
    case MetricId::kEER: return "eer";
    case MetricId::kFPR95: return "fpr_at_95";
  }
  return "?";
}

double compute_metric(const ScoredSet& s, MetricId id) {
  switch (id) {
    case MetricId::kAUC: return roc_auc(s);
    case MetricId::kAP: return average_precision(s);
    case MetricId::kEER: return eer(s);
    case MetricId::kFPR95: return fpr_at_tpr(s, 0.95);
  }
  fail(ErrorCode::kInternal, "unknown metric");
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorCode::kInvalidArgument, "quantile of empty set");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

ScoredSet resample(const ScoredSet& s, const std::vector<std::size_t>& pos, const std::vector<std::size_t>& neg,
                   Rng& rng) {
  ScoredSet out;
  out.unit = s.unit;
  out.scores.reserve(s.scores.size());
  out.labels.reserve(s.scores.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    auto idx = pos[rng.uniform_index(pos.size())];
    out.scores.push_back(s.scores[idx]);
    out.labels.push_back(1);
  }
  for (std::size_t i = 0; i < neg.size(); ++i) {
    auto idx = neg[rng.uniform_index(neg.size())];
    out.scores.push_back(s.scores[idx]);
    out.labels.push_back(0);
  }
  return out;
}

void split_classes(const ScoredSet& s, std::vector<std::size_t>& pos, std::vector<std::size_t>& neg) {
  for (std::size_t i = 0; i < s.labels.size(); ++i) (s.labels[i] == 1 ? pos : neg).push_back(i);
}

void check_bootstrap(const ScoredSet& s, const BootstrapOptions& o) {
  if (s.unit != ScoreUnit::kVideo) fail(ErrorCode::kInvalidArgument, "bootstrap resamples videos");
  require_both_classes(s);
  if (o.n_boot == 0) fail(ErrorCode::kInvalidArgument, "n_boot must be positive");
  if (!(o.level > 0.0 && o.level < 1.0)) fail(ErrorCode::kInvalidArgument, "level must be in (0,1)");
}

Interval percentile_interval(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - level;
  return {quantile_sorted(values, alpha / 2.0), quantile_sorted(values, 1.0 - alpha / 2.0)};
}

}  // namespace

std::vector<double> bootstrap_replicates(const ScoredSet& videos, MetricId metric, const BootstrapOptions& options) {
  check_bootstrap(videos, options);
  std::vector<std::size_t> pos, neg;
  split_classes(videos, pos, neg);
  std::vector<double> values(options.n_boot);
  for (std::size_t r = 0; r < options.n_boot; ++r) {
    Rng rng(derive_seed(options.seed, r));
    values[r] = compute_metric(resample(videos, pos, neg, rng), metric);
  }
  return values;
}

Interval bootstrap_ci(const ScoredSet& videos, MetricId metric, const BootstrapOptions& options) {
  return percentile_interval(bootstrap_replicates(videos, metric, options), options.level);
}

Interval bootstrap_fold_mean_ci(std::span<const ScoredSet> folds, MetricId metric, const BootstrapOptions& options) {
  if (folds.empty()) fail(ErrorCode::kInvalidArgument, "no folds");
  std::vector<std::vector<std::size_t>> pos(folds.size()), neg(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    check_bootstrap(folds[f], options);
    split_classes(folds[f], pos[f], neg[f]);
  }
  std::vector<double> values(options.n_boot);
  for (std::size_t r = 0; r < options.n_boot; ++r) {
    const auto replicate_seed = derive_seed(options.seed, r);
    double sum = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      Rng rng(derive_seed(replicate_seed, f));
      sum += compute_metric(resample(folds[f], pos[f], neg[f], rng), metric);
    }
    values[r] = sum / static_cast<double>(folds.size());
  }
  return percentile_interval(std::move(values), options.level);
}

MetricReport evaluate(const ScoredSet& videos, const std::optional<BootstrapOptions>& bootstrap) {
  MetricReport r;
  r.auc = roc_auc(videos);
  r.ap = average_precision(videos);
  r.eer = eer(videos);
  r.fpr_at_95 = fpr_at_tpr(videos, 0.95);
  r.n_positive = videos.positives();
  r.n_negative = videos.negatives();
  if (bootstrap) {
    r.auc_ci = bootstrap_ci(videos, MetricId::kAUC, *bootstrap);
    r.ap_ci = bootstrap_ci(videos, MetricId::kAP, *bootstrap);
    r.eer_ci = bootstrap_ci(videos, MetricId::kEER, *bootstrap);
    r.fpr_at_95_ci = bootstrap_ci(videos, MetricId::kFPR95, *bootstrap);
    r.n_boot = bootstrap->n_boot;
    r.seed = bootstrap->seed;
  }
  return r;
}

}  // namespace fpk
