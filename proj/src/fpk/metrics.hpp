#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace fpk {

enum class ScoreUnit { kFrame, kVideo };

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 1 = positive (fake)
  ScoreUnit unit = ScoreUnit::kVideo;

  std::size_t positives() const;
  std::size_t negatives() const;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) sentinel
};

// Mann-Whitney AUC with half credit for ties, O(n log n).
double roc_auc(const ScoredSet& s);
// Step-interpolated average precision; tied scores share one threshold.
double average_precision(const ScoredSet& s);
// One point per unique score (descending), prefixed by the +inf sentinel.
std::vector<RocPoint> roc_curve(const ScoredSet& s);
// Crossing of FPR and FNR along the ROC, linearly interpolated.
double eer(const ScoredSet& s);
// Minimum FPR over ROC points with TPR >= target (no interpolation).
double fpr_at_tpr(const ScoredSet& s, double target_tpr = 0.95);

enum class MetricId { kAUC, kAP, kEER, kFPR95 };
std::string_view metric_name(MetricId id) noexcept;
double compute_metric(const ScoredSet& s, MetricId id);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapOptions {
  std::size_t n_boot = 1000;
  std::uint64_t seed = 0;
  double level = 0.95;
};

// Linear-interpolated (type 7) empirical quantile of sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

// Class-stratified video bootstrap, percentile interval. Replicate r draws
// from Rng(derive_seed(seed, r)): first the positives, then the negatives,
// each by uniform_index over that class's members in input order.
Interval bootstrap_ci(const ScoredSet& videos, MetricId metric, const BootstrapOptions& options = {});

// Per-replicate metric values, in replicate order (exposed for oracles).
std::vector<double> bootstrap_replicates(const ScoredSet& videos, MetricId metric, const BootstrapOptions& options);

// CI of the mean-of-folds statistic: each replicate resamples every fold
// (stream derive_seed(derive_seed(seed, r), fold)) and averages the fold
// metrics.
Interval bootstrap_fold_mean_ci(std::span<const ScoredSet> folds, MetricId metric, const BootstrapOptions& options = {});

struct MetricReport {
  double auc = 0.0;
  double ap = 0.0;
  double eer = 0.0;
  double fpr_at_95 = 0.0;
  std::optional<Interval> auc_ci, ap_ci, eer_ci, fpr_at_95_ci;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
};

MetricReport evaluate(const ScoredSet& videos, const std::optional<BootstrapOptions>& bootstrap = std::nullopt);

}  // namespace fpk
