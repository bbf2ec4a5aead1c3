#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fpk/conditioning.hpp"
#include "fpk/metrics.hpp"
#include "fpk/protocols.hpp"

namespace fpk {

// One scored fold found under <out>/artifacts, with its metric report when
// <out>/metrics has one.
struct ReportEntry {
  ScoreArtifact artifact;
  MetricReport metrics;
  std::optional<Interval> fold_mean_ci;  // LOMO-pooled only
};

std::vector<ReportEntry> load_report_entries(const std::filesystem::path& out_dir);

struct WinnerRow {
  std::string protocol;
  ConditionKind winner = ConditionKind::kLN;
  double auc = 0.0;
  bool tie = false;
};

// Argmax of AUC per protocol column; ties go to the lexicographically
// smallest condition name and are flagged.
std::vector<WinnerRow> winner_table(const std::map<std::string, std::map<ConditionKind, double>>& auc_by_protocol);

// Protocol column -> condition -> video AUC. Columns: ID, each LOMO fold,
// LOMO-mean, LOMO-pooled, each XD set, XD-mean.
std::map<std::string, std::map<ConditionKind, double>> auc_columns(const std::vector<ReportEntry>& entries);

// Writes the CSV tables under <out>/reports and returns their paths.
// Throws MissingArtifacts when nothing has been scored yet.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& out_dir);

}  // namespace fpk
