#include "fpk/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "fpk/bytes.hpp"
#include "fpk/error.hpp"
#include "fpk/experiment.hpp"

namespace fpk {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_lomo_fold(const ReportEntry& e) { return e.artifact.protocol.kind == ProtocolKind::kLOMO && !e.artifact.pooled; }
bool is_lomo_pooled(const ReportEntry& e) { return e.artifact.pooled; }
bool is_xd(const ReportEntry& e) { return e.artifact.protocol.kind == ProtocolKind::kCrossDataset; }
bool is_id(const ReportEntry& e) { return e.artifact.protocol.kind == ProtocolKind::kID; }

std::string num(double v) { return format_double(v); }
std::string num(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string ci_cells(const std::optional<Interval>& ci) {
  return ci ? num(ci->lo) + "," + num(ci->hi) : std::string(",");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::string metric_table(const std::vector<const ReportEntry*>& rows, bool with_val) {
  std::string out = "condition,fold,n_positive,n_negative,auc,auc_ci_lo,auc_ci_hi,ap,ap_ci_lo,ap_ci_hi,"
                    "eer,eer_ci_lo,eer_ci_hi,fpr_at_95,fpr_at_95_ci_lo,fpr_at_95_ci_hi";
  out += with_val ? ",val_auc\n" : "\n";
  for (const auto* e : rows) {
    const auto& m = e->metrics;
    out += std::string(condition_name(e->artifact.condition)) + "," + e->artifact.fold + "," +
           std::to_string(m.n_positive) + "," + std::to_string(m.n_negative) + "," + num(m.auc) + "," +
           ci_cells(m.auc_ci) + "," + num(m.ap) + "," + ci_cells(m.ap_ci) + "," + num(m.eer) + "," +
           ci_cells(m.eer_ci) + "," + num(m.fpr_at_95) + "," + ci_cells(m.fpr_at_95_ci);
    if (with_val) out += "," + num(e->artifact.provenance.val_auc);
    out += "\n";
  }
  return out;
}

// Canonical condition order, then fold name.
bool entry_less(const ReportEntry* a, const ReportEntry* b) {
  if (a->artifact.condition != b->artifact.condition) return a->artifact.condition < b->artifact.condition;
  return a->artifact.fold < b->artifact.fold;
}

std::vector<const ReportEntry*> pick(const std::vector<ReportEntry>& entries, bool (*pred)(const ReportEntry&)) {
  std::vector<const ReportEntry*> out;
  for (const auto& e : entries)
    if (pred(e)) out.push_back(&e);
  std::sort(out.begin(), out.end(), entry_less);
  return out;
}

std::vector<std::string> fold_names(const std::vector<const ReportEntry*>& rows) {
  std::set<std::string> names;
  for (const auto* e : rows) names.insert(e->artifact.fold);
  return {names.begin(), names.end()};
}

}  // namespace

std::vector<ReportEntry> load_report_entries(const fs::path& out_dir) {
  std::vector<ReportEntry> entries;
  const auto root = out_dir / "artifacts";
  std::error_code ec;
  if (!fs::is_directory(root, ec)) return entries;
  std::vector<fs::path> files;
  for (const auto& item : fs::recursive_directory_iterator(root))
    if (item.is_regular_file() && item.path().extension() == ".json") files.push_back(item.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    ReportEntry e;
    e.artifact = read_artifact(path);
    auto mpath = metrics_path(out_dir, e.artifact.condition, e.artifact.fold);
    if (fs::exists(mpath, ec)) {
      auto doc = json::parse(read_file_text(mpath), nullptr, false);
      if (doc.is_discarded()) fail(ErrorCode::kSchemaError, mpath.string() + ": malformed metric report");
      e.metrics = metric_report_from_json(doc);
      if (doc.contains("fold_mean")) {
        const auto& ci = doc.at("fold_mean").at("ci");
        e.fold_mean_ci = Interval{ci.at(0).get<double>(), ci.at(1).get<double>()};
      }
    } else {
      e.metrics = evaluate(e.artifact.video_set());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::map<std::string, std::map<ConditionKind, double>> auc_columns(const std::vector<ReportEntry>& entries) {
  std::map<std::string, std::map<ConditionKind, double>> cols;
  std::map<ConditionKind, std::vector<double>> lomo, xd;
  for (const auto& e : entries) {
    const double auc = roc_auc(e.artifact.video_set());
    cols[e.artifact.fold][e.artifact.condition] = auc;
    if (is_lomo_fold(e)) lomo[e.artifact.condition].push_back(auc);
    if (is_xd(e)) xd[e.artifact.condition].push_back(auc);
  }
  for (const auto& [kind, v] : lomo) cols["LOMO-mean"][kind] = mean_of(v);
  for (const auto& [kind, v] : xd) cols["XD-mean"][kind] = mean_of(v);
  return cols;
}

std::vector<WinnerRow> winner_table(const std::map<std::string, std::map<ConditionKind, double>>& auc_by_protocol) {
  std::vector<WinnerRow> rows;
  for (const auto& [protocol, by_kind] : auc_by_protocol) {
    if (by_kind.empty()) continue;
    std::optional<WinnerRow> best;
    for (const auto& [kind, auc] : by_kind) {
      if (!best || auc > best->auc ||
          (auc == best->auc && condition_name(kind) < condition_name(best->winner))) {
        const bool tie = best && auc == best->auc;
        best = WinnerRow{protocol, kind, auc, tie};
      } else if (auc == best->auc) {
        best->tie = true;
      }
    }
    rows.push_back(*best);
  }
  return rows;
}

std::vector<fs::path> write_report(const fs::path& out_dir) {
  auto entries = load_report_entries(out_dir);
  if (entries.empty()) fail(ErrorCode::kMissingArtifacts, "no score artifacts under " + (out_dir / "artifacts").string());
  const auto dir = out_dir / "reports";
  std::vector<fs::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    write_file_atomic(dir / name, text);
    written.push_back(dir / name);
  };

  const auto id = pick(entries, is_id);
  const auto folds = pick(entries, is_lomo_fold);
  const auto pooled = pick(entries, is_lomo_pooled);
  const auto xd = pick(entries, is_xd);
  put("table_id.csv", metric_table(id, true));
  put("table_lomo_folds.csv", metric_table(folds, true));
  put("table_lomo_pooled.csv", metric_table(pooled, false));
  put("table_xd.csv", metric_table(xd, false));

  // Fold-averaged LOMO summary; the pooled AUC is a separate column.
  {
    std::map<ConditionKind, std::vector<double>> aucs;
    for (const auto* e : folds) aucs[e->artifact.condition].push_back(roc_auc(e->artifact.video_set()));
    std::map<ConditionKind, const ReportEntry*> pooled_by;
    for (const auto* e : pooled) pooled_by[e->artifact.condition] = e;
    std::string out = "condition,n_folds,mean_auc,std_auc,mean_auc_ci_lo,mean_auc_ci_hi,pooled_auc\n";
    for (const auto& [kind, v] : aucs) {
      out += std::string(condition_name(kind)) + "," + std::to_string(v.size()) + "," + num(mean_of(v)) + "," +
             num(pop_std(v)) + ",";
      auto it = pooled_by.find(kind);
      if (it != pooled_by.end()) {
        out += ci_cells(it->second->fold_mean_ci) + "," + num(it->second->metrics.auc);
      } else {
        out += ",,";
      }
      out += "\n";
    }
    put("table_lomo_summary.csv", out);
  }

  // Combined cross-dataset summary.
  {
    const auto sets = fold_names(xd);
    std::map<ConditionKind, std::map<std::string, double>> by;
    for (const auto* e : xd) by[e->artifact.condition][e->artifact.fold] = e->metrics.auc;
    std::string out = "condition";
    for (const auto& s : sets) out += "," + s + "_auc";
    out += ",mean_xd_auc\n";
    for (const auto& [kind, m] : by) {
      out += condition_name(kind);
      std::vector<double> v;
      for (const auto& s : sets) {
        auto it = m.find(s);
        out += ",";
        if (it != m.end()) {
          out += num(it->second);
          v.push_back(it->second);
        }
      }
      out += "," + (v.size() == sets.size() ? num(mean_of(v)) : std::string()) + "\n";
    }
    put("table_xd_summary.csv", out);
  }

  const auto cols = auc_columns(entries);
  {
    std::string out = "protocol";
    for (auto kind : all_conditions()) out += "," + std::string(condition_name(kind));
    out += "\n";
    for (const auto& [protocol, by_kind] : cols) {
      out += protocol;
      for (auto kind : all_conditions()) {
        auto it = by_kind.find(kind);
        out += "," + (it != by_kind.end() ? num(it->second) : std::string());
      }
      out += "\n";
    }
    put("heatmap_auc.csv", out);
  }

  // ROC points per protocol column, all conditions stacked.
  {
    std::map<std::string, std::vector<const ReportEntry*>> by_fold;
    for (const auto& e : entries) by_fold[e.artifact.fold].push_back(&e);
    for (auto& [fold, list] : by_fold) {
      std::sort(list.begin(), list.end(), entry_less);
      std::string out = "condition,threshold,fpr,tpr\n";
      for (const auto* e : list)
        for (const auto& p : roc_curve(e->artifact.video_set()))
          out += std::string(condition_name(e->artifact.condition)) + "," + num(p.threshold) + "," + num(p.fpr) +
                 "," + num(p.tpr) + "\n";
      put("roc_" + fold + ".csv", out);
    }
  }

  {
    std::string out = "protocol,winner,auc,tie\n";
    for (const auto& w : winner_table(cols))
      out += w.protocol + "," + std::string(condition_name(w.winner)) + "," + num(w.auc) + "," + (w.tie ? "1" : "0") + "\n";
    put("winners.csv", out);
  }
  return written;
}

}  // namespace fpk
