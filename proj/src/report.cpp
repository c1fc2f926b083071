#include "synthabsa/report.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "synthabsa/errors.hpp"
#include "synthabsa/stats.hpp"

namespace synthabsa {

using nlohmann::ordered_json;

namespace {

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string cell(const std::optional<double>& v, int precision) {
  return v ? fmt::format("{:.{}f}", *v, precision) : std::string("n/a");
}

ordered_json extreme_json(const AspectExtremeRow& r) {
  return {{"Model", r.model},     {"Group", r.group},           {"Aspect", r.aspect},
          {"F1", r.f1},           {"Sentiment MSE", optional_number(r.sentiment_mse)},
          {"Precision", r.precision}, {"Recall", r.recall}};
}

}  // namespace

AspectExtremes aspect_extremes(const EvalReport& report, const AspectInventory& inventory, std::size_t n) {
  std::vector<AspectExtremeRow> rows;
  for (const auto& a : report.detection.per_aspect) {
    AspectExtremeRow r;
    r.model = report.approach;
    r.aspect = a.aspect;
    r.group = inventory.contains(a.aspect) ? inventory.group_of(a.aspect) : std::string();
    r.f1 = a.metrics.f1;
    r.sentiment_mse = report.sentiment.aspect_mse(a.aspect);
    r.precision = a.metrics.precision;
    r.recall = a.metrics.recall;
    rows.push_back(std::move(r));
  }
  AspectExtremes out;
  out.model = report.approach;
  const std::size_t k = std::min(n, rows.size());
  auto desc = rows;
  std::stable_sort(desc.begin(), desc.end(), [](const auto& a, const auto& b) { return a.f1 > b.f1; });
  out.strongest.assign(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(k));
  auto asc = rows;
  std::stable_sort(asc.begin(), asc.end(), [](const auto& a, const auto& b) { return a.f1 < b.f1; });
  out.weakest.assign(asc.begin(), asc.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

BenchmarkReport emit_report(std::span<const EvalReport> reports, const AspectInventory& inventory) {
  if (reports.empty()) throw ArgumentError("no evaluation reports to merge");
  BenchmarkReport out;
  out.split_id = reports.front().split_id;
  for (const auto& r : reports)
    if (r.split_id != out.split_id)
      throw ContractError(fmt::format("refusing to merge reports from different splits: '{}' ({}) vs '{}' ({})",
                                      out.split_id, reports.front().approach, r.split_id, r.approach));

  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return reports[a].detection.aggregates.micro_f1 > reports[b].detection.aggregates.micro_f1;
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = reports[order[i]];
    const auto& agg = r.detection.aggregates;
    out.rows.push_back({i + 1, r.approach, agg.micro_f1, agg.macro_f1, agg.micro_recall, r.sentiment.mse,
                        r.runtime_minutes});
    out.diagnostics.push_back({r.approach, agg.macro_balanced_accuracy, agg.macro_specificity, agg.macro_mcc});
    out.extremes.push_back(aspect_extremes(r, inventory));
  }
  return out;
}

ordered_json to_json(const BenchmarkReport& report) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json runtime = nullptr;
    if (r.runtime_minutes) runtime = fmt::format("{:.2f}", *r.runtime_minutes);
    rows.push_back({{"Rank", r.rank},
                    {"Approach", r.approach},
                    {"Micro-F1", r.micro_f1},
                    {"Macro-F1", r.macro_f1},
                    {"Micro-recall", r.micro_recall},
                    {"Sentiment MSE", optional_number(r.sentiment_mse)},
                    {"Runtime (min)", runtime}});
  }
  ordered_json diag = ordered_json::array();
  for (const auto& d : report.diagnostics)
    diag.push_back({{"Approach", d.approach},
                    {"Balanced accuracy", d.macro_balanced_accuracy},
                    {"Specificity", d.macro_specificity},
                    {"MCC", d.macro_mcc}});
  ordered_json strongest = ordered_json::array(), weakest = ordered_json::array();
  for (const auto& e : report.extremes) {
    for (const auto& r : e.strongest) strongest.push_back(extreme_json(r));
    for (const auto& r : e.weakest) weakest.push_back(extreme_json(r));
  }
  return {{"schema", "synthabsa.benchmark_report.v1"},
          {"split_id", report.split_id},
          {"ranking", std::move(rows)},
          {"diagnostics", std::move(diag)},
          {"strongest_aspects", std::move(strongest)},
          {"weakest_aspects", std::move(weakest)}};
}

std::string render_table(const BenchmarkReport& report) {
  std::string out = fmt::format("split {}\n", report.split_id);
  out += fmt::format("{:<5} {:<28} {:>9} {:>9} {:>12} {:>14} {:>13}\n", "Rank", "Approach", "Micro-F1", "Macro-F1",
                     "Micro-recall", "Sentiment MSE", "Runtime (min)");
  for (const auto& r : report.rows)
    out += fmt::format("{:<5} {:<28} {:>9.4f} {:>9.4f} {:>12.4f} {:>14} {:>13}\n", r.rank, r.approach, r.micro_f1,
                       r.macro_f1, r.micro_recall, cell(r.sentiment_mse, 4), cell(r.runtime_minutes, 2));
  out += "\n";
  out += fmt::format("{:<28} {:>17} {:>11} {:>8}\n", "Approach", "Balanced accuracy", "Specificity", "MCC");
  for (const auto& d : report.diagnostics)
    out += fmt::format("{:<28} {:>17.4f} {:>11.4f} {:>8.4f}\n", d.approach, d.macro_balanced_accuracy,
                       d.macro_specificity, d.macro_mcc);
  for (const auto& e : report.extremes) {
    out += fmt::format("\n{}: strongest / weakest aspects\n", e.model);
    for (const auto* rows : {&e.strongest, &e.weakest})
      for (const auto& r : *rows)
        out += fmt::format("  {:<8} {:<34} {:<24} F1 {:.4f}  P {:.4f}  R {:.4f}  MSE {}\n",
                           rows == &e.strongest ? "top" : "bottom", r.group, r.aspect, r.f1, r.precision, r.recall,
                           cell(r.sentiment_mse, 4));
  }
  return out;
}

StabilitySummary stability_summary(std::string approach, std::span<const std::uint64_t> seeds,
                                   std::span<const EvalReport> reports) {
  if (seeds.size() < 2) throw ArgumentError("a seed sweep needs at least two seeds");
  if (seeds.size() != reports.size())
    throw ArgumentError(fmt::format("{} seeds but {} reports", seeds.size(), reports.size()));
  StabilitySummary s;
  s.approach = std::move(approach);
  s.seeds.assign(seeds.begin(), seeds.end());
  std::vector<double> f1, mse;
  for (const auto& r : reports) {
    f1.push_back(r.detection.aggregates.micro_f1);
    if (r.sentiment.mse) mse.push_back(*r.sentiment.mse);
  }
  s.micro_f1_mean = sample_mean(f1);
  s.micro_f1_std = sample_std(f1);
  if (mse.size() == reports.size()) {
    s.sentiment_mse_mean = sample_mean(mse);
    s.sentiment_mse_std = sample_std(mse);
  }
  return s;
}

StabilitySummary seed_sweep(std::string approach, std::span<const std::uint64_t> seeds,
                            const std::function<EvalReport(std::uint64_t)>& run, std::vector<EvalReport>* completed) {
  if (seeds.size() < 2) throw ArgumentError("a seed sweep needs at least two seeds");
  std::vector<EvalReport> local;
  auto& reports = completed ? *completed : local;
  reports.clear();
  for (auto seed : seeds) reports.push_back(run(seed));
  return stability_summary(std::move(approach), seeds, reports);
}

ordered_json to_json(const StabilitySummary& summary) {
  return {{"Approach", summary.approach},
          {"Seeds", summary.seeds},
          {"Micro-F1 mean", summary.micro_f1_mean},
          {"Micro-F1 std", summary.micro_f1_std},
          {"Sentiment MSE mean", optional_number(summary.sentiment_mse_mean)},
          {"Sentiment MSE std", optional_number(summary.sentiment_mse_std)}};
}

}  // namespace synthabsa
