#pragma once

// Benchmark tables merged from evaluation reports, per-aspect extremes and
// seed-stability summaries.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/metrics.hpp"
#include "synthabsa/schema.hpp"

namespace synthabsa {

struct BenchmarkRow {
  std::size_t rank = 0;
  std::string approach;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double micro_recall = 0.0;
  std::optional<double> sentiment_mse;
  std::optional<double> runtime_minutes;  // machine dependent
};

struct DiagnosticsRow {
  std::string approach;
  double macro_balanced_accuracy = 0.0;
  double macro_specificity = 0.0;
  double macro_mcc = 0.0;
};

struct AspectExtremeRow {
  std::string model;
  std::string group;
  std::string aspect;
  double f1 = 0.0;
  std::optional<double> sentiment_mse;
  double precision = 0.0;
  double recall = 0.0;
};

struct AspectExtremes {
  std::string model;
  std::vector<AspectExtremeRow> strongest;  // F1 descending
  std::vector<AspectExtremeRow> weakest;    // F1 ascending
};

struct BenchmarkReport {
  std::string split_id;
  std::vector<BenchmarkRow> rows;  // micro-F1 descending
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<AspectExtremes> extremes;
};

/// Top and bottom `n` aspects by F1; ties resolve in report aspect order.
AspectExtremes aspect_extremes(const EvalReport& report, const AspectInventory& inventory, std::size_t n = 5);

/// Throws ContractError when the reports disagree on split id, and
/// ArgumentError for an empty input.
BenchmarkReport emit_report(std::span<const EvalReport> reports,
                            const AspectInventory& inventory = default_aspect_inventory());

nlohmann::ordered_json to_json(const BenchmarkReport& report);
/// Fixed-width text rendering of the ranked table and the diagnostics.
std::string render_table(const BenchmarkReport& report);

struct StabilitySummary {
  std::string approach;
  std::vector<std::uint64_t> seeds;
  double micro_f1_mean = 0.0;
  double micro_f1_std = 0.0;  // sample standard deviation
  std::optional<double> sentiment_mse_mean;
  std::optional<double> sentiment_mse_std;
};

/// One report per seed, same order. Throws ArgumentError for fewer than two seeds
/// or a size mismatch.
StabilitySummary stability_summary(std::string approach, std::span<const std::uint64_t> seeds,
                                   std::span<const EvalReport> reports);

/// Runs `run` once per seed and summarizes. A failing run aborts the sweep;
/// the reports gathered so far stay in `completed`.
StabilitySummary seed_sweep(std::string approach, std::span<const std::uint64_t> seeds,
                            const std::function<EvalReport(std::uint64_t)>& run,
                            std::vector<EvalReport>* completed = nullptr);

nlohmann::ordered_json to_json(const StabilitySummary& summary);

}  // namespace synthabsa
