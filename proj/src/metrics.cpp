#include "synthabsa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;

AspectConfusion ConfusionCounts::pooled() const noexcept {
  AspectConfusion total;
  for (const auto& c : counts) total += c;
  return total;
}

ConfusionCounts confusion_counts(std::span<const LabelSet> gold, std::span<const AspectSet> pred,
                                 std::span<const std::string> aspects) {
  if (gold.size() != pred.size())
    throw ArgumentError("gold and predictions differ in length: " + std::to_string(gold.size()) +
                        " vs " + std::to_string(pred.size()));
  std::map<std::string_view, std::size_t> index;
  for (std::size_t a = 0; a < aspects.size(); ++a) index.emplace(aspects[a], a);

  ConfusionCounts out;
  out.aspects.assign(aspects.begin(), aspects.end());
  out.counts.assign(aspects.size(), {});
  out.n_reviews = gold.size();
  std::vector<char> in_gold(aspects.size()), in_pred(aspects.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::fill(in_gold.begin(), in_gold.end(), 0);
    std::fill(in_pred.begin(), in_pred.end(), 0);
    for (const auto& e : gold[i]) {
      auto it = index.find(e.aspect);
      if (it == index.end())
        throw ArgumentError("gold aspect '" + e.aspect + "' is outside the evaluated aspects");
      in_gold[it->second] = 1;
    }
    for (const auto& a : pred[i]) {
      auto it = index.find(a);
      if (it == index.end())
        throw ArgumentError("predicted aspect '" + a + "' is outside the evaluated aspects");
      in_pred[it->second] = 1;
    }
    for (std::size_t a = 0; a < aspects.size(); ++a) {
      auto& c = out.counts[a];
      if (in_gold[a] && in_pred[a]) ++c.tp;
      else if (in_pred[a]) ++c.fp;
      else if (in_gold[a]) ++c.fn;
      else ++c.tn;
    }
  }
  return out;
}

BinaryMetrics binary_metrics(const AspectConfusion& c) noexcept {
  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  BinaryMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * m.precision * m.recall, m.precision + m.recall);
  m.specificity = ratio(tn, tn + fp);
  m.balanced_accuracy = 0.5 * (m.recall + m.specificity);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = den > 0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
  return m;
}

DetectionReport detection_report(const ConfusionCounts& counts) {
  DetectionReport report;
  report.per_aspect.reserve(counts.counts.size());
  auto& agg = report.aggregates;
  for (std::size_t a = 0; a < counts.counts.size(); ++a) {
    const auto& c = counts.counts[a];
    AspectMetrics m{counts.aspects[a], c, binary_metrics(c), c.tp + c.fn};
    agg.macro_precision += m.metrics.precision;
    agg.macro_recall += m.metrics.recall;
    agg.macro_f1 += m.metrics.f1;
    agg.macro_balanced_accuracy += m.metrics.balanced_accuracy;
    agg.macro_specificity += m.metrics.specificity;
    agg.macro_mcc += m.metrics.mcc;
    report.per_aspect.push_back(std::move(m));
  }
  if (!counts.counts.empty()) {
    const double k = static_cast<double>(counts.counts.size());
    agg.macro_precision /= k;
    agg.macro_recall /= k;
    agg.macro_f1 /= k;
    agg.macro_balanced_accuracy /= k;
    agg.macro_specificity /= k;
    agg.macro_mcc /= k;
  }
  const auto pooled = binary_metrics(counts.pooled());
  agg.micro_precision = pooled.precision;
  agg.micro_recall = pooled.recall;
  agg.micro_f1 = pooled.f1;
  return report;
}

std::optional<double> SentimentError::aspect_mse(std::string_view aspect) const {
  for (const auto& [a, acc] : per_aspect)
    if (a == aspect && acc.second > 0) return acc.first / static_cast<double>(acc.second);
  return std::nullopt;
}

SentimentError sentiment_mse(std::span<const LabelSet> gold, std::span<const SentimentScores> pred,
                             SentimentView view) {
  if (gold.size() != pred.size()) throw ArgumentError("gold and sentiment predictions differ in length");
  SentimentError out;
  double total = 0.0;
  auto add = [&](const std::string& aspect, double score, double target) {
    const double sq = (score - target) * (score - target);
    total += sq;
    ++out.pairs;
    auto& acc = out.per_aspect[aspect];
    acc.first += sq;
    ++acc.second;
  };
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& [aspect, score] : pred[i])
      if (!(score >= -1.0 && score <= 1.0))
        throw ArgumentError("sentiment score for '" + aspect + "' is outside [-1, 1]");
    if (view == SentimentView::detected) {
      for (const auto& [aspect, score] : pred[i]) {
        const auto g = gold[i].find(aspect);
        add(aspect, score, g ? sentiment_value(*g) : 0.0);
      }
    } else {
      for (const auto& e : gold[i]) {
        auto it = pred[i].find(e.aspect);
        add(e.aspect, it == pred[i].end() ? 0.0 : it->second, sentiment_value(e.sentiment));
      }
    }
  }
  if (out.pairs > 0) out.mse = total / static_cast<double>(out.pairs);
  return out;
}

// ---------------------------------------------------------------------------
// Thresholds

const std::array<double, 19>& threshold_grid() noexcept {
  static const std::array<double, 19> grid = [] {
    std::array<double, 19> g{};
    for (int k = 1; k <= 19; ++k) g[k - 1] = k / 20.0;
    return g;
  }();
  return grid;
}

double ThresholdTable::at(std::string_view aspect) const {
  for (std::size_t a = 0; a < aspects.size(); ++a)
    if (aspects[a] == aspect) return thresholds[a];
  throw ArgumentError("no threshold for aspect '" + std::string(aspect) + "'");
}

ThresholdTable calibrate_thresholds(std::span<const std::vector<double>> scores,
                                    std::span<const LabelSet> gold,
                                    std::span<const std::string> aspects) {
  if (scores.size() != gold.size()) throw ArgumentError("validation scores and gold differ in length");
  for (const auto& row : scores)
    if (row.size() != aspects.size()) throw ArgumentError("score row width differs from aspect count");

  ThresholdTable table;
  table.aspects.assign(aspects.begin(), aspects.end());
  for (std::size_t a = 0; a < aspects.size(); ++a) {
    std::size_t support = 0;
    for (const auto& g : gold) support += g.contains(aspects[a]);
    if (support == 0) {
      table.thresholds.push_back(kDefaultThreshold);
      table.defaulted.push_back(true);
      table.validation_f1.push_back(0.0);
      continue;
    }
    double best_t = threshold_grid().front();
    double best_f1 = -1.0;
    for (double t : threshold_grid()) {
      AspectConfusion c;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool p = scores[i][a] >= t;
        const bool g = gold[i].contains(aspects[a]);
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
      }
      const double f1 = binary_metrics(c).f1;
      if (f1 > best_f1) {  // strict: ties keep the lower threshold
        best_f1 = f1;
        best_t = t;
      }
    }
    table.thresholds.push_back(best_t);
    table.defaulted.push_back(false);
    table.validation_f1.push_back(best_f1);
  }
  return table;
}

json to_json(const ThresholdTable& table) {
  json rows = json::array();
  for (std::size_t a = 0; a < table.aspects.size(); ++a)
    rows.push_back({{"aspect", table.aspects[a]},
                    {"threshold", table.thresholds[a]},
                    {"defaulted", static_cast<bool>(table.defaulted[a])},
                    {"validation_f1", table.validation_f1[a]}});
  return {{"thresholds", rows}};
}

ThresholdTable threshold_table_from_json(const json& j) {
  ThresholdTable table;
  for (const auto& row : j.at("thresholds")) {
    const double t = row.at("threshold").get<double>();
    const auto& grid = threshold_grid();
    if (std::none_of(grid.begin(), grid.end(), [&](double g) { return std::abs(g - t) < 1e-12; }))
      throw SchemaError("threshold " + std::to_string(t) + " is off the calibration grid");
    table.aspects.push_back(row.at("aspect").get<std::string>());
    table.thresholds.push_back(t);
    table.defaulted.push_back(row.value("defaulted", false));
    table.validation_f1.push_back(row.value("validation_f1", 0.0));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Score files

void write_score_file(std::span<const ScoreRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write score file " + path.string());
  for (const auto& r : rows) {
    ordered_json line = {{"id", r.id},
                         {"probabilities", json(r.probabilities)},
                         {"sentiments", json(r.sentiments)}};
    out << line.dump() << '\n';
  }
}

std::vector<ScoreRow> read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read score file " + path.string());
  std::vector<ScoreRow> rows;
  std::string text;
  std::size_t line = 0;
  auto read_map = [&](const json& obj, const char* key, double lo, double hi) {
    SentimentScores out;
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_object()) throw ParseError(std::string("missing object '") + key + "'", line);
    for (const auto& [aspect, v] : it->items()) {
      if (!v.is_number()) throw ParseError(std::string(key) + " value for '" + aspect + "' is not a number", line);
      const double x = v.get<double>();
      if (!(x >= lo && x <= hi))
        throw ParseError(std::string(key) + " value for '" + aspect + "' is out of range", line);
      out.emplace(aspect, x);
    }
    return out;
  };
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line);
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string())
      throw ParseError("score row needs a string 'id'", line);
    rows.push_back({obj["id"].get<std::string>(), read_map(obj, "probabilities", 0.0, 1.0),
                    read_map(obj, "sentiments", -1.0, 1.0)});
  }
  return rows;
}

Predictions apply_thresholds(std::span<const ScoreRow> rows, const ThresholdTable& thresholds) {
  Predictions out;
  out.aspects.reserve(rows.size());
  out.sentiments.reserve(rows.size());
  for (const auto& r : rows) {
    AspectSet present;
    SentimentScores scores;
    for (std::size_t a = 0; a < thresholds.aspects.size(); ++a) {
      const auto& aspect = thresholds.aspects[a];
      auto p = r.probabilities.find(aspect);
      if (p == r.probabilities.end() || p->second < thresholds.thresholds[a]) continue;
      present.insert(aspect);
      auto s = r.sentiments.find(aspect);
      scores[aspect] = s == r.sentiments.end() ? 0.0 : std::clamp(s->second, -1.0, 1.0);
    }
    out.aspects.push_back(std::move(present));
    out.sentiments.push_back(std::move(scores));
  }
  return out;
}

std::vector<std::vector<double>> probability_matrix(std::span<const ScoreRow> rows,
                                                    std::span<const std::string> aspects) {
  std::vector<std::vector<double>> m;
  m.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<double> row(aspects.size(), 0.0);
    for (std::size_t a = 0; a < aspects.size(); ++a)
      if (auto it = r.probabilities.find(aspects[a]); it != r.probabilities.end()) row[a] = it->second;
    m.push_back(std::move(row));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Reports

EvalReport evaluate_predictions(std::string approach, std::span<const LabelSet> gold,
                                std::span<const AspectSet> predicted,
                                std::span<const SentimentScores> scores,
                                std::span<const std::string> aspects, SentimentView view) {
  EvalReport report;
  report.approach = std::move(approach);
  report.aspects.assign(aspects.begin(), aspects.end());
  report.counts = confusion_counts(gold, predicted, aspects);
  report.detection = detection_report(report.counts);
  report.sentiment = sentiment_mse(gold, scores, view);
  report.sentiment_view = view;
  return report;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

ordered_json ordered(const json& j) { return ordered_json::parse(j.dump()); }

}  // namespace

ordered_json to_json(const EvalReport& r) {
  ordered_json per_aspect = ordered_json::array();
  for (const auto& m : r.detection.per_aspect) {
    per_aspect.push_back({{"aspect", m.aspect},
                          {"tp", m.counts.tp},
                          {"fp", m.counts.fp},
                          {"fn", m.counts.fn},
                          {"tn", m.counts.tn},
                          {"support", m.support},
                          {"precision", m.metrics.precision},
                          {"recall", m.metrics.recall},
                          {"f1", m.metrics.f1},
                          {"specificity", m.metrics.specificity},
                          {"balanced_accuracy", m.metrics.balanced_accuracy},
                          {"mcc", m.metrics.mcc},
                          {"sentiment_mse", opt(r.sentiment.aspect_mse(m.aspect))}});
  }
  const auto& a = r.detection.aggregates;
  ordered_json sentiment_per_aspect = ordered_json::object();
  for (const auto& [aspect, acc] : r.sentiment.per_aspect)
    sentiment_per_aspect[aspect] = {{"sum_sq", acc.first}, {"pairs", acc.second}};
  ordered_json out = {
      {"schema", kEvalReportSchema},
      {"approach", r.approach},
      {"split_id", r.split_id},
      {"n_reviews", r.counts.n_reviews},
      {"aspects", r.aspects},
      {"aggregates",
       {{"micro_precision", a.micro_precision},
        {"micro_recall", a.micro_recall},
        {"micro_f1", a.micro_f1},
        {"macro_precision", a.macro_precision},
        {"macro_recall", a.macro_recall},
        {"macro_f1", a.macro_f1},
        {"macro_balanced_accuracy", a.macro_balanced_accuracy},
        {"macro_specificity", a.macro_specificity},
        {"macro_mcc", a.macro_mcc}}},
      {"sentiment",
       {{"view", r.sentiment_view == SentimentView::detected ? "detected" : "gold_present"},
        {"mse", opt(r.sentiment.mse)},
        {"pairs", r.sentiment.pairs},
        {"per_aspect", sentiment_per_aspect}}},
      {"per_aspect", per_aspect},
      {"runtime_minutes", opt(r.runtime_minutes)},
      {"provenance", ordered(r.provenance)},
  };
  if (!r.extras.empty()) out["extras"] = ordered(r.extras);
  return out;
}

EvalReport eval_report_from_json(const json& j) {
  if (j.value("schema", std::string{}) != kEvalReportSchema)
    throw SchemaError("not an evaluation report (schema tag mismatch)");
  EvalReport r;
  r.approach = j.at("approach").get<std::string>();
  r.split_id = j.value("split_id", std::string{});
  r.aspects = j.at("aspects").get<std::vector<std::string>>();
  r.counts.aspects = r.aspects;
  r.counts.n_reviews = j.at("n_reviews").get<std::size_t>();
  for (const auto& row : j.at("per_aspect"))
    r.counts.counts.push_back({row.at("tp").get<std::size_t>(), row.at("fp").get<std::size_t>(),
                               row.at("fn").get<std::size_t>(), row.at("tn").get<std::size_t>()});
  if (r.counts.counts.size() != r.aspects.size())
    throw SchemaError("report per-aspect rows do not match its aspect list");
  r.detection = detection_report(r.counts);
  const auto& s = j.at("sentiment");
  r.sentiment_view = s.value("view", std::string{"detected"}) == "gold_present"
                         ? SentimentView::gold_present
                         : SentimentView::detected;
  if (!s.at("mse").is_null()) r.sentiment.mse = s.at("mse").get<double>();
  r.sentiment.pairs = s.value("pairs", std::size_t{0});
  if (auto it = s.find("per_aspect"); it != s.end())
    for (const auto& [aspect, acc] : it->items())
      r.sentiment.per_aspect[aspect] = {acc.at("sum_sq").get<double>(),
                                        acc.at("pairs").get<std::size_t>()};
  if (auto it = j.find("runtime_minutes"); it != j.end() && !it->is_null())
    r.runtime_minutes = it->get<double>();
  r.provenance = j.value("provenance", json::object());
  r.extras = j.value("extras", json::object());
  return r;
}

}  // namespace synthabsa
