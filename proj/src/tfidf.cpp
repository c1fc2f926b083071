#include "synthabsa/tfidf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <spdlog/spdlog.h>

#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

std::vector<std::string> tokenize(std::string_view text, bool lowercase) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(lowercase ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

std::vector<std::string> ngrams(std::string_view text, const VectorizerConfig& cfg) {
  const auto tokens = tokenize(text, cfg.lowercase);
  std::vector<std::string> out;
  for (int n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (int k = 1; k < n; ++k) {
        g.push_back(' ');
        g += tokens[i + k];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Vocabulary::Vocabulary(VectorizerConfig config, std::vector<std::string> terms,
                       std::vector<std::size_t> document_frequency, std::size_t n_documents)
    : config_(config), terms_(std::move(terms)), df_(std::move(document_frequency)), n_docs_(n_documents) {
  if (terms_.size() != df_.size()) throw SchemaError("vocabulary terms and document frequencies differ in length");
  idf_.reserve(terms_.size());
  for (std::size_t c = 0; c < terms_.size(); ++c) {
    index_.emplace(terms_[c], static_cast<std::uint32_t>(c));
    idf_.push_back(std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df_[c]))) + 1.0);
  }
  if (index_.size() != terms_.size()) throw SchemaError("vocabulary has repeated terms");
}

long Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(term);
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

SparseVector Vocabulary::transform(std::string_view text) const {
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& g : ngrams(text, config_))
    if (auto it = index_.find(g); it != index_.end()) ++counts[it->second];
  SparseVector v;
  v.reserve(counts.size());
  double norm = 0.0;
  for (const auto& [col, n] : counts) {
    const double w = (1.0 + std::log(static_cast<double>(n))) * idf_[col];
    v.emplace_back(col, w);
    norm += w * w;
  }
  if (norm > 0) {
    norm = std::sqrt(norm);
    for (auto& [col, w] : v) w /= norm;
  }
  return v;
}

Vocabulary fit_vectorizer(std::span<const std::string> train_texts, const VectorizerConfig& config) {
  if (train_texts.empty()) throw ArgumentError("fit_vectorizer needs at least one text");
  if (config.ngram_min < 1 || config.ngram_max < config.ngram_min)
    throw ArgumentError("invalid n-gram range");
  std::map<std::string, std::size_t> df;
  for (const auto& text : train_texts) {
    auto grams = ngrams(text, config);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++df[std::move(g)];
  }
  std::vector<std::string> terms;
  std::vector<std::size_t> freqs;
  for (auto& [term, n] : df) {
    if (n < config.min_df) continue;
    terms.push_back(term);
    freqs.push_back(n);
  }
  if (terms.empty()) throw SchemaError("vocabulary is empty after applying min_df");
  return Vocabulary(config, std::move(terms), std::move(freqs), train_texts.size());
}

std::vector<std::string> TwoStepModel::aspect_ids() const {
  std::vector<std::string> ids;
  for (const auto& a : aspects) ids.push_back(a.aspect);
  return ids;
}

namespace {

SparseMatrix design_matrix(const Vocabulary& vocab, std::span<const std::string> texts) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t i = 0; i < texts.size(); ++i)
    for (const auto& [col, w] : vocab.transform(texts[i]))
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(col), w);
  SparseMatrix x(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(vocab.size()));
  x.setFromTriplets(triplets.begin(), triplets.end());
  return x;
}

void fit_detector(const SparseMatrix& x, const Eigen::VectorXd& y, const TwoStepConfig& cfg, AspectModel& m) {
  const Eigen::Index n = x.rows();
  const double positives = y.sum();
  m.detector_weights.assign(static_cast<std::size_t>(x.cols()), 0.0);
  m.detector_bias = 0.0;
  if (positives == 0.0) {
    m.degenerate = true;
    return;
  }
  const double negatives = static_cast<double>(n) - positives;
  m.positive_weight = std::clamp(negatives / positives, cfg.positive_weight_min, cfg.positive_weight_max);
  Eigen::VectorXd c = (y.array() * (m.positive_weight - 1.0) + 1.0).matrix();
  const double total_weight = c.sum();

  // Nesterov-accelerated full-batch gradient descent with a fixed step.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd w_prev = w;
  double b = 0.0, b_prev = 0.0;
  int it = 0;
  for (; it < cfg.detector_iterations; ++it) {
    const double momentum = static_cast<double>(it) / (it + 3.0);
    const Eigen::VectorXd v = w + momentum * (w - w_prev);
    const double vb = b + momentum * (b - b_prev);
    const Eigen::VectorXd z = x * v;
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = c[i] * (sigmoid(z[i] + vb) - y[i]);
    const Eigen::VectorXd gw = (x.transpose() * r + cfg.detector_l2 * v) / total_weight;
    const double gb = r.sum() / total_weight;
    w_prev = w;
    b_prev = b;
    w = v - cfg.detector_learning_rate * gw;
    b = vb - cfg.detector_learning_rate * gb;
    if (std::max(gw.cwiseAbs().maxCoeff(), std::abs(gb)) < cfg.detector_tolerance) {
      ++it;
      break;
    }
  }
  m.iterations_run = it;
  m.detector_weights.assign(w.data(), w.data() + w.size());
  m.detector_bias = b;
}

// Ridge with an unpenalized intercept, solved in the dual on centered rows.
void fit_sentiment(const SparseMatrix& x, const std::vector<Eigen::Index>& rows, const Eigen::VectorXd& y,
                   double lambda, AspectModel& m) {
  m.sentiment_weights.assign(static_cast<std::size_t>(x.cols()), 0.0);
  m.sentiment_bias = 0.0;
  m.sentiment_rows = rows.size();
  if (rows.empty()) return;
  const auto n = static_cast<Eigen::Index>(rows.size());
  SparseMatrix xr(n, x.cols());
  {
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index r = 0; r < n; ++r)
      for (SparseMatrix::InnerIterator e(x, rows[static_cast<std::size_t>(r)]); e; ++e)
        t.emplace_back(static_cast<int>(r), static_cast<int>(e.col()), e.value());
    xr.setFromTriplets(t.begin(), t.end());
  }
  const Eigen::VectorXd mean = (xr.transpose() * Eigen::VectorXd::Ones(n)) / static_cast<double>(n);
  const double ybar = y.mean();
  const Eigen::VectorXd yc = y.array() - ybar;

  Eigen::MatrixXd k = Eigen::MatrixXd(xr * xr.transpose());
  const Eigen::VectorXd xm = xr * mean;
  const double mm = mean.squaredNorm();
  k.colwise() -= xm;
  k.rowwise() -= xm.transpose();
  k.array() += mm;
  k.diagonal().array() += lambda;
  const Eigen::VectorXd alpha = k.ldlt().solve(yc);

  const Eigen::VectorXd w = xr.transpose() * alpha - mean * alpha.sum();
  m.sentiment_weights.assign(w.data(), w.data() + w.size());
  m.sentiment_bias = ybar - mean.dot(w);
}

void check_partition(std::span<const ReviewRecord> records, const char* name) {
  for (const auto& r : records)
    if (r.source == RecordSource::real_transfer)
      throw ContractError(std::string("record '") + r.id + "' in the " + name +
                          " partition is tagged real_transfer; transfer data is evaluation-only");
}

double dot(const std::vector<double>& w, const SparseVector& v) {
  double s = 0.0;
  for (const auto& [col, x] : v) s += w[col] * x;
  return s;
}

}  // namespace

TwoStepModel train_two_step(std::span<const ReviewRecord> train, std::span<const ReviewRecord> validation,
                            const AspectInventory& inventory, std::uint64_t seed, const TwoStepConfig& config) {
  check_partition(train, "train");
  check_partition(validation, "validation");
  {
    std::set<std::string_view> ids;
    for (const auto& r : train) ids.insert(r.id);
    for (const auto& r : validation)
      if (ids.contains(r.id)) throw ContractError("record '" + r.id + "' appears in both train and validation");
  }
  if (train.empty()) throw ArgumentError("training partition is empty");

  std::vector<std::string> texts;
  texts.reserve(train.size());
  for (const auto& r : train) texts.push_back(r.text);

  TwoStepModel model;
  model.config = config;
  model.seed = seed;
  model.vocabulary = fit_vectorizer(texts, config.vectorizer);
  const SparseMatrix x = design_matrix(model.vocabulary, texts);

  for (const auto& aspect : inventory.ids()) {
    AspectModel m;
    m.aspect = aspect;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.rows());
    std::vector<Eigen::Index> rows;
    std::vector<double> targets;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (const auto s = train[i].labels.find(aspect)) {
        y[static_cast<Eigen::Index>(i)] = 1.0;
        rows.push_back(static_cast<Eigen::Index>(i));
        targets.push_back(sentiment_value(*s));
      }
    }
    fit_detector(x, y, config, m);
    if (m.degenerate) spdlog::warn("aspect '{}' has no training positives; detector is always negative", aspect);
    fit_sentiment(x, rows, Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size())),
                  config.sentiment_l2, m);
    model.aspects.push_back(std::move(m));
  }
  recalibrate(model, validation);
  return model;
}

ScoreRow score_text(const TwoStepModel& model, std::string_view id, std::string_view text) {
  const auto v = model.vocabulary.transform(text);
  ScoreRow row;
  row.id = std::string(id);
  for (const auto& m : model.aspects) {
    row.probabilities[m.aspect] = m.degenerate ? 0.0 : sigmoid(dot(m.detector_weights, v) + m.detector_bias);
    row.sentiments[m.aspect] = std::clamp(dot(m.sentiment_weights, v) + m.sentiment_bias, -1.0, 1.0);
  }
  return row;
}

std::vector<ScoreRow> score_records(const TwoStepModel& model, std::span<const ReviewRecord> records) {
  std::vector<ScoreRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(score_text(model, r.id, r.text));
  return rows;
}

TwoStepPrediction predict_two_step(const TwoStepModel& model, std::string_view text) {
  const ScoreRow row = score_text(model, "", text);
  const auto p = apply_thresholds(std::span(&row, 1), model.thresholds);
  return {p.aspects.front(), p.sentiments.front()};
}

void recalibrate(TwoStepModel& model, std::span<const ReviewRecord> validation) {
  check_partition(validation, "validation");
  const auto ids = model.aspect_ids();
  const auto rows = score_records(model, validation);
  std::vector<LabelSet> gold;
  for (const auto& r : validation) gold.push_back(r.labels);
  model.thresholds = calibrate_thresholds(probability_matrix(rows, ids), gold, ids);
  for (std::size_t a = 0; a < model.aspects.size(); ++a) {
    if (!model.aspects[a].degenerate) continue;
    model.thresholds.thresholds[a] = kDefaultThreshold;
    model.thresholds.defaulted[a] = true;
  }
}

// ---------------------------------------------------------------------------
// Persistence

json to_json(const TwoStepModel& model) {
  const auto& v = model.vocabulary;
  json aspects = json::array();
  for (const auto& m : model.aspects)
    aspects.push_back({{"aspect", m.aspect},
                       {"detector_weights", m.detector_weights},
                       {"detector_bias", m.detector_bias},
                       {"degenerate", m.degenerate},
                       {"positive_weight", m.positive_weight},
                       {"iterations_run", m.iterations_run},
                       {"sentiment_weights", m.sentiment_weights},
                       {"sentiment_bias", m.sentiment_bias},
                       {"sentiment_rows", m.sentiment_rows}});
  const auto& c = model.config;
  return {{"kind", "tfidf_two_step"},
          {"seed", model.seed},
          {"config",
           {{"ngram_min", c.vectorizer.ngram_min},
            {"ngram_max", c.vectorizer.ngram_max},
            {"min_df", c.vectorizer.min_df},
            {"lowercase", c.vectorizer.lowercase},
            {"detector_l2", c.detector_l2},
            {"detector_iterations", c.detector_iterations},
            {"detector_learning_rate", c.detector_learning_rate},
            {"detector_tolerance", c.detector_tolerance},
            {"positive_weight_min", c.positive_weight_min},
            {"positive_weight_max", c.positive_weight_max},
            {"sentiment_l2", c.sentiment_l2}}},
          {"vocabulary", {{"terms", v.terms()}, {"document_frequency", v.document_frequency()}, {"n_documents", v.n_documents()}}},
          {"aspects", aspects},
          {"thresholds", to_json(model.thresholds)}};
}

TwoStepModel two_step_model_from_json(const json& j) {
  if (j.value("kind", std::string{}) != "tfidf_two_step") throw SchemaError("not a tfidf_two_step model document");
  TwoStepModel model;
  model.seed = j.at("seed").get<std::uint64_t>();
  const auto& c = j.at("config");
  auto& cfg = model.config;
  cfg.vectorizer.ngram_min = c.at("ngram_min").get<int>();
  cfg.vectorizer.ngram_max = c.at("ngram_max").get<int>();
  cfg.vectorizer.min_df = c.at("min_df").get<std::size_t>();
  cfg.vectorizer.lowercase = c.at("lowercase").get<bool>();
  cfg.detector_l2 = c.at("detector_l2").get<double>();
  cfg.detector_iterations = c.at("detector_iterations").get<int>();
  cfg.detector_learning_rate = c.at("detector_learning_rate").get<double>();
  cfg.detector_tolerance = c.at("detector_tolerance").get<double>();
  cfg.positive_weight_min = c.at("positive_weight_min").get<double>();
  cfg.positive_weight_max = c.at("positive_weight_max").get<double>();
  cfg.sentiment_l2 = c.at("sentiment_l2").get<double>();
  const auto& v = j.at("vocabulary");
  model.vocabulary = Vocabulary(cfg.vectorizer, v.at("terms").get<std::vector<std::string>>(),
                                v.at("document_frequency").get<std::vector<std::size_t>>(),
                                v.at("n_documents").get<std::size_t>());
  for (const auto& a : j.at("aspects")) {
    AspectModel m;
    m.aspect = a.at("aspect").get<std::string>();
    m.detector_weights = a.at("detector_weights").get<std::vector<double>>();
    m.detector_bias = a.at("detector_bias").get<double>();
    m.degenerate = a.at("degenerate").get<bool>();
    m.positive_weight = a.at("positive_weight").get<double>();
    m.iterations_run = a.at("iterations_run").get<int>();
    m.sentiment_weights = a.at("sentiment_weights").get<std::vector<double>>();
    m.sentiment_bias = a.at("sentiment_bias").get<double>();
    m.sentiment_rows = a.at("sentiment_rows").get<std::size_t>();
    if (m.detector_weights.size() != model.vocabulary.size() || m.sentiment_weights.size() != model.vocabulary.size())
      throw SchemaError("weight vector for '" + m.aspect + "' does not match the vocabulary size");
    model.aspects.push_back(std::move(m));
  }
  model.thresholds = threshold_table_from_json(j.at("thresholds"));
  if (model.thresholds.aspects != model.aspect_ids())
    throw SchemaError("threshold table aspects do not match the model aspects");
  return model;
}

void save_model(const TwoStepModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write model " + path.string());
  out << to_json(model).dump() << '\n';
}

TwoStepModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read model " + path.string());
  try {
    return two_step_model_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
}

}  // namespace synthabsa
