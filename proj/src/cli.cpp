#include "synthabsa/cli.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "synthabsa/audit.hpp"
#include "synthabsa/corpus.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/prompting.hpp"
#include "synthabsa/random.hpp"
#include "synthabsa/realism.hpp"
#include "synthabsa/report.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw SchemaError(fmt::format("config section '{}' must be an object", section));
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw SchemaError(fmt::format("unknown config key '{}' in '{}'", key, section));
  }
}

template <class T>
void read(const json& j, std::string_view key, T& field) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      field = it->get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(fmt::format("config key '{}': {}", key, e.what()));
    }
  }
}

std::string_view to_string(AspectCountPolicy p) { return p == AspectCountPolicy::rounded ? "rounded" : "empirical"; }
std::string_view to_string(MultiMentionPolicy p) { return p == MultiMentionPolicy::majority ? "majority" : "first"; }

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  check_keys(j, "root", {"seed", "inventory", "provider", "stub", "generation", "split", "tfidf", "prompting",
                         "realism", "audit", "pilot", "transfer", "timing"});
  read(j, "seed", c.seed);
  read(j, "inventory", c.inventory);
  read(j, "timing", c.timing);
  if (auto it = j.find("provider"); it != j.end()) {
    check_keys(*it, "provider", {"kind", "fixture", "endpoint_env", "token_env", "max_retries", "initial_backoff_ms",
                                 "max_in_flight"});
    auto& p = c.provider;
    read(*it, "kind", p.kind);
    read(*it, "fixture", p.fixture);
    read(*it, "endpoint_env", p.endpoint_env);
    read(*it, "token_env", p.token_env);
    read(*it, "max_retries", p.max_retries);
    read(*it, "initial_backoff_ms", p.initial_backoff_ms);
    read(*it, "max_in_flight", p.max_in_flight);
    if (p.kind != "stub" && p.kind != "http") throw SchemaError(fmt::format("unknown provider kind '{}'", p.kind));
  }
  if (auto it = j.find("stub"); it != j.end()) {
    check_keys(*it, "stub", {"judge_synthetic_rate", "incomplete_every", "empty_every", "off_band_every",
                             "trigger_free", "polarity_variants", "sentiment_triggers", "trigger_repeats",
                             "filler_sentences"});
    auto& s = c.stub;
    read(*it, "judge_synthetic_rate", s.judge_synthetic_rate);
    read(*it, "incomplete_every", s.incomplete_every);
    read(*it, "empty_every", s.empty_every);
    read(*it, "off_band_every", s.off_band_every);
    read(*it, "trigger_free", s.trigger_free);
    read(*it, "polarity_variants", s.polarity_variants);
    read(*it, "sentiment_triggers", s.sentiment_triggers);
    read(*it, "trigger_repeats", s.trigger_repeats);
    read(*it, "filler_sentences", s.filler_sentences);
  }
  if (auto it = j.find("generation"); it != j.end()) {
    check_keys(*it, "generation", {"n", "prompt_state", "refine", "policy", "id_prefix"});
    read(*it, "n", c.generate_n);
    read(*it, "prompt_state", c.prompt_state);
    read(*it, "refine", c.refine);
    read(*it, "id_prefix", c.id_prefix);
    std::string policy(to_string(c.policy));
    read(*it, "policy", policy);
    if (policy == "rounded") c.policy = AspectCountPolicy::rounded;
    else if (policy == "empirical") c.policy = AspectCountPolicy::empirical;
    else throw SchemaError(fmt::format("unknown aspect-count policy '{}'", policy));
  }
  if (auto it = j.find("split"); it != j.end()) {
    check_keys(*it, "split", {"seed", "train", "validation", "test"});
    read(*it, "seed", c.split_seed);
    read(*it, "train", c.fractions.train);
    read(*it, "validation", c.fractions.validation);
    read(*it, "test", c.fractions.test);
  }
  if (auto it = j.find("tfidf"); it != j.end()) {
    check_keys(*it, "tfidf", {"ngram_min", "ngram_max", "min_df", "detector_l2", "detector_iterations",
                              "detector_learning_rate", "detector_tolerance", "positive_weight_min",
                              "positive_weight_max", "sentiment_l2"});
    auto& t = c.tfidf;
    read(*it, "ngram_min", t.vectorizer.ngram_min);
    read(*it, "ngram_max", t.vectorizer.ngram_max);
    read(*it, "min_df", t.vectorizer.min_df);
    read(*it, "detector_l2", t.detector_l2);
    read(*it, "detector_iterations", t.detector_iterations);
    read(*it, "detector_learning_rate", t.detector_learning_rate);
    read(*it, "detector_tolerance", t.detector_tolerance);
    read(*it, "positive_weight_min", t.positive_weight_min);
    read(*it, "positive_weight_max", t.positive_weight_max);
    read(*it, "sentiment_l2", t.sentiment_l2);
  }
  if (auto it = j.find("prompting"); it != j.end()) {
    check_keys(*it, "prompting", {"mode", "sample"});
    read(*it, "mode", c.mode);
    read(*it, "sample", c.prompt_sample);
    parse_prompting_mode(c.mode);
  }
  if (auto it = j.find("realism"); it != j.end()) {
    check_keys(*it, "realism", {"cycles", "per_source", "real_pool"});
    read(*it, "cycles", c.cycles);
    read(*it, "per_source", c.per_source);
    read(*it, "real_pool", c.real_pool);
  }
  if (auto it = j.find("audit"); it != j.end()) {
    check_keys(*it, "audit", {"sample"});
    read(*it, "sample", c.audit_sample);
  }
  if (auto it = j.find("pilot"); it != j.end()) {
    check_keys(*it, "pilot", {"n", "completed_rate", "text_success_rate", "duplicate_rate", "length_band_match_rate"});
    read(*it, "n", c.pilot_n);
    read(*it, "completed_rate", c.pilot.completed_rate);
    read(*it, "text_success_rate", c.pilot.text_success_rate);
    read(*it, "duplicate_rate", c.pilot.duplicate_rate);
    read(*it, "length_band_match_rate", c.pilot.length_band_match_rate);
  }
  if (auto it = j.find("transfer"); it != j.end()) {
    check_keys(*it, "transfer", {"multi_mention"});
    std::string policy(to_string(c.multi_mention));
    read(*it, "multi_mention", policy);
    if (policy == "majority") c.multi_mention = MultiMentionPolicy::majority;
    else if (policy == "first") c.multi_mention = MultiMentionPolicy::first;
    else throw SchemaError(fmt::format("unknown multi-mention policy '{}'", policy));
  }
  return c;
}

ordered_json to_json(const RunConfig& c) {
  const auto& p = c.provider;
  const auto& s = c.stub;
  const auto& t = c.tfidf;
  return {
      {"seed", c.seed},
      {"inventory", c.inventory},
      {"provider",
       {{"kind", p.kind},
        {"fixture", p.fixture},
        {"endpoint_env", p.endpoint_env},
        {"token_env", p.token_env},
        {"max_retries", p.max_retries},
        {"initial_backoff_ms", p.initial_backoff_ms},
        {"max_in_flight", p.max_in_flight}}},
      {"stub",
       {{"judge_synthetic_rate", s.judge_synthetic_rate},
        {"incomplete_every", s.incomplete_every},
        {"empty_every", s.empty_every},
        {"off_band_every", s.off_band_every},
        {"trigger_free", s.trigger_free},
        {"polarity_variants", s.polarity_variants},
        {"sentiment_triggers", s.sentiment_triggers},
        {"trigger_repeats", s.trigger_repeats},
        {"filler_sentences", s.filler_sentences}}},
      {"generation",
       {{"n", c.generate_n},
        {"prompt_state", c.prompt_state},
        {"refine", c.refine},
        {"policy", to_string(c.policy)},
        {"id_prefix", c.id_prefix}}},
      {"split",
       {{"seed", c.split_seed},
        {"train", c.fractions.train},
        {"validation", c.fractions.validation},
        {"test", c.fractions.test}}},
      {"tfidf",
       {{"ngram_min", t.vectorizer.ngram_min},
        {"ngram_max", t.vectorizer.ngram_max},
        {"min_df", t.vectorizer.min_df},
        {"detector_l2", t.detector_l2},
        {"detector_iterations", t.detector_iterations},
        {"detector_learning_rate", t.detector_learning_rate},
        {"detector_tolerance", t.detector_tolerance},
        {"positive_weight_min", t.positive_weight_min},
        {"positive_weight_max", t.positive_weight_max},
        {"sentiment_l2", t.sentiment_l2}}},
      {"prompting", {{"mode", c.mode}, {"sample", c.prompt_sample}}},
      {"realism", {{"cycles", c.cycles}, {"per_source", c.per_source}, {"real_pool", c.real_pool}}},
      {"audit", {{"sample", c.audit_sample}}},
      {"pilot",
       {{"n", c.pilot_n},
        {"completed_rate", c.pilot.completed_rate},
        {"text_success_rate", c.pilot.text_success_rate},
        {"duplicate_rate", c.pilot.duplicate_rate},
        {"length_band_match_rate", c.pilot.length_band_match_rate}}},
      {"transfer", {{"multi_mention", to_string(c.multi_mention)}}},
      {"timing", c.timing},
  };
}

std::string config_hash(const RunConfig& config) { return fmt::format("{:016x}", fnv1a64(to_json(config).dump())); }

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Context {
  RunConfig config;
  std::ostream* out = nullptr;
  std::shared_ptr<spdlog::logger> log;
  std::optional<AspectInventory> inventory_storage;

  const AspectInventory& inventory() const {
    return inventory_storage ? *inventory_storage : default_aspect_inventory();
  }
  DispatchOptions dispatch() const {
    DispatchOptions d;
    d.max_retries = config.provider.max_retries;
    d.initial_backoff = std::chrono::milliseconds(config.provider.initial_backoff_ms);
    d.max_in_flight = config.provider.max_in_flight;
    return d;
  }
};

struct Paths {
  std::vector<std::string> in;
  std::string out;
  std::string model;
  std::string scores;
  std::string thresholds;
  std::string scores_out;
  std::string table;
  std::string real;
  std::string external;
  std::string mapping;
  std::string approach;
  std::string split = "test";
  std::string seeds;
};

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_manifest(const Context& ctx, std::string_view command, const Paths& paths,
                    std::vector<std::string> outputs, ordered_json summary = ordered_json::object()) {
  ordered_json m = {{"command", command},
                    {"config_hash", config_hash(ctx.config)},
                    {"config", to_json(ctx.config)},
                    {"inputs", paths.in},
                    {"outputs", outputs}};
  for (const auto* p : {&paths.model, &paths.scores, &paths.thresholds, &paths.real, &paths.external, &paths.mapping})
    if (!p->empty()) m["inputs"].push_back(*p);
  if (!summary.empty()) m["summary"] = std::move(summary);
  write_json(outputs.front() + ".run.json", m);
}

std::unique_ptr<Provider> make_provider(const Context& ctx) {
  const auto& p = ctx.config.provider;
  if (p.kind == "http") {
    const char* endpoint = std::getenv(p.endpoint_env.c_str());
    if (!endpoint || !*endpoint)
      throw ArgumentError(fmt::format("http provider needs the endpoint in ${}", p.endpoint_env));
    HttpProviderConfig hc;
    hc.endpoint = endpoint;
    if (const char* token = std::getenv(p.token_env.c_str())) hc.token = token;
    return std::make_unique<HttpProvider>(hc);
  }
  if (!p.fixture.empty()) return std::make_unique<FixtureStubProvider>(read_json(p.fixture));
  auto options = ctx.config.stub;
  options.seed = ctx.config.seed;
  return std::make_unique<SimulatedProvider>(options, ctx.inventory());
}

GenerationConfig generation_config(const Context& ctx) {
  GenerationConfig g;
  g.n = ctx.config.generate_n;
  g.master_seed = ctx.config.seed;
  g.policy = ctx.config.policy;
  g.prompt_state_id = ctx.config.prompt_state;
  g.refine = ctx.config.refine;
  g.id_prefix = ctx.config.id_prefix;
  g.dispatch = ctx.dispatch();
  return g;
}

const std::string& single_input(const Paths& paths, std::string_view command) {
  if (paths.in.size() != 1) throw ArgumentError(fmt::format("{} takes exactly one --in", command));
  return paths.in.front();
}

Corpus load(const Context& ctx, const std::string& path) {
  return load_corpus(path, ctx.inventory(), default_nuance_schema());
}

Split parse_split_name(std::string_view name) {
  auto s = parse_split(name);
  if (!s) throw ArgumentError(fmt::format("unknown split '{}'", name));
  return *s;
}

std::vector<ReviewRecord> require_split(const Corpus& corpus, Split split) {
  auto records = records_in_split(corpus, split);
  if (records.empty())
    throw ContractError(fmt::format("corpus has no {} records; run split first", to_string(split)));
  return records;
}

void check_model_inventory(const TwoStepModel& model, const AspectInventory& inventory) {
  if (model.aspect_ids() != inventory.ids())
    throw ContractError("model aspect inventory does not match the corpus inventory");
}

ordered_json provenance(const Context& ctx, const Corpus& corpus) {
  return {{"seed", ctx.config.seed},
          {"split_seed", ctx.config.split_seed},
          {"prompt_state_id", corpus.provenance.prompt_state_id},
          {"generator_run_id", corpus.provenance.generator_run_id},
          {"config_hash", config_hash(ctx.config)}};
}

std::vector<LabelSet> gold_of(std::span<const ReviewRecord> records) {
  std::vector<LabelSet> gold;
  for (const auto& r : records) gold.push_back(r.labels);
  return gold;
}

/// Score rows aligned to `records` by id.
std::vector<ScoreRow> align_scores(std::vector<ScoreRow> rows, std::span<const ReviewRecord> records) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!index.emplace(rows[i].id, i).second) throw ContractError("score file repeats id " + rows[i].id);
  std::vector<ScoreRow> out;
  for (const auto& r : records) {
    auto it = index.find(r.id);
    if (it == index.end()) throw ContractError("score file has no row for " + r.id);
    out.push_back(rows[it->second]);
  }
  return out;
}

double minutes_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::ratio<60>>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_generate(Context& ctx, const Paths& paths) {
  auto provider = make_provider(ctx);
  const auto g = generation_config(ctx);
  auto run = generate_records(*provider, g, ctx.inventory(), default_nuance_schema());
  Corpus corpus;
  corpus.records = std::move(run.records);
  corpus.provenance.prompt_state_id = g.prompt_state_id;
  corpus.provenance.seed = g.master_seed;
  corpus.provenance.generator_run_id = fmt::format("gen-{}", config_hash(ctx.config));
  save_corpus(corpus, paths.out);
  for (const auto& id : run.failed_ids) ctx.log->warn("event=generation_failed id={}", id);
  ctx.log->info("event=generated requested={} written={} failed={}", run.requested, corpus.records.size(),
                run.failed_ids.size());
  write_manifest(ctx, "generate", paths, {paths.out},
                 {{"requested", run.requested}, {"written", corpus.records.size()}, {"failed_ids", run.failed_ids}});
  return 0;
}

int cmd_assemble(Context& ctx, const Paths& paths) {
  if (paths.in.empty()) throw ArgumentError("assemble needs at least one --in");
  std::vector<ReviewRecord> records;
  CorpusProvenance prov;
  for (const auto& path : paths.in) {
    auto c = load(ctx, path);
    if (prov.generator_run_id.empty()) prov = c.provenance;
    for (auto& r : c.records) records.push_back(std::move(r));
  }
  auto assembled = assemble_corpus(std::move(records), ctx.inventory(), prov);
  save_corpus(assembled.corpus, paths.out);
  const auto dups = assembled.dedup.duplicate_count();
  ctx.log->info("event=assembled records={} duplicates={}", assembled.corpus.records.size(), dups);
  write_manifest(ctx, "assemble", paths, {paths.out},
                 {{"records", assembled.corpus.records.size()}, {"flagged_duplicates", dups}});
  return 0;
}

int cmd_split(Context& ctx, const Paths& paths) {
  auto corpus = load(ctx, single_input(paths, "split"));
  const auto assignment = split_corpus(corpus, ctx.config.split_seed, ctx.config.fractions);
  apply_split(corpus, assignment);
  const std::string out = paths.out.empty() ? paths.in.front() : paths.out;
  save_corpus(corpus, out);
  ctx.log->info("event=split train={} validation={} test={}", assignment.train, assignment.validation,
                assignment.test);
  write_manifest(ctx, "split", paths, {out},
                 {{"train", assignment.train},
                  {"validation", assignment.validation},
                  {"test", assignment.test},
                  {"test_split_id", split_id(corpus.records, Split::test)}});
  return 0;
}

TwoStepModel train(const Context& ctx, const Corpus& corpus, std::uint64_t seed) {
  const auto tr = require_split(corpus, Split::train);
  const auto va = require_split(corpus, Split::validation);
  return train_two_step(tr, va, ctx.inventory(), seed, ctx.config.tfidf);
}

int cmd_train(Context& ctx, const Paths& paths) {
  const auto corpus = load(ctx, single_input(paths, "train-tfidf"));
  const auto model = train(ctx, corpus, ctx.config.seed);
  save_model(model, paths.out);
  ctx.log->info("event=trained vocabulary={}", model.vocabulary.size());
  write_manifest(ctx, "train-tfidf", paths, {paths.out}, {{"vocabulary", model.vocabulary.size()}});
  return 0;
}

int cmd_calibrate(Context& ctx, const Paths& paths) {
  const auto corpus = load(ctx, single_input(paths, "calibrate"));
  const auto validation = require_split(corpus, Split::validation);
  if (!paths.scores.empty()) {
    const auto rows = align_scores(read_score_file(paths.scores), validation);
    const auto aspects = ctx.inventory().ids();
    const auto matrix = probability_matrix(rows, aspects);
    const auto gold = gold_of(validation);
    const auto table = calibrate_thresholds(matrix, gold, aspects);
    write_json(paths.out, ordered_json::parse(to_json(table).dump()));
    write_manifest(ctx, "calibrate", paths, {paths.out});
    return 0;
  }
  if (paths.model.empty()) throw ArgumentError("calibrate needs --model or --scores");
  auto model = load_model(paths.model);
  check_model_inventory(model, ctx.inventory());
  recalibrate(model, validation);
  save_model(model, paths.out);
  write_manifest(ctx, "calibrate", paths, {paths.out});
  return 0;
}

int cmd_evaluate(Context& ctx, const Paths& paths) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = load(ctx, single_input(paths, "evaluate"));
  const auto split = parse_split_name(paths.split);
  const auto records = require_split(corpus, split);
  std::vector<ScoreRow> rows;
  ThresholdTable thresholds;
  std::string approach = paths.approach;
  if (!paths.model.empty()) {
    const auto model = load_model(paths.model);
    check_model_inventory(model, ctx.inventory());
    rows = score_records(model, records);
    thresholds = model.thresholds;
    if (approach.empty()) approach = "tfidf_two_step";
  } else if (!paths.scores.empty()) {
    rows = align_scores(read_score_file(paths.scores), records);
    if (paths.thresholds.empty()) throw ArgumentError("evaluate --scores needs --thresholds");
    thresholds = threshold_table_from_json(read_json(paths.thresholds));
    if (thresholds.aspects != ctx.inventory().ids())
      throw ContractError("threshold table inventory does not match the corpus inventory");
    if (approach.empty()) approach = "external_scores";
  } else {
    throw ArgumentError("evaluate needs --model or --scores");
  }
  const auto predictions = apply_thresholds(rows, thresholds);
  const auto gold = gold_of(records);
  auto report = evaluate_predictions(approach, gold, predictions.aspects, predictions.sentiments, ctx.inventory().ids());
  report.split_id = split_id(records, split);
  report.provenance = provenance(ctx, corpus);
  if (ctx.config.timing) report.runtime_minutes = minutes_since(t0);
  write_json(paths.out, to_json(report));
  std::vector<std::string> outputs = {paths.out};
  if (!paths.scores_out.empty()) {
    write_score_file(rows, paths.scores_out);
    outputs.push_back(paths.scores_out);
  }
  ctx.log->info("event=evaluated approach={} micro_f1={:.4f}", approach, report.detection.aggregates.micro_f1);
  write_manifest(ctx, "evaluate", paths, outputs, {{"micro_f1", report.detection.aggregates.micro_f1}});
  return 0;
}

int cmd_prompt_eval(Context& ctx, const Paths& paths) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = load(ctx, single_input(paths, "prompt-eval"));
  const auto mode = parse_prompting_mode(ctx.config.mode);
  auto test = require_split(corpus, Split::test);
  if (ctx.config.prompt_sample > 0 && ctx.config.prompt_sample < test.size()) {
    auto rng = derive_stream(ctx.config.seed, "prompt_sample");
    auto idx = rng.sample_indices(test.size(), ctx.config.prompt_sample);
    std::sort(idx.begin(), idx.end());
    std::vector<ReviewRecord> sub;
    for (auto i : idx) sub.push_back(test[i]);
    test = std::move(sub);
  }
  const auto train_records = require_split(corpus, Split::train);
  const DemonstrationPool pool(train_records);
  auto provider = make_provider(ctx);
  auto result = run_prompting_eval(*provider, mode, test, pool, ctx.inventory(), ctx.dispatch());
  result.report.split_id = split_id(test, Split::test);
  result.report.provenance = provenance(ctx, corpus);
  if (ctx.config.timing) result.report.runtime_minutes = minutes_since(t0);
  write_json(paths.out, to_json(result.report));
  ctx.log->info("event=prompt_eval mode={} parse_rate={:.4f} micro_f1={:.4f}", ctx.config.mode,
                result.stats.parse_success_rate(), result.report.detection.aggregates.micro_f1);
  write_manifest(ctx, "prompt-eval", paths, {paths.out},
                 {{"parse_success_rate", result.stats.parse_success_rate()}});
  return 0;
}

std::vector<ReviewRecord> load_text_pool(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read real review pool " + path.string());
  std::vector<ReviewRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), n);
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      throw ParseError("real review needs a string 'text'", n);
    ReviewRecord r;
    r.id = j.contains("id") ? j["id"].get<std::string>() : fmt::format("real-{:06d}", out.size() + 1);
    r.set_text(j["text"].get<std::string>());
    r.source = RecordSource::real_transfer;
    out.push_back(std::move(r));
  }
  return out;
}

int cmd_realism(Context& ctx, const Paths& paths) {
  const std::string pool_path = !paths.real.empty() ? paths.real : ctx.config.real_pool;
  if (pool_path.empty()) throw ArgumentError("realism-cycle needs --real or realism.real_pool");
  const auto real = load_text_pool(pool_path);
  auto provider = make_provider(ctx);
  auto gen = generation_config(ctx);
  gen.n = ctx.config.per_source;
  SyntheticSource source = [&](std::size_t cycle, const std::string& state_id, const std::string& instruction) {
    auto g = gen;
    g.prompt_state_id = state_id;
    g.instruction = instruction;
    g.master_seed = derive_stream(ctx.config.seed, fmt::format("realism-cycle-{}", cycle)).next();
    g.id_prefix = fmt::format("cycle{}-syn", cycle);
    return generate_records(*provider, g, ctx.inventory(), default_nuance_schema()).records;
  };
  RealismConfig rc;
  rc.cycles = ctx.config.cycles;
  rc.seed = ctx.config.seed;
  rc.initial_instruction = bundled_prompt_state(ctx.config.prompt_state).instruction;
  rc.per_source = ctx.config.per_source;
  rc.dispatch = ctx.dispatch();
  const auto cycles = run_realism_cycles(*provider, *provider, real, source, rc);
  ordered_json doc = {{"config_hash", config_hash(ctx.config)}, {"cycles", ordered_json::array()}};
  for (const auto& c : cycles) {
    auto j = to_json(c);
    const auto eq = equivalence_check(c.stats.accuracy, c.stats.n_scored);
    j["equivalence"] = {{"margin", eq.margin},
                        {"interval", {eq.interval.lower, eq.interval.upper}},
                        {"passed", eq.passed}};
    doc["cycles"].push_back(std::move(j));
    ctx.log->info("event=realism_cycle cycle={} accuracy={:.4f} detected_synthetic={} editor_triggered={}", c.cycle,
                  c.stats.accuracy, c.stats.correctly_detected_synthetic, c.editor_triggered);
  }
  write_json(paths.out, doc);
  write_manifest(ctx, "realism-cycle", paths, {paths.out});
  return 0;
}

int cmd_audit(Context& ctx, const Paths& paths) {
  const auto corpus = load(ctx, single_input(paths, "audit-faithfulness"));
  std::vector<ReviewRecord> eligible;
  for (const auto& r : corpus.records)
    if (!r.meta.duplicate_of && r.meta.completion_status == CompletionStatus::completed) eligible.push_back(r);
  const auto sample = audit_sample(eligible, std::min(ctx.config.audit_sample, eligible.size()), ctx.config.seed);
  auto provider = make_provider(ctx);
  const auto verdicts = audit_reviews(*provider, sample, ctx.dispatch());
  const auto report = aggregate_audit(verdicts, sample);
  ordered_json doc = {{"report", to_json(report)}, {"verdicts", ordered_json::parse(verdicts_to_json(verdicts).dump())}};
  write_json(paths.out, doc);
  ctx.log->info("event=audit reviews={} aspect_support_rate={:.4f}", report.n_reviews, report.aspect_support_rate);
  write_manifest(ctx, "audit-faithfulness", paths, {paths.out});
  return 0;
}

int cmd_transfer(Context& ctx, const Paths& paths) {
  const auto corpus = load(ctx, single_input(paths, "transfer-eval"));
  if (paths.model.empty() || paths.external.empty() || paths.mapping.empty())
    throw ArgumentError("transfer-eval needs --model, --external and --mapping");
  const auto model = load_model(paths.model);
  check_model_inventory(model, ctx.inventory());
  const auto mapping = load_aspect_mapping_file(paths.mapping, ctx.inventory());
  const auto external = load_external_corpus(paths.external);
  const auto benchmark = map_external_corpus(external, mapping, ctx.inventory(), ctx.config.multi_mention);
  for (const auto& [label, count] : benchmark.unlisted_labels)
    ctx.log->warn("event=unlisted_external_label label={} count={}", label, count);
  const auto test = require_split(corpus, Split::test);
  const auto approach = paths.approach.empty() ? std::string("tfidf_two_step") : paths.approach;
  const auto syn = restrict_to_overlap(apply_thresholds(score_records(model, test), model.thresholds),
                                       benchmark.overlap_aspects);
  const auto real = restrict_to_overlap(apply_thresholds(score_records(model, benchmark.records), model.thresholds),
                                        benchmark.overlap_aspects);
  auto comparison = overlap_matched_comparison(approach, syn, test, real, benchmark);
  comparison.synthetic.provenance = comparison.real.provenance = provenance(ctx, corpus);
  ordered_json doc = {{"comparison", to_json(comparison)},
                      {"support", support_table_json(benchmark)},
                      {"synthetic_report", to_json(comparison.synthetic)},
                      {"real_report", to_json(comparison.real)}};
  write_json(paths.out, doc);
  write_manifest(ctx, "transfer-eval", paths, {paths.out},
                 {{"mapped_reviews", benchmark.records.size()}, {"dropped", benchmark.dropped_count}});
  return 0;
}

int cmd_report(Context& ctx, const Paths& paths) {
  if (paths.in.empty()) throw ArgumentError("report needs at least one --in");
  std::vector<EvalReport> reports;
  for (const auto& p : paths.in) reports.push_back(eval_report_from_json(read_json(p)));
  const auto bench = emit_report(reports, ctx.inventory());
  write_json(paths.out, to_json(bench));
  const auto table = render_table(bench);
  std::vector<std::string> outputs = {paths.out};
  if (!paths.table.empty()) {
    write_text(paths.table, table);
    outputs.push_back(paths.table);
  }
  *ctx.out << table;
  write_manifest(ctx, "report", paths, outputs);
  return 0;
}

std::vector<std::uint64_t> parse_seeds(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ArgumentError(fmt::format("bad seed '{}'", item));
    }
  }
  return seeds;
}

int cmd_seed_sweep(Context& ctx, const Paths& paths) {
  const auto corpus = load(ctx, single_input(paths, "seed-sweep"));
  const auto seeds = parse_seeds(paths.seeds);
  const auto test = require_split(corpus, Split::test);
  const auto gold = gold_of(test);
  const auto approach = paths.approach.empty() ? std::string("tfidf_two_step") : paths.approach;
  std::vector<EvalReport> completed;
  auto run = [&](std::uint64_t seed) {
    const auto model = train(ctx, corpus, seed);
    const auto p = apply_thresholds(score_records(model, test), model.thresholds);
    auto r = evaluate_predictions(approach, gold, p.aspects, p.sentiments, ctx.inventory().ids());
    r.split_id = split_id(test, Split::test);
    ctx.log->info("event=seed_run seed={} micro_f1={:.4f}", seed, r.detection.aggregates.micro_f1);
    return r;
  };
  auto runs_json = [&] {
    ordered_json a = ordered_json::array();
    for (std::size_t i = 0; i < completed.size(); ++i)
      a.push_back({{"seed", seeds[i]},
                   {"micro_f1", completed[i].detection.aggregates.micro_f1},
                   {"sentiment_mse", completed[i].sentiment.mse ? json(*completed[i].sentiment.mse) : json(nullptr)}});
    return a;
  };
  try {
    const auto summary = seed_sweep(approach, seeds, run, &completed);
    write_json(paths.out, {{"summary", to_json(summary)}, {"runs", runs_json()}});
  } catch (const ArgumentError&) {
    throw;
  } catch (...) {
    write_json(paths.out, {{"aborted", true}, {"runs", runs_json()}});
    throw;
  }
  write_manifest(ctx, "seed-sweep", paths, {paths.out});
  return 0;
}

int cmd_pilot(Context& ctx, const Paths& paths) {
  auto provider = make_provider(ctx);
  auto g = generation_config(ctx);
  g.n = ctx.config.pilot_n;
  const auto report = run_pilot_gate(*provider, g, ctx.config.pilot, ctx.inventory(), default_nuance_schema());
  write_json(paths.out, ordered_json::parse(to_json(report).dump()));
  for (const auto& d : report.diagnostics) ctx.log->warn("event=pilot_diagnostic detail=\"{}\"", d);
  ctx.log->info("event=pilot_gate passed={}", report.passed);
  write_manifest(ctx, "pilot-gate", paths, {paths.out}, {{"passed", report.passed}});
  return report.passed ? 0 : 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic aspect-based sentiment corpus toolkit"};
  app.require_subcommand(1, 1);

  std::string config_path, provider_kind, mode, log_level = "info";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> cycles, sample, n;
  Paths paths;

  app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  struct Spec {
    const char* name;
    const char* help;
    int (*fn)(Context&, const Paths&);
    bool needs_out = true;
  };
  const std::vector<Spec> specs = {
      {"generate", "Generate synthetic reviews", cmd_generate},
      {"assemble", "Validate, merge and flag duplicates", cmd_assemble},
      {"split", "Tag train/validation/test", cmd_split, false},
      {"train-tfidf", "Train the TF-IDF two-step baseline", cmd_train},
      {"calibrate", "Calibrate thresholds on validation", cmd_calibrate},
      {"evaluate", "Score a model or a score file", cmd_evaluate},
      {"prompt-eval", "Prompted inference evaluation", cmd_prompt_eval},
      {"realism-cycle", "Judge-and-edit realism cycles", cmd_realism},
      {"audit-faithfulness", "Label faithfulness audit", cmd_audit},
      {"transfer-eval", "Overlap-matched external transfer", cmd_transfer},
      {"report", "Merge evaluation reports", cmd_report},
      {"seed-sweep", "Seed-stability summary", cmd_seed_sweep},
      {"pilot-gate", "Pilot generation gate", cmd_pilot},
  };
  std::map<const CLI::App*, const Spec*> by_app;
  for (const auto& s : specs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--provider", provider_kind)->check(CLI::IsMember({"stub", "http"}));
    sub->add_option("--in", paths.in, "input path (repeatable)");
    auto* o = sub->add_option("--out", paths.out, "output path");
    if (s.needs_out) o->required();
    sub->add_option("--mode", mode, "prompting mode");
    sub->add_option("--cycles", cycles);
    sub->add_option("--sample", sample);
    sub->add_option("--n", n, "number of reviews to generate");
    sub->add_option("--model", paths.model);
    sub->add_option("--scores", paths.scores, "score file {id, probabilities, sentiments}");
    sub->add_option("--thresholds", paths.thresholds);
    sub->add_option("--scores-out", paths.scores_out);
    sub->add_option("--table", paths.table, "text table output");
    sub->add_option("--real", paths.real, "real review pool (JSONL with text)");
    sub->add_option("--external", paths.external, "annotated external corpus (JSONL)");
    sub->add_option("--mapping", paths.mapping, "external-to-internal aspect mapping");
    sub->add_option("--approach", paths.approach);
    sub->add_option("--split", paths.split)->check(CLI::IsMember({"train", "validation", "test"}));
    sub->add_option("--seeds", paths.seeds, "comma-separated seeds");
    sub->fallthrough();
    by_app[sub] = &s;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("synthabsa", sink);
  log->set_pattern("%l %v");
  log->set_level(spdlog::level::from_str(log_level));

  const auto* sub = app.get_subcommands().front();
  const Spec& spec = *by_app.at(sub);
  try {
    Context ctx;
    ctx.out = &out;
    ctx.log = log;
    if (!config_path.empty()) ctx.config = run_config_from_json(read_json(config_path));
    if (seed) ctx.config.seed = *seed;
    if (!provider_kind.empty()) ctx.config.provider.kind = provider_kind;
    if (!mode.empty()) {
      parse_prompting_mode(mode);
      ctx.config.mode = mode;
    }
    if (cycles) ctx.config.cycles = *cycles;
    if (n) ctx.config.generate_n = ctx.config.pilot_n = *n;
    if (sample) {
      ctx.config.prompt_sample = *sample;
      ctx.config.audit_sample = *sample;
    }
    if (!ctx.config.inventory.empty()) ctx.inventory_storage = load_aspect_inventory_file(ctx.config.inventory);
    log->info("event=start command={} config_hash={}", spec.name, config_hash(ctx.config));
    return spec.fn(ctx, paths);
  } catch (const ArgumentError& e) {
    log->error("event=usage_error command={} detail=\"{}\"", spec.name, e.what());
    return 2;
  } catch (const std::exception& e) {
    log->error("event=failed command={} detail=\"{}\"", spec.name, e.what());
    return 1;
  }
}

}  // namespace synthabsa
