#include "synthabsa/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "synthabsa/default_config.hpp"
#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open configuration document " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::string require_string(const json& object, const char* key, std::string_view context) {
  auto it = object.find(key);
  if (it == object.end() || !it->is_string())
    throw SchemaError(std::string(context) + ": missing string field '" + key + "'");
  return it->get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Sentiment

Sentiment sentiment_from_value(int value) {
  switch (value) {
    case -1: return Sentiment::negative;
    case 0: return Sentiment::neutral;
    case 1: return Sentiment::positive;
    default: throw ArgumentError("sentiment value out of range: " + std::to_string(value));
  }
}

std::string_view to_string(Sentiment s) noexcept {
  switch (s) {
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
    case Sentiment::positive: return "positive";
  }
  return "neutral";
}

std::optional<Sentiment> parse_sentiment(std::string_view label) noexcept {
  if (label == "negative") return Sentiment::negative;
  if (label == "neutral") return Sentiment::neutral;
  if (label == "positive") return Sentiment::positive;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// AspectInventory

const std::array<std::string_view, 5>& AspectInventory::group_ids() noexcept {
  static constexpr std::array<std::string_view, 5> kGroups = {
      "instructional_quality", "assessment_and_course_management",
      "learning_demand_and_readiness", "learning_environment", "engagement_and_value"};
  return kGroups;
}

AspectInventory::AspectInventory(std::vector<AspectInfo> aspects) : aspects_(std::move(aspects)) {
  const auto& groups = group_ids();
  for (std::size_t i = 0; i < aspects_.size(); ++i) {
    const auto& a = aspects_[i];
    if (a.id.empty()) throw SchemaError("aspect #" + std::to_string(i) + " has an empty id");
    if (std::find(groups.begin(), groups.end(), a.group) == groups.end())
      throw SchemaError("aspect '" + a.id + "' has unknown group '" + a.group + "'");
    if (!index_.emplace(a.id, i).second) throw SchemaError("duplicate aspect '" + a.id + "'");
  }
  if (aspects_.size() != kAspectCount)
    throw SchemaError("aspect inventory must list exactly 20 aspects, found " +
                      std::to_string(aspects_.size()));
  for (auto g : groups) {
    const bool used = std::any_of(aspects_.begin(), aspects_.end(),
                                  [&](const AspectInfo& a) { return a.group == g; });
    if (!used) throw SchemaError("group '" + std::string(g) + "' has no aspects");
  }
}

std::vector<std::string> AspectInventory::ids() const {
  std::vector<std::string> out;
  out.reserve(aspects_.size());
  for (const auto& a : aspects_) out.push_back(a.id);
  return out;
}

std::optional<std::size_t> AspectInventory::index_of(std::string_view aspect) const noexcept {
  auto it = index_.find(aspect);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& AspectInventory::group_of(std::string_view aspect) const {
  auto idx = index_of(aspect);
  if (!idx) throw SchemaError("unknown aspect '" + std::string(aspect) + "'");
  return aspects_[*idx].group;
}

AspectInventory load_aspect_inventory(const json& document) {
  auto it = document.find("aspects");
  if (it == document.end() || !it->is_array())
    throw SchemaError("aspect inventory document lacks an 'aspects' list");
  std::vector<AspectInfo> aspects;
  for (const auto& entry : *it) {
    if (!entry.is_object()) throw SchemaError("aspect entry is not an object");
    aspects.push_back({require_string(entry, "id", "aspect entry"),
                       require_string(entry, "group", "aspect entry")});
  }
  return AspectInventory(std::move(aspects));
}

AspectInventory load_aspect_inventory_file(const std::filesystem::path& path) {
  return load_aspect_inventory(read_json_file(path));
}

const AspectInventory& default_aspect_inventory() {
  static const AspectInventory inventory =
      load_aspect_inventory(json::parse(bundled::kAspectInventoryJson));
  return inventory;
}

// ---------------------------------------------------------------------------
// LabelSet

LabelSet::LabelSet(std::initializer_list<std::pair<std::string, Sentiment>> entries) {
  for (const auto& [aspect, sentiment] : entries) set(aspect, sentiment);
}

void LabelSet::set(std::string aspect, Sentiment sentiment) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), aspect,
                             [](const LabelEntry& e, const std::string& a) { return e.aspect < a; });
  if (it != entries_.end() && it->aspect == aspect) {
    it->sentiment = sentiment;
    return;
  }
  entries_.insert(it, LabelEntry{std::move(aspect), sentiment});
}

bool LabelSet::insert(std::string aspect, Sentiment sentiment) {
  if (contains(aspect)) return false;
  set(std::move(aspect), sentiment);
  return true;
}

bool LabelSet::erase(std::string_view aspect) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const LabelEntry& e) { return e.aspect == aspect; });
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

std::optional<Sentiment> LabelSet::find(std::string_view aspect) const noexcept {
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), aspect,
      [](const LabelEntry& e, std::string_view a) { return std::string_view(e.aspect) < a; });
  if (it != entries_.end() && it->aspect == aspect) return it->sentiment;
  return std::nullopt;
}

ValidationResult validate_label_set(const LabelSet& labels, const AspectInventory& inventory) {
  ValidationResult result;
  if (labels.size() < kMinLabels) result.violations.push_back("label set is empty");
  if (labels.size() > kMaxLabels)
    result.violations.push_back("label set has " + std::to_string(labels.size()) +
                                " entries; at most 3 allowed");
  for (const auto& entry : labels) {
    if (!inventory.contains(entry.aspect))
      result.violations.push_back("aspect '" + entry.aspect + "' is not in the inventory");
  }
  return result;
}

json label_set_to_json(const LabelSet& labels) {
  json out = json::object();
  for (const auto& e : labels) out[e.aspect] = std::string(to_string(e.sentiment));
  return out;
}

LabelSet label_set_from_json(const json& object) {
  if (!object.is_object()) throw SchemaError("labels must be an object");
  LabelSet labels;
  for (const auto& [aspect, value] : object.items()) {
    if (!value.is_string()) throw SchemaError("label for '" + aspect + "' is not a string");
    auto s = parse_sentiment(value.get<std::string>());
    if (!s) throw SchemaError("label for '" + aspect + "' is not a ternary sentiment");
    labels.set(aspect, *s);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Nuance schema

std::string_view to_string(NuanceGroup group) noexcept {
  switch (group) {
    case NuanceGroup::core_context: return "core_context";
    case NuanceGroup::assessment_teaching: return "assessment_teaching";
    case NuanceGroup::linguistic_diversity: return "linguistic_diversity";
    case NuanceGroup::realism_controls: return "realism_controls";
  }
  return "core_context";
}

std::optional<NuanceGroup> parse_nuance_group(std::string_view name) noexcept {
  for (auto g : kNuanceGroups)
    if (to_string(g) == name) return g;
  return std::nullopt;
}

std::size_t selections_per_group(NuanceGroup group) noexcept {
  switch (group) {
    case NuanceGroup::core_context: return 5;
    case NuanceGroup::assessment_teaching: return 4;
    case NuanceGroup::linguistic_diversity: return 3;
    case NuanceGroup::realism_controls: return 3;
  }
  return 0;
}

namespace {

const std::map<NuanceGroup, std::vector<std::string_view>>& required_attributes() {
  static const std::map<NuanceGroup, std::vector<std::string_view>> kRequired = {
      {NuanceGroup::core_context,
       {"course_name", "course_level", "semester_stage", "student_background",
        "motivation_for_taking_course", "attendance_pattern", "study_context", "grade_band"}},
      {NuanceGroup::assessment_teaching,
       {"assessment_profile", "instruction_delivery", "support_channel_experience",
        "administrative_friction", "feedback_timing", "prerequisite_fit",
        "collaboration_structure", "platform_and_tooling"}},
      {NuanceGroup::linguistic_diversity,
       {"writing_style", "emotional_temperature", "hedging_level", "specificity_level",
        "review_length_band", "formality_level", "recommendation_stance"}},
      {NuanceGroup::realism_controls,
       {"review_shape", "contradiction_pattern", "time_pressure_context", "natural_noise",
        "comparison_frame", "memory_anchor"}},
  };
  return kRequired;
}

}  // namespace

NuanceSchema::NuanceSchema(std::vector<NuanceAttribute> attributes)
    : attributes_(std::move(attributes)) {
  std::set<std::string, std::less<>> seen;
  for (const auto& attr : attributes_) {
    if (!seen.insert(attr.id).second) throw SchemaError("duplicate attribute '" + attr.id + "'");
    if (attr.values.size() < kMinValues || attr.values.size() > kMaxValues)
      throw SchemaError("attribute '" + attr.id + "' must have 4-6 values, has " +
                        std::to_string(attr.values.size()));
    std::set<std::string_view> distinct(attr.values.begin(), attr.values.end());
    if (distinct.size() != attr.values.size())
      throw SchemaError("attribute '" + attr.id + "' repeats a value");
  }
  for (const auto& [group, names] : required_attributes()) {
    for (auto name : names) {
      const auto* attr = find(name);
      if (!attr)
        throw SchemaError("nuance schema lacks required attribute '" + std::string(name) + "'");
      if (attr->group != group)
        throw SchemaError("attribute '" + std::string(name) + "' must belong to group '" +
                          std::string(to_string(group)) + "'");
    }
  }
  for (auto g : kNuanceGroups) {
    if (attributes_in(g).size() < selections_per_group(g))
      throw SchemaError("group '" + std::string(to_string(g)) + "' has too few attributes");
  }
}

std::vector<const NuanceAttribute*> NuanceSchema::attributes_in(NuanceGroup group) const {
  std::vector<const NuanceAttribute*> out;
  for (const auto& attr : attributes_)
    if (attr.group == group) out.push_back(&attr);
  return out;
}

const NuanceAttribute* NuanceSchema::find(std::string_view id) const noexcept {
  for (const auto& attr : attributes_)
    if (attr.id == id) return &attr;
  return nullptr;
}

NuanceSchema load_nuance_schema(const json& document) {
  auto it = document.find("attributes");
  if (it == document.end() || !it->is_array())
    throw SchemaError("nuance schema document lacks an 'attributes' list");
  std::vector<NuanceAttribute> attributes;
  for (const auto& entry : *it) {
    if (!entry.is_object()) throw SchemaError("attribute entry is not an object");
    NuanceAttribute attr;
    attr.id = require_string(entry, "id", "attribute entry");
    const auto group_name = require_string(entry, "group", "attribute '" + attr.id + "'");
    auto group = parse_nuance_group(group_name);
    if (!group) throw SchemaError("attribute '" + attr.id + "' has unknown group '" + group_name + "'");
    attr.group = *group;
    auto values = entry.find("values");
    if (values == entry.end() || !values->is_array())
      throw SchemaError("attribute '" + attr.id + "' lacks a 'values' list");
    for (const auto& v : *values) {
      if (!v.is_string()) throw SchemaError("attribute '" + attr.id + "' has a non-string value");
      attr.values.push_back(v.get<std::string>());
    }
    attributes.push_back(std::move(attr));
  }
  return NuanceSchema(std::move(attributes));
}

NuanceSchema load_nuance_schema_file(const std::filesystem::path& path) {
  return load_nuance_schema(read_json_file(path));
}

const NuanceSchema& default_nuance_schema() {
  static const NuanceSchema schema = load_nuance_schema(json::parse(bundled::kNuanceSchemaJson));
  return schema;
}

std::optional<std::string_view> NuanceState::find(std::string_view attribute) const noexcept {
  for (const auto& s : selections)
    if (s.attribute == attribute) return std::string_view(s.value);
  return std::nullopt;
}

std::size_t NuanceState::count(NuanceGroup group) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      selections.begin(), selections.end(), [&](const NuanceSelection& s) { return s.group == group; }));
}

ValidationResult validate_nuance_state(const NuanceState& state, const NuanceSchema* schema) {
  ValidationResult result;
  for (auto g : kNuanceGroups) {
    const auto n = state.count(g);
    if (n != selections_per_group(g))
      result.violations.push_back("group '" + std::string(to_string(g)) + "' has " +
                                  std::to_string(n) + " selections, expected " +
                                  std::to_string(selections_per_group(g)));
  }
  if (!state.find(kCourseNameAttribute)) result.violations.push_back("course_name missing");
  if (!state.find(kLengthBandAttribute)) result.violations.push_back("review_length_band missing");
  std::set<std::string_view> seen;
  for (const auto& s : state.selections) {
    if (!seen.insert(s.attribute).second)
      result.violations.push_back("attribute '" + s.attribute + "' selected twice");
    if (!schema) continue;
    const auto* attr = schema->find(s.attribute);
    if (!attr) {
      result.violations.push_back("attribute '" + s.attribute + "' is not in the schema");
    } else if (std::find(attr->values.begin(), attr->values.end(), s.value) == attr->values.end()) {
      result.violations.push_back("value '" + s.value + "' is not allowed for '" + s.attribute + "'");
    }
  }
  return result;
}

json nuance_state_to_json(const NuanceState& state) {
  json out = json::object();
  for (const auto& s : state.selections) out[s.attribute] = s.value;
  return out;
}

NuanceState nuance_state_from_json(const json& object, const NuanceSchema& schema) {
  if (!object.is_object()) throw SchemaError("nuance must be an object");
  NuanceState state;
  // Restore schema order; json objects iterate alphabetically.
  for (const auto& attr : schema.attributes()) {
    auto it = object.find(attr.id);
    if (it == object.end()) continue;
    if (!it->is_string()) throw SchemaError("nuance value for '" + attr.id + "' is not a string");
    state.selections.push_back({attr.id, attr.group, it->get<std::string>()});
  }
  for (const auto& [key, value] : object.items()) {
    if (!schema.find(key)) throw SchemaError("nuance attribute '" + key + "' is not in the schema");
  }
  return state;
}

// ---------------------------------------------------------------------------
// Length bands

LengthBandTable::LengthBandTable(std::vector<LengthBand> bands) : bands_(std::move(bands)) {
  if (bands_.empty()) throw SchemaError("length band table is empty");
  for (std::size_t i = 0; i < bands_.size(); ++i) {
    if (bands_[i].min_words > bands_[i].max_words)
      throw SchemaError("length band '" + bands_[i].name + "' has min > max");
    if (i > 0 && (bands_[i].min_words < bands_[i - 1].min_words ||
                  bands_[i].max_words <= bands_[i - 1].max_words))
      throw SchemaError("length bands must be ordered by increasing range");
  }
}

const LengthBand* LengthBandTable::find(std::string_view name) const noexcept {
  for (const auto& b : bands_)
    if (b.name == name) return &b;
  return nullptr;
}

const LengthBand& LengthBandTable::at(std::string_view name) const {
  const auto* band = find(name);
  if (!band) throw ArgumentError("unknown length band '" + std::string(name) + "'");
  return *band;
}

std::size_t LengthBandTable::rank(std::string_view name) const {
  const auto& band = at(name);
  return static_cast<std::size_t>(&band - bands_.data());
}

std::optional<std::string> LengthBandTable::classify(int words) const {
  for (const auto& b : bands_)
    if (b.contains(words)) return b.name;
  return std::nullopt;
}

const LengthBandTable& default_length_bands() {
  static const LengthBandTable table({{"very_short", 35, 70},
                                      {"short", 70, 110},
                                      {"medium", 110, 170},
                                      {"long", 170, 280}});
  return table;
}

// ---------------------------------------------------------------------------
// Records

std::string_view to_string(CompletionStatus s) noexcept {
  return s == CompletionStatus::completed ? "completed" : "incomplete";
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(RecordSource s) noexcept {
  return s == RecordSource::synthetic ? "synthetic" : "real_transfer";
}

std::string_view to_string(RefinementStatus s) noexcept {
  switch (s) {
    case RefinementStatus::not_run: return "not_run";
    case RefinementStatus::applied: return "applied";
    case RefinementStatus::skipped: return "skipped";
  }
  return "not_run";
}

std::optional<CompletionStatus> parse_completion_status(std::string_view s) noexcept {
  if (s == "completed") return CompletionStatus::completed;
  if (s == "incomplete") return CompletionStatus::incomplete;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::optional<RecordSource> parse_record_source(std::string_view s) noexcept {
  if (s == "synthetic") return RecordSource::synthetic;
  if (s == "real_transfer") return RecordSource::real_transfer;
  return std::nullopt;
}

std::optional<RefinementStatus> parse_refinement_status(std::string_view s) noexcept {
  if (s == "not_run") return RefinementStatus::not_run;
  if (s == "applied") return RefinementStatus::applied;
  if (s == "skipped") return RefinementStatus::skipped;
  return std::nullopt;
}

int count_words(std::string_view text) noexcept {
  int count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

void ReviewRecord::set_text(std::string new_text) {
  text = std::move(new_text);
  meta.word_count = count_words(text);
}

ValidationResult validate_record(const ReviewRecord& record, const AspectInventory& inventory) {
  ValidationResult result;
  if (record.source == RecordSource::synthetic) {
    result = validate_label_set(record.labels, inventory);
  } else {
    // Mapped external reviews may carry more than three overlap aspects.
    if (record.labels.empty()) result.violations.push_back("record '" + record.id + "' has no labels");
    for (const auto& e : record.labels)
      if (!inventory.contains(e.aspect))
        result.violations.push_back("aspect '" + e.aspect + "' is not in the inventory");
  }
  if (record.id.empty()) result.violations.push_back("record id is empty");
  if (record.meta.completion_status == CompletionStatus::completed && record.text.empty())
    result.violations.push_back("completed record '" + record.id + "' has empty text");
  if (record.meta.word_count != count_words(record.text))
    result.violations.push_back("record '" + record.id + "' word_count does not match its text");
  return result;
}

}  // namespace synthabsa
