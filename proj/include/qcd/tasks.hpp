#pragma once

// Desk-scale text-to-image in-context tasks: a task file holds one JSON
// object per line (see docs/formats.md).

#include <qcd/error.hpp>
#include <qcd/prompt.hpp>
#include <qcd/text.hpp>

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace qcd {

class Stopwords {
 public:
  Stopwords() = default;
  explicit Stopwords(std::set<std::string> words) : words_(std::move(words)) {}

  /// The list shipped in data/stopwords.txt.
  static Stopwords builtin() {
    return Stopwords({"a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it",
                      "its", "of", "on", "or", "that", "the", "this", "to", "with"});
  }

  /// One word per line; '#' starts a comment line.
  static Stopwords load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stopword list '" + path + "'");
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      words.insert(text::lower(t));
    }
    return Stopwords(std::move(words));
  }

  bool contains(const std::string& w) const { return words_.count(w) > 0; }
  const std::set<std::string>& words() const { return words_; }

 private:
  std::set<std::string> words_;
};

struct TaskInstance {
  std::string id;
  std::vector<ContextPair> context_pairs;
  std::string query;
  std::string truth_object;
  std::string truth_attribute;
  std::vector<std::string> object_lexicon;
  std::vector<std::string> attribute_lexicon;
  std::string attribute_kind = "attribute";  // fills the CB-Ins placeholder
  std::set<std::string> context_objects;
  std::set<std::string> context_attributes;
  size_t shot = 0;
};

/// Content words of the pair texts (stopwords removed) split into
/// attribute-lexicon words and everything else.
inline void derive_context_sets(TaskInstance& t, const Stopwords& stop) {
  t.context_objects.clear();
  t.context_attributes.clear();
  for (const auto& p : t.context_pairs) {
    for (const auto& w : text::feature_words(p.text)) {
      if (stop.contains(w)) continue;
      if (std::find(t.attribute_lexicon.begin(), t.attribute_lexicon.end(), w) != t.attribute_lexicon.end())
        t.context_attributes.insert(w);
      else
        t.context_objects.insert(w);
    }
  }
}

struct TaskFile {
  std::vector<TaskInstance> tasks;
  std::vector<std::string> warnings;
};

inline TaskFile parse_tasks(std::istream& in, const std::string& origin = "<stream>",
                            const Stopwords& stop = Stopwords::builtin()) {
  TaskFile out;
  std::set<std::string> ids;
  std::string line;
  size_t lineno = 0, record = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    ++record;
    auto fail = [&](const std::string& msg) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": record " + std::to_string(record) + ": " + msg);
    };
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known = {"id", "shot", "pairs", "query", "truth_object", "truth_attribute",
                                                  "object_lexicon", "attribute_lexicon", "attribute_kind"};
      if (!known.count(key)) fail("unknown field '" + key + "'");
    }
    auto str = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_string()) fail(std::string("field '") + key + "' must be a string");
      auto v = j[key].get<std::string>();
      if (text::trim(v).empty()) fail(std::string("field '") + key + "' is empty");
      return v;
    };
    auto words = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_array() || j[key].empty())
        fail(std::string("field '") + key + "' must be a non-empty array of strings");
      std::vector<std::string> v;
      for (const auto& w : j[key]) {
        if (!w.is_string()) fail(std::string("field '") + key + "' must contain strings");
        v.push_back(text::lower(w.get<std::string>()));
      }
      return v;
    };

    TaskInstance t;
    t.id = str("id");
    if (!ids.insert(t.id).second) fail("duplicate id '" + t.id + "'");
    if (!j.contains("shot") || !j["shot"].is_number_unsigned()) fail("task '" + t.id + "': field 'shot' must be a positive integer");
    t.shot = j["shot"].get<size_t>();
    if (!j.contains("pairs") || !j["pairs"].is_array()) fail("task '" + t.id + "': field 'pairs' must be an array");
    for (const auto& p : j["pairs"]) {
      if (!p.is_object() || !p.contains("image") || !p.contains("text") || !p["image"].is_string() ||
          !p["text"].is_string())
        fail("task '" + t.id + "': each pair needs string fields 'image' and 'text'");
      t.context_pairs.push_back({p["image"].get<std::string>(), p["text"].get<std::string>()});
    }
    if (t.shot == 0 || t.shot != t.context_pairs.size())
      fail("task '" + t.id + "': shot " + std::to_string(t.shot) + " does not match " +
           std::to_string(t.context_pairs.size()) + " context pairs");
    t.query = str("query");
    t.truth_object = text::lower(str("truth_object"));
    t.truth_attribute = text::lower(str("truth_attribute"));
    t.object_lexicon = words("object_lexicon");
    t.attribute_lexicon = words("attribute_lexicon");
    if (j.contains("attribute_kind")) t.attribute_kind = str("attribute_kind");
    derive_context_sets(t, stop);
    out.tasks.push_back(std::move(t));
  }
  if (out.tasks.empty()) out.warnings.push_back(origin + ": no tasks found");
  return out;
}

inline TaskFile load_tasks(const std::string& path, const Stopwords& stop = Stopwords::builtin()) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file '" + path + "'");
  return parse_tasks(in, path, stop);
}

inline std::string serialize_task(const TaskInstance& t) {
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["shot"] = t.shot;
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : t.context_pairs) j["pairs"].push_back({{"image", p.image_ref}, {"text", p.text}});
  j["query"] = t.query;
  j["truth_object"] = t.truth_object;
  j["truth_attribute"] = t.truth_attribute;
  j["object_lexicon"] = t.object_lexicon;
  j["attribute_lexicon"] = t.attribute_lexicon;
  if (t.attribute_kind != "attribute") j["attribute_kind"] = t.attribute_kind;
  return j.dump();
}

struct Prediction {
  std::string task_id;
  std::string object;
  std::string attribute;
  std::string raw_text;
};

/// First word of the text in each lexicon (case-folded); empty if none.
inline Prediction extract_prediction(const TaskInstance& t, const std::string& raw_text) {
  Prediction p{t.id, "", "", raw_text};
  for (const auto& w : text::feature_words(raw_text)) {
    auto in = [&](const std::vector<std::string>& lex) { return std::find(lex.begin(), lex.end(), w) != lex.end(); };
    if (p.object.empty() && in(t.object_lexicon)) p.object = w;
    if (p.attribute.empty() && in(t.attribute_lexicon)) p.attribute = w;
  }
  return p;
}

}  // namespace qcd
