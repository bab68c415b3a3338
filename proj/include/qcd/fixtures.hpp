#pragma once

// Deterministic generator for the cobsat-mini task file and its matching
// TableLM spec.
//
// Odd-numbered ids (cm-01, cm-03, ...) share an object across the context and ask for a new
// attribute ("green apple", "red apple", query "purple" -> purple apple).
// Even-numbered ids share an attribute and ask for a new object ("purple
// hat", "purple cup", query "apple" -> purple apple).

#include <qcd/dist.hpp>
#include <qcd/tasks.hpp>

#include <array>
#include <cstdio>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qcd::fixtures {

inline constexpr std::array<std::string_view, 5> kObjects = {"apple", "hat", "cup", "book", "leaf"};
inline constexpr std::array<std::string_view, 5> kAttributes = {"purple", "red", "green", "wooden", "glass"};
inline constexpr size_t kTaskCount = 20;
inline constexpr std::uint64_t kDefaultSeed = 7;

inline std::vector<TaskInstance> cobsat_mini_tasks(std::uint64_t seed = kDefaultSeed) {
  std::uint64_t counter = 0;
  auto pick = [&](size_t n) { return static_cast<size_t>(SeedStream::mix(seed ^ SeedStream::mix(counter++)) % n); };
  auto draw = [&](std::vector<std::string>& pool) {
    auto i = pick(pool.size());
    auto w = pool[i];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    return w;
  };
  const std::vector<std::string> objects(kObjects.begin(), kObjects.end());
  const std::vector<std::string> attributes(kAttributes.begin(), kAttributes.end());

  std::vector<TaskInstance> tasks;
  for (size_t i = 0; i < kTaskCount; ++i) {
    TaskInstance t;
    char id[16];
    std::snprintf(id, sizeof id, "cm-%02zu", i + 1);
    t.id = id;
    t.shot = 2;
    t.object_lexicon = objects;
    t.attribute_lexicon = attributes;
    std::vector<std::string> texts;
    if (i % 2 == 0) {
      auto attrs = attributes;
      const auto object = objects[pick(objects.size())];
      const auto query = draw(attrs);
      for (int k = 0; k < 2; ++k) texts.push_back(draw(attrs) + " " + object);
      t.query = query;
      t.truth_object = object;
      t.truth_attribute = query;
    } else {
      auto objs = objects;
      const auto attribute = attributes[pick(attributes.size())];
      const auto query = draw(objs);
      for (int k = 0; k < 2; ++k) texts.push_back(attribute + " " + draw(objs));
      t.query = query;
      t.truth_object = query;
      t.truth_attribute = attribute;
    }
    for (size_t k = 0; k < texts.size(); ++k)
      t.context_pairs.push_back({t.id + "-img" + std::to_string(k + 1), texts[k]});
    derive_context_sets(t, Stopwords::builtin());
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline std::string cobsat_mini_task_file(std::uint64_t seed = kDefaultSeed) {
  std::string out;
  for (const auto& t : cobsat_mini_tasks(seed)) out += serialize_task(t) + "\n";
  return out;
}

/// Toy model for the cobsat-mini tasks. The prior encodes object -> attribute
/// associations of varying strength; prior_bias 0.7 lets them dominate.
inline std::string cobsat_mini_table_lm() {
  return R"(# cobsat-mini toy model. Output shape: <attribute> <object> <eos>.
[VOCAB]
tokens = purple red green wooden glass apple hat cup book leaf <eos>
eos = <eos>
class.attribute = purple red green wooden glass
class.object = apple hat cup book leaf

[PRIOR]
# object -> attribute associations, active on the attribute slot only
rule = ctx:apple prev:^ -> red:0.5 purple:0.125 green:0.125 wooden:0.125 glass:0.125
rule = ctx:hat prev:^ -> purple:0.4 red:0.15 green:0.15 wooden:0.15 glass:0.15
rule = ctx:cup prev:^ -> glass:0.5 purple:0.125 red:0.125 green:0.125 wooden:0.125
rule = ctx:book prev:^ -> wooden:0.8 purple:0.05 red:0.05 green:0.05 glass:0.05
rule = ctx:leaf prev:^ -> green:0.9 purple:0.025 red:0.025 wooden:0.025 glass:0.025

[RULES]
# attribute slot
rule = que:@attribute prev:^ -> $query:0.5 $ctx@attribute:0.5
rule = que:@object prev:^ -> $ctx@attribute:1.0
rule = !query prev:^ -> $prior:1.0
rule = !query prev:^ -> $ctx@attribute:1.0
# object slot; an object query competes with copying the context objects
rule = que:@attribute prev:@attribute -> $ctx@object:1.0
rule = que:@object prev:@attribute -> $query:0.3 $ctx@object:0.7
rule = !query prev:@attribute -> $ctx@object:1.0
rule = prev:@object -> <eos>:1.0

[PARAMS]
prior_bias = 0.7
compliance_gain = 1.0
hint_phrase = most important clue
)";
}

}  // namespace qcd::fixtures
