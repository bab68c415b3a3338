#pragma once

// Instruction templates and structured assembly of the interleaved
// instruction / context / query input.

#include <qcd/error.hpp>
#include <qcd/text.hpp>

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qcd {

enum class InstructionKind { cb_ins, cot_ins, td_ins, td_ins_pp, hi };

inline constexpr std::array<InstructionKind, 5> kAllInstructions = {
    InstructionKind::cb_ins, InstructionKind::cot_ins, InstructionKind::td_ins, InstructionKind::td_ins_pp,
    InstructionKind::hi};

namespace prompts {

inline constexpr std::string_view kAttributePlaceholder = "<ATTRIBUTE>";

inline constexpr std::string_view kCbIns =
    "Please identify the common main object in the images, and describe the next image to be generated based on "
    "the sequence below. Your description of image should contain the description of the common main object and "
    "the requested <ATTRIBUTE>.";

inline constexpr std::string_view kCotIns =
    "We provide a few examples, each of which is an input-output pair where the output is a description of the "
    "image associated with the input. Based on the examples, the task is to predict the next image description. "
    "Before predicting the next image, let's think step by step and analyze what the relationship between the "
    "text input and image output in each example is first. Based on the analysis, please describe what the next "
    "image should be look like given the request.";

inline constexpr std::string_view kTdIns =
    "I give you several words and pictures. First, please analyse what the next picture is. Then give me a "
    "detailed diffusion prompt to describe the next picture. Please only provide me the detailed prompt and start "
    "the answer with 'Create an image'.";

inline constexpr std::string_view kStepByStep = "Let's think step by step";

/// The canonical hint sentence. Variants are gated against this text.
inline constexpr std::string_view kHint =
    "The last text I provide contains the most important clue about the next picture. Focus mainly on "
    "understanding and following the meaning of the final text when creating your description.";

inline constexpr std::string_view kHintPrefix = "Note: ";

inline std::string hint_suffix() { return std::string(kHintPrefix) + std::string(kHint); }

}  // namespace prompts

struct InstructionTemplate {
  InstructionKind kind = InstructionKind::td_ins;
  std::string body;
  bool requires_task_rewrite = false;

  bool needs_attribute() const { return body.find(prompts::kAttributePlaceholder) != std::string::npos; }
};

inline std::string_view to_string(InstructionKind k) {
  switch (k) {
    case InstructionKind::cb_ins: return "CB-Ins";
    case InstructionKind::cot_ins: return "CoT-Ins";
    case InstructionKind::td_ins: return "TD-Ins";
    case InstructionKind::td_ins_pp: return "TD-Ins++";
    case InstructionKind::hi: return "HI";
  }
  return "?";
}

inline InstructionKind parse_instruction(std::string_view name) {
  for (auto k : kAllInstructions)
    if (text::lower(to_string(k)) == text::lower(name)) return k;
  throw ConfigError("unknown instruction '" + std::string(name) + "' (expected CB-Ins, CoT-Ins, TD-Ins, TD-Ins++ or HI)");
}

inline InstructionTemplate instruction(InstructionKind k) {
  using namespace prompts;
  switch (k) {
    case InstructionKind::cb_ins: return {k, std::string(kCbIns), true};
    case InstructionKind::cot_ins: return {k, std::string(kCotIns), false};
    case InstructionKind::td_ins: return {k, std::string(kTdIns), false};
    case InstructionKind::td_ins_pp: return {k, std::string(kTdIns) + " " + std::string(kStepByStep), false};
    case InstructionKind::hi: return {k, std::string(kTdIns) + " " + hint_suffix(), false};
  }
  throw ConfigError("unknown instruction");
}

/// Fills the CB-Ins task placeholder (e.g. "color"). No-op for other templates.
inline InstructionTemplate with_attribute(InstructionTemplate t, std::string_view attribute_kind) {
  for (auto pos = t.body.find(prompts::kAttributePlaceholder); pos != std::string::npos;
       pos = t.body.find(prompts::kAttributePlaceholder, pos + attribute_kind.size()))
    t.body.replace(pos, prompts::kAttributePlaceholder.size(), attribute_kind);
  return t;
}

using TokenCounter = std::function<size_t(std::string_view)>;

inline size_t whitespace_token_count(std::string_view s) { return text::split_ws(s).size(); }

inline size_t instruction_token_length(const InstructionTemplate& t,
                                       const TokenCounter& counter = whitespace_token_count) {
  return counter(t.body);
}

// ---------------------------------------------------------------------------

enum class SegmentKind { instruction, hint, context_image_ref, context_text, query };

struct Segment {
  SegmentKind kind;
  std::string text;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ContextPair {
  std::string image_ref;
  std::string text;

  friend bool operator==(const ContextPair&, const ContextPair&) = default;
};

/// [instruction][hint?]([image_ref][context_text])+[query?]
struct MultimodalSequence {
  std::vector<Segment> segments;

  bool has_hint() const { return segments.size() > 1 && segments[1].kind == SegmentKind::hint; }
  bool has_query() const { return !segments.empty() && segments.back().kind == SegmentKind::query; }

  size_t shot_count() const {
    size_t n = 0;
    for (const auto& s : segments) n += s.kind == SegmentKind::context_image_ref;
    return n;
  }

  const std::string& query() const {
    if (!has_query()) throw ConfigError("no query present");
    return segments.back().text;
  }

  /// Instruction text plus the appended hint, as the model sees it.
  std::string instruction_region() const {
    std::string out = segments.at(0).text;
    if (has_hint()) out += " " + segments[1].text;
    return out;
  }

  void validate() const {
    if (segments.empty() || segments[0].kind != SegmentKind::instruction)
      throw ConfigError("sequence must start with exactly one instruction segment");
    const size_t begin = has_hint() ? 2 : 1;
    const size_t end = has_query() ? segments.size() - 1 : segments.size();
    if (end <= begin) throw ConfigError("sequence has no context pairs");
    if ((end - begin) % 2 != 0) throw ConfigError("context must alternate image_ref, text");
    for (size_t i = begin; i < end; i += 2) {
      if (segments[i].kind != SegmentKind::context_image_ref || segments[i + 1].kind != SegmentKind::context_text)
        throw ConfigError("context must alternate image_ref, text");
    }
    if (has_query() && text::trim(segments.back().text).empty()) throw ConfigError("query text is empty");
  }

  friend bool operator==(const MultimodalSequence&, const MultimodalSequence&) = default;
};

/// Assembles [X_ins; X_con; X_que]. With hint_on the canonical hint is
/// appended to the instruction region unless the template already embeds it.
inline MultimodalSequence build_sequence(const InstructionTemplate& ins, const std::vector<ContextPair>& context,
                                         std::string_view query, bool hint_on) {
  if (context.empty()) throw ConfigError("context is empty: at least one image/text pair is required");
  if (text::trim(query).empty()) throw ConfigError("query is empty");
  if (ins.needs_attribute())
    throw ConfigError(std::string(to_string(ins.kind)) + " requires a task-specific attribute rewrite");
  MultimodalSequence seq;
  seq.segments.push_back({SegmentKind::instruction, ins.body});
  if (hint_on && ins.kind != InstructionKind::hi) seq.segments.push_back({SegmentKind::hint, prompts::hint_suffix()});
  for (const auto& p : context) {
    seq.segments.push_back({SegmentKind::context_image_ref, p.image_ref});
    seq.segments.push_back({SegmentKind::context_text, p.text});
  }
  seq.segments.push_back({SegmentKind::query, std::string(query)});
  return seq;
}

/// The same input with the query omitted.
inline MultimodalSequence drop_query(const MultimodalSequence& seq) {
  if (!seq.has_query()) throw ConfigError("no query present");
  MultimodalSequence out = seq;
  out.segments.pop_back();
  return out;
}

inline constexpr std::string_view kQueryMarker = "QUERY:";

/// instruction [hint] "[IMG:<ref>] <text>"... "QUERY: <text>", space-joined.
inline std::string render(const MultimodalSequence& seq) {
  std::string out;
  for (const auto& s : seq.segments) {
    if (!out.empty() && s.kind != SegmentKind::context_text) out += ' ';
    switch (s.kind) {
      case SegmentKind::instruction:
      case SegmentKind::hint: out += s.text; break;
      case SegmentKind::context_image_ref: out += "[IMG:" + s.text + "]"; break;
      case SegmentKind::context_text: out += " " + s.text; break;
      case SegmentKind::query: out += std::string(kQueryMarker) + " " + s.text; break;
    }
  }
  return out;
}

}  // namespace qcd
