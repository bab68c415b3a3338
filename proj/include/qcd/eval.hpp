#pragma once

// Scoring and batch evaluation over a configuration matrix.

#include <qcd/decoder.hpp>
#include <qcd/dist.hpp>
#include <qcd/error.hpp>
#include <qcd/prompt.hpp>
#include <qcd/provider.hpp>
#include <qcd/tasks.hpp>
#include <qcd/text.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qcd {

struct TaskOutcome {
  std::string task_id;
  Prediction prediction;
  bool correct = false;
  bool compliance_error = false;
  std::string error;  // provider failure, if any
  std::string trace;  // serialized trace when requested
};

struct CellConfig {
  InstructionKind instruction = InstructionKind::td_ins;
  bool hint = false;
  DecodeMode mode = DecodeMode::base;
  QcdConfig qcd;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::greedy;

  /// e.g. "TD-Ins/off/base" or "HI/on/qcd:0.5".
  std::string name() const;
};

struct EvalReport {
  CellConfig config;
  std::vector<TaskOutcome> outcomes;  // ordered by task id
  size_t correct = 0;
  size_t error_count = 0;
  size_t failures = 0;
  size_t instruction_length = 0;

  size_t n() const { return outcomes.size(); }
  double accuracy() const { return outcomes.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(n()); }
};

/// Shortest decimal rendering that parses back to the same double.
inline std::string short_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

inline std::string CellConfig::name() const {
  std::string m = mode == DecodeMode::base ? "base" : "qcd:" + short_double(qcd.alpha);
  if (mode == DecodeMode::qcd && qcd.space == CombineSpace::prob) m += ":prob";
  return std::string(to_string(instruction)) + "/" + (hint ? "on" : "off") + "/" + m;
}

inline bool is_correct(const TaskInstance& t, const Prediction& p) {
  return p.object == t.truth_object && p.attribute == t.truth_attribute;
}

/// Half-right predictions that copy the other half from the context:
///   (1) attribute right and object taken from the context objects, or
///   (2) object right and attribute taken from the context attributes.
/// Fully correct predictions never count.
inline bool is_compliance_error(const TaskInstance& t, const Prediction& p) {
  if (is_correct(t, p)) return false;
  const bool c1 = p.attribute == t.truth_attribute && t.context_objects.count(p.object) > 0;
  const bool c2 = p.object == t.truth_object && t.context_attributes.count(p.attribute) > 0;
  return c1 || c2;
}

namespace detail {

inline std::map<std::string, const Prediction*> index_predictions(const std::vector<TaskInstance>& tasks,
                                                                  const std::vector<Prediction>& preds) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) by_id[p.task_id] = &p;
  for (const auto& t : tasks)
    if (!by_id.count(t.id)) throw ConfigError("missing prediction for task '" + t.id + "'");
  return by_id;
}

}  // namespace detail

inline size_t count_compliance_errors(const std::vector<TaskInstance>& tasks, const std::vector<Prediction>& preds) {
  auto by_id = detail::index_predictions(tasks, preds);
  size_t n = 0;
  for (const auto& t : tasks) n += is_compliance_error(t, *by_id.at(t.id));
  return n;
}

inline EvalReport score_accuracy(const std::vector<TaskInstance>& tasks, const std::vector<Prediction>& preds,
                                 CellConfig config = {}) {
  auto by_id = detail::index_predictions(tasks, preds);
  EvalReport r;
  r.config = config;
  for (const auto& t : tasks) {
    TaskOutcome o;
    o.task_id = t.id;
    o.prediction = *by_id.at(t.id);
    o.correct = is_correct(t, o.prediction);
    o.compliance_error = is_compliance_error(t, o.prediction);
    r.correct += o.correct;
    r.error_count += o.compliance_error;
    r.outcomes.push_back(std::move(o));
  }
  std::sort(r.outcomes.begin(), r.outcomes.end(),
            [](const TaskOutcome& a, const TaskOutcome& b) { return a.task_id < b.task_id; });
  return r;
}

struct EvalMatrix {
  std::vector<DecodeMode> modes = {DecodeMode::base, DecodeMode::qcd};
  std::vector<bool> hints = {false};
  std::vector<double> alphas = {0.5};
  std::vector<InstructionKind> instructions = {InstructionKind::td_ins};
  QcdConfig base;  // temperature, top_p and space; alpha comes from `alphas`
  std::uint64_t seed = 0;
  size_t max_tokens = kDefaultMaxTokens;
  Sampling sampling = Sampling::greedy;
  bool keep_traces = false;

  /// instruction x hint x (base | qcd per alpha), in that nesting order.
  std::vector<CellConfig> cells() const {
    if (modes.empty() || hints.empty() || instructions.empty()) throw ConfigError("evaluation matrix is empty");
    std::vector<CellConfig> out;
    for (auto ins : instructions)
      for (bool hint : hints)
        for (auto mode : modes) {
          CellConfig c{ins, hint, mode, base, seed, sampling};
          if (mode == DecodeMode::base) {
            out.push_back(c);
            continue;
          }
          if (alphas.empty()) throw ConfigError("qcd mode needs at least one alpha");
          for (double a : alphas) {
            c.qcd.alpha = a;
            out.push_back(c);
          }
        }
    return out;
  }
};

/// Per-task seed: independent of task order and of the other tasks.
inline std::uint64_t task_seed(std::uint64_t master, const std::string& task_id) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : task_id) h = (h ^ c) * 0x100000001b3ull;
  return SeedStream::mix(master ^ h);
}

inline size_t cell_instruction_length(const CellConfig& c, const TokenCounter& counter = whitespace_token_count) {
  auto body = instruction(c.instruction).body;
  if (c.hint && c.instruction != InstructionKind::hi) body += " " + prompts::hint_suffix();
  return counter(body);
}

inline EvalReport evaluate_cell(const std::vector<TaskInstance>& tasks, const NextTokenProvider& provider,
                                const CellConfig& cell, size_t max_tokens = kDefaultMaxTokens,
                                bool keep_traces = false) {
  cell.qcd.validate();
  std::vector<Prediction> preds;
  std::map<std::string, std::pair<std::string, std::string>> extra;  // id -> (error, trace)
  for (const auto& t : tasks) {
    auto ins = with_attribute(instruction(cell.instruction), t.attribute_kind);
    auto seq = build_sequence(ins, t.context_pairs, t.query, cell.hint);
    DecodeSession s(provider, seq, cell.qcd, cell.mode, task_seed(cell.seed, t.id), max_tokens);
    try {
      auto trace = decode(s, cell.sampling);
      preds.push_back(extract_prediction(t, detokenize(trace, provider.vocab())));
      if (keep_traces) extra[t.id].second = serialize_trace(trace, provider.vocab());
    } catch (const BackendError& e) {
      preds.push_back(extract_prediction(t, ""));
      extra[t.id].first = e.what();
    }
  }
  auto r = score_accuracy(tasks, preds, cell);
  for (auto& o : r.outcomes) {
    auto it = extra.find(o.task_id);
    if (it == extra.end()) continue;
    o.error = it->second.first;
    o.trace = it->second.second;
    r.failures += !o.error.empty();
  }
  r.instruction_length = cell_instruction_length(cell);
  return r;
}

inline std::vector<EvalReport> run_eval(const std::vector<TaskInstance>& tasks, const NextTokenProvider& provider,
                                        const EvalMatrix& matrix) {
  if (matrix.max_tokens == 0) throw ConfigError("max_tokens must be > 0");
  std::vector<EvalReport> out;
  for (const auto& cell : matrix.cells())
    out.push_back(evaluate_cell(tasks, provider, cell, matrix.max_tokens, matrix.keep_traces));
  return out;
}

}  // namespace qcd
