#pragma once

// TableLM: a deterministic rule-table language model.
//
// A spec file declares a vocabulary, an ordered rule table, an optional
// conditional prior and two knobs. For each step:
//
//   base   = first matching rule (uniform if none matches)
//   mixed  = (1 - prior_bias) * base + prior_bias * prior   (if a prior matches)
//   if query and hint present: query tokens *= (1 + compliance_gain), renormalize
//   logits = ln(mixed)
//
// The file grammar is documented in docs/formats.md.

#include <qcd/dist.hpp>
#include <qcd/error.hpp>
#include <qcd/prompt.hpp>
#include <qcd/provider.hpp>
#include <qcd/text.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace qcd {

/// Words visible to TableLM rules, extracted from a rendered context.
struct ContextFeatures {
  std::vector<std::string> context_words;
  std::vector<std::string> query_words;
  bool query_present = false;
  bool hint_present = false;

  static ContextFeatures extract(std::string_view rendered, std::string_view hint_phrase) {
    ContextFeatures f;
    std::string before, after;
    bool seen = false;
    for (const auto& w : text::split_ws(rendered)) {
      if (!seen && w == kQueryMarker) {
        seen = true;
        continue;
      }
      (seen ? after : before) += w + " ";
    }
    f.query_present = seen;
    f.context_words = text::feature_words(before);
    f.query_words = text::feature_words(after);
    f.hint_present = !hint_phrase.empty() && text::lower(before).find(text::lower(hint_phrase)) != std::string::npos;
    return f;
  }
};

struct TableCondition {
  enum class Kind { query, hint, ctx, que, prev, prev2 };
  Kind kind = Kind::query;
  bool negate = false;
  std::string arg;  // literal word/token, "@class", or "^" (no token)
};

struct TableTarget {
  enum class Kind { token, query, prior, context_class, class_uniform };
  Kind kind = Kind::token;
  TokenId token = 0;
  std::string cls;
  double weight = 0.0;
};

struct TableRule {
  std::vector<TableCondition> when;
  std::vector<TableTarget> targets;
  size_t line = 0;
};

struct TableLMSpec {
  Vocabulary vocab;
  std::map<std::string, std::vector<TokenId>> classes;
  std::vector<TableRule> prior;
  std::vector<TableRule> rules;
  double prior_bias = 0.0;
  double compliance_gain = 0.0;
  std::string hint_phrase = "most important clue";
};

namespace detail {

class TableParser {
 public:
  explicit TableParser(std::string origin) : origin_(std::move(origin)) {}

  TableLMSpec parse(std::istream& in) {
    struct Record {
      std::string section, key, value;
      size_t line;
    };
    std::vector<Record> records;
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      if (t.front() == '[') {
        if (t.back() != ']') fail(lineno, "unterminated section header");
        section = std::string(t.substr(1, t.size() - 2));
        if (section != "VOCAB" && section != "PRIOR" && section != "RULES" && section != "PARAMS")
          fail(lineno, "unknown section [" + section + "]");
        continue;
      }
      if (section.empty()) fail(lineno, "record outside of a section");
      auto eq = t.find('=');
      if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
      records.push_back({section, std::string(text::trim(t.substr(0, eq))), std::string(text::trim(t.substr(eq + 1))),
                         lineno});
    }

    std::vector<std::string> tokens;
    std::string eos;
    std::map<std::string, std::vector<std::string>> class_words;
    std::map<std::string, size_t> seen_scalar;
    auto once = [&](const Record& r) {
      if (!seen_scalar.emplace(r.section + "." + r.key, r.line).second) fail(r.line, "duplicate key '" + r.key + "'");
    };
    for (const auto& r : records) {
      if (r.section != "VOCAB") continue;
      once(r);
      if (r.key == "tokens") {
        tokens = text::split_ws(r.value);
      } else if (r.key == "eos") {
        eos = r.value;
      } else if (r.key.rfind("class.", 0) == 0 && r.key.size() > 6) {
        class_words[r.key.substr(6)] = text::split_ws(r.value);
      } else {
        fail(r.line, "unknown key '" + r.key + "' in [VOCAB]");
      }
    }
    if (tokens.empty()) fail(0, "missing [VOCAB] tokens");
    if (eos.empty()) fail(0, "missing [VOCAB] eos");
    std::optional<Vocabulary> vocab;
    try {
      vocab.emplace(tokens, eos);
    } catch (const ConfigError& e) {
      fail(seen_scalar["VOCAB.tokens"], e.what());
    }
    TableLMSpec spec{std::move(*vocab), {}, {}, {}, 0.0, 0.0, "most important clue"};
    for (const auto& [name, words] : class_words) {
      auto& ids = spec.classes[name];
      for (const auto& w : words) {
        auto id = spec.vocab.find(w);
        if (!id) fail(seen_scalar["VOCAB.class." + name], "class '" + name + "' member '" + w + "' is not a token");
        ids.push_back(*id);
      }
    }

    for (const auto& r : records) {
      if (r.section == "PRIOR" || r.section == "RULES") {
        if (r.key != "rule") fail(r.line, "unknown key '" + r.key + "' in [" + r.section + "]");
        auto rule = parse_rule(spec, r.value, r.line, r.section == "PRIOR");
        (r.section == "PRIOR" ? spec.prior : spec.rules).push_back(std::move(rule));
      } else if (r.section == "PARAMS") {
        once(r);
        if (r.key == "prior_bias") {
          spec.prior_bias = number(r.value, r.line);
          if (spec.prior_bias < 0.0 || spec.prior_bias > 1.0) fail(r.line, "prior_bias must be in [0, 1]");
        } else if (r.key == "compliance_gain") {
          spec.compliance_gain = number(r.value, r.line);
          if (spec.compliance_gain < 0.0) fail(r.line, "compliance_gain must be >= 0");
        } else if (r.key == "hint_phrase") {
          spec.hint_phrase = r.value;
        } else {
          fail(r.line, "unknown key '" + r.key + "' in [PARAMS]");
        }
      }
    }
    return spec;
  }

 private:
  [[noreturn]] void fail(size_t line, const std::string& msg) const {
    throw ParseError(origin_ + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  }

  double number(const std::string& s, size_t line) const {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail(line, "bad number '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) fail(line, "bad number '" + s + "'");
    return v;
  }

  void check_class(const TableLMSpec& spec, const std::string& cls, size_t line) const {
    if (!spec.classes.count(cls)) fail(line, "unknown class '@" + cls + "'");
  }

  TableRule parse_rule(const TableLMSpec& spec, const std::string& value, size_t line, bool is_prior) const {
    auto arrow = value.find("->");
    if (arrow == std::string::npos) fail(line, "rule needs '<conditions> -> <targets>'");
    TableRule rule;
    rule.line = line;

    auto conds = text::split_ws(std::string_view(value).substr(0, arrow));
    if (conds.empty()) fail(line, "empty condition list (use '*' for always)");
    if (!(conds.size() == 1 && conds[0] == "*")) {
      for (auto atom : conds) {
        TableCondition c;
        if (atom.front() == '!') {
          c.negate = true;
          atom.erase(0, 1);
        }
        auto colon = atom.find(':');
        std::string head = atom.substr(0, colon);
        if (colon == std::string::npos) {
          if (head == "query") c.kind = TableCondition::Kind::query;
          else if (head == "hint") c.kind = TableCondition::Kind::hint;
          else fail(line, "unknown condition '" + atom + "'");
        } else {
          c.arg = atom.substr(colon + 1);
          if (c.arg.empty()) fail(line, "condition '" + atom + "' has no argument");
          if (head == "ctx") c.kind = TableCondition::Kind::ctx;
          else if (head == "que") c.kind = TableCondition::Kind::que;
          else if (head == "prev") c.kind = TableCondition::Kind::prev;
          else if (head == "prev2") c.kind = TableCondition::Kind::prev2;
          else fail(line, "unknown condition '" + atom + "'");
          if (c.arg.front() == '@') {
            check_class(spec, c.arg.substr(1), line);
          } else if (c.kind == TableCondition::Kind::prev || c.kind == TableCondition::Kind::prev2) {
            if (c.arg != "^" && !spec.vocab.find(c.arg)) fail(line, "unknown token '" + c.arg + "'");
          } else if (c.arg == "^") {
            fail(line, "'^' is only valid for prev/prev2");
          }
        }
        rule.when.push_back(std::move(c));
      }
    }

    auto targets = text::split_ws(std::string_view(value).substr(arrow + 2));
    if (targets.empty()) fail(line, "rule has no targets");
    double total = 0.0;
    for (const auto& t : targets) {
      auto colon = t.rfind(':');
      if (colon == std::string::npos || colon == 0) fail(line, "target '" + t + "' needs 'name:weight'");
      TableTarget tg;
      tg.weight = number(t.substr(colon + 1), line);
      if (tg.weight < 0.0) fail(line, "negative weight in '" + t + "'");
      std::string name = t.substr(0, colon);
      if (name == "$query") {
        tg.kind = TableTarget::Kind::query;
      } else if (name == "$prior") {
        if (is_prior) fail(line, "$prior cannot be used inside [PRIOR]");
        tg.kind = TableTarget::Kind::prior;
      } else if (name.rfind("$ctx@", 0) == 0) {
        tg.kind = TableTarget::Kind::context_class;
        tg.cls = name.substr(5);
        check_class(spec, tg.cls, line);
      } else if (name.front() == '@') {
        tg.kind = TableTarget::Kind::class_uniform;
        tg.cls = name.substr(1);
        check_class(spec, tg.cls, line);
      } else {
        auto id = spec.vocab.find(name);
        if (!id) fail(line, "unknown token '" + name + "'");
        tg.token = *id;
      }
      total += tg.weight;
      rule.targets.push_back(std::move(tg));
    }
    if (std::abs(total - 1.0) > kNormTolerance)
      fail(line, "invalid distribution: weights sum to " + text::exact(total) + ", not 1");
    return rule;
  }

  std::string origin_;
};

}  // namespace detail

inline TableLMSpec parse_table_lm(std::istream& in, const std::string& origin = "<stream>") {
  return detail::TableParser(origin).parse(in);
}

inline TableLMSpec parse_table_lm(const std::string& text, const std::string& origin = "<string>") {
  std::istringstream in(text);
  return parse_table_lm(in, origin);
}

class TableLM final : public NextTokenProvider {
 public:
  explicit TableLM(TableLMSpec spec) : spec_(std::move(spec)) {}

  static TableLM load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open TableLM spec '" + path + "'");
    return TableLM(parse_table_lm(in, path));
  }

  const Vocabulary& vocab() const override { return spec_.vocab; }
  const TableLMSpec& spec() const { return spec_; }

  /// Copy with different knob settings; rules and vocabulary are shared.
  TableLM with_params(double prior_bias, double compliance_gain) const {
    if (prior_bias < 0.0 || prior_bias > 1.0) throw ConfigError("prior_bias must be in [0, 1]");
    if (compliance_gain < 0.0) throw ConfigError("compliance_gain must be >= 0");
    TableLMSpec s = spec_;
    s.prior_bias = prior_bias;
    s.compliance_gain = compliance_gain;
    return TableLM(std::move(s));
  }

  /// The rule-resolved, prior-mixed, hint-adjusted next-token distribution.
  TokenDistribution distribution(const ContextFeatures& f, std::span<const TokenId> prefix) const {
    check_prefix(spec_.vocab, prefix);
    const size_t v = spec_.vocab.size();
    auto prior = first_match(spec_.prior, f, prefix, nullptr);
    auto base = first_match(spec_.rules, f, prefix, prior ? &*prior : nullptr);
    if (!base) base = std::vector<double>(v, 1.0 / static_cast<double>(v));

    std::vector<double> mixed = *base;
    if (prior) {
      const double b = spec_.prior_bias;
      for (size_t i = 0; i < v; ++i) mixed[i] = (1.0 - b) * (*base)[i] + b * (*prior)[i];
    }
    if (f.query_present && f.hint_present && spec_.compliance_gain > 0.0) {
      for (TokenId id : query_tokens(f)) mixed[id] *= 1.0 + spec_.compliance_gain;
      return TokenDistribution::normalized(std::move(mixed));
    }
    return TokenDistribution(std::move(mixed));
  }

  LogitVector next_logits(std::string_view context, std::span<const TokenId> prefix) const override {
    return log_probs(distribution(ContextFeatures::extract(context, spec_.hint_phrase), prefix));
  }

 private:
  bool in_class(const std::string& cls, TokenId id) const {
    const auto& members = spec_.classes.at(cls);
    return std::find(members.begin(), members.end(), id) != members.end();
  }

  bool word_matches(const std::vector<std::string>& words, const std::string& arg) const {
    if (arg.front() == '@') {
      for (const auto& w : words) {
        auto id = spec_.vocab.find(w);
        if (id && in_class(arg.substr(1), *id)) return true;
      }
      return false;
    }
    return std::find(words.begin(), words.end(), arg) != words.end();
  }

  bool holds(const TableCondition& c, const ContextFeatures& f, std::span<const TokenId> prefix) const {
    bool r = false;
    switch (c.kind) {
      case TableCondition::Kind::query: r = f.query_present; break;
      case TableCondition::Kind::hint: r = f.hint_present; break;
      case TableCondition::Kind::ctx: r = word_matches(f.context_words, c.arg); break;
      case TableCondition::Kind::que: r = word_matches(f.query_words, c.arg); break;
      case TableCondition::Kind::prev:
      case TableCondition::Kind::prev2: {
        const size_t back = c.kind == TableCondition::Kind::prev ? 1 : 2;
        const bool have = prefix.size() >= back;
        if (c.arg == "^") {
          r = !have;
        } else if (have) {
          const TokenId tok = prefix[prefix.size() - back];
          r = c.arg.front() == '@' ? in_class(c.arg.substr(1), tok) : spec_.vocab.token(tok) == c.arg;
        }
        break;
      }
    }
    return r != c.negate;
  }

  std::vector<TokenId> unique_tokens(const std::vector<std::string>& words, const std::string* cls) const {
    std::vector<TokenId> out;
    for (const auto& w : words) {
      auto id = spec_.vocab.find(w);
      if (!id || (cls && !in_class(*cls, *id))) continue;
      if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    }
    return out;
  }

  std::vector<TokenId> query_tokens(const ContextFeatures& f) const { return unique_tokens(f.query_words, nullptr); }

  std::optional<std::vector<double>> resolve(const TableRule& rule, const ContextFeatures& f,
                                             const std::vector<double>* prior) const {
    std::vector<double> out(spec_.vocab.size(), 0.0);
    double total = 0.0;
    for (const auto& t : rule.targets) {
      if (t.kind == TableTarget::Kind::prior) {
        if (!prior) continue;
        for (size_t i = 0; i < out.size(); ++i) out[i] += t.weight * (*prior)[i];
        total += t.weight;
        continue;
      }
      std::vector<TokenId> members;
      switch (t.kind) {
        case TableTarget::Kind::token: members = {t.token}; break;
        case TableTarget::Kind::query: members = query_tokens(f); break;
        case TableTarget::Kind::context_class: members = unique_tokens(f.context_words, &t.cls); break;
        case TableTarget::Kind::class_uniform: members = spec_.classes.at(t.cls); break;
        case TableTarget::Kind::prior: break;
      }
      if (members.empty()) continue;
      for (TokenId id : members) out[id] += t.weight / static_cast<double>(members.size());
      total += t.weight;
    }
    if (total <= 0.0) return std::nullopt;
    for (double& p : out) p /= total;
    return out;
  }

  std::optional<std::vector<double>> first_match(const std::vector<TableRule>& table, const ContextFeatures& f,
                                                 std::span<const TokenId> prefix,
                                                 const std::vector<double>* prior) const {
    for (const auto& rule : table) {
      bool ok = true;
      for (const auto& c : rule.when) {
        if (!holds(c, f, prefix)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      if (auto d = resolve(rule, f, prior)) return d;
    }
    return std::nullopt;
  }

  TableLMSpec spec_;
};

}  // namespace qcd
