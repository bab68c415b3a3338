#pragma once

// Dual-stream autoregressive decoding with query-contrastive combination.
//
// Per step t, both streams condition on the same generated prefix y_<t:
//   P_full = softmax(temperature(logits(render(seq_full), y_<t)))
//   P_sub  = softmax(temperature(logits(render(seq_sub),  y_<t)))   (qcd mode)
//   P_qcd  = top_p(qcd_combine(P_full, P_sub))                      (qcd mode)
//   P_qcd  = top_p(P_full)                                           (base mode)
//   y_t ~ P_qcd  (counter-based draw t of the session seed, or argmax)

#include <qcd/dist.hpp>
#include <qcd/error.hpp>
#include <qcd/prompt.hpp>
#include <qcd/provider.hpp>
#include <qcd/text.hpp>

#include <csignal>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qcd {

enum class DecodeMode { base, qcd };
enum class StopReason { eos, max_tokens };
enum class Sampling { nucleus, greedy };

inline constexpr size_t kDefaultMaxTokens = 64;

inline std::string_view to_string(DecodeMode m) { return m == DecodeMode::base ? "base" : "qcd"; }
inline std::string_view to_string(StopReason r) { return r == StopReason::eos ? "eos" : "max_tokens"; }

struct DecodeSession {
  DecodeSession(const NextTokenProvider& provider, MultimodalSequence seq_full, QcdConfig cfg = {},
                DecodeMode mode = DecodeMode::qcd, std::uint64_t seed = 0, size_t max_tokens = kDefaultMaxTokens)
      : provider(&provider),
        seq_full(std::move(seq_full)),
        cfg(cfg),
        mode(mode),
        seed(seed),
        max_tokens(max_tokens) {
    this->seq_full.validate();
    if (!this->seq_full.has_query()) throw ConfigError("decode session needs a sequence with a query");
    seq_sub = drop_query(this->seq_full);
  }

  const MultimodalSequence& sub_sequence() const { return seq_sub; }

  const NextTokenProvider* provider;
  MultimodalSequence seq_full;
  QcdConfig cfg;
  DecodeMode mode;
  std::uint64_t seed;
  size_t max_tokens;

 private:
  MultimodalSequence seq_sub;
};

struct StepRecord {
  size_t t = 0;
  TokenDistribution p_full;
  std::optional<TokenDistribution> p_sub;
  TokenDistribution p_qcd;  // post top-p; the distribution actually sampled
  TokenId chosen = 0;
};

struct DecodeTrace {
  std::vector<StepRecord> records;
  std::vector<TokenId> output;
  StopReason stop_reason = StopReason::max_tokens;
};

namespace detail {

inline TokenDistribution step_distribution(const NextTokenProvider& p, const std::string& ctx,
                                           std::span<const TokenId> prefix, double temperature) {
  auto logits = p.next_logits(ctx, prefix);
  if (logits.size() != p.vocab().size())
    throw BackendError("provider returned " + std::to_string(logits.size()) + " logits for a vocabulary of " +
                       std::to_string(p.vocab().size()));
  return softmax(apply_temperature(std::move(logits), temperature));
}

}  // namespace detail

inline DecodeTrace decode(const DecodeSession& s, Sampling sampling = Sampling::nucleus) {
  s.cfg.validate();
  if (s.max_tokens == 0) throw ConfigError("max_tokens must be > 0");
  if (!s.provider) throw ConfigError("decode session has no provider");
  const auto& provider = *s.provider;
  const std::string ctx_full = render(s.seq_full);
  const std::string ctx_sub = render(s.sub_sequence());
  const SeedStream stream(s.seed);

  DecodeTrace trace;
  for (size_t t = 0; t < s.max_tokens; ++t) {
    StepRecord rec;
    rec.t = t;
    try {
      rec.p_full = detail::step_distribution(provider, ctx_full, trace.output, s.cfg.temperature);
      TokenDistribution combined = rec.p_full;
      if (s.mode == DecodeMode::qcd) {
        rec.p_sub = detail::step_distribution(provider, ctx_sub, trace.output, s.cfg.temperature);
        combined = qcd_combine(rec.p_full, *rec.p_sub, s.cfg);
      }
      rec.p_qcd = apply_top_p(combined, s.cfg.top_p);
    } catch (const BackendError& e) {
      throw BackendError("step " + std::to_string(t) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("step " + std::to_string(t) + ": " + e.what());
    }
    rec.chosen = sampling == Sampling::greedy ? argmax(rec.p_qcd) : sample_at(rec.p_qcd, stream.uniform_at(t));
    trace.output.push_back(rec.chosen);
    trace.records.push_back(std::move(rec));
    if (trace.output.back() == provider.vocab().eos()) {
      trace.stop_reason = StopReason::eos;
      return trace;
    }
  }
  trace.stop_reason = StopReason::max_tokens;
  return trace;
}

inline DecodeTrace decode_greedy(const DecodeSession& s) { return decode(s, Sampling::greedy); }

/// Space-joined output tokens, EOS excluded.
inline std::string detokenize(const DecodeTrace& trace, const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (TokenId id : trace.output)
    if (id != vocab.eos()) words.push_back(vocab.token(id));
  return text::join(words, " ");
}

// ---------------------------------------------------------------------------
// Trace serialization: a '#' header line, then one tab-separated line per step
//
//   <t>\t<chosen>\t<full>\t<sub>\t<qcd>
//
// where each distribution is its top-5 support entries as "tok:0.123456"
// joined by single spaces (descending probability, ties by token id) and an
// absent sub distribution is written as "-".

inline std::string format_top5(const TokenDistribution& d, const Vocabulary& vocab) {
  std::string out;
  for (const auto& [id, p] : top_k(d, 5)) {
    if (!out.empty()) out += ' ';
    out += vocab.token(id) + ":" + text::fixed(p, 6);
  }
  return out;
}

inline std::string serialize_trace(const DecodeTrace& trace, const Vocabulary& vocab) {
  std::string out = "# qcd-trace v1 steps=" + std::to_string(trace.records.size()) +
                    " stop=" + std::string(to_string(trace.stop_reason)) + "\n";
  for (const auto& r : trace.records) {
    out += std::to_string(r.t) + "\t" + vocab.token(r.chosen) + "\t" + format_top5(r.p_full, vocab) + "\t" +
           (r.p_sub ? format_top5(*r.p_sub, vocab) : std::string("-")) + "\t" + format_top5(r.p_qcd, vocab) + "\n";
  }
  return out;
}

struct ParsedTraceStep {
  size_t t = 0;
  std::string chosen;
  std::vector<std::pair<std::string, double>> full, sub, qcd;
  bool has_sub = false;
};

struct ParsedTrace {
  std::vector<ParsedTraceStep> steps;
  std::string stop;
};

inline ParsedTrace parse_trace(std::istream& in) {
  ParsedTrace out;
  std::string line;
  size_t lineno = 0;
  auto fail = [&](const std::string& m) { throw ParseError("trace:" + std::to_string(lineno) + ": " + m); };
  auto number = [&](const std::string& s) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail("bad number '" + s + "'");
    }
    if (used != s.size()) fail("bad number '" + s + "'");
    return v;
  };
  auto pairs = [&](const std::string& field) {
    std::vector<std::pair<std::string, double>> v;
    if (field == "-") return v;
    for (const auto& item : text::split_ws(field)) {
      auto c = item.rfind(':');
      if (c == std::string::npos) fail("bad entry '" + item + "'");
      v.emplace_back(item.substr(0, c), number(item.substr(c + 1)));
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("stop=");
      if (pos == std::string::npos) fail("header lacks stop=");
      out.stop = line.substr(pos + 5);
      continue;
    }
    auto f = text::split(line, '\t');
    if (f.size() != 5) fail("expected 5 tab-separated fields, got " + std::to_string(f.size()));
    ParsedTraceStep s;
    s.t = static_cast<size_t>(number(f[0]));
    s.chosen = f[1];
    s.full = pairs(f[2]);
    s.has_sub = f[3] != "-";
    s.sub = pairs(f[3]);
    s.qcd = pairs(f[4]);
    out.steps.push_back(std::move(s));
  }
  if (out.stop.empty()) throw ParseError("trace: missing header line");
  return out;
}

// ---------------------------------------------------------------------------
// Hand-off of the final text to a downstream consumer (e.g. an image generator).

struct DeliveryReceipt {
  std::string destination;
  size_t bytes = 0;
  bool delivered = false;
};

class TextSink {
 public:
  virtual ~TextSink() = default;
  virtual DeliveryReceipt deliver(const std::string& text) = 0;
};

class NullSink final : public TextSink {
 public:
  DeliveryReceipt deliver(const std::string&) override { return {"null", 0, false}; }
};

class FileSink final : public TextSink {
 public:
  explicit FileSink(std::string path) : path_(std::move(path)) {}

  DeliveryReceipt deliver(const std::string& text) override {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw BackendError("cannot open sink file '" + path_ + "'");
    out << text;
    out.close();
    if (!out) throw BackendError("write to sink file '" + path_ + "' failed");
    return {"file:" + path_, text.size(), true};
  }

 private:
  std::string path_;
};

/// Pipes the text to the stdin of a shell command.
class CommandSink final : public TextSink {
 public:
  explicit CommandSink(std::string command) : command_(std::move(command)) {}

  DeliveryReceipt deliver(const std::string& text) override {
    // A command that exits early must surface as an error, not SIGPIPE.
    auto* previous = std::signal(SIGPIPE, SIG_IGN);
    FILE* pipe = ::popen(command_.c_str(), "w");
    if (!pipe) {
      std::signal(SIGPIPE, previous);
      throw BackendError("cannot start sink command '" + command_ + "'");
    }
    const size_t written = std::fwrite(text.data(), 1, text.size(), pipe);
    const int status = ::pclose(pipe);
    std::signal(SIGPIPE, previous);
    if (written != text.size() || status != 0)
      throw BackendError("sink command '" + command_ + "' failed with status " + std::to_string(status));
    return {"cmd:" + command_, written, true};
  }

 private:
  std::string command_;
};

inline DeliveryReceipt forward_text(const DecodeTrace& trace, const Vocabulary& vocab, TextSink& sink) {
  return sink.deliver(detokenize(trace, vocab));
}

}  // namespace qcd
