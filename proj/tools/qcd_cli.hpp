#pragma once

// Command-line front end. Kept in a header so tests can drive it in-process.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 backend/runtime error.

#include <qcd/decoder.hpp>
#include <qcd/embedding.hpp>
#include <qcd/eval.hpp>
#include <qcd/fixtures.hpp>
#include <qcd/http.hpp>
#include <qcd/report.hpp>
#include <qcd/table_lm.hpp>
#include <qcd/tasks.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#ifndef QCD_DATA_DIR
#define QCD_DATA_DIR "data"
#endif

namespace qcd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;
inline constexpr const char* kAuthEnv = "QCD_AUTH_TOKEN";

struct CliConfig {
  std::string backend;
  double alpha = 0.5;
  std::string mode = "log";  // log | prob | base
  double temperature = 0.7;
  double top_p = 0.9;
  std::string hint = "off";
  std::string instruction = "TD-Ins";
  std::uint64_t seed = 0;
  size_t max_tokens = kDefaultMaxTokens;
  bool greedy = false;
  std::string trace_out;
  std::string task_file;
  int timeout_ms = 10000;
  int retries = 2;
};

inline LogitEndpointConfig endpoint_config(const std::string& url, const CliConfig& c) {
  LogitEndpointConfig e;
  e.base_url = url;
  e.timeout = std::chrono::milliseconds(c.timeout_ms);
  e.max_retries = c.retries;
  if (const char* tok = std::getenv(kAuthEnv); tok && *tok) e.auth_token = tok;
  return e;
}

/// "table:<path>" or "http:<url>" (a bare http:// URL is accepted too).
inline std::unique_ptr<NextTokenProvider> open_backend(const CliConfig& c) {
  const auto& b = c.backend;
  if (b.rfind("table:", 0) == 0) return std::make_unique<TableLM>(TableLM::load(b.substr(6)));
  if (b.rfind("http://", 0) == 0) return std::make_unique<HttpProvider>(HttpProvider::connect(endpoint_config(b, c)));
  if (b.rfind("http:", 0) == 0) {
    auto url = b.substr(5);
    if (url.rfind("http://", 0) != 0) url = "http://" + url;
    return std::make_unique<HttpProvider>(HttpProvider::connect(endpoint_config(url, c)));
  }
  throw ConfigError("unsupported backend '" + b + "' (expected table:<path> or http:<url>)");
}

inline bool parse_on_off(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ConfigError("expected on|off, got '" + v + "'");
}

inline QcdConfig qcd_config(const CliConfig& c) {
  QcdConfig q;
  q.alpha = c.alpha;
  q.temperature = c.temperature;
  q.top_p = c.top_p;
  q.space = c.mode == "prob" ? CombineSpace::prob : CombineSpace::log;
  q.validate();
  return q;
}

inline DecodeMode decode_mode(const CliConfig& c) { return c.mode == "base" ? DecodeMode::base : DecodeMode::qcd; }

template <class T, class F>
std::vector<T> parse_list(const std::string& csv, F&& f) {
  std::vector<T> out;
  for (const auto& item : text::split(csv, ',')) {
    auto t = std::string(text::trim(item));
    if (!t.empty()) out.push_back(f(t));
  }
  if (out.empty()) throw ConfigError("empty list '" + csv + "'");
  return out;
}

inline double parse_real(const std::string& s) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("bad number '" + s + "'");
  return v;
}

inline void write_file(const std::string& path, const std::string& content) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
}

inline std::string slug(const std::string& cell) {
  std::string s = cell;
  for (char& c : s)
    if (c == '/' || c == ':' || c == '+') c = '_';
  return s;
}

inline void add_decoding_options(CLI::App* cmd, CliConfig& c) {
  cmd->add_option("--backend", c.backend, "table:<path> or http:<url>")->required();
  cmd->add_option("--alpha", c.alpha, "contrast strength")->capture_default_str();
  cmd->add_option("--mode", c.mode, "log | prob | base")
      ->check(CLI::IsMember({"log", "prob", "base"}))
      ->capture_default_str();
  cmd->add_option("--temperature", c.temperature)->capture_default_str();
  cmd->add_option("--top-p", c.top_p)->capture_default_str();
  cmd->add_option("--seed", c.seed)->capture_default_str();
  cmd->add_option("--max-tokens", c.max_tokens)->capture_default_str();
  cmd->add_flag("--greedy", c.greedy, "argmax instead of sampling");
  cmd->add_option("--timeout-ms", c.timeout_ms, "HTTP backend timeout")->capture_default_str();
  cmd->add_option("--retries", c.retries, "HTTP backend retries (<= 5)")->capture_default_str();
}

struct EvalOptions {
  std::string modes = "base,qcd";
  std::string alphas = "0.5";
  std::string hints = "off";
  std::string instructions = "TD-Ins";
  std::string baseline;
  std::string format = "table";
  std::string report_out;
  std::string trace_dir;
};

inline EvalMatrix eval_matrix(const CliConfig& c, const EvalOptions& o) {
  EvalMatrix m;
  m.modes = parse_list<DecodeMode>(o.modes, [](const std::string& s) {
    if (s == "base") return DecodeMode::base;
    if (s == "qcd") return DecodeMode::qcd;
    throw ConfigError("unknown mode '" + s + "' (expected base or qcd)");
  });
  m.alphas = parse_list<double>(o.alphas, parse_real);
  m.hints = parse_list<bool>(o.hints, parse_on_off);
  m.instructions = parse_list<InstructionKind>(o.instructions, [](const std::string& s) { return parse_instruction(s); });
  m.base = qcd_config(c);
  m.seed = c.seed;
  m.max_tokens = c.max_tokens;
  m.sampling = c.greedy ? Sampling::greedy : Sampling::nucleus;
  m.keep_traces = !o.trace_dir.empty();
  for (double a : m.alphas) {
    QcdConfig q = m.base;
    q.alpha = a;
    q.validate();
  }
  return m;
}

inline void write_outputs(const std::vector<EvalReport>& reports, const EvalOptions& o,
                          const std::optional<std::string>& baseline, std::ostream& out) {
  const auto fmt = o.format == "lines" ? ReportFormat::lines : ReportFormat::table;
  out << emit_report(reports, fmt, baseline);
  if (!o.report_out.empty()) write_file(o.report_out, emit_report(reports, ReportFormat::lines, baseline));
  if (!o.trace_dir.empty()) {
    for (const auto& r : reports)
      for (const auto& t : r.outcomes)
        write_file((std::filesystem::path(o.trace_dir) / slug(r.config.name()) / (t.task_id + ".trace")).string(),
                   t.trace);
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query-contrastive decoding and hint-instruction toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML/INI file");

  CliConfig c;
  EvalOptions eo;

  // decode
  auto* dec = app.add_subcommand("decode", "decode one query");
  add_decoding_options(dec, c);
  std::vector<std::string> context_args;
  std::string query, task_id, forward_to;
  dec->add_option("--hint", c.hint, "on | off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  dec->add_option("--instruction", c.instruction)->capture_default_str();
  dec->add_option("--context", context_args, "context pair as <image-ref>:<text> (repeatable)");
  dec->add_option("--query", query);
  dec->add_option("--task-file", c.task_file, "take context and query from a task file");
  dec->add_option("--task-id", task_id, "task to decode from --task-file (default: first)");
  dec->add_option("--trace-out", c.trace_out, "write the step trace here");
  dec->add_option("--forward-to", forward_to, "hand the text to file:<path> or cmd:<shell command>");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a task file over a configuration matrix");
  add_decoding_options(ev, c);
  ev->add_option("--task-file", c.task_file)->required();
  ev->add_option("--modes", eo.modes, "comma list of base,qcd")->capture_default_str();
  ev->add_option("--alphas", eo.alphas, "comma list of alpha values for qcd cells")->capture_default_str();
  ev->add_option("--hints", eo.hints, "comma list of on,off")->capture_default_str();
  ev->add_option("--instructions", eo.instructions, "comma list of instruction names")->capture_default_str();
  ev->add_option("--baseline", eo.baseline, "cell that deltas are measured against (default: first cell)");
  ev->add_option("--format", eo.format)->check(CLI::IsMember({"table", "lines"}))->capture_default_str();
  ev->add_option("--report-out", eo.report_out, "also write the machine-readable lines report here");
  ev->add_option("--trace-dir", eo.trace_dir, "write one trace file per cell and task");

  // sweep
  EvalOptions so;
  std::string alpha_list = "0.25,0.5,0.75,1.0";
  auto* sw = app.add_subcommand("sweep", "accuracy per alpha");
  add_decoding_options(sw, c);
  sw->add_option("--task-file", c.task_file)->required();
  sw->add_option("--alpha-list", alpha_list)->capture_default_str();
  sw->add_option("--hint", c.hint, "on | off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  sw->add_option("--instruction", c.instruction)->capture_default_str();
  sw->add_option("--format", so.format)->check(CLI::IsMember({"table", "lines"}))->capture_default_str();
  sw->add_option("--report-out", so.report_out);
  sw->add_option("--trace-dir", so.trace_dir);

  // prompts-check
  std::string variant, embeddings = std::string(QCD_DATA_DIR) + "/hint_embeddings.txt";
  double threshold = kDefaultGateThreshold;
  auto* pc = app.add_subcommand("prompts-check", "similarity gate for a hint variant");
  pc->add_option("--variant", variant, "hint sentence to check")->required();
  pc->add_option("--threshold", threshold)->capture_default_str();
  pc->add_option("--embeddings", embeddings, "fixture file or http:// embedding endpoint")->capture_default_str();
  pc->add_option("--timeout-ms", c.timeout_ms)->capture_default_str();
  pc->add_option("--retries", c.retries)->capture_default_str();

  // gen-fixtures
  std::uint64_t fixture_seed = fixtures::kDefaultSeed;
  std::string out_dir = ".";
  auto* gf = app.add_subcommand("gen-fixtures", "write the cobsat-mini task file and TableLM spec");
  gf->add_option("--seed", fixture_seed)->capture_default_str();
  gf->add_option("--out-dir", out_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (dec->parsed()) {
      auto provider = open_backend(c);
      std::vector<ContextPair> pairs;
      if (!c.task_file.empty()) {
        auto file = load_tasks(c.task_file);
        const TaskInstance* task = nullptr;
        for (const auto& t : file.tasks)
          if (task_id.empty() || t.id == task_id) {
            task = &t;
            break;
          }
        if (!task) throw ConfigError("task '" + task_id + "' not found in " + c.task_file);
        pairs = task->context_pairs;
        if (query.empty()) query = task->query;
      }
      for (const auto& a : context_args) {
        auto colon = a.find(':');
        if (colon == std::string::npos) throw ConfigError("--context expects <image-ref>:<text>, got '" + a + "'");
        pairs.push_back({a.substr(0, colon), a.substr(colon + 1)});
      }
      auto ins = with_attribute(instruction(parse_instruction(c.instruction)), "attribute");
      auto seq = build_sequence(ins, pairs, query, parse_on_off(c.hint));
      DecodeSession s(*provider, seq, qcd_config(c), decode_mode(c), c.seed, c.max_tokens);
      auto trace = decode(s, c.greedy ? Sampling::greedy : Sampling::nucleus);
      const auto textout = detokenize(trace, provider->vocab());
      out << textout << "\n";
      if (!c.trace_out.empty()) write_file(c.trace_out, serialize_trace(trace, provider->vocab()));
      if (!forward_to.empty()) {
        std::unique_ptr<TextSink> sink;
        if (forward_to.rfind("file:", 0) == 0) sink = std::make_unique<FileSink>(forward_to.substr(5));
        else if (forward_to.rfind("cmd:", 0) == 0) sink = std::make_unique<CommandSink>(forward_to.substr(4));
        else throw ConfigError("--forward-to expects file:<path> or cmd:<command>");
        auto receipt = forward_text(trace, provider->vocab(), *sink);
        err << "forwarded " << receipt.bytes << " bytes to " << receipt.destination << "\n";
      }
    } else if (ev->parsed()) {
      auto matrix = eval_matrix(c, eo);
      auto tasks = load_tasks(c.task_file);
      for (const auto& w : tasks.warnings) err << "warning: " << w << "\n";
      auto provider = open_backend(c);
      auto reports = run_eval(tasks.tasks, *provider, matrix);
      std::optional<std::string> baseline;
      if (!eo.baseline.empty()) baseline = eo.baseline;
      else if (reports.size() > 1) baseline = reports.front().config.name();
      write_outputs(reports, eo, baseline, out);
    } else if (sw->parsed()) {
      EvalOptions o = so;
      o.modes = "qcd";
      o.alphas = alpha_list;
      o.hints = c.hint;
      o.instructions = c.instruction;
      auto matrix = eval_matrix(c, o);
      auto tasks = load_tasks(c.task_file);
      for (const auto& w : tasks.warnings) err << "warning: " << w << "\n";
      auto provider = open_backend(c);
      write_outputs(run_eval(tasks.tasks, *provider, matrix), o, std::nullopt, out);
    } else if (pc->parsed()) {
      std::unique_ptr<EmbeddingProvider> emb;
      if (embeddings.rfind("http://", 0) == 0) emb = std::make_unique<HttpEmbeddings>(endpoint_config(embeddings, c));
      else emb = std::make_unique<FixtureEmbeddings>(FixtureEmbeddings::load(embeddings));
      out << format_variant_report(check_variant(variant, *emb, threshold));
    } else if (gf->parsed()) {
      write_file((std::filesystem::path(out_dir) / "cobsat-mini.jsonl").string(),
                 fixtures::cobsat_mini_task_file(fixture_seed));
      write_file((std::filesystem::path(out_dir) / "cobsat-mini.tablelm").string(), fixtures::cobsat_mini_table_lm());
      out << "wrote " << (std::filesystem::path(out_dir) / "cobsat-mini.jsonl").string() << " and "
          << (std::filesystem::path(out_dir) / "cobsat-mini.tablelm").string() << "\n";
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitBackend;
  }
  return kExitOk;
}

}  // namespace qcd::cli
