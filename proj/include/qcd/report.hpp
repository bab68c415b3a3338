#pragma once

// Report rendering: a fixed-width table or machine-readable lines.

#include <qcd/error.hpp>
#include <qcd/eval.hpp>
#include <qcd/text.hpp>

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qcd {

enum class ReportFormat { table, lines };

struct ReportRow {
  std::string cell;
  std::string instruction;
  std::string mode;
  std::string space;
  double alpha = 0.0;
  std::string hint;
  std::uint64_t seed = 0;
  size_t correct = 0;
  size_t n = 0;
  double accuracy = 0.0;
  std::optional<double> delta;
  size_t errors = 0;
  size_t failures = 0;
  size_t length = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline std::vector<ReportRow> report_rows(const std::vector<EvalReport>& reports,
                                          const std::optional<std::string>& baseline = std::nullopt) {
  const EvalReport* base = nullptr;
  if (baseline) {
    for (const auto& r : reports)
      if (r.config.name() == *baseline) base = &r;
    if (!base) throw ConfigError("unknown baseline cell '" + *baseline + "'");
  }
  std::vector<ReportRow> rows;
  for (const auto& r : reports) {
    ReportRow row;
    row.cell = r.config.name();
    row.instruction = std::string(to_string(r.config.instruction));
    row.mode = std::string(to_string(r.config.mode));
    row.space = std::string(to_string(r.config.qcd.space));
    row.alpha = r.config.mode == DecodeMode::base ? 0.0 : r.config.qcd.alpha;
    row.hint = r.config.hint ? "on" : "off";
    row.seed = r.config.seed;
    row.correct = r.correct;
    row.n = r.n();
    row.accuracy = r.accuracy();
    if (base && base != &r) row.delta = r.accuracy() - base->accuracy();
    row.errors = r.error_count;
    row.failures = r.failures;
    row.length = r.instruction_length;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline std::string pad(const std::string& s, size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

inline std::string lpad(const std::string& s, size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

inline std::string signed_fixed(double v, int decimals) {
  auto s = text::fixed(v, decimals);
  return v >= 0.0 ? "+" + s : s;
}

}  // namespace detail

inline std::string render_rows(const std::vector<ReportRow>& rows, ReportFormat fmt) {
  std::string out;
  if (fmt == ReportFormat::lines) {
    for (const auto& r : rows) {
      out += "cell=" + r.cell + "\tinstruction=" + r.instruction + "\tmode=" + r.mode + "\tspace=" + r.space +
             "\talpha=" + short_double(r.alpha) + "\thint=" + r.hint + "\tseed=" + std::to_string(r.seed) +
             "\tcorrect=" + std::to_string(r.correct) + "\tn=" + std::to_string(r.n) +
             "\taccuracy=" + short_double(r.accuracy) + "\tdelta=" + (r.delta ? short_double(*r.delta) : "-") +
             "\terrors=" + std::to_string(r.errors) + "\tfailures=" + std::to_string(r.failures) +
             "\tlen=" + std::to_string(r.length) + "\n";
    }
    return out;
  }
  using detail::lpad;
  using detail::pad;
  size_t w = 4;
  for (const auto& r : rows) w = std::max(w, r.cell.size());
  out += pad("cell", w) + "  " + pad("instruction", 11) + "  " + pad("mode", 4) + "  " + lpad("alpha", 5) + "  " +
         pad("hint", 4) + "  " + lpad("acc", 5) + "  " + lpad("delta", 6) + "  " + lpad("errors", 6) + "  " +
         lpad("n", 4) + "  " + lpad("len", 4) + "\n";
  for (const auto& r : rows) {
    out += pad(r.cell, w) + "  " + pad(r.instruction, 11) + "  " + pad(r.mode, 4) + "  " +
           lpad(r.mode == "base" ? "-" : text::fixed(r.alpha, 2), 5) + "  " + pad(r.hint, 4) + "  " +
           lpad(text::fixed(r.accuracy, 3), 5) + "  " + lpad(r.delta ? detail::signed_fixed(*r.delta, 3) : "", 6) +
           "  " + lpad(std::to_string(r.errors), 6) + "  " + lpad(std::to_string(r.n), 4) + "  " +
           lpad(std::to_string(r.length), 4) + "\n";
  }
  return out;
}

inline std::string emit_report(const std::vector<EvalReport>& reports, ReportFormat fmt,
                               const std::optional<std::string>& baseline = std::nullopt) {
  return render_rows(report_rows(reports, baseline), fmt);
}

inline std::vector<ReportRow> parse_report_lines(std::istream& in) {
  std::vector<ReportRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::map<std::string, std::string> kv;
    for (const auto& field : text::split(line, '\t')) {
      auto eq = field.find('=');
      if (eq == std::string::npos) throw ParseError("report:" + std::to_string(lineno) + ": bad field '" + field + "'");
      kv[field.substr(0, eq)] = field.substr(eq + 1);
    }
    auto get = [&](const char* k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw ParseError("report:" + std::to_string(lineno) + ": missing field '" + k + "'");
      return it->second;
    };
    ReportRow r;
    try {
      r.cell = get("cell");
      r.instruction = get("instruction");
      r.mode = get("mode");
      r.space = get("space");
      r.alpha = std::stod(get("alpha"));
      r.hint = get("hint");
      r.seed = std::stoull(get("seed"));
      r.correct = std::stoul(get("correct"));
      r.n = std::stoul(get("n"));
      r.accuracy = std::stod(get("accuracy"));
      auto d = get("delta");
      if (d != "-") r.delta = std::stod(d);
      r.errors = std::stoul(get("errors"));
      r.failures = std::stoul(get("failures"));
      r.length = std::stoul(get("len"));
    } catch (const std::invalid_argument&) {
      throw ParseError("report:" + std::to_string(lineno) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ReportRow> parse_report_lines(const std::string& s) {
  std::istringstream in(s);
  return parse_report_lines(in);
}

}  // namespace qcd
