#pragma once

// Sentence-embedding providers and the similarity gate for hint variants.

#include <qcd/error.hpp>
#include <qcd/prompt.hpp>
#include <qcd/text.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qcd {

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const = 0;

  std::vector<double> embed_one(const std::string& s) const { return embed({s}).at(0); }
};

/// Precomputed vectors loaded from a text file.
///
///   dim <n>
///   <v1> <v2> ... <vn>\t<text>
///
/// Blank lines and lines starting with '#' are ignored. Text runs to the end
/// of the line and is matched byte-exactly.
class FixtureEmbeddings final : public EmbeddingProvider {
 public:
  static FixtureEmbeddings load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open embedding fixtures '" + path + "'");
    return parse(in, path);
  }

  static FixtureEmbeddings parse(std::istream& in, const std::string& origin = "<stream>") {
    FixtureEmbeddings out;
    std::string line;
    size_t lineno = 0;
    auto fail = [&](const std::string& msg) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      if (out.dim_ == 0) {
        auto w = text::split_ws(t);
        if (w.size() != 2 || w[0] != "dim") fail("expected header 'dim <n>'");
        try {
          out.dim_ = std::stoul(w[1]);
        } catch (const std::exception&) {
          fail("bad dimension '" + w[1] + "'");
        }
        if (out.dim_ == 0) fail("dimension must be positive");
        continue;
      }
      auto tab = line.find('\t');
      if (tab == std::string::npos) fail("expected '<vector>\\t<text>'");
      std::vector<double> v;
      for (const auto& tok : text::split_ws(std::string_view(line).substr(0, tab))) {
        try {
          v.push_back(std::stod(tok));
        } catch (const std::exception&) {
          fail("bad number '" + tok + "'");
        }
      }
      if (v.size() != out.dim_)
        fail("vector has " + std::to_string(v.size()) + " components, header declares " + std::to_string(out.dim_));
      if (!out.table_.emplace(line.substr(tab + 1), std::move(v)).second) fail("duplicate text");
    }
    if (out.dim_ == 0) throw ParseError(origin + ": missing 'dim' header");
    return out;
  }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end()) throw BackendError("no fixture embedding for text: \"" + t + "\"");
      out.push_back(it->second);
    }
    return out;
  }

  size_t dim() const { return dim_; }
  size_t size() const { return table_.size(); }

 private:
  size_t dim_ = 0;
  std::map<std::string, std::vector<double>> table_;
};

/// Dot product of the unit-normalized vectors.
inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("embedding dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ConfigError("zero-length embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline constexpr double kDefaultGateThreshold = 0.80;

struct VariantReport {
  std::string variant_text;
  double similarity = 0.0;
  double threshold = kDefaultGateThreshold;
  bool passes_gate = false;
};

inline VariantReport check_variant(const std::string& variant, const EmbeddingProvider& embeddings,
                                   double threshold = kDefaultGateThreshold,
                                   const std::string& canonical = std::string(prompts::kHint)) {
  auto v = embeddings.embed({variant, canonical});
  if (v.size() != 2) throw BackendError("embedding provider returned " + std::to_string(v.size()) + " vectors for 2 texts");
  VariantReport r;
  r.variant_text = variant;
  r.similarity = cosine_similarity(v[0], v[1]);
  r.threshold = threshold;
  r.passes_gate = r.similarity >= threshold;
  return r;
}

inline std::string format_variant_report(const VariantReport& r) {
  return "similarity=" + text::fixed(r.similarity, 3) + " threshold=" + text::fixed(r.threshold, 3) +
         " result=" + (r.passes_gate ? "PASS" : "FAIL") + "\n";
}

}  // namespace qcd
