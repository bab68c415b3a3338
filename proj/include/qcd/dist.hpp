#pragma once

// Vocabulary-indexed probability math: softmax, temperature, nucleus
// truncation, the query-contrastive combination and seeded sampling.
//
// All functions are pure over value inputs. Ties are always broken toward
// the lowest token id.

#include <qcd/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qcd {

using TokenId = std::int32_t;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kNormTolerance = 1e-9;
/// Floor applied to ln(sub) so zero-probability sub tokens give bounded amplification.
inline constexpr double kSubFloor = 1e-12;

class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, std::string_view eos) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2) throw ConfigError("vocabulary needs at least 2 tokens");
    for (size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw ConfigError("vocabulary contains an empty token");
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
    auto it = index_.find(std::string(eos));
    if (it == index_.end()) throw ConfigError("end-of-sequence token '" + std::string(eos) + "' not in vocabulary");
    eos_ = it->second;
  }

  size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(TokenId id) const { return id >= 0 && static_cast<size_t>(id) < tokens_.size(); }

  std::optional<TokenId> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(std::string_view tok) const {
    if (auto id = find(tok)) return *id;
    throw ConfigError("unknown token '" + std::string(tok) + "'");
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.eos_ == b.eos_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_ = 0;
};

/// Natural-log scale, unnormalized. -inf marks a masked token.
struct LogitVector {
  std::vector<double> values;

  size_t size() const { return values.size(); }
  double operator[](size_t i) const { return values[i]; }
};

/// A normalized probability vector. Construction validates the invariants.
class TokenDistribution {
 public:
  TokenDistribution() = default;

  explicit TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ConfigError("empty distribution");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("distribution has a negative or non-finite entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kNormTolerance)
      throw ConfigError("distribution sums to " + std::to_string(sum) + ", not 1");
  }

  /// Scales nonnegative weights to sum 1.
  static TokenDistribution normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("weights must be finite and nonnegative");
      sum += w;
    }
    if (sum <= 0.0) throw ConfigError("empty support");
    for (double& w : weights) w /= sum;
    return TokenDistribution(std::move(weights));
  }

  size_t size() const { return probs_.size(); }
  double operator[](size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  bool in_support(TokenId id) const { return id >= 0 && static_cast<size_t>(id) < probs_.size() && probs_[id] > 0.0; }

  friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;

 private:
  std::vector<double> probs_;
};

enum class CombineSpace { log, prob };

struct QcdConfig {
  double alpha = 0.5;
  CombineSpace space = CombineSpace::log;
  double temperature = 0.7;
  double top_p = 0.9;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  }
};

inline std::string_view to_string(CombineSpace s) { return s == CombineSpace::log ? "log" : "prob"; }

/// exp(v - max) / sum; masked entries map to 0.
inline TokenDistribution softmax(const LogitVector& logits) {
  double mx = kNegInf;
  for (double v : logits.values) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      throw ConfigError("logits must be finite or -inf");
    mx = std::max(mx, v);
  }
  if (mx == kNegInf) throw ConfigError("empty support");
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = logits.values[i] == kNegInf ? 0.0 : std::exp(logits.values[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return TokenDistribution(std::move(out));
}

/// ln of each probability; zeros become -inf.
inline LogitVector log_probs(const TokenDistribution& dist) {
  LogitVector out;
  out.values.reserve(dist.size());
  for (double p : dist.probs()) out.values.push_back(p > 0.0 ? std::log(p) : kNegInf);
  return out;
}

inline LogitVector apply_temperature(LogitVector logits, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("temperature must be > 0");
  if (t == 1.0) return logits;
  for (double& v : logits.values)
    if (v != kNegInf) v /= t;
  return logits;
}

/// Contrast the full-input distribution against the query-omitted one.
///
/// log space:  softmax((1+a)·ln full - a·ln max(sub, 1e-12)), full==0 masked.
/// prob space: softmax((1+a)·full - a·sub), the literal surface formula.
inline TokenDistribution qcd_combine(const TokenDistribution& full, const TokenDistribution& sub, const QcdConfig& cfg) {
  if (full.size() != sub.size())
    throw ConfigError("distribution size mismatch: " + std::to_string(full.size()) + " vs " + std::to_string(sub.size()));
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) throw ConfigError("alpha must be >= 0");
  const double a = cfg.alpha;
  if (a == 0.0 && cfg.space == CombineSpace::log) return full;
  LogitVector combined;
  combined.values.resize(full.size());
  if (cfg.space == CombineSpace::log) {
    const double floor = std::log(kSubFloor);
    for (size_t i = 0; i < full.size(); ++i) {
      if (full[i] == 0.0) {
        combined.values[i] = kNegInf;
        continue;
      }
      const double ls = sub[i] > 0.0 ? std::max(std::log(sub[i]), floor) : floor;
      combined.values[i] = (1.0 + a) * std::log(full[i]) - a * ls;
    }
  } else {
    for (size_t i = 0; i < full.size(); ++i) combined.values[i] = (1.0 + a) * full[i] - a * sub[i];
  }
  return softmax(combined);
}

/// Keeps the smallest descending-probability prefix whose mass reaches p.
inline TokenDistribution apply_top_p(const TokenDistribution& dist, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (p == 1.0) return dist;
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return dist[a] > dist[b]; });
  std::vector<double> out(dist.size(), 0.0);
  double cum = 0.0;
  for (TokenId id : order) {
    out[id] = dist[id];
    cum += dist[id];
    if (cum + 1e-12 >= p) break;
  }
  return TokenDistribution::normalized(std::move(out));
}

inline TokenId argmax(const TokenDistribution& dist) {
  TokenId best = 0;
  for (size_t i = 1; i < dist.size(); ++i)
    if (dist[i] > dist[best]) best = static_cast<TokenId>(i);
  return best;
}

/// Entries sorted by descending probability (ties: lower id), zeros dropped.
inline std::vector<std::pair<TokenId, double>> top_k(const TokenDistribution& dist, size_t k) {
  std::vector<std::pair<TokenId, double>> out;
  for (size_t i = 0; i < dist.size(); ++i)
    if (dist[i] > 0.0) out.emplace_back(static_cast<TokenId>(i), dist[i]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.size() > k) out.resize(k);
  return out;
}

/// Counter-based random stream: draw n is a pure function of (seed, n), so a
/// decode is reproducible no matter how long provider calls take.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform_at(std::uint64_t counter) const {
    return static_cast<double>(mix(seed_ ^ mix(counter)) >> 11) * 0x1.0p-53;
  }

  double next() { return uniform_at(counter_++); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Inverse-CDF draw at u in [0, 1). Only support tokens can be returned.
inline TokenId sample_at(const TokenDistribution& dist, double u) {
  double cum = 0.0;
  TokenId last = -1;
  for (size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cum += dist[i];
    last = static_cast<TokenId>(i);
    if (u < cum) return last;
  }
  // u landed in the rounding gap above the summed mass.
  return last;
}

inline TokenId sample(const TokenDistribution& dist, SeedStream& rng) { return sample_at(dist, rng.next()); }

}  // namespace qcd
