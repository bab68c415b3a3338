#pragma once

#include <qcd/dist.hpp>
#include <qcd/error.hpp>

#include <span>
#include <string>
#include <string_view>

namespace qcd {

/// Source of per-step next-token logits.
///
/// Implementations must be deterministic (same context and prefix give
/// bit-identical logits), keep one vocabulary for their lifetime, and allow
/// concurrent next_logits calls.
class NextTokenProvider {
 public:
  virtual ~NextTokenProvider() = default;

  virtual const Vocabulary& vocab() const = 0;

  /// `context` is a rendered MultimodalSequence; `prefix` the tokens generated so far.
  virtual LogitVector next_logits(std::string_view context, std::span<const TokenId> prefix) const = 0;
};

inline void check_prefix(const Vocabulary& vocab, std::span<const TokenId> prefix) {
  for (TokenId id : prefix)
    if (!vocab.contains(id)) throw ConfigError("unknown token id " + std::to_string(id) + " in prefix");
}

}  // namespace qcd
