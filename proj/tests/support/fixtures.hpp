#pragma once

// Shared test helpers and values frozen from tests/oracle/qcd_oracle.py.
// Regenerate with:
//   python3 tests/oracle/qcd_oracle.py data/cobsat-mini.tablelm data/cobsat-mini.jsonl
//   python3 tests/oracle/qcd_oracle.py data/cobsat-mini.tablelm tests/data/apple-task.jsonl

#include <qcd/decoder.hpp>
#include <qcd/dist.hpp>
#include <qcd/provider.hpp>
#include <qcd/table_lm.hpp>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#ifndef QCD_DATA_DIR
#error "QCD_DATA_DIR must point at the data/ directory"
#endif

namespace qcd::testing {

inline std::string data_path(const std::string& name) { return std::string(QCD_DATA_DIR) + "/" + name; }

inline std::string test_data_path(const std::string& name) {
  return (std::filesystem::path(QCD_DATA_DIR).parent_path() / "tests" / "data" / name).string();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("qcd-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Golden instruction strings.
inline const std::string kTdGolden =
    "I give you several words and pictures. First, please analyse what the next picture is. Then give me a detailed "
    "diffusion prompt to describe the next picture. Please only provide me the detailed prompt and start the answer "
    "with 'Create an image'.";

inline const std::string kHintGolden =
    "The last text I provide contains the most important clue about the next picture. Focus mainly on understanding "
    "and following the meaning of the final text when creating your description.";

// Hint variants and their published similarity to the canonical sentence.
inline const std::vector<std::pair<std::string, double>> kVariants = {
    {kHintGolden, 1.000},
    {"Consider the last text the most decisive guidance; your description should mainly reflect its intent.", 0.688},
    {"The concluding text is the key signal\xE2\x80\x94"
     "base your description chiefly on it, giving it precedence over the rest of the context.",
     0.684},
    {"Treat the last text as the decisive guide, and make sure your description is driven mainly by its intent.",
     0.681},
    {"Treat the last text I provide as your primary guide for the next picture. Base your description mainly on this "
     "final text, even if earlier words or images suggest something different.",
     0.788},
};

// Truth (apple, purple). Each row: context objects, context attributes,
// predicted object and attribute, expected count.
struct ComplianceCase {
  std::set<std::string> objects, attributes;
  std::string obj, attr;
  bool counted;
  const char* why;
};

inline const std::vector<ComplianceCase>& compliance_table() {
  static const std::vector<ComplianceCase> cases = {
      {{"hat", "cup"}, {"red"}, "hat", "purple", true, "(1) object copied from context"},
      {{"hat", "cup"}, {"red"}, "cup", "purple", true, "(1) other context object"},
      {{"hat", "cup"}, {"red"}, "apple", "red", true, "(2) attribute copied from context"},
      {{"hat"}, {"red", "green"}, "apple", "green", true, "(2) other context attribute"},
      {{"hat", "cup"}, {"red"}, "book", "purple", false, "attribute right, object not from context"},
      {{"hat", "cup"}, {"red"}, "apple", "glass", false, "object right, attribute not from context"},
      {{"hat", "cup"}, {"red"}, "hat", "red", false, "neither half right"},
      {{"hat", "cup"}, {"red"}, "", "purple", false, "no object extracted"},
      {{"hat", "cup"}, {"red"}, "apple", "", false, "no attribute extracted"},
      {{"hat", "cup"}, {"red"}, "apple", "purple", false, "fully correct"},
      {{"apple", "hat"}, {"purple", "red"}, "apple", "purple", false, "both predicates hold, fully correct"},
      {{"hat", "apple"}, {"red"}, "hat", "purple", true, "(1) with truth object also in context"},
  };
  return cases;
}


// Hand-sized dist-core values.
inline constexpr std::array<double, 3> kFlipOracle = {0.305172, 0.617625, 0.077203};
inline constexpr std::array<double, 4> kTopPOracle = {0.526316, 0.315789, 0.157895, 0.0};

// cobsat-mini, greedy, T=0.7, top_p=0.9, compliance_gain=1.0.
struct CellExpectation {
  bool hint;
  bool qcd;
  double alpha;
  size_t correct;
  size_t errors;
};

inline constexpr std::array<CellExpectation, 12> kMiniCells = {{
    {false, false, 0.0, 2, 13},
    {false, true, 0.0, 2, 13},
    {false, true, 0.25, 12, 4},
    {false, true, 0.5, 13, 4},
    {false, true, 0.75, 20, 0},
    {false, true, 1.0, 20, 0},
    {true, false, 0.0, 14, 2},
    {true, true, 0.0, 14, 2},
    {true, true, 0.25, 18, 2},
    {true, true, 0.5, 20, 0},
    {true, true, 0.75, 20, 0},
    {true, true, 1.0, 20, 0},
}};

inline const std::vector<std::string> kMiniBaseOutputs = {
    "green leaf", "green apple", "green leaf", "wooden apple", "green leaf", "glass apple", "green leaf",
    "purple apple", "purple hat", "glass cup", "red apple", "green apple", "glass cup", "wooden apple",
    "wooden book", "red hat", "wooden book", "wooden book", "glass cup", "wooden cup"};

inline const std::vector<std::string> kMiniQcdOutputs = {
    "green leaf", "green cup", "green leaf", "wooden cup", "green leaf", "glass hat", "green leaf",
    "purple cup", "purple hat", "glass hat", "green apple", "green book", "glass cup", "wooden cup",
    "wooden book", "red book", "wooden book", "green cup", "glass cup", "wooden hat"};

// Sweep over alpha in {0.25, 0.5, 0.75, 1.0}, hint off.
inline constexpr std::array<double, 4> kSweepAlphas = {0.25, 0.5, 0.75, 1.0};
inline constexpr std::array<size_t, 4> kSweepCorrect = {12, 13, 20, 20};

// Query-token probability in p_qcd (post top-p) at the attribute step,
// alpha in {0, 0.25, 0.5, 0.75, 1.0}.
inline constexpr std::array<double, 5> kAlphaGrid = {0.0, 0.25, 0.5, 0.75, 1.0};
inline constexpr std::array<double, 5> kCm01QueryProb = {0.113733117, 0.216424411, 0.372831453, 0.497957973,
                                                         0.646639249};
inline constexpr std::array<double, 5> kCm01QueryProbHint = {0.256745490, 0.487786589, 0.724167020, 0.878608271,
                                                             1.000000000};
inline constexpr std::array<double, 5> kAppleQueryProb = {0.256204429, 0.309237764, 0.365012169, 0.421686181,
                                                          0.477508387};
inline constexpr std::array<double, 5> kAppleQueryProbHint = {0.481113916, 0.606846938, 0.773097161, 0.851801029,
                                                              0.945470431};

// Apple task, raw attribute-slot mixtures (no temperature), token order
// purple red green wooden glass.
inline constexpr std::array<double, 5> kAppleMixFull = {0.2375, 0.35, 0.1625, 0.1625, 0.0875};
inline constexpr std::array<double, 5> kAppleMixSub = {0.125, 0.5, 0.125, 0.125, 0.125};

/// Random strictly positive distribution of size n.
inline TokenDistribution random_dist(std::mt19937_64& rng, size_t n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  return TokenDistribution::normalized(std::move(w));
}

/// Provider wrapper that records every (context, prefix) query.
class RecordingProvider final : public NextTokenProvider {
 public:
  explicit RecordingProvider(const NextTokenProvider& inner) : inner_(inner) {}

  struct Call {
    std::string context;
    std::vector<TokenId> prefix;
  };

  const Vocabulary& vocab() const override { return inner_.vocab(); }
  LogitVector next_logits(std::string_view context, std::span<const TokenId> prefix) const override {
    {
      std::lock_guard lock(mu_);
      calls_.push_back({std::string(context), {prefix.begin(), prefix.end()}});
    }
    return inner_.next_logits(context, prefix);
  }

  const std::vector<Call>& calls() const { return calls_; }

 private:
  const NextTokenProvider& inner_;
  mutable std::mutex mu_;
  mutable std::vector<Call> calls_;
};

/// Emits "purple apple <eos>" regardless of context.
inline const char* kPointMassSpec = R"([VOCAB]
tokens = purple red apple hat <eos>
eos = <eos>

[RULES]
rule = prev:^ -> purple:1.0
rule = prev:purple -> apple:1.0
rule = prev:apple -> <eos>:1.0
)";

}  // namespace qcd::testing
