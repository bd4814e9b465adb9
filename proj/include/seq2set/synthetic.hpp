#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seq2set/data.hpp"

namespace seq2set {

// Template grammar producing nested entities:
//
//   S       -> FILL{0,2} ENT (FILL{1,3} ENT){0,2} FILL{0,2} "."
//   ENT_c   -> HEAD_c{1,2}                              (flat)
//            | [DET] FRAME_c PREP_c ENT_c'              (nested, c' != c)
//
// A phrase at depth < max_depth takes the nested production with probability
// nesting_prob. Every category owns disjoint head and frame words, so each
// span and its label are recoverable from the surface tokens.
struct GrammarConfig {
  std::uint64_t seed = 7;
  std::size_t n_train = 2000;
  std::size_t n_dev = 200;
  std::size_t n_test = 200;
  double nesting_prob = 0.4;
  int max_depth = 3;
  int category_count = 4;
  // Sentences with more gold entities are redrawn.
  std::size_t max_entities = 55;
};

struct SyntheticCorpus {
  std::vector<RawSentence> train;
  std::vector<RawSentence> dev;
  std::vector<RawSentence> test;
};

inline constexpr int kMaxSyntheticCategories = 7;
inline constexpr int kMaxTopLevelEntities = 3;

// Category names in id order for the first `count` grammar categories.
std::vector<std::string> synthetic_categories(int count);

// Deterministic in the config; splits are sentence-disjoint.
SyntheticCorpus generate_synthetic(const GrammarConfig& config);

}  // namespace seq2set
