#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seq2set/data.hpp"
#include "seq2set/decoder.hpp"

namespace seq2set {

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const noexcept;
  double recall() const noexcept;
  double f1() const noexcept;
  MatchCounts& operator+=(const MatchCounts& o) noexcept;
  bool operator==(const MatchCounts&) const = default;
};

// Micro-averaged exact-match scores with a per-category breakdown.
struct MetricReport {
  MatchCounts total;
  std::map<int, MatchCounts> per_category;

  double precision() const noexcept { return total.precision(); }
  double recall() const noexcept { return total.recall(); }
  double f1() const noexcept { return total.f1(); }
  // Unweighted mean of per-category F1.
  double macro_f1() const noexcept;

  MetricReport& merge(const MetricReport& other);
  nlohmann::json to_json(const Vocab* vocab = nullptr) const;
  std::string table(const Vocab* vocab = nullptr) const;
};

// A prediction is correct only when left, right and category all match; each
// gold entity is matched at most once.
MetricReport score(std::span<const Entity> gold, std::span<const PredictedEntity> predicted);
MetricReport score(std::span<const Entity> gold, std::span<const Entity> predicted);

struct CorpusStats {
  std::size_t sentences = 0;
  std::size_t sentences_with_nested = 0;
  double avg_length = 0.0;
  std::size_t total_entities = 0;
  std::size_t nested_entities = 0;

  double nested_percentage() const noexcept {
    return total_entities == 0 ? 0.0 : 100.0 * static_cast<double>(nested_entities) / static_cast<double>(total_entities);
  }
  bool operator==(const CorpusStats&) const = default;
  nlohmann::json to_json() const;
  std::string table() const;
};

// Nested: properly contains, or is properly contained in, another gold span
// of the same sentence. Identical spans with different labels do not count.
bool is_nested(const Entity& e, std::span<const Entity> gold);
CorpusStats corpus_stats(std::span<const Sentence> corpus);

}  // namespace seq2set
