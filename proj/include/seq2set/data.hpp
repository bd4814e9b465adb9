#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace seq2set {

// Inclusive token span [left, right] with a category id.
struct Entity {
  int left = 0;
  int right = 0;
  int category = 0;

  auto operator<=>(const Entity&) const = default;
};

// Corpus record as it appears on disk.
struct RawEntity {
  int start = 0;
  int end = 0;
  std::string type;

  bool operator==(const RawEntity&) const = default;
};

struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> pos;
  std::vector<RawEntity> entities;

  bool operator==(const RawSentence&) const = default;
};

// Id-encoded sentence; the model's input/target unit.
struct Sentence {
  std::vector<int> tokens;
  std::vector<int> pos;
  std::vector<std::vector<int>> chars;
  std::vector<Entity> gold;

  std::size_t length() const noexcept { return tokens.size(); }
};

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  // Token/char/pos maps reserve PAD and UNK; categories are sorted by name and
  // the null category takes the id after the last real one.
  static Vocab build(std::span<const RawSentence> training);
  // Explicit category list, used when a corpus carries no entities.
  static Vocab build(std::span<const RawSentence> training, std::vector<std::string> categories);

  int token_id(std::string_view token) const;
  int char_id(char32_t c) const;
  int pos_id(std::string_view tag) const;
  // Throws ValidationError for an unknown category.
  int category_id(std::string_view name) const;
  const std::string& category_name(int id) const;

  std::size_t token_count() const noexcept { return tokens_.size(); }
  std::size_t char_count() const noexcept { return chars_.size(); }
  std::size_t pos_count() const noexcept { return pos_.size(); }
  // Real categories, excluding the null label.
  std::size_t category_count() const noexcept { return categories_.size(); }
  int null_category() const noexcept { return static_cast<int>(categories_.size()); }

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& other) const;

 private:
  void index();

  std::vector<std::string> tokens_;
  std::vector<std::u32string> chars_;
  std::vector<std::string> pos_;
  std::vector<std::string> categories_;
  std::unordered_map<std::string, int> token_index_;
  std::unordered_map<char32_t, int> char_index_;
  std::unordered_map<std::string, int> pos_index_;
  std::unordered_map<std::string, int> category_index_;
};

// Decodes UTF-8; invalid sequences map to U+FFFD.
std::u32string utf8_decode(std::string_view s);

// Parses one corpus line. Throws ParseError (line number attached by callers)
// or ValidationError on invariant violations.
RawSentence parse_record(std::string_view line, std::size_t line_number);
std::string format_record(const RawSentence& s);
void validate(const RawSentence& s, std::size_t line_number);

std::vector<RawSentence> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const RawSentence> sentences);

Sentence encode(const RawSentence& raw, const Vocab& vocab);

enum class VocabMode { kBuild, kReuse };

struct Corpus {
  std::vector<RawSentence> raw;
  std::vector<Sentence> sentences;
  Vocab vocab;
};

// kBuild derives the vocabulary from this file; kReuse encodes with `reuse`.
Corpus load_corpus(const std::filesystem::path& path, VocabMode mode, const Vocab* reuse = nullptr);
std::vector<Sentence> encode_all(std::span<const RawSentence> raw, const Vocab& vocab);

struct Batch {
  std::vector<std::size_t> indices;  // positions in the source corpus
  std::size_t max_length = 0;
  std::vector<std::size_t> lengths;
  std::vector<int> tokens;                 // [batch × max_length], PAD-filled
  std::vector<int> pos;                    // [batch × max_length]
  std::vector<std::vector<int>> chars;     // [batch × max_length]
  std::vector<std::uint8_t> mask;          // 1 for real tokens
  std::vector<std::vector<Entity>> gold;

  std::size_t size() const noexcept { return lengths.size(); }
  // The b-th sentence reassembled from the positions whose mask is set.
  Sentence sentence(std::size_t b) const;
};

// Sentences keep corpus order unless a shuffle seed is given.
std::vector<Batch> make_batches(std::span<const Sentence> corpus, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);
std::vector<Batch> make_batches(std::span<const Sentence> corpus, std::span<const std::size_t> order,
                                std::size_t batch_size);

}  // namespace seq2set
