#include "seq2set/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "seq2set/errors.hpp"

namespace seq2set {

using nlohmann::json;

namespace {

std::string utf8_encode(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
  return out;
}

const std::string kPadName = "<pad>";
const std::string kUnkName = "<unk>";

}  // namespace

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + static_cast<std::size_t>(extra) >= s.size()) {
      out.push_back(0xFFFD);
      break;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    out.push_back(ok ? cp : char32_t{0xFFFD});
    i += ok ? static_cast<std::size_t>(extra) + 1 : 1;
  }
  return out;
}

// ---------------------------------------------------------------- Vocab

Vocab Vocab::build(std::span<const RawSentence> training) {
  std::set<std::string> names;
  for (const auto& s : training)
    for (const auto& e : s.entities) names.insert(e.type);
  return build(training, std::vector<std::string>(names.begin(), names.end()));
}

Vocab Vocab::build(std::span<const RawSentence> training, std::vector<std::string> categories) {
  Vocab v;
  v.tokens_ = {kPadName, kUnkName};
  v.chars_ = {U"\u0000", U"�"};
  v.pos_ = {kPadName, kUnkName};
  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());
  v.categories_ = std::move(categories);
  v.index();
  for (const auto& s : training) {
    for (const auto& tok : s.tokens) {
      if (v.token_index_.emplace(tok, static_cast<int>(v.tokens_.size())).second) v.tokens_.push_back(tok);
      for (char32_t c : utf8_decode(tok)) {
        if (v.char_index_.emplace(c, static_cast<int>(v.chars_.size())).second) {
          v.chars_.push_back(std::u32string(1, c));
        }
      }
    }
    for (const auto& tag : s.pos) {
      if (v.pos_index_.emplace(tag, static_cast<int>(v.pos_.size())).second) v.pos_.push_back(tag);
    }
  }
  return v;
}

void Vocab::index() {
  token_index_.clear();
  char_index_.clear();
  pos_index_.clear();
  category_index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) token_index_.emplace(tokens_[i], static_cast<int>(i));
  // Reserved char slots are never looked up by content.
  for (std::size_t i = 2; i < chars_.size(); ++i) char_index_.emplace(chars_[i][0], static_cast<int>(i));
  for (std::size_t i = 0; i < pos_.size(); ++i) pos_index_.emplace(pos_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < categories_.size(); ++i) category_index_.emplace(categories_[i], static_cast<int>(i));
}

int Vocab::token_id(std::string_view token) const {
  auto it = token_index_.find(std::string(token));
  return it == token_index_.end() || it->second < 2 ? kUnk : it->second;
}

int Vocab::char_id(char32_t c) const {
  auto it = char_index_.find(c);
  return it == char_index_.end() ? kUnk : it->second;
}

int Vocab::pos_id(std::string_view tag) const {
  auto it = pos_index_.find(std::string(tag));
  return it == pos_index_.end() || it->second < 2 ? kUnk : it->second;
}

int Vocab::category_id(std::string_view name) const {
  auto it = category_index_.find(std::string(name));
  if (it == category_index_.end()) throw ValidationError("unknown entity type '" + std::string(name) + "'");
  return it->second;
}

const std::string& Vocab::category_name(int id) const {
  static const std::string null_name = "<null>";
  if (id == null_category()) return null_name;
  return categories_.at(static_cast<std::size_t>(id));
}

json Vocab::to_json() const {
  json chars = json::array();
  for (const auto& c : chars_) chars.push_back(c == U"\u0000" ? std::string("<pad>") : utf8_encode(c[0]));
  chars[1] = "<unk>";
  return json{{"tokens", tokens_}, {"chars", chars}, {"pos", pos_}, {"categories", categories_},
              {"null_category", null_category()}};
}

Vocab Vocab::from_json(const json& j) {
  Vocab v;
  v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
  v.pos_ = j.at("pos").get<std::vector<std::string>>();
  v.categories_ = j.at("categories").get<std::vector<std::string>>();
  const auto chars = j.at("chars").get<std::vector<std::string>>();
  if (v.tokens_.size() < 2 || v.pos_.size() < 2 || chars.size() < 2) {
    throw ValidationError("vocab: missing reserved entries");
  }
  v.chars_ = {U"\u0000", U"�"};
  for (std::size_t i = 2; i < chars.size(); ++i) {
    const auto decoded = utf8_decode(chars[i]);
    if (decoded.size() != 1) throw ValidationError("vocab: char entry " + std::to_string(i) + " is not one code point");
    v.chars_.push_back(decoded);
  }
  if (j.contains("null_category") && j.at("null_category").get<int>() != static_cast<int>(v.categories_.size())) {
    throw ValidationError("vocab: null category must follow the last category");
  }
  v.index();
  return v;
}

bool Vocab::operator==(const Vocab& other) const {
  return tokens_ == other.tokens_ && chars_ == other.chars_ && pos_ == other.pos_ &&
         categories_ == other.categories_;
}

// ---------------------------------------------------------------- records

void validate(const RawSentence& s, std::size_t line_number) {
  const std::string where = "record at line " + std::to_string(line_number);
  if (s.tokens.empty()) throw ValidationError(where + ": empty sentence");
  if (s.pos.size() != s.tokens.size()) {
    throw ValidationError(where + ": " + std::to_string(s.tokens.size()) + " tokens but " +
                          std::to_string(s.pos.size()) + " POS tags");
  }
  const int n = static_cast<int>(s.tokens.size());
  std::set<std::tuple<int, int, std::string>> seen;
  for (const auto& e : s.entities) {
    if (e.start < 0 || e.end < e.start || e.end >= n) {
      throw ValidationError(where + ": entity span [" + std::to_string(e.start) + ", " + std::to_string(e.end) +
                            "] outside sentence of length " + std::to_string(n));
    }
    if (e.type.empty()) throw ValidationError(where + ": entity with empty type");
    if (!seen.emplace(e.start, e.end, e.type).second) {
      throw ValidationError(where + ": duplicate entity (" + std::to_string(e.start) + ", " +
                            std::to_string(e.end) + ", " + e.type + ")");
    }
  }
}

RawSentence parse_record(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, e.what());
  }
  RawSentence s;
  try {
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    s.pos = j.at("pos").get<std::vector<std::string>>();
    if (j.contains("entities")) {
      for (const auto& e : j.at("entities")) {
        s.entities.push_back({e.at("start").get<int>(), e.at("end").get<int>(), e.at("type").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(line_number, e.what());
  }
  validate(s, line_number);
  return s;
}

std::string format_record(const RawSentence& s) {
  json entities = json::array();
  for (const auto& e : s.entities) entities.push_back({{"start", e.start}, {"end", e.end}, {"type", e.type}});
  json j{{"tokens", s.tokens}, {"pos", s.pos}, {"entities", entities}};
  return j.dump();
}

std::vector<RawSentence> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<RawSentence> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, number));
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const RawSentence> sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : sentences) out << format_record(s) << '\n';
}

Sentence encode(const RawSentence& raw, const Vocab& vocab) {
  Sentence s;
  s.tokens.reserve(raw.tokens.size());
  for (const auto& t : raw.tokens) {
    s.tokens.push_back(vocab.token_id(t));
    std::vector<int> ids;
    for (char32_t c : utf8_decode(t)) ids.push_back(vocab.char_id(c));
    if (ids.empty()) ids.push_back(Vocab::kUnk);
    s.chars.push_back(std::move(ids));
  }
  for (const auto& p : raw.pos) s.pos.push_back(vocab.pos_id(p));
  for (const auto& e : raw.entities) s.gold.push_back({e.start, e.end, vocab.category_id(e.type)});
  return s;
}

std::vector<Sentence> encode_all(std::span<const RawSentence> raw, const Vocab& vocab) {
  std::vector<Sentence> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(encode(r, vocab));
  return out;
}

Corpus load_corpus(const std::filesystem::path& path, VocabMode mode, const Vocab* reuse) {
  Corpus c;
  c.raw = read_jsonl(path);
  if (mode == VocabMode::kBuild) {
    c.vocab = Vocab::build(c.raw);
  } else {
    if (reuse == nullptr) throw ContractError("load_corpus: reuse mode needs a vocabulary");
    c.vocab = *reuse;
  }
  c.sentences.reserve(c.raw.size());
  for (std::size_t i = 0; i < c.raw.size(); ++i) {
    try {
      c.sentences.push_back(encode(c.raw[i], c.vocab));
    } catch (const ValidationError& e) {
      throw ValidationError("record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return c;
}

// ---------------------------------------------------------------- batching

Sentence Batch::sentence(std::size_t b) const {
  Sentence s;
  for (std::size_t t = 0; t < max_length; ++t) {
    const std::size_t k = b * max_length + t;
    if (!mask[k]) continue;
    s.tokens.push_back(tokens[k]);
    s.pos.push_back(pos[k]);
    s.chars.push_back(chars[k]);
  }
  s.gold = gold[b];
  return s;
}

std::vector<Batch> make_batches(std::span<const Sentence> corpus, std::span<const std::size_t> order,
                                std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("make_batches: batch size must be positive");
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    Batch b;
    for (std::size_t k = 0; k < count; ++k) {
      b.indices.push_back(order[start + k]);
      b.max_length = std::max(b.max_length, corpus[order[start + k]].length());
    }
    b.tokens.assign(count * b.max_length, Vocab::kPad);
    b.pos.assign(count * b.max_length, Vocab::kPad);
    b.chars.assign(count * b.max_length, std::vector<int>{Vocab::kPad});
    b.mask.assign(count * b.max_length, 0);
    for (std::size_t k = 0; k < count; ++k) {
      const Sentence& s = corpus[b.indices[k]];
      b.lengths.push_back(s.length());
      for (std::size_t t = 0; t < s.length(); ++t) {
        const std::size_t at = k * b.max_length + t;
        b.tokens[at] = s.tokens[t];
        b.pos[at] = s.pos[t];
        b.chars[at] = s.chars[t];
        b.mask[at] = 1;
      }
      b.gold.push_back(s.gold);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> make_batches(std::span<const Sentence> corpus, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (corpus.empty()) throw ContractError("make_batches: empty corpus");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return make_batches(corpus, order, batch_size);
}

}  // namespace seq2set
