#include "seq2set/synthetic.hpp"

#include <array>
#include <random>
#include <unordered_set>

#include "seq2set/errors.hpp"

namespace seq2set {

namespace {

struct CategoryLexicon {
  const char* name;
  std::vector<const char*> heads;
  std::vector<const char*> frames;
  const char* prep;
};

const std::array<CategoryLexicon, kMaxSyntheticCategories>& lexicons() {
  static const std::array<CategoryLexicon, kMaxSyntheticCategories> table{{
      {"PER",
       {"john", "mary", "ahmed", "li", "sara", "peter", "omar", "anna", "david", "maria", "ivan", "chen"},
       {"professor", "leader", "spokesman", "director", "son", "chief"},
       "of"},
      {"ORG",
       {"reuters", "nato", "unicef", "acme", "interpol", "fifa", "opec", "boeing", "siemens", "nasa", "cnn",
        "toyota"},
       {"ministry", "university", "army", "bank", "council", "office"},
       "in"},
      {"GPE",
       {"baghdad", "kut", "paris", "texas", "china", "egypt", "lagos", "kenya", "quebec", "peru", "oslo",
        "hanoi"},
       {"capital", "province", "district", "republic", "state", "city"},
       "near"},
      {"LOC",
       {"nile", "everest", "sahara", "danube", "alps", "andes", "gobi", "volga", "ural", "congo", "tigris",
        "atlas"},
       {"coast", "valley", "shore", "basin", "slope", "delta"},
       "by"},
      {"FAC",
       {"heathrow", "pentagon", "kremlin", "louvre", "alcatraz", "wembley", "narita", "colosseum", "parthenon",
        "alhambra", "pantheon", "versailles"},
       {"airport", "bridge", "tower", "stadium", "prison", "harbor"},
       "at"},
      {"VEH",
       {"titanic", "apollo", "concorde", "enterprise", "columbia", "discovery", "kursk", "lusitania", "endeavour",
        "hindenburg", "bismarck", "mayflower"},
       {"ship", "tank", "jet", "convoy", "shuttle", "submarine"},
       "from"},
      {"WEA",
       {"scud", "kalashnikov", "tomahawk", "patriot", "stinger", "hellfire", "sidewinder", "javelin", "exocet",
        "trident", "minuteman", "katyusha"},
       {"missiles", "rifles", "rockets", "bombs", "shells", "mines"},
       "for"},
  }};
  return table;
}

struct Filler {
  const char* word;
  const char* tag;
};

const std::vector<Filler>& fillers() {
  static const std::vector<Filler> words{
      {"said", "VBD"},    {"visited", "VBD"},  {"reported", "VBD"}, {"met", "VBD"},     {"left", "VBD"},
      {"praised", "VBD"}, {"warned", "VBD"},   {"joined", "VBD"},   {"yesterday", "NN"}, {"today", "NN"},
      {"again", "RB"},    {"later", "RB"},     {"and", "CC"},       {"while", "IN"},    {"with", "IN"},
      {"after", "IN"},    {"before", "IN"},    {"that", "IN"},      {"officials", "NNS"}, {"reportedly", "RB"},
  };
  return words;
}

class Generator {
 public:
  Generator(const GrammarConfig& config) : config_(config), rng_(config.seed) {}

  RawSentence sentence() {
    for (;;) {
      RawSentence s;
      fill(s, uniform(0, 2));
      const int top = uniform(1, kMaxTopLevelEntities);
      for (int k = 0; k < top; ++k) {
        if (k > 0) fill(s, uniform(1, 3));
        phrase(s, uniform(0, config_.category_count - 1), 1);
      }
      fill(s, uniform(0, 2));
      s.tokens.emplace_back(".");
      s.pos.emplace_back(".");
      if (s.entities.size() <= config_.max_entities) return s;
    }
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  template <typename Seq>
  const auto& choose(const Seq& seq) {
    return seq[static_cast<std::size_t>(uniform(0, static_cast<int>(seq.size()) - 1))];
  }

  void word(RawSentence& s, const char* w, const char* tag) {
    s.tokens.emplace_back(w);
    s.pos.emplace_back(tag);
  }

  void fill(RawSentence& s, int count) {
    for (int i = 0; i < count; ++i) {
      const Filler& f = choose(fillers());
      word(s, f.word, f.tag);
    }
  }

  void phrase(RawSentence& s, int category, int depth) {
    const CategoryLexicon& lex = lexicons()[static_cast<std::size_t>(category)];
    const int start = static_cast<int>(s.tokens.size());
    const std::size_t slot = s.entities.size();
    s.entities.push_back({start, start, lex.name});
    const bool nested = depth < config_.max_depth && std::bernoulli_distribution(config_.nesting_prob)(rng_);
    if (nested) {
      if (uniform(0, 1) == 1) word(s, uniform(0, 1) == 1 ? "the" : "a", "DT");
      word(s, choose(lex.frames), "NN");
      word(s, lex.prep, "IN");
      int child = category;
      if (config_.category_count > 1) {
        child = uniform(0, config_.category_count - 2);
        if (child >= category) ++child;
      }
      phrase(s, child, depth + 1);
    } else {
      const int n = uniform(1, 2);
      for (int i = 0; i < n; ++i) word(s, choose(lex.heads), "NNP");
    }
    s.entities[slot].end = static_cast<int>(s.tokens.size()) - 1;
  }

  const GrammarConfig& config_;
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<std::string> synthetic_categories(int count) {
  std::vector<std::string> out;
  for (int c = 0; c < count; ++c) out.emplace_back(lexicons()[static_cast<std::size_t>(c)].name);
  return out;
}

SyntheticCorpus generate_synthetic(const GrammarConfig& config) {
  if (config.n_train + config.n_dev + config.n_test == 0) throw ContractError("generate_synthetic: no sentences requested");
  if (config.nesting_prob < 0.0 || config.nesting_prob > 1.0) {
    throw ContractError("generate_synthetic: nesting_prob must lie in [0, 1]");
  }
  if (config.max_depth < 1) throw ContractError("generate_synthetic: max_depth must be >= 1");
  if (config.category_count < 1 || config.category_count > kMaxSyntheticCategories) {
    throw ContractError("generate_synthetic: category_count must lie in [1, " +
                        std::to_string(kMaxSyntheticCategories) + "]");
  }
  if (config.max_entities < static_cast<std::size_t>(1)) {
    throw ContractError("generate_synthetic: max_entities must be >= 1");
  }

  Generator gen(config);
  std::unordered_set<std::string> seen;
  auto draw = [&](std::size_t count, std::vector<RawSentence>& split) {
    std::size_t attempts = 0;
    while (split.size() < count) {
      if (++attempts > 1000 * (count + 10)) {
        throw ContractError("generate_synthetic: grammar cannot produce enough distinct sentences");
      }
      RawSentence s = gen.sentence();
      std::string key;
      for (const auto& t : s.tokens) key.append(t).push_back(' ');
      if (seen.insert(std::move(key)).second) split.push_back(std::move(s));
    }
  };
  SyntheticCorpus out;
  draw(config.n_train, out.train);
  draw(config.n_dev, out.dev);
  draw(config.n_test, out.test);
  return out;
}

}  // namespace seq2set
