#include "seq2set/evaluation.hpp"

#include <iomanip>
#include <set>
#include <sstream>

namespace seq2set {

using nlohmann::json;

double MatchCounts::precision() const noexcept {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double MatchCounts::recall() const noexcept {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double MatchCounts::f1() const noexcept {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

double MetricReport::macro_f1() const noexcept {
  if (per_category.empty()) return 0.0;
  double total_f1 = 0.0;
  for (const auto& [c, counts] : per_category) total_f1 += counts.f1();
  return total_f1 / static_cast<double>(per_category.size());
}

MetricReport& MetricReport::merge(const MetricReport& other) {
  total += other.total;
  for (const auto& [c, counts] : other.per_category) per_category[c] += counts;
  return *this;
}

json MetricReport::to_json(const Vocab* vocab) const {
  json cats = json::object();
  for (const auto& [c, counts] : per_category) {
    const std::string name = vocab != nullptr ? vocab->category_name(c) : std::to_string(c);
    cats[name] = {{"precision", counts.precision()}, {"recall", counts.recall()}, {"f1", counts.f1()},
                  {"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}};
  }
  return {{"precision", precision()}, {"recall", recall()}, {"f1", f1()}, {"tp", total.tp},
          {"fp", total.fp}, {"fn", total.fn}, {"macro_f1", macro_f1()}, {"per_category", cats}};
}

std::string MetricReport::table(const Vocab* vocab) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto row = [&os](const std::string& label, const MatchCounts& c) {
    os << std::left << std::setw(12) << label << std::right << std::setw(10) << c.precision() << std::setw(10)
       << c.recall() << std::setw(10) << c.f1() << std::setw(8) << c.tp << std::setw(8) << c.fp << std::setw(8) << c.fn
       << '\n';
  };
  os << std::left << std::setw(12) << "category" << std::right << std::setw(10) << "P" << std::setw(10) << "R"
     << std::setw(10) << "F1" << std::setw(8) << "tp" << std::setw(8) << "fp" << std::setw(8) << "fn" << '\n';
  for (const auto& [c, counts] : per_category) row(vocab != nullptr ? vocab->category_name(c) : std::to_string(c), counts);
  row("micro", total);
  return os.str();
}

MetricReport score(std::span<const Entity> gold, std::span<const Entity> predicted) {
  MetricReport r;
  std::multiset<Entity> unmatched(gold.begin(), gold.end());
  for (const Entity& p : predicted) {
    auto it = unmatched.find(p);
    if (it != unmatched.end()) {
      unmatched.erase(it);
      ++r.total.tp;
      ++r.per_category[p.category].tp;
    } else {
      ++r.total.fp;
      ++r.per_category[p.category].fp;
    }
  }
  for (const Entity& g : unmatched) {
    ++r.total.fn;
    ++r.per_category[g.category].fn;
  }
  return r;
}

MetricReport score(std::span<const Entity> gold, std::span<const PredictedEntity> predicted) {
  std::vector<Entity> plain;
  plain.reserve(predicted.size());
  for (const auto& p : predicted) plain.push_back(p.entity());
  return score(gold, std::span<const Entity>(plain));
}

bool is_nested(const Entity& e, std::span<const Entity> gold) {
  for (const Entity& o : gold) {
    const bool same_span = o.left == e.left && o.right == e.right;
    if (same_span) continue;
    const bool contains = e.left <= o.left && o.right <= e.right;
    const bool inside = o.left <= e.left && e.right <= o.right;
    if (contains || inside) return true;
  }
  return false;
}

CorpusStats corpus_stats(std::span<const Sentence> corpus) {
  CorpusStats s;
  std::size_t tokens = 0;
  for (const Sentence& sent : corpus) {
    ++s.sentences;
    tokens += sent.length();
    s.total_entities += sent.gold.size();
    std::size_t nested_here = 0;
    for (const Entity& e : sent.gold)
      if (is_nested(e, sent.gold)) ++nested_here;
    s.nested_entities += nested_here;
    if (nested_here > 0) ++s.sentences_with_nested;
  }
  s.avg_length = s.sentences == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(s.sentences);
  return s;
}

json CorpusStats::to_json() const {
  return {{"sentences", sentences},          {"sentences_with_nested", sentences_with_nested},
          {"avg_sentence_length", avg_length}, {"total_entities", total_entities},
          {"nested_entities", nested_entities}, {"nested_percentage", nested_percentage()}};
}

std::string CorpusStats::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(26) << "# sentences" << sentences << '\n'
     << std::setw(26) << "# with nested entities" << sentences_with_nested << '\n'
     << std::setw(26) << "avg sentence length" << avg_length << '\n'
     << std::setw(26) << "# total entities" << total_entities << '\n'
     << std::setw(26) << "# nested entities" << nested_entities << '\n'
     << std::setw(26) << "nested percentage (%)" << nested_percentage() << '\n';
  return os.str();
}

}  // namespace seq2set
