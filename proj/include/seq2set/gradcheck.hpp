#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seq2set/data.hpp"
#include "seq2set/model.hpp"

namespace seq2set {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double step = 1e-5;       // central-difference half width
  double tolerance = 1e-4;  // on the relative error
  // Denominator floor: below this gradient magnitude the difference quotient
  // cannot resolve relative error, so the comparison becomes absolute.
  double floor = 1e-5;
};

struct ParameterCheck {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
  double max_abs_gradient = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  std::size_t entries = 0;
  bool pass = true;

  nlohmann::json to_json() const;
  std::string table() const;
};

// |a − n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

// The miniature configuration: 20-entry token vocabulary, d = 16, N = 5,
// M = 1, h = 2, sentences of at most 4 tokens.
struct MiniatureSetup {
  ModelConfig config;
  Vocab vocab;
  std::vector<Sentence> sentences;
};
MiniatureSetup miniature_setup();

// Compares every trainable parameter entry's analytic gradient of the batch
// bipartite loss against central differences, in eval mode (no dropout) and
// with the assignment fixed at the unperturbed point.
GradcheckReport gradcheck_model(Seq2SetModel<double>& model, std::span<const Sentence> sentences, int null_category,
                                const GradcheckOptions& options = {});

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace seq2set
