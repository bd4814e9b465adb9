#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "seq2set/data.hpp"
#include "seq2set/evaluation.hpp"
#include "seq2set/training.hpp"

namespace seq2set {

// Each axis trains one model per value with everything else held fixed.
enum class SweepAxis { kQueryCount, kDecoderLayers, kInteraction, kLoss, kFreezeQueries };

SweepAxis parse_sweep_axis(std::string_view name);
std::string_view sweep_axis_name(SweepAxis axis);
// Values used when none are given: on/off rows for the switches.
std::vector<std::string> default_sweep_values(SweepAxis axis);
// Throws ValidationError when the value does not fit the axis. "ce" also
// turns on per-epoch gold-order shuffling.
RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value);

struct SweepCell {
  std::string value;
  std::optional<MetricReport> test;
  double best_dev_f1 = 0.0;
  std::string error;  // non-empty when training this cell failed
};

struct SweepTable {
  SweepAxis axis = SweepAxis::kQueryCount;
  std::vector<SweepCell> cells;

  nlohmann::json to_json() const;
  std::string table() const;
};

struct SweepData {
  Vocab vocab;
  std::span<const Sentence> train;
  std::span<const Sentence> dev;
  std::span<const Sentence> test;
};

// One model per value at the base seed. A failing cell records its error and
// the sweep moves on.
SweepTable sweep(SweepAxis axis, std::span<const std::string> values, const RunConfig& base, const SweepData& data);

}  // namespace seq2set
