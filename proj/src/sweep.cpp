#include "seq2set/sweep.hpp"

#include <iomanip>
#include <sstream>

#include "seq2set/errors.hpp"

namespace seq2set {

namespace {

struct AxisName {
  SweepAxis axis;
  std::string_view name;
};

constexpr AxisName kAxes[] = {
    {SweepAxis::kQueryCount, "query_count"},   {SweepAxis::kDecoderLayers, "decoder_layers"},
    {SweepAxis::kInteraction, "interaction"},  {SweepAxis::kLoss, "loss"},
    {SweepAxis::kFreezeQueries, "freeze_queries"},
};

bool parse_switch(std::string_view v, std::string_view axis) {
  if (v == "on" || v == "true") return true;
  if (v == "off" || v == "false") return false;
  throw ValidationError(std::string(axis) + ": expected on or off, got '" + std::string(v) + "'");
}

}  // namespace

SweepAxis parse_sweep_axis(std::string_view name) {
  for (const auto& a : kAxes)
    if (a.name == name) return a.axis;
  throw ValidationError("unknown sweep axis '" + std::string(name) +
                        "' (expected query_count, decoder_layers, interaction, loss or freeze_queries)");
}

std::string_view sweep_axis_name(SweepAxis axis) {
  for (const auto& a : kAxes)
    if (a.axis == axis) return a.name;
  return "?";
}

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kQueryCount:
      return {"20", "40", "60", "80"};
    case SweepAxis::kDecoderLayers:
      return {"1", "2", "3"};
    case SweepAxis::kInteraction:
    case SweepAxis::kFreezeQueries:
      return {"on", "off"};
    case SweepAxis::kLoss:
      return {"bipartite", "ce"};
  }
  return {};
}

RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value) {
  RunConfig c = base;
  switch (axis) {
    case SweepAxis::kQueryCount:
      set_config_value(c, "queries", value);
      break;
    case SweepAxis::kDecoderLayers:
      set_config_value(c, "decoder_layers", value);
      break;
    case SweepAxis::kInteraction:
      c.model.decoder.interaction = parse_switch(value, "interaction");
      break;
    case SweepAxis::kFreezeQueries:
      c.train.freeze_queries = parse_switch(value, "freeze_queries");
      break;
    case SweepAxis::kLoss:
      set_config_value(c, "loss_mode", value);
      c.train.shuffle_gold_order = c.train.loss_mode == LossMode::kCrossEntropy;
      break;
  }
  c.validate();
  return c;
}

SweepTable sweep(SweepAxis axis, std::span<const std::string> values, const RunConfig& base, const SweepData& data) {
  SweepTable table;
  table.axis = axis;
  for (const std::string& value : values) {
    SweepCell cell;
    cell.value = value;
    try {
      const RunConfig config = apply_sweep_value(base, axis, value);
      RunOutcome outcome = train_and_evaluate(config, data.vocab, data.train, data.dev, data.test);
      cell.test = outcome.test;
      cell.best_dev_f1 = outcome.best_dev_f1;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    table.cells.push_back(std::move(cell));
  }
  return table;
}

nlohmann::json SweepTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepCell& c : cells) {
    nlohmann::json row = {{"value", c.value}, {"best_dev_f1", c.best_dev_f1}};
    if (c.test) row["test"] = c.test->to_json();
    if (!c.error.empty()) row["error"] = c.error;
    rows.push_back(row);
  }
  return {{"axis", sweep_axis_name(axis)}, {"rows", rows}};
}

std::string SweepTable::table() const {
  std::ostringstream os;
  os << std::left << std::setw(16) << sweep_axis_name(axis) << std::right << std::setw(10) << "dev F1" << std::setw(10)
     << "test P" << std::setw(10) << "test R" << std::setw(10) << "test F1" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const SweepCell& c : cells) {
    os << std::left << std::setw(16) << c.value << std::right;
    if (!c.error.empty()) {
      os << "  error: " << c.error << '\n';
      continue;
    }
    os << std::setw(10) << c.best_dev_f1;
    if (c.test) {
      os << std::setw(10) << c.test->precision() << std::setw(10) << c.test->recall() << std::setw(10) << c.test->f1();
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace seq2set
