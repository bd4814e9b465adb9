#include "seq2set/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "seq2set/errors.hpp"

namespace seq2set {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ValidationError("peak_lr must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ValidationError("warmup_fraction must lie in [0, 1)");
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must lie in [0, 1)");
  if (grad_clip_norm < 0.0) throw ValidationError("grad_clip_norm must be non-negative");
}

ModelConfig effective_model_config(const RunConfig& config) {
  ModelConfig m = config.model;
  m.encoder.dropout = config.train.dropout;
  m.decoder.dropout = config.train.dropout;
  return m;
}

void RunConfig::validate() const {
  train.validate();
  const ModelConfig m = effective_model_config(*this);
  m.encoder.validate();
  m.decoder.validate(m.encoder.model_dim());
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename N>
N parse_number(std::string_view key, std::string_view text) {
  N value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config key '" + std::string(key) + "': expected true or false, got '" + std::string(text) +
                        "'");
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<json(const RunConfig&)> get;
};

#define SEQ2SET_SIZE_FIELD(name, member)                                                        \
  Field {                                                                                       \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_number<std::size_t>(name, v); }, \
        [](const RunConfig& c) { return json(c.member); }                                       \
  }
#define SEQ2SET_REAL_FIELD(name, member)                                                   \
  Field {                                                                                  \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_number<double>(name, v); }, \
        [](const RunConfig& c) { return json(c.member); }                                  \
  }
#define SEQ2SET_BOOL_FIELD(name, member)                                            \
  Field {                                                                           \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_bool(name, v); }, \
        [](const RunConfig& c) { return json(c.member); }                           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SEQ2SET_REAL_FIELD("peak_lr", train.peak_lr),
      SEQ2SET_REAL_FIELD("warmup_fraction", train.warmup_fraction),
      SEQ2SET_SIZE_FIELD("epochs", train.epochs),
      SEQ2SET_SIZE_FIELD("batch_size", train.batch_size),
      SEQ2SET_REAL_FIELD("weight_decay", train.weight_decay),
      SEQ2SET_REAL_FIELD("dropout", train.dropout),
      Field{"seed", [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return json(c.train.seed); }},
      SEQ2SET_BOOL_FIELD("freeze_queries", train.freeze_queries),
      Field{"loss_mode",
            [](RunConfig& c, std::string_view v) {
              if (v == "bipartite") c.train.loss_mode = LossMode::kBipartite;
              else if (v == "ce") c.train.loss_mode = LossMode::kCrossEntropy;
              else throw ValidationError("config key 'loss_mode': expected bipartite or ce, got '" + std::string(v) + "'");
            },
            [](const RunConfig& c) { return json(c.train.loss_mode == LossMode::kBipartite ? "bipartite" : "ce"); }},
      SEQ2SET_REAL_FIELD("grad_clip_norm", train.grad_clip_norm),
      SEQ2SET_BOOL_FIELD("shuffle_gold_order", train.shuffle_gold_order),
      Field{"cost_mode",
            [](RunConfig& c, std::string_view v) {
              if (v == "probability") c.train.cost_mode = CostMode::kProbability;
              else if (v == "log_probability") c.train.cost_mode = CostMode::kLogProbability;
              else throw ValidationError("config key 'cost_mode': expected probability or log_probability, got '" + std::string(v) + "'");
            },
            [](const RunConfig& c) {
              return json(c.train.cost_mode == CostMode::kProbability ? "probability" : "log_probability");
            }},
      Field{"precision",
            [](RunConfig& c, std::string_view v) {
              if (v == "float") c.precision = Precision::kFloat;
              else if (v == "double") c.precision = Precision::kDouble;
              else throw ValidationError("config key 'precision': expected float or double, got '" + std::string(v) + "'");
            },
            [](const RunConfig& c) { return json(c.precision == Precision::kFloat ? "float" : "double"); }},
      SEQ2SET_SIZE_FIELD("queries", model.decoder.queries),
      SEQ2SET_SIZE_FIELD("decoder_layers", model.decoder.layers),
      SEQ2SET_SIZE_FIELD("heads", model.decoder.heads),
      SEQ2SET_SIZE_FIELD("ffn_hidden", model.decoder.ffn_hidden),
      SEQ2SET_SIZE_FIELD("head_hidden", model.decoder.head_hidden),
      SEQ2SET_BOOL_FIELD("interaction", model.decoder.interaction),
      SEQ2SET_SIZE_FIELD("token_emb_dim", model.encoder.token_emb_dim),
      SEQ2SET_SIZE_FIELD("pos_emb_dim", model.encoder.pos_emb_dim),
      SEQ2SET_SIZE_FIELD("char_emb_dim", model.encoder.char_emb_dim),
      SEQ2SET_SIZE_FIELD("char_lstm_hidden", model.encoder.char_lstm_hidden),
      SEQ2SET_SIZE_FIELD("char_lstm_layers", model.encoder.char_lstm_layers),
      SEQ2SET_SIZE_FIELD("token_lstm_hidden", model.encoder.token_lstm_hidden),
      SEQ2SET_SIZE_FIELD("token_lstm_layers", model.encoder.token_lstm_layers),
      SEQ2SET_SIZE_FIELD("pretrained_channel_dim", model.encoder.pretrained_channel_dim),
      SEQ2SET_BOOL_FIELD("input_dropout", model.encoder.input_dropout),
  };
  return table;
}

#undef SEQ2SET_SIZE_FIELD
#undef SEQ2SET_REAL_FIELD
#undef SEQ2SET_BOOL_FIELD

std::string scalar_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(number, "expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(number, "expected 'key = value'");
    try {
      set_config_value(config, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + scalar_text(f.get(*this)) + "\n";
  return out;
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const Field& f : fields()) j[f.key] = f.get(*this);
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  RunConfig config;
  for (const auto& [key, value] : j.items()) set_config_value(config, key, scalar_text(value));
  config.validate();
  return config;
}

double lr_schedule(std::size_t step, std::size_t total_steps, double peak, double warmup_fraction) {
  if (total_steps == 0) return 0.0;
  step = std::min(step, total_steps);
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  const double warmup = warmup_fraction * total;
  if (s < warmup) return peak * s / warmup;
  if (total <= warmup) return peak;
  return peak * (total - s) / (total - warmup);
}

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::size_t step,
                  double lr, double weight_decay, const AdamWHyper& hyper) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adamw_update: parameter, gradient and moment sizes differ");
  }
  if (step == 0) throw ContractError("adamw_update: step counts from 1");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  const double shrink = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = hyper.beta1 * static_cast<double>(m[i]) + (1.0 - hyper.beta1) * g;
    const double vi = hyper.beta2 * static_cast<double>(v[i]) + (1.0 - hyper.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / correction1;
    const double v_hat = vi / correction2;
    double p = static_cast<double>(param[i]) * shrink;
    p -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    param[i] = static_cast<T>(p);
  }
}

template <typename T>
AdamW<T>::AdamW(ParameterStore<T>& store, double weight_decay, bool freeze_queries, AdamWHyper hyper)
    : store_(&store), weight_decay_(weight_decay), hyper_(hyper) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter<T>& p = store[i];
    const bool active = p.trainable && !(freeze_queries && p.name == kQueryParameter);
    active_.push_back(active);
    m_.emplace_back(active ? p.value.size() : 0, T{0});
    v_.emplace_back(active ? p.value.size() : 0, T{0});
  }
}

template <typename T>
double AdamW<T>::clip_gradients(double max_norm) {
  double squared = 0.0;
  for (std::size_t i = 0; i < store_->size(); ++i) {
    if (!active_[i]) continue;
    for (T g : (*store_)[i].value.grad()) squared += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(squared);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < store_->size(); ++i) {
      if (!active_[i]) continue;
      for (T& g : (*store_)[i].value.grad()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++steps_;
  for (std::size_t i = 0; i < store_->size(); ++i) {
    if (!active_[i]) continue;
    Parameter<T>& p = (*store_)[i];
    const std::span<const T> grad = p.value.grad();
    adamw_update(p.value.values(), grad, std::span<T>(m_[i]), std::span<T>(v_[i]), steps_, lr,
                 p.decay ? weight_decay_ : 0.0, hyper_);
  }
}

json EpochLog::to_json() const {
  json j = {{"epoch", epoch}, {"step", step}, {"lr", lr}, {"train_loss", train_loss}};
  if (dev) {
    j["dev_precision"] = dev->precision();
    j["dev_recall"] = dev->recall();
    j["dev_f1"] = dev->f1();
  }
  j["best"] = best;
  return j;
}

template <typename T>
std::vector<std::vector<PredictedEntity>> predict_all(const Seq2SetModel<T>& model, std::span<const Sentence> corpus,
                                                      std::optional<double> null_threshold) {
  std::vector<std::vector<PredictedEntity>> out;
  out.reserve(corpus.size());
  for (const Sentence& s : corpus) out.push_back(extract_entities(model.infer(s), s.length(), null_threshold));
  return out;
}

template <typename T>
MetricReport evaluate(const Seq2SetModel<T>& model, std::span<const Sentence> corpus,
                      std::optional<double> null_threshold) {
  MetricReport report;
  for (const Sentence& s : corpus) {
    const auto predicted = extract_entities(model.infer(s), s.length(), null_threshold);
    report.merge(score(std::span<const Entity>(s.gold), std::span<const PredictedEntity>(predicted)));
  }
  return report;
}

template <typename T>
ad::Var<T> sentence_loss(const PredictionSet<T>& pred, std::span<const Entity> gold, int null_category,
                         const TrainConfig& config) {
  const std::size_t n = pred.class_probs.rows();
  if (config.loss_mode == LossMode::kCrossEntropy) {
    return ce_loss_baseline(pad_gold(gold, n, null_category, GoldOrder::kAsGiven), pred);
  }
  const PaddedGold padded = pad_gold(gold, n, null_category, GoldOrder::kCanonical);
  const Assignment assignment = hungarian(cost_matrix(padded, values_of(pred), config.cost_mode));
  return set_loss(padded, pred, assignment);
}

template <typename T>
Trainer<T>::Trainer(RunConfig config, Vocab vocab)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      rng_(config_.train.seed),
      model_(std::make_unique<Seq2SetModel<T>>(effective_model_config((config_.validate(), config_)),
                                               VocabSizes::of(vocab_), rng_)),
      optimizer_(model_->parameters(), config_.train.weight_decay, config_.train.freeze_queries) {}

template <typename T>
std::size_t Trainer<T>::total_steps(std::size_t train_size) const {
  const std::size_t b = config_.train.batch_size;
  return config_.train.epochs * ((train_size + b - 1) / b);
}

namespace {

std::string batch_dump(std::span<const Sentence> train, std::span<const std::size_t> indices, std::size_t offender) {
  json dump = {{"offending_sentence", offender}, {"batch", json::array()}};
  for (std::size_t i : indices) {
    json gold = json::array();
    for (const Entity& e : train[i].gold) gold.push_back({e.left, e.right, e.category});
    dump["batch"].push_back({{"index", i}, {"tokens", train[i].tokens}, {"gold", gold}});
  }
  return dump.dump();
}

}  // namespace

template <typename T>
double Trainer<T>::train_batch(std::span<const Sentence> train, std::span<const std::size_t> indices) {
  ParameterStore<T>& store = model_->parameters();
  store.zero_grad();
  const T inv_batch = T{1} / static_cast<T>(indices.size());
  const int null_category = vocab_.null_category();
  double total = 0.0;
  for (std::size_t i : indices) {
    const Sentence& s = train[i];
    std::vector<Entity> gold = s.gold;
    if (config_.train.shuffle_gold_order) std::shuffle(gold.begin(), gold.end(), rng_);
    ad::Graph<T> g;
    auto abort = [&](const char* what) {
      return NonFiniteLossError(std::string(what) + " at step " + std::to_string(optimizer_.steps() + 1) + ": " +
                                batch_dump(train, indices, i));
    };
    const PredictionSet<T> pred = model_->forward(g, s, true, rng_);
    // A non-finite prediction would otherwise surface as a matching error.
    if (!pred.class_probs.value().all_finite() || !pred.left.value().all_finite() || !pred.right.value().all_finite()) {
      throw abort("non-finite prediction");
    }
    const ad::Var<T> loss = sentence_loss(pred, std::span<const Entity>(gold), null_category, config_.train);
    const double value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(value)) throw abort("non-finite loss");
    total += value;
    g.backward(ad::scale(loss, inv_batch));
  }
  if (config_.train.grad_clip_norm > 0.0) optimizer_.clip_gradients(config_.train.grad_clip_norm);
  const double lr =
      lr_schedule(optimizer_.steps() + 1, total_steps_, config_.train.peak_lr, config_.train.warmup_fraction);
  optimizer_.step(lr);
  return total;
}

template <typename T>
EpochLog Trainer<T>::run_epoch(std::span<const Sentence> train, std::span<const Sentence> dev) {
  if (train.empty()) throw ValidationError("training corpus is empty");
  if (total_steps_ == 0) {
    const std::size_t queries = config_.model.decoder.queries;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i].gold.size() > queries) {
        throw ValidationError("training sentence " + std::to_string(i + 1) + " has " +
                              std::to_string(train[i].gold.size()) + " gold entities but only " +
                              std::to_string(queries) + " queries");
      }
    }
    total_steps_ = total_steps(train.size());
  }
  ++epoch_;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  double loss_sum = 0.0;
  const std::size_t b = config_.train.batch_size;
  for (std::size_t start = 0; start < order.size(); start += b) {
    const std::size_t count = std::min(b, order.size() - start);
    loss_sum += train_batch(train, std::span<const std::size_t>(order).subspan(start, count));
  }

  EpochLog log;
  log.epoch = epoch_;
  log.step = optimizer_.steps();
  log.lr = lr_schedule(optimizer_.steps(), total_steps_, config_.train.peak_lr, config_.train.warmup_fraction);
  log.train_loss = loss_sum / static_cast<double>(train.size());
  if (!dev.empty()) {
    log.dev = evaluate(*model_, dev);
    if (log.dev->f1() > best_f1_) {
      best_f1_ = log.dev->f1();
      best_params_ = model_->parameters().snapshot();
      log.best = true;
    }
  }
  history_.push_back(log);
  return log;
}

template <typename T>
std::vector<EpochLog> Trainer<T>::fit(std::span<const Sentence> train, std::span<const Sentence> dev,
                                      const std::function<bool(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> logs;
  for (std::size_t e = 0; e < config_.train.epochs; ++e) {
    logs.push_back(run_epoch(train, dev));
    if (on_epoch && !on_epoch(logs.back())) break;
  }
  restore_best();
  return logs;
}

template <typename T>
void Trainer<T>::restore_best() {
  if (!best_params_.empty()) model_->parameters().restore(best_params_);
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  write_json_file(path, checkpoint_json(*model_, vocab_, config_, &optimizer_));
}

namespace {

template <typename T>
json flat(std::span<const T> values) {
  json out = json::array();
  out.get_ref<json::array_t&>().reserve(values.size());
  for (T v : values) out.push_back(static_cast<double>(v));
  return out;
}

template <typename T>
void unflat(const json& data, std::span<T> out, const std::string& what) {
  if (!data.is_array() || data.size() != out.size()) {
    throw ValidationError("checkpoint: '" + what + "' has " + std::to_string(data.size()) + " values, expected " +
                          std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(data[i].get<double>());
}

template <typename T>
constexpr const char* precision_name() {
  return std::is_same_v<T, float> ? "float" : "double";
}

}  // namespace

template <typename T>
json checkpoint_json(const Seq2SetModel<T>& model, const Vocab& vocab, const RunConfig& config,
                     const AdamW<T>* optimizer) {
  RunConfig snapshot = config;
  snapshot.precision = std::is_same_v<T, float> ? Precision::kFloat : Precision::kDouble;
  json j = {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"precision", precision_name<T>()},
            {"step", optimizer != nullptr ? optimizer->steps() : 0},
            {"config", snapshot.to_json()},
            {"vocab", vocab.to_json()}};
  json params = json::array();
  const ParameterStore<T>& store = model.parameters();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter<T>& p = store[i];
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()},
                      {"data", flat(p.value.values())}});
  }
  j["parameters"] = std::move(params);
  json moments = json::array();
  if (optimizer != nullptr) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!optimizer->updates(i)) continue;
      moments.push_back({{"name", store[i].name},
                         {"m", flat(std::span<const T>(optimizer->first_moments()[i]))},
                         {"v", flat(std::span<const T>(optimizer->second_moments()[i]))}});
    }
  }
  j["optimizer"] = std::move(moments);
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  CheckpointData out;
  try {
    out.document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  const json& j = out.document;
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw ValidationError("checkpoint '" + path.string() + "' has an unrecognized format");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw ValidationError("checkpoint '" + path.string() + "' has unsupported version " +
                          std::to_string(j.value("version", 0)));
  }
  try {
    out.config = RunConfig::from_json(j.at("config"));
    out.vocab = Vocab::from_json(j.at("vocab"));
    out.step = j.at("step").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint '" + path.string() + "': " + e.what());
  }
  return out;
}

template <typename T>
std::unique_ptr<Seq2SetModel<T>> restore_model(const CheckpointData& checkpoint) {
  std::mt19937_64 rng(0);
  auto model = std::make_unique<Seq2SetModel<T>>(effective_model_config(checkpoint.config),
                                                 VocabSizes::of(checkpoint.vocab), rng);
  ParameterStore<T>& store = model->parameters();
  const json& params = checkpoint.document.at("parameters");
  if (params.size() != store.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                          std::to_string(store.size()));
  }
  for (const json& entry : params) {
    const std::string name = entry.at("name").get<std::string>();
    if (!store.contains(name)) throw ValidationError("checkpoint parameter '" + name + "' is unknown to the model");
    ad::Tensor<T>& t = store.at(name).value;
    if (entry.at("rows").get<std::size_t>() != t.rows() || entry.at("cols").get<std::size_t>() != t.cols()) {
      throw ValidationError("checkpoint parameter '" + name + "' has shape [" + entry.at("rows").dump() + "x" +
                            entry.at("cols").dump() + "], model expects " + t.shape_string());
    }
    unflat(entry.at("data"), t.values(), name);
  }
  return model;
}

namespace {

template <typename T>
RunOutcome run_at(const RunConfig& config, const Vocab& vocab, std::span<const Sentence> train,
                  std::span<const Sentence> dev, std::span<const Sentence> test,
                  const std::filesystem::path& checkpoint, const std::function<bool(const EpochLog&)>& on_epoch) {
  Trainer<T> trainer(config, vocab);
  RunOutcome out;
  out.logs = trainer.fit(train, dev, on_epoch);
  out.best_dev_f1 = std::max(trainer.best_dev_f1(), 0.0);
  out.steps = trainer.step();
  if (!test.empty()) out.test = evaluate(trainer.model(), test);
  if (!checkpoint.empty()) trainer.save(checkpoint);
  return out;
}

}  // namespace

RunOutcome train_and_evaluate(const RunConfig& config, const Vocab& vocab, std::span<const Sentence> train,
                              std::span<const Sentence> dev, std::span<const Sentence> test,
                              const std::filesystem::path& checkpoint,
                              const std::function<bool(const EpochLog&)>& on_epoch) {
  if (config.precision == Precision::kDouble) return run_at<double>(config, vocab, train, dev, test, checkpoint, on_epoch);
  return run_at<float>(config, vocab, train, dev, test, checkpoint, on_epoch);
}

#define SEQ2SET_INSTANTIATE(T)                                                                                  \
  template void adamw_update(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, std::size_t, double, \
                             double, const AdamWHyper&);                                                        \
  template class AdamW<T>;                                                                                      \
  template std::vector<std::vector<PredictedEntity>> predict_all(const Seq2SetModel<T>&,                       \
                                                                 std::span<const Sentence>, std::optional<double>); \
  template MetricReport evaluate(const Seq2SetModel<T>&, std::span<const Sentence>, std::optional<double>);    \
  template ad::Var<T> sentence_loss(const PredictionSet<T>&, std::span<const Entity>, int, const TrainConfig&); \
  template class Trainer<T>;                                                                                    \
  template json checkpoint_json(const Seq2SetModel<T>&, const Vocab&, const RunConfig&, const AdamW<T>*);     \
  template std::unique_ptr<Seq2SetModel<T>> restore_model(const CheckpointData&);

SEQ2SET_INSTANTIATE(float)
SEQ2SET_INSTANTIATE(double)

#undef SEQ2SET_INSTANTIATE

}  // namespace seq2set
