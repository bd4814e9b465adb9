#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "seq2set/data.hpp"
#include "seq2set/evaluation.hpp"
#include "seq2set/matching.hpp"
#include "seq2set/model.hpp"

namespace seq2set {

enum class LossMode { kBipartite, kCrossEntropy };
enum class Precision { kFloat, kDouble };

struct TrainConfig {
  double peak_lr = 1e-3;
  double warmup_fraction = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double weight_decay = 0.01;
  double dropout = 0.1;
  std::uint64_t seed = 7;
  bool freeze_queries = false;
  LossMode loss_mode = LossMode::kBipartite;
  double grad_clip_norm = 1.0;  // 0 disables clipping
  // Reshuffle each sentence's gold list every epoch (meaningful with kCrossEntropy).
  bool shuffle_gold_order = false;
  CostMode cost_mode = CostMode::kProbability;

  void validate() const;
};

// Everything needed to rebuild and retrain a model.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  Precision precision = Precision::kFloat;

  void validate() const;
  // Flat "key = value" text; '#' starts a comment. Unknown keys are rejected.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_text() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// Applies one key to the config; throws ValidationError on bad keys/values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

// Linear 0 → peak over the first warmup_fraction·total_steps steps, then
// linear peak → 0 at total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps, double peak, double warmup_fraction);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One decoupled-weight-decay Adam update for a flat parameter block; `step`
// counts from 1. Decay multiplies the parameter by (1 − lr·weight_decay)
// before the adaptive step.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::size_t step,
                  double lr, double weight_decay, const AdamWHyper& hyper = {});

template <typename T>
class AdamW {
 public:
  // Non-trainable parameters are skipped, as is the query matrix when
  // freeze_queries is set. Parameters whose decay flag is off get no decay.
  AdamW(ParameterStore<T>& store, double weight_decay, bool freeze_queries, AdamWHyper hyper = {});

  // Applies one update with the given learning rate using the stored grads.
  void step(double lr);
  // Rescales gradients so their global L2 norm is at most max_norm; returns
  // the norm before clipping.
  double clip_gradients(double max_norm);
  bool updates(std::size_t index) const { return active_[index]; }

  std::size_t steps() const noexcept { return steps_; }
  std::vector<std::vector<T>>& first_moments() noexcept { return m_; }
  std::vector<std::vector<T>>& second_moments() noexcept { return v_; }
  const std::vector<std::vector<T>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<T>>& second_moments() const noexcept { return v_; }
  void set_steps(std::size_t s) noexcept { steps_ = s; }

 private:
  ParameterStore<T>* store_;
  double weight_decay_;
  AdamWHyper hyper_;
  std::vector<bool> active_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::size_t steps_ = 0;
};

inline constexpr std::string_view kQueryParameter = "decoder.queries";

// The model config with the training dropout applied to encoder and decoder.
ModelConfig effective_model_config(const RunConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean per-sentence loss over the epoch
  std::optional<MetricReport> dev;
  bool best = false;

  nlohmann::json to_json() const;
};

template <typename T>
std::vector<std::vector<PredictedEntity>> predict_all(const Seq2SetModel<T>& model, std::span<const Sentence> corpus,
                                                      std::optional<double> null_threshold = std::nullopt);

template <typename T>
MetricReport evaluate(const Seq2SetModel<T>& model, std::span<const Sentence> corpus,
                      std::optional<double> null_threshold = std::nullopt);

// Loss of one sentence under the configured loss mode. `gold` is used in
// the order given.
template <typename T>
ad::Var<T> sentence_loss(const PredictionSet<T>& pred, std::span<const Entity> gold, int null_category,
                         const TrainConfig& config);

// Owns the model, optimizer and the single RNG stream. The stream is consumed
// in a fixed order: parameter initialization, then per epoch the batch
// shuffle, per-sentence gold shuffles (if enabled) and dropout masks.
template <typename T>
class Trainer {
 public:
  Trainer(RunConfig config, Vocab vocab);

  // One pass over `train`; dev is scored afterwards when non-empty and the
  // parameters are snapshotted whenever dev F1 improves.
  EpochLog run_epoch(std::span<const Sentence> train, std::span<const Sentence> dev);

  // Runs config.train.epochs epochs; `on_epoch` returning false stops early.
  // Afterwards the model holds the best-dev parameters (or the last ones
  // when there is no dev set).
  std::vector<EpochLog> fit(std::span<const Sentence> train, std::span<const Sentence> dev,
                            const std::function<bool(const EpochLog&)>& on_epoch = {});

  Seq2SetModel<T>& model() noexcept { return *model_; }
  const Seq2SetModel<T>& model() const noexcept { return *model_; }
  AdamW<T>& optimizer() noexcept { return optimizer_; }
  const RunConfig& config() const noexcept { return config_; }
  const Vocab& vocab() const noexcept { return vocab_; }
  std::size_t step() const noexcept { return optimizer_.steps(); }
  const std::vector<EpochLog>& history() const noexcept { return history_; }
  double best_dev_f1() const noexcept { return best_f1_; }

  // Restores the best-dev snapshot, if any.
  void restore_best();
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t total_steps(std::size_t train_size) const;
  double train_batch(std::span<const Sentence> train, std::span<const std::size_t> indices);

  RunConfig config_;
  Vocab vocab_;
  std::mt19937_64 rng_;
  std::unique_ptr<Seq2SetModel<T>> model_;
  AdamW<T> optimizer_;
  std::vector<EpochLog> history_;
  std::size_t epoch_ = 0;
  std::size_t total_steps_ = 0;
  double best_f1_ = -1.0;
  std::vector<std::vector<T>> best_params_;
};

// JSON container: {"format", "version", "precision", "step", "config",
// "vocab", "parameters": [{"name", "rows", "cols", "data"}], "optimizer"}.
inline constexpr std::string_view kCheckpointFormat = "seq2set-checkpoint";
inline constexpr int kCheckpointVersion = 1;

template <typename T>
nlohmann::json checkpoint_json(const Seq2SetModel<T>& model, const Vocab& vocab, const RunConfig& config,
                               const AdamW<T>* optimizer);

struct CheckpointData {
  RunConfig config;
  Vocab vocab;
  std::size_t step = 0;
  nlohmann::json document;
};

CheckpointData read_checkpoint(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

// Rebuilds the model and loads every parameter; shapes must match exactly.
template <typename T>
std::unique_ptr<Seq2SetModel<T>> restore_model(const CheckpointData& checkpoint);

struct RunOutcome {
  std::vector<EpochLog> logs;
  double best_dev_f1 = 0.0;
  std::optional<MetricReport> test;
  std::size_t steps = 0;
};

// Trains at the configured precision, scores `test` with the best-dev
// parameters and, when `checkpoint` is non-empty, saves them there.
RunOutcome train_and_evaluate(const RunConfig& config, const Vocab& vocab, std::span<const Sentence> train,
                              std::span<const Sentence> dev, std::span<const Sentence> test,
                              const std::filesystem::path& checkpoint = {},
                              const std::function<bool(const EpochLog&)>& on_epoch = {});

}  // namespace seq2set
