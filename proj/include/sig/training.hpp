#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sig/batch.hpp"
#include "sig/discriminator.hpp"
#include "sig/generator.hpp"
#include "sig/metrics.hpp"
#include "sig/nn/optim.hpp"

namespace sig {

struct TrainConfig {
  double lambda_sup = 0.0;
  int epochs = 100;
  int batch_size = 32;
  int d_steps = 1;  // discriminator updates per generator update
  std::uint64_t seed = 1;
  bool adversarial_on = true;
  int eval_interval = 10;  // epochs between metric rows; 0 disables
  int save_interval = 0;   // epochs between checkpoints; 0 disables
  int eval_samples = 0;    // samples used for metrics; 0 = whole dataset
  nn::AdamConfig adam_g{1e-4, 0.5, 0.999, 1e-8};
  nn::AdamConfig adam_d{4e-4, 0.5, 0.999, 1e-8};

  /// Throws ConfigError when no loss is active or a setting is out of range.
  void validate() const;
};

/// max(0, 1 + fake) + max(0, 1 − real), averaged over the batch.
Var d_loss(Graph& g, Var real_scores, Var fake_scores);

/// Mean over every entry of (Ŷ − Y)² with Y the one-hot targets; throws
/// ShapeError when step counts or widths disagree.
Var supervision_loss(Graph& g, std::span<const Var> relaxed, const TokenMat& target, int num_actions);

struct GeneratorLosses {
  Var total;
  Var adversarial;  // −mean fake score; invalid when adversarial training is off
  Var supervision;  // always computed for reporting
};

/// −mean(fake) + λ_sup · supervision, dropping whichever term is switched off.
GeneratorLosses g_loss(Graph& g, Var fake_scores, std::span<const Var> relaxed, const TokenMat& target,
                       int num_actions, double lambda_sup, bool adversarial_on);

struct StepStats {
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_sup = 0.0;
};

struct MetricsRow {
  int epoch = 0;
  double h_m = 0.0;
  double h_c = 0.0;
  double is = 1.0;
  double sfid = 0.0;  // NaN without an inception model
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_sup = 0.0;
};

/// Append-safe metrics CSV. A new file gets a version comment and the column
/// header; an existing file must carry the same header or InputError is
/// thrown.
class MetricsCsv {
 public:
  static constexpr const char* kVersionLine = "# sig-metrics v1";
  static constexpr const char* kHeader = "epoch,h_m,h_c,is,sfid,d_loss,g_adv,g_sup";

  explicit MetricsCsv(std::filesystem::path path);
  void append(const MetricsRow& row);
  static std::vector<MetricsRow> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
};

/// Generated continuations of a dataset, one sequence per person.
struct Continuations {
  std::vector<metrics::Sequence> target;    // ŷ (horizon steps)
  std::vector<metrics::Sequence> full;      // [x; ŷ]
};

/// Adversarial trainer owning a generator and a discriminator with separate
/// parameter stores. Batches never mix person counts.
class Trainer {
 public:
  Trainer(const GeneratorConfig& gen, const DiscriminatorConfig& disc, const TrainConfig& cfg,
          std::vector<actions::Interaction> data);

  Generator& generator() noexcept { return gen_; }
  Discriminator& discriminator() noexcept { return disc_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const std::vector<actions::Interaction>& data() const noexcept { return data_; }
  int epoch() const noexcept { return epoch_; }
  std::uint64_t step() const noexcept { return step_; }

  /// d_steps discriminator updates and one generator update on `batch`.
  /// Noise streams derive from (seed, step). Throws NumericalError with a
  /// diagnostic dump when a loss or gradient becomes non-finite.
  StepStats train_step(const Batch& batch);

  /// One seeded shuffle of every person-count bucket, then all batches.
  StepStats run_epoch();

  /// Runs cfg.epochs epochs from the current epoch. `on_row` receives a
  /// metrics row every eval_interval epochs; `on_save` is called every
  /// save_interval epochs.
  void train(const std::function<void(const MetricsRow&)>& on_row,
             const std::function<void(const Trainer&)>& on_save = {});

  /// Metrics of the current generator on the evaluation subset.
  MetricsRow evaluate(const StepStats& last);

  /// Optional frozen model for SFID during training.
  void set_inception(std::shared_ptr<metrics::InceptionModel> model) { inception_ = std::move(model); }

  void save(const std::filesystem::path& path) const;
  /// Restores parameters, optimizer state, buffers and counters. The
  /// trainer must have been built with the same model configs.
  void load(const std::filesystem::path& path);

 private:
  std::string diagnostics(const Batch& batch, const std::string& what) const;

  GeneratorConfig gen_cfg_;
  DiscriminatorConfig disc_cfg_;
  TrainConfig cfg_;
  std::vector<actions::Interaction> data_;
  Generator gen_;
  Discriminator disc_;
  std::shared_ptr<metrics::InceptionModel> inception_;
  int epoch_ = 0;
  std::uint64_t step_ = 0;
};

/// Argmax continuations in evaluation mode; noise seeded by `seed`.
Continuations generate_continuations(Generator& gen, std::span<const actions::Interaction> samples,
                                     std::uint64_t seed, int batch_size = 64);

/// Ground-truth sequences of a dataset in the same layout.
Continuations real_sequences(std::span<const actions::Interaction> samples);

/// Model configs stored in (and rebuilt from) a GAN checkpoint.
struct GanModel {
  GeneratorConfig gen;
  DiscriminatorConfig disc;
};
GanModel read_gan_configs(const std::filesystem::path& path);
/// Generator restored from a GAN checkpoint.
Generator load_generator(const std::filesystem::path& path);

}  // namespace sig
