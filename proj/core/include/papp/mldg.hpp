#pragma once

// Backbone training over site domains (meta-train / meta-test split per
// epoch with a first-order combined update), self-supervised fine-tuning,
// single-site training and evaluation.

#include "papp/channel.hpp"
#include "papp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace papp {

struct RateTriple {
  double alpha = 0.0;    // inner (meta-train) step
  double beta = 0.0;     // weight of the meta-test gradient
  double epsilon = 0.0;  // outer step
};

struct LearningRates {
  RateTriple teacher{1e-1, 1e-2, 1e-2};
  RateTriple feature{1e-1, 1e-2, 1e-2};
  RateTriple student{1e-2, 1e-3, 1e-3};
  /// Throws ConfigError unless alpha, epsilon > 0 and beta >= 0.
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  LearningRates rates;
  std::size_t batch_size = 1000;
  int epochs = 10;
  /// Batches drawn per domain per epoch; 0 derives it from the smallest
  /// domain (size / batch_size, at least one).
  std::size_t steps_per_epoch = 0;
  std::size_t meta_train_domains = 5;
  std::size_t meta_test_domains = 2;
  double lambda = 0.1;
  double rate_threshold = 0.8;
  double snr_db = 20.0;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

/// One site's samples with their WMMSE reference rates at the training SNR.
struct Domain {
  Dataset data;
  std::vector<double> r_wmmse;
};

struct Batch {
  std::vector<ChannelMatrix> h;
  std::vector<double> r_wmmse;
};

/// Gradients for the three parameter groups.
struct GroupGrads {
  ad::GradSet feature, teacher, student;
  static GroupGrads zeros(const PappModel& model);
};

struct PhaseResult {
  GroupGrads grads;  // averaged over the phase's domains
  double teacher_loss = 0.0;
  double student_loss = 0.0;
  double teacher_rate = 0.0;
  double student_rate = 0.0;
  std::size_t degenerate = 0;
  std::size_t isolation_checks = 0;
  std::size_t isolation_violations = 0;
  std::vector<ModelGraph::StatsRecord> stats;
};

struct DomainSplit {
  std::vector<std::size_t> train;  // sorted indices
  std::vector<std::size_t> gen;    // sorted indices
};

/// Random disjoint cover of n_domains indices with the requested sizes.
DomainSplit split_domains(std::size_t n_domains, std::size_t n_train, std::size_t n_gen, Rng& rng);

/// Deterministic batch of one domain for (epoch, step): an epoch-seeded
/// shuffle of the domain, read in consecutive windows.
Batch draw_batch(const Domain& domain, std::size_t domain_index, int epoch, std::size_t step,
                 std::size_t batch_size, std::uint64_t seed);

/// Dropout seed for a (epoch, step, domain, phase) forward pass.
std::uint64_t dropout_seed(std::uint64_t seed, int epoch, std::size_t step, std::size_t domain, int phase);

/// Averaged teacher and student gradients at `model` over the given batches.
/// The student loss is back-propagated separately from the teacher loss;
/// every call checks that it leaves the feature extractor untouched.
PhaseResult phase_gradients(const PappModel& model, std::span<const Batch> batches,
                            std::span<const std::uint64_t> seeds, const TrainConfig& config);

struct MetaTrainResult {
  PappModel primed;
  PhaseResult phase;
};

MetaTrainResult meta_train_phase(const PappModel& model, std::span<const Batch> batches,
                                 std::span<const std::uint64_t> seeds, const TrainConfig& config);
PhaseResult meta_test_phase(const PappModel& primed, std::span<const Batch> batches,
                            std::span<const std::uint64_t> seeds, const TrainConfig& config);

/// Theta <- Theta - eps_T (d_T + beta_T d'_T); Pi uses the teacher gradients
/// with the feature rates; Phi <- Phi - eps_S (d_S + beta_S d'_S).
void meta_update(PappModel& model, const GroupGrads& meta_train, const GroupGrads& meta_test,
                 const LearningRates& rates);

struct EpochMetrics {
  int epoch = 0;
  double teacher_loss = 0.0;       // meta-train average
  double student_loss = 0.0;
  double meta_test_teacher_loss = 0.0;
  double meta_test_student_loss = 0.0;
  double teacher_rate = 0.0;
  double student_rate = 0.0;
  std::size_t degenerate = 0;
};

struct TrainReport {
  std::uint64_t seed = 0;
  int start_epoch = 0;
  std::vector<EpochMetrics> epochs;
  std::size_t isolation_checks = 0;
  std::size_t isolation_violations = 0;
  double wall_clock_s = 0.0;
  std::uint32_t final_checksum = 0;

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

using EpochCallback = std::function<void(const PappModel&, const EpochMetrics&)>;

/// Runs epochs [start_epoch, config.epochs). Every source of randomness is
/// derived from (seed, epoch, step, ...) so a run resumed from an epoch
/// boundary continues exactly as an unbroken one. A non-finite loss throws
/// NumericError.
TrainReport train_backbone(PappModel& model, std::span<const Domain> domains, const TrainConfig& config,
                           int start_epoch = 0, const EpochCallback& on_epoch = {});

struct FineTuneConfig {
  int epochs = 20;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  bool augment = true;
  /// Variants per sample when augmenting: the sample itself plus
  /// augment_factor - 1 random user permutations.
  std::size_t augment_factor = 4;
  double snr_db = 20.0;
  bool dropout = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FineTuneReport {
  std::vector<double> epoch_loss;
  std::size_t samples_seen = 0;  // after augmentation
  std::size_t steps = 0;
};

/// Self-supervised adaptation of the feature extractor and the student with
/// loss -sum_rate; the teacher is left untouched.
FineTuneReport fine_tune(PappModel& model, const Dataset& local, const FineTuneConfig& config);

/// Feature extractor + student trained from initialization on one site with
/// the self-supervised loss only.
FineTuneReport train_single_site(PappModel& model, const Dataset& site, const FineTuneConfig& config);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> per_sample;
};

EvalResult summarize_rates(std::vector<double> rates);
/// Student precoders in evaluation mode.
EvalResult evaluate(const PappModel& model, const Dataset& data, double snr_db);
EvalResult evaluate_zf(const Dataset& data, double snr_db);
EvalResult evaluate_wmmse(const Dataset& data, double snr_db, const WmmseOptions& options = {});

/// Per-sample WMMSE reference rates for a dataset at several SNRs, bound to
/// the dataset file's checksum.
struct RateSidecar {
  std::uint32_t dataset_crc = 0;
  std::vector<double> snr_db;
  std::vector<std::vector<double>> rates;  // [snr][sample]

  const std::vector<double>& at(double snr) const;
};

RateSidecar compute_sidecar(const Dataset& data, std::uint32_t dataset_crc, std::span<const double> snrs,
                            const WmmseOptions& options = {});
void save_sidecar(const RateSidecar& sidecar, const std::filesystem::path& path);
RateSidecar load_sidecar(const std::filesystem::path& path);

}  // namespace papp
