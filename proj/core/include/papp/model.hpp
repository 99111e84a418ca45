#pragma once

// Teacher-student deep precoder: a shared convolutional feature extractor
// feeding (a) a teacher that predicts WMMSE auxiliaries (u, v, mu) and
// rebuilds a precoder with one differentiable WMMSE transmit step, and (b) a
// student that emits the precoding matrix directly.

#include "papp/autodiff.hpp"
#include "papp/precoding.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace papp {

struct ModelConfig {
  int n_tx = 64;
  int n_users = 4;
  double p_max = 1.0;
  int conv_channels = 32;
  int kernel = 3;
  std::vector<int> teacher_hidden{512, 512};
  std::vector<int> student_hidden{64, 64, 512};
  double dropout = 0.15;
  double bn_momentum = 0.9;

  SystemConfig system() const { return {n_tx, n_users, p_max}; }
  /// Number of real inputs to the first fully connected layer.
  std::size_t feature_size() const;
  void validate() const;
};

/// Parameter groups. Batch-norm running statistics ride along as
/// non-trainable entries.
struct PappModel {
  ModelConfig config;
  ad::ParameterSet feature;  // Pi
  ad::ParameterSet teacher;  // Theta
  ad::ParameterSet student;  // Phi

  /// Glorot-uniform weights, zero biases, unit batch-norm scale.
  static PappModel init(const ModelConfig& config, std::uint64_t seed);

  ad::Checkpoint to_checkpoint() const;
  static PappModel from_checkpoint(const ad::Checkpoint& ckpt);
  std::uint32_t checksum() const;
};

/// Batched channels as a [B, N_T, N_U] complex pair of constants.
ad::CVar channel_batch(ad::Tape& tape, std::span<const ChannelMatrix> hs);
/// Network input [B, 2, N_T, N_U] (real plane, imaginary plane).
ad::Tensor channel_input(std::span<const ChannelMatrix> hs);
PrecodingMatrix precoder_at(const ad::CVar& w, std::size_t b);

struct TeacherOutputs {
  ad::CVar u;  // [B, N_U]
  ad::Var v;   // [B, N_U]
  ad::Var mu;  // [B]
};

struct Reconstruction {
  ad::CVar w;                      // [B, N_T, N_U]
  std::vector<std::uint8_t> degenerate;  // per sample
};

/// One forward pass over the model on a tape. Binding makes every trainable
/// entry a tape variable (or a constant when `differentiable` is false);
/// training-mode batch-norm statistics are collected for a later
/// apply_running_stats().
class ModelGraph {
 public:
  struct Options {
    bool training = false;
    bool differentiable = true;
    /// Dropout is applied only when both this and `training` are set.
    bool dropout = true;
    /// Skips binding the teacher parameters (student-only passes).
    bool with_teacher = true;
    std::uint64_t dropout_seed = 0;
  };

  ModelGraph(ad::Tape& tape, const PappModel& model, Options options);

  ad::Var features(std::span<const ChannelMatrix> hs);
  TeacherOutputs teacher(ad::Var features);
  /// Raw student output scaled to total power exactly p_max. Throws
  /// DegenerateInputError when a sample's raw output is all zero.
  ad::CVar student(ad::Var features);

  const std::vector<ad::Var>& feature_vars() const { return feature_vars_; }
  const std::vector<ad::Var>& teacher_vars() const { return teacher_vars_; }
  const std::vector<ad::Var>& student_vars() const { return student_vars_; }

  struct StatsRecord {
    int group;  // 0 feature, 1 teacher, 2 student
    std::size_t mean_index;
    ad::BatchStats stats;
  };
  const std::vector<StatsRecord>& batch_stats() const { return stats_; }

 private:
  /// Linear -> batch-norm -> ReLU -> dropout for hidden layer `layer`.
  ad::Var dense_block(int group, const ad::ParameterSet& params, const std::vector<ad::Var>& vars, ad::Var x,
                      int layer);
  ad::Var linear(const ad::ParameterSet& params, const std::vector<ad::Var>& vars, const std::string& name,
                 ad::Var x);

  ad::Tape& tape_;
  const PappModel& model_;
  Options options_;
  std::vector<ad::Var> feature_vars_, teacher_vars_, student_vars_;
  std::vector<StatsRecord> stats_;
};

/// running <- momentum * running + (1 - momentum) * batch, per record.
void apply_running_stats(PappModel& model, const std::vector<ModelGraph::StatsRecord>& stats);

/// One WMMSE transmit step from predicted auxiliaries, followed by scaling
/// down to p_max when the result exceeds it. Samples whose
/// sum_j v_j |u_j|^2 h_j h_j^H + mu I is not positive definite yield a zero
/// precoder and a degenerate flag.
Reconstruction reconstruct_precoder(const ad::CVar& h, const TeacherOutputs& aux, double p_max);

/// Per-sample sum rate [B] in bits/s/Hz.
ad::Var sum_rate_batch(const ad::CVar& h, const ad::CVar& w, double sigma2);

/// -mean sum rate of the teacher precoder.
ad::Var teacher_loss(const ad::CVar& h, const ad::CVar& w_teacher, double sigma2);

/// Per-sample mean squared modulus of W_T - W.
ad::Var mse_batch(const ad::CVar& w, const ad::CVar& w_teacher);

/// Distillation loss averaged over the batch. Per sample: the MSE to the
/// teacher precoder, minus lambda * R(W) once the teacher reaches
/// `threshold` of the WMMSE reference rate. W_T is treated as a constant.
ad::Var student_loss(const ad::CVar& h, const ad::CVar& w, const ad::CVar& w_teacher, double sigma2,
                     std::span<const double> r_wmmse, double lambda, double threshold = 0.8);

/// Convenience inference: student precoders for a set of channels.
std::vector<PrecodingMatrix> student_precoders(const PappModel& model, std::span<const ChannelMatrix> hs);

}  // namespace papp
