// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// BatchTopK sparse autoencoder.
//
//   f(x)  = BatchTopK(ReLU(W_enc x + b_enc), k)
//   x_hat = f(x) W_dec + b_dec
//
// trained on the mean squared L2 reconstruction error with AdamW. BatchTopK
// keeps the N*k largest positive activations of a flattened N-sample batch.
// Latents that never fire on a held-out split are periodically re-initialized.
//
// All arithmetic is double precision; the training data may be stored as
// float to halve its footprint.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lmslice/error.hpp"

namespace lmslice::sae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using DataMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TrainError : public Error {
 public:
  using Error::Error;
};

// Encoder and decoder weights. Both matrices are d_hid x d_in: row j of
// w_enc reads latent j from the input, row j of w_dec is latent j's
// dictionary atom.
struct SaeParams {
  Matrix w_enc;
  Vector b_enc;
  Matrix w_dec;
  Vector b_dec;

  static SaeParams zeros(std::size_t d_in, std::size_t d_hid);

  std::size_t d_in() const { return static_cast<std::size_t>(w_enc.cols()); }
  std::size_t d_hid() const { return static_cast<std::size_t>(w_enc.rows()); }

  // Throws ShapeError if the tensors disagree, TrainError on non-finite values.
  void validate() const;

  bool operator==(const SaeParams& o) const;
};

struct TrainConfig {
  std::size_t d_in = 770;
  std::size_t d_hid = 3000;
  std::size_t k = 50;
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  double adam_epsilon = 1e-8;
  std::size_t reset_interval_steps = 30000;
  double dead_fraction_threshold = 0.15;
  std::size_t total_steps = 100000;
  std::uint64_t seed = 0;
  // Held-out split used for dead-latent detection and evaluation loss.
  double eval_fraction = 0.05;
  std::size_t max_eval_samples = 8192;
  // Steps between training-log entries; 0 logs only at reset checks and the end.
  std::size_t log_interval = 0;

  void validate() const;
};

struct OptimizerState {
  SaeParams m;
  SaeParams v;
  std::uint64_t step = 0;

  static OptimizerState for_params(const SaeParams& p);
};

// Unit-norm random decoder rows, encoder rows equal to them, zero biases.
SaeParams init_params(std::size_t d_in, std::size_t d_hid, Rng& rng);

// ReLU(W_enc x + b_enc) for one sample.
Vector encode(const Vector& x, const SaeParams& p);
// Row-wise encode of an N x d_in batch.
Matrix encode_batch(const Matrix& x, const SaeParams& p);

// Keeps the N*k largest positive entries of the flattened batch (or every
// positive entry, if there are fewer). Ties at the cut are broken toward the
// smaller row-major index. Non-positive entries become zero.
Matrix batch_topk(const Matrix& a, std::size_t k);

// f W_dec + b_dec for one sample.
Vector decode(const Vector& f, const SaeParams& p);
Matrix decode_batch(const Matrix& f, const SaeParams& p);

// encode -> batch_topk -> decode
Matrix reconstruct(const Matrix& x, const SaeParams& p, std::size_t k);

// Mean over the batch of the squared L2 reconstruction error.
double reconstruction_loss(const Matrix& x, const SaeParams& p, std::size_t k);

struct LossAndGradient {
  double loss = 0.0;
  SaeParams grad;
};

// Analytic gradient of reconstruction_loss. Only activations kept by
// batch_topk propagate gradient back into the encoder.
LossAndGradient loss_and_gradient(const Matrix& x, const SaeParams& p, std::size_t k);

// One AdamW step (decoupled weight decay, bias-corrected moments). Returns
// the pre-update loss. Throws TrainError on a non-finite loss or gradient.
double train_step(const Matrix& x, SaeParams& p, OptimizerState& opt, const TrainConfig& cfg);

// Latents with no nonzero activation after batch_topk on any sample of the
// evaluation set, processed in consecutive batches of batch_size rows.
std::vector<std::size_t> detect_dead_latents(const DataMatrix& eval, const SaeParams& p,
                                             std::size_t k, std::size_t batch_size);

// Re-initializes each dead latent j: w_dec row j <- random unit vector u,
// w_enc row j <- u, b_enc[j] <- 0, and zeroes the optimizer moments of
// those slices. Everything else is left untouched.
void reset_dead_latents(std::span<const std::size_t> dead, SaeParams& p, OptimizerState* opt,
                        Rng& rng);

struct TrainLogEntry {
  std::uint64_t step = 0;
  double loss = 0.0;           // mean training loss since the previous entry
  double dead_fraction = 0.0;  // on the held-out split
  bool reset = false;
  std::size_t latents_reset = 0;
};

struct TrainResult {
  SaeParams params;
  std::vector<TrainLogEntry> log;
  std::vector<double> step_losses;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  std::size_t total_resets = 0;
  std::size_t train_samples = 0;
  std::size_t eval_samples = 0;
};

// Batch-wise mean loss over the rows of `data`, in row order.
double evaluate_loss(const DataMatrix& data, const SaeParams& p, std::size_t k,
                     std::size_t batch_size);

// Trains on the rows of `data` (one feature vector per row).
TrainResult train(const DataMatrix& data, const TrainConfig& cfg);

void write_train_log(const std::filesystem::path& path, std::span<const TrainLogEntry> log);

// Checkpoint: d_in, d_hid, k, step, seed as u64, then w_enc, b_enc, w_dec,
// b_dec as row-major f64, all little-endian.
struct Checkpoint {
  SaeParams params;
  std::uint64_t k = 0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// (word_id, activation) pairs for one latent.
using ActivationList = std::vector<std::pair<std::uint64_t, double>>;

using ActivationVisitor =
    std::function<void(std::uint64_t word_id, std::size_t latent, double activation)>;

// Runs encode -> batch_topk over consecutive batches of `batch_size` rows
// and reports every nonzero activation, batch by batch, row-major.
void featurize(const DataMatrix& data, std::span<const std::uint64_t> word_ids,
               const SaeParams& p, std::size_t k, std::size_t batch_size,
               const ActivationVisitor& visit);

// Same as featurize(), collected per latent.
std::vector<ActivationList> featurize_lists(const DataMatrix& data,
                                            std::span<const std::uint64_t> word_ids,
                                            const SaeParams& p, std::size_t k,
                                            std::size_t batch_size);

// Streams a corpus file, building feature vectors with the given probability
// scale, and reports nonzero activations without holding the corpus in memory.
void featurize_corpus(const std::filesystem::path& corpus_path, const SaeParams& p,
                      std::size_t k, std::size_t batch_size, double prob_scale,
                      const ActivationVisitor& visit);

// Loads every feature vector of a corpus into a float matrix, with the ids.
std::pair<DataMatrix, std::vector<std::uint64_t>> load_feature_matrix(
    const std::filesystem::path& corpus_path, double prob_scale);

}  // namespace lmslice::sae
