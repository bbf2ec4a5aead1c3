#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fpk/digest.hpp"
#include "fpk/linalg.hpp"

namespace fpk {

struct ProbeConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double l2_reg = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

struct LinearProbe {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t best_epoch = 0;  // 0-based index into val_auc_history
  std::vector<double> val_auc_history;

  friend bool operator==(const LinearProbe&, const LinearProbe&) = default;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

// Mean logistic loss over the rows of `x` plus (l2_reg/2)*|w|^2. `rows`
// empty means all rows.
LossAndGrad logistic_loss_and_grad(std::span<const double> w, double b, const Matrix& x, std::span<const int> y,
                                   double l2_reg, std::span<const std::size_t> rows = {});

struct TrainingSet {
  Matrix x;
  std::vector<int> labels;
};

struct ValidationSet {
  Matrix x;
  std::vector<int> labels;
  std::vector<std::string> video_ids;
};

// Called once per epoch with the end-of-epoch weights; returns that epoch's
// validation AUC.
using EpochEvaluator = std::function<double(const LinearProbe& snapshot, std::size_t epoch)>;

// Mini-batch SGD with momentum. Epoch e shuffles with
// Rng(derive_seed(config.seed, e)). Returns the snapshot of the epoch with the
// highest validation AUC (earliest on ties).
LinearProbe train_probe(const TrainingSet& train, const ProbeConfig& config, const EpochEvaluator& evaluate);

// Validation AUC is computed at video level from mean-aggregated frame scores.
LinearProbe train_probe(const TrainingSet& train, const ValidationSet& val, const ProbeConfig& config);

std::vector<double> score_frames(const LinearProbe& probe, const Matrix& x);

// Checkpoint: "FPKP", u32 version, u32 dim, f64 w[dim], f64 b, u32 best_epoch,
// u32 n, f64 history[n], 32-byte digest of everything before it.
std::vector<std::uint8_t> encode_probe(const LinearProbe& probe);
LinearProbe decode_probe(std::span<const std::uint8_t> bytes);
Digest probe_digest(const LinearProbe& probe);
void write_probe(const LinearProbe& probe, const std::filesystem::path& path);
LinearProbe read_probe(const std::filesystem::path& path);

}  // namespace fpk
