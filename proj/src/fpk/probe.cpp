#include "fpk/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpk/bytes.hpp"
#include "fpk/error.hpp"
#include "fpk/metrics.hpp"
#include "fpk/protocols.hpp"
#include "fpk/rng.hpp"

namespace fpk {

namespace {

constexpr std::string_view kProbeMagic = "FPKP";
constexpr std::uint32_t kProbeVersion = 1;

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void require_both_labels(std::span<const int> labels, std::string_view what) {
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l == 1) pos = true;
    else if (l == 0) neg = true;
    else fail(ErrorCode::kInvalidArgument, std::string(what) + ": labels must be 0/1");
  }
  if (!pos || !neg) fail(ErrorCode::kSingleClassSplit, std::string(what) + " split lacks one class");
}

}  // namespace

void ProbeConfig::validate() const {
  if (epochs == 0 || batch_size == 0) fail(ErrorCode::kInvalidArgument, "epochs and batch_size must be positive");
  if (!(learning_rate > 0.0)) fail(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCode::kInvalidArgument, "momentum must be in [0,1)");
  if (!(l2_reg >= 0.0)) fail(ErrorCode::kInvalidArgument, "l2_reg must be non-negative");
}

LossAndGrad logistic_loss_and_grad(std::span<const double> w, double b, const Matrix& x, std::span<const int> y,
                                   double l2_reg, std::span<const std::size_t> rows) {
  const auto dim = static_cast<std::size_t>(x.cols());
  if (w.size() != dim) fail(ErrorCode::kDimMismatch, "weight length != feature dim");
  if (y.size() != static_cast<std::size_t>(x.rows())) fail(ErrorCode::kDimMismatch, "label count != rows");
  const std::size_t n = rows.empty() ? y.size() : rows.size();
  LossAndGrad out;
  out.grad_w.assign(dim, 0.0);
  if (n == 0) fail(ErrorCode::kEmptySelection, "loss over zero rows");
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = rows.empty() ? k : rows[k];
    auto xi = row_span(x, static_cast<Eigen::Index>(i));
    const double z = dot(w, xi) + b;
    out.loss += softplus(z) - y[i] * z;
    const double r = sigmoid(z) - y[i];
    for (std::size_t j = 0; j < dim; ++j) out.grad_w[j] += r * xi[j];
    out.grad_b += r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  out.grad_b *= inv_n;
  double sq = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    out.grad_w[j] = out.grad_w[j] * inv_n + l2_reg * w[j];
    sq += w[j] * w[j];
  }
  out.loss += 0.5 * l2_reg * sq;
  return out;
}

LinearProbe train_probe(const TrainingSet& train, const ProbeConfig& config, const EpochEvaluator& evaluate) {
  config.validate();
  const auto n = static_cast<std::size_t>(train.x.rows());
  const auto dim = static_cast<std::size_t>(train.x.cols());
  if (train.labels.size() != n) fail(ErrorCode::kDimMismatch, "train label count != rows");
  if (n == 0) fail(ErrorCode::kEmptySelection, "empty train split");
  require_both_labels(train.labels, "train");

  LinearProbe current;
  current.weights.assign(dim, 0.0);
  std::vector<double> velocity_w(dim, 0.0);
  double velocity_b = 0.0;

  LinearProbe best;
  double best_auc = -1.0;
  std::vector<double> history;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, epoch));
    rng.shuffle(std::span(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      auto lg = logistic_loss_and_grad(current.weights, current.bias, train.x, train.labels, config.l2_reg, batch);
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      for (std::size_t j = 0; j < dim; ++j) {
        velocity_w[j] = config.momentum * velocity_w[j] + lg.grad_w[j];
        current.weights[j] -= config.learning_rate * velocity_w[j];
      }
      velocity_b = config.momentum * velocity_b + lg.grad_b;
      current.bias -= config.learning_rate * velocity_b;
    }
    bool finite = std::isfinite(epoch_loss) && std::isfinite(current.bias);
    for (double v : current.weights) finite = finite && std::isfinite(v);
    if (!finite)
      fail(ErrorCode::kNonFiniteLoss, "training diverged at epoch " + std::to_string(epoch) +
                                          " (learning rate too high?)");

    const double auc = evaluate(current, epoch);
    history.push_back(auc);
    if (auc > best_auc) {
      best_auc = auc;
      best = current;
      best.best_epoch = epoch;
    }
  }
  best.val_auc_history = std::move(history);
  return best;
}

LinearProbe train_probe(const TrainingSet& train, const ValidationSet& val, const ProbeConfig& config) {
  if (val.labels.size() != static_cast<std::size_t>(val.x.rows()) || val.video_ids.size() != val.labels.size())
    fail(ErrorCode::kDimMismatch, "validation labels/video ids do not match rows");
  if (val.labels.empty()) fail(ErrorCode::kEmptySelection, "empty validation split");
  require_both_labels(val.labels, "validation");
  return train_probe(train, config, [&](const LinearProbe& snapshot, std::size_t) {
    auto frames = score_frames(snapshot, val.x);
    auto videos = aggregate_video(frames, val.video_ids, val.labels);
    return roc_auc(videos.as_scored_set());
  });
}

std::vector<double> score_frames(const LinearProbe& probe, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != probe.weights.size())
    fail(ErrorCode::kDimMismatch, "probe dim " + std::to_string(probe.weights.size()) + " != feature dim " +
                                      std::to_string(x.cols()));
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = dot(probe.weights, row_span(x, i)) + probe.bias;
  return out;
}

std::vector<std::uint8_t> encode_probe(const LinearProbe& probe) {
  ByteWriter w;
  w.put_magic(kProbeMagic);
  w.put_u32(kProbeVersion);
  w.put_u32(static_cast<std::uint32_t>(probe.weights.size()));
  for (double v : probe.weights) w.put_f64(v);
  w.put_f64(probe.bias);
  w.put_u32(static_cast<std::uint32_t>(probe.best_epoch));
  w.put_u32(static_cast<std::uint32_t>(probe.val_auc_history.size()));
  for (double v : probe.val_auc_history) w.put_f64(v);
  auto digest = sha256(w.bytes());
  w.put_bytes(digest);
  return w.take();
}

LinearProbe decode_probe(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorCode::kTruncatedFile, "probe file too short");
  ByteReader r(bytes);
  if (r.get_magic() != kProbeMagic) fail(ErrorCode::kBadMagic, "not an FPKP probe file");
  if (bytes.size() < 4 + 4 + 4 + 8 + 4 + 4 + 32) fail(ErrorCode::kTruncatedFile, "probe file too short");
  if (r.get_u32() != kProbeVersion) fail(ErrorCode::kVersionUnsupported, "probe version");
  auto stored = bytes.last(32);
  auto actual = sha256(bytes.first(bytes.size() - 32));
  if (!std::equal(actual.begin(), actual.end(), stored.begin())) fail(ErrorCode::kDigestMismatch, "probe digest");
  ByteReader body(bytes.first(bytes.size() - 32));
  body.get_bytes(8);
  LinearProbe p;
  p.weights.resize(body.get_u32());
  if (p.weights.size() > body.remaining() / 8) fail(ErrorCode::kTruncatedFile, "weights truncated");
  for (auto& v : p.weights) v = body.get_f64();
  p.bias = body.get_f64();
  p.best_epoch = body.get_u32();
  p.val_auc_history.resize(body.get_u32());
  if (p.val_auc_history.size() * 8 != body.remaining()) fail(ErrorCode::kTruncatedFile, "history truncated");
  for (auto& v : p.val_auc_history) v = body.get_f64();
  return p;
}

Digest probe_digest(const LinearProbe& probe) {
  auto bytes = encode_probe(probe);
  Digest d{};
  std::copy(bytes.end() - 32, bytes.end(), d.begin());
  return d;
}

void write_probe(const LinearProbe& probe, const std::filesystem::path& path) {
  write_file_atomic(path, encode_probe(probe));
}

LinearProbe read_probe(const std::filesystem::path& path) {
  try {
    return decode_probe(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace fpk
