#include "fpk/conditioning.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "fpk/bytes.hpp"
#include "fpk/error.hpp"

namespace fpk {

namespace {

constexpr std::string_view kCacheMagic = "FPKC";
constexpr std::uint32_t kCacheVersion = 1;
constexpr std::string_view kAffineMagic = "FPKA";

void require_dim(std::size_t got, std::size_t want, std::string_view what) {
  if (got != want)
    fail(ErrorCode::kDimMismatch,
         std::string(what) + ": got length " + std::to_string(got) + ", expected " + std::to_string(want));
}

void require_rows(const FeatureMatrix& train) {
  if (train.rows() < 2) fail(ErrorCode::kTooFewRows, "fitting needs at least 2 train rows");
}

Vector column_means(const FeatureMatrix& m) {
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(m.dim()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.dim(); ++c) mean[c] += row[c];
  }
  return mean / static_cast<double>(m.rows());
}

void put_config(ByteWriter& w, const ConditionerConfig& c) {
  w.put_u8(static_cast<std::uint8_t>(c.kind));
  w.put_f64(c.ln_eps);
  w.put_f64(c.pca_eps);
  w.put_u64(c.pca_components.value_or(0));
  // The sidecar is identified by its contents (fit key) and its values
  // (state), never by where it happens to live.
}

ConditionerConfig get_config(ByteReader& r) {
  ConditionerConfig c;
  auto kind = r.get_u8();
  if (kind > static_cast<std::uint8_t>(ConditionKind::kPCAWhiten)) fail(ErrorCode::kCacheCorrupt, "bad kind");
  c.kind = static_cast<ConditionKind>(kind);
  c.ln_eps = r.get_f64();
  c.pca_eps = r.get_f64();
  if (auto k = r.get_u64(); k != 0) c.pca_components = k;
  return c;
}

void put_vector(ByteWriter& w, const Vector& v) { w.put_f64s(std::span(v.data(), static_cast<std::size_t>(v.size()))); }

Vector get_vector(ByteReader& r) {
  auto values = r.get_f64s();
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

bool is_parameter_free(ConditionKind kind) {
  return kind == ConditionKind::kLN || kind == ConditionKind::kL2 || kind == ConditionKind::kLNAffine;
}

}  // namespace

std::string_view condition_name(ConditionKind kind) noexcept {
  switch (kind) {
    case ConditionKind::kLN: return "LN";
    case ConditionKind::kLNAffine: return "LN-Affine";
    case ConditionKind::kL2: return "L2";
    case ConditionKind::kFeatureStd: return "Feature-Std";
    case ConditionKind::kPCAWhiten: return "PCA-Whiten";
  }
  return "?";
}

ConditionKind parse_condition(std::string_view text) {
  for (auto kind : all_conditions()) {
    if (text == condition_name(kind)) return kind;
  }
  if (text == "LN_AFFINE") return ConditionKind::kLNAffine;
  if (text == "FEATURE_STD") return ConditionKind::kFeatureStd;
  if (text == "PCA_WHITEN") return ConditionKind::kPCAWhiten;
  fail(ErrorCode::kInvalidArgument, "unknown conditioning kind '" + std::string(text) + "'");
}

std::vector<ConditionKind> all_conditions() {
  return {ConditionKind::kLN, ConditionKind::kLNAffine, ConditionKind::kL2, ConditionKind::kFeatureStd,
          ConditionKind::kPCAWhiten};
}

void ConditionerConfig::validate() const {
  if (!(ln_eps > 0.0) || !(pca_eps > 0.0)) fail(ErrorCode::kInvalidArgument, "eps values must be strictly positive");
  if (pca_components && *pca_components == 0) fail(ErrorCode::kInvalidArgument, "pca_components must be positive");
}

std::size_t ConditionerState::output_dim() const {
  if (config.kind == ConditionKind::kPCAWhiten) return static_cast<std::size_t>(eigenvalues.size());
  return input_dim;
}

bool operator==(const ConditionerState& a, const ConditionerState& b) { return encode_state(a) == encode_state(b); }

std::vector<double> apply_ln(std::span<const double> x, double ln_eps) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double denom = std::sqrt(var + ln_eps);
  std::vector<double> y(x.size(), 0.0);
  if (denom == 0.0) return y;
  for (std::size_t j = 0; j < x.size(); ++j) y[j] = (x[j] - mean) / denom;
  return y;
}

std::vector<double> apply_ln_affine(std::span<const double> x, const ConditionerState& state) {
  require_dim(static_cast<std::size_t>(state.gamma.size()), x.size(), "gamma");
  require_dim(static_cast<std::size_t>(state.beta.size()), x.size(), "beta");
  auto y = apply_ln(x, state.config.ln_eps);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = state.gamma[j] * y[j] + state.beta[j];
  return y;
}

std::vector<double> apply_l2(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) fail(ErrorCode::kZeroVector, "cannot L2-normalize a zero vector");
  std::vector<double> y(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] / norm;
  return y;
}

std::vector<double> apply_feature_std(std::span<const double> x, const ConditionerState& state) {
  require_dim(x.size(), static_cast<std::size_t>(state.mean.size()), "feature-std input");
  std::vector<double> y(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) y[j] = (x[j] - state.mean[j]) / std::max(state.stddev[j], kSigmaFloor);
  return y;
}

std::vector<double> apply_pca_whiten(std::span<const double> x, const ConditionerState& state) {
  require_dim(x.size(), static_cast<std::size_t>(state.mean.size()), "pca-whiten input");
  const auto k = state.eigenvalues.size();
  Vector centered = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())) - state.mean;
  Vector proj = state.components.transpose() * centered;
  std::vector<double> y(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) y[i] = proj[i] / std::sqrt(state.eigenvalues[i] + state.config.pca_eps);
  return y;
}

Digest compute_fit_key(const FeatureMatrix& train, const ConditionerConfig& config, const Digest& train_manifest_hash) {
  ByteWriter w;
  w.put_magic("FPKK");
  put_config(w, config);
  w.put_u64(train.dim());
  if (config.kind == ConditionKind::kLNAffine && config.affine_source) {
    std::error_code ec;
    if (std::filesystem::exists(*config.affine_source, ec)) w.put_bytes(sha256(read_file_bytes(*config.affine_source)));
  }
  if (!is_parameter_free(config.kind)) {
    w.put_bytes(train_manifest_hash);
    w.put_u64(train.rows());
    w.put_bytes(train.payload_digest());
  }
  return sha256(w.bytes());
}

ConditionerState fit_feature_std(const FeatureMatrix& train, const ConditionerConfig& config,
                                 const Digest& train_manifest_hash) {
  require_rows(train);
  ConditionerState s;
  s.config = config;
  s.config.kind = ConditionKind::kFeatureStd;
  s.input_dim = train.dim();
  s.mean = column_means(train);
  Vector var = Vector::Zero(s.mean.size());
  for (std::size_t r = 0; r < train.rows(); ++r) {
    auto row = train.row(r);
    for (std::size_t c = 0; c < train.dim(); ++c) {
      const double d = row[c] - s.mean[c];
      var[c] += d * d;
    }
  }
  s.stddev = (var / static_cast<double>(train.rows())).cwiseSqrt();
  s.fit_key = compute_fit_key(train, s.config, train_manifest_hash);
  return s;
}

ConditionerState fit_pca_whiten(const FeatureMatrix& train, const ConditionerConfig& config,
                                const Digest& train_manifest_hash) {
  require_rows(train);
  const auto dim = static_cast<Eigen::Index>(train.dim());
  if (config.pca_components && *config.pca_components > train.dim())
    fail(ErrorCode::kInvalidArgument, "pca_components exceeds feature dim");
  ConditionerState s;
  s.config = config;
  s.config.kind = ConditionKind::kPCAWhiten;
  s.input_dim = train.dim();
  s.mean = column_means(train);

  Matrix centered(static_cast<Eigen::Index>(train.rows()), dim);
  for (std::size_t r = 0; r < train.rows(); ++r) {
    auto row = train.row(r);
    for (Eigen::Index c = 0; c < dim; ++c) centered(static_cast<Eigen::Index>(r), c) = row[c] - s.mean[c];
  }
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(train.rows());
  cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail(ErrorCode::kEigenFailure, "symmetric eigensolver did not converge");

  const Eigen::Index k = config.pca_components ? static_cast<Eigen::Index>(*config.pca_components) : dim;
  s.eigenvalues.resize(k);
  s.components.resize(dim, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index src = dim - 1 - i;  // solver order is ascending
    s.eigenvalues[i] = std::max(solver.eigenvalues()[src], 0.0);
    Vector v = solver.eigenvectors().col(src);
    // Sign convention: the largest-magnitude entry (first on ties) is positive.
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < dim; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0) v = -v;
    s.components.col(i) = v;
  }
  s.fit_key = compute_fit_key(train, s.config, train_manifest_hash);
  return s;
}

ConditionerState fit_conditioner(const FeatureMatrix& train, const ConditionerConfig& config,
                                 const Digest& train_manifest_hash) {
  config.validate();
  switch (config.kind) {
    case ConditionKind::kFeatureStd: return fit_feature_std(train, config, train_manifest_hash);
    case ConditionKind::kPCAWhiten: return fit_pca_whiten(train, config, train_manifest_hash);
    case ConditionKind::kLN:
    case ConditionKind::kL2: {
      ConditionerState s;
      s.config = config;
      s.input_dim = train.dim();
      s.fit_key = compute_fit_key(train, config, train_manifest_hash);
      return s;
    }
    case ConditionKind::kLNAffine: {
      ConditionerState s;
      s.config = config;
      s.input_dim = train.dim();
      const auto dim = static_cast<Eigen::Index>(train.dim());
      if (config.affine_source) {
        std::error_code ec;
        if (!std::filesystem::exists(*config.affine_source, ec))
          fail(ErrorCode::kAffineFileMissing, config.affine_source->string());
        auto params = read_affine(*config.affine_source);
        require_dim(params.gamma.size(), train.dim(), "affine sidecar");
        s.gamma = Eigen::Map<const Eigen::VectorXf>(params.gamma.data(), dim).cast<double>();
        s.beta = Eigen::Map<const Eigen::VectorXf>(params.beta.data(), dim).cast<double>();
      } else {
        s.gamma = Vector::Ones(dim);
        s.beta = Vector::Zero(dim);
      }
      s.fit_key = compute_fit_key(train, config, train_manifest_hash);
      return s;
    }
  }
  fail(ErrorCode::kInternal, "unhandled conditioning kind");
}

std::vector<double> apply_conditioner(const ConditionerState& state, std::span<const double> x) {
  require_dim(x.size(), state.input_dim, "conditioner input");
  switch (state.config.kind) {
    case ConditionKind::kLN: return apply_ln(x, state.config.ln_eps);
    case ConditionKind::kLNAffine: return apply_ln_affine(x, state);
    case ConditionKind::kL2: return apply_l2(x);
    case ConditionKind::kFeatureStd: return apply_feature_std(x, state);
    case ConditionKind::kPCAWhiten: return apply_pca_whiten(x, state);
  }
  fail(ErrorCode::kInternal, "unhandled conditioning kind");
}

std::vector<double> apply_conditioner(const ConditionerState& state, std::span<const float> x) {
  std::vector<double> wide(x.begin(), x.end());
  return apply_conditioner(state, std::span<const double>(wide));
}

Matrix condition_matrix(const ConditionerState& state, const FeatureMatrix& features, std::span<const std::size_t> rows) {
  require_dim(features.dim(), state.input_dim, "conditioner input");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(features.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dim = static_cast<Eigen::Index>(features.dim());

  if (state.config.kind == ConditionKind::kPCAWhiten) {
    Matrix centered(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto row = features.row(rows[i]);
      for (Eigen::Index c = 0; c < dim; ++c) centered(i, c) = row[c] - state.mean[c];
    }
    Matrix out = centered * state.components;
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out.col(j) /= std::sqrt(state.eigenvalues[j] + state.config.pca_eps);
    return out;
  }

  Matrix out(n, static_cast<Eigen::Index>(state.output_dim()));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto y = apply_conditioner(state, features.row(rows[i]));
    std::copy(y.begin(), y.end(), out.row(i).data());
  }
  return out;
}

void write_affine(const AffineParams& params, const std::filesystem::path& path) {
  if (params.gamma.size() != params.beta.size() || params.gamma.empty())
    fail(ErrorCode::kDimMismatch, "gamma/beta must be non-empty and equal length");
  ByteWriter w;
  w.put_magic(kAffineMagic);
  w.put_u32(static_cast<std::uint32_t>(params.gamma.size()));
  for (float g : params.gamma) w.put_f32(g);
  for (float b : params.beta) w.put_f32(b);
  write_file_atomic(path, w.bytes());
}

AffineParams read_affine(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) fail(ErrorCode::kAffineFileMissing, path.string());
  auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.get_magic() != kAffineMagic) fail(ErrorCode::kBadMagic, path.string() + ": not FPKA");
  auto dim = r.get_u32();
  if (r.remaining() != static_cast<std::size_t>(dim) * 8) fail(ErrorCode::kTruncatedFile, path.string());
  AffineParams p;
  p.gamma.resize(dim);
  p.beta.resize(dim);
  for (auto& g : p.gamma) g = r.get_f32();
  for (auto& b : p.beta) b = r.get_f32();
  for (std::uint32_t j = 0; j < dim; ++j)
    if (!std::isfinite(p.gamma[j]) || !std::isfinite(p.beta[j])) fail(ErrorCode::kNonFiniteValue, path.string());
  return p;
}

std::vector<std::uint8_t> encode_state(const ConditionerState& s) {
  ByteWriter w;
  w.put_magic(kCacheMagic);
  w.put_u32(kCacheVersion);
  put_config(w, s.config);
  w.put_u64(s.input_dim);
  put_vector(w, s.mean);
  put_vector(w, s.stddev);
  put_vector(w, s.gamma);
  put_vector(w, s.beta);
  put_vector(w, s.eigenvalues);
  w.put_u64(static_cast<std::uint64_t>(s.components.rows()));
  w.put_u64(static_cast<std::uint64_t>(s.components.cols()));
  for (Eigen::Index i = 0; i < s.components.size(); ++i) w.put_f64(s.components.data()[i]);
  w.put_bytes(s.fit_key);
  auto digest = sha256(w.bytes());
  w.put_bytes(digest);
  return w.take();
}

ConditionerState decode_state(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 32) fail(ErrorCode::kCacheCorrupt, "cache entry too short");
  auto body = bytes.first(bytes.size() - 32);
  auto stored = bytes.last(32);
  auto actual = sha256(body);
  if (!std::equal(actual.begin(), actual.end(), stored.begin())) fail(ErrorCode::kCacheCorrupt, "digest mismatch");
  ByteReader r(body, ErrorCode::kCacheCorrupt);
  if (r.get_magic() != kCacheMagic) fail(ErrorCode::kCacheCorrupt, "bad magic");
  if (r.get_u32() != kCacheVersion) fail(ErrorCode::kCacheCorrupt, "unsupported cache version");
  ConditionerState s;
  s.config = get_config(r);
  s.input_dim = r.get_u64();
  s.mean = get_vector(r);
  s.stddev = get_vector(r);
  s.gamma = get_vector(r);
  s.beta = get_vector(r);
  s.eigenvalues = get_vector(r);
  auto rows = r.get_u64();
  auto cols = r.get_u64();
  if (cols != 0 && rows > r.remaining() / 8 / cols) fail(ErrorCode::kCacheCorrupt, "component matrix truncated");
  s.components.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < s.components.size(); ++i) s.components.data()[i] = r.get_f64();
  auto key = r.get_bytes(32);
  std::copy(key.begin(), key.end(), s.fit_key.begin());
  if (r.remaining() != 0) fail(ErrorCode::kCacheCorrupt, "trailing bytes");
  return s;
}

Digest state_digest(const ConditionerState& state) { return sha256(encode_state(state)); }

std::filesystem::path cache_path(const Digest& fit_key, const std::filesystem::path& cache_dir) {
  return cache_dir / (to_hex(fit_key) + ".fpkc");
}

void cache_put(const ConditionerState& state, const std::filesystem::path& cache_dir) {
  write_file_atomic(cache_path(state.fit_key, cache_dir), encode_state(state));
}

std::optional<ConditionerState> cache_get(const Digest& fit_key, const std::filesystem::path& cache_dir) {
  auto path = cache_path(fit_key, cache_dir);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  auto state = decode_state(read_file_bytes(path));
  if (state.fit_key != fit_key) fail(ErrorCode::kCacheCorrupt, "entry key does not match file name");
  return state;
}

ConditionerState fit_or_load(const FeatureMatrix& train, const ConditionerConfig& config,
                             const Digest& train_manifest_hash, const std::filesystem::path& cache_dir,
                             bool* cache_hit) {
  config.validate();
  auto key = compute_fit_key(train, config, train_manifest_hash);
  if (auto cached = cache_get(key, cache_dir)) {
    if (cache_hit) *cache_hit = true;
    return std::move(*cached);
  }
  if (cache_hit) *cache_hit = false;
  auto state = fit_conditioner(train, config, train_manifest_hash);
  cache_put(state, cache_dir);
  return state;
}

}  // namespace fpk
