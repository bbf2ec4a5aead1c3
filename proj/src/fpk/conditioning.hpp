#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpk/digest.hpp"
#include "fpk/featstore.hpp"
#include "fpk/linalg.hpp"

namespace fpk {

enum class ConditionKind : std::uint8_t { kLN = 0, kLNAffine = 1, kL2 = 2, kFeatureStd = 3, kPCAWhiten = 4 };

// Display names: "LN", "LN-Affine", "L2", "Feature-Std", "PCA-Whiten".
std::string_view condition_name(ConditionKind kind) noexcept;
// Accepts display names and the enum spellings (LN_AFFINE, FEATURE_STD, ...).
ConditionKind parse_condition(std::string_view text);
std::vector<ConditionKind> all_conditions();

inline constexpr double kSigmaFloor = 1e-8;

struct ConditionerConfig {
  ConditionKind kind = ConditionKind::kLN;
  double ln_eps = 1e-6;
  double pca_eps = 1e-5;
  std::optional<std::size_t> pca_components;  // nullopt = full rank
  std::optional<std::filesystem::path> affine_source;

  void validate() const;
  friend bool operator==(const ConditionerConfig&, const ConditionerConfig&) = default;
};

// A fitted (or parameter-free) conditioning transform. Only the fields used
// by `config.kind` are populated.
struct ConditionerState {
  ConditionerConfig config;
  std::size_t input_dim = 0;
  Vector mean;         // FEATURE_STD, PCA_WHITEN
  Vector stddev;       // FEATURE_STD
  Vector gamma;        // LN_AFFINE
  Vector beta;         // LN_AFFINE
  Matrix components;   // PCA_WHITEN, dim x k, columns are eigenvectors
  Vector eigenvalues;  // PCA_WHITEN, descending, >= 0
  Digest fit_key{};

  std::size_t output_dim() const;
  friend bool operator==(const ConditionerState& a, const ConditionerState& b);
};

std::vector<double> apply_ln(std::span<const double> x, double ln_eps);
std::vector<double> apply_ln_affine(std::span<const double> x, const ConditionerState& state);
std::vector<double> apply_l2(std::span<const double> x);
std::vector<double> apply_feature_std(std::span<const double> x, const ConditionerState& state);
std::vector<double> apply_pca_whiten(std::span<const double> x, const ConditionerState& state);

// Key identifying a fit: train manifest hash, train feature payload and the
// config (including the affine sidecar contents, when one is named).
Digest compute_fit_key(const FeatureMatrix& train, const ConditionerConfig& config, const Digest& train_manifest_hash);

ConditionerState fit_feature_std(const FeatureMatrix& train, const ConditionerConfig& config,
                                 const Digest& train_manifest_hash = {});
ConditionerState fit_pca_whiten(const FeatureMatrix& train, const ConditionerConfig& config,
                                const Digest& train_manifest_hash = {});
ConditionerState fit_conditioner(const FeatureMatrix& train, const ConditionerConfig& config,
                                 const Digest& train_manifest_hash = {});

// Dispatches to the apply_* op matching the state's kind.
std::vector<double> apply_conditioner(const ConditionerState& state, std::span<const double> x);
std::vector<double> apply_conditioner(const ConditionerState& state, std::span<const float> x);

// Conditions selected rows; `rows` empty means all rows.
Matrix condition_matrix(const ConditionerState& state, const FeatureMatrix& features,
                        std::span<const std::size_t> rows = {});

// Affine sidecar: "FPKA", u32 dim, f32 gamma[dim], f32 beta[dim].
struct AffineParams {
  std::vector<float> gamma;
  std::vector<float> beta;
};
void write_affine(const AffineParams& params, const std::filesystem::path& path);
AffineParams read_affine(const std::filesystem::path& path);

// Cache entry encoding: "FPKC", u32 version, config, statistics, digest.
std::vector<std::uint8_t> encode_state(const ConditionerState& state);
ConditionerState decode_state(std::span<const std::uint8_t> bytes);
Digest state_digest(const ConditionerState& state);

std::filesystem::path cache_path(const Digest& fit_key, const std::filesystem::path& cache_dir);
void cache_put(const ConditionerState& state, const std::filesystem::path& cache_dir);
std::optional<ConditionerState> cache_get(const Digest& fit_key, const std::filesystem::path& cache_dir);

// Cache-aware fit: returns the cached state on a key hit.
ConditionerState fit_or_load(const FeatureMatrix& train, const ConditionerConfig& config,
                             const Digest& train_manifest_hash, const std::filesystem::path& cache_dir,
                             bool* cache_hit = nullptr);

}  // namespace fpk
