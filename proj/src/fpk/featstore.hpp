#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fpk/digest.hpp"

namespace fpk {

// Dense row-major frame descriptors. Immutable once constructed; every value
// is finite.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> row(std::size_t i) const noexcept { return {values_.data() + i * dim_, dim_}; }
  float at(std::size_t r, std::size_t c) const noexcept { return values_[r * dim_ + c]; }

  // SHA-256 over the little-endian value bytes (the FPK1 payload digest).
  Digest payload_digest() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split) noexcept;
Split parse_split(std::string_view text);

// Manipulation family. Anything outside the four known families is carried
// verbatim as kOther.
class Manipulation {
 public:
  enum class Kind { kReal, kDF, kF2F, kFS, kNT, kOther };

  Manipulation() = default;
  static Manipulation real() { return Manipulation(Kind::kReal, "REAL"); }
  static Manipulation parse(std::string_view code);

  Kind kind() const noexcept { return kind_; }
  bool is_real() const noexcept { return kind_ == Kind::kReal; }
  const std::string& code() const noexcept { return code_; }

  friend bool operator==(const Manipulation& a, const Manipulation& b) { return a.code_ == b.code_; }
  friend auto operator<=>(const Manipulation& a, const Manipulation& b) { return a.code_ <=> b.code_; }

 private:
  Manipulation(Kind kind, std::string code) : kind_(kind), code_(std::move(code)) {}
  Kind kind_ = Kind::kReal;
  std::string code_ = "REAL";
};

// The four families used by default for leave-one-manipulation-out folds.
std::vector<Manipulation> standard_manipulations();

struct SampleRecord {
  std::uint64_t row_index = 0;
  std::string video_id;
  int label = 0;  // 0 = real, 1 = fake
  Manipulation manipulation;
  std::string source;
  Split split = Split::kTrain;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct SampleManifest {
  std::vector<SampleRecord> records;
  Digest content_hash{};
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return records.size(); }
  friend bool operator==(const SampleManifest&, const SampleManifest&) = default;
};

inline constexpr std::string_view kManifestHeader = "row_index,video_id,label,manipulation,source,split";

// Header line plus one line per record, each '\n'-terminated. The manifest
// content hash is SHA-256 of exactly this text.
std::string canonical_records(std::span<const SampleRecord> records);
Digest hash_records(std::span<const SampleRecord> records);

// Checks every SampleManifest invariant except the stored hash; throws on the
// first violation.
void validate_records(std::span<const SampleRecord> records);

// Validates the records and stamps the content hash.
SampleManifest make_manifest(std::vector<SampleRecord> records, std::uint64_t seed);

void write_manifest(const SampleManifest& manifest, const std::filesystem::path& path);
SampleManifest parse_manifest(std::string_view text);
SampleManifest load_manifest(const std::filesystem::path& path);

void write_features(const FeatureMatrix& matrix, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const FeatureMatrix& matrix);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes);
FeatureMatrix read_features(const std::filesystem::path& path);

// Verifies that the manifest indexes the matrix one-to-one.
void check_paired(const FeatureMatrix& matrix, const SampleManifest& manifest);

using RecordFilter = std::function<bool(const SampleRecord&)>;

// Sub-matrix and sub-manifest of the matching records, in manifest order.
// Row indices in the returned manifest are renumbered to address the
// returned matrix.
std::pair<FeatureMatrix, SampleManifest> select_rows(const FeatureMatrix& matrix, const SampleManifest& manifest,
                                                     const RecordFilter& predicate);

// Same as select_rows but by record position.
std::pair<FeatureMatrix, SampleManifest> select_positions(const FeatureMatrix& matrix,
                                                          const SampleManifest& manifest,
                                                          std::span<const std::size_t> positions);

}  // namespace fpk
