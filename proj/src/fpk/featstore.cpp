#include "fpk/featstore.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fpk/bytes.hpp"
#include "fpk/error.hpp"

namespace fpk {

namespace {

constexpr std::string_view kFeatureMagic = "FPK1";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kDtypeFloat32 = 0;
constexpr std::size_t kFeatureHeaderSize = 4 + 4 + 8 + 4 + 4;

void append_payload(ByteWriter& w, std::span<const float> values) {
  for (float v : values) w.put_f32(v);
}

bool parse_u64(std::string_view text, std::uint64_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool has_separator(std::string_view s) {
  return s.find_first_of(",\r\n") != std::string_view::npos;
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
  if (dim_ == 0) fail(ErrorCode::kDimMismatch, "feature dim must be positive");
  if (values_.size() != rows_ * dim_)
    fail(ErrorCode::kDimMismatch, "value count " + std::to_string(values_.size()) + " != rows*dim");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      fail(ErrorCode::kNonFiniteValue,
           "row " + std::to_string(i / dim_) + " col " + std::to_string(i % dim_) + " is not finite");
  }
}

Digest FeatureMatrix::payload_digest() const {
  ByteWriter w;
  append_payload(w, values_);
  return sha256(w.bytes());
}

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "TRAIN";
    case Split::kVal: return "VAL";
    case Split::kTest: return "TEST";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "TRAIN") return Split::kTrain;
  if (text == "VAL") return Split::kVal;
  if (text == "TEST") return Split::kTest;
  fail(ErrorCode::kSchemaError, "unknown split '" + std::string(text) + "'");
}

Manipulation Manipulation::parse(std::string_view code) {
  if (code.empty() || has_separator(code)) fail(ErrorCode::kSchemaError, "invalid manipulation code");
  std::string s(code);
  if (s == "REAL") return Manipulation(Kind::kReal, s);
  if (s == "DF") return Manipulation(Kind::kDF, s);
  if (s == "F2F") return Manipulation(Kind::kF2F, s);
  if (s == "FS") return Manipulation(Kind::kFS, s);
  if (s == "NT") return Manipulation(Kind::kNT, s);
  return Manipulation(Kind::kOther, s);
}

std::vector<Manipulation> standard_manipulations() {
  return {Manipulation::parse("DF"), Manipulation::parse("F2F"), Manipulation::parse("FS"),
          Manipulation::parse("NT")};
}

std::string canonical_records(std::span<const SampleRecord> records) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.row_index);
    out += ',';
    out += r.video_id;
    out += ',';
    out += std::to_string(r.label);
    out += ',';
    out += r.manipulation.code();
    out += ',';
    out += r.source;
    out += ',';
    out += split_name(r.split);
    out += '\n';
  }
  return out;
}

Digest hash_records(std::span<const SampleRecord> records) { return sha256(canonical_records(records)); }

void validate_records(std::span<const SampleRecord> records) {
  struct VideoInfo {
    int label;
    std::string manipulation;
    std::string source;
    Split split;
  };
  std::unordered_set<std::uint64_t> seen_rows;
  std::unordered_map<std::string, VideoInfo> videos;
  for (const auto& r : records) {
    if (r.video_id.empty() || has_separator(r.video_id) || r.source.empty() || has_separator(r.source))
      fail(ErrorCode::kSchemaError, "row " + std::to_string(r.row_index) + ": empty or malformed id/source");
    if (r.label != 0 && r.label != 1)
      fail(ErrorCode::kSchemaError, "row " + std::to_string(r.row_index) + ": label must be 0 or 1");
    if (!seen_rows.insert(r.row_index).second)
      fail(ErrorCode::kSchemaError, "duplicate row_index " + std::to_string(r.row_index));
    if ((r.label == 0) != r.manipulation.is_real())
      fail(ErrorCode::kLabelInconsistent, "row " + std::to_string(r.row_index) + ": label " +
                                              std::to_string(r.label) + " with manipulation " +
                                              r.manipulation.code());
    auto [it, inserted] = videos.try_emplace(r.video_id, VideoInfo{r.label, r.manipulation.code(), r.source, r.split});
    if (inserted) continue;
    const auto& v = it->second;
    if (v.split != r.split)
      fail(ErrorCode::kSplitLeak, "video '" + r.video_id + "' appears in " + std::string(split_name(v.split)) +
                                      " and " + std::string(split_name(r.split)));
    if (v.label != r.label || v.manipulation != r.manipulation.code() || v.source != r.source)
      fail(ErrorCode::kLabelInconsistent, "video '" + r.video_id + "' has inconsistent label/manipulation/source");
  }
}

SampleManifest make_manifest(std::vector<SampleRecord> records, std::uint64_t seed) {
  validate_records(records);
  SampleManifest m;
  m.content_hash = hash_records(records);
  m.records = std::move(records);
  m.seed = seed;
  return m;
}

void write_manifest(const SampleManifest& manifest, const std::filesystem::path& path) {
  if (hash_records(manifest.records) != manifest.content_hash)
    fail(ErrorCode::kHashMismatch, "manifest content hash is stale");
  std::string text = canonical_records(manifest.records);
  text += "# seed=" + std::to_string(manifest.seed) + "\n";
  text += "# sha256=" + to_hex(manifest.content_hash) + "\n";
  write_file_atomic(path, text);
}

SampleManifest parse_manifest(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != kManifestHeader) fail(ErrorCode::kSchemaError, "missing or wrong header");

  std::vector<SampleRecord> records;
  std::optional<std::uint64_t> seed;
  std::optional<Digest> stored;
  bool in_footer = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = lines[i];
    const std::string where = "line " + std::to_string(i + 1);
    if (line.starts_with('#')) {
      in_footer = true;
      if (line.starts_with("# seed=")) {
        std::uint64_t v;
        if (!parse_u64(line.substr(7), v)) fail(ErrorCode::kSchemaError, where + ": bad seed");
        seed = v;
      } else if (line.starts_with("# sha256=")) {
        stored = digest_from_hex(line.substr(9));
        if (!stored) fail(ErrorCode::kSchemaError, where + ": bad sha256");
      }
      continue;
    }
    if (in_footer) fail(ErrorCode::kSchemaError, where + ": record after footer");
    auto fields = split_fields(line);
    if (fields.size() != 6) fail(ErrorCode::kSchemaError, where + ": expected 6 fields");
    SampleRecord r;
    if (!parse_u64(fields[0], r.row_index)) fail(ErrorCode::kSchemaError, where + ": bad row_index");
    r.video_id = std::string(fields[1]);
    if (fields[2] == "0") r.label = 0;
    else if (fields[2] == "1") r.label = 1;
    else fail(ErrorCode::kSchemaError, where + ": bad label");
    r.manipulation = Manipulation::parse(fields[3]);
    r.source = std::string(fields[4]);
    r.split = parse_split(fields[5]);
    records.push_back(std::move(r));
  }
  if (!seed) fail(ErrorCode::kSchemaError, "missing '# seed=' footer");
  if (!stored) fail(ErrorCode::kSchemaError, "missing '# sha256=' footer");
  if (hash_records(records) != *stored) fail(ErrorCode::kHashMismatch, "content hash does not match records");
  validate_records(records);

  SampleManifest m;
  m.records = std::move(records);
  m.content_hash = *stored;
  m.seed = *seed;
  return m;
}

SampleManifest load_manifest(const std::filesystem::path& path) {
  try {
    return parse_manifest(read_file_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& matrix) {
  if (matrix.dim() == 0 || matrix.dim() > 0xFFFFFFFFu) fail(ErrorCode::kDimMismatch, "dim out of range");
  for (float v : matrix.values())
    if (!std::isfinite(v)) fail(ErrorCode::kNonFiniteValue, "refusing to write non-finite value");
  ByteWriter payload;
  append_payload(payload, matrix.values());
  ByteWriter w;
  w.put_magic(kFeatureMagic);
  w.put_u32(kFeatureVersion);
  w.put_u64(matrix.rows());
  w.put_u32(static_cast<std::uint32_t>(matrix.dim()));
  w.put_u32(kDtypeFloat32);
  w.put_bytes(payload.bytes());
  w.put_bytes(sha256(payload.bytes()));
  return w.take();
}

void write_features(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  write_file_atomic(path, encode_features(matrix));
}

FeatureMatrix decode_features(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorCode::kTruncatedFile, "file shorter than magic");
  ByteReader r(bytes);
  if (r.get_magic() != kFeatureMagic) fail(ErrorCode::kBadMagic, "not an FPK1 feature file");
  if (bytes.size() < kFeatureHeaderSize) fail(ErrorCode::kTruncatedFile, "header truncated");
  auto version = r.get_u32();
  if (version != kFeatureVersion) fail(ErrorCode::kVersionUnsupported, "version " + std::to_string(version));
  auto rows = r.get_u64();
  auto dim = r.get_u32();
  auto dtype = r.get_u32();
  if (dtype != kDtypeFloat32) fail(ErrorCode::kVersionUnsupported, "dtype code " + std::to_string(dtype));
  if (dim == 0) fail(ErrorCode::kSchemaError, "dim is zero");
  if (rows > (r.remaining() / 4) / dim) fail(ErrorCode::kTruncatedFile, "payload truncated");
  const std::size_t payload_size = static_cast<std::size_t>(rows) * dim * 4;
  if (r.remaining() < payload_size + 32) fail(ErrorCode::kTruncatedFile, "payload or digest truncated");
  if (r.remaining() > payload_size + 32) fail(ErrorCode::kSchemaError, "trailing bytes after digest");
  auto payload = r.get_bytes(payload_size);
  auto stored = r.get_bytes(32);
  auto actual = sha256(payload);
  if (!std::equal(actual.begin(), actual.end(), stored.begin())) fail(ErrorCode::kDigestMismatch, "payload digest");
  ByteReader pr(payload);
  std::vector<float> values(static_cast<std::size_t>(rows) * dim);
  for (auto& v : values) v = pr.get_f32();
  return FeatureMatrix(static_cast<std::size_t>(rows), dim, std::move(values));
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_features(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void check_paired(const FeatureMatrix& matrix, const SampleManifest& manifest) {
  if (matrix.rows() != manifest.size())
    fail(ErrorCode::kDimMismatch, "feature rows " + std::to_string(matrix.rows()) + " != manifest rows " +
                                      std::to_string(manifest.size()));
  for (const auto& r : manifest.records)
    if (r.row_index >= matrix.rows())
      fail(ErrorCode::kSchemaError, "row_index " + std::to_string(r.row_index) + " out of range");
}

std::pair<FeatureMatrix, SampleManifest> select_positions(const FeatureMatrix& matrix,
                                                          const SampleManifest& manifest,
                                                          std::span<const std::size_t> positions) {
  if (positions.empty()) fail(ErrorCode::kEmptySelection, "no records selected");
  std::vector<float> values;
  values.reserve(positions.size() * matrix.dim());
  std::vector<SampleRecord> records;
  records.reserve(positions.size());
  for (auto p : positions) {
    const auto& src = manifest.records.at(p);
    if (src.row_index >= matrix.rows()) fail(ErrorCode::kSchemaError, "row_index out of range");
    auto row = matrix.row(src.row_index);
    values.insert(values.end(), row.begin(), row.end());
    auto rec = src;
    rec.row_index = records.size();
    records.push_back(std::move(rec));
  }
  FeatureMatrix sub(positions.size(), matrix.dim(), std::move(values));
  return {std::move(sub), make_manifest(std::move(records), manifest.seed)};
}

std::pair<FeatureMatrix, SampleManifest> select_rows(const FeatureMatrix& matrix, const SampleManifest& manifest,
                                                     const RecordFilter& predicate) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (predicate(manifest.records[i])) positions.push_back(i);
  return select_positions(matrix, manifest, positions);
}

}  // namespace fpk
