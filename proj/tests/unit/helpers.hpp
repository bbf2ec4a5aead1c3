#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fpk/featstore.hpp"
#include "fpk/rng.hpp"

namespace fpk::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small manifest with `frames` rows per video. Each block is
// (manipulation code, split, number of videos).
struct VideoBlock {
  std::string manipulation;
  Split split;
  std::size_t videos;
};
std::vector<SampleRecord> make_records(const std::vector<VideoBlock>& blocks, std::size_t frames = 2,
                                       const std::string& source = "unit");

// Five-family layout with every split populated.
std::vector<SampleRecord> standard_records(std::size_t per_family = 3, std::size_t frames = 2);

FeatureMatrix random_features(std::size_t rows, std::size_t dim, Rng& rng, double scale = 1.0);

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p);
void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes);

}  // namespace fpk::test
