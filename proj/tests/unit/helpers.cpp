#include "helpers.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iterator>

#include <unistd.h>

namespace fpk::test {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("fpk-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<SampleRecord> make_records(const std::vector<VideoBlock>& blocks, std::size_t frames,
                                       const std::string& source) {
  std::vector<SampleRecord> out;
  std::size_t video = 0;
  for (const auto& b : blocks) {
    for (std::size_t v = 0; v < b.videos; ++v, ++video) {
      char id[32];
      std::snprintf(id, sizeof(id), "vid%04zu", video);
      for (std::size_t f = 0; f < frames; ++f) {
        SampleRecord r;
        r.row_index = out.size();
        r.video_id = id;
        r.manipulation = Manipulation::parse(b.manipulation);
        r.label = r.manipulation.is_real() ? 0 : 1;
        r.source = source;
        r.split = b.split;
        out.push_back(r);
      }
    }
  }
  return out;
}

std::vector<SampleRecord> standard_records(std::size_t per_family, std::size_t frames) {
  std::vector<VideoBlock> blocks;
  for (auto split : {Split::kTrain, Split::kVal, Split::kTest})
    for (const char* m : {"REAL", "DF", "F2F", "FS", "NT"}) blocks.push_back({m, split, per_family});
  return make_records(blocks, frames);
}

FeatureMatrix random_features(std::size_t rows, std::size_t dim, Rng& rng, double scale) {
  std::vector<float> v(rows * dim);
  for (auto& x : v) x = static_cast<float>(scale * rng.normal());
  return FeatureMatrix(rows, dim, std::move(v));
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fpk::test
