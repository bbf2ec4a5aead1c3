#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpk/featstore.hpp"

namespace fpk {

// Synthetic frozen-feature fixtures.
//
// Every video draws one latent point from N(base + delta_m, Sigma) and its
// frames add small isotropic noise. Sigma has a high-variance and a
// low-variance half in a random orthonormal basis. Fake families share part
// of their mean offset so a probe trained without one family still transfers.
//
//   kShift      external sets see a rotated covariance: "ext-rotated" swaps
//               the two halves, "ext-mild" turns each hi/lo plane a little.
//   kSeparable  same layout with class offsets large enough to separate.
enum class SynthPreset { kShift, kSeparable };

struct SynthOptions {
  SynthPreset preset = SynthPreset::kShift;
  std::uint64_t seed = 7;
  std::size_t dim = 32;
  std::size_t frames_per_video = 4;
  double frame_noise = 0.1;
  std::size_t train_real = 400, train_fake_per_family = 100;
  std::size_t val_real = 100, val_fake_per_family = 25;
  std::size_t test_real = 100, test_fake_per_family = 25;
  std::size_t external_real = 100, external_fake_per_family = 25;
};

struct SynthSet {
  std::string name;
  FeatureMatrix features;
  SampleManifest manifest;
};

struct SynthData {
  SynthSet main;
  std::vector<SynthSet> externals;
  std::vector<float> gamma, beta;  // affine sidecar
};

SynthData generate_synth(const SynthOptions& options);

// Writes features.fpk1, manifest.csv, ext-*.fpk1/.csv, affine.fpka and a
// config.json that points at them. Returns the config path.
std::filesystem::path write_synth_fixture(const std::filesystem::path& dir, const SynthOptions& options);

SynthPreset parse_synth_preset(std::string_view text);

}  // namespace fpk
