#include "fpk/synth.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <json.hpp>

#include "fpk/bytes.hpp"
#include "fpk/conditioning.hpp"
#include "fpk/error.hpp"
#include "fpk/linalg.hpp"
#include "fpk/rng.hpp"

namespace fpk {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kHiVariance = 4.0;
constexpr double kLoVariance = 0.04;
constexpr double kBaseOffset = 3.0;
constexpr double kMildAngle = 0.35;

VectorXd normal_vector(Rng& rng, Eigen::Index n) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

VectorXd unit_vector(Rng& rng, Eigen::Index n) {
  VectorXd v = normal_vector(rng, n);
  return v / v.norm();
}

struct Model {
  Eigen::Index dim = 0;
  MatrixXd hi, lo;  // orthonormal column bases of the two halves
  VectorXd base;
  std::vector<VectorXd> deltas;  // DF, F2F, FS, NT
  MatrixXd sigma;
};

Model build_model(const SynthOptions& o) {
  Model m;
  m.dim = static_cast<Eigen::Index>(o.dim);
  const Eigen::Index h = m.dim / 2;
  Rng rng(derive_seed(o.seed, "synth/basis"));
  MatrixXd q = Eigen::HouseholderQR<MatrixXd>(MatrixXd::NullaryExpr(m.dim, m.dim, [&] { return rng.normal(); }))
                   .householderQ();
  m.hi = q.leftCols(h);
  m.lo = q.rightCols(m.dim - h);
  VectorXd ev(m.dim);
  ev.head(h).setConstant(kHiVariance);
  ev.tail(m.dim - h).setConstant(kLoVariance);
  m.sigma = q * ev.asDiagonal() * q.transpose();

  m.base.resize(m.dim);
  for (Eigen::Index i = 0; i < m.dim; ++i) m.base[i] = rng.uniform_index(2) ? kBaseOffset : -kBaseOffset;

  const double scale = o.preset == SynthPreset::kSeparable ? 16.0 : 1.0;
  Rng shared_rng(derive_seed(o.seed, "synth/shared"));
  VectorXd shared = m.hi * unit_vector(shared_rng, h) * 1.0 + m.lo * unit_vector(shared_rng, m.dim - h) * 0.3;
  for (const auto& fam : standard_manipulations()) {
    Rng r(derive_seed(o.seed, "synth/delta/" + fam.code()));
    VectorXd specific = m.hi * unit_vector(r, h) * 1.2 + m.lo * unit_vector(r, m.dim - h) * 0.35;
    m.deltas.push_back(scale * (0.7 * shared + 0.6 * specific));
  }
  return m;
}

struct Block {
  Manipulation manipulation;
  std::size_t videos;
};

// Appends one split's videos; video numbering continues from `next_video`.
void draw_split(const Model& m, const MatrixXd& chol, const SynthOptions& o, Rng& rng, std::string_view source,
                std::string_view prefix, Split split, std::size_t n_real, std::size_t n_fake,
                std::vector<float>& values, std::vector<SampleRecord>& records, std::size_t& next_video) {
  std::vector<Block> blocks{{Manipulation::real(), n_real}};
  for (const auto& fam : standard_manipulations()) blocks.push_back({fam, n_fake});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t v = 0; v < blocks[b].videos; ++v) {
      VectorXd z = m.base + chol * normal_vector(rng, m.dim);
      if (b > 0) z += m.deltas[b - 1];
      char id[64];
      std::snprintf(id, sizeof(id), "%.*s%05zu", static_cast<int>(prefix.size()), prefix.data(), next_video++);
      for (std::size_t f = 0; f < o.frames_per_video; ++f) {
        for (Eigen::Index i = 0; i < m.dim; ++i) values.push_back(static_cast<float>(z[i] + o.frame_noise * rng.normal()));
        SampleRecord r;
        r.row_index = records.size();
        r.video_id = id;
        r.label = b > 0 ? 1 : 0;
        r.manipulation = blocks[b].manipulation;
        r.source = std::string(source);
        r.split = split;
        records.push_back(std::move(r));
      }
    }
  }
}

SynthSet make_set(std::string name, std::vector<float> values, std::vector<SampleRecord> records, std::size_t dim,
                  std::uint64_t seed) {
  const std::size_t rows = records.size();
  return {std::move(name), FeatureMatrix(rows, dim, std::move(values)), make_manifest(std::move(records), seed)};
}

}  // namespace

SynthPreset parse_synth_preset(std::string_view text) {
  if (text == "shift") return SynthPreset::kShift;
  if (text == "separable") return SynthPreset::kSeparable;
  fail(ErrorCode::kInvalidArgument, "unknown fixture preset '" + std::string(text) + "'");
}

SynthData generate_synth(const SynthOptions& o) {
  if (o.dim < 4 || o.dim % 2 != 0) fail(ErrorCode::kInvalidArgument, "fixture dim must be even and >= 4");
  if (o.frames_per_video == 0) fail(ErrorCode::kInvalidArgument, "frames_per_video must be positive");
  const Model m = build_model(o);
  const MatrixXd chol = Eigen::LLT<MatrixXd>(m.sigma).matrixL();
  SynthData data;

  {
    Rng rng(derive_seed(o.seed, "synth/main"));
    std::vector<float> values;
    std::vector<SampleRecord> records;
    std::size_t next = 0;
    draw_split(m, chol, o, rng, "synth-main", "v", Split::kTrain, o.train_real, o.train_fake_per_family, values, records, next);
    draw_split(m, chol, o, rng, "synth-main", "v", Split::kVal, o.val_real, o.val_fake_per_family, values, records, next);
    draw_split(m, chol, o, rng, "synth-main", "v", Split::kTest, o.test_real, o.test_fake_per_family, values, records, next);
    data.main = make_set("main", std::move(values), std::move(records), o.dim, o.seed);
  }

  // Rotations act about the base point so only the covariance moves.
  const Eigen::Index h = m.dim / 2;
  MatrixXd swap = MatrixXd(m.dim, m.dim);
  {
    MatrixXd from(m.dim, m.dim), to(m.dim, m.dim);
    from << m.hi, m.lo;
    to << m.lo, m.hi;
    swap = to * from.transpose();
  }
  MatrixXd mild = MatrixXd::Identity(m.dim, m.dim);
  {
    const double c = std::cos(kMildAngle), s = std::sin(kMildAngle);
    for (Eigen::Index i = 0; i < h; ++i) {
      const VectorXd a = m.hi.col(i), b = m.lo.col(i);
      // Rotation in the plane spanned by (a, b).
      mild += (c - 1.0) * (a * a.transpose() + b * b.transpose()) + s * (b * a.transpose() - a * b.transpose());
    }
  }
  const std::pair<std::string, const MatrixXd*> ext[] = {{"ext-rotated", &swap}, {"ext-mild", &mild}};
  for (const auto& [name, rot] : ext) {
    const MatrixXd sigma = (*rot) * m.sigma * rot->transpose();
    const MatrixXd c = Eigen::LLT<MatrixXd>(sigma).matrixL();
    Rng rng(derive_seed(o.seed, "synth/" + name));
    std::vector<float> values;
    std::vector<SampleRecord> records;
    std::size_t next = 0;
    draw_split(m, c, o, rng, name, name + "-", Split::kTest, o.external_real, o.external_fake_per_family, values,
               records, next);
    data.externals.push_back(make_set(name, std::move(values), std::move(records), o.dim, o.seed));
  }

  Rng arng(derive_seed(o.seed, "synth/affine"));
  for (std::size_t i = 0; i < o.dim; ++i) {
    data.gamma.push_back(static_cast<float>(1.0 + 0.1 * arng.normal()));
    data.beta.push_back(static_cast<float>(0.05 * arng.normal()));
  }
  return data;
}

std::filesystem::path write_synth_fixture(const std::filesystem::path& dir, const SynthOptions& o) {
  auto data = generate_synth(o);
  write_features(data.main.features, dir / "features.fpk1");
  write_manifest(data.main.manifest, dir / "manifest.csv");
  nlohmann::json externals = nlohmann::json::array();
  for (const auto& e : data.externals) {
    write_features(e.features, dir / (e.name + ".fpk1"));
    write_manifest(e.manifest, dir / (e.name + ".csv"));
    externals.push_back({{"name", e.name}, {"features", e.name + ".fpk1"}, {"manifest", e.name + ".csv"}});
  }
  write_affine({data.gamma, data.beta}, dir / "affine.fpka");
  nlohmann::json config = {{"features", "features.fpk1"},
                           {"manifest", "manifest.csv"},
                           {"affine", "affine.fpka"},
                           {"externals", externals},
                           {"output_dir", "out"},
                           {"seed", o.seed}};
  const auto path = dir / "config.json";
  write_file_atomic(path, config.dump(2) + "\n");
  return path;
}

}  // namespace fpk
