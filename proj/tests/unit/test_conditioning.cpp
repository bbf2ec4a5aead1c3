#include <doctest.h>

#include <cmath>

#include <Eigen/QR>

#include "fpk/bytes.hpp"
#include "fpk/conditioning.hpp"
#include "fpk/error.hpp"
#include "helpers.hpp"

using namespace fpk;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

ConditionerConfig cfg(ConditionKind kind) {
  ConditionerConfig c;
  c.kind = kind;
  return c;
}

// Population covariance of the rows of m, by explicit double loops.
std::vector<std::vector<double>> covariance(const Matrix& m) {
  const auto n = m.rows(), d = m.cols();
  std::vector<double> mean(d, 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) mean[j] += m(i, j) / static_cast<double>(n);
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) c[a][b] += (m(i, a) - mean[a]) * (m(i, b) - mean[b]);
  for (auto& row : c)
    for (auto& v : row) v /= static_cast<double>(n);
  return c;
}

FeatureMatrix correlated(std::size_t rows, std::size_t dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::VectorXd sd(dim);
  for (std::size_t j = 0; j < dim; ++j) sd[j] = std::sqrt(1.0 + 9.0 * rng.uniform());
  std::vector<float> v;
  for (std::size_t r = 0; r < rows; ++r) {
    Eigen::VectorXd z(dim);
    for (std::size_t j = 0; j < dim; ++j) z[j] = rng.normal() * sd[j];
    Eigen::VectorXd x = q * z;
    for (std::size_t j = 0; j < dim; ++j) v.push_back(static_cast<float>(x[j] + 2.0));
  }
  return FeatureMatrix(rows, dim, std::move(v));
}

}  // namespace

TEST_SUITE("conditioning") {

TEST_CASE("names round trip") {
  for (auto k : all_conditions()) CHECK(parse_condition(condition_name(k)) == k);
  CHECK(parse_condition("PCA_WHITEN") == ConditionKind::kPCAWhiten);
  CHECK(code_of([] { parse_condition("BN"); }) != ErrorCode::kOk);
}

TEST_CASE("layer norm examples") {
  std::vector<double> x{1, 2, 3};
  auto y = apply_ln(x, 0.0);
  CHECK(y[0] == doctest::Approx(-1.224744871391589));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(1.224744871391589));
  for (double v : apply_ln(std::vector<double>{5, 5, 5}, 1e-6)) CHECK(v == 0.0);
  for (double v : apply_ln(std::vector<double>{5, 5, 5}, 0.0)) CHECK(v == 0.0);
}

TEST_CASE("layer norm centers and scales random vectors") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(2 + rng.uniform_index(60));
    for (auto& v : x) v = 5.0 * rng.normal() + 3.0;
    auto y = apply_ln(x, 1e-6);
    double m = 0, s = 0;
    for (double v : y) m += v;
    m /= y.size();
    for (double v : y) s += (v - m) * (v - m);
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::sqrt(s / y.size()) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("affine layer norm") {
  ConditionerState s;
  s.config.kind = ConditionKind::kLNAffine;
  s.config.ln_eps = 1e-300;
  s.input_dim = 3;
  s.gamma = Vector::Constant(3, 2.0);
  s.beta = Vector::Constant(3, 1.0);
  auto y = apply_ln_affine(std::vector<double>{1, 2, 3}, s);
  CHECK(y[0] == doctest::Approx(-1.449489742783178));
  CHECK(y[1] == doctest::Approx(1.0));
  CHECK(y[2] == doctest::Approx(3.449489742783178));

  s.gamma = Vector::Ones(3);
  s.beta = Vector::Zero(3);
  std::vector<double> x{0.3, -1.0, 7.0};
  CHECK(apply_ln_affine(x, s) == apply_ln(x, s.config.ln_eps));

  s.gamma = Vector::Ones(2);
  CHECK(code_of([&] { apply_ln_affine(x, s); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("l2 normalization") {
  auto y = apply_l2(std::vector<double>{3, 4});
  CHECK(y[0] == doctest::Approx(0.6));
  CHECK(y[1] == doctest::Approx(0.8));
  CHECK(apply_l2(std::vector<double>{-2, 0, 0}) == std::vector<double>{-1, 0, 0});
  CHECK(code_of([] { apply_l2(std::vector<double>{0, 0}); }) == ErrorCode::kZeroVector);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(1 + rng.uniform_index(40));
    for (auto& v : x) v = rng.normal();
    auto u = apply_l2(x);
    double n = 0;
    for (double v : u) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-6);
    const double c = u[0] / x[0];
    CHECK(c > 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) CHECK(u[j] == doctest::Approx(c * x[j]));
  }
}

TEST_CASE("feature std fit and apply") {
  FeatureMatrix train(2, 2, {0, 10, 2, 10});
  auto s = fit_feature_std(train, cfg(ConditionKind::kFeatureStd));
  CHECK(s.mean[0] == 1.0);
  CHECK(s.mean[1] == 10.0);
  CHECK(s.stddev[0] == 1.0);
  CHECK(s.stddev[1] == 0.0);
  auto y = apply_feature_std(std::vector<double>{2, 10}, s);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);
  auto z = apply_feature_std(std::vector<double>{1, 10}, s);
  CHECK((z[0] == 0.0 && z[1] == 0.0));
  CHECK(code_of([&] { apply_feature_std(std::vector<double>{1}, s); }) == ErrorCode::kDimMismatch);
  CHECK(code_of([] { fit_feature_std(FeatureMatrix(1, 2, {1, 2}), cfg(ConditionKind::kFeatureStd)); }) ==
        ErrorCode::kTooFewRows);
}

TEST_CASE("feature std standardizes its own train split") {
  Rng rng(10);
  auto train = correlated(500, 12, rng);
  auto s = fit_conditioner(train, cfg(ConditionKind::kFeatureStd));
  auto t = condition_matrix(s, train);
  auto c = covariance(t);
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    CHECK(std::abs(t.col(j).mean()) <= 1e-5);
    CHECK(std::sqrt(c[j][j]) == doctest::Approx(1.0).epsilon(1e-4));
  }
  // Refitting standardized data gives mean 0, std 1.
  std::vector<float> v(t.data(), t.data() + t.size());
  auto again = fit_feature_std(FeatureMatrix(500, 12, v), cfg(ConditionKind::kFeatureStd));
  for (Eigen::Index j = 0; j < 12; ++j) {
    CHECK(std::abs(again.mean[j]) <= 1e-5);
    CHECK(again.stddev[j] == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("pca whiten hand example") {
  FeatureMatrix train(3, 2, {1, 0, -1, 0, 0, 0});
  auto s = fit_pca_whiten(train, cfg(ConditionKind::kPCAWhiten));
  CHECK(s.eigenvalues[0] == doctest::Approx(2.0 / 3.0));
  CHECK(s.eigenvalues[1] == doctest::Approx(0.0));
  CHECK(s.components(0, 0) == doctest::Approx(1.0));
  CHECK(s.components(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("pca whiten degenerate and shape cases") {
  FeatureMatrix same(4, 3, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3});
  auto s = fit_pca_whiten(same, cfg(ConditionKind::kPCAWhiten));
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(s.eigenvalues[i] == doctest::Approx(0.0));
  auto zero = apply_pca_whiten(std::vector<double>{1, 2, 3}, s);
  for (double v : zero) CHECK(v == doctest::Approx(0.0));

  Rng rng(2);
  auto train = correlated(50, 3, rng);
  auto c = cfg(ConditionKind::kPCAWhiten);
  c.pca_components = 1;
  auto k1 = fit_conditioner(train, c);
  CHECK(k1.output_dim() == 1);
  CHECK(apply_conditioner(k1, train.row(0)).size() == 1);
  c.pca_components = 4;
  CHECK(code_of([&] { fit_conditioner(train, c); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { fit_pca_whiten(FeatureMatrix(1, 2, {1, 2}), cfg(ConditionKind::kPCAWhiten)); }) ==
        ErrorCode::kTooFewRows);
}

TEST_CASE("pca whiten eigenvalues match a covariance oracle") {
  Rng rng(41);
  auto train = correlated(2000, 6, rng);
  Matrix raw(2000, 6);
  for (std::size_t r = 0; r < 2000; ++r)
    for (std::size_t j = 0; j < 6; ++j) raw(r, j) = train.at(r, j);
  auto c = covariance(raw);
  auto s = fit_pca_whiten(train, cfg(ConditionKind::kPCAWhiten));
  // Trace and Rayleigh quotients: v' C v = lambda for every stored component.
  double trace = 0, sum = 0;
  for (int j = 0; j < 6; ++j) trace += c[j][j];
  for (Eigen::Index i = 0; i < 6; ++i) {
    sum += s.eigenvalues[i];
    double q = 0;
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) q += s.components(a, i) * c[a][b] * s.components(b, i);
    CHECK(q == doctest::Approx(s.eigenvalues[i]).epsilon(1e-9));
    if (i > 0) CHECK(s.eigenvalues[i] <= s.eigenvalues[i - 1]);
    CHECK(s.eigenvalues[i] >= 0.0);
  }
  CHECK(sum == doctest::Approx(trace).epsilon(1e-10));
}

TEST_CASE("pca whiten identity on its own train split") {
  Rng rng(5);
  auto train = correlated(3000, 10, rng);
  auto s = fit_conditioner(train, cfg(ConditionKind::kPCAWhiten));
  auto c = covariance(condition_matrix(s, train));
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) {
      if (a == b) {
        const double lam = s.eigenvalues[a];
        CHECK(std::abs(c[a][a] - lam / (lam + s.config.pca_eps)) <= 1e-4);
      } else {
        CHECK(std::abs(c[a][b]) <= 1e-4);
      }
    }
}

TEST_CASE("batched and per-row conditioning agree") {
  Rng rng(6);
  auto train = correlated(200, 8, rng);
  test::TempDir dir;
  write_affine({std::vector<float>(8, 1.5f), std::vector<float>(8, 0.25f)}, dir / "a.fpka");
  for (auto kind : all_conditions()) {
    auto c = cfg(kind);
    if (kind == ConditionKind::kLNAffine) c.affine_source = dir / "a.fpka";
    auto s = fit_conditioner(train, c);
    auto m = condition_matrix(s, train);
    for (std::size_t r = 0; r < train.rows(); r += 37) {
      auto y = apply_conditioner(s, train.row(r));
      for (std::size_t j = 0; j < y.size(); ++j) CHECK(m(r, j) == doctest::Approx(y[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fit dispatch") {
  Rng rng(7);
  auto train = correlated(20, 4, rng);
  auto l2 = fit_conditioner(train, cfg(ConditionKind::kL2));
  CHECK(l2.mean.size() == 0);
  CHECK(l2.eigenvalues.size() == 0);
  auto aff = fit_conditioner(train, cfg(ConditionKind::kLNAffine));
  CHECK(aff.gamma == Vector::Ones(4));
  CHECK(aff.beta == Vector::Zero(4));
  auto fs = fit_conditioner(train, cfg(ConditionKind::kFeatureStd));
  CHECK(fs == fit_feature_std(train, cfg(ConditionKind::kFeatureStd)));

  auto missing = cfg(ConditionKind::kLNAffine);
  missing.affine_source = "/nonexistent/affine.fpka";
  CHECK(code_of([&] { fit_conditioner(train, missing); }) == ErrorCode::kAffineFileMissing);

  auto bad = cfg(ConditionKind::kLN);
  bad.ln_eps = 0.0;
  CHECK(code_of([&] { fit_conditioner(train, bad); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("affine sidecar round trip and mismatch") {
  test::TempDir dir;
  AffineParams p{{1.0f, 2.0f, 3.0f}, {0.5f, 0.0f, -0.5f}};
  write_affine(p, dir / "a.fpka");
  auto back = read_affine(dir / "a.fpka");
  CHECK(back.gamma == p.gamma);
  CHECK(back.beta == p.beta);
  CHECK(test::file_bytes(dir / "a.fpka").size() == 4 + 4 + 3 * 4 * 2);
  Rng rng(1);
  auto train = correlated(10, 4, rng);
  auto c = cfg(ConditionKind::kLNAffine);
  c.affine_source = dir / "a.fpka";
  CHECK(code_of([&] { fit_conditioner(train, c); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("fitting is deterministic and ignores non-train rows") {
  Rng rng(12);
  auto data = correlated(300, 6, rng);
  auto manifest = make_manifest(test::make_records({{"REAL", Split::kTrain, 50}, {"DF", Split::kTrain, 50},
                                                    {"REAL", Split::kTest, 25}, {"DF", Split::kVal, 25}},
                                                   2),
                                0);
  auto is_train = [](const SampleRecord& r) { return r.split == Split::kTrain; };
  auto [train, tm] = select_rows(data, manifest, is_train);

  std::vector<float> replaced(data.values().begin(), data.values().end());
  for (std::size_t r = 0; r < manifest.size(); ++r)
    if (manifest.records[r].split != Split::kTrain)
      for (std::size_t j = 0; j < 6; ++j) replaced[r * 6 + j] = static_cast<float>(100.0 * rng.normal());
  auto [train2, tm2] = select_rows(FeatureMatrix(300, 6, replaced), manifest, is_train);

  for (auto kind : all_conditions()) {
    auto a = fit_conditioner(train, cfg(kind), tm.content_hash);
    auto b = fit_conditioner(train2, cfg(kind), tm2.content_hash);
    CHECK(state_digest(a) == state_digest(b));
    CHECK(state_digest(a) == state_digest(fit_conditioner(train, cfg(kind), tm.content_hash)));
  }
}

TEST_CASE("state encoding round trip and corruption") {
  Rng rng(9);
  auto train = correlated(40, 5, rng);
  for (auto kind : all_conditions()) {
    auto s = fit_conditioner(train, cfg(kind));
    auto bytes = encode_state(s);
    CHECK(decode_state(bytes) == s);
    auto bad = bytes;
    bad[bytes.size() / 2] ^= 0x10;
    CHECK(code_of([&] { decode_state(bad); }) == ErrorCode::kCacheCorrupt);
  }
  CHECK(code_of([] { decode_state(std::vector<std::uint8_t>(8, 0)); }) == ErrorCode::kCacheCorrupt);
}

TEST_CASE("cache put, get and key derivation") {
  test::TempDir dir;
  Rng rng(13);
  auto train = correlated(60, 4, rng);
  auto c = cfg(ConditionKind::kPCAWhiten);
  auto s = fit_conditioner(train, c);
  cache_put(s, dir.path());
  auto got = cache_get(s.fit_key, dir.path());
  REQUIRE(got);
  CHECK(*got == s);
  CHECK_FALSE(cache_get(Digest{}, dir.path()));

  bool hit = false;
  auto loaded = fit_or_load(train, c, {}, dir.path(), &hit);
  CHECK(hit);
  CHECK(loaded == s);
  auto c2 = c;
  c2.pca_eps = 1e-4;
  CHECK(compute_fit_key(train, c2, {}) != s.fit_key);
  fit_or_load(train, c2, {}, dir.path(), &hit);
  CHECK_FALSE(hit);

  auto path = cache_path(s.fit_key, dir.path());
  auto bytes = test::file_bytes(path);
  bytes[10] ^= 1;
  test::write_bytes(path, bytes);
  CHECK(code_of([&] { cache_get(s.fit_key, dir.path()); }) == ErrorCode::kCacheCorrupt);
}

TEST_CASE("sidecar contents, not location, enter the fit key") {
  test::TempDir dir;
  Rng rng(14);
  auto train = correlated(10, 3, rng);
  write_affine({{1, 1, 1}, {0, 0, 0}}, dir / "a.fpka");
  write_affine({{1, 1, 1}, {0, 0, 0}}, dir / "b.fpka");
  write_affine({{2, 1, 1}, {0, 0, 0}}, dir / "c.fpka");
  auto key = [&](const char* name) {
    auto c = cfg(ConditionKind::kLNAffine);
    c.affine_source = dir / name;
    return fit_conditioner(train, c).fit_key;
  };
  CHECK(key("a.fpka") == key("b.fpka"));
  CHECK(key("a.fpka") != key("c.fpka"));
}

}  // TEST_SUITE
