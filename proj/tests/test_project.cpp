#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tweetlm/errors.hpp"
#include "tweetlm/project.hpp"
#include "support/pca_oracle.hpp"
#include "tweetlm/rng.hpp"

using namespace tweetlm;
using namespace tweetlm::project;

namespace {

std::vector<std::vector<double>> random_matrix(int64_t n, int64_t d, std::mt19937_64& g) {
  std::vector<std::vector<double>> x(static_cast<size_t>(n),
                                     std::vector<double>(static_cast<size_t>(d)));
  for (auto& row : x) {
    for (auto& v : row) v = rng::normal(g) * (1.0 + rng::uniform01(g));
  }
  return x;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("collinear data: first component along y=x with full variance share") {
  std::vector<std::vector<double>> x;
  for (int i = -3; i <= 3; ++i) {
    x.push_back({static_cast<double>(i), static_cast<double>(i)});
  }
  const PcaModel m = pca_fit(x, 2);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(m.components[0][0] == doctest::Approx(inv_sqrt2).epsilon(1e-10));
  CHECK(m.components[0][1] == doctest::Approx(inv_sqrt2).epsilon(1e-10));
  const double share = m.explained_variance[0] /
                       (m.explained_variance[0] + m.explained_variance[1]);
  CHECK(share == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("isotropic cross has equal explained variances") {
  const std::vector<std::vector<double>> x{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  const PcaModel m = pca_fit(x, 2);
  CHECK(m.explained_variance[0] == doctest::Approx(m.explained_variance[1]).epsilon(1e-10));
}

TEST_CASE("components match the power-iteration oracle on random matrices") {
  auto g = rng::make_engine(777);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t n = 5 + static_cast<int64_t>(rng::uniform_index(g, 20));
    const int64_t d = 3 + static_cast<int64_t>(rng::uniform_index(g, 6));
    const auto x = random_matrix(n, d, g);
    const PcaModel m = pca_fit(x, 2);
    const testsupport::OracleEigen oracle = testsupport::oracle_topk(x, 2);

    for (int c = 0; c < 2; ++c) {
      CAPTURE(trial);
      CAPTURE(c);
      CHECK(m.explained_variance[static_cast<size_t>(c)] ==
            doctest::Approx(oracle.values[static_cast<size_t>(c)]).epsilon(1e-8));
      // alignment up to sign
      const double align =
          std::fabs(dot(m.components[static_cast<size_t>(c)], oracle.vectors[static_cast<size_t>(c)]));
      CHECK(align == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("orthonormality, variance ordering, and sign convention on every fit") {
  auto g = rng::make_engine(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_matrix(12, 5, g);
    const PcaModel m = pca_fit(x, 2);
    CHECK(std::fabs(dot(m.components[0], m.components[1])) < 1e-8);
    CHECK(std::fabs(dot(m.components[0], m.components[0]) - 1.0) < 1e-8);
    CHECK(std::fabs(dot(m.components[1], m.components[1]) - 1.0) < 1e-8);
    CHECK(m.explained_variance[0] >= m.explained_variance[1]);
    for (const auto& comp : m.components) {
      size_t arg = 0;
      for (size_t i = 1; i < comp.size(); ++i) {
        if (std::fabs(comp[i]) > std::fabs(comp[arg])) arg = i;
      }
      CHECK(comp[arg] > 0.0);
    }
  }
}

TEST_CASE("transform basics: mean maps to origin, in-plane distances survive") {
  auto g = rng::make_engine(5);
  // build data inside a fixed 2D plane of a 4D space
  std::vector<double> u{0.5, 0.5, 0.5, 0.5}, v{0.5, -0.5, 0.5, -0.5};
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> coords;
  for (int i = 0; i < 30; ++i) {
    const double a = rng::normal(g) * 3.0, b = rng::normal(g);
    coords.push_back({a, b});
    std::vector<double> row(4);
    for (size_t j = 0; j < 4; ++j) row[j] = 7.0 + a * u[j] + b * v[j];
    x.push_back(std::move(row));
  }
  const PcaModel m = pca_fit(x, 2);

  const auto origin = pca_transform(m, {m.mean});
  CHECK(std::fabs(origin[0][0]) < 1e-9);
  CHECK(std::fabs(origin[0][1]) < 1e-9);

  const auto proj = pca_transform(m, x);
  for (size_t i = 1; i < x.size(); ++i) {
    double d_orig = 0, d_proj = 0;
    for (size_t j = 0; j < 4; ++j) d_orig += (x[i][j] - x[0][j]) * (x[i][j] - x[0][j]);
    for (size_t j = 0; j < 2; ++j) {
      d_proj += (proj[i][j] - proj[0][j]) * (proj[i][j] - proj[0][j]);
    }
    CHECK(std::sqrt(d_proj) == doctest::Approx(std::sqrt(d_orig)).epsilon(1e-8));
  }

  CHECK_THROWS_AS(pca_transform(m, {{1.0, 2.0}}), ValidationError);
}

TEST_CASE("reconstruction error equals the discarded eigenvalue mass") {
  auto g = rng::make_engine(17);
  const auto x = random_matrix(40, 6, g);
  const PcaModel m = pca_fit(x, 2);
  const testsupport::OracleEigen oracle = testsupport::oracle_topk(x, 6);

  // mean reconstruction error via projection onto the 2 kept components
  const auto proj = pca_transform(m, x);
  double err = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t j = 0; j < 6; ++j) {
      double rec = m.mean[j];
      for (size_t c = 0; c < 2; ++c) rec += proj[i][c] * m.components[c][j];
      err += (x[i][j] - rec) * (x[i][j] - rec);
    }
  }
  err /= static_cast<double>(x.size() - 1);
  double discarded = 0;
  for (size_t c = 2; c < 6; ++c) discarded += oracle.values[c];
  CHECK(err == doctest::Approx(discarded).epsilon(1e-6));
}

TEST_CASE("translation invariance of the projection") {
  auto g = rng::make_engine(23);
  const auto x = random_matrix(15, 4, g);
  auto shifted = x;
  for (auto& row : shifted) {
    for (size_t j = 0; j < row.size(); ++j) row[j] += 100.0 + static_cast<double>(j);
  }
  const auto pa = pca_transform(pca_fit(x, 2), x);
  const auto pb = pca_transform(pca_fit(shifted, 2), shifted);
  for (size_t i = 0; i < pa.size(); ++i) {
    for (size_t j = 0; j < 2; ++j) {
      CHECK(pa[i][j] == doctest::Approx(pb[i][j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("rank-2 PCA retains at least as much variance as random projections") {
  auto g = rng::make_engine(29);
  const auto x = random_matrix(25, 5, g);
  const PcaModel m = pca_fit(x, 2);
  const double pca_retained = m.explained_variance[0] + m.explained_variance[1];

  for (int trial = 0; trial < 50; ++trial) {
    // random orthonormal pair via Gram-Schmidt
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = rng::normal(g);
    for (auto& v : b) v = rng::normal(g);
    double na = std::sqrt(dot(a, a));
    for (auto& v : a) v /= na;
    const double ab = dot(a, b);
    for (size_t j = 0; j < 5; ++j) b[j] -= ab * a[j];
    double nb = std::sqrt(dot(b, b));
    for (auto& v : b) v /= nb;

    // retained variance of the random plane
    std::vector<double> mean(5, 0.0);
    for (const auto& row : x) {
      for (size_t j = 0; j < 5; ++j) mean[j] += row[j];
    }
    for (auto& v : mean) v /= static_cast<double>(x.size());
    double retained = 0;
    for (const auto& row : x) {
      double ca = 0, cb = 0;
      for (size_t j = 0; j < 5; ++j) {
        ca += (row[j] - mean[j]) * a[j];
        cb += (row[j] - mean[j]) * b[j];
      }
      retained += ca * ca + cb * cb;
    }
    retained /= static_cast<double>(x.size() - 1);
    CHECK(retained <= pca_retained + 1e-9);
  }
}

TEST_CASE("pca error paths") {
  CHECK_THROWS_AS(pca_fit({{1.0, 2.0}}, 2), ValidationError);
  CHECK_THROWS_AS(pca_fit({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, 2), ValidationError);
  CHECK_THROWS_AS(pca_fit({{1.0}, {2.0}}, 2), ValidationError);
}

TEST_CASE("scatter emission: csv round trip and one cross per hoax center") {
  std::vector<ScatterPoint> pts;
  auto g = rng::make_engine(3);
  for (int i = 0; i < 25; ++i) {
    ScatterPoint p;
    p.x = rng::normal(g) * 3.1;
    p.y = rng::normal(g);
    p.label = "hoax" + std::to_string(i % 4);
    p.kind = i < 4 ? "hoax-center" : "claim";
    pts.push_back(p);
  }
  const auto csv = std::filesystem::temp_directory_path() / "tweetlm_scatter.csv";
  const auto svg = std::filesystem::temp_directory_path() / "tweetlm_scatter.svg";
  emit_scatter(pts, csv, svg);

  const auto loaded = read_scatter_csv(csv);
  REQUIRE(loaded.size() == pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK(loaded[i].x == pts[i].x);  // exact: 17 significant digits round trip
    CHECK(loaded[i].y == pts[i].y);
    CHECK(loaded[i].label == pts[i].label);
    CHECK(loaded[i].kind == pts[i].kind);
  }

  std::ifstream sf(svg);
  std::string content((std::istreambuf_iterator<char>(sf)), std::istreambuf_iterator<char>());
  size_t crosses = 0, at = 0;
  while ((at = content.find("class=\"hoax-center\"", at)) != std::string::npos) {
    ++crosses;
    at += 10;
  }
  CHECK(crosses == 4);
  CHECK(content.find("<circle") != std::string::npos);

  CHECK_THROWS_AS(emit_scatter({}, csv, svg), ValidationError);
  std::filesystem::remove(csv);
  std::filesystem::remove(svg);
}
