#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "fd_oracle.hpp"
#include "gfdm/geometry.hpp"

using namespace gfdm;
using gfdm_test::fd_laplacian;

namespace {

constexpr double kPi = std::numbers::pi;

Vector pvec(double t) {
  Vector p(1);
  p << t;
  return p;
}

Vector pvec(double t, double s) {
  Vector p(2);
  p << t, s;
  return p;
}

// Metric diagonals straight from the chart definitions, independent of the
// closed-form Laplacians under test.
gfdm_test::MetricFn metric_of(const ManifoldSpec& spec) {
  switch (spec.family) {
    case Family::Ellipse1D:
      return [](const Vector& p) {
        const double t = p[0];
        return std::array<double, 2>{
            std::sin(t) * std::sin(t) + 4.0 * std::cos(t) * std::cos(t), 0.0};
      };
    case Family::GeneralTorus:
      return [spec](const Vector& p) {
        double c = 0.0;
        for (int i = 1; i <= spec.q; ++i) c += 1.0 / (double(i) * double(i));
        const double rad = spec.c0 + std::cos(p[0]);
        return std::array<double, 2>{c, spec.q * rad * rad};
      };
    case Family::SemiTorus:
      return [spec](const Vector& p) {
        const double rad = spec.R + spec.r * std::cos(p[0]);
        return std::array<double, 2>{spec.r * spec.r, rad * rad};
      };
  }
  throw Error("metric_of: unknown family");
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("embedding spot values") {
  const auto ellipse = make_ellipse();
  CHECK(embed(ellipse, pvec(0.0)).isApprox(Vector{{1.0, 0.0}}, 1e-15));
  CHECK(embed(ellipse, pvec(kPi / 2)) (1) == doctest::Approx(2.0).epsilon(1e-15));

  const auto torus = make_general_torus(4);
  CHECK(torus.ambient() == 9);
  Vector x = embed(torus, pvec(0.0, 0.0));
  Vector want(9);
  want << 3.0, 0.0, 1.5, 0.0, 1.0, 0.0, 0.75, 0.0, 0.0;
  CHECK((x - want).lpNorm<Eigen::Infinity>() < 1e-15);

  const auto semi = make_semi_torus();
  Vector y = embed(semi, pvec(kPi / 2, kPi / 2));
  CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("analytic frames are orthonormal and tangent") {
  const std::vector<ManifoldSpec> specs{make_ellipse(), make_general_torus(4),
                                        make_semi_torus()};
  std::mt19937 eng(7);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  for (const auto& spec : specs) {
    for (int rep = 0; rep < 20; ++rep) {
      Vector p(spec.dim());
      p[0] = 2.0 * kPi * unit(eng);
      if (spec.dim() == 2)
        p[1] = (spec.has_boundary() ? kPi : 2.0 * kPi) * unit(eng);
      const Matrix frame = analytic_frame(spec, p);
      CHECK((frame.transpose() * frame - Matrix::Identity(spec.dim(), spec.dim()))
                .lpNorm<Eigen::Infinity>() < 1e-12);
      // each column is the normalized chart velocity in the same direction
      for (int i = 0; i < spec.dim(); ++i) {
        const double h = 1e-5;
        Vector vel = Vector::Zero(spec.ambient());
        for (int a = 0; a < spec.ambient(); ++a)
          vel[a] = gfdm_test::d4(
              [&](double y) {
                Vector q = p;
                q[i] = y;
                return embed(spec, q)[a];
              },
              p[i], h);
        vel.normalize();
        CHECK(vel.dot(frame.col(i)) == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  // pinned directions
  CHECK(analytic_frame(make_ellipse(), pvec(0.0)).col(0).isApprox(Vector{{0.0, 1.0}}, 1e-15));
  const Matrix f = analytic_frame(make_semi_torus(), pvec(0.0, 0.0));
  CHECK(f.col(0).isApprox(Vector{{0.0, 0.0, 1.0}}, 1e-15));
  CHECK(f.col(1).isApprox(Vector{{0.0, 1.0, 0.0}}, 1e-15));
}

TEST_CASE("closed-form Laplacians match the finite-difference oracle") {
  const std::vector<std::pair<ManifoldSpec, Field>> cases{
      {make_ellipse(), Field::SinTheta},
      {make_general_torus(4), Field::SinThetaSinPhi},
      {make_general_torus(2), Field::SinThetaSinPhi},
      {make_semi_torus(), Field::SinThetaSinPhi},
  };
  std::mt19937 eng(11);
  std::uniform_real_distribution<double> unit(0.08, 0.92);
  const double h = 1e-2;
  for (const auto& [spec, field] : cases) {
    const auto gdiag = metric_of(spec);
    auto u = [&, s = spec](const Vector& p) { return field_value(field, s, p); };
    for (int rep = 0; rep < 20; ++rep) {
      Vector p(spec.dim());
      p[0] = 2.0 * kPi * unit(eng);
      if (spec.dim() == 2)
        p[1] = (spec.has_boundary() ? kPi : 2.0 * kPi) * unit(eng);
      const double got = analytic_laplacian(field, spec, p);
      const double want = fd_laplacian(u, gdiag, p, h);
      CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("Laplacian spot values") {
  CHECK(analytic_laplacian(Field::SinTheta, make_ellipse(), pvec(kPi / 2)) ==
        doctest::Approx(-1.0).epsilon(1e-14));

  // q = 4: sum 1/i^2 = 205/144; value at (pi/2, pi/2) is -(1/c + 1/16)
  const double c = 205.0 / 144.0;
  CHECK(analytic_laplacian(Field::SinThetaSinPhi, make_general_torus(4),
                           pvec(kPi / 2, kPi / 2)) ==
        doctest::Approx(-(1.0 / c + 1.0 / 16.0)).epsilon(1e-14));

  CHECK(analytic_laplacian(Field::Constant, make_semi_torus(), pvec(1.0, 1.0)) == 0.0);
}

TEST_CASE("field/manifold compatibility is enforced") {
  CHECK_THROWS_AS(field_value(Field::SinTheta, make_general_torus(4), pvec(0, 0)),
                  Error);
  CHECK_THROWS_AS(field_value(Field::SinThetaSinPhi, make_ellipse(), pvec(0.0)),
                  Error);
  CHECK_NOTHROW(field_value(Field::Constant, make_ellipse(), pvec(0.3)));
}

TEST_CASE("boundary distance") {
  const auto semi = make_semi_torus();
  CHECK(boundary_distance(semi, pvec(kPi, 0.01)) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(boundary_distance(semi, pvec(0.0, kPi - 0.02)) == doctest::Approx(0.06).epsilon(1e-12));
  CHECK_THROWS_AS(boundary_distance(make_ellipse(), pvec(0.0)), Error);
  CHECK_THROWS_AS(boundary_distance(make_general_torus(4), pvec(0, 0)), Error);
}

TEST_CASE("sampling is deterministic per seed and stays in the box") {
  const auto semi = make_semi_torus();
  const auto a = sample_manifold(semi, 500, 42);
  const auto b = sample_manifold(semi, 500, 42);
  CHECK(a.ambient == b.ambient);
  CHECK(a.intrinsic == b.intrinsic);
  const auto other = sample_manifold(semi, 500, 43);
  CHECK(a.intrinsic != other.intrinsic);
  for (int i = 0; i < 500; ++i) {
    CHECK(a.intrinsic(i, 0) >= 0.0);
    CHECK(a.intrinsic(i, 0) < 2.0 * kPi);
    CHECK(a.intrinsic(i, 1) >= 0.0);
    CHECK(a.intrinsic(i, 1) < kPi);
  }

  // pairwise distinct rows
  const auto big = sample_manifold(make_ellipse(), 2000, 1);
  std::set<double> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(big.intrinsic(i, 0));
  CHECK(seen.size() == 2000);
}

TEST_CASE("xyz round trip keeps full precision") {
  const auto path = temp_path("gfdm_cloud_roundtrip.xyz");
  const auto cloud = sample_manifold(make_general_torus(4), 50, 5);
  save_xyz(path, cloud.ambient);
  const auto loaded = load_xyz(path, 2);
  REQUIRE(loaded.n_points() == 50);
  REQUIRE(loaded.ambient_dim() == 9);
  CHECK(loaded.ambient == cloud.ambient);
  CHECK(loaded.intrinsic_dim == 2);
  CHECK(!loaded.spec.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("xyz loader rejects bad input and skips comments") {
  const auto path = temp_path("gfdm_cloud_bad.xyz");
  {
    std::ofstream out(path);
    out << "# header comment\n"
           "0 1 2\n"
           "\n"
           "3 4 5  # trailing comment\n";
  }
  const auto ok = load_xyz(path, 2);
  CHECK(ok.n_points() == 2);
  CHECK(ok.ambient(1, 2) == 5.0);

  {
    std::ofstream out(path);
    out << "0 1 2\n0 1\n";
  }
  CHECK_THROWS_WITH_AS(load_xyz(path, 2), doctest::Contains("ragged row at line 2"),
                       Error);

  {
    std::ofstream out(path);
    out << "0 1 2\n3 4 5\n0 1 2\n";
  }
  CHECK_THROWS_WITH_AS(load_xyz(path, 2),
                       doctest::Contains("duplicate point at line 3"), Error);
  std::filesystem::remove(path);
}
