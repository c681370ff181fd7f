#include "gfdm/geometry.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <vector>

namespace gfdm {

namespace {

constexpr double kPi = std::numbers::pi;

// sum_{i=1}^q 1/i^2, the squared length of the t-coordinate velocity of the
// general torus embedding.
double torus_c(int q) {
  double c = 0.0;
  for (int i = 1; i <= q; ++i) c += 1.0 / (double(i) * double(i));
  return c;
}

// 53-bit uniform draw in [0,1); independent of the standard library's
// distribution implementation so clouds are bit-identical across platforms.
double next_unit(std::mt19937_64& eng) { return (eng() >> 11) * 0x1.0p-53; }

}  // namespace

int ManifoldSpec::ambient() const {
  switch (family) {
    case Family::Ellipse1D: return 2;
    case Family::GeneralTorus: return 2 * q + 1;
    case Family::SemiTorus: return 3;
  }
  throw Error("ManifoldSpec: unknown family");
}

std::string ManifoldSpec::name() const {
  switch (family) {
    case Family::Ellipse1D: return "ellipse";
    case Family::GeneralTorus: return "torus" + std::to_string(2 * q + 1);
    case Family::SemiTorus: return "semitorus";
  }
  throw Error("ManifoldSpec: unknown family");
}

ManifoldSpec make_ellipse() {
  ManifoldSpec s;
  s.family = Family::Ellipse1D;
  return s;
}

ManifoldSpec make_general_torus(int q) {
  if (q < 1) throw Error("make_general_torus: q must be >= 1");
  ManifoldSpec s;
  s.family = Family::GeneralTorus;
  s.q = q;
  return s;
}

ManifoldSpec make_semi_torus() {
  ManifoldSpec s;
  s.family = Family::SemiTorus;
  return s;
}

PointCloud sample_manifold(const ManifoldSpec& spec, int n, std::uint64_t seed) {
  if (n <= 0) throw Error("sample_manifold: n must be positive");
  const int d = spec.dim();
  Matrix params(n, d);
  std::mt19937_64 eng(seed);
  std::set<std::array<double, 2>> seen;
  for (int i = 0; i < n; ++i) {
    for (;;) {  // redraw on an exact duplicate so rows stay pairwise distinct
      std::array<double, 2> p{0.0, 0.0};
      p[0] = 2.0 * kPi * next_unit(eng);
      if (d == 2) {
        const double hi = spec.family == Family::SemiTorus ? kPi : 2.0 * kPi;
        p[1] = hi * next_unit(eng);
      }
      if (seen.insert(p).second) {
        for (int j = 0; j < d; ++j) params(i, j) = p[j];
        break;
      }
    }
  }
  PointCloud cloud;
  cloud.intrinsic = params;
  cloud.ambient = embed_all(spec, params);
  cloud.spec = spec;
  cloud.intrinsic_dim = d;
  return cloud;
}

Vector embed(const ManifoldSpec& spec, const Vector& param) {
  if (param.size() != spec.dim()) throw Error("embed: wrong parameter size");
  Vector x(spec.ambient());
  switch (spec.family) {
    case Family::Ellipse1D: {
      const double t = param[0];
      x << std::cos(t), 2.0 * std::sin(t);
      return x;
    }
    case Family::GeneralTorus: {
      const double t = param[0], s = param[1];
      const double rad = spec.c0 + std::cos(t);
      for (int i = 1; i <= spec.q; ++i) {
        x[2 * i - 2] = rad / i * std::cos(i * s);
        x[2 * i - 1] = rad / i * std::sin(i * s);
      }
      x[2 * spec.q] = std::sqrt(torus_c(spec.q)) * std::sin(t);
      return x;
    }
    case Family::SemiTorus: {
      const double t = param[0], s = param[1];
      const double rad = spec.R + spec.r * std::cos(t);
      x << rad * std::cos(s), rad * std::sin(s), spec.r * std::sin(t);
      return x;
    }
  }
  throw Error("embed: unknown family");
}

Matrix embed_all(const ManifoldSpec& spec, const Matrix& params) {
  Matrix out(params.rows(), spec.ambient());
  for (Eigen::Index i = 0; i < params.rows(); ++i)
    out.row(i) = embed(spec, params.row(i).transpose()).transpose();
  return out;
}

Matrix analytic_frame(const ManifoldSpec& spec, const Vector& param) {
  Matrix frame(spec.ambient(), spec.dim());
  switch (spec.family) {
    case Family::Ellipse1D: {
      const double t = param[0];
      const double g = std::sin(t) * std::sin(t) + 4.0 * std::cos(t) * std::cos(t);
      frame(0, 0) = -std::sin(t) / std::sqrt(g);
      frame(1, 0) = 2.0 * std::cos(t) / std::sqrt(g);
      return frame;
    }
    case Family::GeneralTorus: {
      const double t = param[0], s = param[1];
      const double sc = std::sqrt(torus_c(spec.q));
      const double sq = std::sqrt(double(spec.q));
      for (int i = 1; i <= spec.q; ++i) {
        frame(2 * i - 2, 0) = -std::sin(t) * std::cos(i * s) / (i * sc);
        frame(2 * i - 1, 0) = -std::sin(t) * std::sin(i * s) / (i * sc);
        frame(2 * i - 2, 1) = -std::sin(i * s) / sq;
        frame(2 * i - 1, 1) = std::cos(i * s) / sq;
      }
      frame(2 * spec.q, 0) = std::cos(t);
      frame(2 * spec.q, 1) = 0.0;
      return frame;
    }
    case Family::SemiTorus: {
      const double t = param[0], s = param[1];
      frame(0, 0) = -std::sin(t) * std::cos(s);
      frame(1, 0) = -std::sin(t) * std::sin(s);
      frame(2, 0) = std::cos(t);
      frame(0, 1) = -std::sin(s);
      frame(1, 1) = std::cos(s);
      frame(2, 1) = 0.0;
      return frame;
    }
  }
  throw Error("analytic_frame: unknown family");
}

Field parse_field(const std::string& name) {
  if (name == "constant") return Field::Constant;
  if (name == "sin_theta") return Field::SinTheta;
  if (name == "sin_theta_sin_phi") return Field::SinThetaSinPhi;
  throw Error("parse_field: unknown field '" + name + "'");
}

std::string field_name(Field f) {
  switch (f) {
    case Field::Constant: return "constant";
    case Field::SinTheta: return "sin_theta";
    case Field::SinThetaSinPhi: return "sin_theta_sin_phi";
  }
  throw Error("field_name: unknown field");
}

void check_field(Field f, const ManifoldSpec& spec) {
  if (f == Field::SinTheta && spec.dim() != 1)
    throw Error("field sin_theta is defined for 1-dimensional families only");
  if (f == Field::SinThetaSinPhi && spec.dim() != 2)
    throw Error("field sin_theta_sin_phi is defined for 2-dimensional families only");
}

double field_value(Field f, const ManifoldSpec& spec, const Vector& param) {
  check_field(f, spec);
  switch (f) {
    case Field::Constant: return 1.0;
    case Field::SinTheta: return std::sin(param[0]);
    case Field::SinThetaSinPhi: return std::sin(param[0]) * std::sin(param[1]);
  }
  throw Error("field_value: unknown field");
}

double analytic_laplacian(Field f, const ManifoldSpec& spec, const Vector& param) {
  check_field(f, spec);
  if (f == Field::Constant) return 0.0;
  switch (spec.family) {
    case Family::Ellipse1D: {
      // 1/sqrt(g) d/dt ( g^{-1/2} u' ) = u''/g - g' u' / (2 g^2)
      const double t = param[0];
      const double g = std::sin(t) * std::sin(t) + 4.0 * std::cos(t) * std::cos(t);
      const double dg = -6.0 * std::sin(t) * std::cos(t);
      const double du = std::cos(t), ddu = -std::sin(t);
      return ddu / g - dg * du / (2.0 * g * g);
    }
    case Family::GeneralTorus: {
      const double t = param[0], s = param[1];
      const double c = torus_c(spec.q);
      const double rad = spec.c0 + std::cos(t);
      const double u_t = std::cos(t) * std::sin(s);
      const double u_tt = -std::sin(t) * std::sin(s);
      const double u_ss = -std::sin(t) * std::sin(s);
      return (-std::sin(t) * u_t + rad * u_tt) / (c * rad) +
             u_ss / (spec.q * rad * rad);
    }
    case Family::SemiTorus: {
      const double t = param[0], s = param[1];
      const double rad = spec.R + spec.r * std::cos(t);
      const double u_t = std::cos(t) * std::sin(s);
      const double u_tt = -std::sin(t) * std::sin(s);
      const double u_ss = -std::sin(t) * std::sin(s);
      return (-spec.r * std::sin(t) * u_t + rad * u_tt) / (spec.r * spec.r * rad) +
             u_ss / (rad * rad);
    }
  }
  throw Error("analytic_laplacian: unknown family");
}

namespace {

Vector map_params(const PointCloud& cloud,
                  const std::function<double(const Vector&)>& fn) {
  if (!cloud.spec || !cloud.has_intrinsic())
    throw Error("cloud carries no intrinsic coordinates");
  Vector out(cloud.n_points());
  for (int i = 0; i < cloud.n_points(); ++i)
    out[i] = fn(cloud.intrinsic.row(i).transpose());
  return out;
}

}  // namespace

Vector field_values(Field f, const PointCloud& cloud) {
  return map_params(cloud, [&](const Vector& p) {
    return field_value(f, *cloud.spec, p);
  });
}

Vector laplacian_values(Field f, const PointCloud& cloud) {
  return map_params(cloud, [&](const Vector& p) {
    return analytic_laplacian(f, *cloud.spec, p);
  });
}

double boundary_distance(const ManifoldSpec& spec, const Vector& param) {
  if (!spec.has_boundary())
    throw Error("boundary_distance: " + spec.name() + " has no boundary");
  const double t = param[0], s = param[1];
  return (spec.R + spec.r * std::cos(t)) * std::min(s, kPi - s);
}

Vector boundary_distances(const PointCloud& cloud) {
  return map_params(cloud, [&](const Vector& p) {
    return boundary_distance(*cloud.spec, p);
  });
}

PointCloud load_xyz(const std::string& path, int intrinsic_dim) {
  std::ifstream in(path);
  if (!in) throw Error("load_xyz: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
  std::map<std::vector<double>, int> seen;
  std::string line;
  int lineno = 0;
  Eigen::Index cols = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof())
      throw Error("load_xyz: malformed number at line " + std::to_string(lineno));
    if (row.empty()) continue;
    if (cols < 0) cols = static_cast<Eigen::Index>(row.size());
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw Error("load_xyz: ragged row at line " + std::to_string(lineno) +
                  " (" + std::to_string(row.size()) + " columns, expected " +
                  std::to_string(cols) + ")");
    if (auto [it, fresh] = seen.emplace(row, lineno); !fresh)
      throw Error("load_xyz: duplicate point at line " + std::to_string(lineno) +
                  " (first seen at line " + std::to_string(it->second) + ")");
    rows.push_back(std::move(row));
    lines.push_back(lineno);
  }
  PointCloud cloud;
  cloud.ambient.resize(static_cast<Eigen::Index>(rows.size()), std::max<Eigen::Index>(cols, 0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      cloud.ambient(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  cloud.intrinsic_dim = intrinsic_dim;
  return cloud;
}

void save_xyz(const std::string& path, const Matrix& coords) {
  std::ofstream out(path);
  if (!out) throw Error("save_xyz: cannot open '" + path + "'");
  char buf[64];
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (Eigen::Index j = 0; j < coords.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", coords(i, j));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("save_xyz: write failed for '" + path + "'");
}

}  // namespace gfdm
