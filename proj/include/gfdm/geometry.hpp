#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gfdm/common.hpp"

namespace gfdm {

enum class Family { Ellipse1D, GeneralTorus, SemiTorus };

// Closed-form sampling domain: family tag plus the parameters that matter.
// Ellipse1D   : (cos t, 2 sin t), t in [0,2pi), curve in R^2.
// GeneralTorus: 2-manifold in R^{2q+1}; pair i of coordinates is
//               ((c0+cos t)/i) (cos i s, sin i s), i = 1..q, last coordinate
//               sqrt(sum 1/i^2) sin t, (t,s) in [0,2pi)^2.
// SemiTorus   : ((R+r cos t) cos s, (R+r cos t) sin s, r sin t), t in [0,2pi),
//               s in [0,pi]; boundary circles at s = 0 and s = pi.
struct ManifoldSpec {
  Family family = Family::Ellipse1D;
  int q = 4;        // GeneralTorus: ambient dimension is 2q+1
  double c0 = 2.0;  // GeneralTorus: tube offset, c0 > 1
  double R = 2.0;   // SemiTorus: major radius
  double r = 1.0;   // SemiTorus: minor radius

  int dim() const { return family == Family::Ellipse1D ? 1 : 2; }
  int ambient() const;
  bool has_boundary() const { return family == Family::SemiTorus; }
  std::string name() const;
};

ManifoldSpec make_ellipse();
ManifoldSpec make_general_torus(int q);
ManifoldSpec make_semi_torus();

// A point cloud: ambient coordinates row-wise. Clouds produced by
// sample_manifold keep the intrinsic coordinates and the spec; clouds loaded
// from disk carry only the ambient block and the caller-declared intrinsic
// dimension.
struct PointCloud {
  Matrix ambient;    // N x n
  Matrix intrinsic;  // N x d, 0 x 0 for file clouds
  std::optional<ManifoldSpec> spec;
  int intrinsic_dim = 0;

  int n_points() const { return static_cast<int>(ambient.rows()); }
  int ambient_dim() const { return static_cast<int>(ambient.cols()); }
  bool has_intrinsic() const { return intrinsic.rows() == ambient.rows(); }
};

// Intrinsic coordinates drawn i.i.d. uniform on the parameter box; identical
// (spec, n, seed) gives a bit-identical cloud. Exact duplicate draws are
// rejected and redrawn so rows are pairwise distinct.
PointCloud sample_manifold(const ManifoldSpec& spec, int n, std::uint64_t seed);

Vector embed(const ManifoldSpec& spec, const Vector& param);
Matrix embed_all(const ManifoldSpec& spec, const Matrix& params);

// Orthonormal tangent basis at `param`, columns of an ambient() x dim()
// matrix, in the order (t-direction, s-direction).
Matrix analytic_frame(const ManifoldSpec& spec, const Vector& param);

// Manufactured scalar fields. SinTheta is defined for dim() == 1 families,
// SinThetaSinPhi for dim() == 2; Constant (value 1) for any. Mismatches throw.
enum class Field { Constant, SinTheta, SinThetaSinPhi };

Field parse_field(const std::string& name);
std::string field_name(Field f);
void check_field(Field f, const ManifoldSpec& spec);

double field_value(Field f, const ManifoldSpec& spec, const Vector& param);
// Closed-form Laplace-Beltrami of the field at `param`.
double analytic_laplacian(Field f, const ManifoldSpec& spec, const Vector& param);

Vector field_values(Field f, const PointCloud& cloud);
Vector laplacian_values(Field f, const PointCloud& cloud);

// Geodesic distance to the boundary along the s-coordinate:
// (R + r cos t) * min(s, pi - s). Families without boundary throw.
double boundary_distance(const ManifoldSpec& spec, const Vector& param);
Vector boundary_distances(const PointCloud& cloud);

// Plain-text cloud files: one point per line, ASCII decimal columns separated
// by single spaces, '#' to end of line is comment. Writing keeps full double
// precision (17 significant digits). Loading rejects ragged rows and exact
// duplicate points, reporting the offending line numbers.
PointCloud load_xyz(const std::string& path, int intrinsic_dim);
void save_xyz(const std::string& path, const Matrix& coords);

}  // namespace gfdm
