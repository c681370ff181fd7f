#pragma once

#include <cstdint>
#include <vector>

#include "gfdm/common.hpp"
#include "gfdm/geometry.hpp"

namespace gfdm {

// Exact k-nearest-neighbor index over a fixed cloud (ambient Euclidean
// metric). Ties in distance are broken toward the smaller point index, so
// results do not depend on traversal order.
class KdTree {
 public:
  explicit KdTree(const Matrix& points);

  // k nearest rows to x, ascending by (distance, index). k must be in [1, N].
  void query(const Vector& x, int k, std::vector<int>& idx,
             std::vector<double>& dist) const;

  int n_points() const { return static_cast<int>(points_.rows()); }

 private:
  struct Node {
    int axis = -1;          // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end);

  Matrix points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Per-point neighbor lists: row i holds the K nearest neighbors of point i,
// self first (index i, distance 0), then nondecreasing distance.
struct NeighborTable {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> idx;
  Matrix dist;

  int n_points() const { return static_cast<int>(idx.rows()); }
  int k() const { return static_cast<int>(idx.cols()); }
  // distance to the K-th neighbor, one value per point
  Vector h_k_max() const;
};

// kd-tree for moderate ambient dimension, brute force above 20 where the
// tree degenerates to a scan anyway.
NeighborTable build_knn(const Matrix& points, int k);
NeighborTable build_knn_brute(const Matrix& points, int k);

// Orthonormal tangent bases, one ambient x d matrix per point.
struct Frame {
  std::vector<Matrix> basis;
  bool estimated = false;
};

Frame analytic_frames(const PointCloud& cloud);

// Classical first-order local SVD: center the k_p nearest neighbors of each
// point on their mean and keep the top-d right singular vectors. Signs are
// fixed so the first component larger than 1e-12 x the column's max magnitude
// is positive. `degenerate` lists points whose d-th singular value fell below
// 1e-12 x the largest (the neighborhood does not span d directions);
// `singular_values` row i holds the min(k_p, n) singular values, zero-padded.
struct TangentEstimate {
  Frame frame;
  std::vector<int> degenerate;
  Matrix singular_values;  // N x n
};

TangentEstimate estimate_tangent(const Matrix& points, int d, int k_p);

// Default PCA neighborhood size: 2 sqrt(N) rounded to the nearest odd
// integer, ties rounding up.
int default_kp(int n_points);

// Max over `probes` uniformly drawn manifold points of the distance to the
// nearest cloud point: a randomized upper-bracket of the fill distance.
double estimate_fill_distance(const Matrix& points, const ManifoldSpec& spec,
                              int probes, std::uint64_t seed);

}  // namespace gfdm
