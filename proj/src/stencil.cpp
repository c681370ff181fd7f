#include "gfdm/stencil.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace gfdm {

namespace {

constexpr int kLeafSize = 16;
constexpr int kBruteDim = 20;

struct Candidate {
  double d2;
  int idx;
};

// "better" ordering: smaller distance, then smaller index
inline bool better(const Candidate& a, const Candidate& b) {
  return a.d2 < b.d2 || (a.d2 == b.d2 && a.idx < b.idx);
}

}  // namespace

KdTree::KdTree(const Matrix& points) : points_(points) {
  if (points_.rows() == 0) throw Error("KdTree: empty cloud");
  order_.resize(static_cast<std::size_t>(points_.rows()));
  for (int i = 0; i < n_points(); ++i) order_[static_cast<std::size_t>(i)] = i;
  nodes_.reserve(static_cast<std::size_t>(2 * points_.rows() / kLeafSize + 2));
  root_ = build(0, n_points());
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)].begin = begin;
    nodes_[static_cast<std::size_t>(id)].end = end;
    return id;
  }
  // split the widest extent at the median
  int axis = 0;
  double best_spread = -1.0;
  for (int a = 0; a < points_.cols(); ++a) {
    double lo = points_(order_[static_cast<std::size_t>(begin)], a), hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      const double v = points_(order_[static_cast<std::size_t>(i)], a);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      axis = a;
    }
  }
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     const double va = points_(a, axis), vb = points_(b, axis);
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::query(const Vector& x, int k, std::vector<int>& idx,
                   std::vector<double>& dist) const {
  if (k < 1 || k > n_points())
    throw Error("KdTree::query: k = " + std::to_string(k) +
                " outside [1, " + std::to_string(n_points()) + "]");
  if (x.size() != points_.cols()) throw Error("KdTree::query: dimension mismatch");

  // max-heap on the "better" order keeps the current worst candidate on top
  std::priority_queue<Candidate, std::vector<Candidate>,
                      bool (*)(const Candidate&, const Candidate&)>
      heap(better);

  auto offer = [&](int i) {
    const double d2 = (points_.row(i).transpose() - x).squaredNorm();
    const Candidate c{d2, i};
    if (static_cast<int>(heap.size()) < k) {
      heap.push(c);
    } else if (better(c, heap.top())) {
      heap.pop();
      heap.push(c);
    }
  };

  // iterative depth-first descent, nearer child first; a subtree is skipped
  // only when the splitting plane is strictly farther than the current worst,
  // so equal-distance candidates with smaller indices are still found
  struct Visit {
    int node;
    double plane_d2;  // squared distance from x to the subtree's split plane
  };
  std::vector<Visit> stack{{root_, 0.0}};
  while (!stack.empty()) {
    const Visit visit = stack.back();
    stack.pop_back();
    if (static_cast<int>(heap.size()) == k && visit.plane_d2 > heap.top().d2)
      continue;
    const Node& node = nodes_[static_cast<std::size_t>(visit.node)];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i)
        offer(order_[static_cast<std::size_t>(i)]);
      continue;
    }
    const double diff = x[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    stack.push_back({far, diff * diff});
    stack.push_back({near, visit.plane_d2});
  }

  idx.resize(static_cast<std::size_t>(k));
  dist.resize(static_cast<std::size_t>(k));
  for (int i = k - 1; i >= 0; --i) {
    idx[static_cast<std::size_t>(i)] = heap.top().idx;
    dist[static_cast<std::size_t>(i)] = std::sqrt(heap.top().d2);
    heap.pop();
  }
}

Vector NeighborTable::h_k_max() const {
  return dist.rowwise().maxCoeff();
}

namespace {

NeighborTable knn_with_tree(const Matrix& points, int k) {
  const KdTree tree(points);
  NeighborTable table;
  const int n = static_cast<int>(points.rows());
  table.idx.resize(n, k);
  table.dist.resize(n, k);
  std::vector<int> idx;
  std::vector<double> dist;
  for (int i = 0; i < n; ++i) {
    tree.query(points.row(i).transpose(), k, idx, dist);
    for (int j = 0; j < k; ++j) {
      table.idx(i, j) = idx[static_cast<std::size_t>(j)];
      table.dist(i, j) = dist[static_cast<std::size_t>(j)];
    }
  }
  return table;
}

}  // namespace

NeighborTable build_knn(const Matrix& points, int k) {
  if (points.rows() == 0) throw Error("build_knn: empty cloud");
  if (k < 1 || k > points.rows())
    throw Error("build_knn: k = " + std::to_string(k) + " outside [1, " +
                std::to_string(points.rows()) + "]");
  if (points.cols() > kBruteDim) return build_knn_brute(points, k);
  return knn_with_tree(points, k);
}

NeighborTable build_knn_brute(const Matrix& points, int k) {
  if (points.rows() == 0) throw Error("build_knn_brute: empty cloud");
  if (k < 1 || k > points.rows())
    throw Error("build_knn_brute: k = " + std::to_string(k) + " outside [1, " +
                std::to_string(points.rows()) + "]");
  const int n = static_cast<int>(points.rows());
  NeighborTable table;
  table.idx.resize(n, k);
  table.dist.resize(n, k);
  std::vector<Candidate> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      all[static_cast<std::size_t>(j)] = {
          (points.row(j) - points.row(i)).squaredNorm(), j};
    std::partial_sort(all.begin(), all.begin() + k, all.end(), better);
    for (int j = 0; j < k; ++j) {
      table.idx(i, j) = all[static_cast<std::size_t>(j)].idx;
      table.dist(i, j) = std::sqrt(all[static_cast<std::size_t>(j)].d2);
    }
  }
  return table;
}

Frame analytic_frames(const PointCloud& cloud) {
  if (!cloud.spec || !cloud.has_intrinsic())
    throw Error("analytic_frames: cloud carries no intrinsic coordinates");
  Frame frame;
  frame.estimated = false;
  frame.basis.reserve(static_cast<std::size_t>(cloud.n_points()));
  for (int i = 0; i < cloud.n_points(); ++i)
    frame.basis.push_back(
        analytic_frame(*cloud.spec, cloud.intrinsic.row(i).transpose()));
  return frame;
}

TangentEstimate estimate_tangent(const Matrix& points, int d, int k_p) {
  const int n = static_cast<int>(points.rows());
  const int amb = static_cast<int>(points.cols());
  if (d < 1 || d > amb) throw Error("estimate_tangent: bad intrinsic dimension");
  if (k_p < d + 1)
    throw Error("estimate_tangent: k_p must be at least d + 1");
  const NeighborTable knn = build_knn(points, std::min(k_p, n));

  TangentEstimate out;
  out.frame.estimated = true;
  out.frame.basis.resize(static_cast<std::size_t>(n));
  out.singular_values = Matrix::Zero(n, amb);

  Matrix local(knn.k(), amb);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < knn.k(); ++j) local.row(j) = points.row(knn.idx(i, j));
    const Eigen::RowVectorXd mean = local.colwise().mean();
    local.rowwise() -= mean;
    Eigen::JacobiSVD<Matrix> svd(local, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    for (int j = 0; j < sv.size(); ++j) out.singular_values(i, j) = sv[j];
    if (sv[d - 1] < 1e-12 * sv[0]) out.degenerate.push_back(i);

    Matrix basis = svd.matrixV().leftCols(d);
    // sign convention: first clearly nonzero component positive
    for (int c = 0; c < d; ++c) {
      const double scale = basis.col(c).cwiseAbs().maxCoeff();
      for (int r = 0; r < amb; ++r) {
        if (std::abs(basis(r, c)) > 1e-12 * scale) {
          if (basis(r, c) < 0.0) basis.col(c) = -basis.col(c);
          break;
        }
      }
    }
    out.frame.basis[static_cast<std::size_t>(i)] = std::move(basis);
  }
  return out;
}

int default_kp(int n_points) {
  const double v = 2.0 * std::sqrt(static_cast<double>(n_points));
  int lo = static_cast<int>(std::floor(v));
  if (lo % 2 == 0) --lo;           // largest odd <= v (or v-1 when v is even)
  const int hi = lo + 2;
  return (v - lo < hi - v) ? lo : hi;  // ties round up
}

double estimate_fill_distance(const Matrix& points, const ManifoldSpec& spec,
                              int probes, std::uint64_t seed) {
  if (probes < 1) throw Error("estimate_fill_distance: probes must be positive");
  if (points.cols() != spec.ambient())
    throw Error("estimate_fill_distance: ambient dimension mismatch");
  const KdTree tree(points);
  const PointCloud probe_cloud = sample_manifold(spec, probes, seed);
  double fill = 0.0;
  std::vector<int> idx;
  std::vector<double> dist;
  for (int i = 0; i < probes; ++i) {
    tree.query(probe_cloud.ambient.row(i).transpose(), 1, idx, dist);
    fill = std::max(fill, dist[0]);
  }
  return fill;
}

}  // namespace gfdm
