#include "hsnorm/patch_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace hsnorm {

namespace {

using Candidate = std::pair<double, int>;  // (squared distance, index); std::pair orders lexicographically

void check_query(const PointCloud& cloud, int query, int n) {
  if (query < 0 || query >= cloud.size()) {
    fail(ErrorKind::validation, "query index " + std::to_string(query) + " out of range");
  }
  if (n < 1) fail(ErrorKind::validation, "patch size must be positive");
  if (n > cloud.size()) {
    fail(ErrorKind::validation, "patch size " + std::to_string(n) + " exceeds cloud size " +
                                    std::to_string(cloud.size()) + "; use a smaller patch size");
  }
}

RawPatch make_patch(const PointCloud& cloud, int query, std::vector<int> order) {
  // the query always leads, even when duplicates of it sit at distance zero
  auto it = std::find(order.begin(), order.end(), query);
  if (it != order.end()) {
    std::rotate(order.begin(), it, it + 1);
  } else {
    order.insert(order.begin(), query);
    order.pop_back();
  }
  RawPatch p;
  p.coords.resize(static_cast<Eigen::Index>(order.size()), 3);
  for (std::size_t r = 0; r < order.size(); ++r) p.coords.row(r) = cloud.points.row(order[r]);
  p.indices = std::move(order);
  return p;
}

}  // namespace

KdTree::KdTree(const Points& points, int leaf_size) : points_(points), order_(points.rows()) {
  std::iota(order_.begin(), order_.end(), 0);
  if (points_.rows() > 0) build(0, static_cast<int>(order_.size()), std::max(1, leaf_size));
}

int KdTree::build(int begin, int end, int leaf_size) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    const Vec3 p = points_.row(order_[i]).transpose();
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (end - begin > leaf_size) {
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_(a, axis) < points_(b, axis); });
    const int left = build(begin, mid, leaf_size);
    const int right = build(mid, end, leaf_size);
    nodes_[id].left = left;
    nodes_[id].right = right;
  }
  return id;
}

std::vector<int> KdTree::nearest(const Vec3& query, int k) const {
  k = std::min<int>(k, static_cast<int>(points_.rows()));
  if (k <= 0) return {};
  std::priority_queue<Candidate> heap;  // max-heap: worst candidate on top
  auto box_dist = [&](const Node& n) {
    const Vec3 d = (n.lo - query).cwiseMax(query - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  };
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (static_cast<int>(heap.size()) == k && box_dist(n) > heap.top().first) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        Candidate c{(points_.row(idx).transpose() - query).squaredNorm(), idx};
        if (static_cast<int>(heap.size()) < k) {
          heap.push(c);
        } else if (c < heap.top()) {
          heap.pop();
          heap.push(c);
        }
      }
    } else {
      const double dl = box_dist(nodes_[n.left]);
      const double dr = box_dist(nodes_[n.right]);
      // push the farther child first so the nearer one is explored next
      if (dl <= dr) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
  }
  std::vector<int> out(heap.size());
  for (auto i = static_cast<int>(out.size()) - 1; i >= 0; --i) {
    out[i] = heap.top().second;
    heap.pop();
  }
  return out;
}

std::vector<int> nearest_brute_force(const Points& points, const Vec3& query, int k) {
  std::vector<Candidate> all(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    all[i] = {(points.row(i).transpose() - query).squaredNorm(), static_cast<int>(i)};
  }
  k = std::min<int>(k, static_cast<int>(all.size()));
  std::partial_sort(all.begin(), all.begin() + k, all.end());
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = all[i].second;
  return out;
}

RawPatch extract_patch(const PointCloud& cloud, int query, int n) {
  check_query(cloud, query, n);
  return make_patch(cloud, query, nearest_brute_force(cloud.points, cloud.points.row(query).transpose(), n));
}

RawPatch extract_patch(const PointCloud& cloud, const KdTree& tree, int query, int n) {
  check_query(cloud, query, n);
  return make_patch(cloud, query, tree.nearest(cloud.points.row(query).transpose(), n));
}

AlignedPatch align_patch(const RawPatch& raw) {
  AlignedPatch p = align_patch(raw.coords);
  p.source_indices = raw.indices;
  return p;
}

AlignedPatch align_patch(const Points& raw) {
  if (raw.rows() < 1) fail(ErrorKind::degenerate_patch, "empty patch");
  AlignedPatch p;
  p.query_world = raw.row(0).transpose();
  Points centered = raw.rowwise() - raw.row(0);
  p.scale = centered.rowwise().norm().maxCoeff();
  if (!(p.scale > 0.0)) fail(ErrorKind::degenerate_patch, "all patch points coincide with the query");
  centered /= p.scale;

  const Mat3 cov = (centered.transpose() * centered) / static_cast<double>(centered.rows());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 evals = eig.eigenvalues();  // ascending
  if (!(evals(1) > 1e-12 * std::max(evals(2), 1e-300))) {
    p.rank_deficient = true;
    log_warn("rank-deficient patch covariance; using identity frame");
    p.rotation.setIdentity();
  } else {
    Mat3 axes;  // columns: largest, middle, smallest
    axes.col(0) = eig.eigenvectors().col(2);
    axes.col(1) = eig.eigenvectors().col(1);
    axes.col(2) = eig.eigenvectors().col(0);
    for (int j = 0; j < 3; ++j) {
      const Eigen::VectorXd proj = centered * axes.col(j);
      const double third = proj.array().cube().sum();
      const double mag = proj.array().abs().cube().sum();
      bool flip = false;
      if (std::abs(third) > 1e-9 * mag) {
        flip = third < 0.0;
      } else {
        for (int k = 0; k < 3; ++k) {
          if (std::abs(axes(k, j)) > 1e-12) {
            flip = axes(k, j) < 0.0;
            break;
          }
        }
      }
      if (flip) axes.col(j) = -axes.col(j);
    }
    if (axes.determinant() < 0.0) axes.col(2) = -axes.col(2);
    p.rotation = axes.transpose();
  }
  p.coords = centered * p.rotation.transpose();
  p.coords.row(0).setZero();
  return p;
}

Vec3 align_normal(const AlignedPatch& patch, const Vec3& world) { return patch.rotation * world; }

Vec3 unalign_normal(const AlignedPatch& patch, const Vec3& n_hat) {
  return (patch.rotation.transpose() * n_hat).normalized();
}

NeighborTable knn_indices(const Points& coords, int k) {
  const auto m = static_cast<int>(coords.rows());
  if (k < 1 || k >= m) {
    fail(ErrorKind::validation, "knn requires 0 < k < rows (k=" + std::to_string(k) + ", rows=" +
                                    std::to_string(m) + ")");
  }
  NeighborTable table(m, k);
  std::vector<Candidate> cand(m - 1);
  for (int i = 0; i < m; ++i) {
    int c = 0;
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      cand[c++] = {(coords.row(j) - coords.row(i)).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int j = 0; j < k; ++j) table(i, j) = cand[j].second;
  }
  return table;
}

}  // namespace hsnorm
