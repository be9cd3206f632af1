#pragma once

#include "hsnorm/dataset_io.hpp"

#include <memory>
#include <vector>

namespace hsnorm {

// Exact k-nearest-neighbour search over a fixed point set. Results are ordered
// by (squared distance, index), so equidistant points resolve to the lower index.
class KdTree {
 public:
  explicit KdTree(const Points& points, int leaf_size = 16);

  std::vector<int> nearest(const Vec3& query, int k) const;
  Eigen::Index size() const { return points_.rows(); }
  const Points& points() const { return points_; }

 private:
  struct Node {
    int begin = 0, end = 0;  // range in order_
    int left = -1, right = -1;
    Vec3 lo, hi;
  };
  int build(int begin, int end, int leaf_size);

  Points points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// Brute-force reference for KdTree::nearest.
std::vector<int> nearest_brute_force(const Points& points, const Vec3& query, int k);

struct RawPatch {
  Points coords;                // world coordinates, row 0 = query point
  std::vector<int> indices;     // source point index per row
};

// The query point followed by its N-1 nearest neighbours, ascending distance,
// ties by lower index. Requires N <= T.
RawPatch extract_patch(const PointCloud& cloud, int query, int n);
RawPatch extract_patch(const PointCloud& cloud, const KdTree& tree, int query, int n);

struct AlignedPatch {
  Points coords;            // canonical frame; row 0 is the origin; max row norm 1
  double scale = 1.0;       // max query-to-neighbour distance
  Mat3 rotation = Mat3::Identity();  // rows are the principal axes (largest variance first)
  Vec3 query_world = Vec3::Zero();
  std::vector<int> source_indices;
  bool rank_deficient = false;  // identity frame fallback was used
};

// Centers on the query, scales to the unit sphere, and rotates into the PCA
// frame. Each axis sign is chosen so the third moment of the projections is
// non-negative; the last axis is then flipped if needed to keep det(R) = +1.
AlignedPatch align_patch(const RawPatch& raw);
AlignedPatch align_patch(const Points& raw);

// World direction -> canonical frame (R n).
Vec3 align_normal(const AlignedPatch& patch, const Vec3& world);
// Canonical frame -> world (R^T n), renormalized.
Vec3 unalign_normal(const AlignedPatch& patch, const Vec3& n_hat);

// Per-row k nearest neighbours excluding the row itself, ascending distance,
// ties by lower index. Requires k < rows.
NeighborTable knn_indices(const Points& coords, int k);

}  // namespace hsnorm
