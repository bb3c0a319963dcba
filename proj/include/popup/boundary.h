#pragma once

// Ground-wall boundary selection: pick a subset of detected image line
// segments that lie close to the segmentation boundary curve and maximize
// horizontal coverage without overlapping each other.

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

namespace popup {

class EdgeSegment {
 public:
  // Endpoints are reordered so that a().x() <= b().x().
  EdgeSegment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, int id);

  const Eigen::Vector2d& a() const { return a_; }
  const Eigen::Vector2d& b() const { return b_; }
  int id() const { return id_; }
  double length() const { return (b_ - a_).norm(); }
  double x_min() const { return a_.x(); }
  double x_max() const { return b_.x(); }

  bool operator==(const EdgeSegment& other) const {
    return id_ == other.id_ && a_ == other.a_ && b_ == other.b_;
  }

 private:
  Eigen::Vector2d a_;
  Eigen::Vector2d b_;
  int id_;
};

// Segmentation boundary resampled to an x-monotone function y(x). Where the
// input polyline folds back, each column keeps its lowest image point
// (largest y).
class BoundaryCurve {
 public:
  explicit BoundaryCurve(std::span<const Eigen::Vector2d> polyline);

  double x_min() const { return xs_.front(); }
  double x_max() const { return xs_.back(); }
  // y at x by linear interpolation; x must lie in [x_min, x_max].
  double y_at(double x) const;
  const std::vector<Eigen::Vector2d>& polyline() const { return raw_; }

 private:
  std::vector<Eigen::Vector2d> raw_;
  std::vector<double> xs_;
  std::vector<double> ys_;
};

struct SelectionParams {
  double close_threshold = 25.0;    // pixels
  double overlap_threshold = 15.0;  // pixels
  double min_length = 15.0;         // pixels
  double merge_gap = 20.0;          // pixels
  double merge_angle_deg = 10.0;

  void validate() const;
};

struct Selection {
  std::vector<EdgeSegment> edges;
  double score = 0.0;
};

inline constexpr std::size_t kBruteForceLimit = 20;

// Max vertical distance to the curve over 9 evenly spaced samples of e, taken
// at the centers of equal sub-intervals so endpoint jitter at occlusion jumps
// does not decide the result;
// +inf if any sample falls outside the curve's x-range.
double edge_curve_distance(const EdgeSegment& e, const BoundaryCurve& curve);

double horizontal_overlap(const EdgeSegment& e1, const EdgeSegment& e2);

// Length of the union of the x-intervals.
double coverage_score(std::span<const EdgeSegment> edges);

double marginal_gain(const EdgeSegment& e, std::span<const EdgeSegment> selected);

// Edges passing the closeness constraint, in input order.
std::vector<EdgeSegment> filter_close(std::span<const EdgeSegment> edges, const BoundaryCurve& curve,
                                      const SelectionParams& params);

// Number of pairs (after closeness filtering) whose overlap violates the
// overlap threshold. Each pair induces one partition matroid constraint.
std::size_t count_conflicting_pairs(std::span<const EdgeSegment> close_edges,
                                    const SelectionParams& params);

bool satisfies_constraints(std::span<const EdgeSegment> selection, const BoundaryCurve& curve,
                           const SelectionParams& params);

// Greedy maximization; returned edges are in selection order. Ties in
// marginal gain go to the lowest id.
Selection greedy_select(std::span<const EdgeSegment> edges, const BoundaryCurve& curve,
                        const SelectionParams& params);

// Exact maximizer by subset enumeration. Throws TooManyEdges above
// kBruteForceLimit input edges.
Selection brute_force_select(std::span<const EdgeSegment> edges, const BoundaryCurve& curve,
                             const SelectionParams& params);

// Drops short edges and merges nearly collinear neighbours; output sorted by x.
std::vector<EdgeSegment> postprocess(std::span<const EdgeSegment> selected, const SelectionParams& params);

}  // namespace popup
