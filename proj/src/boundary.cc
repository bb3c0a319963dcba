#include "popup/boundary.h"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "popup/error.h"

namespace popup {

namespace {

constexpr double kGainTieEpsilon = 1e-12;
constexpr int kDistanceSamples = 9;

}  // namespace

EdgeSegment::EdgeSegment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, int id) : a_(a), b_(b), id_(id) {
  if (a == b) {
    throw Error(ErrorCode::DegenerateEdge, "edge segment endpoints coincide");
  }
  if (b_.x() < a_.x()) std::swap(a_, b_);
}

BoundaryCurve::BoundaryCurve(std::span<const Eigen::Vector2d> polyline) : raw_(polyline.begin(), polyline.end()) {
  if (raw_.size() < 2) {
    throw Error(ErrorCode::PreconditionViolation, "boundary curve needs at least two vertices");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : raw_) {
    lo = std::min(lo, p.x());
    hi = std::max(hi, p.x());
  }
  std::vector<double> columns;
  for (const auto& p : raw_) columns.push_back(p.x());
  for (double x = std::ceil(lo); x < hi; x += 1.0) columns.push_back(x);
  std::sort(columns.begin(), columns.end());
  columns.erase(std::unique(columns.begin(), columns.end()), columns.end());

  xs_.reserve(columns.size());
  ys_.reserve(columns.size());
  for (double x : columns) {
    double y = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < raw_.size(); ++i) {
      const auto& p = raw_[i];
      const auto& q = raw_[i + 1];
      const double x0 = std::min(p.x(), q.x());
      const double x1 = std::max(p.x(), q.x());
      if (x < x0 || x > x1) continue;
      if (x1 - x0 <= 0.0) {
        y = std::max({y, p.y(), q.y()});
      } else {
        const double s = (x - p.x()) / (q.x() - p.x());
        y = std::max(y, p.y() + s * (q.y() - p.y()));
      }
    }
    xs_.push_back(x);
    ys_.push_back(y);
  }
  if (xs_.size() < 2) {
    // Degenerate vertical curve: a single column.
    xs_.push_back(xs_.front());
    ys_.push_back(ys_.front());
  }
}

double BoundaryCurve::y_at(double x) const {
  if (x <= xs_.front()) return ys_.front();
  if (x >= xs_.back()) return ys_.back();
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
  const double x0 = xs_[i - 1];
  const double x1 = xs_[i];
  const double s = (x - x0) / (x1 - x0);
  return ys_[i - 1] + s * (ys_[i] - ys_[i - 1]);
}

void SelectionParams::validate() const {
  if (close_threshold < 0 || overlap_threshold < 0 || min_length < 0 || merge_gap < 0 || merge_angle_deg < 0) {
    throw Error(ErrorCode::InvalidSpec, "selection thresholds must be nonnegative");
  }
}

double edge_curve_distance(const EdgeSegment& e, const BoundaryCurve& curve) {
  constexpr double kRangeSlack = 1e-9;
  double worst = 0.0;
  for (int i = 0; i < kDistanceSamples; ++i) {
    const double t = (i + 0.5) / kDistanceSamples;
    const Eigen::Vector2d p = e.a() + t * (e.b() - e.a());
    if (p.x() < curve.x_min() - kRangeSlack || p.x() > curve.x_max() + kRangeSlack) {
      return std::numeric_limits<double>::infinity();
    }
    worst = std::max(worst, std::abs(p.y() - curve.y_at(p.x())));
  }
  return worst;
}

double horizontal_overlap(const EdgeSegment& e1, const EdgeSegment& e2) {
  return std::max(0.0, std::min(e1.x_max(), e2.x_max()) - std::max(e1.x_min(), e2.x_min()));
}

double coverage_score(std::span<const EdgeSegment> edges) {
  if (edges.empty()) return 0.0;
  std::vector<std::pair<double, double>> intervals;
  intervals.reserve(edges.size());
  for (const auto& e : edges) intervals.emplace_back(e.x_min(), e.x_max());
  std::sort(intervals.begin(), intervals.end());
  double total = 0.0;
  double lo = intervals.front().first;
  double hi = intervals.front().second;
  for (std::size_t i = 1; i < intervals.size(); ++i) {
    if (intervals[i].first > hi) {
      total += hi - lo;
      lo = intervals[i].first;
      hi = intervals[i].second;
    } else {
      hi = std::max(hi, intervals[i].second);
    }
  }
  return total + (hi - lo);
}

double marginal_gain(const EdgeSegment& e, std::span<const EdgeSegment> selected) {
  std::vector<EdgeSegment> with(selected.begin(), selected.end());
  with.push_back(e);
  return std::max(0.0, coverage_score(with) - coverage_score(selected));
}

std::vector<EdgeSegment> filter_close(std::span<const EdgeSegment> edges, const BoundaryCurve& curve,
                                      const SelectionParams& params) {
  std::vector<EdgeSegment> out;
  for (const auto& e : edges) {
    if (edge_curve_distance(e, curve) < params.close_threshold) out.push_back(e);
  }
  return out;
}

std::size_t count_conflicting_pairs(std::span<const EdgeSegment> close_edges, const SelectionParams& params) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < close_edges.size(); ++i) {
    for (std::size_t j = i + 1; j < close_edges.size(); ++j) {
      if (horizontal_overlap(close_edges[i], close_edges[j]) >= params.overlap_threshold) ++k;
    }
  }
  return k;
}

bool satisfies_constraints(std::span<const EdgeSegment> selection, const BoundaryCurve& curve,
                           const SelectionParams& params) {
  for (std::size_t i = 0; i < selection.size(); ++i) {
    if (!(edge_curve_distance(selection[i], curve) < params.close_threshold)) return false;
    for (std::size_t j = i + 1; j < selection.size(); ++j) {
      if (!(horizontal_overlap(selection[i], selection[j]) < params.overlap_threshold)) return false;
    }
  }
  return true;
}

Selection greedy_select(std::span<const EdgeSegment> edges, const BoundaryCurve& curve,
                        const SelectionParams& params) {
  std::vector<EdgeSegment> candidates = filter_close(edges, curve, params);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const EdgeSegment& x, const EdgeSegment& y) { return x.id() < y.id(); });

  Selection result;
  while (!candidates.empty()) {
    std::ptrdiff_t best = -1;
    double best_gain = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double gain = marginal_gain(candidates[i], result.edges);
      if (best < 0 || gain > best_gain + kGainTieEpsilon) {
        best = static_cast<std::ptrdiff_t>(i);
        best_gain = gain;
      }
    }
    const EdgeSegment chosen = candidates[static_cast<std::size_t>(best)];
    result.edges.push_back(chosen);
    // Infeasibility is permanent once the selection grows, so drop those now.
    std::erase_if(candidates, [&](const EdgeSegment& e) {
      return e.id() == chosen.id() || !(horizontal_overlap(e, chosen) < params.overlap_threshold);
    });
  }
  result.score = coverage_score(result.edges);
  return result;
}

Selection brute_force_select(std::span<const EdgeSegment> edges, const BoundaryCurve& curve,
                             const SelectionParams& params) {
  if (edges.size() > kBruteForceLimit) {
    throw Error(ErrorCode::TooManyEdges, "exhaustive selection limited to 20 edges");
  }
  const std::vector<EdgeSegment> close = filter_close(edges, curve, params);
  const std::size_t n = close.size();
  std::vector<std::uint32_t> conflicts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && !(horizontal_overlap(close[i], close[j]) < params.overlap_threshold)) {
        conflicts[i] |= (1u << j);
      }
    }
  }
  std::uint32_t best_mask = 0;
  double best_score = 0.0;
  std::vector<EdgeSegment> subset;
  subset.reserve(n);
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    bool feasible = true;
    for (std::size_t i = 0; i < n && feasible; ++i) {
      if ((mask >> i) & 1u) feasible = (conflicts[i] & mask) == 0;
    }
    if (!feasible) continue;
    subset.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if ((mask >> i) & 1u) subset.push_back(close[i]);
    }
    const double score = coverage_score(subset);
    if (score > best_score + kGainTieEpsilon) {
      best_score = score;
      best_mask = mask;
    }
  }
  Selection result;
  for (std::size_t i = 0; i < n; ++i) {
    if ((best_mask >> i) & 1u) result.edges.push_back(close[i]);
  }
  result.score = coverage_score(result.edges);
  return result;
}

std::vector<EdgeSegment> postprocess(std::span<const EdgeSegment> selected, const SelectionParams& params) {
  std::vector<EdgeSegment> out;
  for (const auto& e : selected) {
    if (e.length() >= params.min_length) out.push_back(e);
  }
  const auto by_x = [](const EdgeSegment& x, const EdgeSegment& y) {
    return x.x_min() < y.x_min() || (x.x_min() == y.x_min() && x.id() < y.id());
  };
  std::sort(out.begin(), out.end(), by_x);

  const double cos_limit = std::cos(params.merge_angle_deg * M_PI / 180.0);
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i + 1 < out.size(); ++i) {
      const EdgeSegment& l = out[i];
      const EdgeSegment& r = out[i + 1];
      const Eigen::Vector2d dl = (l.b() - l.a()).normalized();
      const Eigen::Vector2d dr = (r.b() - r.a()).normalized();
      if ((r.a() - l.b()).norm() > params.merge_gap || std::abs(dl.dot(dr)) < cos_limit) continue;
      std::array<Eigen::Vector2d, 4> pts{l.a(), l.b(), r.a(), r.b()};
      const auto [lo, hi] = std::minmax_element(
          pts.begin(), pts.end(), [](const auto& p, const auto& q) { return p.x() < q.x(); });
      out[i] = EdgeSegment(*lo, *hi, std::min(l.id(), r.id()));
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      merged = true;
      break;
    }
  }
  std::sort(out.begin(), out.end(), by_x);
  return out;
}

}  // namespace popup
