#pragma once

#include <map>

#include "dptrack/assignment.hpp"
#include "dptrack/scene_io.hpp"

namespace dptrack {

struct MatchReport {
  double precision = 0;
  double recall = 0;
  long n_true_positive = 0;
  long n_detected = 0;
  long n_gt = 0;
};

namespace detail {

struct FrameCounts {
  long tp = 0, detected = 0, gt = 0;
  double precision() const {
    if (detected == 0) return gt == 0 ? 1.0 : 0.0;
    return double(tp) / double(detected);
  }
  double recall() const {
    if (gt == 0) return detected == 0 ? 1.0 : 0.0;
    return double(tp) / double(gt);
  }
};

inline long count_true_positive(const std::vector<Vec2>& detected, const std::vector<Vec2>& gt,
                                double threshold) {
  if (detected.empty() || gt.empty()) return 0;
  CostMatrix c(int(detected.size()), int(gt.size()));
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) c.at(i, j) = euclidean(detected[i], gt[j]);
  long tp = 0;
  for (const auto& [i, j] : km_assign(c))
    if (c.at(i, j) < threshold) ++tp;
  return tp;
}

}  // namespace detail

using FramePoints = std::map<int, std::vector<Vec2>>;

// Per-frame one-to-one matching (minimum-cost assignment); a matched pair is
// a true positive when its distance is strictly below the threshold.
// Precision/recall are macro-averaged over frames.
inline MatchReport instance_pr(const FramePoints& detected, const FramePoints& gt,
                               double threshold = 1.5) {
  std::map<int, detail::FrameCounts> frames;
  for (const auto& [fid, pts] : detected)
    if (!pts.empty()) frames[fid].detected = long(pts.size());
  for (const auto& [fid, pts] : gt)
    if (!pts.empty()) frames[fid].gt = long(pts.size());

  MatchReport rep;
  if (frames.empty()) {
    rep.precision = rep.recall = 1.0;
    return rep;
  }
  static const std::vector<Vec2> kEmpty;
  double psum = 0, rsum = 0;
  for (auto& [fid, fc] : frames) {
    auto dit = detected.find(fid);
    auto git = gt.find(fid);
    fc.tp = detail::count_true_positive(dit == detected.end() ? kEmpty : dit->second,
                                        git == gt.end() ? kEmpty : git->second, threshold);
    psum += fc.precision();
    rsum += fc.recall();
    rep.n_true_positive += fc.tp;
    rep.n_detected += fc.detected;
    rep.n_gt += fc.gt;
  }
  rep.precision = psum / double(frames.size());
  rep.recall = rsum / double(frames.size());
  return rep;
}

namespace detail {

// Mean euclidean distance over temporally overlapping steps; pairs without
// overlap get a sentinel cost above any sane threshold.
inline double track_pair_cost(const WorldTrack& a, const WorldTrack& b) {
  int lo = std::max(a.start_frame, b.start_frame);
  int hi = std::min(a.end_frame(), b.end_frame());
  if (lo > hi) return 1e9;
  double s = 0;
  for (int f = lo; f <= hi; ++f) s += euclidean(a.at_frame(f), b.at_frame(f));
  return s / double(hi - lo + 1);
}

}  // namespace detail

// Whole-dataset track matching under the mean-overlap-distance cost.
inline MatchReport trajectory_pr(const std::vector<WorldTrack>& extracted,
                                 const std::vector<WorldTrack>& gt, double threshold = 1.5) {
  MatchReport rep;
  rep.n_detected = long(extracted.size());
  rep.n_gt = long(gt.size());
  if (extracted.empty() || gt.empty()) {
    rep.precision = rep.n_detected == 0 ? (rep.n_gt == 0 ? 1.0 : 0.0) : 0.0;
    rep.recall = rep.n_gt == 0 ? 1.0 : 0.0;
    return rep;
  }
  CostMatrix c(int(extracted.size()), int(gt.size()));
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) c.at(i, j) = detail::track_pair_cost(extracted[i], gt[j]);
  for (const auto& [i, j] : km_assign(c))
    if (c.at(i, j) < threshold) ++rep.n_true_positive;
  rep.precision = double(rep.n_true_positive) / double(rep.n_detected);
  rep.recall = double(rep.n_true_positive) / double(rep.n_gt);
  return rep;
}

// Average L2 distance over all timesteps.
inline double ade(const std::vector<Vec2>& pred, const std::vector<Vec2>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("ade: length mismatch");
  if (pred.empty()) return 0;
  double s = 0;
  for (size_t i = 0; i < pred.size(); ++i) s += euclidean(pred[i], gt[i]);
  return s / double(pred.size());
}

// Distance at the final step only.
inline double fde(const std::vector<Vec2>& pred, const std::vector<Vec2>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("fde: length mismatch");
  if (pred.empty()) return 0;
  return euclidean(pred.back(), gt.back());
}

}  // namespace dptrack
