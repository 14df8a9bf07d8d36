#pragma once

#include <map>

#include "dptrack/assignment.hpp"
#include "dptrack/instance_aggregation.hpp"
#include "dptrack/scene_io.hpp"

namespace dptrack {

// Pixel-space track: one position per consecutive frame.
struct Track {
  int agent_id = 0;
  int start_frame = 0;
  std::vector<Vec2> positions;
  std::vector<std::array<float, 3>> rgbs;

  int length() const { return int(positions.size()); }
  int end_frame() const { return start_frame + length() - 1; }
};

// c[i][j] = euclidean(pos_i, pos_j) + lambda * L1(rgb_i, rgb_j)
inline CostMatrix build_cost_matrix(const InstancePointSet& p, const InstancePointSet& q,
                                    double lambda) {
  if (lambda < 0) throw ParamError("build_cost_matrix: lambda must be >= 0");
  CostMatrix c(int(p.size()), int(q.size()));
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) {
      double d = euclidean(p.points[i].pos, q.points[j].pos);
      double rgb = 0;
      for (int ch = 0; ch < 3; ++ch)
        rgb += std::abs(double(p.points[i].rgb[ch]) - double(q.points[j].rgb[ch]));
      c.at(i, j) = d + lambda * rgb;
    }
  return c;
}

struct PairClassification {
  Assignment true_pairs;
  Assignment false_pairs;
};

// A matched pair is true iff its cost is strictly below the threshold;
// false pairs count as unmatched on both sides.
inline PairClassification classify_pairs(const Assignment& assignment, const CostMatrix& c,
                                         double threshold) {
  if (threshold <= 0) throw ParamError("classify_pairs: threshold must be > 0");
  PairClassification out;
  for (const auto& [i, j] : assignment) {
    if (c.at(i, j) < threshold)
      out.true_pairs.emplace_back(i, j);
    else
      out.false_pairs.emplace_back(i, j);
  }
  return out;
}

// Greedy temporal chaining of true pairs with the bidirectional start filter:
// a point unmatched backward starts a track only if it matches forward into
// the next frame; otherwise it is an outlier.
inline std::vector<Track> assemble_tracks(const std::vector<InstancePointSet>& frames,
                                          double lambda, double threshold) {
  std::vector<Track> tracks;
  std::map<int, int> active;  // point index in frame t -> track index
  for (size_t ti = 0; ti + 1 < frames.size(); ++ti) {
    const InstancePointSet& cur = frames[ti];
    const InstancePointSet& nxt = frames[ti + 1];
    CostMatrix c = build_cost_matrix(cur, nxt, lambda);
    PairClassification cls = classify_pairs(km_assign(c), c, threshold);
    std::map<int, int> next_active;
    for (const auto& [i, j] : cls.true_pairs) {
      auto it = active.find(i);
      int track_idx;
      if (it != active.end()) {
        track_idx = it->second;
      } else {
        track_idx = int(tracks.size());
        Track t;
        t.agent_id = track_idx;
        t.start_frame = cur.frame_id;
        t.positions.push_back(cur.points[i].pos);
        t.rgbs.push_back(cur.points[i].rgb);
        tracks.push_back(std::move(t));
      }
      tracks[track_idx].positions.push_back(nxt.points[j].pos);
      tracks[track_idx].rgbs.push_back(nxt.points[j].rgb);
      next_active[j] = track_idx;
    }
    active = std::move(next_active);
  }
  return tracks;
}

inline std::vector<Track> filter_tracks(std::vector<Track> tracks, int min_len = 20) {
  if (min_len < 1) throw ParamError("filter_tracks: min_len must be >= 1");
  std::vector<Track> out;
  for (auto& t : tracks)
    if (t.length() >= min_len) out.push_back(std::move(t));
  for (size_t i = 0; i < out.size(); ++i) out[i].agent_id = int(i);
  return out;
}

// Serializes tracks in the 4-column trajectory format; positions go through
// the homography when one is given.
inline TrajectoryFile tracks_to_trajectory_file(const std::vector<Track>& tracks,
                                                const Homography* h = nullptr) {
  TrajectoryFile tf;
  for (const auto& t : tracks) {
    for (int s = 0; s < t.length(); ++s) {
      Vec2 p = t.positions[s];
      if (h) p = pixel_to_world(*h, p);
      tf.rows.push_back({t.start_frame + s, t.agent_id, p.x, p.y});
    }
  }
  return tf;
}

}  // namespace dptrack
