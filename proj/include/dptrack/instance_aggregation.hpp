#pragma once

#include <array>
#include <fstream>
#include <unordered_map>

#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "dptrack/nn.hpp"
#include "dptrack/scene_io.hpp"

namespace dptrack {

struct FlowField {
  cv::Mat flow;  // CV_32FC2, displacement from I_{t-1} to I_t in pixels
};

struct InstancePoint {
  Vec2 pos;  // pixel coordinates
  std::array<float, 3> rgb{0, 0, 0};
};

struct InstancePointSet {
  int frame_id = 0;
  int width = 0, height = 0;
  std::vector<InstancePoint> points;

  size_t size() const { return points.size(); }
};

// Dense two-frame flow via polynomial expansion (Farneback).
inline FlowField compute_optical_flow(const cv::Mat& i_prev, const cv::Mat& i_curr) {
  if (i_prev.size() != i_curr.size()) throw ShapeError("optical flow: frame size mismatch");
  auto to_gray = [](const cv::Mat& img) {
    cv::Mat gray, u8;
    cv::cvtColor(img, gray, cv::COLOR_RGB2GRAY);
    gray.convertTo(u8, CV_8U, 255.0);
    return u8;
  };
  FlowField f;
  cv::calcOpticalFlowFarneback(to_gray(i_prev), to_gray(i_curr), f.flow, 0.5, 3, 15, 3, 5, 1.2, 0);
  return f;
}

// Bilinear per-channel upsample preserving normalized grid positions.
inline Tensor<float> upsample_heatmaps(const Tensor<float>& maps, int target_h, int target_w) {
  if (target_h < maps.h || target_w < maps.w)
    throw ParamError("upsample_heatmaps: target smaller than source");
  Tensor<float> out(maps.n, maps.c, target_h, target_w);
  for (int in = 0; in < maps.n; ++in)
    for (int c = 0; c < maps.c; ++c)
      nn::bilinear_plane(maps.plane(in, c), maps.h, maps.w, out.plane(in, c), target_h, target_w);
  return out;
}

struct CandidatePixel {
  double x = 0, y = 0;
  float heat = 0;    // max over heatmap channels
  float flow_u = 0, flow_v = 0;

  double weight() const { return double(heat) + std::hypot(double(flow_u), double(flow_v)); }
};

// Pixels supported by either dynamic evidence source: max-over-k heatmap
// above tau_h or flow magnitude above tau_f.
inline std::vector<CandidatePixel> select_candidate_pixels(const Tensor<float>& heatmaps,
                                                           const FlowField& flow, double tau_h,
                                                           double tau_f, bool use_heatmaps = true,
                                                           bool use_flow = true) {
  const int h = use_flow ? flow.flow.rows : heatmaps.h;
  const int w = use_flow ? flow.flow.cols : heatmaps.w;
  if (use_heatmaps && use_flow && (heatmaps.h != h || heatmaps.w != w))
    throw ShapeError("select_candidate_pixels: heatmap/flow size mismatch");
  std::vector<CandidatePixel> out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      CandidatePixel c;
      c.x = x;
      c.y = y;
      if (use_heatmaps) {
        float mx = 0;
        for (int k = 0; k < heatmaps.c; ++k) mx = std::max(mx, heatmaps.plane(0, k)[y * w + x]);
        c.heat = mx;
      }
      if (use_flow) {
        cv::Vec2f f = flow.flow.at<cv::Vec2f>(y, x);
        c.flow_u = f[0];
        c.flow_v = f[1];
      }
      double fmag = std::hypot(double(c.flow_u), double(c.flow_v));
      if ((use_heatmaps && c.heat > tau_h) || (use_flow && fmag > tau_f)) out.push_back(c);
    }
  return out;
}

struct ClusterMode {
  double x = 0, y = 0;
  double weight = 0;
};

// Flat-kernel weighted mean-shift on pixel coordinates. Every candidate is a
// seed; converged modes closer than bandwidth/2 merge (weighted mean).
inline std::vector<ClusterMode> mean_shift_cluster(const std::vector<CandidatePixel>& candidates,
                                                   double bandwidth) {
  if (bandwidth <= 0) throw ParamError("mean_shift_cluster: bandwidth must be > 0");
  std::vector<ClusterMode> modes;
  if (candidates.empty()) return modes;

  // bandwidth-sized grid buckets for window queries
  std::unordered_map<long long, std::vector<int>> grid;
  auto cell_key = [&](double x, double y) {
    long long cx = (long long)std::floor(x / bandwidth);
    long long cy = (long long)std::floor(y / bandwidth);
    return cx * 1000003LL + cy;
  };
  for (size_t i = 0; i < candidates.size(); ++i)
    grid[cell_key(candidates[i].x, candidates[i].y)].push_back(int(i));

  const double bw2 = bandwidth * bandwidth;
  auto shift_once = [&](double x, double y, double& ox, double& oy) {
    double sw = 0, sx = 0, sy = 0;
    long long cx = (long long)std::floor(x / bandwidth);
    long long cy = (long long)std::floor(y / bandwidth);
    for (long long dy = -1; dy <= 1; ++dy)
      for (long long dx = -1; dx <= 1; ++dx) {
        auto it = grid.find((cx + dx) * 1000003LL + (cy + dy));
        if (it == grid.end()) continue;
        for (int i : it->second) {
          const CandidatePixel& c = candidates[i];
          double ddx = c.x - x, ddy = c.y - y;
          if (ddx * ddx + ddy * ddy < bw2) {
            double w = c.weight();
            sw += w;
            sx += w * c.x;
            sy += w * c.y;
          }
        }
      }
    if (sw <= 0) {
      ox = x;
      oy = y;
      return;
    }
    ox = sx / sw;
    oy = sy / sw;
  };

  std::vector<ClusterMode> converged(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    double x = candidates[i].x, y = candidates[i].y;
    for (int it = 0; it < 100; ++it) {
      double nx, ny;
      shift_once(x, y, nx, ny);
      double move = std::hypot(nx - x, ny - y);
      x = nx;
      y = ny;
      if (move < 1e-9) break;
    }
    converged[i] = {x, y, candidates[i].weight()};
  }

  const double merge_r = bandwidth / 2;
  for (const auto& m : converged) {
    bool merged = false;
    for (auto& out : modes) {
      if (std::hypot(out.x - m.x, out.y - m.y) < merge_r) {
        double tw = out.weight + m.weight;
        out.x = (out.x * out.weight + m.x * m.weight) / tw;
        out.y = (out.y * out.weight + m.y * m.weight) / tw;
        out.weight = tw;
        merged = true;
        break;
      }
    }
    if (!merged) modes.push_back(m);
  }
  return modes;
}

// RGB is a 3x3 mean patch of the frame at the cluster center.
inline InstancePointSet make_instance_points(const std::vector<ClusterMode>& modes,
                                             const cv::Mat& frame, int frame_id) {
  InstancePointSet out;
  out.frame_id = frame_id;
  out.width = frame.cols;
  out.height = frame.rows;
  for (const auto& m : modes) {
    InstancePoint p;
    p.pos = {m.x, m.y};
    int cx = int(std::lround(m.x)), cy = int(std::lround(m.y));
    cv::Vec3f acc(0, 0, 0);
    int cnt = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        int px = cx + dx, py = cy + dy;
        if (px < 0 || py < 0 || px >= frame.cols || py >= frame.rows) continue;
        acc += frame.at<cv::Vec3f>(py, px);
        ++cnt;
      }
    if (cnt > 0) acc *= 1.0f / cnt;
    p.rgb = {acc[0], acc[1], acc[2]};
    out.points.push_back(p);
  }
  return out;
}

// Keeps points whose nearest pixel lies in the valid region.
inline InstancePointSet apply_validity_filter(const InstancePointSet& ips,
                                              const ValidityMask& mask) {
  if (mask.mask.cols != ips.width || mask.mask.rows != ips.height)
    throw ShapeError("validity filter: mask size mismatch");
  InstancePointSet out;
  out.frame_id = ips.frame_id;
  out.width = ips.width;
  out.height = ips.height;
  for (const auto& p : ips.points)
    if (mask.valid_at(p.pos.x, p.pos.y)) out.points.push_back(p);
  return out;
}

// Debug dump: one `frame_id x y r g b` row per instance point.
inline void write_instance_points(const std::vector<InstancePointSet>& sets,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write instance points: " + path);
  for (const auto& s : sets) {
    for (const auto& p : s.points) {
      out << s.frame_id << ' ' << detail::format_double(p.pos.x) << ' '
          << detail::format_double(p.pos.y) << ' ' << detail::format_double(p.rgb[0]) << ' '
          << detail::format_double(p.rgb[1]) << ' ' << detail::format_double(p.rgb[2]) << '\n';
    }
  }
}

inline std::vector<InstancePointSet> read_instance_points(const std::string& path, int width,
                                                          int height) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open instance points: " + path);
  std::map<int, InstancePointSet> by_frame;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    int fid;
    double x, y;
    float r, g, b;
    if (!(ss >> fid >> x >> y >> r >> g >> b))
      throw ParseError("malformed instance-point row at line " + std::to_string(line_no));
    auto& s = by_frame[fid];
    s.frame_id = fid;
    s.width = width;
    s.height = height;
    s.points.push_back({{x, y}, {r, g, b}});
  }
  std::vector<InstancePointSet> out;
  for (auto& [fid, s] : by_frame) out.push_back(std::move(s));
  return out;
}

}  // namespace dptrack
