#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dptrack/common.hpp"

namespace dptrack {

// Frames are CV_32FC3 in RGB channel order with values in [0, 1].
struct FrameSequence {
  std::vector<cv::Mat> frames;
  double interval_s = 0.4;
  std::vector<int> frame_ids;

  int width() const { return frames.empty() ? 0 : frames.front().cols; }
  int height() const { return frames.empty() ? 0 : frames.front().rows; }
  size_t size() const { return frames.size(); }
};

struct Homography {
  // Row-major 3x3 pixel -> world (meters).
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  Homography inverse() const {
    double d = det();
    if (std::abs(d) < 1e-12) throw ParamError("homography is singular (|det| < 1e-12)");
    Homography r;
    r.m = {(m[4] * m[8] - m[5] * m[7]) / d, (m[2] * m[7] - m[1] * m[8]) / d,
           (m[1] * m[5] - m[2] * m[4]) / d, (m[5] * m[6] - m[3] * m[8]) / d,
           (m[0] * m[8] - m[2] * m[6]) / d, (m[2] * m[3] - m[0] * m[5]) / d,
           (m[3] * m[7] - m[4] * m[6]) / d, (m[1] * m[6] - m[0] * m[7]) / d,
           (m[0] * m[4] - m[1] * m[3]) / d};
    return r;
  }
};

struct ValidityMask {
  cv::Mat mask;  // CV_8U, nonzero = valid

  bool valid_at(double x, double y) const {
    int ix = int(std::lround(x));
    int iy = int(std::lround(y));
    if (ix < 0 || iy < 0 || ix >= mask.cols || iy >= mask.rows) return false;
    return mask.at<uint8_t>(iy, ix) != 0;
  }
};

struct TrajectoryRow {
  int frame_id = 0;
  int agent_id = 0;
  double x = 0;
  double y = 0;

  bool operator==(const TrajectoryRow& o) const {
    return frame_id == o.frame_id && agent_id == o.agent_id && x == o.x && y == o.y;
  }
};

struct TrajectoryFile {
  std::vector<TrajectoryRow> rows;
};

struct SyntheticSceneSpec {
  int width = 128;
  int height = 128;
  int n_agents = 2;
  double speed_px = 2.0;       // pixels per frame
  int blob_radius_px = 5;      // gaussian sigma = radius / 2
  int n_frames = 100;
  uint32_t background_seed = 0;
  double spawn_rate = 0.0;     // per-frame probability of a new agent
  double despawn_rate = 0.0;   // per-frame probability an agent leaves
  double noise_sigma = 0.0;    // pixel noise, [0,1] scale
};

// Per-agent chain of positions at consecutive frames.
struct WorldTrack {
  int agent_id = 0;
  int start_frame = 0;
  std::vector<Vec2> pos;

  int length() const { return int(pos.size()); }
  int end_frame() const { return start_frame + length() - 1; }

  bool covers(int frame) const { return frame >= start_frame && frame <= end_frame(); }
  Vec2 at_frame(int frame) const { return pos[frame - start_frame]; }
};

inline std::vector<WorldTrack> trajectory_file_to_tracks(const TrajectoryFile& tf) {
  std::map<int, std::map<int, Vec2>> by_agent;
  for (const auto& r : tf.rows) {
    auto [it, inserted] = by_agent[r.agent_id].emplace(r.frame_id, Vec2{r.x, r.y});
    if (!inserted)
      throw ParseError("duplicate (frame_id, agent_id) pair: " + std::to_string(r.frame_id) +
                       ", " + std::to_string(r.agent_id));
  }
  std::vector<WorldTrack> tracks;
  for (const auto& [agent, frames] : by_agent) {
    WorldTrack t;
    t.agent_id = agent;
    t.start_frame = frames.begin()->first;
    int expect = t.start_frame;
    for (const auto& [frame, p] : frames) {
      if (frame != expect)
        throw ParseError("agent " + std::to_string(agent) + " has a frame gap at " +
                         std::to_string(frame));
      t.pos.push_back(p);
      ++expect;
    }
    tracks.push_back(std::move(t));
  }
  return tracks;
}

inline Vec2 pixel_to_world(const Homography& h, const Vec2& p) {
  const auto& m = h.m;
  double wx = m[0] * p.x + m[1] * p.y + m[2];
  double wy = m[3] * p.x + m[4] * p.y + m[5];
  double ww = m[6] * p.x + m[7] * p.y + m[8];
  if (std::abs(ww) < 1e-12) throw ParamError("degenerate projection: |w| < 1e-12");
  return {wx / ww, wy / ww};
}

inline Vec2 world_to_pixel(const Homography& h, const Vec2& p) {
  return pixel_to_world(h.inverse(), p);
}

namespace detail {

inline std::optional<long> numeric_stem(const std::filesystem::path& p) {
  std::string stem = p.stem().string();
  long v = 0;
  auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), v);
  if (ec != std::errc() || ptr != stem.data() + stem.size()) return std::nullopt;
  return v;
}

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

inline FrameSequence load_frames(const std::string& path, double interval_s = 0.4) {
  if (interval_s <= 0) throw ParamError("interval_s must be > 0");
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) throw IoError("frame directory not found: " + path);

  std::vector<std::pair<long, fs::path>> entries;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file() || !detail::is_image_file(e.path())) continue;
    auto num = detail::numeric_stem(e.path());
    if (!num) throw IoError("frame file without numeric name: " + e.path().string());
    entries.emplace_back(*num, e.path());
  }
  if (entries.empty()) throw IoError("no frames in directory: " + path);
  std::sort(entries.begin(), entries.end());

  FrameSequence seq;
  seq.interval_s = interval_s;
  for (size_t i = 0; i < entries.size(); ++i) {
    cv::Mat img = cv::imread(entries[i].second.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw IoError("failed to read frame: " + entries[i].second.string());
    if (!seq.frames.empty() &&
        (img.cols != seq.frames.front().cols || img.rows != seq.frames.front().rows)) {
      throw IoError("frame size mismatch: " + entries[i].second.string());
    }
    cv::Mat rgb, f32;
    cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(f32, CV_32FC3, 1.0 / 255.0);
    seq.frames.push_back(f32);
    seq.frame_ids.push_back(int(i));
  }
  return seq;
}

inline void write_frames(const FrameSequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    cv::Mat u8, bgr;
    seq.frames[i].convertTo(u8, CV_8UC3, 255.0);
    cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    if (!cv::imwrite((fs::path(dir) / name).string(), bgr))
      throw IoError("failed to write frame " + std::string(name));
  }
}

inline TrajectoryFile read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);
  TrajectoryFile t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    TrajectoryRow r;
    std::string extra;
    if (!(ss >> r.frame_id >> r.agent_id >> r.x >> r.y)) {
      throw ParseError("malformed trajectory row at line " + std::to_string(line_no) + " of " +
                       path);
    }
    t.rows.push_back(r);
  }
  return t;
}

inline void write_trajectory_file(const TrajectoryFile& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  for (const auto& r : t.rows) {
    out << r.frame_id << ' ' << r.agent_id << ' ' << detail::format_double(r.x) << ' '
        << detail::format_double(r.y) << '\n';
  }
}

inline Homography read_homography(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open homography file: " + path);
  Homography h;
  for (int i = 0; i < 9; ++i) {
    if (!(in >> h.m[i])) throw ParseError("homography file must hold 9 numbers: " + path);
  }
  if (std::abs(h.det()) < 1e-12) throw ParamError("homography is singular: " + path);
  return h;
}

inline void write_homography(const Homography& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write homography file: " + path);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << detail::format_double(h.m[r * 3 + c]) << (c == 2 ? '\n' : ' ');
  }
}

inline ValidityMask read_mask(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read mask: " + path);
  return ValidityMask{m};
}

inline void write_mask(const ValidityMask& mask, const std::string& path) {
  if (!cv::imwrite(path, mask.mask)) throw IoError("cannot write mask: " + path);
}

namespace detail {

struct BlobAgent {
  int id;
  double x, y;
  double vx;           // lanes run horizontally; vy stays 0
  cv::Vec3f color;
  int spawn_frame;
  bool alive = true;
};

// Smooth value-noise texture, range roughly [0.2, 0.6].
inline cv::Mat make_background(int w, int h, std::mt19937& rng) {
  const int cell = 16;
  int gw = w / cell + 2, gh = h / cell + 2;
  cv::Mat grid(gh, gw, CV_32FC3);
  std::uniform_real_distribution<float> u(0.2f, 0.6f);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x) grid.at<cv::Vec3f>(y, x) = {u(rng), u(rng), u(rng)};
  cv::Mat bg;
  cv::resize(grid, bg, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);
  cv::min(bg, 0.6f, bg);
  cv::max(bg, 0.2f, bg);
  return bg;
}

}  // namespace detail

struct SyntheticScene {
  FrameSequence frames;
  TrajectoryFile gt;
  ValidityMask mask;
  cv::Mat background;
};

// Moving gaussian blobs over a static textured background. Agents occupy
// horizontal lanes and bounce off the side margins, so inter-agent distance
// never drops below the lane spacing. World == pixel coordinates (identity
// homography).
inline SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec, uint32_t seed) {
  if (spec.n_agents < 0) throw ParamError("n_agents must be >= 0");
  if (spec.n_frames < 4) throw ParamError("n_frames must be >= 4");
  if (spec.blob_radius_px >= std::min(spec.width, spec.height) / 2)
    throw ParamError("blob_radius_px too large for scene size");

  std::mt19937 rng(seed ^ spec.background_seed);
  SyntheticScene out;
  out.background = detail::make_background(spec.width, spec.height, rng);

  const double margin = spec.blob_radius_px + 4.0;
  const double span_x = spec.width - 1 - 2 * margin;
  const double span_y = spec.height - 1 - 2 * margin;
  std::uniform_real_distribution<double> ucolor(0.5, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<detail::BlobAgent> agents;
  int next_id = 0;
  auto lane_y = [&](int lane, int lanes) {
    return margin + (lane + 0.5) * span_y / std::max(1, lanes);
  };
  for (int i = 0; i < spec.n_agents; ++i) {
    detail::BlobAgent a;
    a.id = next_id++;
    a.y = lane_y(i, spec.n_agents);
    a.x = margin + std::fmod(i * 0.37 * span_x, std::max(1.0, span_x));
    a.vx = (i % 2 == 0) ? spec.speed_px : -spec.speed_px;
    a.color = {float(ucolor(rng)), float(ucolor(rng)), float(ucolor(rng))};
    a.spawn_frame = 0;
    agents.push_back(a);
  }

  const double sigma_b = spec.blob_radius_px / 2.0;
  const int support = int(std::ceil(3 * sigma_b)) + 1;

  out.frames.interval_s = 0.4;
  std::normal_distribution<float> noise(0.f, float(spec.noise_sigma));

  for (int t = 0; t < spec.n_frames; ++t) {
    cv::Mat frame = out.background.clone();
    for (auto& a : agents) {
      if (!a.alive) continue;
      int cx = int(std::lround(a.x)), cy = int(std::lround(a.y));
      for (int dy = -support; dy <= support; ++dy) {
        int py = cy + dy;
        if (py < 0 || py >= spec.height) continue;
        for (int dx = -support; dx <= support; ++dx) {
          int px = cx + dx;
          if (px < 0 || px >= spec.width) continue;
          double ddx = px - a.x, ddy = py - a.y;
          double g = std::exp(-(ddx * ddx + ddy * ddy) / (2 * sigma_b * sigma_b));
          cv::Vec3f& v = frame.at<cv::Vec3f>(py, px);
          v += a.color * float(0.4 * g);
        }
      }
      out.gt.rows.push_back({t, a.id, a.x, a.y});
    }
    if (spec.noise_sigma > 0) {
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          cv::Vec3f& v = frame.at<cv::Vec3f>(y, x);
          for (int ch = 0; ch < 3; ++ch)
            v[ch] = std::clamp(v[ch] + noise(rng), 0.f, 1.f);
        }
    }
    out.frames.frames.push_back(frame);
    out.frames.frame_ids.push_back(t);

    // advance
    for (auto& a : agents) {
      if (!a.alive) continue;
      if (spec.despawn_rate > 0 && u01(rng) < spec.despawn_rate) {
        a.alive = false;
        continue;
      }
      a.x += a.vx;
      double lo = margin, hi = spec.width - 1 - margin;
      if (a.x > hi) {
        a.x = 2 * hi - a.x;
        a.vx = -a.vx;
      } else if (a.x < lo) {
        a.x = 2 * lo - a.x;
        a.vx = -a.vx;
      }
    }
    if (spec.spawn_rate > 0 && u01(rng) < spec.spawn_rate) {
      detail::BlobAgent a;
      a.id = next_id++;
      a.y = margin + u01(rng) * span_y;
      a.x = margin + u01(rng) * span_x;
      a.vx = (u01(rng) < 0.5 ? 1 : -1) * spec.speed_px;
      a.color = {float(ucolor(rng)), float(ucolor(rng)), float(ucolor(rng))};
      a.spawn_frame = t + 1;
      agents.push_back(a);
    }
  }

  out.mask.mask = cv::Mat(spec.height, spec.width, CV_8U, cv::Scalar(0));
  out.mask.mask(cv::Rect(2, 2, spec.width - 4, spec.height - 4)) = 255;
  return out;
}

}  // namespace dptrack
