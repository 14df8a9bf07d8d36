#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "dptrack/checkpoint.hpp"
#include "dptrack/nn.hpp"
#include "dptrack/scene_io.hpp"

namespace dptrack {

// K learned 2-D locations in normalized image coordinates [-1, 1]^2,
// channel index k stable across forward/backward passes.
struct DynamicPointSet {
  std::vector<Vec2> points;

  size_t k() const { return points.size(); }
};

struct HeatmapStack {
  Tensor<float> maps;  // (1, K, H', W'), values in (0, 1]
  double sigma = 0.1;
};

struct LossBreakdown {
  double total = 0;
  double reconstruction = 0;
  double consistency = 0;
};

// Location-wise MSE between two point sets: mean over all 2K coordinates.
inline double consistency_loss(const DynamicPointSet& a, const DynamicPointSet& b) {
  if (a.k() != b.k()) throw ShapeError("consistency_loss: K mismatch");
  double s = 0;
  for (size_t i = 0; i < a.k(); ++i) {
    double dx = a.points[i].x - b.points[i].x;
    double dy = a.points[i].y - b.points[i].y;
    s += dx * dx + dy * dy;
  }
  return s / double(2 * a.k());
}

inline double reconstruction_loss(const Tensor<float>& recon, const Tensor<float>& target) {
  return nn::mse(recon, target);
}

inline HeatmapStack render_heatmaps(const DynamicPointSet& phi, int h, int w, double sigma) {
  Tensor<float> pts(1, int(phi.k()), 2, 1);
  for (size_t i = 0; i < phi.k(); ++i) {
    pts.data[i * 2 + 0] = float(phi.points[i].x);
    pts.data[i * 2 + 1] = float(phi.points[i].y);
  }
  return HeatmapStack{nn::render_heatmaps(pts, h, w, float(sigma)), sigma};
}

inline Tensor<float> image_to_tensor(const cv::Mat& img) {
  CV_Assert(img.type() == CV_32FC3);
  Tensor<float> t(1, 3, img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3f* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < img.cols; ++x)
      for (int c = 0; c < 3; ++c) t.plane(0, c)[y * img.cols + x] = row[x][c];
  }
  return t;
}

inline cv::Mat tensor_to_image(const Tensor<float>& t, int sample = 0) {
  cv::Mat img(t.h, t.w, CV_32FC3);
  for (int y = 0; y < t.h; ++y) {
    cv::Vec3f* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < 3; ++c) row[x][c] = t.plane(sample, c)[y * t.w + x];
  }
  return img;
}

struct ModelConfig {
  int k_points = 180;
  double sigma = 0.1;
  double beta = 0.5;
  double softmax_temp = 1.0;
  int resolution = 128;
  bool use_forward = true;
  bool use_backward = true;
  bool use_consistency = true;
};

template <typename T>
struct TrainBatch {
  Tensor<T> i1, prev, curr, next;
};

// Unsupervised dynamic-point discovery: a shared-weight extractor applied in
// forward (t-1 -> t) and backward (t+1 -> t) directions, a background
// encoder on the first frame, and a decoder that reconstructs frame t from
// background features plus dynamic-point gaussian heatmaps.
template <typename T>
class DynamicPointModel {
 public:
  using Cfg = ModelConfig;

  DynamicPointModel(const Cfg& cfg, uint32_t seed) : cfg_(cfg) {
    if (cfg.resolution % 8 != 0) throw ParamError("resolution must be divisible by 8");
    if (cfg.sigma <= 0) throw ParamError("sigma must be > 0");
    if (!cfg.use_forward && !cfg.use_backward)
      throw ParamError("at least one extractor direction must stay enabled");
    std::mt19937 rng(seed);
    encoder_ = make_backbone("enc", 3, rng);
    extractor_f_ = make_backbone("ext", 6, rng);
    extractor_f_.add(std::make_unique<nn::Conv2d<T>>("ext.head", 512, cfg.k_points, 1, true, rng,
                                                     0.01));
    extractor_b_ = extractor_f_.clone_shared();
    decoder_ = make_decoder("dec", 512 + cfg.k_points, rng);
  }

  const Cfg& config() const { return cfg_; }
  int feature_size() const { return cfg_.resolution / 8; }

  std::vector<nn::ParamPtr<T>> params() const {
    std::vector<nn::ParamPtr<T>> all;
    encoder_.collect(all);
    extractor_f_.collect(all);
    decoder_.collect(all);
    return nn::unique_params(all);
  }

  // Background/layout features of the reference frame.
  Tensor<T> encode_background(const Tensor<T>& i1) {
    check_resolution(i1);
    return encoder_.forward(i1);
  }

  // Dynamic points of frame_b from the (frame_a, frame_b) pair.
  Tensor<T> extract_points_tensor(const Tensor<T>& frame_a, const Tensor<T>& frame_b) {
    check_resolution(frame_a);
    check_resolution(frame_b);
    Tensor<T> act = extractor_f_.forward(concat_channels(frame_a, frame_b));
    if (!act.finite()) throw DivergenceError("extractor produced non-finite activations");
    cache_f_ = nn::spatial_soft_argmax(act, T(cfg_.softmax_temp));
    return cache_f_.points;
  }

  DynamicPointSet extract_dynamic_points(const cv::Mat& frame_a, const cv::Mat& frame_b) {
    Tensor<T> pts = extract_points_tensor(to_model_tensor(frame_a), to_model_tensor(frame_b));
    DynamicPointSet out;
    out.points.resize(cfg_.k_points);
    for (int k = 0; k < cfg_.k_points; ++k)
      out.points[k] = {double(pts.data[k * 2 + 0]), double(pts.data[k * 2 + 1])};
    return out;
  }

  Tensor<T> decode(const Tensor<T>& background, const Tensor<T>& heatmaps) {
    if (background.h != heatmaps.h || background.w != heatmaps.w)
      throw ShapeError("decode: spatial mismatch between features and heatmaps");
    return decoder_.forward(concat_channels(background, heatmaps));
  }

  LossBreakdown train_step(const TrainBatch<T>& batch, nn::Adam<T>& opt) {
    const bool fwd = cfg_.use_forward, bwd = cfg_.use_backward;
    const double beta_eff = (fwd && bwd && cfg_.use_consistency) ? cfg_.beta : 0.0;

    Tensor<T> bg = encoder_.forward(batch.i1);

    Tensor<T> act_f, act_b;
    if (fwd) {
      act_f = extractor_f_.forward(concat_channels(batch.prev, batch.curr));
      cache_f_ = nn::spatial_soft_argmax(act_f, T(cfg_.softmax_temp));
    }
    if (bwd) {
      act_b = extractor_b_.forward(concat_channels(batch.next, batch.curr));
      cache_b_ = nn::spatial_soft_argmax(act_b, T(cfg_.softmax_temp));
    }
    const Tensor<T>& phi_recon = fwd ? cache_f_.points : cache_b_.points;

    Tensor<T> heat = nn::render_heatmaps(phi_recon, bg.h, bg.w, T(cfg_.sigma));
    Tensor<T> recon = decoder_.forward(concat_channels(bg, heat));

    LossBreakdown loss;
    loss.reconstruction = double(nn::mse(recon, batch.curr));
    loss.consistency = (fwd && bwd) ? double(nn::mse(cache_f_.points, cache_b_.points)) : 0.0;
    loss.total = loss.reconstruction + beta_eff * loss.consistency;
    if (!std::isfinite(loss.total)) throw DivergenceError("non-finite training loss");

    // Backward.
    auto ps = params();
    for (auto& p : ps) p->zero_grad();

    Tensor<T> drecon = nn::mse_backward(recon, batch.curr);
    Tensor<T> ddec_in = decoder_.backward(drecon);
    auto [dbg, dheat] = split_channels(ddec_in, bg.c);
    encoder_.backward(dbg);

    Tensor<T> dphi_recon = nn::render_heatmaps_backward(phi_recon, heat, dheat, T(cfg_.sigma));
    Tensor<T> dphi_f = fwd ? dphi_recon : Tensor<T>();
    Tensor<T> dphi_b = (!fwd && bwd) ? dphi_recon : Tensor<T>();
    if (fwd && bwd && beta_eff > 0) {
      Tensor<T> dc_f = nn::mse_backward(cache_f_.points, cache_b_.points, T(beta_eff));
      Tensor<T> dc_b = nn::mse_backward(cache_b_.points, cache_f_.points, T(beta_eff));
      for (size_t i = 0; i < dphi_f.data.size(); ++i) dphi_f.data[i] += dc_f.data[i];
      dphi_b = dc_b;
    }
    if (fwd) extractor_f_.backward(nn::spatial_soft_argmax_backward(cache_f_, dphi_f));
    if (bwd && dphi_b.size() > 0)
      extractor_b_.backward(nn::spatial_soft_argmax_backward(cache_b_, dphi_b));

    opt.step(ps);
    return loss;
  }

  void save(const std::string& path) const {
    std::map<std::string, double> hypers = {
        {"k_points", double(cfg_.k_points)}, {"sigma", cfg_.sigma},
        {"beta", cfg_.beta},                 {"softmax_temp", cfg_.softmax_temp},
        {"resolution", double(cfg_.resolution)}};
    save_checkpoint(path, hypers, params());
  }

  static DynamicPointModel load(const std::string& path) {
    CheckpointData ck = load_checkpoint(path);
    Cfg cfg;
    cfg.k_points = int(ck.hypers.at("k_points"));
    cfg.sigma = ck.hypers.at("sigma");
    cfg.beta = ck.hypers.at("beta");
    cfg.softmax_temp = ck.hypers.at("softmax_temp");
    cfg.resolution = int(ck.hypers.at("resolution"));
    DynamicPointModel model(cfg, 0);
    restore_params(ck, model.params());
    return model;
  }

  Tensor<T> to_model_tensor(const cv::Mat& frame) const {
    cv::Mat resized = frame;
    if (frame.rows != cfg_.resolution || frame.cols != cfg_.resolution)
      cv::resize(frame, resized, cv::Size(cfg_.resolution, cfg_.resolution), 0, 0,
                 cv::INTER_LINEAR);
    Tensor<float> ft = image_to_tensor(resized);
    if constexpr (std::is_same_v<T, float>) return ft;
    Tensor<T> t(ft.n, ft.c, ft.h, ft.w);
    for (size_t i = 0; i < ft.data.size(); ++i) t.data[i] = T(ft.data[i]);
    return t;
  }

 private:
  void check_resolution(const Tensor<T>& x) const {
    if (x.h != cfg_.resolution || x.w != cfg_.resolution)
      throw ShapeError("input does not match configured training resolution");
  }

  static Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw ShapeError("concat: shape mismatch");
    Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
    const size_t hw = size_t(a.h) * a.w;
    for (int in = 0; in < a.n; ++in) {
      std::memcpy(out.plane(in, 0), a.plane(in, 0), sizeof(T) * hw * a.c);
      std::memcpy(out.plane(in, a.c), b.plane(in, 0), sizeof(T) * hw * b.c);
    }
    return out;
  }

  static std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int c_first) {
    Tensor<T> a(x.n, c_first, x.h, x.w), b(x.n, x.c - c_first, x.h, x.w);
    const size_t hw = size_t(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
      std::memcpy(a.plane(in, 0), x.plane(in, 0), sizeof(T) * hw * c_first);
      std::memcpy(b.plane(in, 0), x.plane(in, c_first), sizeof(T) * hw * (x.c - c_first));
    }
    return {std::move(a), std::move(b)};
  }

  // Conv-norm-activation stacks; 'M' halves the spatial size.
  static nn::Sequential<T> make_backbone(const std::string& prefix, int c_in, std::mt19937& rng) {
    nn::Sequential<T> s;
    const int plan[] = {64, 128, -1, 256, 256, -1, 512, 512, -1, 512, 512};
    int c = c_in, idx = 0;
    for (int v : plan) {
      if (v < 0) {
        s.add(std::make_unique<nn::MaxPool2<T>>());
        continue;
      }
      std::string name = prefix + "." + std::to_string(idx++);
      s.add(std::make_unique<nn::Conv2d<T>>(name, c, v, 3, false, rng));
      s.add(std::make_unique<nn::BatchNorm2d<T>>(name + ".bn", v));
      s.add(std::make_unique<nn::LeakyReLU<T>>());
      c = v;
    }
    return s;
  }

  // Reverse of the backbone; 'U' doubles the spatial size bilinearly.
  static nn::Sequential<T> make_decoder(const std::string& prefix, int c_in, std::mt19937& rng) {
    nn::Sequential<T> s;
    const int plan[] = {512, 512, -1, 256, 256, -1, 256, 256, -1, 128, 64};
    int c = c_in, idx = 0;
    for (int v : plan) {
      if (v < 0) {
        s.add(std::make_unique<nn::UpsampleBilinear2<T>>());
        continue;
      }
      std::string name = prefix + "." + std::to_string(idx++);
      s.add(std::make_unique<nn::Conv2d<T>>(name, c, v, 3, false, rng));
      s.add(std::make_unique<nn::BatchNorm2d<T>>(name + ".bn", v));
      s.add(std::make_unique<nn::LeakyReLU<T>>());
      c = v;
    }
    s.add(std::make_unique<nn::Conv2d<T>>(prefix + ".out", c, 3, 1, true, rng));
    s.add(std::make_unique<nn::Sigmoid<T>>());
    return s;
  }

  Cfg cfg_;
  nn::Sequential<T> encoder_, extractor_f_, extractor_b_, decoder_;
  nn::SoftArgmaxCache<T> cache_f_, cache_b_;
};

// Uniformly samples (I1, I_{t-1}, I_t, I_{t+1}) tuples with t in the valid
// interior; I1 is always the sequence's first frame.
template <typename T>
TrainBatch<T> sample_batch(const DynamicPointModel<T>& model, const FrameSequence& seq,
                           int batch_size, std::mt19937& rng) {
  if (seq.size() < 4) throw ParamError("training needs at least 4 frames");
  std::uniform_int_distribution<int> pick(1, int(seq.size()) - 2);
  const int res = model.config().resolution;
  TrainBatch<T> b{Tensor<T>(batch_size, 3, res, res), Tensor<T>(batch_size, 3, res, res),
                  Tensor<T>(batch_size, 3, res, res), Tensor<T>(batch_size, 3, res, res)};
  auto put = [&](Tensor<T>& dst, int slot, const cv::Mat& img) {
    Tensor<T> t = model.to_model_tensor(img);
    std::memcpy(dst.plane(slot, 0), t.data.data(), sizeof(T) * t.size());
  };
  for (int i = 0; i < batch_size; ++i) {
    int t = pick(rng);
    put(b.i1, i, seq.frames.front());
    put(b.prev, i, seq.frames[t - 1]);
    put(b.curr, i, seq.frames[t]);
    put(b.next, i, seq.frames[t + 1]);
  }
  return b;
}

}  // namespace dptrack
