#include "tatrack/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "tatrack/core/error.hpp"

namespace tatrack::data {

namespace fs = std::filesystem;

namespace {

using Color = std::array<double, 3>;

constexpr double kPi = 3.14159265358979323846;

Color hsv_color(double hue_deg, double sat, double val) {
  const double h = std::fmod(std::fmod(hue_deg, 360.0) + 360.0, 360.0) / 60.0;
  const double c = val * sat;
  const double x = c * (1 - std::abs(std::fmod(h, 2.0) - 1));
  const double m = val - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return {255 * (b + m), 255 * (g + m), 255 * (r + m)};  // BGR
}

double hue_gap(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

struct Canvas {
  int w = 0, h = 0;
  std::vector<double> rgb;  // interleaved BGR
  std::vector<double> tir;

  Canvas(int width, int height) : w(width), h(height), rgb(size_t(3) * width * height), tir(size_t(width) * height) {}

  // Pixel coverage of the box [x0,x1) x [y0,y1) for pixel (i, j).
  static double coverage(double x0, double y0, double x1, double y1, int i, int j) {
    const double cx = std::max(0.0, std::min(x1, j + 1.0) - std::max(x0, double(j)));
    const double cy = std::max(0.0, std::min(y1, i + 1.0) - std::max(y0, double(i)));
    return cx * cy;
  }

  // Paints a box; `rgb_at(u, v)` / `tir_at(u, v)` give colours at box-relative
  // coordinates u, v in [0, 1]. A negative tir value leaves that channel alone.
  template <typename RgbFn, typename TirFn>
  void paint(double x0, double y0, double bw, double bh, RgbFn rgb_at, TirFn tir_at) {
    const double x1 = x0 + bw, y1 = y0 + bh;
    const int i0 = std::max(0, int(std::floor(y0))), i1 = std::min(h - 1, int(std::ceil(y1)));
    const int j0 = std::max(0, int(std::floor(x0))), j1 = std::min(w - 1, int(std::ceil(x1)));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const double a = coverage(x0, y0, x1, y1, i, j);
        if (a <= 0) continue;
        const double u = std::clamp((j + 0.5 - x0) / bw, 0.0, 1.0);
        const double v = std::clamp((i + 0.5 - y0) / bh, 0.0, 1.0);
        const Color c = rgb_at(u, v);
        const size_t k = size_t(i) * w + j;
        for (int ch = 0; ch < 3; ++ch) rgb[3 * k + ch] = (1 - a) * rgb[3 * k + ch] + a * c[ch];
        const double t = tir_at(u, v);
        if (t >= 0) tir[k] = (1 - a) * tir[k] + a * t;
      }
    }
  }
};

struct Mover {
  double cx = 0, cy = 0;
  double base_w = 0, base_h = 0;
  double vx = 0, vy = 0;
  double log_scale = 0;
  Color a{}, b{};

  double w(double aspect = 1.0) const { return base_w * std::exp(log_scale) * std::sqrt(aspect); }
  double h(double aspect = 1.0) const { return base_h * std::exp(log_scale) / std::sqrt(aspect); }

  void step(std::mt19937_64& rng, double max_speed, double drift, int width, int height, double aspect) {
    std::normal_distribution<double> acc(0.0, 0.15), ds(0.0, drift);
    vx += acc(rng);
    vy += acc(rng);
    const double speed = std::hypot(vx, vy);
    if (speed > max_speed) {
      vx *= max_speed / speed;
      vy *= max_speed / speed;
    }
    log_scale = std::clamp(log_scale + ds(rng), std::log(0.75), std::log(1.35));
    cx += vx;
    cy += vy;
    const double hw = 0.5 * w(aspect) + 1.0, hh = 0.5 * h(aspect) + 1.0;
    if (cx < hw) cx = hw, vx = std::abs(vx);
    if (cx > width - hw) cx = width - hw, vx = -std::abs(vx);
    if (cy < hh) cy = hh, vy = std::abs(vy);
    if (cy > height - hh) cy = height - hh, vy = -std::abs(vy);
  }
};

// Two-tone vertical stripes.
auto striped(const Color& a, const Color& b) {
  return [a, b](double u, double) { return (static_cast<int>(u * 4.0) % 2 == 0) ? a : b; };
}

// Warm body with a slightly cooler rim; same for every object.
double warm_body(double u, double v) {
  const double edge = std::min({u, v, 1 - u, 1 - v});
  return edge < 0.12 ? 185.0 : 205.0;
}

const SynthEvent* active(const std::vector<SynthEvent>& evs, EventKind kind, int t) {
  for (const auto& e : evs) {
    if (e.kind == kind && t >= e.start && t < e.end) return &e;
  }
  return nullptr;
}

const SynthEvent* first_of(const std::vector<SynthEvent>& evs, EventKind kind) {
  const SynthEvent* best = nullptr;
  for (const auto& e : evs) {
    if (e.kind == kind && (!best || e.start < best->start)) best = &e;
  }
  return best;
}

cv::Mat to_mat(const std::vector<double>& px, int w, int h, bool gray, std::mt19937_64& rng, double noise) {
  cv::Mat m(h, w, CV_8UC3);
  std::normal_distribution<double> n(0.0, noise);
  for (int i = 0; i < h; ++i) {
    auto* row = m.ptr<uint8_t>(i);
    for (int j = 0; j < w; ++j) {
      const size_t k = size_t(i) * w + j;
      if (gray) {
        const auto v = static_cast<uint8_t>(std::clamp(std::lround(px[k] + n(rng)), 0L, 255L));
        row[3 * j] = row[3 * j + 1] = row[3 * j + 2] = v;
      } else {
        for (int c = 0; c < 3; ++c) {
          row[3 * j + c] = static_cast<uint8_t>(std::clamp(std::lround(px[3 * k + c] + n(rng)), 0L, 255L));
        }
      }
    }
  }
  return m;
}

}  // namespace

std::string attribute_code(EventKind kind) {
  switch (kind) {
    case EventKind::kRgbBlackout: return "LI";
    case EventKind::kTirCrossover: return "TC";
    case EventKind::kOcclusion: return "PO";
    case EventKind::kDeformation: return "DEF";
    case EventKind::kSimilarDistractor: return "SA";
  }
  return "NO";
}

EventKind parse_event_kind(const std::string& text) {
  if (text == "LI" || text == "rgb_blackout") return EventKind::kRgbBlackout;
  if (text == "TC" || text == "tir_crossover") return EventKind::kTirCrossover;
  if (text == "PO" || text == "occlusion") return EventKind::kOcclusion;
  if (text == "DEF" || text == "deformation") return EventKind::kDeformation;
  if (text == "SA" || text == "similar_distractor") return EventKind::kSimilarDistractor;
  throw ConfigError("unknown event kind '" + text + "'");
}

void SynthConfig::validate() const {
  if (frames < 1 || width < 16 || height < 16) throw ConfigError("synth: frames >= 1 and image >= 16x16 required");
  if (target_min_side <= 1 || target_max_side < target_min_side) throw ConfigError("synth: bad target size range");
  if (2 * target_max_side * 1.35 * 1.3 >= std::min(width, height)) throw ConfigError("synth: target too large for frame");
  if (max_speed < 0 || scale_drift < 0 || noise < 0 || distractors < 0) throw ConfigError("synth: negative dynamics");
  for (const auto& e : events) {
    if (e.start < 0 || e.end > frames || e.end <= e.start) {
      throw ConfigError("synth: event span [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                        ") outside [0," + std::to_string(frames) + ")");
    }
  }
}

SynthSequence render_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const int W = cfg.width, H = cfg.height;

  // Muted, smooth backgrounds.
  Canvas bg(W, H);
  {
    const Color c0 = hsv_color(uni(0, 360), uni(0.15, 0.3), uni(0.3, 0.5));
    const Color c1 = hsv_color(uni(0, 360), uni(0.15, 0.3), uni(0.45, 0.65));
    const double angle = uni(0, 2 * kPi);
    struct Blob { double x, y, r; Color c; double t; };
    std::vector<Blob> blobs;
    for (int k = 0; k < 6; ++k) {
      blobs.push_back({uni(0, W), uni(0, H), uni(8, 30), hsv_color(uni(0, 360), uni(0.15, 0.35), uni(0.3, 0.7)),
                       uni(-25, 25)});
    }
    const double t_base = uni(60, 90);
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const double g = 0.5 + 0.5 * ((j - W / 2.0) * std::cos(angle) + (i - H / 2.0) * std::sin(angle)) / (0.5 * std::max(W, H));
        const size_t k = size_t(i) * W + j;
        Color c;
        for (int ch = 0; ch < 3; ++ch) c[ch] = (1 - g) * c0[ch] + g * c1[ch];
        double t = t_base + 15.0 * (g - 0.5);
        for (const auto& b : blobs) {
          const double wgt = std::exp(-((j - b.x) * (j - b.x) + (i - b.y) * (i - b.y)) / (2 * b.r * b.r));
          for (int ch = 0; ch < 3; ++ch) c[ch] = (1 - wgt) * c[ch] + wgt * b.c[ch];
          t += wgt * b.t;
        }
        for (int ch = 0; ch < 3; ++ch) bg.rgb[3 * k + ch] = c[ch];
        bg.tir[k] = t;
      }
    }
  }

  // Target, distractors and their colours.
  const double hue_a = uni(0, 360);
  const double hue_b = hue_a + uni(90, 270);
  Mover target;
  target.base_w = uni(cfg.target_min_side, cfg.target_max_side);
  target.base_h = uni(cfg.target_min_side, cfg.target_max_side);
  target.cx = uni(0.3, 0.7) * W;
  target.cy = uni(0.3, 0.7) * H;
  target.a = hsv_color(hue_a, uni(0.8, 1.0), uni(0.8, 1.0));
  target.b = hsv_color(hue_b, uni(0.8, 1.0), uni(0.8, 1.0));
  const Color orig_a = target.a, orig_b = target.b;
  const double new_hue = hue_a + uni(120, 240);
  const Color def_a = hsv_color(new_hue, uni(0.8, 1.0), uni(0.8, 1.0));
  const Color def_b = hsv_color(new_hue + uni(90, 270), uni(0.8, 1.0), uni(0.8, 1.0));
  const double def_aspect = u01(rng) < 0.5 ? uni(0.6, 0.8) : uni(1.25, 1.6);

  std::vector<Mover> others(static_cast<size_t>(cfg.distractors));
  for (auto& d : others) {
    double h1 = hue_a;
    while (hue_gap(h1, hue_a) < 50 || hue_gap(h1, new_hue) < 50) h1 = uni(0, 360);
    d.base_w = uni(cfg.target_min_side, cfg.target_max_side);
    d.base_h = uni(cfg.target_min_side, cfg.target_max_side);
    d.cx = uni(0.15, 0.85) * W;
    d.cy = uni(0.15, 0.85) * H;
    d.a = hsv_color(h1, uni(0.7, 1.0), uni(0.7, 1.0));
    d.b = hsv_color(h1 + uni(90, 270), uni(0.7, 1.0), uni(0.7, 1.0));
  }
  const double orbit_phase = uni(0, 2 * kPi);
  const double orbit_speed = uni(0.05, 0.09) * (u01(rng) < 0.5 ? -1 : 1);

  SynthSequence out;
  std::mt19937_64 noise_rng(cfg.seed ^ 0x5bd1e995ULL);
  const SynthEvent* def_event = first_of(cfg.events, EventKind::kDeformation);

  for (int t = 0; t < cfg.frames; ++t) {
    // Deformation progress, persistent after the span.
    double prog = 0.0;
    if (def_event && t >= def_event->start) {
      prog = std::min(1.0, (t - def_event->start + 1.0) / (def_event->end - def_event->start));
    }
    const double aspect = 1.0 + prog * (def_aspect - 1.0);
    if (t > 0) {
      target.step(rng, cfg.max_speed, cfg.scale_drift, W, H, aspect);
      for (auto& d : others) d.step(rng, cfg.max_speed, cfg.scale_drift, W, H, 1.0);
    }
    for (int ch = 0; ch < 3; ++ch) {
      target.a[ch] = (1 - prog) * orig_a[ch] + prog * def_a[ch];
      target.b[ch] = (1 - prog) * orig_b[ch] + prog * def_b[ch];
    }
    const double tw = target.w(aspect), th = target.h(aspect);
    const ImageBox gt = ImageBox::from_center(target.cx, target.cy, tw, th);

    Canvas cv = bg;
    for (const auto& d : others) {
      cv.paint(d.cx - 0.5 * d.w(), d.cy - 0.5 * d.h(), d.w(), d.h(), striped(d.a, d.b), warm_body);
    }
    if (const SynthEvent* sa = active(cfg.events, EventKind::kSimilarDistractor, t)) {
      // Decoy with the target's original look, orbiting close enough to share the search region.
      const double side = std::sqrt(tw * th);
      const double ang = orbit_phase + orbit_speed * (t - sa->start);
      const double dw = target.base_w * std::exp(target.log_scale);
      const double dh = target.base_h * std::exp(target.log_scale);
      const double dx = std::clamp(target.cx + 1.4 * side * std::cos(ang), 0.5 * dw, W - 0.5 * dw);
      const double dy = std::clamp(target.cy + 0.7 * side * std::sin(ang), 0.5 * dh, H - 0.5 * dh);
      cv.paint(dx - 0.5 * dw, dy - 0.5 * dh, dw, dh, striped(orig_a, orig_b), warm_body);
    }
    const bool crossover = active(cfg.events, EventKind::kTirCrossover, t) != nullptr;
    const double local_bg = bg.tir[size_t(std::clamp(int(target.cy), 0, H - 1)) * W + std::clamp(int(target.cx), 0, W - 1)];
    cv.paint(gt.x, gt.y, tw, th, striped(target.a, target.b),
             [&](double u, double v) { return crossover ? local_bg : warm_body(u, v); });
    if (active(cfg.events, EventKind::kOcclusion, t)) {
      const Color grey{120, 124, 128};
      cv.paint(target.cx - 0.15 * tw, target.cy - 0.5 * th - 1, 0.75 * tw, th + 2,
               [&](double, double) { return grey; }, [](double, double) { return 70.0; });
    }
    if (active(cfg.events, EventKind::kRgbBlackout, t)) std::fill(cv.rgb.begin(), cv.rgb.end(), 8.0);

    FramePair fp;
    fp.rgb = to_mat(cv.rgb, W, H, false, noise_rng, cfg.noise);
    fp.tir = to_mat(cv.tir, W, H, true, noise_rng, cfg.noise);
    out.frames.push_back(std::move(fp));
    out.groundtruth.push_back(gt);
  }
  for (const auto& e : cfg.events) out.spans.push_back({attribute_code(e.kind), e.start, e.end});
  return out;
}

Sequence generate_synthetic(const SynthConfig& cfg, const fs::path& dir) {
  const SynthSequence s = render_synthetic(cfg);
  write_sequence(dir, s.frames, s.groundtruth, s.spans);
  return load_sequence(dir);
}

std::vector<SynthEvent> random_event_schedule(int frames, std::mt19937_64& rng) {
  const double f = frames / 200.0;
  auto uni = [&](double lo, double hi) { return static_cast<int>(std::lround(std::uniform_real_distribution<double>(lo, hi)(rng))); };
  auto clip = [frames](SynthEvent e) {
    e.start = std::clamp(e.start, 0, std::max(0, frames - 1));
    e.end = std::clamp(e.end, e.start + 1, frames);
    return e;
  };
  std::vector<SynthEvent> ev;
  const int def_start = uni(8 * f, 20 * f);
  ev.push_back(clip({EventKind::kDeformation, def_start, def_start + uni(12 * f, 22 * f)}));
  const int li_start = uni(55 * f, 75 * f);
  ev.push_back(clip({EventKind::kRgbBlackout, li_start, li_start + uni(25 * f, 40 * f)}));
  ev.push_back(clip({EventKind::kSimilarDistractor, uni(115 * f, 135 * f), frames}));
  std::bernoulli_distribution coin(0.5);
  if (coin(rng)) {
    const int s = uni(150 * f, 175 * f);
    ev.push_back(clip({EventKind::kOcclusion, s, s + uni(8 * f, 16 * f)}));
  }
  if (coin(rng)) {
    const int s = uni(30 * f, 45 * f);
    ev.push_back(clip({EventKind::kTirCrossover, s, s + uni(10 * f, 20 * f)}));
  }
  return ev;
}

std::vector<Sequence> generate_dataset(const fs::path& root, int count, const SynthConfig& base, uint64_t seed,
                                       bool with_events, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::vector<Sequence> out;
  for (int i = 0; i < count; ++i) {
    SynthConfig cfg = base;
    cfg.seed = rng();
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d", prefix.c_str(), i);
    cfg.name = name;
    cfg.events = with_events ? random_event_schedule(cfg.frames, rng) : std::vector<SynthEvent>{};
    out.push_back(generate_synthetic(cfg, root / name));
  }
  return out;
}

}  // namespace tatrack::data
