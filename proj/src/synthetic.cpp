#include "pcnn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "pcnn/errors.hpp"
#include "pcnn/rng.hpp"

namespace pcnn::synth {

double portable_sin(double x) {
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(x, two_pi);  // exact
  if (r > pi) r -= two_pi;
  if (r < -pi) r += two_pi;
  // Fold into [-pi/2, pi/2] using sin(pi - r) = sin(r).
  if (r > pi / 2) r = pi - r;
  if (r < -pi / 2) r = -pi - r;
  const double r2 = r * r;
  // Taylor series through r^23; truncation error below 1e-17 on [-pi/2, pi/2].
  double term = r;
  double sum = r;
  for (int n = 1; n <= 11; ++n) {
    term *= -r2 / static_cast<double>((2 * n) * (2 * n + 1));
    sum += term;
  }
  return sum;
}

namespace {

double portable_cos(double x) { return portable_sin(x + std::numbers::pi / 2); }

struct Rgb {
  double r, g, b;
};

Rgb random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

// Joint order matches default_joint_names().
enum J { kHead, kRShoulder, kLShoulder, kRElbow, kLElbow, kRWrist, kLWrist, kHip, kRAnkle, kLAnkle, kJoints };

struct Segment {
  int a, b;
  double radius;  // in units of body scale
  int color;      // 0 clothing, 1 skin, 2 trousers
};

// Draw order: later segments cover earlier ones.
constexpr Segment kSegments[] = {
    {kHip, kRAnkle, 0.12, 2},    {kHip, kLAnkle, 0.12, 2},      {kHead, kHip, 0.22, 0},
    {kRShoulder, kLShoulder, 0.1, 0}, {kLShoulder, kLElbow, 0.09, 0}, {kLElbow, kLWrist, 0.08, 1},
    {kRShoulder, kRElbow, 0.09, 0}, {kRElbow, kRWrist, 0.08, 1},   {kHead, kHead, 0.28, 1},
    {kLWrist, kLWrist, 0.11, 1},  {kRWrist, kRWrist, 0.11, 1},
};

struct BodyMotion {
  bool wave = false;
  double scale = 20.0;
  double x0 = 0.0, y0 = 0.0;  // hip centre at t = 0
  double vx = 0.0, vy = 0.0;  // px/frame
  double amplitude = 0.0, omega = 0.0, phase = 0.0;
};

std::vector<Point2> body_at(const BodyMotion& m, double t) {
  const double s = m.scale;
  const double hx = m.x0 + m.vx * t;
  const double hy = m.y0 + m.vy * t;
  std::vector<Point2> j(kJoints);
  auto at = [&](double ux, double uy) { return Point2{hx + ux * s, hy + uy * s}; };
  j[kHip] = at(0.0, 0.0);
  j[kHead] = at(0.0, -1.0);
  j[kRShoulder] = at(-0.35, -0.75);
  j[kLShoulder] = at(0.35, -0.75);
  j[kLElbow] = at(0.45, -0.4);
  j[kLWrist] = at(0.5, -0.05);
  if (m.wave) {
    j[kRElbow] = at(-0.6, -0.6);
    const double phi = -std::numbers::pi / 2 + m.amplitude * portable_sin(m.omega * t + m.phase);
    j[kRWrist] = Point2{j[kRElbow].x + 0.4 * s * portable_cos(phi), j[kRElbow].y + 0.4 * s * portable_sin(phi)};
    j[kRAnkle] = at(-0.25, 1.0);
    j[kLAnkle] = at(0.25, 1.0);
  } else {
    j[kRElbow] = at(-0.45, -0.4);
    j[kRWrist] = at(-0.5, -0.05);
    const double swing = 0.25 * portable_sin(m.omega * t + m.phase);
    j[kRAnkle] = at(-0.2 + swing, 1.0);
    j[kLAnkle] = at(0.2 - swing, 1.0);
  }
  return j;
}

// Closest point parameter on segment ab, and squared distance from p.
std::pair<double, double> project(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double u = 0.0;
  if (len2 > 0.0) u = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = p.x - (a.x + u * dx), ey = p.y - (a.y + u * dy);
  return {u, ex * ex + ey * ey};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

SyntheticVideo make_video(const SyntheticConfig& cfg, bool wave, bool train, int index, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticVideo v;
  v.label = wave ? kWave : kWalk;
  v.train = train;
  char id[64];
  std::snprintf(id, sizeof id, "%s_%s_%03d", v.label.c_str(), train ? "train" : "test", index);
  v.video_id = id;

  const int T = cfg.min_frames + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_frames - cfg.min_frames + 1)));
  const double W = cfg.width, H = cfg.height;

  BodyMotion m;
  m.wave = wave;
  m.scale = rng.uniform(0.22, 0.3) * H;
  m.omega = 2.0 * std::numbers::pi * rng.uniform(0.1, 0.2);
  m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double margin = 0.7 * m.scale;
  if (wave) {
    m.amplitude = rng.uniform(0.6, 1.0);
    m.vx = rng.uniform(-0.15, 0.15);
    m.x0 = rng.uniform(margin + 4, W - margin - 4);
  } else {
    const double speed = rng.uniform(0.7, 1.3);
    const double travel = speed * (T - 1);
    const bool right = rng.uniform() < 0.5;
    m.vx = right ? speed : -speed;
    const double lo = margin;
    const double hi = std::max(lo, W - margin - travel);
    const double start = rng.uniform(lo, hi);
    m.x0 = right ? start : W - start;
  }
  m.vy = rng.uniform(-0.1, 0.1);
  m.y0 = rng.uniform(m.scale + 4, H - m.scale - 4);

  const Rgb bg = random_color(rng, 40, 200);
  const Rgb clothes = random_color(rng, 20, 235);
  const Rgb skin{rng.uniform(150, 230), rng.uniform(100, 180), rng.uniform(80, 150)};
  const Rgb trousers = random_color(rng, 20, 235);
  const Rgb palette[3] = {clothes, skin, trousers};
  const double gx = rng.uniform(-0.6, 0.6), gy = rng.uniform(-0.6, 0.6);
  std::vector<double> texture(static_cast<std::size_t>(cfg.width) * cfg.height);
  for (double& t : texture) t = 8.0 * rng.normal();

  std::vector<std::vector<Point2>> truth;
  for (int t = 0; t < T; ++t) truth.push_back(body_at(m, t));

  v.poses.video_id = v.video_id;
  for (int t = 0; t < T; ++t) {
    Pose p;
    p.joint_names = default_joint_names();
    for (const auto& q : truth[t]) p.joints.push_back({q.x + 0.3 * rng.normal(), q.y + 0.3 * rng.normal()});
    v.poses.frames.push_back(std::move(p));
  }

  for (int t = 0; t < T; ++t) {
    Image img(cfg.width, cfg.height);
    FlowField flow = t + 1 < T ? FlowField(cfg.width, cfg.height) : FlowField();
    const auto& cur = truth[t];
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const Point2 px{static_cast<double>(x), static_cast<double>(y)};
        int hit = -1;
        double hit_u = 0.0;
        for (int s = 0; s < static_cast<int>(std::size(kSegments)); ++s) {
          const auto& seg = kSegments[s];
          const double r = std::max(1.2, seg.radius * m.scale);
          const auto [u, d2] = project(px, cur[seg.a], cur[seg.b]);
          if (d2 <= r * r) {
            hit = s;
            hit_u = u;
          }
        }
        const std::size_t i = static_cast<std::size_t>(y) * cfg.width + x;
        Rgb c;
        if (hit < 0) {
          const double shade = texture[i] + gx * (x - W / 2) + gy * (y - H / 2);
          c = {bg.r + shade, bg.g + shade, bg.b + shade};
        } else {
          c = palette[kSegments[hit].color];
        }
        const double noise = 2.0 * rng.normal();
        img.at(x, y, 0) = to_byte(c.r + noise);
        img.at(x, y, 1) = to_byte(c.g + noise);
        img.at(x, y, 2) = to_byte(c.b + noise);
        if (t + 1 < T) {
          double fx = 0.0, fy = 0.0;
          if (hit >= 0) {
            const auto& seg = kSegments[hit];
            const auto& nxt = truth[t + 1];
            const double dax = nxt[seg.a].x - cur[seg.a].x, day = nxt[seg.a].y - cur[seg.a].y;
            const double dbx = nxt[seg.b].x - cur[seg.b].x, dby = nxt[seg.b].y - cur[seg.b].y;
            fx = dax + hit_u * (dbx - dax);
            fy = day + hit_u * (dby - day);
          }
          flow.vx[i] = static_cast<float>(fx + 0.05 * rng.normal());
          flow.vy[i] = static_cast<float>(fy + 0.05 * rng.normal());
        }
      }
    }
    v.frames.push_back(std::move(img));
    if (t + 1 < T) v.flows.push_back(std::move(flow));
  }
  return v;
}

}  // namespace

std::vector<SyntheticVideo> make_dataset(const SyntheticConfig& config) {
  if (config.width < 32 || config.height < 32) throw ValidationError("synthetic frames must be at least 32x32");
  if (config.min_frames < 1 || config.max_frames < config.min_frames)
    throw ValidationError("invalid synthetic clip length range");
  if (config.train_per_class < 1 || config.test_per_class < 0)
    throw ValidationError("synthetic dataset needs training clips");
  std::vector<SyntheticVideo> out;
  std::uint64_t stream = 0;
  for (bool train : {true, false}) {
    const int count = train ? config.train_per_class : config.test_per_class;
    for (int i = 0; i < count; ++i)
      for (bool wave : {true, false}) out.push_back(make_video(config, wave, train, i, derive_seed(config.seed, stream++)));
  }
  return out;
}

VideoInput to_video_input(const SyntheticVideo& video, const FlowQuantParams& quant) {
  VideoInput in;
  in.width = video.frames.front().width;
  in.height = video.frames.front().height;
  in.frames = video.frames;
  for (const auto& f : video.flows) in.flow_images.push_back(quantize_flow(f, quant));
  return in;
}

fv::LocalDescriptorSet local_flow_descriptors(const std::vector<FlowField>& flows, int stride, double min_magnitude) {
  if (stride < 1) throw ValidationError("descriptor stride must be positive");
  fv::LocalDescriptorSet set;
  set.descriptors = MatrixD(0, 11);
  for (const auto& f : flows) {
    f.validate();
    for (int cy = 2; cy + 2 < f.height; cy += stride) {
      for (int cx = 2; cx + 2 < f.width; cx += stride) {
        std::vector<double> d(11, 0.0);
        for (int y = cy - 2; y <= cy + 2; ++y) {
          for (int x = cx - 2; x <= cx + 2; ++x) {
            const double u = f.u(x, y), w = f.v(x, y);
            const double mag = std::sqrt(u * u + w * w);
            d[0] += u;
            d[1] += w;
            d[2] += mag;
            // Octant of the flow direction from sign and magnitude comparisons only.
            const double au = std::abs(u), aw = std::abs(w);
            int oct = au >= aw ? 0 : 1;
            if (u < 0) oct = 3 - oct;
            if (w < 0) oct = 7 - oct;
            d[3 + oct] += mag;
          }
        }
        for (double& x : d) x /= 25.0;
        if (d[2] < min_magnitude) continue;
        set.descriptors.push_row(d);
        set.positions.push_back({(cx + 0.5) / f.width, (cy + 0.5) / f.height});
      }
    }
  }
  return set;
}

DatasetManifest write_dataset(const std::vector<SyntheticVideo>& videos, const std::filesystem::path& dir) {
  DatasetManifest manifest;
  for (const auto& v : videos) {
    const auto root = dir / "videos" / v.video_id;
    ManifestEntry e;
    e.video_id = v.video_id;
    e.split = 1;
    e.train = v.train;
    e.label = v.label;
    e.pose = root / "pose.txt";
    e.frames = root / "frames";
    e.flow = root / "flow";
    e.descriptors = root / "local.plds";
    write_pose_file(e.pose, v.poses);
    for (std::size_t t = 0; t < v.frames.size(); ++t) write_ppm(frame_path(e.frames, t), v.frames[t]);
    for (std::size_t t = 0; t < v.flows.size(); ++t) write_flow(flow_path(e.flow, t), v.flows[t]);
    fv::write_local_descriptors(e.descriptors, local_flow_descriptors(v.flows));
    manifest.entries.push_back(std::move(e));
  }
  manifest.save(dir / "manifest.tsv");
  return manifest;
}

}  // namespace pcnn::synth
