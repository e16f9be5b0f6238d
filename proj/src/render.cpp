#include "idmr/render.hpp"

#include <cstdio>
#include <fstream>

namespace idmr {

namespace {

// BODY_25 limb graph (OpenPose render pair list).
constexpr int kLimbs[][2] = {
    {1, 8},  {1, 2},   {1, 5},   {2, 3},   {3, 4},   {5, 6},   {6, 7},   {8, 9},
    {9, 10}, {10, 11}, {8, 12},  {12, 13}, {13, 14}, {1, 0},   {0, 15},  {15, 17},
    {0, 16}, {16, 18}, {14, 19}, {19, 20}, {14, 21}, {11, 22}, {22, 23}, {11, 24},
};
constexpr int kLimbCount = static_cast<int>(sizeof(kLimbs) / sizeof(kLimbs[0]));

void hsv_to_rgb(double h, unsigned char& r, unsigned char& g, unsigned char& b) {
  const double s = 1.0, v = 1.0;
  const int i = static_cast<int>(h * 6.0) % 6;
  const double f = h * 6.0 - std::floor(h * 6.0);
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  double rr = 0, gg = 0, bb = 0;
  switch (i) {
    case 0: rr = v; gg = t; bb = p; break;
    case 1: rr = q; gg = v; bb = p; break;
    case 2: rr = p; gg = v; bb = t; break;
    case 3: rr = p; gg = q; bb = v; break;
    case 4: rr = t; gg = p; bb = v; break;
    default: rr = v; gg = p; bb = q; break;
  }
  r = static_cast<unsigned char>(rr * 255);
  g = static_cast<unsigned char>(gg * 255);
  b = static_cast<unsigned char>(bb * 255);
}

}  // namespace

Image Image::filled(int w, int h, unsigned char r, unsigned char g, unsigned char b) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

void Image::set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  rgb[i] = r;
  rgb[i + 1] = g;
  rgb[i + 2] = b;
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, unsigned char r,
               unsigned char g, unsigned char b, int thickness) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(2, static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1);
  for (int s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / (steps - 1);
    const int px = static_cast<int>(std::lround(x0 + t * dx));
    const int py = static_cast<int>(std::lround(y0 + t * dy));
    for (int oy = -(thickness / 2); oy <= thickness / 2; ++oy)
      for (int ox = -(thickness / 2); ox <= thickness / 2; ++ox)
        img.set(px + ox, py + oy, r, g, b);
  }
}

Image render_frame(const Eigen::VectorXf& keypoints_2j, int joints, const RenderOptions& opts) {
  Image img = Image::filled(opts.resolution, opts.resolution, 16, 16, 16);
  const double half = opts.resolution / 2.0;
  const double s = half / opts.units_per_half_frame;
  auto px = [&](int j) { return half + s * keypoints_2j[j]; };
  auto py = [&](int j) { return half + s * keypoints_2j[joints + j]; };
  for (int l = 0; l < kLimbCount; ++l) {
    const int a = kLimbs[l][0], bjoint = kLimbs[l][1];
    if (a >= joints || bjoint >= joints) continue;
    unsigned char r, g, b;
    hsv_to_rgb(static_cast<double>(l) / kLimbCount, r, g, b);
    draw_line(img, px(a), py(a), px(bjoint), py(bjoint), r, g, b, 3);
  }
  return img;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_ppm: cannot write " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

int render_clip(const MotionClip& clip, const std::filesystem::path& out_dir,
                const RenderOptions& opts) {
  std::filesystem::create_directories(out_dir);
  const int joints = clip.joints();
  for (int t = 0; t < clip.frames(); ++t) {
    const Eigen::VectorXf frame = clip.data.col(t);
    const Image img = render_frame(frame, joints, opts);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.ppm", t);
    write_ppm(img, out_dir / name);
  }
  return clip.frames();
}

}  // namespace idmr
