#pragma once

#include "idmr/dataset.hpp"

#include <filesystem>

namespace idmr {

// Line-drawn BODY_25 stick figures, one PPM image per frame, fixed per-limb
// colors. Coordinates are expected in normalized units (torso ~ 1).
struct RenderOptions {
  int resolution = 512;
  double units_per_half_frame = 2.4;  // world extent mapped to half the image
};

// RGB canvas, row-major, 3 bytes per pixel.
struct Image {
  int width = 0, height = 0;
  std::vector<unsigned char> rgb;

  static Image filled(int w, int h, unsigned char r, unsigned char g, unsigned char b);
  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b);
};

void draw_line(Image& img, double x0, double y0, double x1, double y1, unsigned char r,
               unsigned char g, unsigned char b, int thickness = 2);

Image render_frame(const Eigen::VectorXf& keypoints_2j, int joints, const RenderOptions& opts);

// Writes frame_%04d.ppm per clip column; returns the file count.
int render_clip(const MotionClip& clip, const std::filesystem::path& out_dir,
                const RenderOptions& opts = {});

void write_ppm(const Image& img, const std::filesystem::path& path);

}  // namespace idmr
