#include "otcg/image_out.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "otcg/errors.hpp"

namespace otcg::img {

Canvas::Canvas(int width, int height, Rgb fill) : w_(width), h_(height) {
  if (width < 1 || height < 1) throw DimensionError("canvas must be at least 1x1");
  px_.assign(static_cast<std::size_t>(w_) * h_, fill);
}

void Canvas::set(int x, int y, Rgb c) {
  if (x >= 0 && y >= 0 && x < w_ && y < h_) px_[static_cast<std::size_t>(y) * w_ + x] = c;
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  // Bresenham.
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::rect(int x0, int y0, int x1, int y1, Rgb c) {
  line(x0, y0, x1, y0, c);
  line(x1, y0, x1, y1, c);
  line(x1, y1, x0, y1, c);
  line(x0, y1, x0, y0, c);
}

void Canvas::image(const std::vector<double>& v, int vw, int vh, int x0, int y0, int zoom, double lo, double hi) {
  const double span = hi > lo ? hi - lo : 1.0;
  for (int i = 0; i < vh; ++i)
    for (int j = 0; j < vw; ++j) {
      const double t = std::clamp((v[static_cast<std::size_t>(i) * vw + j] - lo) / span, 0.0, 1.0);
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * t));
      for (int a = 0; a < zoom; ++a)
        for (int b = 0; b < zoom; ++b) set(x0 + j * zoom + b, y0 + i * zoom + a, {g, g, g});
    }
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void Canvas::write_png(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FileError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FileError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FileError("libpng write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(w_) * 3);
  for (int y = 0; y < h_; ++y) {
    for (int x = 0; x < w_; ++x) {
      const Rgb c = at(x, y);
      row[3 * x] = c.r;
      row[3 * x + 1] = c.g;
      row[3 * x + 2] = c.b;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Canvas read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FileError("file not found: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FileError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FileError("libpng read failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  Canvas c(w, h);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) c.set(x, y, {row[3 * x], row[3 * x + 1], row[3 * x + 2]});
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return c;
}

int Chart::px(double x) const {
  const double t = x_hi > x_lo ? (x - x_lo) / (x_hi - x_lo) : 0.0;
  return margin + static_cast<int>(std::lround(t * (width - 2 * margin)));
}

int Chart::py(double y) const {
  const double t = y_hi > y_lo ? (y - y_lo) / (y_hi - y_lo) : 0.0;
  return height - margin - static_cast<int>(std::lround(t * (height - 2 * margin)));
}

Canvas line_chart(const std::vector<double>& x, const std::vector<std::vector<double>>& series, Chart chart,
                  const double* hline) {
  Canvas c(chart.width, chart.height);
  c.line(chart.margin, chart.height - chart.margin, chart.width - chart.margin, chart.height - chart.margin, kBlack);
  c.line(chart.margin, chart.margin, chart.margin, chart.height - chart.margin, kBlack);
  if (hline) c.line(chart.px(chart.x_lo), chart.py(*hline), chart.px(chart.x_hi), chart.py(*hline), kThreshold);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb col = kPalette[s % std::size(kPalette)];
    const auto& v = series[s];
    for (std::size_t i = 1; i < std::min(v.size(), x.size()); ++i) {
      if (!std::isfinite(v[i - 1]) || !std::isfinite(v[i])) continue;
      c.line(chart.px(x[i - 1]), chart.py(v[i - 1]), chart.px(x[i]), chart.py(v[i]), col);
    }
  }
  return c;
}

}  // namespace otcg::img
