#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace otcg::img {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGrey{200, 200, 200};
inline constexpr Rgb kThreshold{220, 0, 0};  // FRC 1/7 line
inline constexpr Rgb kPalette[] = {{31, 119, 180}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}};

class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = kWhite);

  int width() const { return w_; }
  int height() const { return h_; }
  Rgb at(int x, int y) const { return px_[static_cast<std::size_t>(y) * w_ + x]; }
  void set(int x, int y, Rgb c);

  void line(int x0, int y0, int x1, int y1, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);  // outline
  /// Grey-scale image scaled by `zoom`, values mapped linearly from [lo, hi].
  void image(const std::vector<double>& v, int vw, int vh, int x0, int y0, int zoom, double lo, double hi);

  void write_png(const std::filesystem::path& path) const;

 private:
  int w_, h_;
  std::vector<Rgb> px_;
};

Canvas read_png(const std::filesystem::path& path);

/// Line chart of several series over shared x values. Axes only, no text.
/// `hline`, when set, is drawn in kThreshold at that y value.
struct Chart {
  int width = 640, height = 400, margin = 30;
  double y_lo = 0.0, y_hi = 1.0;
  double x_lo = 0.0, x_hi = 1.0;

  int px(double x) const;
  int py(double y) const;
};

Canvas line_chart(const std::vector<double>& x, const std::vector<std::vector<double>>& series, Chart chart,
                  const double* hline = nullptr);

}  // namespace otcg::img
