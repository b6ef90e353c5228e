#pragma once

#include <complex>
#include <span>

namespace otcg::fft {

/// In-place unitary 2-D DFT of a row-major h x w complex plane
/// (both directions scaled by 1/sqrt(h*w)). Thread-safe.
void fft2(std::span<std::complex<double>> plane, int h, int w, bool inverse);

}  // namespace otcg::fft
