#include "otcg/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "otcg/errors.hpp"

namespace otcg::fft {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  fftw_plan get(int h, int w, bool inverse) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(h, w, inverse);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(h) * w);
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan = fftw_plan_dft_2d(h, w, p, p, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw Error("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }
  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, bool>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

void fft2(std::span<std::complex<double>> plane, int h, int w, bool inverse) {
  if (plane.size() != static_cast<std::size_t>(h) * w) throw DimensionError("fft2: size mismatch");
  fftw_plan plan = cache().get(h, w, inverse);
  auto* p = reinterpret_cast<fftw_complex*>(plane.data());
  fftw_execute_dft(plan, p, p);
  const double s = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (auto& v : plane) v *= s;
}

}  // namespace otcg::fft
