#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otcg/forward_physics.hpp"
#include "otcg/rng.hpp"
#include "otcg/tensor.hpp"

namespace otcg::data {

enum class Domain { X, Y };

/// x_norm = (x - offset) / scale, with either one global scale or one
/// scale per image.
struct NormalizationRecord {
  enum class Method { none, global_range, global_max, per_image_std };
  Method method = Method::none;
  double offset = 0.0;
  double scale = 1.0;
  std::vector<double> per_image;  // per_image_std only

  Tensor normalize(const Tensor& x) const;
  Tensor denormalize(const Tensor& x) const;
  double scale_of(int image) const;
};

std::string to_string(NormalizationRecord::Method m);
NormalizationRecord::Method parse_normalization(const std::string& s);

/// Fits a record on `images`: global_range maps the pool's [min, max] onto
/// [0, 1]; global_max divides by the largest magnitude and keeps zero fixed,
/// so a linear forward model stays linear; per_image_std divides each image by the standard deviation of its
/// magnitude (two channels are read as real/imaginary parts).
NormalizationRecord fit_normalization(const Tensor& images, NormalizationRecord::Method m);

struct ImagePool {
  Tensor images;  // normalized
  Domain domain = Domain::X;
  NormalizationRecord normalization;
  std::uint64_t seed = 0;

  int size() const { return images.shape().n; }
};

enum class Interp { nearest, bilinear };

struct NoiseSpec {
  enum class Model { gaussian, mixed_streak };
  Model model = Model::gaussian;
  double sigma = 0.0;
  // mixed_streak: a few straight streaks of Gaussian cross-section on top of
  // the white noise.
  int streaks = 4;
  double streak_amplitude = 0.3;
  double streak_width = 0.8;
};

struct SyntheticSceneSpec {
  enum class Kind { phantom, point_sources, textured_noise };
  Kind kind = Kind::phantom;
  int size = 32;
  int count = 200;       // training scenes
  int test_count = 20;   // held-out paired scenes
  int channels = 1;      // 2 = (real, imaginary)
  NoiseSpec noise;

  // point_sources
  int sources_min = 4;
  int sources_max = 10;
  double amplitude = 1.0;
  // phantom
  int ellipses_min = 2;
  int ellipses_max = 5;
  // textured_noise: Gaussian-filtered white noise
  double texture_sigma = 2.0;

  // Measurements are block-averaged by `upsample` and brought back to the
  // scene grid by interpolation (low-resolution camera model).
  int upsample = 1;
  Interp interp = Interp::nearest;

  NormalizationRecord::Method normalization_x = NormalizationRecord::Method::none;
  NormalizationRecord::Method normalization_y = NormalizationRecord::Method::none;
};

std::string to_string(SyntheticSceneSpec::Kind k);
SyntheticSceneSpec::Kind parse_scene_kind(const std::string& s);

/// One scene (truth), [1, channels, size, size].
Tensor make_scene(const SyntheticSceneSpec& spec, Rng& rng);
Tensor make_noise(const NoiseSpec& spec, const Shape& shape, Rng& rng);
/// forward(truth) + noise; for a Fourier projector the noise is projected too.
Tensor measure(const physics::ForwardOperator& op, const Tensor& truth, const NoiseSpec& noise, Rng& rng);

/// Training pools carry no pairing: each is an independent permutation of
/// the scenes (resp. measurements). The test set is paired and only meant
/// for evaluation.
struct PairedSet {
  Tensor truth;        // normalized with the X record
  Tensor measurement;  // normalized with the Y record
  /// Same scenes, independent noise draw; lets FRC compare two reconstructions.
  Tensor measurement_repeat;
  NormalizationRecord truth_normalization;
  NormalizationRecord measurement_normalization;
};

struct SyntheticData {
  ImagePool x;
  ImagePool y;
  PairedSet test;
};

SyntheticData generate(const SyntheticSceneSpec& spec, const physics::ForwardOperator& op, std::uint64_t seed);

enum class Flip { h, v };
/// identity, then each enabled flip, then both: 4x the pool when both are on.
Tensor augment(const Tensor& images, bool hflip, bool vflip);
ImagePool augment(const ImagePool& pool, bool hflip, bool vflip);
Tensor flip(const Tensor& images, Flip f);

struct PatchLayout {
  int images = 0, channels = 0, height = 0, width = 0, size = 0;
  struct Origin {
    int image, y, x;
  };
  std::vector<Origin> origins;
};

struct Patches {
  Tensor patches;
  PatchLayout layout;
};

/// Row-major tiling with the given stride; a last tile flush with the
/// border is added when the stride does not reach it.
Patches extract_patches(const Tensor& images, int size, int stride);
/// Overlaps are averaged.
Tensor stitch(const Tensor& patches, const PatchLayout& layout);

Tensor upsample(const Tensor& images, int factor, Interp mode = Interp::nearest);
/// Block average; dims must be divisible by factor.
Tensor downsample(const Tensor& images, int factor);

/// Endless batch stream over one pool in a seeded order, reshuffled after
/// every pass. Pools for different domains use separate iterators.
class BatchIterator {
 public:
  BatchIterator(Tensor pool, std::uint64_t seed);

  Tensor next(int batch);
  int passes() const { return passes_; }
  const Tensor& pool() const { return pool_; }

 private:
  void reshuffle();

  Tensor pool_;
  Rng rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
  int passes_ = 0;
};

}  // namespace otcg::data
