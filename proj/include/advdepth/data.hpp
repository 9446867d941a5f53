#pragma once

#include "advdepth/random.hpp"
#include "advdepth/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advdepth {

namespace fs = std::filesystem;

/// File or format problems while reading/writing datasets.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Paired RGB image [3,H,W] in [0,1] and metric depth [1,H,W].
struct DepthSample {
  Tensorf rgb;
  Tensorf depth;
  double d_min = 0.5;
  double d_max = 10.0;
};

/// Throws unless rgb/depth are aligned, depth is positive and 0 < d_min.
void validate_sample(const DepthSample& s);

enum class DepthFormat { pfm, png16 };

/// Name of the per-directory sidecar holding `scale=<float>` for 16-bit depth.
inline constexpr const char* kDepthScaleFile = "depth_scale.txt";

/// Reads a pair. 16-bit depth is scaled by the sidecar in the depth file's
/// directory. d_min/d_max are set to the observed depth range.
DepthSample load_pair(const fs::path& rgb_path, const fs::path& depth_path, DepthFormat format);

// Little-endian PFM, single channel ("Pf"), rows stored bottom to top.
void write_pfm(const fs::path& path, const Tensorf& depth);
Tensorf read_pfm(const fs::path& path);

/// 8-bit RGB PNG from [3,H,W] values in [0,1] (clamped, rounded).
void write_png_rgb(const fs::path& path, const Tensorf& rgb);
Tensorf read_png_rgb(const fs::path& path);
void write_png_gray16(const fs::path& path, const std::vector<std::uint16_t>& values, Index height, Index width);
std::vector<std::uint16_t> read_png_gray16(const fs::path& path, Index& height, Index& width);
double read_depth_scale(const fs::path& dir);

struct NormalizedSample {
  Tensorf rgb;    // [-1,1]
  Tensorf depth;  // [-1,1]
  Index clamped = 0;
};

/// rgb [0,1] -> [-1,1]; depth [d_min,d_max] -> [-1,1]. Out-of-range depth is
/// clamped and counted.
NormalizedSample normalize_input(const DepthSample& s, double d_min, double d_max);
template <typename Scalar>
Tensor<Scalar> denormalize_depth(const Tensor<Scalar>& depth_norm, double d_min, double d_max);
double normalize_depth_value(double d, double d_min, double d_max);
double denormalize_depth_value(double v, double d_min, double d_max);

DepthSample hflip(const DepthSample& s);
DepthSample crop(const DepthSample& s, Index y0, Index x0, Index size);

struct AugmentOptions {
  Index crop_size = 0;  // 0 keeps the full image
  std::optional<std::pair<Index, Index>> resize;  // (H, W) applied before cropping
  bool flip = true;
};

/// Optional resize (bilinear rgb, nearest depth), flip with probability 1/2,
/// then a uniform random crop; all geometric steps shared by rgb and depth.
DepthSample augment(const DepthSample& s, Rng& rng, const AugmentOptions& opts);

struct SynthObject {
  Index y0, x0, y1, x1;  // half-open pixel box
  double depth;
  std::array<double, 3> albedo;
};

struct SynthScene {
  DepthSample sample;
  std::vector<SynthObject> objects;
};

/// Procedural scene: vertical depth gradient d_max (top) -> d_min (bottom),
/// rectangles at random depths occluding by minimum depth, rgb = albedo x
/// inverse-depth shading + texture noise.
SynthScene synth_scene(std::uint64_t seed, Index size, int n_objects, double d_min = 0.5, double d_max = 10.0);

/// Brightness factor in [0.25, 1] for a depth, linear in 1/depth.
double inverse_depth_shading(double depth, double d_min, double d_max);

struct ManifestEntry {
  std::string rgb;
  std::string depth;
  bool operator==(const ManifestEntry&) const = default;
};

struct SplitManifests {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then the first round(ratio n) entries go to train.
SplitManifests make_manifest(std::vector<ManifestEntry> entries, double ratio, std::uint64_t seed);
/// All `*.png` rgb files under root paired with same-stem `*.pfm` depth files.
std::vector<ManifestEntry> scan_dataset(const fs::path& root);

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries);
/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const fs::path& path);

struct SynthDataOptions {
  int count = 600;
  Index size = 64;
  int n_objects = 3;
  double d_min = 0.5;
  double d_max = 10.0;
  double split_ratio = 5.0 / 6.0;
};

/// Writes count scenes (rgb PNG + depth PFM) plus train.txt / test.txt.
SplitManifests write_synth_dataset(const fs::path& dir, const SynthDataOptions& opts, std::uint64_t seed);

std::vector<DepthSample> load_manifest_samples(const fs::path& manifest, DepthFormat format);

/// Normalized batch tensors [N,3,H,W] and [N,1,H,W].
struct Batch {
  Tensorf rgb;
  Tensorf depth;
};
Batch make_batch(const std::vector<DepthSample>& samples, const std::vector<std::size_t>& indices, double d_min,
                 double d_max);
/// Stacks unbatched tensors of equal shape along a new leading axis.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& items);

/// Fixed perceptual ramp (dark blue -> teal -> green -> yellow) over
/// [d_min, d_max]; near is bright. Returns [3,H,W] in [0,1].
Tensorf colorize_depth(const Tensorf& depth, double d_min, double d_max);

}  // namespace advdepth
