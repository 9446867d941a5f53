#include "advdepth/data.hpp"

#include "advdepth/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace advdepth {

void validate_sample(const DepthSample& s) {
  if (s.rgb.rank() != 3 || s.rgb.dim(0) != 3) throw DimensionError("channels", "rgb must be [3,H,W], got " + shape_str(s.rgb.shape()));
  if (s.depth.rank() != 3 || s.depth.dim(0) != 1)
    throw DimensionError("channels", "depth must be [1,H,W], got " + shape_str(s.depth.shape()));
  if (s.rgb.dim(1) != s.depth.dim(1) || s.rgb.dim(2) != s.depth.dim(2))
    throw DimensionError("alignment", "rgb " + shape_str(s.rgb.shape()) + " and depth " + shape_str(s.depth.shape()) +
                                          " are not aligned");
  if (!(s.d_min > 0) || !(s.d_max > s.d_min)) throw InvalidArgument("depth range must satisfy 0 < d_min < d_max");
  if (!s.depth.all_finite() || (s.depth.array() <= 0.0f).any()) throw InvalidArgument("depth must be finite and positive");
}

// PFM ---------------------------------------------------------------------

void write_pfm(const fs::path& path, const Tensorf& depth) {
  if (depth.rank() != 3 || depth.dim(0) != 1) throw DimensionError("channels", "PFM depth must be [1,H,W]");
  const Index H = depth.dim(1), W = depth.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "Pf\n" << W << ' ' << H << "\n-1.0\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(W) * 4);
  for (Index y = H - 1; y >= 0; --y) {
    for (Index x = 0; x < W; ++x) {
      auto bits = std::bit_cast<std::uint32_t>(depth[y * W + x]);
      for (int b = 0; b < 4; ++b) row[static_cast<std::size_t>(x * 4 + b)] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Tensorf read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  Index W = 0, H = 0;
  double scale = 0;
  in >> magic >> W >> H >> scale;
  if (!in || magic != "Pf" || W < 1 || H < 1 || scale == 0)
    throw IoError(path.string() + ": not a single-channel PFM file");
  in.get();  // single whitespace byte before the raster
  const bool little = scale < 0;
  std::vector<unsigned char> raw(static_cast<std::size_t>(W * H * 4));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path.string() + ": truncated PFM raster");
  Tensorf t({1, H, W});
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const unsigned char* p = raw.data() + ((H - 1 - y) * W + x) * 4;
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[little ? b : 3 - b]) << (8 * b);
      t[y * W + x] = std::bit_cast<float>(bits);
    }
  return t;
}

// PNG ---------------------------------------------------------------------

namespace {

struct File {
  std::FILE* f;
  ~File() {
    if (f) std::fclose(f);
  }
};

void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  *what = msg;
  png_longjmp(png, 1);
}

// libpng reports errors through longjmp; keep the jump frames free of
// objects with destructors.
bool png_write_raw(std::FILE* f, const unsigned char* data, Index H, Index W, int color, int depth, int bpp,
                   std::string& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    err = "libpng init failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < H; ++y) png_write_row(png, data + y * W * bpp);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool png_read_raw(std::FILE* f, std::vector<unsigned char>& data, png_uint_32& H, png_uint_32& W, int& color,
                  int& depth, std::string& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    err = "libpng init failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_read_info(png, info);
  W = png_get_image_width(png, info);
  H = png_get_image_height(png, info);
  color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // little-endian samples in memory
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  data.resize(rowbytes * H);
  for (png_uint_32 y = 0; y < H; ++y) png_read_row(png, data.data() + y * rowbytes, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

File open_file(const fs::path& path, const char* mode) {
  File f{std::fopen(path.c_str(), mode)};
  if (!f.f) throw IoError(std::string("cannot ") + (mode[0] == 'r' ? "open " : "write ") + path.string());
  return f;
}

}  // namespace

void write_png_rgb(const fs::path& path, const Tensorf& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw DimensionError("channels", "rgb must be [3,H,W]");
  const Index H = rgb.dim(1), W = rgb.dim(2);
  std::vector<unsigned char> buf(static_cast<std::size_t>(H * W * 3));
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < 3; ++c)
        buf[static_cast<std::size_t>((y * W + x) * 3 + c)] =
            static_cast<unsigned char>(std::lround(std::clamp(rgb.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  File f = open_file(path, "wb");
  std::string err;
  if (!png_write_raw(f.f, buf.data(), H, W, PNG_COLOR_TYPE_RGB, 8, 3, err)) throw IoError(path.string() + ": " + err);
}

Tensorf read_png_rgb(const fs::path& path) {
  File f = open_file(path, "rb");
  std::vector<unsigned char> buf;
  png_uint_32 H = 0, W = 0;
  int color = 0, depth = 0;
  std::string err;
  if (!png_read_raw(f.f, buf, H, W, color, depth, err)) throw IoError(path.string() + ": " + err);
  if (depth != 8) throw IoError(path.string() + ": expected an 8-bit image");
  const Index channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  Tensorf t({3, static_cast<Index>(H), static_cast<Index>(W)});
  for (Index y = 0; y < static_cast<Index>(H); ++y)
    for (Index x = 0; x < static_cast<Index>(W); ++x)
      for (Index c = 0; c < 3; ++c)
        t.at(c, y, x) = buf[static_cast<std::size_t>((y * W + x) * channels + (channels == 3 ? c : 0))] / 255.0f;
  return t;
}

void write_png_gray16(const fs::path& path, const std::vector<std::uint16_t>& values, Index height, Index width) {
  if (static_cast<Index>(values.size()) != height * width) throw DimensionError("size", "gray16 buffer size mismatch");
  std::vector<unsigned char> buf(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {  // PNG stores samples big-endian
    buf[2 * i] = static_cast<unsigned char>(values[i] >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(values[i] & 0xff);
  }
  File f = open_file(path, "wb");
  std::string err;
  if (!png_write_raw(f.f, buf.data(), height, width, PNG_COLOR_TYPE_GRAY, 16, 2, err))
    throw IoError(path.string() + ": " + err);
}

std::vector<std::uint16_t> read_png_gray16(const fs::path& path, Index& height, Index& width) {
  File f = open_file(path, "rb");
  std::vector<unsigned char> buf;
  png_uint_32 H = 0, W = 0;
  int color = 0, depth = 0;
  std::string err;
  if (!png_read_raw(f.f, buf, H, W, color, depth, err)) throw IoError(path.string() + ": " + err);
  if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) throw IoError(path.string() + ": expected 16-bit grayscale");
  height = H;
  width = W;
  std::vector<std::uint16_t> v(static_cast<std::size_t>(H) * W);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<std::uint16_t>(buf[2 * i] | (static_cast<unsigned>(buf[2 * i + 1]) << 8));
  return v;
}

double read_depth_scale(const fs::path& dir) {
  const fs::path p = dir / kDepthScaleFile;
  std::ifstream in(p);
  if (!in) throw IoError("missing depth scale sidecar " + p.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
    if (key != "scale") continue;
    try {
      const double s = std::stod(line.substr(eq + 1));
      if (!(s > 0)) throw IoError(p.string() + ": scale must be positive");
      return s;
    } catch (const std::logic_error&) {
      throw IoError(p.string() + ": unparsable scale");
    }
  }
  throw IoError(p.string() + ": no scale= entry");
}

DepthSample load_pair(const fs::path& rgb_path, const fs::path& depth_path, DepthFormat format) {
  if (!fs::exists(rgb_path)) throw IoError("missing file " + rgb_path.string());
  if (!fs::exists(depth_path)) throw IoError("missing file " + depth_path.string());
  DepthSample s;
  s.rgb = read_png_rgb(rgb_path);
  if (format == DepthFormat::pfm) {
    s.depth = read_pfm(depth_path);
  } else {
    Index H = 0, W = 0;
    const auto raw = read_png_gray16(depth_path, H, W);
    const double scale = read_depth_scale(depth_path.parent_path());
    s.depth = Tensorf({1, H, W});
    for (std::size_t i = 0; i < raw.size(); ++i) s.depth[static_cast<Index>(i)] = static_cast<float>(raw[i] * scale);
  }
  if (s.rgb.dim(1) != s.depth.dim(1) || s.rgb.dim(2) != s.depth.dim(2))
    throw DimensionError("alignment", "rgb " + shape_str(s.rgb.shape()) + " (" + rgb_path.string() + ") and depth " +
                                          shape_str(s.depth.shape()) + " (" + depth_path.string() + ") differ in size");
  if ((s.depth.array() <= 0.0f).any() || !s.depth.all_finite())
    throw InvalidArgument(depth_path.string() + ": depth must be finite and positive");
  s.d_min = s.depth.array().minCoeff();
  s.d_max = s.depth.array().maxCoeff();
  if (s.d_max <= s.d_min) s.d_max = std::nextafter(s.d_min, INFINITY);
  return s;
}

// Normalization -----------------------------------------------------------

double normalize_depth_value(double d, double d_min, double d_max) { return 2.0 * (d - d_min) / (d_max - d_min) - 1.0; }

double denormalize_depth_value(double v, double d_min, double d_max) { return d_min + (v + 1.0) * 0.5 * (d_max - d_min); }

NormalizedSample normalize_input(const DepthSample& s, double d_min, double d_max) {
  if (!(d_max > d_min)) throw InvalidArgument("normalize_input requires d_max > d_min");
  NormalizedSample n;
  n.rgb = Tensorf(s.rgb.shape(), s.rgb.array() * 2.0f - 1.0f);
  n.depth = Tensorf(s.depth.shape());
  for (Index i = 0; i < s.depth.size(); ++i) {
    double d = s.depth[i];
    if (d < d_min || d > d_max) {
      ++n.clamped;
      d = std::clamp(d, d_min, d_max);
    }
    n.depth[i] = static_cast<float>(normalize_depth_value(d, d_min, d_max));
  }
  return n;
}

template <typename S>
Tensor<S> denormalize_depth(const Tensor<S>& depth_norm, double d_min, double d_max) {
  Tensor<S> out(depth_norm.shape());
  for (Index i = 0; i < out.size(); ++i)
    out[i] = static_cast<S>(denormalize_depth_value(static_cast<double>(depth_norm[i]), d_min, d_max));
  return out;
}
template Tensor<float> denormalize_depth(const Tensor<float>&, double, double);
template Tensor<double> denormalize_depth(const Tensor<double>&, double, double);

// Augmentation ------------------------------------------------------------

namespace {

Tensorf flip_image(const Tensorf& t) {
  const Index C = t.dim(0), H = t.dim(1), W = t.dim(2);
  Tensorf out(t.shape());
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) out.at(c, y, x) = t.at(c, y, W - 1 - x);
  return out;
}

Tensorf crop_image(const Tensorf& t, Index y0, Index x0, Index size) {
  const Index C = t.dim(0);
  Tensorf out({C, size, size});
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) out.at(c, y, x) = t.at(c, y0 + y, x0 + x);
  return out;
}

}  // namespace

DepthSample hflip(const DepthSample& s) {
  DepthSample out = s;
  out.rgb = flip_image(s.rgb);
  out.depth = flip_image(s.depth);
  return out;
}

DepthSample crop(const DepthSample& s, Index y0, Index x0, Index size) {
  const Index H = s.rgb.dim(1), W = s.rgb.dim(2);
  if (size < 1 || y0 < 0 || x0 < 0 || y0 + size > H || x0 + size > W)
    throw ConfigError("crop " + std::to_string(size) + " at (" + std::to_string(y0) + "," + std::to_string(x0) +
                      ") does not fit a " + std::to_string(H) + "x" + std::to_string(W) + " image");
  DepthSample out = s;
  out.rgb = crop_image(s.rgb, y0, x0, size);
  out.depth = crop_image(s.depth, y0, x0, size);
  return out;
}

DepthSample augment(const DepthSample& s, Rng& rng, const AugmentOptions& opts) {
  DepthSample cur = s;
  if (opts.resize) {
    const auto [h, w] = *opts.resize;
    cur.rgb = resize_bilinear(cur.rgb, h, w);
    cur.depth = resize_nearest(cur.depth, h, w);
  }
  const Index H = cur.rgb.dim(1), W = cur.rgb.dim(2);
  if (opts.crop_size > std::min(H, W))
    throw ConfigError("crop size " + std::to_string(opts.crop_size) + " exceeds image " + std::to_string(H) + "x" +
                      std::to_string(W));
  // Draws happen in a fixed order whether or not each step applies.
  const bool do_flip = uniform01(rng) < 0.5;
  if (opts.flip && do_flip) cur = hflip(cur);
  if (opts.crop_size > 0) {
    const Index y0 = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(H - opts.crop_size + 1)));
    const Index x0 = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(W - opts.crop_size + 1)));
    cur = crop(cur, y0, x0, opts.crop_size);
  }
  return cur;
}

// Synthetic scenes --------------------------------------------------------

double inverse_depth_shading(double depth, double d_min, double d_max) {
  const double t = (1.0 / depth - 1.0 / d_max) / (1.0 / d_min - 1.0 / d_max);
  return 0.25 + 0.75 * std::clamp(t, 0.0, 1.0);
}

SynthScene synth_scene(std::uint64_t seed, Index size, int n_objects, double d_min, double d_max) {
  if (n_objects < 0) throw InvalidArgument("n_objects must be >= 0");
  if (size < 2) throw InvalidArgument("scene size must be >= 2");
  if (!(d_min > 0) || !(d_max > d_min)) throw InvalidArgument("scene depth range must satisfy 0 < d_min < d_max");
  Rng rng(seed);
  SynthScene scene;
  DepthSample& s = scene.sample;
  s.d_min = d_min;
  s.d_max = d_max;
  s.depth = Tensorf({1, size, size});
  s.rgb = Tensorf({3, size, size});
  std::vector<int> owner(static_cast<std::size_t>(size * size), -1);
  for (Index y = 0; y < size; ++y) {
    const double d = d_max + (d_min - d_max) * static_cast<double>(y) / static_cast<double>(size - 1);
    for (Index x = 0; x < size; ++x) s.depth[y * size + x] = static_cast<float>(d);
  }
  const std::array<double, 3> floor_albedo{0.75 + 0.25 * uniform01(rng), 0.75 + 0.25 * uniform01(rng),
                                           0.75 + 0.25 * uniform01(rng)};
  for (int k = 0; k < n_objects; ++k) {
    SynthObject o{};
    const Index h = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(size / 2)));
    const Index w = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(size / 2)));
    o.y0 = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(size - h + 1)));
    o.x0 = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(size - w + 1)));
    o.y1 = o.y0 + h;
    o.x1 = o.x0 + w;
    o.depth = d_min + (d_max - d_min) * uniform01(rng);
    for (auto& a : o.albedo) a = 0.7 + 0.3 * uniform01(rng);
    scene.objects.push_back(o);
  }
  // Paint far to near so the nearest rectangle wins each pixel.
  std::vector<int> order(scene.objects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scene.objects[static_cast<std::size_t>(a)].depth > scene.objects[static_cast<std::size_t>(b)].depth; });
  for (int k : order) {
    const SynthObject& o = scene.objects[static_cast<std::size_t>(k)];
    for (Index y = o.y0; y < o.y1; ++y)
      for (Index x = o.x0; x < o.x1; ++x) {
        s.depth[y * size + x] = static_cast<float>(o.depth);
        owner[static_cast<std::size_t>(y * size + x)] = k;
      }
  }
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const int k = owner[static_cast<std::size_t>(y * size + x)];
      const auto& albedo = k < 0 ? floor_albedo : scene.objects[static_cast<std::size_t>(k)].albedo;
      const double shade = inverse_depth_shading(s.depth[y * size + x], d_min, d_max);
      for (Index c = 0; c < 3; ++c) {
        const double noise = 0.04 * (uniform01(rng) - 0.5);
        s.rgb.at(c, y, x) = static_cast<float>(std::clamp(albedo[static_cast<std::size_t>(c)] * shade + noise, 0.0, 1.0));
      }
    }
  return scene;
}

// Manifests ---------------------------------------------------------------

SplitManifests make_manifest(std::vector<ManifestEntry> entries, double ratio, std::uint64_t seed) {
  if (entries.empty()) throw InvalidArgument("cannot split an empty dataset");
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("split ratio must lie in (0, 1)");
  Rng rng(seed);
  for (std::size_t i = entries.size() - 1; i > 0; --i) std::swap(entries[i], entries[uniform_index(rng, i + 1)]);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(entries.size())));
  SplitManifests m;
  m.seed = seed;
  m.train.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.test.assign(entries.begin() + static_cast<std::ptrdiff_t>(n_train), entries.end());
  return m;
}

std::vector<ManifestEntry> scan_dataset(const fs::path& root) {
  std::vector<ManifestEntry> out;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    fs::path depth = e.path();
    depth.replace_extension(".pfm");
    if (fs::exists(depth)) out.push_back({e.path().string(), depth.string()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.rgb < b.rgb; });
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : entries) out << e.rgb << '\t' << e.depth << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  const fs::path base = path.parent_path();
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected rgb<TAB>depth");
    fs::path rgb = line.substr(0, tab), depth = line.substr(tab + 1);
    if (rgb.is_relative()) rgb = base / rgb;
    if (depth.is_relative()) depth = base / depth;
    out.push_back({rgb.string(), depth.string()});
  }
  if (out.empty()) throw IoError("manifest " + path.string() + " is empty");
  return out;
}

SplitManifests write_synth_dataset(const fs::path& dir, const SynthDataOptions& opts, std::uint64_t seed) {
  if (opts.count < 2) throw ConfigError("synthetic dataset needs at least 2 samples");
  std::error_code ec;
  fs::create_directories(dir / "scenes", ec);
  if (ec) throw IoError("cannot create " + (dir / "scenes").string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  std::seed_seq base{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(opts.count));
  {
    std::vector<std::uint32_t> words(seeds.size() * 2);
    base.generate(words.begin(), words.end());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = (std::uint64_t{words[2 * i]} << 32) | words[2 * i + 1];
  }
  for (int i = 0; i < opts.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%05d", i);
    const SynthScene sc = synth_scene(seeds[static_cast<std::size_t>(i)], opts.size, opts.n_objects, opts.d_min, opts.d_max);
    const std::string rgb = std::string("scenes/") + stem + ".png", depth = std::string("scenes/") + stem + ".pfm";
    write_png_rgb(dir / rgb, sc.sample.rgb);
    write_pfm(dir / depth, sc.sample.depth);
    entries.push_back({rgb, depth});
  }
  SplitManifests m = make_manifest(entries, opts.split_ratio, seed);
  write_manifest(dir / "train.txt", m.train);
  write_manifest(dir / "test.txt", m.test);
  return m;
}

std::vector<DepthSample> load_manifest_samples(const fs::path& manifest, DepthFormat format) {
  std::vector<DepthSample> out;
  for (const auto& e : read_manifest(manifest)) out.push_back(load_pair(e.rgb, e.depth, format));
  return out;
}

template <typename S>
Tensor<S> stack(const std::vector<Tensor<S>>& items) {
  if (items.empty()) throw InvalidArgument("stack of zero tensors");
  Shape s = items.front().shape();
  const Index n = items.front().size();
  s.insert(s.begin(), static_cast<Index>(items.size()));
  Tensor<S> out(s);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].shape() != items.front().shape())
      throw DimensionError("batch", "stack of mismatched shapes " + shape_str(items.front().shape()) + " and " +
                                        shape_str(items[i].shape()));
    out.array().segment(static_cast<Index>(i) * n, n) = items[i].array();
  }
  return out;
}
template Tensor<float> stack(const std::vector<Tensor<float>>&);
template Tensor<double> stack(const std::vector<Tensor<double>>&);

Batch make_batch(const std::vector<DepthSample>& samples, const std::vector<std::size_t>& indices, double d_min,
                 double d_max) {
  std::vector<Tensorf> rgb, depth;
  for (std::size_t i : indices) {
    NormalizedSample n = normalize_input(samples.at(i), d_min, d_max);
    rgb.push_back(std::move(n.rgb));
    depth.push_back(std::move(n.depth));
  }
  return {stack(rgb), stack(depth)};
}

Tensorf colorize_depth(const Tensorf& depth, double d_min, double d_max) {
  if (depth.rank() != 3 || depth.dim(0) != 1) throw DimensionError("channels", "colorize expects [1,H,W]");
  // Anchors of a viridis-like ramp, sampled at t = 0, 1/4, ..., 1.
  static constexpr double ramp[5][3] = {
      {0.267, 0.005, 0.329}, {0.229, 0.322, 0.546}, {0.128, 0.567, 0.551}, {0.369, 0.789, 0.383}, {0.993, 0.906, 0.144}};
  const Index H = depth.dim(1), W = depth.dim(2);
  Tensorf out({3, H, W});
  for (Index i = 0; i < H * W; ++i) {
    const double t = std::clamp((d_max - depth[i]) / (d_max - d_min), 0.0, 1.0) * 4.0;
    const int k = std::min(3, static_cast<int>(t));
    const double f = t - k;
    for (Index c = 0; c < 3; ++c)
      out[c * H * W + i] = static_cast<float>(ramp[k][c] + (ramp[k + 1][c] - ramp[k][c]) * f);
  }
  return out;
}

}  // namespace advdepth
