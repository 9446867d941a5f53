#include "advdepth/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace advdepth {

SynthDataOptions RunConfig::synth_options() const {
  SynthDataOptions s = synth;
  s.d_min = gan.d_min;
  s.d_max = gan.d_max;
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Proj>
Field number(std::string key, Proj proj) {
  return {std::move(key),
          [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = parse_number<T>(k, v); },
          [proj](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(proj(const_cast<RunConfig&>(c)));
            else
              return std::to_string(proj(const_cast<RunConfig&>(c)));
          }};
}

template <typename Proj>
Field boolean(std::string key, Proj proj) {
  return {std::move(key), [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = parse_bool(k, v); },
          [proj](const RunConfig& c) { return std::string(proj(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Proj>
Field text(std::string key, Proj proj) {
  return {std::move(key), [proj](RunConfig& c, const std::string&, const std::string& v) { proj(c) = v; },
          [proj](const RunConfig& c) { return proj(const_cast<RunConfig&>(c)); }};
}

template <typename E>
Field choice(std::string key, std::vector<std::pair<std::string, E>> names, std::function<E&(RunConfig&)> proj) {
  return {std::move(key),
          [names, proj](RunConfig& c, const std::string& k, const std::string& v) {
            for (const auto& [n, e] : names)
              if (n == v) {
                proj(c) = e;
                return;
              }
            std::string allowed;
            for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : "|") + n;
            throw ConfigError("key '" + k + "': expected one of " + allowed + ", got '" + v + "'");
          },
          [names, proj](const RunConfig& c) {
            const E cur = proj(const_cast<RunConfig&>(c));
            for (const auto& [n, e] : names)
              if (e == cur) return n;
            return std::string("?");
          }};
}

// Optional values: "none" (or empty) clears.
Field optional_double(std::string key, std::function<std::optional<double>&(RunConfig&)> proj) {
  return {std::move(key),
          [proj](RunConfig& c, const std::string& k, const std::string& v) {
            if (v.empty() || v == "none")
              proj(c).reset();
            else
              proj(c) = parse_number<double>(k, v);
          },
          [proj](const RunConfig& c) {
            const auto& o = proj(const_cast<RunConfig&>(c));
            return o ? format_double(*o) : std::string("none");
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // Optimization and schedule.
    f.push_back(number<double>("base_lr", [](RunConfig& c) -> double& { return c.gan.base_lr; }));
    f.push_back(number<double>("disc_lr_multiplier", [](RunConfig& c) -> double& { return c.gan.disc_lr_multiplier; }));
    f.push_back(number<int>("epochs_constant", [](RunConfig& c) -> int& { return c.gan.epochs_constant; }));
    f.push_back(number<int>("epochs_decay", [](RunConfig& c) -> int& { return c.gan.epochs_decay; }));
    f.push_back(number<int>("batch_size", [](RunConfig& c) -> int& { return c.gan.batch_size; }));
    f.push_back(number<int>("buffer_capacity", [](RunConfig& c) -> int& { return c.gan.buffer_capacity; }));
    f.push_back(number<double>("lambda", [](RunConfig& c) -> double& { return c.gan.lambda; }));
    f.push_back(number<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.gan.seed; }));
    f.push_back(boolean("adversarial", [](RunConfig& c) -> bool& { return c.gan.adversarial; }));
    f.push_back(choice<AdversarialForm>(
        "adversarial_form", {{"nonsaturating", AdversarialForm::nonsaturating}, {"saturating", AdversarialForm::saturating}},
        [](RunConfig& c) -> AdversarialForm& { return c.gan.adversarial_form; }));
    f.push_back(number<int>("checkpoint_every", [](RunConfig& c) -> int& { return c.gan.checkpoint_every; }));
    // Generator.
    f.push_back(choice<GeneratorKind>("generator", {{"unet", GeneratorKind::unet}, {"cnn_crf", GeneratorKind::cnn_crf}},
                                      [](RunConfig& c) -> GeneratorKind& { return c.gan.generator_kind; }));
    f.push_back(number<int>("input_size", [](RunConfig& c) -> int& { return c.gan.unet.input_size; }));
    f.push_back(number<int>("unet_base_channels", [](RunConfig& c) -> int& { return c.gan.unet.base_channels; }));
    f.push_back(number<int>("unet_max_channels", [](RunConfig& c) -> int& { return c.gan.unet.max_channels; }));
    f.push_back(number<double>("dropout_p", [](RunConfig& c) -> double& { return c.gan.unet.bottleneck_dropout_p; }));
    f.push_back(number<double>("leaky_slope", [](RunConfig& c) -> double& { return c.gan.unet.leaky_slope; }));
    f.push_back(boolean("unet_spectral_norm", [](RunConfig& c) -> bool& { return c.gan.unet.use_spectral_norm; }));
    // Discriminator.
    f.push_back(number<int>("disc_base_channels", [](RunConfig& c) -> int& { return c.gan.disc_base_channels; }));
    f.push_back(boolean("disc_spectral_norm", [](RunConfig& c) -> bool& { return c.gan.disc_spectral_norm; }));
    // CRF.
    f.push_back(number<int>("crf_superpixels", [](RunConfig& c) -> int& { return c.gan.crf.superpixels; }));
    f.push_back(choice<SegmentationMethod>(
        "crf_segmentation", {{"grid", SegmentationMethod::grid}, {"slic", SegmentationMethod::slic}},
        [](RunConfig& c) -> SegmentationMethod& { return c.gan.crf.method; }));
    f.push_back(number<double>("crf_slic_compactness", [](RunConfig& c) -> double& { return c.gan.crf.slic.compactness; }));
    f.push_back(number<int>("crf_slic_iterations", [](RunConfig& c) -> int& { return c.gan.crf.slic.iterations; }));
    f.push_back(number<double>("crf_sigma_intensity",
                               [](RunConfig& c) -> double& { return c.gan.crf.similarity.sigma_intensity; }));
    f.push_back(number<double>("crf_sigma_histogram",
                               [](RunConfig& c) -> double& { return c.gan.crf.similarity.sigma_histogram; }));
    f.push_back(number<int>("crf_histogram_bins", [](RunConfig& c) -> int& { return c.gan.crf.similarity.histogram_bins; }));
    f.push_back(number<int>("crf_patch_size", [](RunConfig& c) -> int& { return c.gan.crf.unary.patch_size; }));
    f.push_back(number<int>("crf_unary_base_channels", [](RunConfig& c) -> int& { return c.gan.crf.unary.base_channels; }));
    f.push_back(number<int>("crf_unary_max_channels", [](RunConfig& c) -> int& { return c.gan.crf.unary.max_channels; }));
    f.push_back(boolean("crf_unary_spectral_norm", [](RunConfig& c) -> bool& { return c.gan.crf.unary.use_spectral_norm; }));
    f.push_back(number<double>("crf_beta_init", [](RunConfig& c) -> double& { return c.gan.crf.beta_init; }));
    f.push_back(number<double>("crf_lambda_gamma", [](RunConfig& c) -> double& { return c.gan.crf.lambda_gamma; }));
    f.push_back(number<double>("crf_lambda_beta", [](RunConfig& c) -> double& { return c.gan.crf.lambda_beta; }));
    f.push_back(number<double>("crf_mu", [](RunConfig& c) -> double& { return c.gan.crf_mu; }));
    // Data.
    f.push_back(number<double>("d_min", [](RunConfig& c) -> double& { return c.gan.d_min; }));
    f.push_back(number<double>("d_max", [](RunConfig& c) -> double& { return c.gan.d_max; }));
    f.push_back(number<Index>("crop_size", [](RunConfig& c) -> Index& { return c.gan.augment.crop_size; }));
    f.push_back(boolean("flip", [](RunConfig& c) -> bool& { return c.gan.augment.flip; }));
    f.push_back(Field{"resize",
                      [](RunConfig& c, const std::string& k, const std::string& v) {
                        if (v.empty() || v == "none") {
                          c.gan.augment.resize.reset();
                          return;
                        }
                        const auto x = v.find('x');
                        if (x == std::string::npos) throw ConfigError("key '" + k + "': expected HxW or none");
                        c.gan.augment.resize = std::pair{parse_number<Index>(k, v.substr(0, x)),
                                                         parse_number<Index>(k, v.substr(x + 1))};
                      },
                      [](const RunConfig& c) {
                        const auto& r = c.gan.augment.resize;
                        return r ? std::to_string(r->first) + "x" + std::to_string(r->second) : std::string("none");
                      }});
    f.push_back(text("data_dir", [](RunConfig& c) -> std::string& { return c.data_dir; }));
    f.push_back(text("train_manifest", [](RunConfig& c) -> std::string& { return c.train_manifest; }));
    f.push_back(text("test_manifest", [](RunConfig& c) -> std::string& { return c.test_manifest; }));
    f.push_back(choice<DepthFormat>("depth_format", {{"pfm", DepthFormat::pfm}, {"png16", DepthFormat::png16}},
                                    [](RunConfig& c) -> DepthFormat& { return c.depth_format; }));
    f.push_back(number<int>("synth_count", [](RunConfig& c) -> int& { return c.synth.count; }));
    f.push_back(number<Index>("synth_size", [](RunConfig& c) -> Index& { return c.synth.size; }));
    f.push_back(number<int>("synth_objects", [](RunConfig& c) -> int& { return c.synth.n_objects; }));
    f.push_back(number<double>("split_ratio", [](RunConfig& c) -> double& { return c.synth.split_ratio; }));
    f.push_back(optional_double("depth_cap", [](RunConfig& c) -> std::optional<double>& { return c.depth_cap; }));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, key, value);
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_config(os.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace advdepth
