#include "glyphgan/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "glyphgan/errors.hpp"

namespace glyphgan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": '" + v + "' is not a number");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": '" + v + "' is not an integer");
  return i;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (*end != '\0' || errno == ERANGE) throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return u;
}

int to_int32(const std::string& key, const std::string& v) {
  const long long i = to_int(key, v);
  if (i < -2147483647LL || i > 2147483647LL) throw ConfigError(key + ": '" + v + "' is out of range");
  return static_cast<int>(i);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::string fmt(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  // Prefer the shortest form that reads back to the same value.
  for (int p = 1; p <= 17; ++p) {
    char shortbuf[40];
    std::snprintf(shortbuf, sizeof shortbuf, "%.*g", p, d);
    if (std::strtod(shortbuf, nullptr) == d) return shortbuf;
  }
  return buf;
}

std::string fmt_sizes(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> to_sizes(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int32(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

const char* format_name(CodepointFormat f) {
  switch (f) {
    case CodepointFormat::Decimal:
      return "decimal";
    case CodepointFormat::Hex:
      return "hex";
    default:
      return "auto";
  }
}

struct Entry {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& name, const std::string&)> set;
};

#define GG_DOUBLE(sec, name, field)                                                     \
  Entry {                                                                               \
    sec, name, [](const RunConfig& c) { return fmt(c.field); },                         \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); } \
  }
#define GG_INT(sec, name, field)                                                        \
  Entry {                                                                               \
    sec, name, [](const RunConfig& c) { return std::to_string(c.field); },              \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_int32(k, v); } \
  }
#define GG_U64(sec, name, field)                                                        \
  Entry {                                                                               \
    sec, name, [](const RunConfig& c) { return std::to_string(c.field); },              \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_u64(k, v); } \
  }
#define GG_BOOL(sec, name, field)                                                       \
  Entry {                                                                               \
    sec, name, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      GG_INT("arch", "image_size", arch.image_size),
      GG_INT("arch", "base_channels", arch.base_channels),
      GG_INT("arch", "max_channels", arch.max_channels),
      GG_INT("arch", "filter_size", arch.filter_size),
      GG_INT("arch", "stride", arch.stride),
      GG_INT("arch", "disc_blocks", arch.disc_blocks),
      GG_DOUBLE("arch", "encoder_slope", arch.encoder_slope),
      Entry{"arch", "disc_head",
            [](const RunConfig& c) {
              return std::string(c.arch.disc_head == DiscriminatorHead::Patch ? "patch" : "scalar");
            },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "scalar") {
                c.arch.disc_head = DiscriminatorHead::Scalar;
              } else if (v == "patch") {
                c.arch.disc_head = DiscriminatorHead::Patch;
              } else {
                throw ConfigError(k + ": expected scalar or patch, got '" + v + "'");
              }
            }},
      GG_DOUBLE("arch", "bn_epsilon", arch.bn_epsilon),
      GG_DOUBLE("arch", "bn_momentum", arch.bn_momentum),

      GG_DOUBLE("train", "lr_g", train.lr_g),
      GG_DOUBLE("train", "lr_d", train.lr_d),
      GG_DOUBLE("train", "beta_g", train.beta_g),
      GG_DOUBLE("train", "beta_d", train.beta_d),
      GG_DOUBLE("train", "adam_beta2", train.adam_beta2),
      GG_DOUBLE("train", "adam_eps", train.adam_eps),
      GG_DOUBLE("train", "decay", train.decay),
      GG_INT("train", "epochs", train.epochs),
      GG_INT("train", "batch_size", train.batch_size),
      GG_DOUBLE("train", "init_std", train.init_std),
      GG_U64("train", "seed", train.seed),
      GG_INT("train", "d_steps", train.d_steps),
      GG_DOUBLE("train", "grad_clip", train.grad_clip),
      GG_INT("train", "checkpoint_every", train.checkpoint_every),
      GG_BOOL("train", "augment", train.augment),
      GG_INT("train", "jitter_size", train.jitter_size),

      GG_DOUBLE("loss", "alpha", loss.alpha),
      GG_DOUBLE("loss", "beta", loss.beta),
      GG_DOUBLE("loss", "eps_log", loss.eps_log),

      GG_DOUBLE("data", "binarize_threshold", data.binarize_threshold),
      Entry{"data", "codepoint_format", [](const RunConfig& c) { return std::string(format_name(c.data.format)); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.data.format = parse_codepoint_format(v);
            }},
      GG_INT("data", "test_size", data.test_size),
      Entry{"data", "train_sizes", [](const RunConfig& c) { return fmt_sizes(c.data.train_sizes); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.data.train_sizes = to_sizes(k, v); }},
      Entry{"data", "test_list", [](const RunConfig& c) { return c.data.test_list; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.data.test_list = v; }},

      GG_INT("metrics", "window", metrics.window),
      Entry{"metrics", "coverage_mode",
            [](const RunConfig& c) { return std::string(coverage_mode_name(c.metrics.mode)); },
            [](RunConfig& c, const std::string&, const std::string& v) { c.metrics.mode = parse_coverage_mode(v); }},
      GG_DOUBLE("metrics", "ssim_k1", metrics.ssim.k1),
      GG_DOUBLE("metrics", "ssim_k2", metrics.ssim.k2),
      GG_DOUBLE("metrics", "ssim_dynamic_range", metrics.ssim.dynamic_range),
      GG_DOUBLE("metrics", "cr_high", metrics.thresholds.cr_high),
      GG_DOUBLE("metrics", "ssim_high", metrics.thresholds.ssim_high),
      GG_DOUBLE("metrics", "cr_low", metrics.thresholds.cr_low),
      GG_DOUBLE("metrics", "ssim_low", metrics.thresholds.ssim_low),

      Entry{"generate", "threshold_mode",
            [](const RunConfig& c) { return std::string(threshold_mode_name(c.generate.threshold_mode)); },
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.generate.threshold_mode = parse_threshold_mode(v);
            }},
      GG_DOUBLE("generate", "threshold", generate.threshold),
      GG_BOOL("generate", "training_batchnorm", generate.training_batchnorm),

      GG_INT("turing", "n_each", turing.n_each),
      GG_INT("turing", "rows", turing.rows),
      GG_INT("turing", "cols", turing.cols),
      GG_U64("turing", "seed", turing.seed),
      GG_INT("turing", "required_marks", turing.required_marks),
      GG_BOOL("turing", "answer_image", turing.answer_image),

      GG_BOOL("run", "deterministic", deterministic),
      GG_INT("run", "threads", threads),
  };
  return table;
}

#undef GG_DOUBLE
#undef GG_INT
#undef GG_U64
#undef GG_BOOL

const Entry& find_entry(const std::string& dotted) {
  const auto dot = dotted.find('.');
  if (dot != std::string::npos) {
    const std::string sec = dotted.substr(0, dot), key = dotted.substr(dot + 1);
    for (const auto& e : entries()) {
      if (sec == e.section && key == e.key) return e;
    }
  }
  throw ConfigError("unknown config key '" + dotted + "'");
}

}  // namespace

ThresholdMode parse_threshold_mode(const std::string& name) {
  if (name == "per-image") return ThresholdMode::PerImage;
  if (name == "global") return ThresholdMode::Global;
  if (name == "fixed") return ThresholdMode::Fixed;
  throw ConfigError("threshold mode must be per-image, global or fixed, got '" + name + "'");
}

const char* threshold_mode_name(ThresholdMode mode) {
  switch (mode) {
    case ThresholdMode::PerImage:
      return "per-image";
    case ThresholdMode::Global:
      return "global";
    default:
      return "fixed";
  }
}

void RunConfig::validate() const {
  arch.validate();
  train.validate();
  loss.validate();
  metrics.ssim.validate();
  metrics.thresholds.validate();
  if (!(data.binarize_threshold > 0 && data.binarize_threshold <= 1)) {
    throw ConfigError("data.binarize_threshold must lie in (0, 1]");
  }
  if (data.test_size < 1) throw ConfigError("data.test_size must be >= 1");
  for (std::size_t i = 0; i < data.train_sizes.size(); ++i) {
    if (data.train_sizes[i] < 1) throw ConfigError("data.train_sizes entries must be >= 1");
    if (i && data.train_sizes[i] <= data.train_sizes[i - 1]) {
      throw ConfigError("data.train_sizes must be strictly ascending");
    }
  }
  if (metrics.window < -1) throw ConfigError("metrics.window must be >= 0, or -1 for the default");
  if (!(generate.threshold > 0 && generate.threshold < 1)) throw ConfigError("generate.threshold must lie in (0, 1)");
  if (turing.n_each < 1 || turing.rows < 1 || turing.cols < 1) {
    throw ConfigError("turing.n_each, rows and cols must be >= 1");
  }
  if (turing.required_marks < 0) throw ConfigError("turing.required_marks must be >= 0");
  if (threads < 0) throw ConfigError("run.threads must be >= 0");
  if (train.jitter_size != 0 && train.jitter_size <= arch.image_size) {
    throw ConfigError("train.jitter_size must exceed arch.image_size");
  }
}

void set_config_value(RunConfig& config, const std::string& dotted_key, const std::string& value) {
  find_entry(dotted_key).set(config, dotted_key, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& dotted_key) {
  return find_entry(dotted_key).get(config);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(std::string(e.section) + "." + e.key);
  return keys;
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.find('.') == std::string::npos) key = section + "." + key;
    try {
      set_config_value(config, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig config;
  apply_config_text(config, ss.str());
  return config;
}

std::string format_config(const RunConfig& config, const std::vector<std::string>& sections) {
  std::ostringstream out;
  std::string current;
  for (const auto& e : entries()) {
    if (!sections.empty() && std::find(sections.begin(), sections.end(), e.section) == sections.end()) continue;
    if (current != e.section) {
      if (!current.empty()) out << "\n";
      current = e.section;
      out << "[" << current << "]\n";
    }
    out << e.key << " = " << e.get(config) << "\n";
  }
  return out.str();
}

void write_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << format_config(config);
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace glyphgan
