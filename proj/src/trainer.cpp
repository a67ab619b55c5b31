#include "glyphgan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "glyphgan/errors.hpp"
#include "glyphgan/image.hpp"

namespace glyphgan {

namespace fs = std::filesystem;

TrainState init_train_state(const ArchConfig& arch, const TrainConfig& train, const LossWeights& loss) {
  arch.validate();
  train.validate();
  loss.validate();
  TrainState s;
  s.arch = arch;
  s.train = train;
  s.loss = loss;
  s.generator = build_generator<float>(arch, train.seed, train.init_std);
  s.discriminator = build_discriminator<float>(arch, train.seed + 1, train.init_std);
  s.rng.seed(train.seed + 2);
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[] = "GLYPHGANCKPT";
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes_ += s;
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string fixed(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

// Every float array a checkpoint carries, in a fixed order.
struct Slot {
  std::string name;
  Shape shape;
  std::span<float> values;
};

std::vector<Slot> slots(TrainState& s) {
  std::vector<Slot> out;
  for (auto& p : s.generator.parameters()) out.push_back({p.name, p.tensor.shape(), p.tensor.data()});
  for (auto& [name, buf] : s.generator.buffers()) out.push_back({name, Shape{buf->size()}, *buf});
  for (auto& p : s.discriminator.parameters()) out.push_back({p.name, p.tensor.shape(), p.tensor.data()});
  for (auto& [name, buf] : s.discriminator.buffers()) out.push_back({name, Shape{buf->size()}, *buf});
  auto adam = [&](const char* tag, AdamState<float>& st, const std::vector<NamedParam<float>>& params) {
    if (st.m.empty()) return;
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back({std::string(tag) + ".m." + params[i].name, params[i].tensor.shape(), st.m[i]});
      out.push_back({std::string(tag) + ".v." + params[i].name, params[i].tensor.shape(), st.v[i]});
    }
  };
  adam("adam_g", s.adam_g, s.generator.parameters());
  adam("adam_d", s.adam_d, s.discriminator.parameters());
  return out;
}

RunConfig config_of(const TrainState& s) {
  RunConfig c;
  c.arch = s.arch;
  c.train = s.train;
  c.loss = s.loss;
  return c;
}

void require_finite(double v, const char* term, std::int64_t step) {
  if (!std::isfinite(v)) throw NumericError(std::string(term) + " is not finite at step " + std::to_string(step));
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  auto& s = const_cast<TrainState&>(state);  // slots() only reads through the spans here
  Writer w;
  w.raw(kMagic, sizeof(kMagic) - 1);
  w.u32(kVersion);
  w.str(format_config(config_of(s), {"arch", "train", "loss"}));
  w.u64(static_cast<std::uint64_t>(s.epoch));
  w.u64(static_cast<std::uint64_t>(s.step));
  w.u64(static_cast<std::uint64_t>(s.adam_g.step));
  w.u64(static_cast<std::uint64_t>(s.adam_d.step));
  std::ostringstream rng;
  rng << s.rng;
  w.str(rng.str());
  const auto table = slots(s);
  w.u32(static_cast<std::uint32_t>(table.size()));
  for (const auto& slot : table) {
    w.str(slot.name);
    w.u32(static_cast<std::uint32_t>(slot.shape.size()));
    for (auto d : slot.shape) w.u64(d);
    for (float f : slot.values) w.f32(f);
  }
  return w.take();
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof(kMagic) - 1 || r.fixed(sizeof(kMagic) - 1) != kMagic) {
    throw DataError("not a glyphgan checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  RunConfig config;
  apply_config_text(config, r.str());
  TrainState s = init_train_state(config.arch, config.train, config.loss);
  s.epoch = static_cast<int>(r.u64());
  s.step = static_cast<std::int64_t>(r.u64());
  s.adam_g.step = static_cast<std::int64_t>(r.u64());
  s.adam_d.step = static_cast<std::int64_t>(r.u64());
  std::istringstream rng(r.str());
  rng >> s.rng;
  if (!rng) throw DataError("checkpoint RNG state is malformed");

  // Optimizer slots exist once a network has taken a step.
  auto size_adam = [](AdamState<float>& st, const std::vector<NamedParam<float>>& params) {
    if (st.step == 0) return;
    st.m.assign(params.size(), {});
    st.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i].tensor.numel(), 0.0f);
      st.v[i].assign(params[i].tensor.numel(), 0.0f);
    }
  };
  size_adam(s.adam_g, s.generator.parameters());
  size_adam(s.adam_d, s.discriminator.parameters());

  auto table = slots(s);
  const std::uint32_t count = r.u32();
  if (count != table.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, the embedded architecture needs " +
                    std::to_string(table.size()));
  }
  for (auto& slot : table) {
    const std::string name = r.str();
    if (name != slot.name) throw DataError("checkpoint tensor '" + name + "' where '" + slot.name + "' was expected");
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    if (shape != slot.shape) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_str(shape) +
                      ", the embedded architecture gives " + shape_str(slot.shape));
    }
    for (float& f : slot.values) f = r.f32();
  }
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return s;
}

void save_checkpoint(const std::string& path, const TrainState& state) {
  const std::string bytes = serialize_checkpoint(state);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

bool states_equal(const TrainState& a, const TrainState& b) { return serialize_checkpoint(a) == serialize_checkpoint(b); }

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename Net>
std::vector<std::vector<float>> full_snapshot(Net& net) {
  auto out = snapshot(net.parameters());
  for (auto& [name, buf] : net.buffers()) out.push_back(*buf);
  return out;
}

// Restores requires_grad on the discriminator even when the generator pass throws.
struct FreezeGuard {
  std::vector<NamedParam<float>> params;
  explicit FreezeGuard(std::vector<NamedParam<float>> p) : params(std::move(p)) { set_requires_grad(params, false); }
  ~FreezeGuard() { set_requires_grad(params, true); }
};

}  // namespace

StepRecord train_step(TrainState& s, const std::vector<const ImagePair*>& batch, double lr_g, double lr_d,
                      const StepOptions& options) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  std::vector<const GlyphImage*> sources, targets;
  for (const auto* p : batch) {
    if (p->source.size != s.arch.image_size || p->target.size != s.arch.image_size) {
      throw DataError("glyph size " + std::to_string(p->source.size) + " does not match arch.image_size " +
                      std::to_string(s.arch.image_size));
    }
    sources.push_back(&p->source);
    targets.push_back(&p->target);
  }
  const Tensor<float> x = glyph_batch<float>(sources);
  const Tensor<float> y = glyph_batch<float>(targets);
  auto g_params = s.generator.parameters();
  auto d_params = s.discriminator.parameters();
  const ForwardMode train_mode{true, true};

  StepRecord rec;
  rec.step = s.step;
  rec.epoch = s.epoch;
  rec.lr_g = lr_g;
  rec.lr_d = lr_d;

  Tape g_tape;
  Tensor<float> fake;
  {
    TapeScope scope(g_tape);
    fake = generator_forward(s.generator, x, train_mode);
  }

  // Discriminator: the generator output enters as a constant.
  std::vector<std::vector<float>> g_before;
  if (options.check_isolation) g_before = full_snapshot(s.generator);
  const Tensor<float> fake_const = fake.detach();
  const AdamHyper hyper_d{lr_d, s.train.beta_d, s.train.adam_beta2, s.train.adam_eps, s.train.grad_clip};
  for (int k = 0; k < s.train.d_steps; ++k) {
    Tape d_tape;
    TapeScope scope(d_tape);
    for (auto& p : d_params) p.tensor.zero_grad();
    const Tensor<float> d_real = discriminator_forward(s.discriminator, x, y, train_mode);
    const Tensor<float> d_fake = discriminator_forward(s.discriminator, x, fake_const, train_mode);
    const Tensor<float> loss_d = discriminator_loss(d_real, d_fake, s.loss.eps_log);
    rec.l_d = loss_d.item();
    require_finite(rec.l_d, "L_d", s.step);
    d_tape.backward(loss_d);
    adam_step<float>(std::span<NamedParam<float>>(d_params), s.adam_d, hyper_d);
  }
  if (options.check_isolation && full_snapshot(s.generator) != g_before) {
    throw std::logic_error("discriminator update modified the generator");
  }

  // Generator: gradients flow through the updated discriminator, whose
  // parameters and running statistics stay untouched.
  std::vector<std::vector<float>> d_before;
  if (options.check_isolation) d_before = full_snapshot(s.discriminator);
  {
    FreezeGuard frozen(d_params);
    for (auto& p : g_params) p.tensor.zero_grad();
    TapeScope scope(g_tape);
    const Tensor<float> d_fake = discriminator_forward(s.discriminator, x, fake, ForwardMode{true, false});
    const GeneratorLoss<float> loss_g = generator_total_loss(d_fake, fake, y, s.loss);
    rec.l_gan = loss_g.adversarial;
    rec.l1 = loss_g.l1;
    rec.l_tv = loss_g.tv;
    rec.l_g = loss_g.total.item();
    require_finite(rec.l_gan, "L_gan", s.step);
    require_finite(rec.l1, "L1", s.step);
    require_finite(rec.l_tv, "L_tv", s.step);
    require_finite(rec.l_g, "L_g", s.step);
    g_tape.backward(loss_g.total);
  }
  const AdamHyper hyper_g{lr_g, s.train.beta_g, s.train.adam_beta2, s.train.adam_eps, s.train.grad_clip};
  adam_step<float>(std::span<NamedParam<float>>(g_params), s.adam_g, hyper_g);
  if (options.check_isolation && full_snapshot(s.discriminator) != d_before) {
    throw std::logic_error("generator update modified the discriminator");
  }
  ++s.step;
  return rec;
}

std::string log_header() { return "step,epoch,L_d,L_gan,L1,L_tv,L_g,lr_g,lr_d,wall_seconds\n"; }

std::string log_row(const StepRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%lld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", static_cast<long long>(r.step),
                r.epoch, r.l_d, r.l_gan, r.l1, r.l_tv, r.l_g, r.lr_g, r.lr_d, r.wall_seconds);
  return buf;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

TrainResult train(TrainState& s, const std::vector<ImagePair>& pairs, const TrainOptions& options) {
  s.train.validate();
  if (pairs.empty()) throw DataError("training set is empty");
  const int size = s.arch.image_size;
  for (const auto& p : pairs) {
    if (p.source.size != size || p.target.size != size) {
      throw DataError("pair " + std::to_string(p.codepoint()) + " has size " + std::to_string(p.source.size) +
                      ", the model expects " + std::to_string(size));
    }
  }
  const int jitter = s.train.jitter_size ? s.train.jitter_size : default_jitter_size(size);

  TrainResult result;
  const fs::path out = options.out_dir;
  std::ofstream log;
  if (!out.empty()) {
    ensure_dir(out);
    const fs::path log_path = out / "train_log.csv";
    const bool append = s.epoch > 0 && fs::exists(log_path);
    log.open(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write " + log_path.string());
    if (!append) log << log_header();
  }

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = pairs.size();
  const std::size_t bs = static_cast<std::size_t>(s.train.batch_size);
  while (s.epoch < s.train.epochs) {
    const double lr_g = lr_at_epoch(s.train.lr_g, s.train.decay, s.epoch);
    const double lr_d = lr_at_epoch(s.train.lr_d, s.train.decay, s.epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), s.rng);
    StepRecord last;
    for (std::size_t b = 0; b < n; b += bs) {
      std::vector<ImagePair> augmented;
      for (std::size_t i = b; i < std::min(n, b + bs); ++i) {
        augmented.push_back(s.train.augment ? augment_pair(pairs[order[i]], jitter, s.rng) : pairs[order[i]]);
      }
      std::vector<const ImagePair*> batch;
      for (const auto& p : augmented) batch.push_back(&p);
      last = train_step(s, batch, lr_g, lr_d, options.step);
      last.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (log.is_open()) {
        log << log_row(last);
        if (!log) throw IoError("failed writing train_log.csv");
      }
      if (options.on_step) options.on_step(last);
      result.log.push_back(last);
    }
    ++s.epoch;
    if (options.progress) {
      std::fprintf(stderr, "epoch %d/%d  step %lld  L_d %.4f  L_gan %.4f  L1 %.4f  L_g %.4f  (%.1fs)\n", s.epoch,
                   s.train.epochs, static_cast<long long>(s.step), last.l_d, last.l_gan, last.l1, last.l_g,
                   last.wall_seconds);
    }
    if (!out.empty() && (s.epoch % s.train.checkpoint_every == 0 || s.epoch == s.train.epochs)) {
      save_checkpoint((out / ("checkpoint_epoch_" + std::to_string(s.epoch) + ".ggc")).string(), s);
    }
    if (options.stop_after_epoch >= 0 && s.epoch >= options.stop_after_epoch) break;
    if (options.stop_when && options.stop_when(last)) break;
  }
  if (!out.empty()) {
    result.final_checkpoint = (out / "checkpoint.ggc").string();
    save_checkpoint(result.final_checkpoint, s);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

GenerateResult generate(Generator<float>& generator, const std::vector<GlyphImage>& sources,
                        const std::vector<const GlyphImage*>* truths, const GenerateConfig& config) {
  const int size = generator.arch.image_size;
  if (truths && truths->size() != sources.size()) throw ConfigError("generate: truths do not align with sources");
  GenerateResult result;
  result.image_size = size;
  result.mode = truths ? config.threshold_mode : ThresholdMode::Fixed;

  NoGradScope no_grad;
  const ForwardMode mode{config.training_batchnorm, false};
  std::vector<double> per_image;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const GlyphImage& src = sources[i];
    if (src.size != size) {
      throw DataError("source glyph " + std::to_string(src.codepoint) + " is " + std::to_string(src.size) + "x" +
                      std::to_string(src.size) + " but the model expects " + std::to_string(size) + "x" +
                      std::to_string(size) + "; re-run prepare with arch.image_size=" + std::to_string(size));
    }
    const Tensor<float> out = generator_forward(generator, glyph_batch<float>({&src}), mode);
    GeneratedGlyph g;
    g.codepoint = src.codepoint;
    g.probabilities.assign(out.data().begin(), out.data().end());
    if (truths) {
      const GlyphImage& truth = *(*truths)[i];
      if (truth.size != size) throw DataError("truth glyph " + std::to_string(truth.codepoint) + " has the wrong size");
      g.truth_valid = count_valid(truth);
      if (g.truth_valid > 0) {
        g.threshold = per_image_threshold(std::vector<double>(g.probabilities.begin(), g.probabilities.end()),
                                          g.truth_valid);
        per_image.push_back(g.threshold->threshold);
      }
    }
    result.glyphs.push_back(std::move(g));
  }
  if (!per_image.empty()) result.global_threshold = global_threshold(per_image);

  result.applied_threshold = config.threshold;
  if (result.mode == ThresholdMode::Global && result.global_threshold) result.applied_threshold = *result.global_threshold;
  for (auto& g : result.glyphs) {
    double thr = result.applied_threshold;
    if (result.mode == ThresholdMode::PerImage && g.threshold) thr = g.threshold->threshold;
    g.binary.size = size;
    g.binary.codepoint = g.codepoint;
    g.binary.font = FontId::Target;
    g.binary.pixels.resize(g.probabilities.size());
    // Strict comparison, the same rule apply_threshold uses; thresholds at the
    // extremes are legitimate here (a glyph that is ink everywhere).
    for (std::size_t k = 0; k < g.probabilities.size(); ++k) g.binary.pixels[k] = g.probabilities[k] > thr ? 1 : 0;
    g.binary.empty = count_valid(g.binary) == 0;
  }
  return result;
}

std::string thresholds_csv(const GenerateResult& result) {
  std::ostringstream out;
  out << "codepoint,threshold,count_above,n_valid,deviation\n";
  char buf[64];
  for (const auto& g : result.glyphs) {
    if (!g.threshold) continue;
    std::snprintf(buf, sizeof buf, "%.17g", g.threshold->threshold);
    out << g.codepoint << "," << buf << "," << g.threshold->count_above << "," << g.truth_valid << ","
        << g.threshold->deviation << "\n";
  }
  if (result.global_threshold) {
    std::snprintf(buf, sizeof buf, "%.17g", *result.global_threshold);
    out << "# global_threshold=" << buf << "\n";
  }
  return out.str();
}

void write_generated(const GenerateResult& result, const std::string& out_dir) {
  const fs::path out = out_dir;
  ensure_dir(out / "generated");
  ensure_dir(out / "probabilities");
  for (const auto& g : result.glyphs) {
    const std::string stem = std::to_string(g.codepoint);
    save_glyph((out / "generated" / (stem + ".png")).string(), g.binary);
    GrayImage vis(result.image_size, result.image_size);
    for (std::size_t k = 0; k < g.probabilities.size(); ++k) vis.pixels[k] = 1.0f - g.probabilities[k];
    write_png((out / "probabilities" / (stem + ".png")).string(), vis);
    // Raw little-endian float32 maps keep the full precision.
    std::ofstream raw(out / "probabilities" / (stem + ".f32"), std::ios::binary);
    for (float p : g.probabilities) {
      std::uint32_t bits;
      std::memcpy(&bits, &p, 4);
      const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      raw.write(b, 4);
    }
    if (!raw) throw IoError("failed writing probability map for " + stem);
  }
  std::ofstream thr(out / "thresholds.csv", std::ios::binary);
  thr << thresholds_csv(result);
  if (!thr) throw IoError("failed writing thresholds.csv");
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepRow> sweep(const std::vector<ImagePair>& pairs, const DatasetSplit& split, const RunConfig& config,
                            const std::string& out_dir, bool progress) {
  config.validate();
  std::map<std::uint32_t, const ImagePair*> by_cp;
  for (const auto& p : pairs) by_cp[p.codepoint()] = &p;
  auto lookup = [&](std::uint32_t cp) {
    auto it = by_cp.find(cp);
    if (it == by_cp.end()) throw DataError("split names codepoint " + std::to_string(cp) + " which has no pair");
    return it->second;
  };
  if (split.train.empty()) throw DataError("split has no training sets");
  if (split.test.empty()) throw DataError("split has no test set");

  std::vector<GlyphImage> test_sources;
  std::vector<const GlyphImage*> test_truths;
  for (auto cp : split.test) {
    test_sources.push_back(lookup(cp)->source);
    test_truths.push_back(&lookup(cp)->target);
  }

  const fs::path out = out_dir;
  ensure_dir(out);
  std::vector<SweepRow> rows;
  for (const auto& [size, cps] : split.train) {
    std::vector<ImagePair> train_pairs;
    for (auto cp : cps) train_pairs.push_back(*lookup(cp));
    const fs::path dir = out / ("size_" + std::to_string(size));
    if (progress) std::fprintf(stderr, "sweep: training on %d pairs\n", size);
    TrainState state = init_train_state(config.arch, config.train, config.loss);
    TrainOptions topts;
    topts.out_dir = dir.string();
    topts.progress = progress;
    train(state, train_pairs, topts);

    GenerateConfig gcfg = config.generate;
    gcfg.threshold_mode = ThresholdMode::Global;
    const GenerateResult gen = generate(state.generator, test_sources, &test_truths, gcfg);
    write_generated(gen, dir.string());

    std::vector<std::pair<GlyphImage, GlyphImage>> eval;
    for (std::size_t i = 0; i < gen.glyphs.size(); ++i) eval.emplace_back(gen.glyphs[i].binary, *test_truths[i]);
    const MetricsReport report = evaluate_pairs(eval, config.metrics);
    {
      std::ofstream csv(dir / "metrics.csv", std::ios::binary);
      csv << report_csv(report);
      if (!csv) throw IoError("failed writing metrics for size " + std::to_string(size));
    }
    SweepRow row;
    row.size = size;
    row.evaluated = static_cast<int>(report.rows.size());
    row.mean_cr = report.mean_cr;
    row.mean_ssim = report.mean_ssim;
    row.high = report.high;
    row.medium = report.medium;
    row.low = report.low;
    row.global_threshold = gen.applied_threshold;
    rows.push_back(row);
  }
  std::ofstream csv(out / "sweep.csv", std::ios::binary);
  csv << sweep_csv(rows);
  if (!csv) throw IoError("failed writing sweep.csv");
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "size,evaluated,mean_cr,mean_ssim,high,medium,low,global_threshold\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%d,%d,%d,%.17g\n", r.size, r.evaluated, r.mean_cr, r.mean_ssim,
                  r.high, r.medium, r.low, r.global_threshold);
    out << buf;
  }
  return out.str();
}

}  // namespace glyphgan
