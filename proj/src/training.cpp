#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "floragan/image_io.hpp"
#include "floragan/training.hpp"

namespace floragan {

namespace fs = std::filesystem;

namespace {

// Every random stream is a pure function of (seed, purpose, epoch), so a
// resumed run draws exactly what an uninterrupted one would.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t purpose, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose,
                    static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

enum : std::uint32_t { kInit = 0x1417, kAugment = 1, kPool = 2 };

Tensor<float> vector_tensor(const Vector<float>& v) {
  Tensor<float> t(static_cast<int>(v.size()), 1, 1);
  t.matrix().col(0) = v;
  return t;
}

const Tensor<float>& find_tensor(const ModelCheckpoint& ckpt, const std::string& name) {
  auto it = ckpt.tensors.find(name);
  if (it == ckpt.tensors.end()) throw DecodeError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

void copy_into(Tensor<float>& dst, const Tensor<float>& src, const std::string& name) {
  if (dst.shape() != src.shape())
    throw ShapeError("checkpoint tensor '" + name + "' has shape " + to_string(src.shape()) + ", model expects " +
                     to_string(dst.shape()));
  dst.matrix() = src.matrix();
}

void export_network(Network<float>& net, const std::string& prefix, ModelCheckpoint& ckpt) {
  for (auto& p : net.parameters()) ckpt.tensors.emplace(prefix + p.name, p.var.value());
  for (auto& s : net.norm_states()) {
    ckpt.tensors.emplace(prefix + s.name + ".u", vector_tensor(s.state->u));
    ckpt.tensors.emplace(prefix + s.name + ".v", vector_tensor(s.state->v));
  }
}

void import_network(Network<float>& net, const std::string& prefix, const ModelCheckpoint& ckpt) {
  for (auto& p : net.parameters()) copy_into(p.var.mutable_value(), find_tensor(ckpt, prefix + p.name), prefix + p.name);
  for (auto& s : net.norm_states()) {
    s.state->u = find_tensor(ckpt, prefix + s.name + ".u").matrix().col(0);
    s.state->v = find_tensor(ckpt, prefix + s.name + ".v").matrix().col(0);
  }
}

void export_adam(Adam& opt, const std::string& prefix, ModelCheckpoint& ckpt) {
  auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace(prefix + ".m." + params[i].name, opt.first_moments()[i]);
    ckpt.tensors.emplace(prefix + ".v." + params[i].name, opt.second_moments()[i]);
  }
  ckpt.counters[prefix + ".steps"] = opt.steps();
}

void import_adam(Adam& opt, const std::string& prefix, const ModelCheckpoint& ckpt) {
  auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string m = prefix + ".m." + params[i].name, v = prefix + ".v." + params[i].name;
    copy_into(opt.first_moments()[i], find_tensor(ckpt, m), m);
    copy_into(opt.second_moments()[i], find_tensor(ckpt, v), v);
  }
  auto it = ckpt.counters.find(prefix + ".steps");
  opt.set_steps(it == ckpt.counters.end() ? 0 : it->second);
}

void export_pool(const HistoryBuffer& pool, const std::string& prefix, ModelCheckpoint& ckpt) {
  const auto& images = pool.images();
  for (std::size_t i = 0; i < images.size(); ++i) ckpt.tensors.emplace(prefix + "." + std::to_string(i), images[i]);
  ckpt.counters[prefix + ".size"] = static_cast<std::int64_t>(images.size());
}

void import_pool(HistoryBuffer& pool, const std::string& prefix, const ModelCheckpoint& ckpt) {
  auto it = ckpt.counters.find(prefix + ".size");
  std::vector<Tensor<float>> images;
  const std::int64_t n = it == ckpt.counters.end() ? 0 : it->second;
  for (std::int64_t i = 0; i < n; ++i) images.push_back(find_tensor(ckpt, prefix + "." + std::to_string(i)));
  pool.restore(std::move(images));
}

std::vector<NamedParameter<float>> prefixed(Network<float>& net, const std::string& prefix) {
  auto params = net.parameters();
  for (auto& p : params) p.name = prefix + p.name;
  return params;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw ValidationError("epochs", "must be >= 0");
  if (c.decay_start < 0 || c.decay_start > c.epochs)
    throw ValidationError("decay_start", "must lie in [0, epochs]");
  if (!(c.lr0 > 0) || !std::isfinite(c.lr0)) throw ValidationError("lr0", "must be positive and finite");
  if (c.batch_size < 1) throw ValidationError("batch_size", "must be >= 1");
  try {
    validate(c.weights);
  } catch (const DomainError& e) {
    throw ValidationError("weights", e.what());
  }
  if (c.history_buffer_size < 0) throw ValidationError("history_buffer_size", "must be >= 0");
  if (!(c.beta1 >= 0 && c.beta1 < 1)) throw ValidationError("beta1", "must lie in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) throw ValidationError("beta2", "must lie in [0, 1)");
  if (c.lesion_filter == LesionType::not_applicable) throw ValidationError("lesion_filter", "must be I or II");
  if (c.network.power_iterations < 1) throw ValidationError("power_iterations", "must be >= 1");
  if (!(c.network.init_stddev > 0)) throw ValidationError("init_stddev", "must be positive");
  if (!(c.network.leaky_slope >= 0)) throw ValidationError("leaky_slope", "must be >= 0");
  if (c.checkpoint_every < 1) throw ValidationError("checkpoint_every", "must be >= 1");
  if (c.working_size < 4 || c.working_size % 4 != 0)
    throw ValidationError("working_size", "must be a positive multiple of 4");
  try {
    infer_shapes(discriminator_spec(paired_discriminator(c.variant)), {3, c.working_size, c.working_size});
  } catch (const ShapeError&) {
    throw ValidationError("working_size", std::to_string(c.working_size) +
                                              " is too small for the discriminator to produce a patch map");
  }
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs)
    throw DomainError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + "]");
  if (epoch < cfg.decay_start) return cfg.lr0;
  if (cfg.epochs == cfg.decay_start) return 0.0;
  return cfg.lr0 * static_cast<double>(cfg.epochs - epoch) / static_cast<double>(cfg.epochs - cfg.decay_start);
}

void HistoryBuffer::restore(std::vector<Tensor<float>> images) {
  if (images.size() > capacity_) throw DomainError("history buffer holds more images than its capacity");
  images_ = std::move(images);
}

Adam::Adam(std::vector<NamedParameter<float>> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step() {
  ++step_;
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  const float step_size = static_cast<float>(lr_ / bc1);
  const float root_bc2 = static_cast<float>(std::sqrt(bc2));
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<float>& p = params_[i].var;
    if (!p.has_grad()) continue;
    auto g = p.grad().array();
    auto m = m_[i].matrix().array();
    auto v = v_[i].matrix().array();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.square();
    p.mutable_value().matrix().array() -= step_size * m / (v.sqrt() / root_bc2 + eps);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

CycleGan::CycleGan(const TrainConfig& cfg)
    : config_(cfg),
      g_(generator_spec(cfg.variant), cfg.network),
      f_(generator_spec(cfg.variant), cfg.network),
      dx_(discriminator_spec(paired_discriminator(cfg.variant)), cfg.network),
      dy_(discriminator_spec(paired_discriminator(cfg.variant)), cfg.network),
      pool_x_(static_cast<std::size_t>(std::max(cfg.history_buffer_size, 0))),
      pool_y_(static_cast<std::size_t>(std::max(cfg.history_buffer_size, 0))) {
  auto gp = prefixed(g_, "G.");
  auto fp = prefixed(f_, "F.");
  gp.insert(gp.end(), fp.begin(), fp.end());
  opt_g_ = Adam(std::move(gp), cfg.beta1, cfg.beta2);
  auto dxp = prefixed(dx_, "D_X.");
  auto dyp = prefixed(dy_, "D_Y.");
  dxp.insert(dxp.end(), dyp.begin(), dyp.end());
  opt_d_ = Adam(std::move(dxp), cfg.beta1, cfg.beta2);
}

void CycleGan::initialize() {
  auto rng = stream_rng(config_.seed, kInit, 0);
  g_.initialize(rng);
  f_.initialize(rng);
  dx_.initialize(rng);
  dy_.initialize(rng);
}

ModelCheckpoint CycleGan::to_checkpoint() {
  ModelCheckpoint ckpt;
  ckpt.config = config_;
  ckpt.fingerprint = config_fingerprint(config_);
  ckpt.epoch = epoch;
  ckpt.best_cycle_loss = best_cycle_loss;
  export_network(g_, "G.", ckpt);
  export_network(f_, "F.", ckpt);
  export_network(dx_, "D_X.", ckpt);
  export_network(dy_, "D_Y.", ckpt);
  export_adam(opt_g_, "opt_G", ckpt);
  export_adam(opt_d_, "opt_D", ckpt);
  export_pool(pool_x_, "pool_X", ckpt);
  export_pool(pool_y_, "pool_Y", ckpt);
  return ckpt;
}

void CycleGan::load(const ModelCheckpoint& ckpt) {
  if (ckpt.fingerprint != config_fingerprint(config_))
    throw FingerprintError("checkpoint fingerprint does not match the model config");
  import_network(g_, "G.", ckpt);
  import_network(f_, "F.", ckpt);
  import_network(dx_, "D_X.", ckpt);
  import_network(dy_, "D_Y.", ckpt);
  import_adam(opt_g_, "opt_G", ckpt);
  import_adam(opt_d_, "opt_D", ckpt);
  import_pool(pool_x_, "pool_X", ckpt);
  import_pool(pool_y_, "pool_Y", ckpt);
  epoch = ckpt.epoch;
  best_cycle_loss = ckpt.best_cycle_loss;
}

Network<float> load_generator(const ModelCheckpoint& ckpt) {
  if (ckpt.fingerprint != config_fingerprint(ckpt.config))
    throw FingerprintError("checkpoint fingerprint does not match its config");
  Network<float> g(generator_spec(ckpt.config.variant), ckpt.config.network);
  import_network(g, "G.", ckpt);
  g.set_training(false);
  g.set_requires_grad(false);
  return g;
}

namespace {

// Decoded images resized to the working size, kept while they fit the budget.
class ImageCache {
 public:
  ImageCache(int size, std::size_t budget_floats) : size_(size), budget_(budget_floats) {}

  ImageTensor get(const std::string& path) {
    if (auto it = cache_.find(path); it != cache_.end()) return it->second;
    ImageTensor raw = read_image(path);
    ImageTensor sized{resize_bilinear(raw.pixels, size_, size_), ValueRange::raw01};
    const std::size_t n = static_cast<std::size_t>(sized.pixels.size());
    if (used_ + n <= budget_) {
      used_ += n;
      cache_.emplace(path, sized);
    }
    return sized;
  }

 private:
  int size_;
  std::size_t budget_, used_ = 0;
  std::unordered_map<std::string, ImageTensor> cache_;
};

struct Terms {
  double d_x = 0, d_y = 0, adv_g = 0, adv_f = 0, cycle_x = 0, cycle_y = 0, identity_g = 0, identity_f = 0, total = 0;
};

void require_finite(double value, const char* term, long iteration) {
  if (!std::isfinite(value))
    throw TrainingError("non-finite " + std::string(term) + " loss at iteration " + std::to_string(iteration));
}

}  // namespace

ModelCheckpoint train(const TrainConfig& cfg, const DatasetManifest& manifest, const std::string& checkpoint_dir,
                      const TrainOptions& options) {
  validate(cfg);
  fs::create_directories(checkpoint_dir);
  const fs::path dir(checkpoint_dir);
  const std::string latest_path = (dir / "latest.ckpt").string();
  const std::string best_path = (dir / "best.ckpt").string();
  auto say = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  CycleGan model(cfg);
  bool resumed = false;
  if (options.resume && fs::exists(latest_path)) {
    model.load(load_checkpoint(latest_path, cfg));
    resumed = true;
    say("resumed from " + latest_path + " at epoch " + std::to_string(model.epoch));
  } else {
    model.initialize();
  }
  {
    std::ofstream out(dir / "config.json");
    out << config_to_json(cfg) << '\n';
  }
  LossLog log((dir / "losses.jsonl").string(), resumed);

  const int last_epoch = options.stop_after_epoch ? std::min(cfg.epochs, *options.stop_after_epoch) : cfg.epochs;
  UnpairedStream stream(manifest, cfg.lesion_filter, cfg.seed);
  const long per_epoch =
      static_cast<long>((stream.pairs_per_epoch() + static_cast<std::size_t>(cfg.batch_size) - 1) / cfg.batch_size);
  if (per_epoch == 0 && model.epoch < last_epoch)
    throw TrainingError("no training pairs: the manifest needs melanoma images of type " +
                        std::string(to_string(cfg.lesion_filter)) + " and flower images");

  Network<float>& G = model.G();
  Network<float>& F = model.F();
  Network<float>& DX = model.D_X();
  Network<float>& DY = model.D_Y();
  Adam& opt_g = model.generator_optimizer();
  Adam& opt_d = model.discriminator_optimizer();
  for (auto* net : {&G, &F, &DX, &DY}) net->set_training(true);

  PreprocessConfig prep{cfg.working_size, cfg.augmentation};
  ImageCache cache(cfg.working_size, std::size_t(1) << 28);
  const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
  const float lc = static_cast<float>(cfg.weights.lambda_cycle);
  const float li = static_cast<float>(cfg.weights.lambda_identity);

  for (int e = model.epoch; e < last_epoch; ++e) {
    const double lr = lr_at_epoch(e, cfg);
    opt_g.set_lr(lr);
    opt_d.set_lr(lr);
    log.record(static_cast<long>(e) * per_epoch, e, "lr", lr);

    auto augment_rng = stream_rng(cfg.seed, kAugment, e);
    auto pool_rng = stream_rng(cfg.seed, kPool, e);
    const auto pairs = stream.epoch(e);
    double epoch_cycle = 0;

    for (long it = 0; it < per_epoch; ++it) {
      const long iteration = static_cast<long>(e) * per_epoch + it + 1;
      const std::size_t begin = static_cast<std::size_t>(it) * cfg.batch_size;
      const std::size_t end = std::min(pairs.size(), begin + static_cast<std::size_t>(cfg.batch_size));

      struct Sample {
        Var<float> x, y, fake_y, fake_x;
      };
      std::vector<Sample> batch;
      for (std::size_t i = begin; i < end; ++i) {
        Sample s;
        s.x = Var<float>(preprocess(cache.get(pairs[i].first->path), prep, &augment_rng).pixels);
        s.y = Var<float>(preprocess(cache.get(pairs[i].second->path), prep, &augment_rng).pixels);
        s.fake_y = G.forward(s.x);
        s.fake_x = F.forward(s.y);
        batch.push_back(std::move(s));
      }
      Terms sum;

      // Discriminators on real images and pooled (detached) fakes.
      opt_d.zero_grad();
      for (auto& s : batch) {
        Var<float> pooled_y(model.pool_Y().push_sample(s.fake_y.value(), pool_rng));
        Var<float> pooled_x(model.pool_X().push_sample(s.fake_x.value(), pool_rng));
        Var<float> loss_dy = lsgan_discriminator_loss(DY.forward(s.y), DY.forward(pooled_y));
        Var<float> loss_dx = lsgan_discriminator_loss(DX.forward(s.x), DX.forward(pooled_x));
        require_finite(loss_dy.item(), "D_Y", iteration);
        require_finite(loss_dx.item(), "D_X", iteration);
        sum.d_y += loss_dy.item();
        sum.d_x += loss_dx.item();
        autograd::backward(scale(add(loss_dx, loss_dy), inv_batch));
      }
      opt_d.step();

      // Generators against the updated discriminators.
      DX.set_requires_grad(false);
      DY.set_requires_grad(false);
      opt_g.zero_grad();
      for (auto& s : batch) {
        Var<float> adv_g = lsgan_generator_loss(DY.forward(s.fake_y));
        Var<float> adv_f = lsgan_generator_loss(DX.forward(s.fake_x));
        Var<float> cycle_x = mean_absolute_error(F.forward(s.fake_y), s.x);
        Var<float> cycle_y = mean_absolute_error(G.forward(s.fake_x), s.y);
        Var<float> identity_g = mean_absolute_error(G.forward(s.y), s.y);
        Var<float> identity_f = mean_absolute_error(F.forward(s.x), s.x);
        Var<float> total = weighted_sum<float>({adv_g, adv_f, cycle_x, cycle_y, identity_g, identity_f},
                                               {1.0f, 1.0f, lc, lc, li, li});
        const std::pair<const char*, double> checks[] = {
            {"adv_G", adv_g.item()},          {"adv_F", adv_f.item()},
            {"cycle_X", cycle_x.item()},      {"cycle_Y", cycle_y.item()},
            {"identity_G", identity_g.item()}, {"identity_F", identity_f.item()},
            {"total_G", total.item()}};
        for (const auto& [name, value] : checks) require_finite(value, name, iteration);
        sum.adv_g += adv_g.item();
        sum.adv_f += adv_f.item();
        sum.cycle_x += cycle_x.item();
        sum.cycle_y += cycle_y.item();
        sum.identity_g += identity_g.item();
        sum.identity_f += identity_f.item();
        sum.total += total.item();
        autograd::backward(scale(total, inv_batch));
      }
      opt_g.step();
      DX.set_requires_grad(true);
      DY.set_requires_grad(true);

      const double n = static_cast<double>(batch.size());
      log.record(iteration, e, "D_X", sum.d_x / n);
      log.record(iteration, e, "D_Y", sum.d_y / n);
      log.record(iteration, e, "adv_G", sum.adv_g / n);
      log.record(iteration, e, "adv_F", sum.adv_f / n);
      log.record(iteration, e, "cycle_X", sum.cycle_x / n);
      log.record(iteration, e, "cycle_Y", sum.cycle_y / n);
      log.record(iteration, e, "identity_G", sum.identity_g / n);
      log.record(iteration, e, "identity_F", sum.identity_f / n);
      log.record(iteration, e, "total_G", sum.total / n);
      epoch_cycle += (sum.cycle_x + sum.cycle_y) / n;
    }
    log.flush();

    model.epoch = e + 1;
    epoch_cycle /= static_cast<double>(per_epoch);
    std::ostringstream msg;
    msg << "epoch " << model.epoch << "/" << cfg.epochs << " lr " << lr << " cycle " << epoch_cycle;
    say(msg.str());

    const bool cadence = model.epoch % cfg.checkpoint_every == 0 || model.epoch == last_epoch;
    if (cadence) {
      const bool improved = epoch_cycle < model.best_cycle_loss;
      if (improved) model.best_cycle_loss = epoch_cycle;
      ModelCheckpoint ckpt = model.to_checkpoint();
      save_checkpoint(ckpt, latest_path);
      if (improved) save_checkpoint(ckpt, best_path);
    }
  }

  ModelCheckpoint final_state = model.to_checkpoint();
  if (!fs::exists(latest_path) || model.epoch == 0) save_checkpoint(final_state, latest_path);
  return final_state;
}

}  // namespace floragan
