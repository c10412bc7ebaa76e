#include <atomic>
#include <charconv>
#include <filesystem>
#include <mutex>
#include <condition_variable>
#include <sstream>

// Eigen first: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include "floragan/preprocess.hpp"
#include "floragan/serve.hpp"

#include <httplib.h>
#include <json.hpp>

namespace floragan {

namespace fs = std::filesystem;
using nlohmann::json;

OutputSize target_size(long in_w, long in_h, int resolution) {
  if (in_w < 1 || in_h < 1) throw DomainError("target_size: input sides must be >= 1");
  if (resolution < 1) throw DomainError("target_size: resolution must be >= 1");
  const long shorter = std::min(in_w, in_h), longer = std::max(in_w, in_h);
  // round(longer * r / shorter), halves away from zero, in exact integer arithmetic
  const long scaled = static_cast<long>((2 * static_cast<long long>(longer) * resolution + shorter) / (2 * shorter));
  if (in_w >= in_h) return {static_cast<int>(scaled), resolution};
  return {resolution, static_cast<int>(scaled)};
}

std::string_view to_string(ModelChoice m) { return m == ModelChoice::type_I ? "type_I" : "type_II"; }

ModelChoice parse_model_choice(std::string_view s) {
  if (s == "type_I" || s == "I") return ModelChoice::type_I;
  if (s == "type_II" || s == "II") return ModelChoice::type_II;
  throw ValidationError("model", "unknown model '" + std::string(s) + "', expected type_I or type_II");
}

void validate_resolution(int resolution) {
  if (resolution != 256 && resolution != 512)
    throw ValidationError("resolution", "resolution must be 256 or 512, got " + std::to_string(resolution));
}

ModelRegistry ModelRegistry::load(const std::string& checkpoint_dir) {
  ModelRegistry reg;
  for (ModelChoice c : {ModelChoice::type_I, ModelChoice::type_II}) {
    const fs::path path = fs::path(checkpoint_dir) / std::string(to_string(c)) / "latest.ckpt";
    if (fs::exists(path)) reg.add(c, load_checkpoint(path.string()));
  }
  if (reg.models_.empty())
    throw RegistryError("no checkpoints under " + checkpoint_dir + " (expected type_I/latest.ckpt or type_II/latest.ckpt)");
  return reg;
}

void ModelRegistry::add(ModelChoice choice, const ModelCheckpoint& ckpt) {
  const LesionType want = choice == ModelChoice::type_I ? LesionType::I : LesionType::II;
  if (ckpt.config.lesion_filter != want)
    throw RegistryError("checkpoint for " + std::string(to_string(choice)) + " was trained on type " +
                        std::string(to_string(ckpt.config.lesion_filter)) + " lesions");
  auto m = std::make_shared<RegisteredModel>();
  m->config = ckpt.config;
  m->fingerprint = ckpt.fingerprint;
  m->epoch = ckpt.epoch;
  m->generator = std::make_shared<Network<float>>(load_generator(ckpt));
  models_[choice] = std::move(m);
}

const RegisteredModel& ModelRegistry::at(ModelChoice choice) const {
  auto it = models_.find(choice);
  if (it == models_.end()) throw RegistryError("model " + std::string(to_string(choice)) + " is not loaded");
  return *it->second;
}

std::vector<ModelChoice> ModelRegistry::choices() const {
  std::vector<ModelChoice> out;
  for (const auto& [c, m] : models_) out.push_back(c);
  return out;
}

ImageTensor transfer_pixels(const TransferRequest& req, const ModelRegistry& registry) {
  validate_resolution(req.resolution);
  const RegisteredModel& model = registry.at(req.model);
  const ImageTensor raw = decode_image(req.image);
  const Image<float> x = preprocess(raw, PreprocessConfig{req.resolution, Augmentation::none});
  Image<float> y;
  {
    autograd::NoGradGuard guard;
    y = {model.generator->forward(Var<float>(x.pixels)).value(), ValueRange::normalized};
  }
  ImageTensor out = denormalize(y);
  out.pixels.matrix() = out.pixels.matrix().cwiseMax(0.0f).cwiseMin(1.0f);
  const OutputSize size = target_size(raw.shape().width, raw.shape().height, req.resolution);
  out.pixels = resize_bilinear(out.pixels, size.height, size.width);
  return out;
}

Bytes transfer_image(const TransferRequest& req, const ModelRegistry& registry) {
  return encode_png(transfer_pixels(req, registry));
}

std::pair<std::string, int> parse_bind_address(std::string_view s) {
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw ValidationError("bind", "expected HOST:PORT");
  int port = -1;
  const auto tail = s.substr(colon + 1);
  const auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), port);
  if (ec != std::errc() || p != tail.data() + tail.size() || port < 0 || port > 65535)
    throw ValidationError("bind", "bad port in '" + std::string(s) + "'");
  return {std::string(s.substr(0, colon)), port};
}

namespace {

class Limiter {
 public:
  explicit Limiter(int n) : free_(std::max(1, n)) {}
  void acquire() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(m_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  int free_;
};

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view field,
                std::string_view message) {
  json err = {{"code", code}, {"message", message}};
  err["field"] = field.empty() ? json(nullptr) : json(field);
  res.status = status;
  res.set_content(json{{"error", err}}.dump(), "application/json");
}

std::optional<std::string> form_value(const httplib::Request& req, const std::string& key) {
  if (req.has_file(key)) return req.get_file_value(key).content;
  if (req.has_param(key)) return req.get_param_value(key);
  return std::nullopt;
}

}  // namespace

struct TransferServer::Impl {
  const ModelRegistry& registry;
  ServeOptions options;
  httplib::Server server;
  Limiter limiter;

  Impl(const ModelRegistry& r, ServeOptions o) : registry(r), options(std::move(o)), limiter(options.max_concurrent) {}

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

    server.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
      json models = json::array();
      for (ModelChoice c : registry.choices()) {
        const RegisteredModel& m = registry.at(c);
        char fp[17];
        std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(m.fingerprint));
        models.push_back({{"id", std::string(to_string(c))},
                          {"variant", std::string(to_string(m.config.variant))},
                          {"lesion_type", std::string(to_string(m.config.lesion_filter))},
                          {"epoch", m.epoch},
                          {"fingerprint", fp}});
      }
      res.set_content(json{{"models", models}, {"resolutions", {256, 512}}}.dump(), "application/json");
    });

    server.Post("/api/transfer", [this](const httplib::Request& req, httplib::Response& res) {
      TransferRequest tr;
      const auto image = form_value(req, "image");
      if (!image) return send_error(res, 400, "missing_field", "image", "multipart field 'image' is required");
      const auto model = form_value(req, "model");
      if (!model) return send_error(res, 400, "missing_field", "model", "multipart field 'model' is required");
      const auto resolution = form_value(req, "resolution");
      if (!resolution)
        return send_error(res, 400, "missing_field", "resolution", "multipart field 'resolution' is required");
      try {
        tr.model = parse_model_choice(*model);
        int r = 0;
        const auto [p, ec] = std::from_chars(resolution->data(), resolution->data() + resolution->size(), r);
        if (ec != std::errc() || p != resolution->data() + resolution->size())
          throw ValidationError("resolution", "resolution must be 256 or 512, got '" + *resolution + "'");
        validate_resolution(r);
        tr.resolution = r;
      } catch (const ValidationError& e) {
        return send_error(res, 422, "validation_error", e.field(), e.what());
      }
      if (!registry.contains(tr.model))
        return send_error(res, 404, "model_unavailable", "model", std::string(to_string(tr.model)) + " is not loaded");
      tr.image.assign(image->begin(), image->end());
      limiter.acquire();
      try {
        Bytes png = transfer_image(tr, registry);
        limiter.release();
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      } catch (const DecodeError& e) {
        limiter.release();
        send_error(res, 400, "invalid_image", "image", e.what());
      } catch (const std::exception& e) {
        limiter.release();
        send_error(res, 500, "internal_error", "", e.what());
      }
    });

    if (options.static_dir && !server.set_mount_point("/", *options.static_dir))
      throw Error("static directory " + *options.static_dir + " does not exist");
  }
};

TransferServer::TransferServer(const ModelRegistry& registry, ServeOptions options)
    : impl_(std::make_unique<Impl>(registry, std::move(options))) {
  impl_->routes();
}

TransferServer::~TransferServer() { stop(); }

int TransferServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void TransferServer::run() { impl_->server.listen_after_bind(); }

void TransferServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace floragan
