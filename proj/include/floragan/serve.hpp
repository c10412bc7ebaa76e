#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "floragan/image_io.hpp"
#include "floragan/training.hpp"

namespace floragan {

class RegistryError : public Error {
 public:
  using Error::Error;
};

struct OutputSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const OutputSize&, const OutputSize&) = default;
};

/// Shorter side becomes `resolution`, the longer one scales with it (rounded half away from zero).
OutputSize target_size(long in_w, long in_h, int resolution);

enum class ModelChoice { type_I, type_II };

std::string_view to_string(ModelChoice m);
ModelChoice parse_model_choice(std::string_view s);

/// 256 or 512; anything else raises ValidationError on field "resolution".
void validate_resolution(int resolution);

struct TransferRequest {
  Bytes image;
  ModelChoice model = ModelChoice::type_I;
  int resolution = 256;
};

struct RegisteredModel {
  TrainConfig config;
  std::uint64_t fingerprint = 0;
  int epoch = 0;
  // Eval mode; its forward pass only reads the network, so requests may share it.
  std::shared_ptr<Network<float>> generator;
};

/// Generators keyed by model choice. Filled at startup, read-only afterwards.
class ModelRegistry {
 public:
  /// Loads DIR/type_I/latest.ckpt and DIR/type_II/latest.ckpt where present.
  /// Throws if neither exists or a checkpoint fails its checks.
  static ModelRegistry load(const std::string& checkpoint_dir);

  /// The checkpoint's lesion filter must match `choice`.
  void add(ModelChoice choice, const ModelCheckpoint& ckpt);

  bool contains(ModelChoice choice) const { return models_.count(choice) != 0; }
  const RegisteredModel& at(ModelChoice choice) const;
  std::vector<ModelChoice> choices() const;

 private:
  std::map<ModelChoice, std::shared_ptr<RegisteredModel>> models_;
};

/// Decode, run G at resolution x resolution, denormalize, resize to target_size, encode PNG.
Bytes transfer_image(const TransferRequest& req, const ModelRegistry& registry);

/// As above, returning the pre-encoding [0,1] image.
ImageTensor transfer_pixels(const TransferRequest& req, const ModelRegistry& registry);

struct ServeOptions {
  std::optional<std::string> static_dir;  // mounted at "/"
  int max_concurrent = 1;                 // inferences in flight
};

/// HTTP front end: POST /api/transfer, GET /api/models, GET /healthz.
class TransferServer {
 public:
  TransferServer(const ModelRegistry& registry, ServeOptions options = {});
  ~TransferServer();
  TransferServer(const TransferServer&) = delete;
  TransferServer& operator=(const TransferServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "HOST:PORT".
std::pair<std::string, int> parse_bind_address(std::string_view s);

}  // namespace floragan
