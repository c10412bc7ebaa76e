#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "floragan/training.hpp"

namespace floragan {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'L', 'G', 'N', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json config_json(const TrainConfig& c, bool with_run_control) {
  json j = {
      {"variant", std::string(to_string(c.variant))},
      {"lesion_filter", std::string(to_string(c.lesion_filter))},
      {"epochs", c.epochs},
      {"decay_start", c.decay_start},
      {"lr0", c.lr0},
      {"batch_size", c.batch_size},
      {"lambda_cycle", c.weights.lambda_cycle},
      {"lambda_identity", c.weights.lambda_identity},
      {"seed", c.seed},
      {"working_size", c.working_size},
      {"history_buffer_size", c.history_buffer_size},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"augmentation", std::string(to_string(c.augmentation))},
      {"leaky_slope", c.network.leaky_slope},
      {"instance_affine", c.network.instance_affine},
      {"power_iterations", c.network.power_iterations},
      {"init_stddev", c.network.init_stddev},
  };
  if (with_run_control) j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) j.at(key).get_to(out);
  };
  if (j.contains("variant")) c.variant = parse_generator_variant(j.at("variant").get<std::string>());
  if (j.contains("lesion_filter")) c.lesion_filter = parse_lesion_type(j.at("lesion_filter").get<std::string>());
  get("epochs", c.epochs);
  get("decay_start", c.decay_start);
  get("lr0", c.lr0);
  get("batch_size", c.batch_size);
  get("lambda_cycle", c.weights.lambda_cycle);
  get("lambda_identity", c.weights.lambda_identity);
  get("seed", c.seed);
  get("working_size", c.working_size);
  get("history_buffer_size", c.history_buffer_size);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  if (j.contains("augmentation")) c.augmentation = parse_augmentation(j.at("augmentation").get<std::string>());
  get("leaky_slope", c.network.leaky_slope);
  get("instance_affine", c.network.instance_affine);
  get("power_iterations", c.network.power_iterations);
  get("init_stddev", c.network.init_stddev);
  get("checkpoint_every", c.checkpoint_every);
  return c;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg, true).dump(2); }

TrainConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw DecodeError(std::string("bad training config: ") + e.what());
  }
}

std::uint64_t config_fingerprint(const TrainConfig& cfg) {
  std::string canon = config_json(cfg, false).dump();
  canon += '\n';
  canon += format_network(generator_spec(cfg.variant));
  canon += format_network(discriminator_spec(paired_discriminator(cfg.variant)));
  return fnv1a(canon);
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  json header;
  header["config"] = config_json(ckpt.config, true);
  header["fingerprint"] = hex(ckpt.fingerprint);
  header["epoch"] = ckpt.epoch;
  header["best_cycle_loss"] = std::isfinite(ckpt.best_cycle_loss) ? json(ckpt.best_cycle_loss) : json(nullptr);
  header["counters"] = ckpt.counters;
  header["generator"] = format_network(generator_spec(ckpt.config.variant));
  header["discriminator"] = format_network(discriminator_spec(paired_discriminator(ckpt.config.variant)));
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const Shape s = t.shape();
    index.push_back({{"name", name}, {"shape", {s.channels, s.height, s.width}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size());
  }
  header["tensors"] = std::move(index);
  header["float_count"] = offset;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path);
    const std::uint32_t version = ModelCheckpoint::kVersion;
    const std::uint64_t length = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      // Tensor storage is contiguous row-major.
      out.write(reinterpret_cast<const char*>(t.matrix().data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw Error("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move checkpoint into place at " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path, const std::optional<TrainConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto truncated = [&] { return DecodeError("checkpoint " + path + " is truncated"); };

  constexpr std::size_t prefix = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < sizeof kMagic) throw truncated();
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw DecodeError(path + " is not a checkpoint file");
  if (bytes.size() < prefix) throw truncated();
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  std::memcpy(&length, bytes.data() + sizeof kMagic + sizeof version, sizeof length);
  if (version != ModelCheckpoint::kVersion)
    throw DecodeError("checkpoint " + path + " has format version " + std::to_string(version) + ", expected " +
                      std::to_string(ModelCheckpoint::kVersion));
  if (bytes.size() - prefix < length) throw truncated();

  json header;
  try {
    header = json::parse(bytes.begin() + prefix, bytes.begin() + prefix + static_cast<std::ptrdiff_t>(length));
  } catch (const json::exception& e) {
    throw DecodeError("checkpoint " + path + " has a corrupt header: " + e.what());
  }

  ModelCheckpoint ckpt;
  try {
    ckpt.config = config_from(header.at("config"));
    ckpt.fingerprint = std::stoull(header.at("fingerprint").get<std::string>(), nullptr, 16);
    ckpt.epoch = header.at("epoch").get<int>();
    const auto& best = header.at("best_cycle_loss");
    ckpt.best_cycle_loss = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    header.at("counters").get_to(ckpt.counters);

    const std::uint64_t floats = header.at("float_count").get<std::uint64_t>();
    const std::size_t data_start = prefix + length;
    if ((bytes.size() - data_start) / sizeof(float) < floats) throw truncated();
    const char* base = bytes.data() + data_start;
    for (const auto& e : header.at("tensors")) {
      const auto shape = e.at("shape").get<std::vector<int>>();
      const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
      if (shape.size() != 3) throw DecodeError("checkpoint " + path + ": bad tensor shape");
      Tensor<float> t(shape[0], shape[1], shape[2]);
      if (offset + static_cast<std::uint64_t>(t.size()) > floats) throw truncated();
      std::memcpy(t.matrix().data(), base + offset * sizeof(float), t.size() * sizeof(float));
      ckpt.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw DecodeError("checkpoint " + path + " has a corrupt header: " + e.what());
  } catch (const std::invalid_argument&) {
    throw DecodeError("checkpoint " + path + " has a corrupt fingerprint");
  }

  const std::uint64_t recomputed = config_fingerprint(ckpt.config);
  if (recomputed != ckpt.fingerprint)
    throw FingerprintError("checkpoint " + path + ": stored fingerprint " + hex(ckpt.fingerprint) +
                           " does not match its config (" + hex(recomputed) + ")");
  if (expected) {
    const std::uint64_t want = config_fingerprint(*expected);
    if (want != ckpt.fingerprint)
      throw FingerprintError("checkpoint " + path + " was trained with a different config (fingerprint " +
                             hex(ckpt.fingerprint) + ", expected " + hex(want) + ")");
  }
  return ckpt;
}

}  // namespace floragan
