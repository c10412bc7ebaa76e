// Command-line front end: manifest, train, evaluate, transfer, serve, layers.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <iostream>

#include "floragan/dataset.hpp"
#include "floragan/eval.hpp"
#include "floragan/image_io.hpp"
#include "floragan/serve.hpp"
#include "floragan/training.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace floragan;

namespace {

TransferServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<ImageTensor> load_dir(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<ImageTensor> images;
  for (const auto& p : paths) {
    try {
      images.push_back(read_image(p));
    } catch (const DecodeError& e) {
      std::cerr << "warning: skipping " << p << ": " << e.what() << "\n";
    }
  }
  return images;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Melanoma-to-flower style transfer: data, training, evaluation and serving"};
  app.require_subcommand(1);

  // manifest
  auto* manifest_cmd = app.add_subcommand("manifest", "Scan image folders into a dataset manifest");
  std::string melanoma_dir, flower_dir, manifest_out, overrides_path;
  manifest_cmd->add_option("--melanoma", melanoma_dir, "Folder of dermoscopic melanoma images")->required();
  manifest_cmd->add_option("--flowers", flower_dir, "Folder of flower artworks")->required();
  manifest_cmd->add_option("--out", manifest_out, "Manifest file to write")->required();
  manifest_cmd->add_option("--overrides", overrides_path, "Lesion-type overrides: <file>\\t<I|II> per line");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  TrainConfig cfg;
  std::string variant = "A", lesion = "I", train_manifest, train_out, augmentation = "none";
  bool resume = false;
  train_cmd->add_option("--variant", variant, "Generator variant: A, B or C")->required();
  train_cmd->add_option("--lesion-type", lesion, "Melanoma subset: I or II")->required();
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint directory")->required();
  train_cmd->add_option("--epochs", cfg.epochs, "Total epochs")->capture_default_str();
  train_cmd->add_option("--decay-start", cfg.decay_start, "Epoch where linear lr decay begins")->capture_default_str();
  train_cmd->add_option("--lr0", cfg.lr0, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--size", cfg.working_size, "Working size (square side)")->capture_default_str();
  train_cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--history", cfg.history_buffer_size, "Image pool capacity")->capture_default_str();
  train_cmd->add_option("--lambda-cycle", cfg.weights.lambda_cycle)->capture_default_str();
  train_cmd->add_option("--lambda-identity", cfg.weights.lambda_identity)->capture_default_str();
  train_cmd->add_option("--checkpoint-every", cfg.checkpoint_every)->capture_default_str();
  train_cmd->add_option("--augment", augmentation, "none or horizontal_flip")->capture_default_str();
  train_cmd->add_flag("--resume", resume, "Continue from <out>/latest.ckpt");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Aggregate the questionnaire and compute metrics");
  std::string questionnaire, generated_dir, reference_dir, extractor = "standard", report_out;
  eval_cmd->add_option("--questionnaire", questionnaire, "CSV: image_id,likes_A,likes_B,ssim_A,ssim_B")->required();
  eval_cmd->add_option("--generated", generated_dir, "Folder with one subfolder of converted images per network");
  eval_cmd->add_option("--reference", reference_dir, "Folder of reference flower images");
  eval_cmd->add_option("--extractor", extractor, "FID features: standard or toy")
      ->check(CLI::IsMember({"standard", "toy"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", report_out, "Also write the table here and JSON to <out>.json");

  // transfer
  auto* transfer_cmd = app.add_subcommand("transfer", "Convert one image");
  std::string in_path, out_path, model = "type_I", ckpt_dir;
  int resolution = 256;
  transfer_cmd->add_option("--in", in_path, "Input PNG or JPEG")->required();
  transfer_cmd->add_option("--out", out_path, "Output PNG")->required();
  transfer_cmd->add_option("--model", model, "type_I or type_II")->required();
  transfer_cmd->add_option("--resolution", resolution, "256 or 512")->required();
  transfer_cmd->add_option("--checkpoint-dir", ckpt_dir, "Holds type_I/ and type_II/ checkpoints")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string serve_dir, bind = "127.0.0.1:8080", static_dir;
  int max_concurrent = 1;
  serve_cmd->add_option("--checkpoint-dir", serve_dir, "Holds type_I/ and type_II/ checkpoints")->required();
  serve_cmd->add_option("--bind", bind, "HOST:PORT")->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Built studio UI to host under /");
  serve_cmd->add_option("--max-concurrent", max_concurrent, "Inferences in flight")->capture_default_str();

  // layers
  auto* layers_cmd = app.add_subcommand("layers", "Print a layer table");
  std::string layers_variant = "A", layers_out;
  bool discriminator = false;
  layers_cmd->add_option("--variant", layers_variant, "A, B or C")->capture_default_str();
  layers_cmd->add_flag("--discriminator", discriminator, "Print the paired discriminator instead");
  layers_cmd->add_option("--out", layers_out, "Write to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*manifest_cmd) {
      std::map<std::string, LesionType> overrides;
      if (!overrides_path.empty()) overrides = read_overrides(overrides_path);
      auto mel = build_manifest(melanoma_dir, DomainTag::melanoma_X, overrides);
      auto flo = build_manifest(flower_dir, DomainTag::flower_Y);
      for (const auto& s : mel.skipped) std::cerr << "warning: could not decode " << s << "\n";
      for (const auto& s : flo.skipped) std::cerr << "warning: could not decode " << s << "\n";
      const DatasetManifest m = merge(mel.manifest, flo.manifest);
      write_manifest(m, manifest_out);
      std::cout << "melanoma type I: " << m.select(DomainTag::melanoma_X, LesionType::I).size()
                << ", type II: " << m.select(DomainTag::melanoma_X, LesionType::II).size()
                << ", flowers: " << m.select(DomainTag::flower_Y).size() << "\n";
    } else if (*train_cmd) {
      cfg.variant = parse_generator_variant(variant);
      cfg.lesion_filter = parse_lesion_type(lesion);
      cfg.augmentation = parse_augmentation(augmentation);
      TrainOptions opts;
      opts.resume = resume;
      opts.progress = [](const std::string& msg) { std::cout << msg << std::endl; };
      const ModelCheckpoint ckpt = train(cfg, read_manifest(train_manifest), train_out, opts);
      std::cout << "finished at epoch " << ckpt.epoch << ", checkpoints in " << train_out << "\n";
    } else if (*eval_cmd) {
      EvalReport report = report_from_questionnaire(read_questionnaire(questionnaire));
      if (!generated_dir.empty() || !reference_dir.empty()) {
        if (generated_dir.empty() || reference_dir.empty())
          throw ValidationError("generated", "--generated and --reference go together");
        if (extractor == "standard")
          throw Error(
              "the standard Inception-v3 extractor needs pretrained weights that are not bundled; "
              "use --extractor toy");
        const FeatureExtractor ex = toy_extractor();
        const FeatureStats ref = feature_stats(load_dir(reference_dir), ex);
        for (auto& n : report.networks) {
          const fs::path sub = fs::path(generated_dir) / n.network;
          if (fs::is_directory(sub)) n.fid = frechet_distance(feature_stats(load_dir(sub.string()), ex), ref);
        }
      }
      std::cout << format_report_table(report);
      if (!report_out.empty()) write_report(report, report_out);
    } else if (*transfer_cmd) {
      TransferRequest req;
      req.image = read_file(in_path);
      req.model = parse_model_choice(model);
      validate_resolution(resolution);
      req.resolution = resolution;
      const ModelRegistry registry = ModelRegistry::load(ckpt_dir);
      const Bytes png = transfer_image(req, registry);
      write_file(out_path, png);
      const auto size = probe_image_size(png);
      std::cout << "wrote " << out_path << " (" << size.width << "x" << size.height << ")\n";
    } else if (*serve_cmd) {
      const auto [host, port] = parse_bind_address(bind);
      const ModelRegistry registry = ModelRegistry::load(serve_dir);
      ServeOptions opts;
      if (!static_dir.empty()) opts.static_dir = static_dir;
      opts.max_concurrent = max_concurrent;
      TransferServer server(registry, opts);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      server.run();
      g_server = nullptr;
    } else if (*layers_cmd) {
      const GeneratorVariant v = parse_generator_variant(layers_variant);
      const NetworkSpec spec = discriminator ? discriminator_spec(paired_discriminator(v)) : generator_spec(v);
      if (layers_out.empty())
        std::cout << format_network(spec);
      else
        write_network_file(spec, layers_out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
