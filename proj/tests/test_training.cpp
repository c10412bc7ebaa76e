#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "floragan/training.hpp"
#include "test_support.hpp"

using namespace floragan;
namespace fs = std::filesystem;
using floragan::testing::random_tensor;
using floragan::testing::scratch_dir;
using floragan::testing::synthetic_corpus;

namespace {

TrainConfig tiny_config(GeneratorVariant v = GeneratorVariant::A_subpixel, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.working_size = 32;
  cfg.epochs = 2;
  cfg.decay_start = 1;
  cfg.seed = seed;
  cfg.history_buffer_size = 4;
  cfg.checkpoint_every = 1;
  return cfg;
}

std::vector<LossRecord> named(const std::vector<LossRecord>& log, const std::string& name) {
  std::vector<LossRecord> out;
  for (const auto& r : log)
    if (r.name == name) out.push_back(r);
  return out;
}

const DatasetManifest& corpus() {
  static const DatasetManifest m = synthetic_corpus(scratch_dir("train_corpus"), 4, 4, 40, 5);
  return m;
}

}  // namespace

TEST(LearningRate, Schedule) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_at_epoch(0, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(99, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(100, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(150, cfg), 1e-4);
  EXPECT_EQ(lr_at_epoch(200, cfg), 0.0);
  double prev = lr_at_epoch(0, cfg);
  for (int e = 1; e <= cfg.epochs; ++e) {
    const double lr = lr_at_epoch(e, cfg);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(lr_at_epoch(-1, cfg), DomainError);
  EXPECT_THROW(lr_at_epoch(201, cfg), DomainError);
}

TEST(LearningRate, NoDecaySegment) {
  TrainConfig cfg;
  cfg.epochs = cfg.decay_start = 10;
  EXPECT_DOUBLE_EQ(lr_at_epoch(9, cfg), 2e-4);
  EXPECT_EQ(lr_at_epoch(10, cfg), 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  validate(cfg);
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(validate(c), ValidationError);
  };
  bad([](TrainConfig& c) { c.decay_start = 201; });
  bad([](TrainConfig& c) { c.lr0 = 0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.working_size = 30; });
  bad([](TrainConfig& c) { c.working_size = 20; });  // smaller than one discriminator patch
  bad([](TrainConfig& c) { c.lesion_filter = LesionType::not_applicable; });
  bad([](TrainConfig& c) { c.weights.lambda_cycle = -1; });
}

TEST(TrainConfig, JsonRoundTripAndFingerprint) {
  TrainConfig cfg;
  cfg.variant = GeneratorVariant::C_attention;
  cfg.lesion_filter = LesionType::II;
  cfg.seed = 0xdeadbeefcafeULL;
  cfg.weights.lambda_identity = 2.5;
  cfg.network.power_iterations = 5;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);

  TrainConfig other = cfg;
  other.checkpoint_every = 3;
  EXPECT_EQ(config_fingerprint(other), config_fingerprint(cfg));
  other = cfg;
  other.variant = GeneratorVariant::A_subpixel;
  EXPECT_NE(config_fingerprint(other), config_fingerprint(cfg));
  other = cfg;
  other.lr0 = 1e-4;
  EXPECT_NE(config_fingerprint(other), config_fingerprint(cfg));
}

TEST(HistoryBuffer, FirstPushAndDisabled) {
  std::mt19937_64 rng(1);
  HistoryBuffer one(1);
  const auto v = Tensor<float>::constant({3, 2, 2}, 0.25f);
  EXPECT_EQ(one.push_sample(v, rng).matrix(), v.matrix());
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.images()[0].matrix(), v.matrix());

  HistoryBuffer off(0);
  for (int i = 0; i < 10; ++i) {
    const auto x = Tensor<float>::constant({1, 1, 1}, static_cast<float>(i));
    EXPECT_EQ(off.push_sample(x, rng)(0, 0, 0), static_cast<float>(i));
  }
  EXPECT_EQ(off.size(), 0u);
}

TEST(HistoryBuffer, AgeDistributionMatchesSimulation) {
  // Ages (push index minus index of the returned image), binned, against an
  // independent loop simulation of the same policy on its own random stream.
  const int pushes = 10000, capacity = 50;
  const std::vector<int> edges{0, 1, 11, 26, 51, 101, 201, 1 << 30};
  auto bin = [&](int age) {
    int b = 0;
    while (age >= edges[b + 1]) ++b;
    return b;
  };
  std::vector<double> observed(edges.size() - 1), simulated(edges.size() - 1);

  std::mt19937_64 rng(2024);
  HistoryBuffer pool(capacity);
  for (int i = 0; i < pushes; ++i) {
    const int got = static_cast<int>(pool.push_sample(Tensor<float>::constant({1, 1, 1}, float(i)), rng)(0, 0, 0));
    observed[bin(i - got)] += 1;
  }

  std::mt19937 sim_rng(99);
  std::vector<int> slots;
  for (int i = 0; i < pushes; ++i) {
    int got = i;
    if (static_cast<int>(slots.size()) < capacity) {
      slots.push_back(i);
    } else if (sim_rng() % 2 == 0) {
      const int k = static_cast<int>(sim_rng() % capacity);
      got = slots[k];
      slots[k] = i;
    }
    simulated[bin(i - got)] += 1;
  }

  double chi2 = 0;
  int bins = 0;
  for (std::size_t b = 0; b < observed.size(); ++b)
    if (observed[b] + simulated[b] > 0) {
      chi2 += std::pow(observed[b] - simulated[b], 2) / (observed[b] + simulated[b]);
      ++bins;
    }
  // 0.1% critical value of chi-squared with 6 degrees of freedom.
  ASSERT_EQ(bins, 7);
  EXPECT_LT(chi2, 22.46);
  EXPECT_NEAR(observed[0] / pushes, 0.5, 0.03);
}

TEST(Adam, MatchesHandComputation) {
  Var<float> w(Tensor<float>::constant({1, 1, 2}, 1.0f), true);
  Adam opt({{"w", w}}, 0.5, 0.999, 1e-8);
  opt.set_lr(0.1);
  const double grads[3][2] = {{0.2, -4.0}, {0.1, 1.0}, {-0.3, 0.0}};
  double m[2] = {0, 0}, v[2] = {0, 0}, p[2] = {1, 1};
  for (int t = 1; t <= 3; ++t) {
    Matrix<float> g(1, 2);
    g << static_cast<float>(grads[t - 1][0]), static_cast<float>(grads[t - 1][1]);
    opt.zero_grad();
    w.node()->accumulate(g);
    opt.step();
    for (int k = 0; k < 2; ++k) {
      const double gk = static_cast<float>(grads[t - 1][k]);
      m[k] = 0.5 * m[k] + 0.5 * gk;
      v[k] = 0.999 * v[k] + 0.001 * gk * gk;
      const double mhat = m[k] / (1 - std::pow(0.5, t)), vhat = v[k] / (1 - std::pow(0.999, t));
      p[k] -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
      EXPECT_NEAR(w.value()(0, 0, k), p[k], 1e-5) << "step " << t;  // float state
    }
  }
  EXPECT_EQ(opt.steps(), 3);
}

TEST(Adam, SkipsParametersWithoutGradient) {
  Var<float> a(Tensor<float>::constant({1, 1, 1}, 2.0f), true), b(Tensor<float>::constant({1, 1, 1}, 3.0f), true);
  Adam opt({{"a", a}, {"b", b}}, 0.5, 0.999);
  opt.set_lr(0.01);
  a.node()->accumulate(Matrix<float>::Constant(1, 1, 1.0f));
  opt.step();
  EXPECT_NE(a.item(), 2.0f);
  EXPECT_EQ(b.item(), 3.0f);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto dir = scratch_dir("ckpt_roundtrip");
  for (auto v : {GeneratorVariant::A_subpixel, GeneratorVariant::C_attention}) {
    TrainConfig cfg = tiny_config(v);
    CycleGan model(cfg);
    model.initialize();
    model.epoch = 7;
    model.best_cycle_loss = 0.125;
    std::mt19937_64 rng(3);
    const auto probe = random_tensor<float>({3, 32, 32}, rng);
    for (int i = 0; i < 3; ++i) model.pool_Y().push_sample(random_tensor<float>({3, 32, 32}, rng), rng);
    const auto before = model.G().infer(probe);
    const auto d_before = model.D_Y().infer(probe);

    const std::string path = (dir / "m.ckpt").string();
    save_checkpoint(model.to_checkpoint(), path);
    const ModelCheckpoint loaded = load_checkpoint(path, cfg);
    EXPECT_EQ(loaded.epoch, 7);
    EXPECT_EQ(loaded.best_cycle_loss, 0.125);
    EXPECT_EQ(loaded.config, cfg);

    CycleGan restored(cfg);
    restored.load(loaded);
    EXPECT_EQ(restored.G().infer(probe).matrix(), before.matrix());
    EXPECT_EQ(restored.D_Y().infer(probe).matrix(), d_before.matrix());
    ASSERT_EQ(restored.pool_Y().size(), 3u);
    EXPECT_EQ(restored.pool_Y().images()[2].matrix(), model.pool_Y().images()[2].matrix());
    EXPECT_EQ(load_generator(loaded).infer(probe).matrix(), before.matrix());

    // Saving the restored model reproduces every stored tensor.
    const ModelCheckpoint again = restored.to_checkpoint();
    ASSERT_EQ(again.tensors.size(), loaded.tensors.size());
    for (const auto& [name, t] : loaded.tensors) EXPECT_EQ(again.tensors.at(name).matrix(), t.matrix()) << name;
  }
}

TEST(Checkpoint, WrongVariantIsAFingerprintError) {
  const auto dir = scratch_dir("ckpt_fp");
  TrainConfig cfg = tiny_config();
  CycleGan model(cfg);
  model.initialize();
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(model.to_checkpoint(), path);
  TrainConfig other = cfg;
  other.variant = GeneratorVariant::B_baseline;
  EXPECT_THROW(load_checkpoint(path, other), FingerprintError);
  EXPECT_NO_THROW(load_checkpoint(path, cfg));
}

TEST(Checkpoint, TruncatedFileNamesThePath) {
  const auto dir = scratch_dir("ckpt_trunc");
  CycleGan model(tiny_config());
  model.initialize();
  const std::string path = (dir / "cut.ckpt").string();
  save_checkpoint(model.to_checkpoint(), path);
  fs::resize_file(path, fs::file_size(path) - 100);
  try {
    load_checkpoint(path);
    FAIL() << "truncated checkpoint loaded";
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos) << e.what();
  }
  fs::resize_file(path, 10);
  EXPECT_THROW(load_checkpoint(path), DecodeError);
}

TEST(Checkpoint, VersionAndMagicChecked) {
  const auto dir = scratch_dir("ckpt_version");
  CycleGan model(tiny_config());
  model.initialize();
  const std::string path = (dir / "v.ckpt").string();
  save_checkpoint(model.to_checkpoint(), path);
  Bytes bytes = read_file(path);
  Bytes bumped = bytes;
  bumped[8] = 2;  // u32 version follows the 8-byte magic
  write_file(path, bumped);
  EXPECT_THROW(load_checkpoint(path), DecodeError);
  Bytes bad_magic = bytes;
  bad_magic[0] = 'X';
  write_file(path, bad_magic);
  EXPECT_THROW(load_checkpoint(path), DecodeError);
  EXPECT_THROW(load_checkpoint((dir / "missing.ckpt").string()), Error);
}

TEST(Train, EpochsZeroReturnsInitializedWeights) {
  const auto dir = scratch_dir("train_zero");
  TrainConfig cfg = tiny_config();
  cfg.epochs = cfg.decay_start = 0;
  const ModelCheckpoint ckpt = train(cfg, corpus(), dir.string());
  EXPECT_EQ(ckpt.epoch, 0);
  EXPECT_EQ(ckpt.counters.at("opt_G.steps"), 0);
  CycleGan fresh(cfg);
  fresh.initialize();
  const ModelCheckpoint init = fresh.to_checkpoint();
  for (const auto& [name, t] : init.tensors) EXPECT_EQ(ckpt.tensors.at(name).matrix(), t.matrix()) << name;
  EXPECT_TRUE(fs::exists(dir / "latest.ckpt"));
}

TEST(Train, DeterministicLogsAndFiniteLosses) {
  const auto a = scratch_dir("train_det_a"), b = scratch_dir("train_det_b");
  const TrainConfig cfg = tiny_config();
  const ModelCheckpoint ca = train(cfg, corpus(), a.string());
  const ModelCheckpoint cb = train(cfg, corpus(), b.string());
  const auto la = read_loss_log((a / "losses.jsonl").string());
  const auto lb = read_loss_log((b / "losses.jsonl").string());
  EXPECT_EQ(la, lb);
  ASSERT_EQ(la.size(), 2u * (1 + 4 * 9));
  for (const auto& r : la) EXPECT_TRUE(std::isfinite(r.value)) << r.name << " at " << r.iteration;
  EXPECT_EQ(ca.epoch, 2);
  for (const auto& [name, t] : ca.tensors) EXPECT_EQ(cb.tensors.at(name).matrix(), t.matrix()) << name;
  EXPECT_TRUE(fs::exists(a / "best.ckpt"));
  EXPECT_TRUE(fs::exists(a / "config.json"));
  EXPECT_EQ(ca.counters.at("opt_G.steps"), 8);
  EXPECT_EQ(ca.counters.at("opt_D.steps"), 8);

  std::mt19937_64 rng(1);
  const auto probe = random_tensor<float>({3, 32, 32}, rng);
  EXPECT_TRUE(within_range(load_generator(ca).infer(probe), -1.0f, 1.0f));
}

TEST(Train, ResumeContinuesIdentically) {
  const auto whole = scratch_dir("train_whole"), split = scratch_dir("train_split");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 4;
  cfg.decay_start = 2;
  cfg.checkpoint_every = 10;
  const ModelCheckpoint full = train(cfg, corpus(), whole.string());

  TrainOptions first;
  first.stop_after_epoch = 2;
  EXPECT_EQ(train(cfg, corpus(), split.string(), first).epoch, 2);
  TrainOptions second;
  second.resume = true;
  const ModelCheckpoint resumed = train(cfg, corpus(), split.string(), second);
  EXPECT_EQ(resumed.epoch, 4);

  const auto lw = read_loss_log((whole / "losses.jsonl").string());
  const auto ls = read_loss_log((split / "losses.jsonl").string());
  EXPECT_EQ(named(lw, "lr"), named(ls, "lr"));
  ASSERT_EQ(named(ls, "lr").size(), 4u);
  EXPECT_DOUBLE_EQ(named(ls, "lr")[3].value, 1e-4);
  EXPECT_EQ(lw, ls);
  for (const auto& [name, t] : full.tensors) EXPECT_EQ(resumed.tensors.at(name).matrix(), t.matrix()) << name;
}

TEST(Train, ResumeRejectsDifferentConfig) {
  const auto dir = scratch_dir("train_resume_bad");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.decay_start = 1;
  train(cfg, corpus(), dir.string());
  TrainConfig other = cfg;
  other.seed = 99;
  TrainOptions opts;
  opts.resume = true;
  EXPECT_THROW(train(other, corpus(), dir.string(), opts), FingerprintError);
}

TEST(Train, MissingDomainIsAnError) {
  TrainConfig cfg = tiny_config();
  cfg.lesion_filter = LesionType::II;  // the synthetic corpus only has large lesions
  EXPECT_THROW(train(cfg, corpus(), scratch_dir("train_missing").string()), Error);
}

TEST(Train, CycleLossFallsInMostSeeds) {
  // Mean cycle loss of the last epoch against the first iteration, 10 seeds.
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto dir = scratch_dir("train_cycle");
    TrainConfig cfg = tiny_config(GeneratorVariant::A_subpixel, seed);
    cfg.epochs = 3;
    cfg.decay_start = 3;
    train(cfg, corpus(), dir.string());
    const auto log = read_loss_log((dir / "losses.jsonl").string());
    const auto cx = named(log, "cycle_X"), cy = named(log, "cycle_Y");
    const double first = cx.front().value + cy.front().value;
    double last = 0;
    int n = 0;
    for (std::size_t i = 0; i < cx.size(); ++i)
      if (cx[i].epoch == cfg.epochs - 1) {
        last += cx[i].value + cy[i].value;
        ++n;
      }
    ASSERT_GT(n, 0);
    if (last / n < first) ++improved;
  }
  EXPECT_GE(improved, 8);
}
