#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include <jpeglib.h>

#include "floragan/dataset.hpp"
#include "floragan/image_io.hpp"
#include "floragan/preprocess.hpp"
#include "test_support.hpp"

using namespace floragan;
namespace fs = std::filesystem;
using floragan::testing::scratch_dir;
using floragan::testing::synthetic_flower;
using floragan::testing::synthetic_lesion;

namespace {

ImageTensor solid(int h, int w, float v) { return {Tensor<float>::constant({3, h, w}, v), ValueRange::raw01}; }

// Minimal baseline JPEG writer, only used to produce fixtures.
Bytes encode_jpeg(const ImageTensor& img, int quality = 95) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = img.pixels.width();
  cinfo.image_height = img.pixels.height();
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> row(3 * cinfo.image_width);
  while (cinfo.next_scanline < cinfo.image_height) {
    const int y = cinfo.next_scanline;
    for (int x = 0; x < img.pixels.width(); ++x)
      for (int c = 0; c < 3; ++c) row[3 * x + c] = static_cast<unsigned char>(std::lround(img.pixels(c, y, x) * 255));
    JSAMPROW r = row.data();
    jpeg_write_scanlines(&cinfo, &r, 1);
  }
  jpeg_finish_compress(&cinfo);
  Bytes out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

DatasetManifest synthetic_manifest(int type_i, int type_ii, int flowers) {
  DatasetManifest m;
  char name[64];
  for (int i = 0; i < type_i; ++i) {
    std::snprintf(name, sizeof name, "mel/i%05d.png", i);
    m.entries.push_back({name, DomainTag::melanoma_X, LesionType::I, 0.4});
  }
  for (int i = 0; i < type_ii; ++i) {
    std::snprintf(name, sizeof name, "mel/ii%05d.png", i);
    m.entries.push_back({name, DomainTag::melanoma_X, LesionType::II, 0.1});
  }
  for (int i = 0; i < flowers; ++i) {
    std::snprintf(name, sizeof name, "flo/f%05d.png", i);
    m.entries.push_back({name, DomainTag::flower_Y, LesionType::not_applicable, std::nullopt});
  }
  return m;
}

}  // namespace

TEST(ImageIo, PngRoundTripIsExactOn8BitLevels) {
  ImageTensor img{Tensor<float>(3, 5, 7), ValueRange::raw01};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) img.pixels(c, y, x) = static_cast<float>(((c * 31 + y * 7 + x * 13) % 256) / 255.0);
  const Bytes png = encode_png(img);
  const auto size = probe_image_size(png);
  EXPECT_EQ(size.width, 7);
  EXPECT_EQ(size.height, 5);
  const auto back = decode_image(png);
  ASSERT_EQ(back.shape(), img.shape());
  EXPECT_LT((back.pixels.matrix() - img.pixels.matrix()).cwiseAbs().maxCoeff(), 1e-6f);
  EXPECT_EQ(back.range, ValueRange::raw01);
}

TEST(ImageIo, JpegDecodes) {
  const auto img = solid(12, 20, 0.5f);
  const Bytes jpg = encode_jpeg(img);
  const auto size = probe_image_size(jpg);
  EXPECT_EQ(size.width, 20);
  EXPECT_EQ(size.height, 12);
  const auto back = decode_image(jpg);
  ASSERT_EQ(back.shape(), (Shape{3, 12, 20}));
  EXPECT_LT((back.pixels.matrix().array() - 0.5f).abs().maxCoeff(), 0.02f);
}

TEST(ImageIo, RejectsGarbage) {
  const Bytes junk{'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'a', 'g', 'e'};
  EXPECT_THROW(decode_image(junk), DecodeError);
  EXPECT_THROW(probe_image_size(junk), DecodeError);
  Bytes cut = encode_png(solid(8, 8, 0.3f));
  cut.resize(cut.size() / 2);
  EXPECT_THROW(decode_image(cut), DecodeError);
}

TEST(LesionCoverage, UniformImageIsZero) {
  EXPECT_EQ(estimate_lesion_coverage(solid(32, 32, 0.7f)), 0.0);
  EXPECT_EQ(estimate_lesion_coverage(solid(32, 32, 0.0f)), 0.0);
}

TEST(LesionCoverage, DarkDisk) {
  const int n = 256;
  ImageTensor img = solid(n, n, 1.0f);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (std::hypot(x + 0.5 - n / 2.0, y + 0.5 - n / 2.0) < n / 4.0)
        for (int c = 0; c < 3; ++c) img.pixels(c, y, x) = 0.0f;
  EXPECT_NEAR(estimate_lesion_coverage(img), std::numbers::pi / 16, 0.02);
}

TEST(LesionCoverage, HalfAndHalf) {
  ImageTensor img = solid(40, 40, 1.0f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 20; ++x) img.pixels(c, y, x) = 0.0f;
  EXPECT_NEAR(estimate_lesion_coverage(img), 0.5, 0.01);
}

TEST(LesionCoverage, SyntheticLesionTracksArea) {
  EXPECT_NEAR(estimate_lesion_coverage(synthetic_lesion(128, 0.4, 3)), 0.4, 0.05);
  EXPECT_NEAR(estimate_lesion_coverage(synthetic_lesion(128, 0.1, 4)), 0.1, 0.05);
}

TEST(LesionType, Threshold) {
  EXPECT_EQ(classify_lesion_type(0.30), LesionType::I);
  EXPECT_EQ(classify_lesion_type(0.25), LesionType::II);
  EXPECT_EQ(classify_lesion_type(0.0), LesionType::II);
  EXPECT_EQ(classify_lesion_type(1.0), LesionType::I);
  EXPECT_THROW(classify_lesion_type(-0.01), DomainError);
  EXPECT_THROW(classify_lesion_type(1.5), DomainError);
  EXPECT_THROW(classify_lesion_type(std::nan("")), DomainError);
}

TEST(LesionType, Monotone) {
  LesionType prev = LesionType::II;
  for (int i = 0; i <= 1000; ++i) {
    const LesionType t = classify_lesion_type(i / 1000.0);
    EXPECT_FALSE(prev == LesionType::I && t == LesionType::II);
    prev = t;
  }
}

TEST(Manifest, BuildFlowers) {
  const auto dir = scratch_dir("manifest_flowers");
  write_png((dir / "b.png").string(), synthetic_flower(16, 1));
  write_png((dir / "a.png").string(), synthetic_flower(16, 2));
  const auto r = build_manifest(dir.string(), DomainTag::flower_Y);
  ASSERT_EQ(r.manifest.entries.size(), 2u);
  EXPECT_TRUE(r.skipped.empty());
  EXPECT_LT(r.manifest.entries[0].path, r.manifest.entries[1].path);
  for (const auto& e : r.manifest.entries) {
    EXPECT_EQ(e.lesion_type, LesionType::not_applicable);
    EXPECT_EQ(e.domain, DomainTag::flower_Y);
  }
}

TEST(Manifest, HeuristicOverridesAndSkips) {
  const auto dir = scratch_dir("manifest_melanoma");
  write_png((dir / "big.png").string(), synthetic_lesion(64, 0.4, 1));
  write_png((dir / "small.png").string(), synthetic_lesion(64, 0.05, 2));
  write_png((dir / "forced.png").string(), synthetic_lesion(64, 0.05, 3));
  write_file((dir / "broken.png").string(), Bytes{1, 2, 3, 4});
  const auto r = build_manifest(dir.string(), DomainTag::melanoma_X, {{"forced.png", LesionType::I}});
  ASSERT_EQ(r.manifest.entries.size(), 3u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_NE(r.skipped[0].find("broken.png"), std::string::npos);
  std::map<std::string, LesionType> types;
  for (const auto& e : r.manifest.entries) types[fs::path(e.path).filename().string()] = e.lesion_type;
  EXPECT_EQ(types["big.png"], LesionType::I);
  EXPECT_EQ(types["small.png"], LesionType::II);
  EXPECT_EQ(types["forced.png"], LesionType::I);
  validate(r.manifest);
}

TEST(Manifest, EmptyDirectoryIsAnError) {
  const auto dir = scratch_dir("manifest_empty");
  EXPECT_THROW(build_manifest(dir.string(), DomainTag::flower_Y), Error);
  EXPECT_THROW(build_manifest((dir / "missing").string(), DomainTag::flower_Y), Error);
}

TEST(Manifest, TextRoundTrip) {
  const auto m = synthetic_manifest(3, 2, 4);
  EXPECT_EQ(parse_manifest(format_manifest(m)), m);
  const auto dir = scratch_dir("manifest_text");
  write_manifest(m, (dir / "m.tsv").string());
  EXPECT_EQ(read_manifest((dir / "m.tsv").string()), m);
  EXPECT_THROW(parse_manifest("path\tdomain\tlesion_type\tcoverage\nx.png\tmelanoma\n"), DomainError);
}

TEST(Manifest, PartitionsMelanomaCorpus) {
  const auto m = synthetic_manifest(1597, 2064, 2079);
  const auto all = m.select(DomainTag::melanoma_X);
  EXPECT_EQ(m.select(DomainTag::melanoma_X, LesionType::I).size() + m.select(DomainTag::melanoma_X, LesionType::II).size(),
            all.size());
  EXPECT_EQ(all.size(), 3661u);
}

TEST(Manifest, ValidationCatchesInconsistency) {
  DatasetManifest m;
  m.entries.push_back({"a.png", DomainTag::flower_Y, LesionType::I, std::nullopt});
  EXPECT_THROW(validate(m), DomainError);
  m.entries[0] = {"a.png", DomainTag::melanoma_X, LesionType::not_applicable, std::nullopt};
  EXPECT_THROW(validate(m), DomainError);
}

TEST(UnpairedStream, PairsPerEpoch) {
  const auto m = synthetic_manifest(1597, 2064, 2079);
  UnpairedStream s(m, LesionType::I, 7);
  EXPECT_EQ(s.pairs_per_epoch(), 1597u);
  const auto pairs = s.epoch(0);
  ASSERT_EQ(pairs.size(), 1597u);
  std::set<std::string> mel, flo;
  for (const auto& [x, y] : pairs) {
    EXPECT_EQ(x->lesion_type, LesionType::I);
    EXPECT_EQ(y->domain, DomainTag::flower_Y);
    mel.insert(x->path);
    flo.insert(y->path);
  }
  EXPECT_EQ(mel.size(), 1597u);  // every type-I image once
  EXPECT_EQ(flo.size(), 1597u);
  EXPECT_EQ(UnpairedStream(m, LesionType::II, 7).pairs_per_epoch(), 2064u);
}

TEST(UnpairedStream, SinglePair) {
  const auto m = synthetic_manifest(1, 0, 1);
  UnpairedStream s(m, LesionType::I, 3);
  for (int e = 0; e < 3; ++e) {
    const auto p = s.epoch(e);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].first->path, "mel/i00000.png");
    EXPECT_EQ(p[0].second->path, "flo/f00000.png");
  }
}

TEST(UnpairedStream, DeterministicPerSeedAndEpoch) {
  const auto m = synthetic_manifest(20, 5, 30);
  auto paths = [](const UnpairedStream& s, int e) {
    std::vector<std::string> out;
    for (const auto& [x, y] : s.epoch(e)) out.push_back(x->path + "|" + y->path);
    return out;
  };
  UnpairedStream a(m, LesionType::I, 11), b(m, LesionType::I, 11), c(m, LesionType::I, 12);
  EXPECT_EQ(paths(a, 0), paths(b, 0));
  EXPECT_EQ(paths(a, 5), paths(b, 5));
  EXPECT_NE(paths(a, 0), paths(a, 1));
  EXPECT_NE(paths(a, 0), paths(c, 0));
}

TEST(UnpairedStream, RequiresBothDomains) {
  EXPECT_THROW(UnpairedStream(synthetic_manifest(0, 3, 3), LesionType::I, 1), DomainError);
  EXPECT_THROW(UnpairedStream(synthetic_manifest(3, 0, 0), LesionType::I, 1), DomainError);
  EXPECT_THROW(UnpairedStream(synthetic_manifest(3, 0, 3), LesionType::not_applicable, 1), DomainError);
}

TEST(Preprocess, ResizeAndRangeMap) {
  const auto big = synthetic_flower(512, 5);
  const auto x = preprocess(big, PreprocessConfig{256});
  EXPECT_EQ(x.shape(), (Shape{3, 256, 256}));
  EXPECT_EQ(x.range, ValueRange::normalized);
  EXPECT_TRUE(within_range(x.pixels, -1.0f, 1.0f));
  const auto zeros = preprocess(solid(40, 60, 0.0f), PreprocessConfig{32});
  EXPECT_EQ(zeros.pixels.matrix().maxCoeff(), -1.0f);
  EXPECT_EQ(zeros.pixels.matrix().minCoeff(), -1.0f);
  const auto ones = preprocess(solid(40, 60, 1.0f), PreprocessConfig{32});
  EXPECT_EQ(ones.pixels.matrix().minCoeff(), 1.0f);
}

TEST(Preprocess, IdempotentOnSizedImages) {
  const auto img = synthetic_lesion(64, 0.3, 9);
  const auto x = preprocess(img, PreprocessConfig{64});
  EXPECT_LT((denormalize(x).pixels.matrix() - img.pixels.matrix()).cwiseAbs().maxCoeff(), 1e-6f);
  const auto again = preprocess(denormalize(x), PreprocessConfig{64});
  EXPECT_LT((again.pixels.matrix() - x.pixels.matrix()).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(Preprocess, RejectsBadConfig) {
  EXPECT_THROW(preprocess(solid(8, 8, 0.5f), PreprocessConfig{30}), DomainError);
  EXPECT_THROW(preprocess(solid(8, 8, 0.5f), PreprocessConfig{0}), DomainError);
  ImageTensor normalized{Tensor<float>(3, 8, 8), ValueRange::normalized};
  EXPECT_THROW(preprocess(normalized, PreprocessConfig{8}), DomainError);
}

TEST(Preprocess, FlipAugmentation) {
  const auto img = synthetic_flower(32, 6);
  std::mt19937_64 rng(1);
  int flipped = 0;
  const auto plain = preprocess(img, PreprocessConfig{32});
  const Tensor<float> mirrored = flip_horizontal(plain.pixels);
  for (int i = 0; i < 200; ++i) {
    const auto x = preprocess(img, PreprocessConfig{32, Augmentation::horizontal_flip}, &rng);
    if (x.pixels.matrix() == mirrored.matrix())
      ++flipped;
    else
      EXPECT_EQ(x.pixels.matrix(), plain.pixels.matrix());
  }
  EXPECT_GT(flipped, 70);
  EXPECT_LT(flipped, 130);
}

TEST(Preprocess, BilinearDownscaleAveragesPairs) {
  Tensor<float> src(1, 1, 4);
  src(0, 0, 0) = 0;
  src(0, 0, 1) = 1;
  src(0, 0, 2) = 2;
  src(0, 0, 3) = 3;
  const auto dst = resize_bilinear(src, 1, 2);
  EXPECT_FLOAT_EQ(dst(0, 0, 0), 0.5f);
  EXPECT_FLOAT_EQ(dst(0, 0, 1), 2.5f);
}
