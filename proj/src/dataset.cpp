#include "floragan/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "floragan/image_io.hpp"
#include "floragan/preprocess.hpp"

namespace floragan {

namespace fs = std::filesystem;

std::string_view to_string(Augmentation a) { return a == Augmentation::none ? "none" : "horizontal_flip"; }

Augmentation parse_augmentation(std::string_view s) {
  if (s == "none") return Augmentation::none;
  if (s == "horizontal_flip") return Augmentation::horizontal_flip;
  throw DomainError("unknown augmentation '" + std::string(s) + "'");
}

void validate(const PreprocessConfig& cfg) {
  if (cfg.working_size < 4 || cfg.working_size % 4 != 0)
    throw DomainError("working size must be a positive multiple of 4, got " + std::to_string(cfg.working_size));
}

std::string_view to_string(LesionType t) {
  switch (t) {
    case LesionType::I: return "I";
    case LesionType::II: return "II";
    case LesionType::not_applicable: return "na";
  }
  return "?";
}

LesionType parse_lesion_type(std::string_view s) {
  if (s == "I") return LesionType::I;
  if (s == "II") return LesionType::II;
  if (s == "na") return LesionType::not_applicable;
  throw DomainError("unknown lesion type '" + std::string(s) + "' (expected I, II or na)");
}

std::string_view to_string(DomainTag d) { return d == DomainTag::melanoma_X ? "melanoma" : "flower"; }

DomainTag parse_domain(std::string_view s) {
  if (s == "melanoma") return DomainTag::melanoma_X;
  if (s == "flower") return DomainTag::flower_Y;
  throw DomainError("unknown domain '" + std::string(s) + "' (expected melanoma or flower)");
}

double estimate_lesion_coverage(const ImageTensor& raw) {
  const Shape s = raw.shape();
  if (!s.valid()) throw ShapeError("estimate_lesion_coverage: empty image");
  if (s.channels != 3) throw ShapeError("estimate_lesion_coverage expects 3 channels, got " + to_string(s));
  std::array<long, 256> hist{};
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const double g = 0.299 * raw.pixels(0, y, x) + 0.587 * raw.pixels(1, y, x) + 0.114 * raw.pixels(2, y, x);
      hist[static_cast<std::size_t>(std::clamp(std::lround(g * 255.0), 0L, 255L))]++;
    }
  const double total = static_cast<double>(s.plane());
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[i]);
  // Otsu: pick the split t (dark = levels <= t) maximizing between-class variance.
  double best = 0, w0 = 0, sum0 = 0;
  int threshold = -1;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * static_cast<double>(hist[t]);
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      threshold = t;
    }
  }
  if (threshold < 0) return 0.0;
  long dark = 0;
  for (int i = 0; i <= threshold; ++i) dark += hist[i];
  return static_cast<double>(dark) / total;
}

LesionType classify_lesion_type(double coverage) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw DomainError("coverage must lie in [0, 1]");
  return coverage > 0.25 ? LesionType::I : LesionType::II;
}

std::vector<const ManifestEntry*> DatasetManifest::select(DomainTag domain, std::optional<LesionType> lesion) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.domain == domain && (!lesion || e.lesion_type == *lesion)) out.push_back(&e);
  return out;
}

void validate(const DatasetManifest& manifest) {
  for (const auto& e : manifest.entries) {
    if (e.domain == DomainTag::flower_Y && e.lesion_type != LesionType::not_applicable)
      throw DomainError("manifest: flower entry " + e.path + " must have lesion type na");
    if (e.domain == DomainTag::melanoma_X) {
      if (e.lesion_type == LesionType::not_applicable)
        throw DomainError("manifest: melanoma entry " + e.path + " needs lesion type I or II");
      if (e.coverage) {
        if (*e.coverage < 0 || *e.coverage > 1) throw DomainError("manifest: coverage out of [0,1] for " + e.path);
        if ((*e.coverage > 0.25) != (e.lesion_type == LesionType::I))
          throw DomainError("manifest: coverage and lesion type disagree for " + e.path);
      }
    }
  }
}

namespace {

void sort_by_path(std::vector<ManifestEntry>& entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ManifestBuildResult build_manifest(const std::string& image_dir, DomainTag domain,
                                   const std::map<std::string, LesionType>& overrides) {
  if (!fs::is_directory(image_dir)) throw Error("image directory does not exist: " + image_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(image_dir))
    if (entry.is_regular_file() && entry.path().filename().string().front() != '.') files.push_back(entry.path());
  if (files.empty()) throw Error("image directory is empty: " + image_dir);
  std::sort(files.begin(), files.end());

  ManifestBuildResult result;
  for (const auto& file : files) {
    ManifestEntry e;
    e.path = file.string();
    e.domain = domain;
    if (domain == DomainTag::flower_Y) {
      try {
        (void)probe_image_size(read_file(e.path));
      } catch (const Error&) {
        result.skipped.push_back(e.path);
        continue;
      }
      result.manifest.entries.push_back(std::move(e));
      continue;
    }
    auto it = overrides.find(file.filename().string());
    if (it == overrides.end()) it = overrides.find(e.path);
    ImageTensor img;
    try {
      img = read_image(e.path);
    } catch (const Error&) {
      result.skipped.push_back(e.path);
      continue;
    }
    if (it != overrides.end()) {
      if (it->second == LesionType::not_applicable)
        throw DomainError("override for melanoma file " + e.path + " must be I or II");
      e.lesion_type = it->second;
    } else {
      const double coverage = estimate_lesion_coverage(img);
      e.coverage = coverage;
      e.lesion_type = classify_lesion_type(coverage);
    }
    result.manifest.entries.push_back(std::move(e));
  }
  if (result.manifest.entries.empty()) throw Error("no decodable images in " + image_dir);
  sort_by_path(result.manifest.entries);
  return result;
}

DatasetManifest merge(const DatasetManifest& a, const DatasetManifest& b) {
  DatasetManifest out = a;
  out.entries.insert(out.entries.end(), b.entries.begin(), b.entries.end());
  sort_by_path(out.entries);
  return out;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "path\tdomain\tlesion_type\tcoverage\n";
  for (const auto& e : manifest.entries) {
    os << e.path << '\t' << to_string(e.domain) << '\t' << to_string(e.lesion_type) << '\t';
    if (e.coverage) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *e.coverage);
      os << buf;
    } else {
      os << '-';
    }
    os << '\n';
  }
  return os.str();
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest manifest;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() == 4 && fields[0] == "path" && fields[1] == "domain") continue;
    }
    if (fields.size() != 4)
      throw DomainError("manifest line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    ManifestEntry e;
    e.path = std::string(fields[0]);
    e.domain = parse_domain(fields[1]);
    e.lesion_type = parse_lesion_type(fields[2]);
    if (fields[3] != "-") {
      try {
        e.coverage = std::stod(std::string(fields[3]));
      } catch (const std::exception&) {
        throw DomainError("manifest line " + std::to_string(line_no) + ": bad coverage '" + std::string(fields[3]) + "'");
      }
    }
    manifest.entries.push_back(std::move(e));
  }
  validate(manifest);
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path);
  out << format_manifest(manifest);
}

DatasetManifest read_manifest(const std::string& path) { return parse_manifest(slurp(path)); }

std::map<std::string, LesionType> read_overrides(const std::string& path) {
  std::map<std::string, LesionType> out;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) throw DomainError("override line must be '<file>\\t<I|II>': " + line);
    out[std::string(fields[0])] = parse_lesion_type(fields[1]);
  }
  return out;
}

UnpairedStream::UnpairedStream(const DatasetManifest& manifest, LesionType lesion_filter, std::uint64_t seed)
    : seed_(seed) {
  if (lesion_filter == LesionType::not_applicable) throw DomainError("lesion filter must be I or II");
  for (const auto* e : manifest.select(DomainTag::melanoma_X, lesion_filter)) melanoma_.push_back(*e);
  for (const auto* e : manifest.select(DomainTag::flower_Y)) flowers_.push_back(*e);
  if (melanoma_.empty())
    throw DomainError("no type " + std::string(to_string(lesion_filter)) + " melanoma images in manifest");
  if (flowers_.empty()) throw DomainError("no flower images in manifest");
}

std::vector<std::pair<const ManifestEntry*, const ManifestEntry*>> UnpairedStream::epoch(int index) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  auto shuffled = [&rng](std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    return order;
  };
  const auto mx = shuffled(melanoma_.size());
  const auto fy = shuffled(flowers_.size());
  std::vector<std::pair<const ManifestEntry*, const ManifestEntry*>> out;
  for (std::size_t i = 0; i < pairs_per_epoch(); ++i) out.emplace_back(&melanoma_[mx[i]], &flowers_[fy[i]]);
  return out;
}

}  // namespace floragan
