#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "floragan/losses.hpp"
#include "floragan/tensor.hpp"

namespace floragan {

enum class LesionType { I, II, not_applicable };

std::string_view to_string(LesionType t);
LesionType parse_lesion_type(std::string_view s);
std::string_view to_string(DomainTag d);
DomainTag parse_domain(std::string_view s);

/// Fraction of pixels darker than a global Otsu threshold of the luma image
/// (0.299 R + 0.587 G + 0.114 B, 256 levels). A single-valued histogram gives 0.
double estimate_lesion_coverage(const ImageTensor& raw);

/// Type I when coverage > 0.25, else type II.
LesionType classify_lesion_type(double coverage);

struct ManifestEntry {
  std::string path;
  DomainTag domain = DomainTag::melanoma_X;
  LesionType lesion_type = LesionType::not_applicable;
  std::optional<double> coverage;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> select(DomainTag domain, std::optional<LesionType> lesion = std::nullopt) const;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Throws DomainError if an entry breaks the domain/lesion-type/coverage rules.
void validate(const DatasetManifest& manifest);

struct ManifestBuildResult {
  DatasetManifest manifest;
  std::vector<std::string> skipped;  // undecodable files
};

/// One entry per decodable image in `image_dir` (non-recursive), sorted by path.
/// Overrides are keyed by file name or full path and win over the heuristic.
ManifestBuildResult build_manifest(const std::string& image_dir, DomainTag domain,
                                   const std::map<std::string, LesionType>& overrides = {});

/// Concatenates and re-sorts by path.
DatasetManifest merge(const DatasetManifest& a, const DatasetManifest& b);

// Tab-separated text: header `path domain lesion_type coverage`, one row per
// entry, coverage "-" when absent.
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

/// `<file name or path>\t<I|II>` per line.
std::map<std::string, LesionType> read_overrides(const std::string& path);

/// Reproducible unpaired sampling: each epoch pairs independently shuffled
/// melanoma (filtered by lesion type) and flower entries, min(|X|, |Y|) pairs.
/// The order depends only on (seed, epoch). Entries are copied; returned
/// pointers live as long as the stream.
class UnpairedStream {
 public:
  UnpairedStream(const DatasetManifest& manifest, LesionType lesion_filter, std::uint64_t seed);

  std::size_t pairs_per_epoch() const { return std::min(melanoma_.size(), flowers_.size()); }
  std::vector<std::pair<const ManifestEntry*, const ManifestEntry*>> epoch(int index) const;

 private:
  std::vector<ManifestEntry> melanoma_;
  std::vector<ManifestEntry> flowers_;
  std::uint64_t seed_;
};

}  // namespace floragan
