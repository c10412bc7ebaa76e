#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "floragan/tensor.hpp"

namespace floragan {

/// Mean SSIM of the luma channels (0.299/0.587/0.114 for RGB), 11x11 Gaussian
/// window with sigma 1.5, valid region only, C1 = 0.01^2 and C2 = 0.03^2.
/// Images smaller than the window use a window cropped to the image.
double ssim(const ImageTensor& x, const ImageTensor& y);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t sample_count = 0;

  Eigen::Index dimension() const { return mean.size(); }
};

/// Mean and unbiased covariance, summed in input order. Needs at least two rows.
FeatureStats feature_stats(const std::vector<Eigen::VectorXd>& features);

/// Maps one raw [0,1] RGB image to a feature vector of fixed dimension.
struct FeatureExtractor {
  std::string name;
  Eigen::Index dimension = 0;
  std::function<Eigen::VectorXd(const ImageTensor&)> extract;
};

/// Block-averages to 3 x grid x grid and applies a fixed Gaussian projection.
FeatureExtractor toy_extractor(Eigen::Index dimension = 64, int grid = 8, std::uint64_t seed = 7);

FeatureStats feature_stats(const std::vector<ImageTensor>& images, const FeatureExtractor& extractor);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// One row of the preference questionnaire.
struct QuestionnaireRecord {
  std::string image_id;
  long likes_A = 0;
  long likes_B = 0;
  double ssim_A = 0;
  double ssim_B = 0;

  friend bool operator==(const QuestionnaireRecord&, const QuestionnaireRecord&) = default;
};

/// Comma- or tab-separated, header `image_id likes_A likes_B ssim_A ssim_B`.
std::vector<QuestionnaireRecord> parse_questionnaire(std::string_view text);
std::vector<QuestionnaireRecord> read_questionnaire(const std::string& path);

struct Ratings {
  double A = 0;  // percent, unrounded
  double B = 0;
};

/// Likes over total responses. Every record must have the same respondent count.
Ratings aggregate_questionnaire(const std::vector<QuestionnaireRecord>& records);

struct MeanSsim {
  double A = 0;
  double B = 0;
};

MeanSsim mean_ssim(const std::vector<QuestionnaireRecord>& records);

/// Half-up rounding at `decimals` places, decided on the decimal expansion so
/// that 39.615 goes up.
double round_half_up(double value, int decimals);

struct NetworkResult {
  std::string network;
  std::optional<double> favorable_rating;  // percent
  std::optional<double> fid;
  std::optional<double> ssim;

  friend bool operator==(const NetworkResult&, const NetworkResult&) = default;
};

struct EvalReport {
  std::vector<NetworkResult> networks;
  std::vector<QuestionnaireRecord> images;  // per-image rows, may be empty

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Builds the two-network report from questionnaire rows; FID left empty.
EvalReport report_from_questionnaire(const std::vector<QuestionnaireRecord>& records);

/// Human-readable table: rating at 2 decimals, FID at 2, SSIM at 5; absent values as "n/a".
std::string format_report_table(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
EvalReport parse_report(std::string_view json_text);

/// Writes the table to `path` and the JSON form to `path` + ".json".
void write_report(const EvalReport& report, const std::string& path);

}  // namespace floragan
