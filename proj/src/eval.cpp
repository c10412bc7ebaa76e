#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "floragan/eval.hpp"
#include "floragan/preprocess.hpp"

namespace floragan {

using nlohmann::json;

namespace {

Eigen::MatrixXd luma(const ImageTensor& img) {
  const Shape s = img.shape();
  const auto& m = img.pixels.matrix();
  Eigen::RowVectorXd flat;
  if (s.channels == 1)
    flat = m.row(0).cast<double>();
  else if (s.channels == 3)
    flat = 0.299 * m.row(0).cast<double>() + 0.587 * m.row(1).cast<double>() + 0.114 * m.row(2).cast<double>();
  else
    throw ShapeError("ssim expects 1 or 3 channels, got " + std::to_string(s.channels));
  Eigen::MatrixXd out(s.height, s.width);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) out(y, x) = flat(y * s.width + x);
  return out;
}

Eigen::VectorXd gaussian_taps(int size, double sigma) {
  Eigen::VectorXd g(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) g(i) = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  return g / g.sum();
}

// Valid-mode separable filtering.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& img, const Eigen::VectorXd& gy, const Eigen::VectorXd& gx) {
  const Eigen::Index kh = gy.size(), kw = gx.size();
  const Eigen::Index oh = img.rows() - kh + 1, ow = img.cols() - kw + 1;
  Eigen::MatrixXd rows(img.rows(), ow);
  for (Eigen::Index x = 0; x < ow; ++x) rows.col(x) = img.middleCols(x, kw) * gx;
  Eigen::MatrixXd out(oh, ow);
  for (Eigen::Index y = 0; y < oh; ++y) out.row(y) = gy.transpose() * rows.middleRows(y, kh);
  return out;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw DomainError(std::string("matrix square root failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-6) throw DomainError(std::string(what) + " is not positive semidefinite");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void check_stats(const FeatureStats& s, const char* what) {
  if (s.covariance.rows() != s.mean.size() || s.covariance.cols() != s.mean.size())
    throw ShapeError(std::string(what) + ": covariance does not match the mean dimension");
  if (!s.mean.allFinite() || !s.covariance.allFinite()) throw DomainError(std::string(what) + " is not finite");
  if ((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, s.covariance.cwiseAbs().maxCoeff()))
    throw DomainError(std::string(what) + ": covariance is not symmetric");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(std::string_view line) {
  const char sep = line.find('\t') != std::string_view::npos ? '\t' : ',';
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, round_half_up(v, decimals));
  return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt(const json& j) { return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>()); }

}  // namespace

double ssim(const ImageTensor& x, const ImageTensor& y) {
  if (x.shape() != y.shape())
    throw ShapeError("ssim: shapes differ (" + to_string(x.shape()) + " vs " + to_string(y.shape()) + ")");
  const Eigen::MatrixXd a = luma(x), b = luma(y);
  const int kh = std::min<int>(11, static_cast<int>(a.rows())), kw = std::min<int>(11, static_cast<int>(a.cols()));
  const Eigen::VectorXd gy = gaussian_taps(kh, 1.5), gx = gaussian_taps(kw, 1.5);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  const Eigen::ArrayXXd mu_a = filter_valid(a, gy, gx).array();
  const Eigen::ArrayXXd mu_b = filter_valid(b, gy, gx).array();
  const Eigen::ArrayXXd aa = filter_valid(a.cwiseProduct(a), gy, gx).array() - mu_a.square();
  const Eigen::ArrayXXd bb = filter_valid(b.cwiseProduct(b), gy, gx).array() - mu_b.square();
  const Eigen::ArrayXXd ab = filter_valid(a.cwiseProduct(b), gy, gx).array() - mu_a * mu_b;
  const Eigen::ArrayXXd map =
      ((2 * mu_a * mu_b + c1) * (2 * ab + c2)) / ((mu_a.square() + mu_b.square() + c1) * (aa + bb + c2));
  return map.mean();
}

FeatureStats feature_stats(const std::vector<Eigen::VectorXd>& features) {
  if (features.size() < 2) throw DomainError("feature_stats needs at least 2 images, got " + std::to_string(features.size()));
  const Eigen::Index d = features.front().size();
  FeatureStats s;
  s.sample_count = features.size();
  s.mean = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) {
    if (f.size() != d) throw ShapeError("feature_stats: feature vectors differ in dimension");
    s.mean += f;
  }
  s.mean /= static_cast<double>(features.size());
  s.covariance = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : features) {
    const Eigen::VectorXd c = f - s.mean;
    s.covariance.noalias() += c * c.transpose();
  }
  s.covariance /= static_cast<double>(features.size() - 1);
  return s;
}

FeatureExtractor toy_extractor(Eigen::Index dimension, int grid, std::uint64_t seed) {
  if (dimension < 1 || grid < 1) throw DomainError("toy_extractor: dimension and grid must be positive");
  const Eigen::Index in = 3 * grid * grid;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  Eigen::MatrixXd projection(dimension, in);
  for (Eigen::Index i = 0; i < projection.size(); ++i) projection.data()[i] = normal(rng);

  FeatureExtractor ex;
  ex.name = "toy";
  ex.dimension = dimension;
  ex.extract = [projection, grid](const ImageTensor& img) -> Eigen::VectorXd {
    const Shape s = img.shape();
    if (s.channels != 3) throw ShapeError("toy extractor expects 3 channels");
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(3 * grid * grid);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(grid * grid);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const int cell = (y * grid / s.height) * grid + (x * grid / s.width);
        counts(cell) += 1;
        for (int c = 0; c < 3; ++c) pooled(c * grid * grid + cell) += img.pixels(c, y, x);
      }
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < grid * grid; ++i)
        if (counts(i) > 0) pooled(c * grid * grid + i) /= counts(i);
    return projection * pooled;
  };
  return ex;
}

FeatureStats feature_stats(const std::vector<ImageTensor>& images, const FeatureExtractor& extractor) {
  std::vector<Eigen::VectorXd> features;
  features.reserve(images.size());
  for (const auto& img : images) features.push_back(extractor.extract(img));
  return feature_stats(features);
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.dimension() != b.dimension())
    throw ShapeError("frechet_distance: dimensions differ (" + std::to_string(a.dimension()) + " vs " +
                     std::to_string(b.dimension()) + ")");
  check_stats(a, "first statistics");
  check_stats(b, "second statistics");
  // Tr (Sa Sb)^(1/2) = Tr (Sa^(1/2) Sb Sa^(1/2))^(1/2); the inner matrix is symmetric PSD.
  const Eigen::MatrixXd root_a = sqrt_psd(a.covariance, "first covariance");
  const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw DomainError("frechet_distance: matrix square root failed");
  double trace_root = 0;
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()(i);
    if (ev < -1e-6 * scale) throw DomainError("frechet_distance: covariance product has a negative eigenvalue");
    trace_root += std::sqrt(std::max(ev, 0.0));
  }
  const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2 * trace_root;
  return std::max(d, 0.0);
}

std::vector<QuestionnaireRecord> parse_questionnaire(std::string_view text) {
  std::vector<QuestionnaireRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    auto cells = split_row(line);
    if (header.empty()) {
      header = cells;
      const std::vector<std::string> want{"image_id", "likes_A", "likes_B", "ssim_A", "ssim_B"};
      if (header != want) throw DecodeError("questionnaire header must be image_id,likes_A,likes_B,ssim_A,ssim_B");
      continue;
    }
    if (cells.size() != 5) throw DecodeError("questionnaire line " + std::to_string(line_no) + ": expected 5 fields");
    try {
      QuestionnaireRecord r;
      r.image_id = cells[0];
      std::size_t used = 0;
      r.likes_A = std::stol(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("likes_A");
      r.likes_B = std::stol(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("likes_B");
      r.ssim_A = std::stod(cells[3]);
      r.ssim_B = std::stod(cells[4]);
      if (r.likes_A < 0 || r.likes_B < 0) throw DomainError("negative like count");
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DecodeError("questionnaire line " + std::to_string(line_no) + ": malformed number");
    }
  }
  if (header.empty()) throw DecodeError("questionnaire file is empty");
  return out;
}

std::vector<QuestionnaireRecord> read_questionnaire(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read questionnaire " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_questionnaire(ss.str());
}

Ratings aggregate_questionnaire(const std::vector<QuestionnaireRecord>& records) {
  if (records.empty()) throw DomainError("aggregate_questionnaire: no records");
  const long respondents = records.front().likes_A + records.front().likes_B;
  long a = 0, b = 0;
  for (const auto& r : records) {
    if (r.likes_A + r.likes_B != respondents)
      throw DomainError("inconsistent respondent counts: image " + r.image_id + " has " +
                        std::to_string(r.likes_A + r.likes_B) + ", expected " + std::to_string(respondents));
    a += r.likes_A;
    b += r.likes_B;
  }
  if (a + b == 0) throw DomainError("aggregate_questionnaire: no responses");
  return {100.0 * static_cast<double>(a) / static_cast<double>(a + b),
          100.0 * static_cast<double>(b) / static_cast<double>(a + b)};
}

MeanSsim mean_ssim(const std::vector<QuestionnaireRecord>& records) {
  if (records.empty()) throw DomainError("mean_ssim: no records");
  MeanSsim m;
  for (const auto& r : records) {
    m.A += r.ssim_A;
    m.B += r.ssim_B;
  }
  m.A /= static_cast<double>(records.size());
  m.B /= static_cast<double>(records.size());
  return m;
}

double round_half_up(double value, int decimals) {
  const double p = std::pow(10.0, decimals);
  const double scaled = std::abs(value) * p;
  // The tolerance lets decimal halves stored slightly low still round up.
  const double r = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, scaled));
  return std::copysign(r / p, value);
}

EvalReport report_from_questionnaire(const std::vector<QuestionnaireRecord>& records) {
  const Ratings r = aggregate_questionnaire(records);
  const MeanSsim s = mean_ssim(records);
  EvalReport rep;
  rep.networks.push_back({"A", r.A, std::nullopt, s.A});
  rep.networks.push_back({"B", r.B, std::nullopt, s.B});
  rep.images = records;
  return rep;
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-17s %-10s %s\n", "Network", "Favorable Rating", "FID", "SSIM");
  out << line;
  for (const auto& n : report.networks) {
    const std::string rating = n.favorable_rating ? fixed(*n.favorable_rating, 2) + "%" : "n/a";
    const std::string fid = n.fid ? fixed(*n.fid, 2) : "n/a";
    const std::string ssim_text = n.ssim ? fixed(*n.ssim, 5) : "n/a";
    std::snprintf(line, sizeof line, "%-10s %-17s %-10s %s\n", n.network.c_str(), rating.c_str(), fid.c_str(),
                  ssim_text.c_str());
    out << line;
  }
  if (!report.images.empty()) {
    out << "\n";
    std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s\n", "Image", "Likes(A)", "Likes(B)", "SSIM(A)", "SSIM(B)");
    out << line;
    for (const auto& r : report.images) {
      std::snprintf(line, sizeof line, "%-8s %8ld %8ld %8.4f %8.4f\n", r.image_id.c_str(), r.likes_A, r.likes_B,
                    r.ssim_A, r.ssim_B);
      out << line;
    }
  }
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["networks"] = json::array();
  for (const auto& n : report.networks)
    j["networks"].push_back(
        {{"network", n.network}, {"favorable_rating", opt(n.favorable_rating)}, {"fid", opt(n.fid)}, {"ssim", opt(n.ssim)}});
  j["images"] = json::array();
  for (const auto& r : report.images)
    j["images"].push_back({{"image_id", r.image_id},
                           {"likes_A", r.likes_A},
                           {"likes_B", r.likes_B},
                           {"ssim_A", r.ssim_A},
                           {"ssim_B", r.ssim_B}});
  return j.dump(2);
}

EvalReport parse_report(std::string_view json_text) {
  try {
    const json j = json::parse(json_text);
    EvalReport rep;
    for (const auto& n : j.at("networks"))
      rep.networks.push_back({n.at("network").get<std::string>(), opt(n.at("favorable_rating")), opt(n.at("fid")),
                              opt(n.at("ssim"))});
    if (j.contains("images"))
      for (const auto& r : j.at("images"))
        rep.images.push_back({r.at("image_id").get<std::string>(), r.at("likes_A").get<long>(),
                              r.at("likes_B").get<long>(), r.at("ssim_A").get<double>(), r.at("ssim_B").get<double>()});
    return rep;
  } catch (const json::exception& e) {
    throw DecodeError(std::string("bad report: ") + e.what());
  }
}

void write_report(const EvalReport& report, const std::string& path) {
  {
    std::ofstream out(path);
    if (!out) throw Error("cannot write report " + path);
    out << format_report_table(report);
    if (!out) throw Error("failed writing report " + path);
  }
  std::ofstream out(path + ".json");
  if (!out) throw Error("cannot write report " + path + ".json");
  out << report_to_json(report) << '\n';
  if (!out) throw Error("failed writing report " + path + ".json");
}

}  // namespace floragan
