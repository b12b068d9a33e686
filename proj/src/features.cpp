#include "softlabel/features.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace softlabel {

FeatureMatrix::FeatureMatrix(std::vector<std::string> image_ids, Eigen::MatrixXd rows,
                             FeatureRange range)
    : image_ids_(std::move(image_ids)), rows_(std::move(rows)), range_(range) {
  if (static_cast<Eigen::Index>(image_ids_.size()) != rows_.rows())
    throw std::invalid_argument("feature rows and image ids disagree in count");
  if (!(range_.lo < range_.hi)) throw std::invalid_argument("feature range must satisfy lo < hi");
  for (std::size_t i = 0; i < image_ids_.size(); ++i)
    if (!lookup_.emplace(image_ids_[i], i).second)
      throw std::invalid_argument("duplicate image id '" + image_ids_[i] + "' in features");
}

std::optional<std::size_t> FeatureMatrix::find(const std::string& image_id) const {
  auto it = lookup_.find(image_id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

FeatureMatrix load_features(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open feature manifest " + manifest.string());
  const auto j = nlohmann::json::parse(in);
  const auto ids = j.at("image_ids").get<std::vector<std::string>>();
  const auto dim = j.at("dim").get<std::size_t>();
  const auto range = j.at("range").get<std::vector<double>>();
  if (range.size() != 2) throw std::invalid_argument("feature range must be [lo, hi]");
  const auto data_path = manifest.parent_path() / j.at("data").get<std::string>();
  const std::string format = j.value("format", "csv");

  Eigen::MatrixXd rows(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(dim));
  if (format == "csv") {
    std::ifstream data(data_path);
    if (!data) throw std::runtime_error("cannot open feature data " + data_path.string());
    std::string line;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      if (!std::getline(data, line))
        throw std::invalid_argument("feature data has fewer rows than image ids");
      std::istringstream ss(line);
      std::string cell;
      Eigen::Index c = 0;
      while (std::getline(ss, cell, ',')) {
        if (c >= rows.cols()) throw std::invalid_argument("feature row wider than dim");
        rows(r, c++) = std::stod(cell);
      }
      if (c != rows.cols()) throw std::invalid_argument("feature row narrower than dim");
    }
  } else if (format == "f64le") {
    static_assert(std::endian::native == std::endian::little, "f64le reader assumes little-endian");
    std::ifstream data(data_path, std::ios::binary);
    if (!data) throw std::runtime_error("cannot open feature data " + data_path.string());
    std::vector<double> flat(ids.size() * dim);
    data.read(reinterpret_cast<char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (static_cast<std::size_t>(data.gcount()) != flat.size() * sizeof(double))
      throw std::invalid_argument("feature data shorter than N x D doubles");
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
      for (Eigen::Index c = 0; c < rows.cols(); ++c)
        rows(r, c) = flat[static_cast<std::size_t>(r) * dim + static_cast<std::size_t>(c)];
  } else {
    throw std::invalid_argument("unknown feature format '" + format + "'");
  }
  return FeatureMatrix(ids, std::move(rows), FeatureRange{range[0], range[1]});
}

void save_features(const FeatureMatrix& features, const std::filesystem::path& manifest,
                   FeatureFormat format) {
  const bool csv = format == FeatureFormat::Csv;
  auto data_name = manifest.stem().string() + (csv ? ".csv" : ".f64");
  const auto data_path = manifest.parent_path() / data_name;
  const auto& m = features.matrix();
  if (csv) {
    std::ofstream out(data_path);
    out << std::setprecision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
      out << '\n';
    }
  } else {
    std::ofstream out(data_path, std::ios::binary);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  nlohmann::json j;
  j["format"] = csv ? "csv" : "f64le";
  j["data"] = data_name;
  j["dim"] = features.dim();
  j["image_ids"] = features.image_ids();
  j["range"] = {features.range().lo, features.range().hi};
  std::ofstream(manifest) << j.dump(2) << '\n';
}

}  // namespace softlabel
