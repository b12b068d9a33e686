#pragma once

// Feature matrices with a JSON sidecar manifest:
//   {"format": "csv" | "f64le", "data": "<path relative to manifest>",
//    "dim": D, "image_ids": [...], "range": [lo, hi]}
// CSV data holds one row of D numbers per image, in manifest order.
// f64le data is the row-major N x D matrix as little-endian doubles.

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "softlabel/model.hpp"

namespace softlabel {

enum class FeatureFormat { Csv, F64Le };

class FeatureMatrix {
public:
  FeatureMatrix(std::vector<std::string> image_ids, Eigen::MatrixXd rows, FeatureRange range);

  std::size_t size() const noexcept { return image_ids_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(rows_.cols()); }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const FeatureRange& range() const noexcept { return range_; }
  Eigen::VectorXd row(std::size_t i) const { return rows_.row(static_cast<Eigen::Index>(i)); }
  std::optional<std::size_t> find(const std::string& image_id) const;
  const Eigen::MatrixXd& matrix() const noexcept { return rows_; }

private:
  std::vector<std::string> image_ids_;
  Eigen::MatrixXd rows_;
  FeatureRange range_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

FeatureMatrix load_features(const std::filesystem::path& manifest);
/// Writes `<stem>.csv` or `<stem>.f64` next to the manifest.
void save_features(const FeatureMatrix& features, const std::filesystem::path& manifest,
                   FeatureFormat format = FeatureFormat::Csv);

}  // namespace softlabel
