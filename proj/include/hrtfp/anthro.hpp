#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace hrtfp {

/// Default head and torso measurement column names, x1..x13.
std::vector<std::string> default_anthro_columns();

/// Head/torso measurements of one subject, meters.
struct AnthroRecord {
  std::string subject_id;
  std::vector<std::string> names;
  Eigen::VectorXd values;

  /// Throws DomainError if the measurement is absent.
  double get(const std::string& name) const;
};

/// radius = cw * w/2 + ch * h/2 + cd * d/2 + offset with w, h, d the named
/// head width, height and depth.
struct HeadRadiusModel {
  std::string width = "x1";
  std::string height = "x2";
  std::string depth = "x3";
  double width_coeff = 0.51;
  double height_coeff = 0.019;
  double depth_coeff = 0.18;
  double offset = 0.032;
};

double equivalent_head_radius(const AnthroRecord& anthro, const HeadRadiusModel& model = {});
/// radius(subject) / radius(reference).
double normalization_factor(const AnthroRecord& subject, const AnthroRecord& reference,
                            const HeadRadiusModel& model = {});

/// CSV with header "subject_id,<names...>". Reading keeps only `columns`, in
/// that order, and fails on missing columns or non-positive values.
void write_anthro_csv(const std::filesystem::path& path, const std::vector<AnthroRecord>& rows);
std::vector<AnthroRecord> read_anthro_csv(const std::filesystem::path& path,
                                          const std::vector<std::string>& columns);

}  // namespace hrtfp
