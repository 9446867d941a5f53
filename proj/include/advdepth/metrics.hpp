#pragma once

#include "advdepth/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advdepth {

/// Depth error/accuracy statistics over the valid pixels of one evaluation.
struct MetricsReport {
  double rel = 0.0;
  double sq_rel = 0.0;
  double log10 = 0.0;
  double rms = 0.0;
  double rms_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  long n_pixels = 0;
  /// Valid pixels whose prediction was <= 0 and got clamped to 1e-3 m.
  long clamped_pixels = 0;

  bool operator==(const MetricsReport&) const = default;
};

/// Predictions at or below zero are clamped to this value (meters).
inline constexpr double kMinPredictedDepth = 1e-3;

/// Running sums over any number of depth maps; report() divides by the total
/// valid-pixel count, so a dataset aggregate weights every pixel equally.
class MetricsAccumulator {
 public:
  /// `valid` (optional, same size) selects pixels; y_gt must be > 0 there.
  template <typename Scalar>
  void add(const Tensor<Scalar>& y_est, const Tensor<Scalar>& y_gt, const std::vector<bool>* valid = nullptr);

  MetricsReport report() const;
  long count() const noexcept { return n_; }

 private:
  double abs_rel_ = 0, sq_rel_ = 0, log10_ = 0, sq_ = 0, sq_log_ = 0;
  long d1_ = 0, d2_ = 0, d3_ = 0, n_ = 0, clamped_ = 0;
};

template <typename Scalar>
MetricsReport compute_metrics(const Tensor<Scalar>& y_est, const Tensor<Scalar>& y_gt,
                              const std::vector<bool>* valid = nullptr) {
  MetricsAccumulator acc;
  acc.add(y_est, y_gt, valid);
  return acc.report();
}

/// Mask of pixels with 0 < y_gt (and y_gt <= cap when a cap is given).
template <typename Scalar>
std::vector<bool> valid_depth_mask(const Tensor<Scalar>& y_gt, std::optional<double> depth_cap = std::nullopt);

enum class ReportFormat { csv_row, human_table };

/// csv_row: rel,sq_rel,log10,rms,rms_log,delta1,delta2,delta3,n_pixels with
/// shortest round-trip number formatting. human_table: aligned columns with
/// lower/higher-is-better markers.
std::string serialize_report(const MetricsReport& r, ReportFormat format);
inline constexpr const char* kReportCsvHeader = "rel,sq_rel,log10,rms,rms_log,d1,d2,d3,n_pixels";
MetricsReport parse_report_csv(const std::string& row);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace advdepth
