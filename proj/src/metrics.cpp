#include "advdepth/metrics.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace advdepth {

template <typename S>
void MetricsAccumulator::add(const Tensor<S>& y_est, const Tensor<S>& y_gt, const std::vector<bool>* valid) {
  if (y_est.size() != y_gt.size())
    throw DimensionError("shape", "prediction " + shape_str(y_est.shape()) + " vs ground truth " + shape_str(y_gt.shape()));
  if (valid && static_cast<Index>(valid->size()) != y_gt.size())
    throw DimensionError("mask", "mask size does not match depth map " + shape_str(y_gt.shape()));
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (Index i = 0; i < y_gt.size(); ++i) {
    if (valid && !(*valid)[static_cast<std::size_t>(i)]) continue;
    const double gt = static_cast<double>(y_gt[i]);
    if (!(gt > 0.0)) throw InvalidArgument("ground-truth depth must be positive on valid pixels");
    double est = static_cast<double>(y_est[i]);
    const double diff = gt - est;
    abs_rel_ += std::abs(diff) / gt;
    sq_rel_ += diff * diff / gt;
    sq_ += diff * diff;
    if (!(est > 0.0)) {
      est = kMinPredictedDepth;
      ++clamped_;
    }
    log10_ += std::abs(std::log10(gt) - std::log10(est));
    const double dl = std::log(gt) - std::log(est);
    sq_log_ += dl * dl;
    const double ratio = std::max(est / gt, gt / est);
    d1_ += ratio < t1;
    d2_ += ratio < t2;
    d3_ += ratio < t3;
    ++n_;
  }
}

MetricsReport MetricsAccumulator::report() const {
  if (n_ < 1) throw InvalidArgument("no valid pixels to evaluate");
  const double n = static_cast<double>(n_);
  MetricsReport r;
  r.rel = abs_rel_ / n;
  r.sq_rel = sq_rel_ / n;
  r.log10 = log10_ / n;
  r.rms = std::sqrt(sq_ / n);
  r.rms_log = std::sqrt(sq_log_ / n);
  r.delta1 = static_cast<double>(d1_) / n;
  r.delta2 = static_cast<double>(d2_) / n;
  r.delta3 = static_cast<double>(d3_) / n;
  r.n_pixels = n_;
  r.clamped_pixels = clamped_;
  return r;
}

template <typename S>
std::vector<bool> valid_depth_mask(const Tensor<S>& y_gt, std::optional<double> depth_cap) {
  std::vector<bool> m(static_cast<std::size_t>(y_gt.size()));
  for (Index i = 0; i < y_gt.size(); ++i) {
    const double d = static_cast<double>(y_gt[i]);
    m[static_cast<std::size_t>(i)] = d > 0.0 && (!depth_cap || d <= *depth_cap);
  }
  return m;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

std::string serialize_report(const MetricsReport& r, ReportFormat format) {
  std::ostringstream os;
  if (format == ReportFormat::csv_row) {
    os << format_double(r.rel) << ',' << format_double(r.sq_rel) << ',' << format_double(r.log10) << ','
       << format_double(r.rms) << ',' << format_double(r.rms_log) << ',' << format_double(r.delta1) << ','
       << format_double(r.delta2) << ',' << format_double(r.delta3) << ',' << r.n_pixels;
    return os.str();
  }
  const char* heads[] = {"rel ↓", "log10 ↓", "rms ↓", "δ<1.25 ↑", "δ<1.25² ↑",
                         "δ<1.25³ ↑"};
  const double vals[] = {r.rel, r.log10, r.rms, r.delta1, r.delta2, r.delta3};
  os << "|";
  for (const char* h : heads) os << ' ' << h << " |";
  os << "\n|";
  for (double v : vals) os << ' ' << std::fixed << std::setprecision(4) << v << " |";
  os << "\nsq_rel ↓ " << std::setprecision(4) << r.sq_rel << "   rms_log ↓ " << r.rms_log
     << "   pixels " << r.n_pixels << '\n';
  return os.str();
}

MetricsReport parse_report_csv(const std::string& row) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : row) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (c != '\n' && c != '\r') {
      cur += c;
    }
  }
  f.push_back(cur);
  if (f.size() != 9) throw InvalidArgument("metrics csv row needs 9 fields, got " + std::to_string(f.size()));
  auto num = [](const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument("bad number in metrics row: " + s);
    return v;
  };
  MetricsReport r;
  r.rel = num(f[0]);
  r.sq_rel = num(f[1]);
  r.log10 = num(f[2]);
  r.rms = num(f[3]);
  r.rms_log = num(f[4]);
  r.delta1 = num(f[5]);
  r.delta2 = num(f[6]);
  r.delta3 = num(f[7]);
  r.n_pixels = std::stol(f[8]);
  return r;
}

template void MetricsAccumulator::add(const Tensor<float>&, const Tensor<float>&, const std::vector<bool>*);
template void MetricsAccumulator::add(const Tensor<double>&, const Tensor<double>&, const std::vector<bool>*);
template std::vector<bool> valid_depth_mask(const Tensor<float>&, std::optional<double>);
template std::vector<bool> valid_depth_mask(const Tensor<double>&, std::optional<double>);

}  // namespace advdepth
