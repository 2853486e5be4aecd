#ifndef HSFUSE_METRICS_HPP
#define HSFUSE_METRICS_HPP

#include <hsfuse/data.hpp>

#include <string>

namespace hsfuse::metrics {

struct EvalReport {
  double rmse_unit = 0.0;
  double rmse_8bit = 0.0;     // exactly 255 * rmse_unit
  double sam_degrees = 0.0;   // mean per-pixel spectral angle
  Index pixels = 0;
  Index bands = 0;
  Index zero_excluded = 0;    // pixels skipped in SAM (zero spectrum on either side)
};

// sqrt of the mean squared difference over all voxels; (unit, 8-bit) scales.
std::pair<double, double> rmse(const data::ImageCube& est, const data::ImageCube& ref);

// Mean over pixels of arccos(<est, ref> / (||est|| ||ref||)) in degrees.
// Scale-invariant; pixels with a zero spectrum on either side are excluded
// (count reported via EvalReport). The cosine is clamped to [-1, 1] exactly:
// identical spectra score 0, unlike the gradient-bearing arccos primitive
// which keeps a 1e-12 margin.
double sam(const data::ImageCube& est, const data::ImageCube& ref,
           Index* zero_excluded = nullptr);

EvalReport evaluate(const data::ImageCube& est, const data::ImageCube& ref);

void write_report_csv(const EvalReport& report, const std::string& path);
std::string report_text(const EvalReport& report);

}  // namespace hsfuse::metrics

#endif
