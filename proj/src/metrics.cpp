#include <hsfuse/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hsfuse::metrics {

namespace {
constexpr double kPi = 3.14159265358979323846;

void require_same_dims(const data::ImageCube& a, const data::ImageCube& b, const char* op) {
  if (a.width != b.width || a.height != b.height || a.bands != b.bands) {
    throw ShapeError(std::string(op) + ": " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + "x" + std::to_string(a.bands) + " vs " +
                     std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                     std::to_string(b.bands));
  }
}
}  // namespace

std::pair<double, double> rmse(const data::ImageCube& est, const data::ImageCube& ref) {
  require_same_dims(est, ref, "rmse");
  double acc = 0.0;
  const std::size_t n = est.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = est.values[i] - ref.values[i];
    acc += d * d;
  }
  const double unit = std::sqrt(acc / static_cast<double>(n));
  return {unit, 255.0 * unit};
}

double sam(const data::ImageCube& est, const data::ImageCube& ref, Index* zero_excluded) {
  require_same_dims(est, ref, "sam");
  const Index pixels = est.pixels();
  const Index bands = est.bands;
  double acc = 0.0;
  Index counted = 0, skipped = 0;
  for (Index p = 0; p < pixels; ++p) {
    const double* a = est.values.data() + static_cast<std::size_t>(p) * bands;
    const double* b = ref.values.data() + static_cast<std::size_t>(p) * bands;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Index k = 0; k < bands; ++k) {
      dot += a[k] * b[k];
      na += a[k] * a[k];
      nb += b[k] * b[k];
    }
    if (na == 0.0 || nb == 0.0) {
      ++skipped;
      continue;
    }
    const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    acc += std::acos(cosine);
    ++counted;
  }
  if (zero_excluded) *zero_excluded = skipped;
  if (counted == 0) return 0.0;
  return (acc / static_cast<double>(counted)) * (180.0 / kPi);
}

EvalReport evaluate(const data::ImageCube& est, const data::ImageCube& ref) {
  EvalReport r;
  auto [unit, eightbit] = rmse(est, ref);
  r.rmse_unit = unit;
  r.rmse_8bit = eightbit;
  r.sam_degrees = sam(est, ref, &r.zero_excluded);
  r.pixels = est.pixels();
  r.bands = est.bands;
  return r;
}

void write_report_csv(const EvalReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write: " + path);
  os << "rmse_unit,rmse_8bit,sam_degrees,pixels,bands,zero_excluded\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%lld,%lld,%lld\n", r.rmse_unit,
                r.rmse_8bit, r.sam_degrees, static_cast<long long>(r.pixels),
                static_cast<long long>(r.bands), static_cast<long long>(r.zero_excluded));
  os << buf;
  if (!os) throw IoError("write failed: " + path);
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os << "RMSE (8-bit scale): " << r.rmse_8bit << "\n"
     << "RMSE (unit scale):  " << r.rmse_unit << "\n"
     << "SAM (degrees):      " << r.sam_degrees << "\n"
     << "pixels: " << r.pixels << "  bands: " << r.bands
     << "  zero-spectrum pixels excluded from SAM: " << r.zero_excluded << "\n";
  return os.str();
}

}  // namespace hsfuse::metrics
