#ifndef HSFUSE_TRAINER_HPP
#define HSFUSE_TRAINER_HPP

#include <hsfuse/data.hpp>
#include <hsfuse/losses.hpp>
#include <hsfuse/networks.hpp>

#include <cstdint>
#include <string>
#include <vector>

// Three-step alternating optimization: Step 1 fits the HSI network (encoder +
// decoder), Step 2 fits the MSI encoder against the frozen shared decoder,
// Step 3 minimizes the angular difference between the representations every
// angle_period-th iteration (replacing the reconstruction step there).

namespace hsfuse::train {

struct RunConfig {
  double lambda = 1e-6;          // sparsity weight
  double mu = 1e-6;              // decoder weight-decay weight
  long hsi_iters = 10000;
  long msi_iters = 10000;
  long angle_period = 10;
  std::string optimizer = "adam";
  double step_size = 1e-3;
  std::uint64_t seed = 0;
  long log_every = 100;
  double early_stop_tol = 0.0;   // 0 disables early stopping
  long early_stop_window = 500;

  // Architecture (defaults follow the published layer table).
  Index c = 10;
  std::vector<Index> hsi_widths{10, 10, 10};
  std::vector<Index> msi_widths{4, 5, 7, 9, 10};
  std::vector<Index> decoder_widths{10, 10};
  std::string hidden_activation = "sigmoid";

  // Ablation switches.
  bool use_stick_break = true;  // false: plain sigmoid bottleneck, no entropy term
  bool use_angle = true;        // false: no Step-3 angle iterations

  void validate() const;
  net::ReprMode repr_mode() const {
    return use_stick_break ? net::ReprMode::kSimplex : net::ReprMode::kSigmoid;
  }
};

struct TraceRow {
  long step = 0;
  double loss_recon = 0.0;
  double loss_entropy = 0.0;
  double loss_angle = 0.0;   // NaN when not evaluated at this step
  double rowsum_mean = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  std::vector<long> angle_steps;       // 1-based iteration indices of Step-3 updates
  double max_rowsum_err = 0.0;         // max |sum(row)-1| across every iteration
  double min_entry = 0.0;              // min representation entry across every iteration
  long steps_run = 0;

  void write_csv(const std::string& path) const;
};

// Adaptive-moment optimizer over a named parameter subset. Raises
// NumericError naming the parameter on any non-finite gradient.
class AdamOptimizer {
 public:
  AdamOptimizer(diff::ParamStore& params, std::vector<std::string> names, double step_size,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(long iteration);  // 1-based, drives bias correction

 private:
  diff::ParamStore& params_;
  std::vector<std::string> names_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<Mat> m_, v_;
};

struct HsiResult {
  Mat s_h;           // final representation of the LR HSI
  TrainTrace trace;
};

struct MsiResult {
  Mat s_m;
  TrainTrace trace;
};

// Initializes he.*/hd.* in `params` (must not already exist) and minimizes the
// HSI objective over them, full batch.
HsiResult train_hsi(const Mat& y_h, diff::ParamStore& params, const RunConfig& cfg);

// Initializes me.* and minimizes the MSI objective over it with hd.* frozen.
// s_h_upsampled is the duplicated HSI representation (constant angle target).
MsiResult train_msi(const Mat& y_m, diff::ParamStore& params, const Mat& s_h_upsampled,
                    const Mat& response, const RunConfig& cfg);

struct PipelineResult {
  data::ImageCube x;       // fused HR HSI, clamped to [0,1]
  Mat s_h, s_m, phi_h;
  TrainTrace hsi_trace, msi_trace;
  diff::ParamStore params;
};

PipelineResult run_pipeline(const data::ImageCube& y_h, const data::ImageCube& y_m,
                            const Mat& response, const RunConfig& cfg);

// Finite-difference verification of the three objectives on a fixed random
// instance (c=5, 20 pixels, 31 hyperspectral / 3 multispectral bands).
struct GradCheckSummary {
  diff::GradCheckReport hsi, msi, angle;
  double frozen_decoder_grad = 0.0;  // max |grad| on hd.* under the MSI/angle objectives
  bool passed(double tol) const {
    return hsi.max_error < tol && msi.max_error < tol && angle.max_error < tol &&
           frozen_decoder_grad == 0.0;
  }
};

GradCheckSummary check_gradients(std::uint64_t seed, double h = 1e-5, double tol = 1e-5);

}  // namespace hsfuse::train

#endif
