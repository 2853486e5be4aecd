#include <hsfuse/trainer.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace hsfuse::train {

namespace {

constexpr std::uint64_t kMsiSeedOffset = 0x517cc1b727220a95ULL;

net::EncoderSpec hsi_encoder_spec(const RunConfig& cfg, Index bands) {
  return net::EncoderSpec{bands, cfg.hsi_widths, cfg.c, cfg.hidden_activation};
}

net::EncoderSpec msi_encoder_spec(const RunConfig& cfg, Index bands) {
  return net::EncoderSpec{bands, cfg.msi_widths, cfg.c, cfg.hidden_activation};
}

net::DecoderSpec decoder_spec(const RunConfig& cfg, Index bands) {
  return net::DecoderSpec{cfg.decoder_widths, bands};
}

std::vector<std::string> names_with_prefix(const diff::ParamStore& params,
                                           const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& n : params.names()) {
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  }
  return out;
}

void track_simplex(TrainTrace& trace, const Mat& s, double* rowsum_mean) {
  const auto sums = s.rowwise().sum();
  trace.max_rowsum_err = std::max(trace.max_rowsum_err, (sums.array() - 1.0).abs().maxCoeff());
  trace.min_entry = std::min(trace.min_entry, s.minCoeff());
  if (rowsum_mean) *rowsum_mean = sums.mean();
}

}  // namespace

void RunConfig::validate() const {
  if (lambda < 0 || mu < 0) throw ConfigError("lambda and mu must be nonnegative");
  if (hsi_iters <= 0 || msi_iters <= 0) throw ConfigError("iteration counts must be positive");
  if (angle_period < 1) throw ConfigError("angle_period must be >= 1");
  if (step_size <= 0) throw ConfigError("step_size must be positive");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
  if (optimizer != "adam") throw ConfigError("unknown optimizer: " + optimizer);
  if (c < 2) throw ConfigError("representation width c must be >= 2");
  if (early_stop_window <= 0) throw ConfigError("early_stop_window must be positive");
}

void TrainTrace::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write: " + path);
  os << "step,loss_recon,loss_entropy,loss_angle,rowsum_mean\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss_recon,
                  r.loss_entropy, r.loss_angle, r.rowsum_mean);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path);
}

AdamOptimizer::AdamOptimizer(diff::ParamStore& params, std::vector<std::string> names,
                             double step_size, double beta1, double beta2, double eps)
    : params_(params), names_(std::move(names)), lr_(step_size), beta1_(beta1),
      beta2_(beta2), eps_(eps) {
  m_.reserve(names_.size());
  v_.reserve(names_.size());
  for (const auto& n : names_) {
    const Mat& val = params_.at(n).value;
    m_.push_back(Mat::Zero(val.rows(), val.cols()));
    v_.push_back(Mat::Zero(val.rows(), val.cols()));
  }
}

void AdamOptimizer::step(long iteration) {
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(iteration));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(iteration));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    diff::Parameter& p = params_.at(names_[i]);
    if (!p.grad.allFinite()) {
      throw NumericError("non-finite gradient in " + names_[i] + " at step " +
                         std::to_string(iteration));
    }
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

HsiResult train_hsi(const Mat& y_h, diff::ParamStore& params, const RunConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto enc = hsi_encoder_spec(cfg, y_h.cols());
  const auto dec = decoder_spec(cfg, y_h.cols());
  net::init_encoder(params, "he", enc, rng, cfg.repr_mode());
  net::init_decoder(params, "hd", cfg.c, dec, rng);

  std::vector<std::string> subset = names_with_prefix(params, "he.");
  for (const auto& n : names_with_prefix(params, "hd.")) subset.push_back(n);
  AdamOptimizer opt(params, subset, cfg.step_size);

  const loss::Weights w{cfg.lambda, cfg.mu};
  HsiResult out;
  out.trace.min_entry = std::numeric_limits<double>::infinity();

  diff::Tape tape;
  double best = std::numeric_limits<double>::infinity();
  long best_step = 0;
  for (long step = 1; step <= cfg.hsi_iters; ++step) {
    tape.reset();
    params.zero_grad();
    auto fwd = net::hsi_forward(tape, y_h, params, enc, dec, cfg.repr_mode());
    diff::Value recon = loss::reconstruction(tape.leaf(y_h), fwd.yhat);
    diff::Value entropy = loss::entropy_sparsity(fwd.s);
    diff::Value obj = recon;
    if (cfg.use_stick_break) {
      obj = diff::add(obj, diff::scalar_mul(entropy, w.lambda));
    }
    obj = diff::add(obj, diff::scalar_mul(loss::weight_decay(fwd.decoder_weights), w.mu));

    const double obj_val = obj.data()(0, 0);
    if (!std::isfinite(obj_val)) {
      throw NumericError("HSI objective non-finite at step " + std::to_string(step));
    }
    double rowsum_mean = 0.0;
    track_simplex(out.trace, fwd.s.data(), &rowsum_mean);

    tape.backward(obj);
    opt.step(step);
    out.trace.steps_run = step;

    if (step == 1 || step % cfg.log_every == 0 || step == cfg.hsi_iters) {
      out.trace.rows.push_back({step, recon.data()(0, 0), entropy.data()(0, 0),
                                std::numeric_limits<double>::quiet_NaN(), rowsum_mean});
    }
    if (cfg.early_stop_tol > 0.0) {
      if (obj_val < best - cfg.early_stop_tol) {
        best = obj_val;
        best_step = step;
      } else if (step - best_step >= cfg.early_stop_window) {
        break;
      }
    }
  }

  // Final representation with the trained weights.
  tape.reset();
  auto fwd = net::hsi_forward(tape, y_h, params, enc, dec, cfg.repr_mode(),
                              /*attach_encoder=*/false, /*attach_decoder=*/false);
  out.s_h = fwd.s.data();
  return out;
}

MsiResult train_msi(const Mat& y_m, diff::ParamStore& params, const Mat& s_h_upsampled,
                    const Mat& response, const RunConfig& cfg) {
  cfg.validate();
  if (s_h_upsampled.rows() != y_m.rows()) {
    throw ShapeError("train_msi: upsampled representation has " +
                     std::to_string(s_h_upsampled.rows()) + " rows, MSI has " +
                     std::to_string(y_m.rows()));
  }
  std::mt19937_64 rng(cfg.seed + kMsiSeedOffset);
  const auto enc = msi_encoder_spec(cfg, y_m.cols());
  const auto dec = decoder_spec(cfg, response.rows());
  net::init_encoder(params, "me", enc, rng, cfg.repr_mode(),
                    /*uniform_sticks=*/true);

  AdamOptimizer opt(params, names_with_prefix(params, "me."), cfg.step_size);
  const loss::Weights w{cfg.lambda, cfg.mu};

  MsiResult out;
  out.trace.min_entry = std::numeric_limits<double>::infinity();

  diff::Tape tape;
  double best = std::numeric_limits<double>::infinity();
  long best_step = 0;
  for (long step = 1; step <= cfg.msi_iters; ++step) {
    const bool angle_step = cfg.use_angle && (step % cfg.angle_period == 0);
    const bool log_step = (step == 1 || step % cfg.log_every == 0 || step == cfg.msi_iters);

    tape.reset();
    params.zero_grad();
    auto fwd = net::msi_forward(tape, y_m, params, enc, dec, response, cfg.repr_mode());
    diff::Value recon = loss::reconstruction(tape.leaf(y_m), fwd.yhat);
    diff::Value entropy = loss::entropy_sparsity(fwd.s);

    diff::Value obj;
    double angle_val = std::numeric_limits<double>::quiet_NaN();
    if (angle_step) {
      // Step 3 replaces the reconstruction step on its iteration.
      obj = loss::angle_objective(s_h_upsampled, fwd.s);
      angle_val = obj.data()(0, 0);
      out.trace.angle_steps.push_back(step);
    } else {
      obj = recon;
      if (cfg.use_stick_break) obj = diff::add(obj, diff::scalar_mul(entropy, w.lambda));
      if (log_step) {
        angle_val = loss::angle_objective(s_h_upsampled, fwd.s).data()(0, 0);
      }
    }

    const double obj_val = obj.data()(0, 0);
    if (!std::isfinite(obj_val)) {
      throw NumericError("MSI objective non-finite at step " + std::to_string(step));
    }
    double rowsum_mean = 0.0;
    track_simplex(out.trace, fwd.s.data(), &rowsum_mean);

    tape.backward(obj);
    opt.step(step);
    out.trace.steps_run = step;

    if (log_step) {
      out.trace.rows.push_back(
          {step, recon.data()(0, 0), entropy.data()(0, 0), angle_val, rowsum_mean});
    }
    if (cfg.early_stop_tol > 0.0 && !angle_step) {
      if (obj_val < best - cfg.early_stop_tol) {
        best = obj_val;
        best_step = step;
      } else if (step - best_step >= cfg.early_stop_window) {
        break;
      }
    }
  }

  tape.reset();
  auto fwd = net::msi_forward(tape, y_m, params, enc, dec, response, cfg.repr_mode(),
                              /*attach_encoder=*/false);
  out.s_m = fwd.s.data();
  return out;
}

PipelineResult run_pipeline(const data::ImageCube& y_h, const data::ImageCube& y_m,
                            const Mat& response, const RunConfig& cfg) {
  cfg.validate();
  if (y_h.width <= 0 || y_m.width <= 0) throw ConfigError("empty input cube");
  if (y_m.width % y_h.width != 0 || y_m.height % y_h.height != 0) {
    throw ConfigError("MSI dims " + std::to_string(y_m.width) + "x" +
                      std::to_string(y_m.height) + " not an integer multiple of HSI dims " +
                      std::to_string(y_h.width) + "x" + std::to_string(y_h.height));
  }
  const Index rx = y_m.width / y_h.width;
  const Index ry = y_m.height / y_h.height;
  if (rx != ry) {
    throw ConfigError("anisotropic spatial ratio " + std::to_string(rx) + " vs " +
                      std::to_string(ry));
  }
  if (response.rows() != y_h.bands || response.cols() != y_m.bands) {
    throw ConfigError("response is " + shape_str(response) + ", expected " +
                      std::to_string(y_h.bands) + "x" + std::to_string(y_m.bands));
  }

  PipelineResult out;
  const Mat yh = data::unfold(y_h);
  const Mat ym = data::unfold(y_m);

  auto hsi = train_hsi(yh, out.params, cfg);
  out.s_h = std::move(hsi.s_h);
  out.hsi_trace = std::move(hsi.trace);

  const Mat s_h_up = loss::duplicate_upsample(out.s_h, y_h.width, y_h.height, rx);
  auto msi = train_msi(ym, out.params, s_h_up, response, cfg);
  out.s_m = std::move(msi.s_m);
  out.msi_trace = std::move(msi.trace);

  out.phi_h = net::extract_basis(out.params, "hd", decoder_spec(cfg, y_h.bands));
  Mat x = net::fuse(out.s_m, out.phi_h);
  x = x.cwiseMax(0.0).cwiseMin(1.0);
  out.x = data::fold(x, y_m.width, y_m.height);
  return out;
}

GradCheckSummary check_gradients(std::uint64_t seed, double h, double tol) {
  RunConfig cfg;
  cfg.c = 5;
  cfg.seed = seed;

  const Index pixels = 20, L = 31, l = 3;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.05, 0.95);

  Mat y_h(pixels, L), y_m(pixels, l);
  for (Index i = 0; i < pixels; ++i) {
    for (Index j = 0; j < L; ++j) y_h(i, j) = unit(rng);
    for (Index j = 0; j < l; ++j) y_m(i, j) = unit(rng);
  }
  Mat response(L, l);
  for (Index i = 0; i < L; ++i)
    for (Index j = 0; j < l; ++j) response(i, j) = unit(rng);
  for (Index j = 0; j < l; ++j) response.col(j) /= response.col(j).sum();

  const auto he = hsi_encoder_spec(cfg, L);
  const auto me = msi_encoder_spec(cfg, l);
  const auto dec = decoder_spec(cfg, L);

  diff::ParamStore params;
  std::mt19937_64 init_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  net::init_encoder(params, "he", he, init_rng);
  net::init_decoder(params, "hd", cfg.c, dec, init_rng);
  net::init_encoder(params, "me", me, init_rng);

  const loss::Weights w{cfg.lambda, cfg.mu};

  // Constant angle target: the HSI representation at the initial weights.
  Mat s_h_const;
  {
    diff::Tape tape;
    auto fwd = net::hsi_forward(tape, y_h, params, he, dec, net::ReprMode::kSimplex,
                                /*attach_encoder=*/false, /*attach_decoder=*/false);
    s_h_const = fwd.s.data();
  }

  GradCheckSummary out;

  auto hsi_names = names_with_prefix(params, "he.");
  for (const auto& n : names_with_prefix(params, "hd.")) hsi_names.push_back(n);
  out.hsi = diff::finite_diff_check(
      [&](diff::Tape& t, diff::ParamStore& p) {
        auto fwd = net::hsi_forward(t, y_h, p, he, dec);
        return loss::hsi_objective(t.leaf(y_h), fwd.yhat, fwd.s, fwd.decoder_weights, w);
      },
      params, h, tol, hsi_names);

  const auto msi_names = names_with_prefix(params, "me.");
  params.zero_grad();
  out.msi = diff::finite_diff_check(
      [&](diff::Tape& t, diff::ParamStore& p) {
        auto fwd = net::msi_forward(t, y_m, p, me, dec, response);
        return loss::msi_objective(t.leaf(y_m), fwd.yhat, fwd.s, w);
      },
      params, h, tol, msi_names);
  // Freeze contract: the MSI objective must leave the decoder slots untouched.
  for (const auto& n : names_with_prefix(params, "hd.")) {
    out.frozen_decoder_grad =
        std::max(out.frozen_decoder_grad, params.at(n).grad.cwiseAbs().maxCoeff());
  }

  params.zero_grad();
  out.angle = diff::finite_diff_check(
      [&](diff::Tape& t, diff::ParamStore& p) {
        auto fwd = net::msi_forward(t, y_m, p, me, dec, response);
        return loss::angle_objective(s_h_const, fwd.s);
      },
      params, h, tol, msi_names);
  for (const auto& n : names_with_prefix(params, "hd.")) {
    out.frozen_decoder_grad =
        std::max(out.frozen_decoder_grad, params.at(n).grad.cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace hsfuse::train
