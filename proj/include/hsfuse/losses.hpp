#ifndef HSFUSE_LOSSES_HPP
#define HSFUSE_LOSSES_HPP

#include <hsfuse/diffcore.hpp>

#include <vector>

// Scalar loss terms and the composite objectives of the two coupled networks:
// Frobenius reconstruction, generalized Shannon entropy sparsity, normalized
// angular difference between representations, and decoder weight decay.

namespace hsfuse::loss {

using diff::Value;

struct Weights {
  double lambda = 1e-6;  // sparsity weight
  double mu = 1e-6;      // decoder weight-decay weight
};

// 0.5 * ||y - yhat||_F^2, unnormalized.
Value reconstruction(const Value& y, const Value& yhat);

// Mean over rows of H_p(s) = -sum_j q_j log q_j with q_j = |s_j|^p / ||s||_p^p.
// The 0*log(0) convention is implemented by a 1e-12 floor inside the log
// argument only. Rows are expected nonnegative.
Value entropy_sparsity(const Value& s, double p = 1.0);

// Copies each LR pixel's row to the r x r block of HR pixels it covers.
// Row order matches data::unfold (row = y*width + x).
Mat duplicate_upsample(const Mat& s_lr, Index lr_width, Index lr_height, Index factor);

// (1/pi) * mean_i arccos(<a_i, b_i> / (||a_i|| ||b_i||)), in [0,1].
Value angle_similarity(const Value& a, const Value& b);

// Sum of squared Frobenius norms of the decoder weight matrices.
Value weight_decay(const std::vector<Value>& decoder_weights);

// reconstruction + lambda * H_1(s) + mu * decay
Value hsi_objective(const Value& y, const Value& yhat, const Value& s,
                    const std::vector<Value>& decoder_weights, const Weights& w);

// reconstruction + lambda * H_1(s); no decay term
Value msi_objective(const Value& y, const Value& yhat, const Value& s, const Weights& w);

// Angular difference between the (detached, upsampled) HSI representation and
// the live MSI representation. s_h enters as a constant: only the MSI encoder
// receives gradients from this objective.
Value angle_objective(const Mat& s_h_upsampled, const Value& s_m);

}  // namespace hsfuse::loss

#endif
