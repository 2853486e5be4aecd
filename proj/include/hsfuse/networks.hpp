#ifndef HSFUSE_NETWORKS_HPP
#define HSFUSE_NETWORKS_HPP

#include <hsfuse/diffcore.hpp>
#include <hsfuse/stickbreak.hpp>

#include <optional>
#include <random>
#include <string>
#include <vector>

// The two coupled networks: densely-connected encoders (each layer receives
// the weighted sum of all preceding layers, the raw input counting as layer
// zero), a stick-breaking representation head, and a shared linear bias-free
// decoder whose weight product is the spectral basis.

namespace hsfuse::net {

using diff::ParamStore;
using diff::Tape;
using diff::Value;

enum class ReprMode {
  kSimplex,  // stick-breaking head, rows on the probability simplex
  kSigmoid,  // plain sigmoid bottleneck (ablation variant)
};

struct EncoderSpec {
  Index input_width = 0;
  std::vector<Index> hidden_widths;
  Index c = 10;  // representation width
  std::string activation = "sigmoid";  // sigmoid | softplus
};

struct DecoderSpec {
  std::vector<Index> hidden_widths{10, 10};
  Index output_width = 0;  // L
};

// Parameter naming: <prefix>.W<j>_<k> (source layer j -> layer k, j=0 is the
// input), <prefix>.b<k>, heads <prefix>.Wu/bu/Wb/bb. Decoder: <prefix>.W<i>.
// `uniform_sticks` biases the u head so the break fractions open uniform
// (1/c each); otherwise the head starts at u = 1/2.
void init_encoder(ParamStore& params, const std::string& prefix, const EncoderSpec& spec,
                  std::mt19937_64& rng, ReprMode mode = ReprMode::kSimplex,
                  bool uniform_sticks = false);
void init_decoder(ParamStore& params, const std::string& prefix, Index c,
                  const DecoderSpec& spec, std::mt19937_64& rng);

// Returns the activated output of the last hidden layer.
Value encoder_forward(Tape& tape, const Value& input, ParamStore& params,
                      const std::string& prefix, const EncoderSpec& spec, bool attach);

// Pushes s through the decoder chain. `attach` controls whether the decoder
// weights participate in the gradient (frozen when false).
Value decoder_forward(Tape& tape, const Value& s, ParamStore& params,
                      const std::string& prefix, const DecoderSpec& spec, Index c,
                      bool attach, std::vector<Value>* weights_out = nullptr);

struct ForwardResult {
  Value s;     // representation
  Value yhat;  // reconstruction
  std::optional<stick::HeadOutput> head;  // present in simplex mode
  std::vector<Value> decoder_weights;     // populated when the decoder is attached
};

ForwardResult hsi_forward(Tape& tape, const Mat& y_h, ParamStore& params,
                          const EncoderSpec& enc, const DecoderSpec& dec,
                          ReprMode mode = ReprMode::kSimplex, bool attach_encoder = true,
                          bool attach_decoder = true);

// Decoder weights always enter frozen; yhat = decode(s_m) * R.
ForwardResult msi_forward(Tape& tape, const Mat& y_m, ParamStore& params,
                          const EncoderSpec& enc, const DecoderSpec& dec, const Mat& response,
                          ReprMode mode = ReprMode::kSimplex, bool attach_encoder = true);

// Explicit product of the decoder weight matrices; row i is the spectral
// signature of basis i.
Mat extract_basis(const ParamStore& params, const std::string& prefix,
                  const DecoderSpec& spec);

// X = S_m * Phi_h. Caller folds to a cube and clamps for export.
Mat fuse(const Mat& s_m, const Mat& phi_h);

}  // namespace hsfuse::net

#endif
