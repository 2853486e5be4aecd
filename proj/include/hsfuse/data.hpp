#ifndef HSFUSE_DATA_HPP
#define HSFUSE_DATA_HPP

#include <hsfuse/types.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Image-cube model, unfold/fold, degradation operators, synthetic dataset
// generation and file I/O.
//
// Cube container ("HSC1"): 4-byte magic, three little-endian u32 dims
// (width, height, bands), then a row-major (y, x, band) float32 payload.

namespace hsfuse::data {

struct ImageCube {
  Index width = 0, height = 0, bands = 0;
  std::vector<double> values;  // (y * width + x) * bands + band

  ImageCube() = default;
  ImageCube(Index w, Index h, Index b)
      : width(w), height(h), bands(b),
        values(static_cast<std::size_t>(w) * h * b, 0.0) {}

  double& at(Index x, Index y, Index band) {
    return values[static_cast<std::size_t>((y * width + x) * bands + band)];
  }
  double at(Index x, Index y, Index band) const {
    return values[static_cast<std::size_t>((y * width + x) * bands + band)];
  }
  Index pixels() const { return width * height; }
};

// Unfold to [pixels x bands]; row index = y*width + x. fold is the inverse.
Mat unfold(const ImageCube& cube);
ImageCube fold(const Mat& m, Index width, Index height);

// Each LR value is the mean of its r x r HR block, per band.
ImageCube block_downsample(const ImageCube& hr, Index r);

// Per-pixel spectrum right-multiplied by R (bands_in x bands_out).
ImageCube apply_spectral_response(const ImageCube& cube, const Mat& response);

struct SynthSpec {
  Index width = 64, height = 64, bands = 31;
  Index ratio = 8;       // spatial downsampling factor
  Index msi_bands = 3;
  Index c_true = 5;      // generating endmember count
  Index sparsity = 3;    // max active endmembers per pixel
  Index smoothness = 2;  // spatial box-blur radius for abundances
  double concentration = 0.3;
  std::uint64_t seed = 0;
};

struct SynthData {
  ImageCube hr_hsi, lr_hsi, hr_msi;
  Mat phi_true;   // [c_true x bands] smooth nonnegative spectra, row max 1
  Mat s_true;     // [pixels x c_true] simplex rows, <= sparsity nonzeros
  Mat response;   // [bands x msi_bands], columns sum to 1
};

SynthData synth_generate(const SynthSpec& spec);

// Load clamps values into [0,1]; the number of clamped entries is reported
// through `clamped` when supplied. NaN payloads and truncated files raise
// IoError with the failing byte offset.
ImageCube load_cube(const std::string& path, std::size_t* clamped = nullptr);
void save_cube(const ImageCube& cube, const std::string& path);

// CSV with bands rows x l columns, optional header line. Entries must be
// nonnegative and columns must have positive sum; columns are normalized to
// sum 1 on load.
Mat load_response(const std::string& path);

// Named matrix sections, each stored as an HSC1 record (width = cols,
// height = rows, bands = 1). Used for checkpoints and ground-truth factors.
void save_sections(const std::vector<std::pair<std::string, Mat>>& sections,
                   const std::string& path);
std::vector<std::pair<std::string, Mat>> load_sections(const std::string& path);

// 8-bit grayscale PNG of one band, [0,1] mapped linearly onto [0,255].
void save_band_png(const ImageCube& cube, Index band, const std::string& path);

// CRC32 of a file's bytes (manifest checksums).
std::uint32_t file_crc32(const std::string& path);

}  // namespace hsfuse::data

#endif
