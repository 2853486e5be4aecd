#include <hsfuse/data.hpp>

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace hsfuse::data {

namespace {

constexpr char kCubeMagic[4] = {'H', 'S', 'C', '1'};
constexpr char kSectionsMagic[4] = {'H', 'S', 'P', 'K'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError(path + ": truncated at byte " + std::to_string(offset));
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_cube_record(std::ostream& os, Index width, Index height, Index bands,
                       const double* values) {
  os.write(kCubeMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(width));
  write_u32(os, static_cast<std::uint32_t>(height));
  write_u32(os, static_cast<std::uint32_t>(bands));
  const std::size_t n = static_cast<std::size_t>(width) * height * bands;
  std::vector<float> payload(n);
  for (std::size_t i = 0; i < n; ++i) payload[i] = static_cast<float>(values[i]);
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
}

ImageCube read_cube_record(std::istream& is, const std::string& path, std::size_t base,
                           std::size_t* clamped) {
  char magic[4];
  if (!is.read(magic, 4)) throw IoError(path + ": truncated at byte " + std::to_string(base));
  if (std::memcmp(magic, kCubeMagic, 4) != 0) {
    throw IoError(path + ": bad magic at byte " + std::to_string(base));
  }
  const std::uint32_t w = read_u32(is, path, base + 4);
  const std::uint32_t h = read_u32(is, path, base + 8);
  const std::uint32_t b = read_u32(is, path, base + 12);
  if (w == 0 || h == 0 || b == 0) {
    throw IoError(path + ": zero dimension in header at byte " + std::to_string(base + 4));
  }
  ImageCube cube(w, h, b);
  const std::size_t n = cube.values.size();
  std::vector<float> payload(n);
  if (!is.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(n * sizeof(float)))) {
    const std::size_t got = static_cast<std::size_t>(is.gcount());
    throw IoError(path + ": truncated payload at byte " + std::to_string(base + 16 + got));
  }
  std::size_t nclamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const float f = payload[i];
    if (std::isnan(f)) {
      throw IoError(path + ": NaN at byte " + std::to_string(base + 16 + i * sizeof(float)));
    }
    double v = static_cast<double>(f);
    if (v < 0.0 || v > 1.0) {
      v = std::clamp(v, 0.0, 1.0);
      ++nclamped;
    }
    cube.values[i] = v;
  }
  if (clamped) *clamped += nclamped;
  return cube;
}

}  // namespace

Mat unfold(const ImageCube& cube) {
  Mat m(cube.pixels(), cube.bands);
  // Payload order (y, x, band) matches row-major (pixel, band) exactly.
  std::memcpy(m.data(), cube.values.data(), cube.values.size() * sizeof(double));
  return m;
}

ImageCube fold(const Mat& m, Index width, Index height) {
  if (m.rows() != width * height) {
    throw ShapeError("fold: " + std::to_string(m.rows()) + " rows != " +
                     std::to_string(width) + "*" + std::to_string(height));
  }
  ImageCube cube(width, height, m.cols());
  std::memcpy(cube.values.data(), m.data(), cube.values.size() * sizeof(double));
  return cube;
}

ImageCube block_downsample(const ImageCube& hr, Index r) {
  if (r < 1 || hr.width % r != 0 || hr.height % r != 0) {
    throw ConfigError("block_downsample: factor " + std::to_string(r) +
                      " does not divide " + std::to_string(hr.width) + "x" +
                      std::to_string(hr.height));
  }
  ImageCube lr(hr.width / r, hr.height / r, hr.bands);
  const double inv = 1.0 / static_cast<double>(r * r);
  for (Index y = 0; y < lr.height; ++y) {
    for (Index x = 0; x < lr.width; ++x) {
      for (Index b = 0; b < lr.bands; ++b) {
        double acc = 0.0;
        for (Index dy = 0; dy < r; ++dy)
          for (Index dx = 0; dx < r; ++dx) acc += hr.at(x * r + dx, y * r + dy, b);
        lr.at(x, y, b) = acc * inv;
      }
    }
  }
  return lr;
}

ImageCube apply_spectral_response(const ImageCube& cube, const Mat& response) {
  if (response.rows() != cube.bands) {
    throw ShapeError("apply_spectral_response: response " + shape_str(response) +
                     " vs " + std::to_string(cube.bands) + " bands");
  }
  return fold(unfold(cube) * response, cube.width, cube.height);
}

SynthData synth_generate(const SynthSpec& spec) {
  if (spec.c_true > spec.bands) throw ConfigError("synth: c_true exceeds band count");
  if (spec.ratio < 1 || spec.width % spec.ratio != 0 || spec.height % spec.ratio != 0) {
    throw ConfigError("synth: ratio must divide width and height");
  }
  if (spec.sparsity < 1 || spec.sparsity > spec.c_true) {
    throw ConfigError("synth: sparsity must be in [1, c_true]");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthData out;

  // Endmember spectra: sums of Gaussian bumps over the band axis, plus a
  // small floor, scaled to row max 1.
  out.phi_true = Mat::Zero(spec.c_true, spec.bands);
  for (Index e = 0; e < spec.c_true; ++e) {
    const int bumps = 2 + static_cast<int>(rng() % 3);
    for (int k = 0; k < bumps; ++k) {
      const double amp = 0.3 + 0.7 * unit(rng);
      const double center = unit(rng) * static_cast<double>(spec.bands - 1);
      const double width = (0.05 + 0.12 * unit(rng)) * static_cast<double>(spec.bands);
      for (Index b = 0; b < spec.bands; ++b) {
        const double d = (static_cast<double>(b) - center) / width;
        out.phi_true(e, b) += amp * std::exp(-0.5 * d * d);
      }
    }
    out.phi_true.row(e).array() += 0.05;
    out.phi_true.row(e) /= out.phi_true.row(e).maxCoeff();
  }

  // Abundances: one random support of size `sparsity` per coarse cell,
  // symmetric Dirichlet weights per pixel, spatial box blur, then projection
  // back onto each pixel's support and renormalization so rows keep at most
  // `sparsity` nonzeros and sum to one. One core endmember is common to all
  // cells (a dominant background material), which keeps the color-to-spectrum
  // relation consistent enough for per-pixel inversion.
  const Index W = spec.width, H = spec.height, C = spec.c_true;
  const Index cell = std::max<Index>(1, 8 * spec.smoothness);
  const Index cells_x = (W + cell - 1) / cell;
  const Index cells_y = (H + cell - 1) / cell;

  std::vector<std::vector<Index>> cell_support(static_cast<std::size_t>(cells_x * cells_y));
  std::vector<Index> pool(static_cast<std::size_t>(C));
  for (Index i = 0; i < C; ++i) pool[static_cast<std::size_t>(i)] = i;
  const Index shared = (spec.sparsity >= 2 && C > spec.sparsity) ? 1 : 0;
  if (shared) {
    const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(C));
    std::swap(pool[0], pool[static_cast<std::size_t>(j)]);
  }
  for (auto& support : cell_support) {
    for (Index k = shared; k < spec.sparsity; ++k) {
      const Index j = k + static_cast<Index>(rng() % static_cast<std::uint64_t>(C - k));
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
    }
    support.assign(pool.begin(), pool.begin() + spec.sparsity);
    std::sort(support.begin(), support.end());
  }

  std::gamma_distribution<double> gamma(spec.concentration, 1.0);
  Mat s(W * H, C);
  s.setZero();
  for (Index y = 0; y < H; ++y) {
    for (Index x = 0; x < W; ++x) {
      const auto& support = cell_support[static_cast<std::size_t>(
          (y / cell) * cells_x + (x / cell))];
      double total = 0.0;
      std::vector<double> draw(support.size());
      for (std::size_t k = 0; k < support.size(); ++k) {
        draw[k] = gamma(rng) + 1e-12;
        total += draw[k];
      }
      for (std::size_t k = 0; k < support.size(); ++k) {
        s(y * W + x, support[k]) = draw[k] / total;
      }
    }
  }

  if (spec.smoothness > 0) {
    const Index rad = 2 * spec.smoothness;
    Mat blurred = Mat::Zero(W * H, C);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(C);
        Index count = 0;
        for (Index dy = -rad; dy <= rad; ++dy) {
          for (Index dx = -rad; dx <= rad; ++dx) {
            const Index yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            acc += s.row(yy * W + xx);
            ++count;
          }
        }
        blurred.row(y * W + x) = acc / static_cast<double>(count);
      }
    }
    // Project each blurred row back onto its cell support and renormalize.
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        const auto& support = cell_support[static_cast<std::size_t>(
            (y / cell) * cells_x + (x / cell))];
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(C);
        double total = 0.0;
        for (Index e : support) {
          row(e) = blurred(y * W + x, e);
          total += row(e);
        }
        s.row(y * W + x) = row / total;
      }
    }
  }
  out.s_true = std::move(s);

  // Sensor response: msi_bands Gaussian bumps spread over the band axis,
  // columns normalized to sum 1.
  out.response = Mat::Zero(spec.bands, spec.msi_bands);
  for (Index j = 0; j < spec.msi_bands; ++j) {
    const double center = (static_cast<double>(j) + 0.5) *
                          static_cast<double>(spec.bands) /
                          static_cast<double>(spec.msi_bands);
    const double width = 0.12 * static_cast<double>(spec.bands);
    for (Index b = 0; b < spec.bands; ++b) {
      const double d = (static_cast<double>(b) + 0.5 - center) / width;
      out.response(b, j) = std::exp(-0.5 * d * d);
    }
    out.response.col(j) /= out.response.col(j).sum();
  }

  out.hr_hsi = fold(out.s_true * out.phi_true, W, H);
  out.lr_hsi = block_downsample(out.hr_hsi, spec.ratio);
  out.hr_msi = apply_spectral_response(out.hr_hsi, out.response);
  return out;
}

ImageCube load_cube(const std::string& path, std::size_t* clamped) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open cube file: " + path);
  if (clamped) *clamped = 0;
  return read_cube_record(is, path, 0, clamped);
}

void save_cube(const ImageCube& cube, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write cube file: " + path);
  write_cube_record(os, cube.width, cube.height, cube.bands, cube.values.data());
  if (!os) throw IoError("write failed: " + path);
}

Mat load_response(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open response file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cellstr;
    bool numeric = true;
    while (std::getline(ss, cellstr, ',')) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(cellstr, &pos);
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (lineno == 1 && rows.empty()) continue;  // header line
      throw ConfigError(path + ": non-numeric entry on line " + std::to_string(lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(path + ": ragged row on line " + std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": empty response file");
  Mat r(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < r.cols(); ++j)
      r(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if ((r.array() < 0.0).any()) throw ConfigError(path + ": negative response entry");
  for (Index j = 0; j < r.cols(); ++j) {
    const double s = r.col(j).sum();
    if (s <= 0.0) throw ConfigError(path + ": column " + std::to_string(j) + " sums to zero");
    r.col(j) /= s;
  }
  return r;
}

void save_sections(const std::vector<std::pair<std::string, Mat>>& sections,
                   const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write: " + path);
  os.write(kSectionsMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, m] : sections) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    // One HSC1 record per matrix: width = cols, height = rows, bands = 1.
    write_cube_record(os, m.cols(), m.rows(), 1, m.data());
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<std::pair<std::string, Mat>> load_sections(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kSectionsMagic, 4) != 0) {
    throw IoError(path + ": bad magic at byte 0");
  }
  const std::uint32_t count = read_u32(is, path, 4);
  std::vector<std::pair<std::string, Mat>> sections;
  sections.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = static_cast<std::size_t>(is.tellg());
    const std::uint32_t len = read_u32(is, path, at);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) {
      throw IoError(path + ": truncated at byte " + std::to_string(at + 4));
    }
    // Section payloads are raw matrices, not reflectances: no [0,1] clamping.
    const std::size_t rec = static_cast<std::size_t>(is.tellg());
    char m2[4];
    if (!is.read(m2, 4) || std::memcmp(m2, kCubeMagic, 4) != 0) {
      throw IoError(path + ": bad section magic at byte " + std::to_string(rec));
    }
    const std::uint32_t cols = read_u32(is, path, rec + 4);
    const std::uint32_t rows = read_u32(is, path, rec + 8);
    const std::uint32_t bands = read_u32(is, path, rec + 12);
    if (bands != 1) throw IoError(path + ": section " + name + " has bands != 1");
    Mat m(rows, cols);
    std::vector<float> payload(static_cast<std::size_t>(rows) * cols);
    if (!is.read(reinterpret_cast<char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size() * sizeof(float)))) {
      throw IoError(path + ": truncated section payload for " + name);
    }
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c)
        m(r, c) = static_cast<double>(payload[static_cast<std::size_t>(r * m.cols() + c)]);
    sections.emplace_back(std::move(name), std::move(m));
  }
  return sections;
}

namespace {

void png_chunk(std::ostream& os, const char type[4], const unsigned char* data,
               std::size_t len) {
  unsigned char hdr[4] = {static_cast<unsigned char>((len >> 24) & 0xff),
                          static_cast<unsigned char>((len >> 16) & 0xff),
                          static_cast<unsigned char>((len >> 8) & 0xff),
                          static_cast<unsigned char>(len & 0xff)};
  os.write(reinterpret_cast<const char*>(hdr), 4);
  os.write(type, 4);
  if (len) os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (len) crc = crc32(crc, data, static_cast<uInt>(len));
  unsigned char crcb[4] = {static_cast<unsigned char>((crc >> 24) & 0xff),
                           static_cast<unsigned char>((crc >> 16) & 0xff),
                           static_cast<unsigned char>((crc >> 8) & 0xff),
                           static_cast<unsigned char>(crc & 0xff)};
  os.write(reinterpret_cast<const char*>(crcb), 4);
}

}  // namespace

void save_band_png(const ImageCube& cube, Index band, const std::string& path) {
  if (band < 0 || band >= cube.bands) {
    throw ConfigError("band " + std::to_string(band) + " out of range [0," +
                      std::to_string(cube.bands) + ")");
  }
  const Index w = cube.width, h = cube.height;
  // Filter byte 0 before every scanline.
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (w + 1));
  for (Index y = 0; y < h; ++y) {
    unsigned char* line = raw.data() + static_cast<std::size_t>(y) * (w + 1);
    line[0] = 0;
    for (Index x = 0; x < w; ++x) {
      const double v = std::clamp(cube.at(x, y, band), 0.0, 1.0);
      line[1 + x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK) {
    throw IoError("png: deflate failed");
  }
  compressed.resize(bound);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write: " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  os.write(reinterpret_cast<const char*>(sig), 8);
  unsigned char ihdr[13] = {
      static_cast<unsigned char>((w >> 24) & 0xff), static_cast<unsigned char>((w >> 16) & 0xff),
      static_cast<unsigned char>((w >> 8) & 0xff),  static_cast<unsigned char>(w & 0xff),
      static_cast<unsigned char>((h >> 24) & 0xff), static_cast<unsigned char>((h >> 16) & 0xff),
      static_cast<unsigned char>((h >> 8) & 0xff),  static_cast<unsigned char>(h & 0xff),
      8, 0, 0, 0, 0};  // bit depth 8, grayscale, deflate, filter 0, no interlace
  png_chunk(os, "IHDR", ihdr, sizeof(ihdr));
  png_chunk(os, "IDAT", compressed.data(), compressed.size());
  png_chunk(os, "IEND", nullptr, 0);
  if (!os) throw IoError("write failed: " + path);
}

std::uint32_t file_crc32(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open: " + path);
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(is.gcount()));
    if (!is) break;
  }
  return crc;
}

}  // namespace hsfuse::data
