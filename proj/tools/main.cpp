#include <CLI11.hpp>

#include <hsfuse/config.hpp>
#include <hsfuse/metrics.hpp>
#include <hsfuse/trainer.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace hsfuse;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void write_manifest(const fs::path& dir,
                    const std::vector<std::pair<std::string, std::string>>& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs) {
  std::ofstream os(dir / "manifest.txt");
  if (!os) throw IoError("cannot write manifest in " + dir.string());
  for (const auto& [k, v] : config) os << k << "=" << v << "\n";
  for (const auto& [name, path] : inputs) {
    char crc[16];
    std::snprintf(crc, sizeof(crc), "%08x", data::file_crc32(path));
    os << "input." << name << ".path=" << path << "\n";
    os << "input." << name << ".crc32=" << crc << "\n";
  }
  // Timestamps live only here so every other output stays byte-reproducible.
  const std::time_t now = std::time(nullptr);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  os << "timestamp=" << stamp << "\n";
}

config::KvMap load_kv(const std::string& path, const std::vector<std::string>& overrides) {
  config::KvMap kv;
  if (!path.empty()) kv = config::read_kv_file(path);
  config::apply_overrides(kv, overrides);
  return kv;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
  auto kv = load_kv(spec_path, overrides);
  const data::SynthSpec spec = config::parse_synth_spec(kv);
  const data::SynthData synth = data::synth_generate(spec);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  data::save_cube(synth.hr_hsi, (dir / "hr_hsi.hsc").string());
  data::save_cube(synth.lr_hsi, (dir / "lr_hsi.hsc").string());
  data::save_cube(synth.hr_msi, (dir / "hr_msi.hsc").string());
  data::save_sections({{"Phi_true", synth.phi_true}, {"S_true", synth.s_true}},
                      (dir / "factors.hspk").string());
  {
    std::ofstream os(dir / "response.csv");
    for (Index i = 0; i < synth.response.rows(); ++i) {
      for (Index j = 0; j < synth.response.cols(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", synth.response(i, j));
        os << (j ? "," : "") << buf;
      }
      os << "\n";
    }
  }
  write_manifest(dir, config::describe(spec), {});
  std::cout << "synth: wrote " << spec.width << "x" << spec.height << "x" << spec.bands
            << " scene to " << out_dir << "\n";
  return 0;
}

int cmd_fuse(const std::string& hsi_path, const std::string& msi_path,
             const std::string& response_path, const std::string& config_path,
             const std::string& out_dir, const std::vector<std::string>& overrides) {
  auto kv = load_kv(config_path, overrides);
  const train::RunConfig cfg = config::parse_run_config(kv);

  const data::ImageCube y_h = data::load_cube(hsi_path);
  const data::ImageCube y_m = data::load_cube(msi_path);
  const Mat response = data::load_response(response_path);

  // Validate before creating any output.
  if (y_m.width % y_h.width != 0 || y_m.height % y_h.height != 0 ||
      y_m.width / y_h.width != y_m.height / y_h.height) {
    throw ConfigError("spatial ratio between MSI and HSI is not a single integer");
  }

  const auto result = train::run_pipeline(y_h, y_m, response, cfg);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  data::save_cube(result.x, (dir / "x_fused.hsc").string());
  result.hsi_trace.write_csv((dir / "trace_hsi.csv").string());
  result.msi_trace.write_csv((dir / "trace_msi.csv").string());

  std::vector<std::pair<std::string, Mat>> sections;
  for (const auto& name : result.params.names()) {
    sections.emplace_back(name, result.params.at(name).value);
  }
  sections.emplace_back("S_h", result.s_h);
  sections.emplace_back("S_m", result.s_m);
  sections.emplace_back("Phi_h", result.phi_h);
  data::save_sections(sections, (dir / "checkpoint.hspk").string());

  write_manifest(dir, config::describe(cfg),
                 {{"hsi", hsi_path}, {"msi", msi_path}, {"response", response_path}});
  std::cout << "fuse: wrote " << result.x.width << "x" << result.x.height << "x"
            << result.x.bands << " cube to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& ref_path,
             const std::string& out_csv) {
  const data::ImageCube est = data::load_cube(est_path);
  const data::ImageCube ref = data::load_cube(ref_path);
  const metrics::EvalReport report = metrics::evaluate(est, ref);
  metrics::write_report_csv(report, out_csv);
  std::cout << metrics::report_text(report);
  return 0;
}

int cmd_check_grad(std::uint64_t seed, double h, double tol) {
  const auto summary = train::check_gradients(seed, h, tol);
  auto show = [tol](const char* name, const diff::GradCheckReport& r) {
    std::printf("%-14s max rel. error %.3e over %zu coordinates  %s\n", name, r.max_error,
                r.coords_checked, r.max_error < tol ? "ok" : "FAIL");
    for (const auto& f : r.failures) {
      std::printf("  %s(%lld,%lld): analytic %.9e vs central-diff %.9e (err %.3e)\n",
                  f.param.c_str(), static_cast<long long>(f.row),
                  static_cast<long long>(f.col), f.analytic, f.numeric, f.error);
    }
  };
  show("hsi objective", summary.hsi);
  show("msi objective", summary.msi);
  show("angle objective", summary.angle);
  std::printf("frozen decoder grad magnitude: %.3e %s\n", summary.frozen_decoder_grad,
              summary.frozen_decoder_grad == 0.0 ? "ok" : "FAIL");
  return summary.passed(tol) ? 0 : 1;
}

int cmd_inspect(const std::string& cube_path, Index band, const std::string& png_path,
                const std::string& repr_path, const std::string& hist_path,
                const std::string& section, int bins) {
  if (!cube_path.empty()) {
    if (png_path.empty()) throw ConfigError("--cube requires --png");
    const data::ImageCube cube = data::load_cube(cube_path);
    data::save_band_png(cube, band, png_path);
    std::cout << "inspect: wrote band " << band << " to " << png_path << "\n";
  }
  if (!repr_path.empty()) {
    if (hist_path.empty()) throw ConfigError("--repr requires --hist");
    const auto sections = data::load_sections(repr_path);
    const Mat* m = nullptr;
    for (const auto& [name, mat] : sections) {
      if (name == section) m = &mat;
    }
    if (!m) throw ConfigError("checkpoint has no section named '" + section + "'");
    if (bins < 1) throw ConfigError("--bins must be positive");

    const double lo = std::min(0.0, m->minCoeff());
    const double hi = std::max(1.0, m->maxCoeff());
    std::vector<long> counts(static_cast<std::size_t>(bins), 0);
    const double w = (hi - lo) / bins;
    for (Index i = 0; i < m->rows(); ++i) {
      for (Index j = 0; j < m->cols(); ++j) {
        auto b = static_cast<long>(((*m)(i, j) - lo) / w);
        b = std::min<long>(std::max<long>(b, 0), bins - 1);
        ++counts[static_cast<std::size_t>(b)];
      }
    }
    std::ofstream os(hist_path);
    if (!os) throw IoError("cannot write: " + hist_path);
    os << "bin_low,bin_high,count\n";
    for (int b = 0; b < bins; ++b) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%ld\n", lo + b * w, lo + (b + 1) * w,
                    counts[static_cast<std::size_t>(b)]);
      os << buf;
    }
    std::cout << "inspect: wrote histogram of " << section << " to " << hist_path << "\n";
  }
  if (cube_path.empty() && repr_path.empty()) {
    throw ConfigError("inspect: nothing to do (pass --cube or --repr)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral/multispectral fusion engine"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  std::vector<std::string> overrides;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark scene");
  synth->add_option("--spec", spec_path, "key=value spec file");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--set", overrides, "override spec entries (key=value)");

  std::string hsi_path, msi_path, response_path, config_path;
  auto* fuse = app.add_subcommand("fuse", "Fuse an LR HSI cube with an HR MSI cube");
  fuse->add_option("--hsi", hsi_path, "LR hyperspectral cube")->required();
  fuse->add_option("--msi", msi_path, "HR multispectral cube")->required();
  fuse->add_option("--response", response_path, "spectral response CSV")->required();
  fuse->add_option("--config", config_path, "key=value training config");
  fuse->add_option("--out", out_dir, "output directory")->required();
  fuse->add_option("--set", overrides, "override config entries (key=value)");

  std::string est_path, ref_path, eval_csv;
  auto* eval = app.add_subcommand("eval", "Compare an estimated cube against a reference");
  eval->add_option("--est", est_path, "estimated cube")->required();
  eval->add_option("--ref", ref_path, "reference cube")->required();
  eval->add_option("--out", eval_csv, "report CSV path")->required();

  std::uint64_t seed = 0;
  double h = 1e-5, tol = 1e-5;
  auto* check = app.add_subcommand("check-grad", "Finite-difference check of the objectives");
  check->add_option("--seed", seed, "instance seed");
  check->add_option("--step", h, "central-difference step");
  check->add_option("--tol", tol, "failure tolerance");

  std::string cube_path, png_path, repr_path, hist_path, section = "S_m";
  Index band = 0;
  int bins = 50;
  auto* inspect = app.add_subcommand("inspect", "Export band slices and histograms");
  inspect->add_option("--cube", cube_path, "cube to slice");
  inspect->add_option("--band", band, "band index");
  inspect->add_option("--png", png_path, "band PNG output");
  inspect->add_option("--repr", repr_path, "checkpoint file");
  inspect->add_option("--hist", hist_path, "histogram CSV output");
  inspect->add_option("--section", section, "checkpoint section (default S_m)");
  inspect->add_option("--bins", bins, "histogram bin count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec_path, out_dir, overrides);
    if (fuse->parsed())
      return cmd_fuse(hsi_path, msi_path, response_path, config_path, out_dir, overrides);
    if (eval->parsed()) return cmd_eval(est_path, ref_path, eval_csv);
    if (check->parsed()) return cmd_check_grad(seed, h, tol);
    if (inspect->parsed())
      return cmd_inspect(cube_path, band, png_path, repr_path, hist_path, section, bins);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
