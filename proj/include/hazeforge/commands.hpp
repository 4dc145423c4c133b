#pragma once

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "dcp.hpp"
#include "image.hpp"
#include "metrics.hpp"
#include "mutual.hpp"
#include "scatter.hpp"

namespace hazeforge {

namespace fs = std::filesystem;

/// Density factors written by `hda --sweep`.
inline const std::vector<double>& hda_sweep_factors() {
  static const std::vector<double> p{0.5, 0.8, 1.0, 1.2, 1.4};
  return p;
}

namespace detail {

/// A single image file, or every image file of a directory (sorted by name).
inline std::vector<fs::path> collect_inputs(const fs::path& input) {
  if (fs::is_directory(input)) {
    std::vector<fs::path> out;
    for (const auto& name : list_images(input)) {
      out.push_back(input / name);
    }
    if (out.empty()) {
      throw std::runtime_error("no image files in " + input.string());
    }
    return out;
  }
  if (!fs::is_regular_file(input)) {
    throw std::runtime_error("input not found: " + input.string());
  }
  return {input};
}

/// Output path for `input`: inside `out` when it is (or will be) a directory.
inline fs::path output_for(const fs::path& input, const fs::path& out, bool many) {
  if (many || fs::is_directory(out) || !out.has_extension()) {
    fs::create_directories(out);
    return out / input.filename();
  }
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  return out;
}

inline std::string format_metric(double v) {
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string p_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", p);
  return buf;
}

}  // namespace detail

inline DatasetLayout cmd_gen_toy(const fs::path& out_dir, std::size_t count, std::size_t size, std::uint64_t seed) {
  return generate_toy_dataset(out_dir, ToyOptions{count, size, seed});
}

inline RunResult cmd_train(const TrainConfig& cfg, const fs::path& data_root, const fs::path& run_dir,
                           std::ostream* progress = nullptr) {
  cfg.validate();
  const DatasetLayout layout = DatasetLayout::open(data_root, is_split(cfg.paradigm));
  RunOptions opt;
  opt.progress = progress;
  return run_training(cfg, layout, run_dir, opt);
}

/// Runs the checkpoint's student on a file or directory; outputs keep the input file names.
inline std::vector<fs::path> cmd_infer(const fs::path& checkpoint, const fs::path& input, const fs::path& out) {
  const DehazeNet<float> net = load_student(load_checkpoint(checkpoint));
  const auto inputs = detail::collect_inputs(input);
  std::vector<fs::path> written;
  for (const auto& in : inputs) {
    const Image hazy = load_image(in.string());
    const fs::path dst = detail::output_for(in, out, inputs.size() > 1 || fs::is_directory(input));
    save_image(dehaze_image(net, hazy), dst.string());
    written.push_back(dst);
  }
  return written;
}

/**
 * @brief Scores every image of `dir_a` against the same-named file of `dir_b`.
 *
 * Prints one `name=...<TAB>psnr=...<TAB>ssim=...` line per image and a final
 * `mean_psnr=...<TAB>mean_ssim=...<TAB>count=...` line.
 */
inline MetricReport cmd_eval(const fs::path& dir_a, const fs::path& dir_b, std::ostream& out) {
  for (const auto& d : {dir_a, dir_b}) {
    if (!fs::is_directory(d)) {
      throw std::runtime_error("eval: not a directory: " + d.string());
    }
  }
  const auto names_a = list_images(dir_a);
  const auto names_b = list_images(dir_b);
  const std::set<std::string> in_b(names_b.begin(), names_b.end());
  std::vector<std::string> matched;
  std::vector<std::string> missing;
  for (const auto& n : names_a) {
    (in_b.count(n) ? matched : missing).push_back(n);
  }
  if (matched.empty()) {
    throw std::runtime_error("eval: no file names in common between " + dir_a.string() + " and " + dir_b.string());
  }
  if (!missing.empty()) {
    std::string msg = "eval: files of " + dir_a.string() + " missing from " + dir_b.string() + ":";
    for (const auto& n : missing) {
      msg += " " + n;
    }
    throw std::runtime_error(msg);
  }
  MetricReport report;
  for (const auto& n : matched) {
    const Image a = load_image((dir_a / n).string());
    const Image b = load_image((dir_b / n).string());
    report.add(n, psnr(a, b), ssim(a, b));
  }
  for (std::size_t i = 0; i < report.size(); ++i) {
    out << "name=" << report.names[i] << "\tpsnr=" << detail::format_metric(report.psnr[i])
        << "\tssim=" << detail::format_metric(report.ssim[i]) << '\n';
  }
  out << "mean_psnr=" << detail::format_metric(report.mean_psnr())
      << "\tmean_ssim=" << detail::format_metric(report.mean_ssim()) << "\tcount=" << report.size() << '\n';
  return report;
}

inline std::vector<fs::path> cmd_dcp(const fs::path& input, const fs::path& out, int patch = kDefaultDarkChannelPatch,
                                     double omega = 0.95) {
  const auto inputs = detail::collect_inputs(input);
  std::vector<fs::path> written;
  for (const auto& in : inputs) {
    const Image img = load_image(in.string());
    const fs::path dst = detail::output_for(in, out, inputs.size() > 1 || fs::is_directory(input));
    save_image(dcp_dehaze(img, patch, omega), dst.string());
    written.push_back(dst);
  }
  return written;
}

struct HdaOptions {
  double p = 1.0;
  bool sweep = false;
  int patch = kDefaultDarkChannelPatch;
  double omega = 0.95;
  std::optional<fs::path> trans;
};

/**
 * @brief Rebuilds a hazy image from a dehazed one with transmission t^p.
 *
 * A comes from the DCP estimate on the hazy input; t is read from
 * `opt.trans` when given, otherwise the DCP estimate. With `sweep`, writes
 * `<stem>_p<p><ext>` into `out` for every factor of hda_sweep_factors().
 */
inline std::vector<fs::path> cmd_hda(const fs::path& hazy_path, const fs::path& dehazed_path, const fs::path& out,
                                     const HdaOptions& opt) {
  const Image hazy = load_image(hazy_path.string());
  const Image dehazed = load_image(dehazed_path.string());
  if (!hazy.same_shape(dehazed) || hazy.channels() != 3) {
    throw std::runtime_error("hda: hazy and dehazed images must be RGB of the same size");
  }
  const Airlight a = estimate_airlight(hazy, opt.patch);
  TransmissionMap t = opt.trans ? TransmissionMap(load_image(opt.trans->string()))
                                : estimate_transmission(hazy, a, opt.patch, opt.omega);
  if (t.height() != hazy.height() || t.width() != hazy.width()) {
    throw std::runtime_error("hda: transmission map size differs from the image");
  }
  std::vector<fs::path> written;
  if (!opt.sweep) {
    const DensityFactor p(opt.p);
    const fs::path dst = detail::output_for(hazy_path, out, false);
    save_image(hda_rebuild(dehazed, t, a, p), dst.string());
    written.push_back(dst);
    return written;
  }
  fs::create_directories(out);
  const std::string stem = hazy_path.stem().string();
  const std::string ext = hazy_path.extension().string();
  for (double pv : hda_sweep_factors()) {
    const fs::path dst = out / (stem + "_p" + detail::p_label(pv) + ext);
    save_image(hda_rebuild(dehazed, t, a, DensityFactor(pv)), dst.string());
    written.push_back(dst);
  }
  return written;
}

}  // namespace hazeforge
