#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"
#include "scatter.hpp"

namespace hazeforge {

namespace fs = std::filesystem;

inline bool is_image_file(const fs::path& p) {
  const std::string ext = detail::lower_extension(p.string());
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

/// Image file names (not paths) in `dir`, sorted.
inline std::vector<std::string> list_images(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) {
    return names;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

/**
 * @brief On-disk dataset: hazy/ and clean/ paired by file name, optional trans/
 * ground-truth transmission, real/ unpaired real hazy images.
 *
 * real_clean/ is an optional extension holding references for real/ images,
 * used only for validation.
 */
struct DatasetLayout {
  fs::path root;
  std::vector<std::string> pairs;
  bool has_trans = false;
  std::vector<std::string> real;
  std::vector<std::string> real_references;

  fs::path hazy(const std::string& name) const { return root / "hazy" / name; }
  fs::path clean(const std::string& name) const { return root / "clean" / name; }
  fs::path trans(const std::string& name) const { return root / "trans" / name; }
  fs::path real_image(const std::string& name) const { return root / "real" / name; }
  fs::path real_reference(const std::string& name) const { return root / "real_clean" / name; }

  /// Scans and validates `root`; throws naming the offending directory or file.
  static DatasetLayout open(const fs::path& root, bool require_real = true) {
    DatasetLayout layout;
    layout.root = root;
    for (const char* sub : {"hazy", "clean"}) {
      if (!fs::is_directory(root / sub)) {
        throw std::runtime_error("dataset: missing directory " + (root / sub).string());
      }
    }
    const auto clean = list_images(root / "clean");
    const auto hazy = list_images(root / "hazy");
    const std::set<std::string> hazy_set(hazy.begin(), hazy.end());
    for (const auto& name : clean) {
      if (!hazy_set.count(name)) {
        throw std::runtime_error("dataset: clean/" + name + " has no hazy/ counterpart");
      }
    }
    if (clean.empty()) {
      throw std::runtime_error("dataset: no image pairs in " + (root / "clean").string());
    }
    layout.pairs = clean;
    layout.has_trans = fs::is_directory(root / "trans");
    if (layout.has_trans) {
      const auto trans = list_images(root / "trans");
      const std::set<std::string> pair_set(clean.begin(), clean.end());
      for (const auto& name : trans) {
        if (!pair_set.count(name)) {
          throw std::runtime_error("dataset: trans/" + name + " matches no pair");
        }
      }
      if (trans.size() != clean.size()) {
        throw std::runtime_error("dataset: trans/ does not cover every pair");
      }
    }
    if (require_real && !fs::is_directory(root / "real")) {
      throw std::runtime_error("dataset: missing directory " + (root / "real").string());
    }
    layout.real = list_images(root / "real");
    if (require_real && layout.real.empty()) {
      throw std::runtime_error("dataset: no images in " + (root / "real").string());
    }
    if (fs::is_directory(root / "real_clean")) {
      const auto refs = list_images(root / "real_clean");
      const std::set<std::string> ref_set(refs.begin(), refs.end());
      for (const auto& name : layout.real) {
        if (ref_set.count(name)) {
          layout.real_references.push_back(name);
        }
      }
    }
    return layout;
  }
};

/// One loaded synthetic sample.
struct PairedSample {
  std::string name;
  Image hazy;
  Image clean;
  std::optional<Image> trans;
};

inline PairedSample load_pair(const DatasetLayout& layout, const std::string& name) {
  PairedSample s{name, load_image(layout.hazy(name).string()), load_image(layout.clean(name).string()), std::nullopt};
  if (!s.hazy.same_shape(s.clean) || s.hazy.channels() != 3) {
    throw std::runtime_error("dataset: pair " + name + " differs in size or is not RGB");
  }
  if (layout.has_trans) {
    Image t = load_image(layout.trans(name).string());
    if (t.channels() != 1 || t.height() != s.hazy.height() || t.width() != s.hazy.width()) {
      throw std::runtime_error("dataset: trans/" + name + " must be a gray image of the pair's size");
    }
    s.trans = std::move(t);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Procedural toy dataset

struct ToyOptions {
  std::size_t count = 16;
  std::size_t size = 96;
  std::uint64_t seed = 7;
};

struct HazeRegime {
  double t_low_min;
  double t_low_max;
  double t_span_min;
  double t_span_max;
  double frequency;  // spatial frequency of the transmission field, cycles per image
  bool tinted_airlight;
};

/// Synthetic regime: lighter, slowly varying haze with gray airlight. Keeping
/// t above 0.5 bounds the inversion error of 8-bit hazy files, (0.5/255)/t, by 1/255.
inline constexpr HazeRegime kSyntheticRegime{0.52, 0.7, 0.15, 0.25, 0.6, false};
/// "Real" regime: denser haze, faster spatial variation, tinted airlight.
inline constexpr HazeRegime kRealRegime{0.2, 0.3, 0.2, 0.35, 1.4, true};

struct ToyScene {
  Image clean;
  TransmissionMap trans;
  Airlight airlight;
  Image hazy;
};

namespace detail {

using ToyRng = std::mt19937_64;

inline double uniform(ToyRng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// A saturated colour: one channel near zero, so the dark channel prior holds.
inline std::array<double, 3> saturated_colour(ToyRng& rng) {
  std::array<double, 3> c{uniform(rng, 0.25, 0.95), uniform(rng, 0.25, 0.95), uniform(rng, 0.25, 0.95)};
  c[static_cast<std::size_t>(uniform(rng, 0.0, 3.0)) % 3] = uniform(rng, 0.0, 0.06);
  return c;
}

inline Image toy_clean(ToyRng& rng, std::size_t size) {
  const double n = static_cast<double>(size);
  std::vector<float> px(3 * size * size);
  auto put = [&](std::size_t c, std::size_t y, std::size_t x, double v) {
    px[(c * size + y) * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  };
  // Background: linear gradient between two saturated colours.
  const auto c0 = saturated_colour(rng);
  const auto c1 = saturated_colour(rng);
  const double angle = uniform(rng, 0.0, 2.0 * M_PI);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = std::clamp(0.5 + ((x / n - 0.5) * ca + (y / n - 0.5) * sa), 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) {
        put(c, y, x, c0[c] * (1.0 - u) + c1[c] * u);
      }
    }
  }
  // Shapes: a few coloured ones, then at least two dark objects on top.
  const int coloured = 2 + static_cast<int>(uniform(rng, 0.0, 3.0));
  const int dark = 2 + static_cast<int>(uniform(rng, 0.0, 2.0));
  for (int s = 0; s < coloured + dark; ++s) {
    const bool is_dark = s >= coloured;
    std::array<double, 3> col = saturated_colour(rng);
    if (is_dark) {
      col = {uniform(rng, 0.0, 0.06), uniform(rng, 0.0, 0.06), uniform(rng, 0.0, 0.06)};
    } else if (uniform(rng, 0.0, 1.0) < 0.25) {
      const double g = uniform(rng, 0.6, 0.95);
      col = {g, g, g};
    }
    const double cx = uniform(rng, 0.0, n);
    const double cy = uniform(rng, 0.0, n);
    const double r = uniform(rng, 0.08, 0.22) * n;
    const bool circle = uniform(rng, 0.0, 1.0) < 0.5;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        const bool inside = circle ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= 0.6 * r;
        if (inside) {
          for (std::size_t c = 0; c < 3; ++c) {
            put(c, y, x, col[c]);
          }
        }
      }
    }
  }
  return Image(size, size, 3, std::move(px));
}

inline TransmissionMap toy_transmission(ToyRng& rng, std::size_t size, const HazeRegime& regime) {
  const double n = static_cast<double>(size);
  const double low = uniform(rng, regime.t_low_min, regime.t_low_max);
  const double high = std::min(0.95, low + uniform(rng, regime.t_span_min, regime.t_span_max));
  // Depth-like field: vertical ramp plus two low-frequency waves.
  const double ramp = uniform(rng, 0.3, 0.7);
  std::array<double, 4> wave{};
  for (double& w : wave) {
    w = uniform(rng, 0.0, 2.0 * M_PI);
  }
  const double f = regime.frequency;
  std::vector<double> field(size * size);
  double lo = 1e9;
  double hi = -1e9;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = x / n;
      const double v = y / n;
      const double d = ramp * v + (1.0 - ramp) * 0.5 *
                                      (std::sin(2.0 * M_PI * f * u + wave[0]) * std::cos(2.0 * M_PI * f * v + wave[1]) +
                                       std::sin(2.0 * M_PI * f * (u + v) + wave[2]));
      field[y * size + x] = d;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  std::vector<float> t(size * size);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double norm = hi > lo ? (field[i] - lo) / (hi - lo) : 0.5;
    t[i] = static_cast<float>(high - (high - low) * norm);
  }
  return TransmissionMap(Image(size, size, 1, std::move(t)));
}

inline Airlight toy_airlight(ToyRng& rng, bool tinted) {
  const double base = uniform(rng, 0.7, 1.0);
  if (!tinted) {
    return Airlight(static_cast<float>(base));
  }
  auto jitter = [&] { return static_cast<float>(std::clamp(base + uniform(rng, -0.08, 0.08), 0.7, 1.0)); };
  const float r = jitter();
  const float g = jitter();
  const float b = jitter();
  return Airlight(r, g, b);
}

// Rounds every sample to the 8-bit grid so files reproduce the in-memory scene.
inline Image snap_to_bytes(const Image& img) {
  return from_bytes(img.height(), img.width(), img.channels(), to_bytes(img));
}

}  // namespace detail

/**
 * @brief Generates one scene; clean and transmission are snapped to 8-bit
 * before haze synthesis so the written files satisfy the scattering model
 * up to the quantization of the hazy image.
 */
inline ToyScene make_toy_scene(std::mt19937_64& rng, std::size_t size, const HazeRegime& regime) {
  ToyScene s;
  s.clean = detail::snap_to_bytes(detail::toy_clean(rng, size));
  s.trans = TransmissionMap(detail::snap_to_bytes(detail::toy_transmission(rng, size, regime).image()));
  s.airlight = detail::toy_airlight(rng, regime.tinted_airlight);
  s.hazy = synthesize_haze(s.clean, s.trans, s.airlight);
  return s;
}

inline std::string toy_name(std::size_t i) {
  std::ostringstream os;
  os << "toy_" << std::setw(4) << std::setfill('0') << i << ".png";
  return os.str();
}

/**
 * @brief Writes a toy dataset: hazy/, clean/, trans/, real/, real_clean/ and
 * airlight.tsv (name, regime, A per channel).
 */
inline DatasetLayout generate_toy_dataset(const fs::path& root, const ToyOptions& opt) {
  if (opt.count == 0 || opt.size < 16) {
    throw std::invalid_argument("gen-toy: need at least one image of size >= 16");
  }
  for (const char* sub : {"hazy", "clean", "trans", "real", "real_clean"}) {
    fs::create_directories(root / sub);
  }
  std::ofstream meta(root / "airlight.tsv");
  if (!meta) {
    throw std::runtime_error("gen-toy: cannot write " + (root / "airlight.tsv").string());
  }
  meta << std::setprecision(9) << "name\tdomain\tr\tg\tb\n";
  std::mt19937_64 syn_rng(opt.seed);
  std::mt19937_64 real_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = 0; i < opt.count; ++i) {
    const std::string name = toy_name(i);
    const ToyScene syn = make_toy_scene(syn_rng, opt.size, kSyntheticRegime);
    save_image(syn.clean, (root / "clean" / name).string());
    save_image(syn.hazy, (root / "hazy" / name).string());
    save_image(syn.trans.image(), (root / "trans" / name).string());
    meta << name << "\tsynthetic\t" << syn.airlight[0] << '\t' << syn.airlight[1] << '\t' << syn.airlight[2] << '\n';

    const ToyScene real = make_toy_scene(real_rng, opt.size, kRealRegime);
    save_image(real.hazy, (root / "real" / name).string());
    save_image(real.clean, (root / "real_clean" / name).string());
    meta << name << "\treal\t" << real.airlight[0] << '\t' << real.airlight[1] << '\t' << real.airlight[2] << '\n';
  }
  if (!meta) {
    throw std::runtime_error("gen-toy: failed writing airlight.tsv");
  }
  return DatasetLayout::open(root);
}

/// Reads airlight.tsv written by generate_toy_dataset: key "<domain>/<name>".
inline std::map<std::string, Airlight> read_airlight_table(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open " + file.string());
  }
  std::map<std::string, Airlight> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string name;
    std::string domain;
    float r = 0;
    float g = 0;
    float b = 0;
    if (row >> name >> domain >> r >> g >> b) {
      out[domain + "/" + name] = Airlight(r, g, b);
    }
  }
  return out;
}

}  // namespace hazeforge
