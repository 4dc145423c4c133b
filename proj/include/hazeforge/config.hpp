#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "losses.hpp"
#include "networks.hpp"
#include "optim.hpp"

namespace hazeforge {

/// The four training paradigms: one-way (T->S) or mutual (T<->S), fed from the same or split domains.
enum class Paradigm { ts_same, ts_split, mutual_same, mutual_split };

/// How the unsupervised real-domain loss reaches the teacher.
enum class UnsupGradPath { teacher_forward, student_frozen };

inline const char* to_string(Paradigm p) {
  switch (p) {
    case Paradigm::ts_same: return "ts_same";
    case Paradigm::ts_split: return "ts_split";
    case Paradigm::mutual_same: return "mutual_same";
    case Paradigm::mutual_split: return "mutual_split";
  }
  return "?";
}

inline const char* to_string(UnsupGradPath p) {
  return p == UnsupGradPath::teacher_forward ? "teacher_forward" : "student_frozen";
}

inline bool is_mutual(Paradigm p) { return p == Paradigm::mutual_same || p == Paradigm::mutual_split; }
inline bool is_split(Paradigm p) { return p == Paradigm::ts_split || p == Paradigm::mutual_split; }

/**
 * @brief Every hyperparameter and ablation switch of a training run.
 *
 * Serialized as `key = value` lines; see config_keys() for the key list.
 */
struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 60;
  std::size_t batch_size = 8;
  std::size_t crop = 64;
  double ema_decay = 0.999;
  std::size_t hda_start_epoch = 50;
  double hda_replace_prob = 0.5;
  double p_min = 0.5;
  double p_max = 1.4;
  std::size_t buffer_capacity = 512;
  LossWeights weights;
  Paradigm paradigm = Paradigm::mutual_split;
  UnsupGradPath unsup_grad_path = UnsupGradPath::teacher_forward;
  DehazeNetConfig net;
  std::size_t tnet_base = 8;
  std::size_t disc_base = 16;
  CyclicLrSchedule schedule;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int dc_patch = 25;
  std::uint64_t extractor_seed = 1234;
  std::size_t val_pairs = 4;
  std::size_t val_every = 10;
  std::size_t checkpoint_every = 0;

  /// Throws std::invalid_argument listing every violated constraint.
  void validate() const {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const char* what) {
      if (!ok) {
        bad.emplace_back(what);
      }
    };
    check(batch_size >= 2 && batch_size % 2 == 0, "batch_size must be even and >= 2");
    check(crop >= 16 && crop % 16 == 0, "crop must be a positive multiple of 16");
    check(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must lie in [0,1)");
    check(hda_replace_prob >= 0.0 && hda_replace_prob <= 1.0, "hda_replace_prob must lie in [0,1]");
    check(p_min > 0.0 && p_min <= p_max, "need 0 < p_min <= p_max");
    check(buffer_capacity > 0, "buffer_capacity must be positive");
    check(dc_patch >= 1 && dc_patch % 2 == 1, "dc_patch must be odd and >= 1");
    check(schedule.base_lr >= 0.0 && schedule.base_lr <= schedule.max_lr, "need 0 <= lr_base <= lr_max");
    check(schedule.half_period > 0, "lr_half_period must be positive");
    check(schedule.base_momentum <= schedule.max_momentum && schedule.max_momentum < 1.0,
          "need momentum_base <= momentum_max < 1");
    check(val_every > 0, "val_every must be positive");
    check(net.width % 4 == 0 && net.width % net.scale == 0 && net.groups > 0 && net.blocks_per_group > 0,
          "width must be divisible by 4 and res2_scale; groups and blocks_per_group positive");
    check(tnet_base >= 2 && tnet_base % 2 == 0, "tnet_base must be even and >= 2");
    check(disc_base > 0, "disc_base must be positive");
    for (double w : {weights.rc, weights.adv, weights.dc, weights.per, weights.hda}) {
      check(w >= 0.0 && std::isfinite(w), "loss weights must be finite and nonnegative");
    }
    if (!bad.empty()) {
      std::string msg = "invalid config:";
      for (const auto& b : bad) {
        msg += "\n  " + b;
      }
      throw std::invalid_argument(msg);
    }
  }
};

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& text) {
  Int v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + text + "'");
  }
  return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("config: " + key + " expects a real number, got '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") {
    return true;
  }
  if (text == "false" || text == "0") {
    return false;
  }
  throw std::invalid_argument("config: " + key + " expects true or false, got '" + text + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

/// Every recognised key, in the order used for dumps.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::format_double;
  using detail::parse_integer;
  using detail::parse_real;
  auto size_key = [](std::string name, std::string help, std::size_t TrainConfig::*field) {
    return ConfigKey{name, std::move(help), [field](const TrainConfig& c) { return std::to_string(c.*field); },
                     [field, name](TrainConfig& c, const std::string& v) {
                       c.*field = parse_integer<std::size_t>(name, v);
                     }};
  };
  auto real_key = [](std::string name, std::string help, auto getter) {
    return ConfigKey{name, std::move(help),
                     [getter](const TrainConfig& c) { return format_double(getter(const_cast<TrainConfig&>(c))); },
                     [getter, name](TrainConfig& c, const std::string& v) { getter(c) = parse_real(name, v); }};
  };
  static const std::vector<ConfigKey> keys = {
      {"seed", "master seed for initialization, sampling and augmentation",
       [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& v) { c.seed = parse_integer<std::uint64_t>("seed", v); }},
      size_key("epochs", "training epochs; 0 writes the initial checkpoint only", &TrainConfig::epochs),
      size_key("batch_size", "images per step, half synthetic and half real", &TrainConfig::batch_size),
      size_key("crop", "square training crop side (multiple of 16)", &TrainConfig::crop),
      real_key("ema_decay", "student <- decay * student + (1 - decay) * teacher",
               [](TrainConfig& c) -> double& { return c.ema_decay; }),
      size_key("hda_start_epoch", "first epoch that harvests and uses pseudo pairs", &TrainConfig::hda_start_epoch),
      real_key("hda_replace_prob", "chance a synthetic slot is replaced by a pseudo pair",
               [](TrainConfig& c) -> double& { return c.hda_replace_prob; }),
      real_key("p_min", "lower bound of the density factor p", [](TrainConfig& c) -> double& { return c.p_min; }),
      real_key("p_max", "upper bound of the density factor p", [](TrainConfig& c) -> double& { return c.p_max; }),
      size_key("buffer_capacity", "pseudo-pair FIFO capacity", &TrainConfig::buffer_capacity),
      real_key("lambda_rc", "reconstruction weight", [](TrainConfig& c) -> double& { return c.weights.rc; }),
      real_key("lambda_adv", "adversarial weight", [](TrainConfig& c) -> double& { return c.weights.adv; }),
      real_key("lambda_dc", "dark-channel weight", [](TrainConfig& c) -> double& { return c.weights.dc; }),
      real_key("lambda_per", "perceptual weight", [](TrainConfig& c) -> double& { return c.weights.per; }),
      real_key("lambda_hda", "pseudo-pair reconstruction weight", [](TrainConfig& c) -> double& { return c.weights.hda; }),
      {"paradigm", "ts_same | ts_split | mutual_same | mutual_split",
       [](const TrainConfig& c) { return std::string(to_string(c.paradigm)); },
       [](TrainConfig& c, const std::string& v) {
         for (Paradigm p : {Paradigm::ts_same, Paradigm::ts_split, Paradigm::mutual_same, Paradigm::mutual_split}) {
           if (v == to_string(p)) {
             c.paradigm = p;
             return;
           }
         }
         throw std::invalid_argument("config: paradigm must be ts_same, ts_split, mutual_same or mutual_split, got '" +
                                     v + "'");
       }},
      {"unsup_grad_path", "teacher_forward | student_frozen",
       [](const TrainConfig& c) { return std::string(to_string(c.unsup_grad_path)); },
       [](TrainConfig& c, const std::string& v) {
         if (v == "teacher_forward") {
           c.unsup_grad_path = UnsupGradPath::teacher_forward;
         } else if (v == "student_frozen") {
           c.unsup_grad_path = UnsupGradPath::student_frozen;
         } else {
           throw std::invalid_argument("config: unsup_grad_path must be teacher_forward or student_frozen, got '" +
                                       v + "'");
         }
       }},
      {"groups", "residual groups in the dehazing network",
       [](const TrainConfig& c) { return std::to_string(c.net.groups); },
       [](TrainConfig& c, const std::string& v) { c.net.groups = parse_integer<std::size_t>("groups", v); }},
      {"width", "feature channels in the dehazing network",
       [](const TrainConfig& c) { return std::to_string(c.net.width); },
       [](TrainConfig& c, const std::string& v) { c.net.width = parse_integer<std::size_t>("width", v); }},
      {"blocks_per_group", "Res2Blocks per group",
       [](const TrainConfig& c) { return std::to_string(c.net.blocks_per_group); },
       [](TrainConfig& c, const std::string& v) {
         c.net.blocks_per_group = parse_integer<std::size_t>("blocks_per_group", v);
       }},
      {"res2_scale", "channel slices per Res2Block",
       [](const TrainConfig& c) { return std::to_string(c.net.scale); },
       [](TrainConfig& c, const std::string& v) { c.net.scale = parse_integer<std::size_t>("res2_scale", v); }},
      {"input_residual", "add atanh(2x - 1) of the input before the output tanh",
       [](const TrainConfig& c) { return std::string(c.net.input_residual ? "true" : "false"); },
       [](TrainConfig& c, const std::string& v) { c.net.input_residual = detail::parse_bool("input_residual", v); }},
      size_key("tnet_base", "transmission network base channels", &TrainConfig::tnet_base),
      size_key("disc_base", "discriminator base channels", &TrainConfig::disc_base),
      real_key("lr_base", "cyclic schedule lower learning rate",
               [](TrainConfig& c) -> double& { return c.schedule.base_lr; }),
      real_key("lr_max", "cyclic schedule upper learning rate", [](TrainConfig& c) -> double& { return c.schedule.max_lr; }),
      real_key("momentum_base", "Adam beta1 at the learning-rate peak",
               [](TrainConfig& c) -> double& { return c.schedule.base_momentum; }),
      real_key("momentum_max", "Adam beta1 at the learning-rate floor",
               [](TrainConfig& c) -> double& { return c.schedule.max_momentum; }),
      {"lr_half_period", "steps from lr_base to lr_max",
       [](const TrainConfig& c) { return std::to_string(c.schedule.half_period); },
       [](TrainConfig& c, const std::string& v) {
         c.schedule.half_period = parse_integer<std::size_t>("lr_half_period", v);
       }},
      real_key("adam_beta2", "Adam second-moment decay", [](TrainConfig& c) -> double& { return c.adam_beta2; }),
      real_key("adam_eps", "Adam denominator guard", [](TrainConfig& c) -> double& { return c.adam_eps; }),
      {"dc_patch", "dark-channel window (odd)", [](const TrainConfig& c) { return std::to_string(c.dc_patch); },
       [](TrainConfig& c, const std::string& v) { c.dc_patch = parse_integer<int>("dc_patch", v); }},
      {"extractor_seed", "seed of the frozen random-convolution feature extractor",
       [](const TrainConfig& c) { return std::to_string(c.extractor_seed); },
       [](TrainConfig& c, const std::string& v) {
         c.extractor_seed = parse_integer<std::uint64_t>("extractor_seed", v);
       }},
      size_key("val_pairs", "trailing synthetic pairs held out for validation", &TrainConfig::val_pairs),
      size_key("val_every", "validate every N epochs (and after the last)", &TrainConfig::val_every),
      size_key("checkpoint_every", "write a versioned checkpoint every N epochs; 0 = final only",
               &TrainConfig::checkpoint_every),
  };
  return keys;
}

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) {
      return &k;
    }
  }
  return nullptr;
}

/// Applies `key = value` assignments; throws once, naming every unknown key.
inline void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& source = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> unknown;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.resize(hash);
    }
    line = detail::trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const ConfigKey* k = find_config_key(key);
    if (!k) {
      unknown.push_back(key);
      continue;
    }
    try {
      k->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!unknown.empty()) {
    std::string msg = source + ": unknown config key(s):";
    for (const auto& u : unknown) {
      msg += " " + u;
    }
    throw std::invalid_argument(msg);
  }
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  cfg.validate();
  return cfg;
}

/// Full `key = value` dump; parsing it reproduces `cfg` exactly.
inline std::string dump_config(const TrainConfig& cfg, bool with_help = false) {
  std::ostringstream out;
  for (const auto& k : config_keys()) {
    if (with_help) {
      out << "# " << k.help << '\n';
    }
    out << k.name << " = " << k.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace hazeforge
