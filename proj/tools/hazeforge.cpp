// hazeforge command-line tool: gen-toy, train, infer, eval, dcp, hda.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "hazeforge/hazeforge.hpp"

namespace hf = hazeforge;

namespace {

std::string defaults_footer() {
  return "\nTraining config keys (defaults; set in --config as 'key = value' or on `train` as --key value):\n" +
         hf::dump_config(hf::TrainConfig{}, true);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hazeforge: mutual-learning image dehazing at desk scale"};
  app.footer(defaults_footer());
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  app.add_option("--seed", seed, "Seed for gen-toy and train (overrides the config)");
  app.add_option("--config", config_path, "Training config file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory or file of the command");

  auto* gen = app.add_subcommand("gen-toy", "Write a procedural toy dataset");
  std::size_t toy_count = 16;
  std::size_t toy_size = 96;
  gen->add_option("--count", toy_count, "Images per directory")->capture_default_str();
  gen->add_option("--size", toy_size, "Square image side in pixels")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train teacher, student, T-Net and discriminator");
  std::string data_root;
  train->add_option("--data", data_root, "Dataset root (hazy/, clean/, optional trans/, real/)")->required();
  std::map<std::string, std::string> overrides;
  for (const auto& key : hf::config_keys()) {
    if (key.name == "seed") {
      continue;
    }
    train->add_option_function<std::string>(
        "--" + key.name, [&overrides, name = key.name](const std::string& v) { overrides[name] = v; }, key.help);
  }

  auto* infer = app.add_subcommand("infer", "Dehaze images with a checkpoint's student network");
  std::string ckpt_path;
  std::string infer_input;
  infer->add_option("--checkpoint", ckpt_path, "Checkpoint file (.hzf)")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", infer_input, "Image file or directory")->required();

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of every image in DIR_A against DIR_B");
  std::string dir_a;
  std::string dir_b;
  eval->add_option("dir_a", dir_a, "Images to score")->required();
  eval->add_option("dir_b", dir_b, "References with matching file names")->required();

  auto* dcp = app.add_subcommand("dcp", "Classical dark-channel-prior dehazing");
  std::string dcp_input;
  int dcp_patch = hf::kDefaultDarkChannelPatch;
  double dcp_omega = 0.95;
  dcp->add_option("--input", dcp_input, "Image file or directory")->required();
  dcp->add_option("--patch", dcp_patch, "Dark-channel window (odd)")->capture_default_str();
  dcp->add_option("--omega", dcp_omega, "Haze retention factor")->capture_default_str();

  auto* hda = app.add_subcommand("hda", "Rebuild a hazy image with transmission raised to p");
  std::string hda_hazy;
  std::string hda_dehazed;
  std::string hda_trans;
  hf::HdaOptions hda_opt;
  hda->add_option("--hazy", hda_hazy, "Original hazy image (source of A and t)")->required();
  hda->add_option("--dehazed", hda_dehazed, "Dehazed image to rebuild from")->required();
  hda->add_option("--p", hda_opt.p, "Density factor p > 0")->capture_default_str();
  hda->add_option("--trans", hda_trans, "Transmission map to use instead of the DCP estimate");
  hda->add_flag("--sweep", hda_opt.sweep, "Write outputs for p in {0.5, 0.8, 1.0, 1.2, 1.4}");

  CLI11_PARSE(app, argc, argv);

  auto need_out = [&out](const char* verb) {
    if (out.empty()) {
      throw CLI::RequiredError(std::string("--out (required by ") + verb + ")");
    }
  };

  try {
    if (*gen) {
      need_out("gen-toy");
      const auto layout = hf::cmd_gen_toy(out, toy_count, toy_size, seed.value_or(7));
      std::cout << "root=" << layout.root.string() << "\tpairs=" << layout.pairs.size()
                << "\treal=" << layout.real.size() << '\n';
    } else if (*train) {
      need_out("train");
      hf::TrainConfig cfg;
      if (!config_path.empty()) {
        cfg = hf::load_config(config_path);
      }
      std::string text;
      for (const auto& [k, v] : overrides) {
        text += k + " = " + v + "\n";
      }
      hf::apply_config_text(cfg, text, "command line");
      if (seed) {
        cfg.seed = *seed;
      }
      cfg.validate();
      const auto result = hf::cmd_train(cfg, data_root, out, &std::cerr);
      std::cout << "checkpoint=" << result.final_checkpoint.string() << "\tsteps=" << result.steps;
      if (result.last_synthetic) {
        std::cout << "\tval_syn_psnr=" << result.last_synthetic->mean_psnr()
                  << "\tval_syn_ssim=" << result.last_synthetic->mean_ssim();
      }
      if (result.last_real) {
        std::cout << "\tval_real_psnr=" << result.last_real->mean_psnr()
                  << "\tval_real_ssim=" << result.last_real->mean_ssim();
      }
      std::cout << '\n';
    } else if (*infer) {
      need_out("infer");
      for (const auto& p : hf::cmd_infer(ckpt_path, infer_input, out)) {
        std::cout << "wrote=" << p.string() << '\n';
      }
    } else if (*eval) {
      hf::cmd_eval(dir_a, dir_b, std::cout);
    } else if (*dcp) {
      need_out("dcp");
      for (const auto& p : hf::cmd_dcp(dcp_input, out, dcp_patch, dcp_omega)) {
        std::cout << "wrote=" << p.string() << '\n';
      }
    } else if (*hda) {
      need_out("hda");
      if (!hda_trans.empty()) {
        hda_opt.trans = hda_trans;
      }
      for (const auto& p : hf::cmd_hda(hda_hazy, hda_dehazed, out, hda_opt)) {
        std::cout << "wrote=" << p.string() << '\n';
      }
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const hf::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
