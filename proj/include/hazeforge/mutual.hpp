#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "dcp.hpp"
#include "image.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "networks.hpp"
#include "optim.hpp"
#include "scatter.hpp"

namespace hazeforge {

// ---------------------------------------------------------------------------
// Sample cycle

/// A rebuilt hazy image and the student output it was rebuilt from.
struct PseudoPair {
  Image hazy;
  Image clean;
  double p = 1.0;
  std::string source;
  std::size_t epoch = 0;
};

/// Bounded FIFO of pseudo pairs; the oldest pair is evicted when full.
class SampleCycleBuffer {
public:
  explicit SampleCycleBuffer(std::size_t capacity = 512) : capacity_(capacity) {
    if (capacity == 0) {
      throw std::invalid_argument("SampleCycleBuffer: capacity must be positive");
    }
  }

  void push(PseudoPair pair) {
    if (!pair.hazy.same_shape(pair.clean)) {
      throw std::invalid_argument("SampleCycleBuffer: pseudo pair images differ in shape");
    }
    if (pairs_.size() == capacity_) {
      pairs_.pop_front();
    }
    pairs_.push_back(std::move(pair));
  }

  /// Uniform draw; the buffer must be non-empty.
  template <class Rng>
  const PseudoPair& sample(Rng& rng) const {
    if (pairs_.empty()) {
      throw std::logic_error("SampleCycleBuffer: sample from empty buffer");
    }
    std::uniform_int_distribution<std::size_t> pick(0, pairs_.size() - 1);
    return pairs_[pick(rng)];
  }

  std::size_t size() const { return pairs_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return pairs_.empty(); }
  const PseudoPair& operator[](std::size_t i) const { return pairs_.at(i); }

private:
  std::size_t capacity_;
  std::deque<PseudoPair> pairs_;
};

/**
 * @brief Rebuilds pseudo pairs from dehazed outputs and their transmissions.
 *
 * A is estimated from each original hazy image; p is drawn per pair.
 */
template <class Rng>
void harvest_from_outputs(const std::vector<Image>& real, const std::vector<std::string>& ids,
                          const std::vector<Image>& dehazed, const std::vector<TransmissionMap>& trans, int patch,
                          const DensitySampler& sampler, Rng& rng, SampleCycleBuffer& buffer, std::size_t epoch) {
  if (real.size() != dehazed.size() || real.size() != trans.size() || real.size() != ids.size()) {
    throw std::invalid_argument("harvest: batch lists differ in length");
  }
  for (std::size_t i = 0; i < real.size(); ++i) {
    const Airlight a = estimate_airlight(real[i], patch);
    const DensityFactor p = sampler(rng);
    buffer.push({hda_rebuild(dehazed[i], trans[i], a, p), dehazed[i], p.value(), ids[i], epoch});
  }
}

/// y = student(x), t = tnet(y), x' = rebuild(y, t^p, A(x)); pushes (x', y).
template <class StudentFn, class TNetFn, class Rng>
void harvest_pseudo_pairs(const std::vector<Image>& real, const std::vector<std::string>& ids, StudentFn&& student,
                          TNetFn&& tnet, int patch, const DensitySampler& sampler, Rng& rng, SampleCycleBuffer& buffer,
                          std::size_t epoch) {
  const std::vector<Image> dehazed = student(real);
  const std::vector<TransmissionMap> trans = tnet(dehazed);
  harvest_from_outputs(real, ids, dehazed, trans, patch, sampler, rng, buffer, epoch);
}

// ---------------------------------------------------------------------------
// Batches

/// One synthetic training example, loaded once.
struct SyntheticExample {
  std::string name;
  Image hazy;
  Image clean;
  Image trans;  // ground truth, or the DCP estimate when the dataset has none
};

struct RealExample {
  std::string name;
  Image hazy;
};

struct TrainBatch {
  std::vector<Image> syn_hazy;
  std::vector<Image> syn_clean;
  std::vector<Image> syn_trans;
  std::vector<Image> pseudo_hazy;
  std::vector<Image> pseudo_clean;
  std::vector<Image> real_hazy;
  std::vector<std::string> real_ids;

  std::size_t pseudo_count() const { return pseudo_hazy.size(); }
};

namespace detail {

template <class Rng>
GeomOp random_op(Rng& rng) {
  static constexpr GeomOp ops[] = {GeomOp::identity, GeomOp::rot90, GeomOp::rot180, GeomOp::rot270, GeomOp::hflip};
  return ops[std::uniform_int_distribution<int>(0, 4)(rng)];
}

template <class Rng>
CropWindow random_crop(Rng& rng, const Image& img, std::size_t size) {
  if (img.height() < size || img.width() < size) {
    throw std::invalid_argument("compose_batch: image " + std::to_string(img.height()) + "x" +
                                std::to_string(img.width()) + " smaller than crop " + std::to_string(size));
  }
  const std::size_t y = std::uniform_int_distribution<std::size_t>(0, img.height() - size)(rng);
  const std::size_t x = std::uniform_int_distribution<std::size_t>(0, img.width() - size)(rng);
  return {x, y, size};
}

}  // namespace detail

/**
 * @brief Draws a training batch: batch_size/2 synthetic slots and batch_size/2 real images.
 *
 * Every slot is augmented by a random crop then a random rotation or flip.
 * From hda_start_epoch on, each synthetic slot is replaced by a buffer sample
 * with probability hda_replace_prob. Replacement draws use `hda_rng`, so the
 * data stream from `data_rng` is the same with or without the sample cycle.
 */
template <class Rng>
TrainBatch compose_batch(const std::vector<SyntheticExample>& syn_pool, const std::vector<RealExample>& real_pool,
                         const SampleCycleBuffer& buffer, std::size_t epoch, const TrainConfig& cfg, Rng& data_rng,
                         Rng& hda_rng) {
  if (syn_pool.empty() || real_pool.empty()) {
    throw std::invalid_argument("compose_batch: empty synthetic or real pool");
  }
  TrainBatch batch;
  const std::size_t half = cfg.batch_size / 2;
  const bool gate_open = epoch >= cfg.hda_start_epoch;
  for (std::size_t i = 0; i < half; ++i) {
    const auto& ex = syn_pool[std::uniform_int_distribution<std::size_t>(0, syn_pool.size() - 1)(data_rng)];
    const CropWindow win = detail::random_crop(data_rng, ex.hazy, cfg.crop);
    const GeomOp op = detail::random_op(data_rng);
    bool replace = false;
    if (gate_open && !buffer.empty() && cfg.hda_replace_prob > 0.0) {
      replace = std::bernoulli_distribution(cfg.hda_replace_prob)(hda_rng);
    }
    if (replace) {
      const PseudoPair& pp = buffer.sample(hda_rng);
      const GeomOp pop = detail::random_op(hda_rng);
      batch.pseudo_hazy.push_back(apply_geom(pp.hazy, pop));
      batch.pseudo_clean.push_back(apply_geom(pp.clean, pop));
      continue;
    }
    batch.syn_hazy.push_back(apply_geom(crop(ex.hazy, win), op));
    batch.syn_clean.push_back(apply_geom(crop(ex.clean, win), op));
    batch.syn_trans.push_back(apply_geom(crop(ex.trans, win), op));
  }
  for (std::size_t i = 0; i < half; ++i) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, real_pool.size() - 1)(data_rng);
    const auto& ex = real_pool[k];
    const CropWindow win = detail::random_crop(data_rng, ex.hazy, cfg.crop);
    const GeomOp op = detail::random_op(data_rng);
    batch.real_hazy.push_back(apply_geom(crop(ex.hazy, win), op));
    batch.real_ids.push_back(ex.name);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Training state and one step

/// Loss components and schedule values of one step. Absent terms are 0.
struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0;
  double momentum = 0;
  double total = 0;
  double rc = 0;
  double rc_hda = 0;
  double per = 0;
  double adv = 0;
  double dc = 0;
  double disc = 0;
  double tnet = 0;
  std::size_t pseudo = 0;
  std::size_t buffer = 0;

  std::string to_log() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "step=%zu\tepoch=%zu\tlr=%.9g\tmomentum=%.9g\tloss_total=%.9g\tloss_rc=%.9g\tloss_hda=%.9g\t"
                  "loss_per=%.9g\tloss_adv=%.9g\tloss_dc=%.9g\tloss_disc=%.9g\tloss_tnet=%.9g\tpseudo=%zu\tbuffer=%zu",
                  step, epoch, lr, momentum, total, rc, rc_hda, per, adv, dc, disc, tnet, pseudo, buffer);
    return buf;
  }
};

/// Thrown when a network output or loss becomes NaN or infinite.
class NonFiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a loss becomes non-finite; what() carries the step metrics.
class NanAbort : public NonFiniteError {
public:
  explicit NanAbort(const StepMetrics& m)
      : NonFiniteError("non-finite loss, aborting; step metrics: " + m.to_log()), metrics(m) {}
  StepMetrics metrics;
};

/// Sub-steps of train_step, reported to an optional observer after each completes.
enum class StepStage { teacher_supervised, student_forward, unsupervised, teacher_update, discriminator, ema, tnet };

struct TrainState {
  TrainConfig cfg;
  DehazeNet<float> teacher;
  DehazeNet<float> student;
  TNet<float> tnet;
  PatchDiscriminator<float> disc;
  RandomConvExtractor<float> extractor;
  ParameterList<float> teacher_params;
  ParameterList<float> student_params;
  ParameterList<float> tnet_params;
  ParameterList<float> disc_params;
  AdamState<float> teacher_opt;
  AdamState<float> tnet_opt;
  AdamState<float> disc_opt;
  EmaState<float> ema;
  SampleCycleBuffer buffer;
  DensitySampler p_sampler;
  std::mt19937_64 data_rng;
  std::mt19937_64 hda_rng;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::function<void(StepStage)> observer;

  explicit TrainState(const TrainConfig& c)
      : cfg(c),
        teacher(c.net),
        student(c.net),
        tnet(c.tnet_base),
        disc(c.disc_base),
        extractor(RandomConvExtractorConfig{c.extractor_seed, {8, 16, 32}, true, true}),
        buffer(c.buffer_capacity),
        p_sampler(c.p_min, c.p_max),
        data_rng(c.seed ^ 0xda7aULL),
        hda_rng(c.seed ^ 0x4dc1eULL) {
    cfg.validate();
    std::mt19937_64 init_rng(c.seed);
    teacher.init(init_rng);
    tnet.init(init_rng);
    disc.init(init_rng);
    teacher_params = teacher.parameters();
    student_params = student.parameters();
    tnet_params = tnet.parameters();
    disc_params = disc.parameters();
    copy_values(teacher_params, student_params);
    set_trainable(student_params, false);
    ema.decay = c.ema_decay;
    ema.shadow = tensors_of(student_params);
  }

  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  AdamHyper hyper(const LrMomentum& s) const { return {s.lr, s.momentum, cfg.adam_beta2, cfg.adam_eps}; }

  void notify(StepStage s) const {
    if (observer) {
      observer(s);
    }
  }
};

namespace detail {

inline double value_of(const Tensor<float>& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; }

inline bool finite_metrics(const StepMetrics& m) {
  for (double v : {m.total, m.rc, m.rc_hda, m.per, m.adv, m.dc, m.disc, m.tnet}) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

inline std::vector<Image> transmissions_to_images(const Tensor<float>& t) { return tensor_to_images(t); }

}  // namespace detail

/**
 * @brief One training step, in order:
 * (1) teacher on the synthetic slots (and pseudo pairs): reconstruction and
 *     perceptual losses;
 * (2) student on the real half, outputs kept for the sample cycle;
 * (3) mutual paradigms only: adversarial + dark-channel loss on the real half,
 *     reaching the teacher through cfg.unsup_grad_path;
 * (4) Adam on the teacher with the cyclic learning rate;
 * (5) discriminator: clean ground truth vs detached real-domain outputs;
 * (6) student <- EMA of teacher;
 * (7) T-Net step on clean synthetic crops against their transmission.
 * Afterwards, from hda_start_epoch on, pseudo pairs are harvested from (2).
 * Throws NanAbort before any parameter update if a loss is non-finite.
 */
inline StepMetrics train_step(TrainState& s, const TrainBatch& batch) {
  const TrainConfig& cfg = s.cfg;
  if (batch.real_hazy.empty() || (batch.syn_hazy.empty() && batch.pseudo_hazy.empty())) {
    throw std::invalid_argument("train_step: empty batch");
  }
  StepMetrics m;
  m.step = s.step;
  m.epoch = s.epoch;
  m.pseudo = batch.pseudo_count();
  const LrMomentum sched = cyclic_lr(s.step, cfg.schedule);
  m.lr = sched.lr;
  m.momentum = sched.momentum;
  const bool mutual = is_mutual(cfg.paradigm);
  const bool teacher_on_real = mutual && cfg.unsup_grad_path == UnsupGradPath::teacher_forward;
  const bool frozen_path = mutual && cfg.unsup_grad_path == UnsupGradPath::student_frozen;

  zero_grads(s.teacher_params);
  set_trainable(s.disc_params, false);

  // (1) One teacher pass over [synthetic | pseudo | real (mutual)], sliced afterwards.
  std::vector<Image> inputs = batch.syn_hazy;
  inputs.insert(inputs.end(), batch.pseudo_hazy.begin(), batch.pseudo_hazy.end());
  const std::size_t n_syn = batch.syn_hazy.size();
  const std::size_t n_pseudo = batch.pseudo_hazy.size();
  const std::size_t n_real = batch.real_hazy.size();
  if (mutual) {
    inputs.insert(inputs.end(), batch.real_hazy.begin(), batch.real_hazy.end());
  }
  const Tensor<float> teacher_out = s.teacher(images_to_tensor<float>(inputs));
  LossComponents<float> parts;
  Tensor<float> rc_syn;
  Tensor<float> rc_hda;
  if (n_syn > 0) {
    const Tensor<float> out_syn = slice_batch(teacher_out, 0, n_syn);
    const Tensor<float> gt_syn = images_to_tensor<float>(batch.syn_clean);
    rc_syn = charbonnier(out_syn, gt_syn);
    parts.per = feature_loss(out_syn, gt_syn, s.extractor);
  }
  if (n_pseudo > 0) {
    rc_hda = charbonnier(slice_batch(teacher_out, n_syn, n_pseudo), images_to_tensor<float>(batch.pseudo_clean));
  }
  if (rc_syn.defined() && rc_hda.defined()) {
    parts.rc = reconstruction_loss(slice_batch(teacher_out, 0, n_syn), images_to_tensor<float>(batch.syn_clean),
                                   slice_batch(teacher_out, n_syn, n_pseudo),
                                   images_to_tensor<float>(batch.pseudo_clean), cfg.weights.hda);
  } else if (rc_syn.defined()) {
    parts.rc = rc_syn;
  } else {
    parts.rc = scale(rc_hda, static_cast<float>(cfg.weights.hda));
  }
  m.rc = detail::value_of(rc_syn);
  m.rc_hda = detail::value_of(rc_hda);
  m.per = detail::value_of(parts.per);
  s.notify(StepStage::teacher_supervised);

  // (2) Student on the real half.
  const Tensor<float> real_in = images_to_tensor<float>(batch.real_hazy);
  Tensor<float> student_out;
  {
    NoGradGuard guard;
    student_out = s.student(real_in);
  }
  s.notify(StepStage::student_forward);

  // (3) Unsupervised real-domain loss.
  Tensor<float> real_dehazed = student_out;
  if (mutual) {
    const Tensor<float> teacher_real = slice_batch(teacher_out, n_syn + n_pseudo, n_real);
    UnsupervisedTerms<float> t = unsupervised_terms(teacher_real, s.disc, cfg.weights, cfg.dc_patch);
    if (teacher_on_real) {
      parts.adv = t.adv;
      parts.dc = t.dc;
      m.adv = detail::value_of(t.adv);
      m.dc = detail::value_of(t.dc);
    } else if (frozen_path) {
      // The student's loss value, carried by the teacher's gradient direction.
      UnsupervisedTerms<float> st;
      {
        NoGradGuard guard;
        st = unsupervised_terms(student_out, s.disc, cfg.weights, cfg.dc_patch);
      }
      const double ratio_adv = t.adv.item() > 0.0f ? st.adv.item() / static_cast<double>(t.adv.item()) : 0.0;
      const double ratio_dc = t.dc.item() > 0.0f ? st.dc.item() / static_cast<double>(t.dc.item()) : 0.0;
      parts.adv = scale(t.adv, static_cast<float>(ratio_adv));
      parts.dc = scale(t.dc, static_cast<float>(ratio_dc));
      m.adv = detail::value_of(st.adv);
      m.dc = detail::value_of(st.dc);
    }
    real_dehazed = teacher_real;
  } else {
    NoGradGuard guard;
    const UnsupervisedTerms<float> st = unsupervised_terms(student_out, s.disc, cfg.weights, cfg.dc_patch);
    m.adv = detail::value_of(st.adv);
    m.dc = detail::value_of(st.dc);
  }
  const Tensor<float> total = total_loss(parts, cfg.weights);
  m.total = detail::value_of(total);
  m.buffer = s.buffer.size();
  if (!std::isfinite(m.total) || !detail::finite_metrics(m)) {
    set_trainable(s.disc_params, true);
    throw NanAbort(m);
  }
  backward(total);
  s.notify(StepStage::unsupervised);

  // (4) Teacher update.
  adam_step(s.teacher_params, s.teacher_opt, s.hyper(sched));
  s.notify(StepStage::teacher_update);

  // (5) Discriminator: real = clean ground truth, fake = detached real-domain output.
  set_trainable(s.disc_params, true);
  if (n_syn > 0) {
    zero_grads(s.disc_params);
    const Tensor<float> d_real = s.disc(images_to_tensor<float>(batch.syn_clean));
    const Tensor<float> d_fake = s.disc(real_dehazed.detach());
    const Tensor<float> d_loss =
        scale(add(bce_mean(d_real, 1.0f, static_cast<float>(kProbabilityFloor)),
                  bce_mean(d_fake, 0.0f, static_cast<float>(kProbabilityFloor))),
              0.5f);
    m.disc = detail::value_of(d_loss);
    if (!std::isfinite(m.disc)) {
      throw NanAbort(m);
    }
    backward(d_loss);
    adam_step(s.disc_params, s.disc_opt, s.hyper(sched));
  }
  s.notify(StepStage::discriminator);

  // (6) Student tracks the teacher.
  ema_update(s.ema, tensors_of(s.teacher_params));
  s.notify(StepStage::ema);

  // (7) T-Net on clean synthetic crops.
  if (n_syn > 0) {
    zero_grads(s.tnet_params);
    const Tensor<float> t_pred = s.tnet(images_to_tensor<float>(batch.syn_clean));
    const Tensor<float> t_loss = charbonnier(t_pred, images_to_tensor<float>(batch.syn_trans));
    m.tnet = detail::value_of(t_loss);
    if (!std::isfinite(m.tnet)) {
      throw NanAbort(m);
    }
    backward(t_loss);
    adam_step(s.tnet_params, s.tnet_opt, s.hyper(sched));
  }
  s.notify(StepStage::tnet);

  // Sample cycle: rebuild pseudo pairs from this step's student outputs.
  if (s.epoch >= cfg.hda_start_epoch) {
    NoGradGuard guard;
    const std::vector<Image> dehazed = tensor_to_images(student_out);
    std::vector<TransmissionMap> trans;
    for (const Image& t : tensor_to_images(s.tnet(student_out))) {
      trans.emplace_back(t);
    }
    harvest_from_outputs(batch.real_hazy, batch.real_ids, dehazed, trans, cfg.dc_patch, s.p_sampler, s.hda_rng,
                         s.buffer, s.epoch);
  }
  m.buffer = s.buffer.size();
  ++s.step;
  return m;
}

// ---------------------------------------------------------------------------
// Inference and validation

/// Runs `net` on one image of any size: reflect-pads to even sides, crops back.
inline Image dehaze_image(const DehazeNet<float>& net, const Image& hazy) {
  if (hazy.channels() != 3) {
    throw std::invalid_argument("dehaze_image: expected an RGB image");
  }
  NoGradGuard guard;
  const Image padded = pad_reflect_to_multiple(hazy, 2);
  const Tensor<float> out = net(images_to_tensor<float>({padded}));
  if (!std::all_of(out.data().begin(), out.data().end(), [](float v) { return std::isfinite(v); })) {
    throw NonFiniteError("non-finite network output");
  }
  return crop_top_left(tensor_to_image(out, 0), hazy.height(), hazy.width());
}

struct ValidationResult {
  std::optional<MetricReport> synthetic;
  std::optional<MetricReport> real;
  std::vector<Image> synthetic_outputs;
};

inline MetricReport score_images(const DehazeNet<float>& net, const std::vector<std::string>& names,
                                 const std::vector<Image>& hazy, const std::vector<Image>& reference,
                                 std::vector<Image>* outputs = nullptr) {
  MetricReport report;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Image out = dehaze_image(net, hazy[i]);
    report.add(names[i], psnr(out, reference[i]), ssim(out, reference[i]));
    if (outputs) {
      outputs->push_back(std::move(out));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints of the full training state

inline std::string rng_bytes(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Checkpoint make_checkpoint(const TrainState& s) {
  Checkpoint c;
  c.add_parameters("teacher.", s.teacher_params);
  c.add_parameters("student.", s.student_params);
  c.add_parameters("tnet.", s.tnet_params);
  c.add_parameters("disc.", s.disc_params);
  auto add_opt = [&c](const std::string& prefix, const AdamState<float>& opt) {
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
      c.add(prefix + ".m." + std::to_string(i), {opt.m[i].size()}, opt.m[i]);
      c.add(prefix + ".v." + std::to_string(i), {opt.v[i].size()}, opt.v[i]);
    }
    c.add_u64(prefix + ".step", opt.step);
  };
  add_opt("opt.teacher", s.teacher_opt);
  add_opt("opt.tnet", s.tnet_opt);
  add_opt("opt.disc", s.disc_opt);
  c.add_u64("meta.step", s.step);
  c.add_u64("meta.epoch", s.epoch);
  c.add_u64("meta.seed", s.cfg.seed);
  c.add_bytes("meta.config", dump_config(s.cfg));
  c.add_bytes("meta.rng.data", rng_bytes(s.data_rng));
  c.add_bytes("meta.rng.hda", rng_bytes(s.hda_rng));
  return c;
}

/// The configuration a checkpoint was trained with.
inline TrainConfig checkpoint_config(const Checkpoint& c) {
  TrainConfig cfg;
  apply_config_text(cfg, c.get_bytes("meta.config"), "checkpoint config");
  cfg.validate();
  return cfg;
}

/// Rebuilds the inference network (the EMA student) stored in a checkpoint.
inline DehazeNet<float> load_student(const Checkpoint& c) {
  DehazeNet<float> net(checkpoint_config(c).net);
  c.restore_parameters("student.", net.parameters());
  return net;
}

// ---------------------------------------------------------------------------
// Full runs

struct RunOptions {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const StepMetrics&, const TrainBatch&)> on_batch;
  std::ostream* progress = nullptr;
  bool write_samples = true;
};

struct RunResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  std::size_t steps = 0;
  std::optional<MetricReport> last_synthetic;
  std::optional<MetricReport> last_real;
};

struct LoadedData {
  std::vector<SyntheticExample> train;
  std::vector<std::string> val_names;
  std::vector<Image> val_hazy;
  std::vector<Image> val_clean;
  std::vector<RealExample> real;
  std::vector<std::string> real_ref_names;
  std::vector<Image> real_ref_hazy;
  std::vector<Image> real_ref_clean;
};

/**
 * @brief Loads a dataset for training. The last `val_pairs` pairs (sorted by
 * name) are held out; without trans/ the target transmission of each training
 * pair is the DCP estimate on its hazy image.
 */
inline LoadedData load_training_data(const DatasetLayout& layout, const TrainConfig& cfg) {
  LoadedData d;
  if (layout.pairs.size() <= cfg.val_pairs) {
    throw std::invalid_argument("dataset has " + std::to_string(layout.pairs.size()) +
                                " pairs; need more than val_pairs = " + std::to_string(cfg.val_pairs));
  }
  const std::size_t n_train = layout.pairs.size() - cfg.val_pairs;
  for (std::size_t i = 0; i < layout.pairs.size(); ++i) {
    PairedSample s = load_pair(layout, layout.pairs[i]);
    if (i < n_train) {
      Image t = s.trans ? *s.trans
                        : estimate_transmission(s.hazy, estimate_airlight(s.hazy, cfg.dc_patch), cfg.dc_patch).image();
      d.train.push_back({s.name, std::move(s.hazy), std::move(s.clean), std::move(t)});
    } else {
      d.val_names.push_back(s.name);
      d.val_hazy.push_back(std::move(s.hazy));
      d.val_clean.push_back(std::move(s.clean));
    }
  }
  for (const auto& name : layout.real) {
    d.real.push_back({name, load_image(layout.real_image(name).string())});
  }
  for (const auto& name : layout.real_references) {
    d.real_ref_names.push_back(name);
    d.real_ref_hazy.push_back(load_image(layout.real_image(name).string()));
    d.real_ref_clean.push_back(load_image(layout.real_reference(name).string()));
  }
  return d;
}

namespace detail {

inline std::string step_tag(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step%08zu", step);
  return buf;
}

inline std::string validation_log(std::size_t step, std::size_t epoch, const ValidationResult& v) {
  char buf[256];
  std::string line = "step=" + std::to_string(step) + "\tepoch=" + std::to_string(epoch);
  if (v.synthetic) {
    std::snprintf(buf, sizeof buf, "\tval_syn_psnr=%.9g\tval_syn_ssim=%.9g", v.synthetic->mean_psnr(),
                  v.synthetic->mean_ssim());
    line += buf;
  }
  if (v.real) {
    std::snprintf(buf, sizeof buf, "\tval_real_psnr=%.9g\tval_real_ssim=%.9g", v.real->mean_psnr(), v.real->mean_ssim());
    line += buf;
  }
  return line;
}

}  // namespace detail

inline ValidationResult validate(const TrainState& s, const LoadedData& d) {
  ValidationResult v;
  if (!d.val_names.empty()) {
    v.synthetic = score_images(s.student, d.val_names, d.val_hazy, d.val_clean, &v.synthetic_outputs);
  }
  if (!d.real_ref_names.empty()) {
    v.real = score_images(s.student, d.real_ref_names, d.real_ref_hazy, d.real_ref_clean);
  }
  return v;
}

/**
 * @brief Trains for cfg.epochs epochs and writes the run directory:
 * config.txt (before the first step), metrics.log (one tab-separated
 * key=value record per step and per validation), checkpoints/, samples/ and
 * final.hzf. An epoch is ceil(training pairs / (batch_size / 2)) steps.
 */
inline RunResult run_training(const TrainConfig& cfg, const DatasetLayout& layout, const std::filesystem::path& run_dir,
                              const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  const LoadedData data = load_training_data(layout, cfg);
  std::vector<RealExample> real_pool;
  if (is_split(cfg.paradigm)) {
    real_pool = data.real;
  } else {
    for (const auto& ex : data.train) {
      real_pool.push_back({ex.name, ex.hazy});
    }
  }
  if (real_pool.empty()) {
    throw std::invalid_argument("no real-domain images for training");
  }

  fs::create_directories(run_dir / "checkpoints");
  {
    std::ofstream snap(run_dir / "config.txt");
    snap << dump_config(cfg);
    if (!snap) {
      throw std::runtime_error("cannot write " + (run_dir / "config.txt").string());
    }
  }
  RunResult result;
  result.metrics_log = run_dir / "metrics.log";
  std::ofstream log(result.metrics_log, std::ios::trunc);
  if (!log) {
    throw std::runtime_error("cannot write " + result.metrics_log.string());
  }

  TrainState s(cfg);
  const std::size_t half = cfg.batch_size / 2;
  const std::size_t steps_per_epoch = (data.train.size() + half - 1) / half;

  auto run_validation = [&](std::size_t epoch_done) {
    ValidationResult v = validate(s, data);
    log << detail::validation_log(s.step, epoch_done, v) << '\n';
    log.flush();
    if (opt.write_samples && !v.synthetic_outputs.empty()) {
      const fs::path dir = run_dir / "samples" / ("epoch" + std::to_string(epoch_done));
      fs::create_directories(dir);
      save_image(v.synthetic_outputs.front(), (dir / data.val_names.front()).string());
    }
    result.last_synthetic = v.synthetic;
    result.last_real = v.real;
    if (opt.progress) {
      *opt.progress << detail::validation_log(s.step, epoch_done, v) << '\n';
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    s.epoch = epoch;
    for (std::size_t k = 0; k < steps_per_epoch; ++k) {
      const TrainBatch batch = compose_batch(data.train, real_pool, s.buffer, epoch, cfg, s.data_rng, s.hda_rng);
      const StepMetrics m = train_step(s, batch);
      if (opt.on_batch) {
        opt.on_batch(m, batch);
      }
      log << m.to_log() << '\n';
      if (opt.on_step) {
        opt.on_step(m);
      }
    }
    log.flush();
    const std::size_t done = epoch + 1;
    if (done % cfg.val_every == 0 || done == cfg.epochs) {
      run_validation(done);
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      save_checkpoint(make_checkpoint(s), run_dir / "checkpoints" / (detail::step_tag(s.step) + ".hzf"));
    }
  }
  if (cfg.epochs == 0) {
    run_validation(0);
  }
  s.epoch = cfg.epochs;
  result.final_checkpoint = run_dir / "final.hzf";
  save_checkpoint(make_checkpoint(s), result.final_checkpoint);
  result.steps = s.step;
  if (!log) {
    throw std::runtime_error("failed writing " + result.metrics_log.string());
  }
  return result;
}

}  // namespace hazeforge
