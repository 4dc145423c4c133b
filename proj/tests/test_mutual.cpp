#include <gtest/gtest.h>

#include <map>
#include <random>

#include "oracles.hpp"
#include "support.hpp"

using namespace hazeforge;

namespace {

TrainConfig small_config(Paradigm paradigm = Paradigm::mutual_split) {
  TrainConfig c;
  c.seed = 3;
  c.batch_size = 4;
  c.crop = 16;
  c.net = DehazeNetConfig{2, 8, 1, 4, true};
  c.tnet_base = 4;
  c.disc_base = 4;
  c.dc_patch = 5;
  c.hda_start_epoch = 1;
  c.paradigm = paradigm;
  return c;
}

struct Pools {
  std::vector<SyntheticExample> syn;
  std::vector<RealExample> real;
};

Pools make_pools(std::uint64_t seed, std::size_t n = 4, std::size_t size = 32) {
  std::mt19937_64 rng(seed);
  Pools p;
  for (std::size_t i = 0; i < n; ++i) {
    const ToyScene s = make_toy_scene(rng, size, kSyntheticRegime);
    p.syn.push_back({toy_name(i), s.hazy, s.clean, s.trans.image()});
    p.real.push_back({toy_name(i), make_toy_scene(rng, size, kRealRegime).hazy});
  }
  return p;
}

TrainBatch draw(TrainState& s, const Pools& p) {
  return compose_batch(p.syn, p.real, s.buffer, s.epoch, s.cfg, s.data_rng, s.hda_rng);
}

PseudoPair pair_tagged(const std::string& tag, std::size_t size = 16) {
  return {Image(size, size, 3, 0.3f), Image(size, size, 3, 0.6f), 1.0, tag, 0};
}

std::vector<float> flat_grads(const ParameterList<float>& params) {
  std::vector<float> out;
  for (const auto& p : params) {
    const auto& g = p.tensor.grad();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

}  // namespace

TEST(SampleCycleBuffer, FifoEviction) {
  SampleCycleBuffer b(3);
  EXPECT_TRUE(b.empty());
  for (int i = 0; i < 5; ++i) {
    b.push(pair_tagged(std::to_string(i)));
    EXPECT_EQ(b.size(), std::min(i + 1, 3));
  }
  EXPECT_EQ(b[0].source, "2");
  EXPECT_EQ(b[2].source, "4");
  EXPECT_EQ(b.capacity(), 3u);
  EXPECT_THROW(SampleCycleBuffer(0), std::invalid_argument);
  EXPECT_THROW(b.push({Image(4, 4, 3), Image(4, 5, 3), 1.0, "x", 0}), std::invalid_argument);
  std::mt19937_64 rng(1);
  EXPECT_THROW(SampleCycleBuffer(2).sample(rng), std::logic_error);
  EXPECT_EQ(SampleCycleBuffer().capacity(), 512u);
}

TEST(ComposeBatch, GatingAndReplacementProbability) {
  const Pools pools = make_pools(1);
  SampleCycleBuffer buffer;
  for (int i = 0; i < 4; ++i) {
    buffer.push(pair_tagged("p" + std::to_string(i)));
  }
  TrainConfig cfg = small_config();
  cfg.hda_start_epoch = 5;
  cfg.hda_replace_prob = 1.0;
  auto batch_at = [&](std::size_t epoch, double prob) {
    TrainConfig c = cfg;
    c.hda_replace_prob = prob;
    std::mt19937_64 data(9), hda(10);
    return compose_batch(pools.syn, pools.real, buffer, epoch, c, data, hda);
  };
  for (std::size_t epoch = 0; epoch < 5; ++epoch) {
    EXPECT_EQ(batch_at(epoch, 1.0).pseudo_count(), 0u) << epoch;
  }
  const TrainBatch all = batch_at(5, 1.0);
  EXPECT_EQ(all.pseudo_count(), 2u);
  EXPECT_TRUE(all.syn_hazy.empty());
  const TrainBatch none = batch_at(7, 0.0);
  EXPECT_EQ(none.pseudo_count(), 0u);
  EXPECT_EQ(none.syn_hazy.size(), 2u);
  // Replacement draws come from their own generator: the real half is unchanged.
  EXPECT_EQ(all.real_hazy, none.real_hazy);
  EXPECT_EQ(all.real_ids, none.real_ids);
  for (const auto& img : all.real_hazy) {
    EXPECT_EQ(img.height(), 16u);
  }

  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    TrainConfig c = cfg;
    c.hda_replace_prob = 0.5;
    std::mt19937_64 data(seed), hda(seed + 1000);
    total += compose_batch(pools.syn, pools.real, buffer, 5, c, data, hda).pseudo_count();
  }
  EXPECT_NEAR(total / 400.0, 0.5, 0.1);
}

TEST(ComposeBatch, EmptyBufferNeverReplaces) {
  const Pools pools = make_pools(2);
  TrainConfig cfg = small_config();
  cfg.hda_start_epoch = 0;
  cfg.hda_replace_prob = 1.0;
  std::mt19937_64 data(1), hda(2);
  EXPECT_EQ(compose_batch(pools.syn, pools.real, SampleCycleBuffer(), 3, cfg, data, hda).pseudo_count(), 0u);
  EXPECT_THROW(compose_batch({}, pools.real, SampleCycleBuffer(), 0, cfg, data, hda), std::invalid_argument);
}

TEST(Harvest, RebuildsWithPluggedInNetworks) {
  const Pools pools = make_pools(3);
  std::vector<Image> real;
  std::vector<std::string> ids;
  for (const auto& r : pools.real) {
    real.push_back(r.hazy);
    ids.push_back(r.name);
  }
  std::mt19937_64 rng(4);
  SampleCycleBuffer buffer;
  const DensitySampler fixed(1.0, 1.0);
  // Student = identity, T-Net = constant 0.5, p = 1: each pair is J/2 + A/2 with A estimated from J.
  harvest_pseudo_pairs(
      real, ids, [](const std::vector<Image>& x) { return x; },
      [](const std::vector<Image>& y) {
        std::vector<TransmissionMap> t;
        for (const auto& img : y) {
          t.push_back(TransmissionMap::constant(img.height(), img.width(), 0.5f));
        }
        return t;
      },
      5, fixed, rng, buffer, 7);
  ASSERT_EQ(buffer.size(), real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    const Airlight a = estimate_airlight(real[i], 5);
    const Image expect = synthesize_haze(real[i], TransmissionMap::constant(32, 32, 0.5f), a);
    EXPECT_EQ(buffer[i].hazy, expect);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < real[i].pixels(); ++j) {
        const double y = real[i].plane(c)[j];
        ASSERT_NEAR(buffer[i].hazy.plane(c)[j], 0.5 * y + 0.5 * a[c], 1e-6);
      }
    }
    EXPECT_EQ(buffer[i].clean, real[i]);
    EXPECT_EQ(buffer[i].source, ids[i]);
    EXPECT_EQ(buffer[i].epoch, 7u);
    EXPECT_EQ(buffer[i].p, 1.0);
  }
  EXPECT_THROW(harvest_from_outputs(real, {"a"}, real, {}, 5, fixed, rng, buffer, 0), std::invalid_argument);
}

TEST(TrainStep, ZeroWeightsLeaveTeacherUnchanged) {
  const Pools pools = make_pools(5);
  TrainConfig cfg = small_config();
  cfg.weights = LossWeights{0, 0, 0, 0, 0};
  TrainState s(cfg);
  const auto before = oracle::hash_parameters(s.teacher_params);
  train_step(s, draw(s, pools));
  EXPECT_EQ(oracle::hash_parameters(s.teacher_params), before);
}

TEST(TrainStep, StagesTouchOnlyTheirOwnNetwork) {
  const Pools pools = make_pools(6);
  for (Paradigm par : {Paradigm::mutual_split, Paradigm::ts_split}) {
    TrainState s(small_config(par));
    s.epoch = 1;
    using Hashes = std::array<std::uint64_t, 4>;
    auto hashes = [&] {
      return Hashes{oracle::hash_parameters(s.teacher_params), oracle::hash_parameters(s.student_params),
                    oracle::hash_parameters(s.tnet_params), oracle::hash_parameters(s.disc_params)};
    };
    // Index of the one network each stage may change; -1 for none.
    const std::map<StepStage, int> owner{{StepStage::teacher_supervised, -1}, {StepStage::student_forward, -1},
                                         {StepStage::unsupervised, -1},       {StepStage::teacher_update, 0},
                                         {StepStage::discriminator, 3},       {StepStage::ema, 1},
                                         {StepStage::tnet, 2}};
    for (int k = 0; k < 2; ++k) {
      Hashes prev = hashes();
      std::size_t seen = 0;
      s.observer = [&](StepStage st) {
        const Hashes now = hashes();
        for (int i = 0; i < 4; ++i) {
          if (i == owner.at(st)) {
            EXPECT_NE(now[i], prev[i]) << "stage " << int(st) << " did not update network " << i;
          } else {
            EXPECT_EQ(now[i], prev[i]) << "stage " << int(st) << " modified network " << i;
          }
        }
        prev = now;
        ++seen;
      };
      train_step(s, draw(s, pools));
      EXPECT_EQ(seen, 7u);
    }
  }
}

TEST(TrainStep, EmaMovesStudentTowardTeacher) {
  const Pools pools = make_pools(7);
  TrainConfig cfg = small_config();
  cfg.ema_decay = 0.9;
  TrainState s(cfg);
  for (int k = 0; k < 3; ++k) {
    const auto student_before = tensors_of(s.student_params);
    std::vector<std::vector<float>> prev;
    for (const auto& t : student_before) {
      prev.push_back(t.data());
    }
    train_step(s, draw(s, pools));
    const auto teacher = tensors_of(s.teacher_params);
    const auto student = tensors_of(s.student_params);
    for (std::size_t i = 0; i < teacher.size(); ++i) {
      for (std::size_t j = 0; j < teacher[i].numel(); ++j) {
        const double t = teacher[i].data()[j];
        const double expect = 0.9 * prev[i][j] + 0.1 * t;
        ASSERT_NEAR(student[i].data()[j], expect, 1e-6 * (1.0 + std::abs(expect)));
        ASSERT_LE(std::abs(student[i].data()[j] - t), 0.9 * std::abs(prev[i][j] - t) + 1e-6);
      }
    }
  }
}

TEST(TrainStep, EmaRecurrenceBoundAtDefaultDecay) {
  // One step moves the student by (1 - d) of its gap to the new teacher and
  // leaves d of that gap behind.
  const Pools pools = make_pools(13);
  TrainState s(small_config());
  for (int k = 0; k < 3; ++k) {
    std::vector<float> old_student;
    for (const auto& t : tensors_of(s.student_params)) {
      old_student.insert(old_student.end(), t.data().begin(), t.data().end());
    }
    train_step(s, draw(s, pools));
    std::vector<float> teacher, student;
    for (const auto& t : tensors_of(s.teacher_params)) {
      teacher.insert(teacher.end(), t.data().begin(), t.data().end());
    }
    for (const auto& t : tensors_of(s.student_params)) {
      student.insert(student.end(), t.data().begin(), t.data().end());
    }
    double gap = 0, moved = 0, left = 0;
    for (std::size_t i = 0; i < teacher.size(); ++i) {
      gap = std::max(gap, std::abs(double(old_student[i]) - teacher[i]));
      moved = std::max(moved, std::abs(double(student[i]) - old_student[i]));
      left = std::max(left, std::abs(double(student[i]) - teacher[i]));
    }
    ASSERT_GT(gap, 0.0);
    const double ulp = 1e-7;  // float rounding of the stored shadow values
    EXPECT_LE(moved, 0.001 * gap + ulp);
    EXPECT_LE(left, 0.999 * gap + ulp);
    EXPECT_GE(left, 0.998 * gap - ulp);
  }
}

TEST(TrainStep, TeacherGradientSeesRealBatchOnlyWhenMutual) {
  const Pools pools = make_pools(8);
  std::mt19937_64 rng(99);
  for (Paradigm par : {Paradigm::mutual_split, Paradigm::ts_split, Paradigm::mutual_same}) {
    std::vector<std::vector<float>> grads;
    for (int variant = 0; variant < 2; ++variant) {
      TrainState s(small_config(par));
      TrainBatch batch = draw(s, pools);
      if (variant == 1) {
        for (auto& img : batch.real_hazy) {
          img = oracle::random_image(rng, img.height(), img.width(), 3, 0.3f, 0.9f);
        }
      }
      s.observer = [&](StepStage st) {
        if (st == StepStage::unsupervised) {
          grads.push_back(flat_grads(s.teacher_params));
        }
      };
      train_step(s, batch);
    }
    ASSERT_EQ(grads.size(), 2u);
    if (is_mutual(par)) {
      EXPECT_NE(grads[0], grads[1]) << to_string(par);
    } else {
      EXPECT_EQ(grads[0], grads[1]) << to_string(par);
    }
  }
}

TEST(TrainStep, HarvestStartsAtGateEpoch) {
  const Pools pools = make_pools(9);
  TrainConfig cfg = small_config();
  cfg.hda_start_epoch = 2;
  TrainState s(cfg);
  for (std::size_t epoch = 0; epoch < 4; ++epoch) {
    s.epoch = epoch;
    const std::size_t before = s.buffer.size();
    const TrainBatch batch = draw(s, pools);
    if (epoch < 2) {
      EXPECT_EQ(batch.pseudo_count(), 0u);
    }
    train_step(s, batch);
    EXPECT_EQ(s.buffer.size() - before, epoch < 2 ? 0u : batch.real_hazy.size()) << epoch;
  }
  for (std::size_t i = 0; i < s.buffer.size(); ++i) {
    EXPECT_GE(s.buffer[i].p, cfg.p_min);
    EXPECT_LE(s.buffer[i].p, cfg.p_max);
    EXPECT_GE(s.buffer[i].epoch, 2u);
  }
}

TEST(TrainStep, PseudoOnlyBatchTrainsTeacher) {
  const Pools pools = make_pools(10);
  TrainConfig cfg = small_config();
  cfg.hda_start_epoch = 0;
  cfg.hda_replace_prob = 1.0;
  TrainState s(cfg);
  s.buffer.push(pair_tagged("x"));
  const TrainBatch batch = draw(s, pools);
  ASSERT_TRUE(batch.syn_hazy.empty());
  const auto before = oracle::hash_parameters(s.teacher_params);
  const StepMetrics m = train_step(s, batch);
  EXPECT_EQ(m.rc, 0.0);
  EXPECT_GT(m.rc_hda, 0.0);
  EXPECT_NE(oracle::hash_parameters(s.teacher_params), before);
}

TEST(TrainStep, NonFiniteLossAbortsBeforeUpdate) {
  const Pools pools = make_pools(11);
  TrainState s(small_config());
  s.teacher_params.front().tensor.data()[0] = std::numeric_limits<float>::quiet_NaN();
  const auto teacher = oracle::hash_parameters(s.teacher_params);
  const auto disc = oracle::hash_parameters(s.disc_params);
  EXPECT_THROW(train_step(s, draw(s, pools)), NanAbort);
  EXPECT_EQ(oracle::hash_parameters(s.teacher_params), teacher);
  EXPECT_EQ(oracle::hash_parameters(s.disc_params), disc);
  EXPECT_EQ(s.step, 0u);
}

TEST(TrainStep, Deterministic) {
  const Pools pools = make_pools(12);
  std::vector<std::string> logs[2];
  std::uint64_t h[2][3];
  for (int run = 0; run < 2; ++run) {
    TrainState s(small_config());
    for (std::size_t k = 0; k < 4; ++k) {
      s.epoch = k / 2;
      logs[run].push_back(train_step(s, draw(s, pools)).to_log());
    }
    h[run][0] = oracle::hash_parameters(s.teacher_params);
    h[run][1] = oracle::hash_parameters(s.student_params);
    h[run][2] = oracle::hash_parameters(s.disc_params);
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(std::vector<std::uint64_t>(h[0], h[0] + 3), std::vector<std::uint64_t>(h[1], h[1] + 3));
}

TEST(RunTraining, ZeroEpochsSavesInitialization) {
  testing_support::TempDir dir;
  const DatasetLayout layout = generate_toy_dataset(dir / "toy", ToyOptions{6, 32, 1});
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  cfg.val_pairs = 2;
  const RunResult r = run_training(cfg, layout, dir / "run");
  EXPECT_EQ(r.steps, 0u);
  const DehazeNet<float> student = load_student(load_checkpoint(r.final_checkpoint));
  TrainState fresh(cfg);
  EXPECT_EQ(oracle::hash_parameters(student.parameters()), oracle::hash_parameters(fresh.student_params));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "config.txt"));
}

TEST(RunTraining, GateHoldsAcrossARunAndLogIsReproducible) {
  testing_support::TempDir dir;
  const DatasetLayout layout = generate_toy_dataset(dir / "toy", ToyOptions{6, 32, 2});
  TrainConfig cfg = small_config();
  cfg.epochs = 4;
  cfg.hda_start_epoch = 2;
  cfg.hda_replace_prob = 1.0;
  cfg.val_pairs = 2;
  cfg.val_every = 2;
  std::size_t before_gate = 0, after_gate = 0;
  RunOptions opt;
  opt.on_batch = [&](const StepMetrics& m, const TrainBatch& b) {
    (m.epoch < 2 ? before_gate : after_gate) += b.pseudo_count();
  };
  const RunResult a = run_training(cfg, layout, dir / "a", opt);
  EXPECT_EQ(before_gate, 0u);
  EXPECT_GT(after_gate, 0u);
  EXPECT_EQ(a.steps, 8u);
  ASSERT_TRUE(a.last_synthetic.has_value());
  ASSERT_TRUE(a.last_real.has_value());
  const RunResult b = run_training(cfg, layout, dir / "b");
  EXPECT_EQ(testing_support::read_file(a.metrics_log), testing_support::read_file(b.metrics_log));
  EXPECT_EQ(testing_support::read_file(a.final_checkpoint), testing_support::read_file(b.final_checkpoint));
}
