#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "hedgebench/error.hpp"
#include "hedgebench/train.hpp"

using namespace hedgebench;

namespace {

struct Fixture {
  PathBatch train_paths, val_paths;
  NormStats stats;
  FeatureTensor train_features, val_features;
  ArchConfig arch;

  explicit Fixture(int steps = 6, std::size_t n_train = 40, std::size_t n_val = 10) {
    HestonParams p;
    p.n_steps = steps;
    const auto all = simulate_paths(p, n_train + n_val, 3);
    train_paths = all.rows(0, n_train);
    val_paths = all.rows(n_train, n_val);
    stats = compute_norm_stats(train_paths);
    train_features = normalize(train_paths, stats);
    val_features = normalize(val_paths, stats);
    arch.hidden_dim = 5;
  }
  Dataset train_set() const { return {&train_features, &train_paths.prices}; }
  Dataset val_set() const { return {&val_features, &val_paths.prices}; }

  TrainResult run(const TrainConfig& c) const {
    return train(c, arch, train_set(), val_set(), OptionSpec{}, CostModel{});
  }
};

TrainConfig quick(OptimizerKind kind, int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.optimizer = kind;
  c.adam.lr = 1e-2;
  return c;
}

}  // namespace

TEST(TrainConfig, DefaultsMirrorExperiment) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 100);
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_EQ(c.kfac.lr, 0.1);
  EXPECT_EQ(c.kfac.damping, 1e-2);
  EXPECT_EQ(c.kfac.ema_decay, 0.95);
}

TEST(Train, ZeroLearningRatesLeaveParametersUnchanged) {
  Fixture fx;
  for (const auto kind : {OptimizerKind::Adam, OptimizerKind::Kfac}) {
    auto c = quick(kind, 1);
    c.adam.lr = 0.0;
    c.kfac.lr = 0.0;
    const auto r = fx.run(c);
    EXPECT_EQ(r.curve.size(), 1u);
    EXPECT_EQ(r.params.flatten(), init_policy(fx.arch, c.seed).flatten());
  }
}

TEST(Train, SameSeedIsBitIdentical) {
  Fixture fx;
  for (const auto kind : {OptimizerKind::Adam, OptimizerKind::Kfac}) {
    const auto a = fx.run(quick(kind));
    const auto b = fx.run(quick(kind));
    EXPECT_EQ(a.params.flatten(), b.params.flatten());
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
      EXPECT_EQ(a.curve[i].val_loss, b.curve[i].val_loss);
    }
  }
}

TEST(Train, OptimizersShareInitialisationAndOrder) {
  // With every learning rate at zero the optimizer choice must be invisible.
  Fixture fx;
  auto a = quick(OptimizerKind::Adam, 2);
  auto k = quick(OptimizerKind::Kfac, 2);
  a.adam.lr = k.adam.lr = k.kfac.lr = 0.0;
  const auto ra = fx.run(a);
  const auto rk = fx.run(k);
  EXPECT_EQ(ra.params.flatten(), rk.params.flatten());
  EXPECT_EQ(ra.curve[1].train_loss, rk.curve[1].train_loss);
}

TEST(Train, LossImprovesOnSmallProblem) {
  Fixture fx(8, 64, 16);
  auto c = quick(OptimizerKind::Adam, 15);
  const auto r = fx.run(c);
  EXPECT_LT(r.curve.back().train_loss, r.curve.front().train_loss);
  auto k = quick(OptimizerKind::Kfac, 15);
  const auto rk = fx.run(k);
  EXPECT_LT(rk.curve.back().train_loss, rk.curve.front().train_loss);
}

TEST(Train, RaggedTailIsDropped) {
  Fixture fx(4, 43, 5);
  const auto r = fx.run(quick(OptimizerKind::Adam, 1));
  EXPECT_EQ(r.dropped_per_epoch, 3u);
}

TEST(Train, RejectsMisalignedData) {
  Fixture fx;
  auto bad = fx.val_set();
  bad.prices = &fx.train_paths.prices;
  EXPECT_THROW(train(quick(OptimizerKind::Adam), fx.arch, fx.train_set(), bad, OptionSpec{}, CostModel{}), Error);
}

TEST(EpochOrder, IsPermutationAndDeterministic) {
  const auto a = epoch_order(100, 7, 3);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(a, epoch_order(100, 7, 3));
  EXPECT_NE(a, epoch_order(100, 7, 4));
  EXPECT_NE(a, epoch_order(100, 8, 3));
}

TEST(Convergence, EpochLookup) {
  std::vector<EpochRecord> curve(3);
  const double losses[] = {5, 4, 3};
  for (int i = 0; i < 3; ++i) {
    curve[i].epoch = i + 1;
    curve[i].val_loss = losses[i];
  }
  EXPECT_EQ(convergence_epoch(curve, 3.5), 3);
  EXPECT_FALSE(convergence_epoch(curve, 1.0).has_value());
  EXPECT_EQ(convergence_epoch(curve, 5.0), 1);
}

TEST(CurveCsv, RoundTrip) {
  std::vector<EpochRecord> curve{{1, 2.5, 3.25, -0.1, 0.01, 0.5}, {2, 1.0 / 3.0, 2.0, -0.2, 0.02, 0.25}};
  std::stringstream ss;
  write_curve_csv(curve, ss);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "epoch,train_loss,val_loss,val_mean_pnl,val_mean_cost,seconds");
  const auto back = read_curve_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].train_loss, 1.0 / 3.0);
  EXPECT_EQ(back[0].seconds, 0.5);
  std::stringstream bad("epoch,loss\n1,2\n");
  EXPECT_THROW(read_curve_csv(bad), Error);
}

namespace {

ModelDocument sample_model(const Fixture& fx) {
  ModelDocument m;
  m.params = fx.run(quick(OptimizerKind::Kfac, 1)).params;
  m.norm = fx.stats;
  m.train_seed = 7;
  m.optimizer = "kfac";
  m.option.strike = 95.0;
  m.option.side = OptionSide::Long;
  m.cost.rate = 0.002;
  m.lambda = 0.5;
  m.n_train_paths = 40;
  m.sim_seed = 3;
  m.config_hash = "0123456789abcdef";
  return m;
}

}  // namespace

TEST(ModelDocument, RoundTripReproducesHedges) {
  Fixture fx;
  const auto m = sample_model(fx);
  std::stringstream ss;
  save_model(m, ss);
  const auto back = load_model(ss);
  EXPECT_EQ(back.params.flatten(), m.params.flatten());
  EXPECT_EQ(predict(back.params, fx.val_features), predict(m.params, fx.val_features));
  EXPECT_EQ(back.norm.price_std, m.norm.price_std);
  EXPECT_EQ(back.option.strike, 95.0);
  EXPECT_EQ(back.option.side, OptionSide::Long);
  EXPECT_EQ(back.cost.rate, 0.002);
  EXPECT_EQ(back.n_train_paths, 40u);
  EXPECT_EQ(back.config_hash, m.config_hash);
}

TEST(ModelDocument, TruncatedFileIsParseError) {
  Fixture fx;
  std::stringstream ss;
  save_model(sample_model(fx), ss);
  const std::string text = ss.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  try {
    load_model(cut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(ModelDocument, ArchitectureMismatchIsValidationError) {
  Fixture fx;
  std::stringstream ss;
  save_model(sample_model(fx), ss);
  std::string text = ss.str();
  const auto pos = text.find("\"hidden_dim\"");
  ASSERT_NE(pos, std::string::npos);
  const auto colon = text.find(':', pos);
  const auto end = text.find_first_of(",}\n", colon);
  text.replace(colon + 1, end - colon - 1, " 6");
  std::stringstream edited(text);
  try {
    load_model(edited);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
}
