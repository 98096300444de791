#include "docclf/parallel/trainer.hpp"

#include <gtest/gtest.h>

#include <memory>
#include <set>
#include <sstream>

using namespace docclf;

namespace {

struct Blobs {
  Tensor<double> x;
  std::vector<int> labels;
};

std::shared_ptr<const Blobs> make_blobs(int n, int dim, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto centers = Tensor<double>::normal({classes, dim}, 2.0, rng);
  auto b = std::make_shared<Blobs>();
  b->x = Tensor<double>::normal({n, dim}, 1.0, rng);
  for (int i = 0; i < n; ++i) {
    const int c = i % classes;
    b->labels.push_back(c);
    for (int d = 0; d < dim; ++d) b->x.at(i, d) += centers.at(c, d);
  }
  return b;
}

// Two-layer classifier over fixed feature vectors.
struct MlpTask {
  using Scalar = double;
  NetworkGraph<double> net;
  std::shared_ptr<const Blobs> data;
  /// Perturbs its own parameters when it sees sample 0, to force divergence.
  bool sabotage = false;
  /// Throws when it sees this sample.
  std::optional<std::size_t> fail_on;

  MlpTask(std::shared_ptr<const Blobs> d, int hidden, std::uint64_t seed) : data(std::move(d)) {
    std::mt19937_64 rng(seed);
    const Index dim = data->x.dim(1);
    const Index classes = *std::max_element(data->labels.begin(), data->labels.end()) + 1;
    net.add_parameter("body.w", "body", Tensor<double>::normal({dim, hidden}, 0.5, rng));
    net.add_parameter("body.b", "body", Tensor<double>::zeros({hidden}));
    net.add_parameter("head.w", "head", Tensor<double>::normal({hidden, classes}, 0.5, rng));
    net.add_parameter("head.b", "head", Tensor<double>::zeros({classes}));
  }

  NetworkGraph<double> &network() { return net; }

  Var<double> logits(Graph<double> &g, std::span<const std::size_t> ids) {
    const Index dim = data->x.dim(1);
    Tensor<double> x({static_cast<Index>(ids.size()), dim});
    for (std::size_t i = 0; i < ids.size(); ++i)
      x.array().segment(static_cast<Index>(i) * dim, dim) = data->x.array().segment(static_cast<Index>(ids[i]) * dim, dim);
    const auto p = bind_parameters(g, net);
    auto h = dropout(gelu(linear(g.constant(x), p[0], p[1])), 0.0);
    return linear(h, p[2], p[3]);
  }

  Var<double> loss(Graph<double> &g, std::span<const std::size_t> ids, int) {
    std::vector<int> labels;
    for (auto id : ids) {
      labels.push_back(data->labels[id]);
      if (fail_on && id == *fail_on) throw std::runtime_error("bad sample");
      if (sabotage && id == 0) net.parameter(0).value[0] += 1e-3;
    }
    return softmax_crossentropy(logits(g, ids), std::span<const int>(labels));
  }

  double accuracy(const std::vector<std::size_t> &ids) {
    Graph<double> g(false);
    const auto out = logits(g, ids);
    const Index c = out->dim(1);
    int correct = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Index best = 0;
      out->value.matrix(static_cast<Index>(ids.size()), c).row(static_cast<Index>(i)).maxCoeff(&best);
      correct += best == data->labels[ids[i]];
    }
    return static_cast<double>(correct) / static_cast<double>(ids.size());
  }
};

static_assert(TrainTask<MlpTask>);

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

double max_param_diff(const NetworkGraph<double> &a, const NetworkGraph<double> &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    m = std::max(m, (a.parameters()[i].value.array() - b.parameters()[i].value.array()).abs().maxCoeff());
  return m;
}

TrainConfig sgd_config(int epochs, long max_steps = 0) {
  TrainConfig t;
  t.epochs = epochs;
  t.max_steps = max_steps;
  t.lr = 0.1;
  t.schedule = ScheduleKind::stlr;
  return t;
}

} // namespace

TEST(Trainer, WorkerCountsAgreeUnderFixedGlobalBatch) {
  const auto data = make_blobs(96, 6, 3, 1);
  const auto ids = iota_ids(96);
  for (auto opt : {OptimizerKind::sgd, OptimizerKind::adam}) {
    auto tcfg = sgd_config(5, 10);
    tcfg.optimizer = opt;
    tcfg.lr = opt == OptimizerKind::sgd ? 0.1 : 0.01;
    MlpTask ref(data, 8, 2);
    train_parallel(ref, ids, ParallelConfig{1, 8, 3}, tcfg);
    for (int k : {2, 4}) {
      MlpTask task(data, 8, 2);
      ParallelConfig pcfg{k, 8 / k, 3};
      pcfg.debug_checks = true;
      const auto result = train_parallel(task, ids, pcfg, tcfg);
      EXPECT_EQ(result.steps.size(), 10u);
      EXPECT_LE(max_param_diff(task.net, ref.net), 1e-12) << "k=" << k;
    }
  }
}

TEST(Trainer, SingleWorkerIsPlainLoop) {
  const auto data = make_blobs(40, 4, 2, 5);
  const auto ids = iota_ids(40);
  const ParallelConfig pcfg{1, 8, 11};
  const auto tcfg = sgd_config(3);
  MlpTask trained(data, 6, 7);
  train_parallel(trained, ids, pcfg, tcfg);

  MlpTask plain(data, 6, 7);
  Sgd<double> sgd(tcfg.sgd);
  const long total = planned_steps(ids.size(), pcfg, tcfg);
  long step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto order = epoch_order(ids, pcfg.seed, epoch);
    for (long s = 0; s < steps_per_epoch(ids.size(), 8); ++s, ++step) {
      plain.net.zero_grad();
      Graph<double> g(true, detail::mix_seed(pcfg.seed, static_cast<std::uint64_t>(step) * 131));
      g.backward(plain.loss(g, std::span<const std::size_t>(order.data() + s * 8, 8), epoch));
      sgd.step(plain.net.parameters(), tcfg.lr * (stlr_lr(step, StlrConfig{tcfg.lr, total, 0.1, 32}) / tcfg.lr));
    }
  }
  EXPECT_EQ(trained.net.checksum(), plain.net.checksum());
}

TEST(Trainer, StepGradientIsMeanOverGlobalBatch) {
  const auto data = make_blobs(16, 3, 2, 9);
  MlpTask task(data, 4, 1);
  const std::vector<std::size_t> batch{3, 7, 1, 12};
  // Mean of per-sample gradients.
  std::vector<Tensor<double>> mean;
  for (auto id : batch) {
    task.net.zero_grad();
    Graph<double> g(true);
    const std::size_t one[] = {id};
    g.backward(task.loss(g, one, 0));
    for (std::size_t i = 0; i < task.net.parameters().size(); ++i) {
      if (mean.size() <= i) mean.push_back(Tensor<double>::zeros(task.net.parameters()[i].value.shape()));
      mean[i].array() += task.net.parameters()[i].grad.array() / 4.0;
    }
  }
  // One SGD step without momentum at lr 1 exposes the applied gradient.
  MlpTask copy(data, 4, 1);
  const auto before = copy.net.parameters();
  TrainConfig tcfg;
  tcfg.max_steps = 1;
  tcfg.schedule = ScheduleKind::constant;
  tcfg.lr = 1.0;
  tcfg.sgd = {0.0, 0.0};
  // Order is a permutation; the batch must be the whole training list.
  train_parallel(copy, batch, ParallelConfig{2, 2, 0}, tcfg);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto applied = (before[i].value.array() - copy.net.parameters()[i].value.array()).eval();
    EXPECT_LT((applied - mean[i].array()).abs().maxCoeff(), 1e-12);
  }
}

TEST(Trainer, LossLogIsGlobalMeanAndEpochsRecorded) {
  const auto data = make_blobs(64, 4, 4, 3);
  MlpTask task(data, 8, 4);
  TrainHooks<MlpTask> hooks;
  const auto ids = iota_ids(64);
  hooks.evaluate = [&](MlpTask &t) { return t.accuracy(ids); };
  const auto r = train_parallel(task, ids, ParallelConfig{2, 4, 1}, sgd_config(4), hooks);
  ASSERT_EQ(r.epochs.size(), 4u);
  EXPECT_EQ(r.steps.size(), 4u * 8u);
  EXPECT_LT(r.epochs.back().train_loss, r.epochs.front().train_loss);
  EXPECT_GT(r.epochs.back().val_acc, 0.5);
}

TEST(Trainer, ReferenceLrWiring) {
  ParallelConfig pcfg{4, 32, 0};
  EXPECT_EQ(pcfg.global_batch(), 128);
  EXPECT_DOUBLE_EQ(reference_lr(0.2, pcfg.batch_per_worker, pcfg.workers), 0.1);
}

TEST(Trainer, EpochOrderIsSeededPermutation) {
  const auto ids = iota_ids(50);
  const auto a = epoch_order(ids, 1, 0);
  EXPECT_EQ(a, epoch_order(ids, 1, 0));
  EXPECT_NE(a, epoch_order(ids, 1, 1));
  EXPECT_NE(a, epoch_order(ids, 2, 0));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 50u);
}

TEST(Trainer, DropLastAndTooSmallData) {
  EXPECT_EQ(steps_per_epoch(35, 8), 4);
  EXPECT_THROW(planned_steps(5, ParallelConfig{2, 4, 0}, TrainConfig{}), std::invalid_argument);
}

TEST(Trainer, DebugChecksCatchDivergence) {
  const auto data = make_blobs(32, 3, 2, 1);
  MlpTask task(data, 4, 1);
  task.sabotage = true;
  ParallelConfig pcfg{2, 4, 0};
  pcfg.debug_checks = true;
  EXPECT_THROW(train_parallel(task, iota_ids(32), pcfg, sgd_config(1)), std::runtime_error);
}

TEST(Trainer, WorkerErrorPropagates) {
  const auto data = make_blobs(32, 3, 2, 1);
  MlpTask task(data, 4, 1);
  task.fail_on = 5;
  try {
    train_parallel(task, iota_ids(32), ParallelConfig{4, 2, 0}, sgd_config(1));
    FAIL();
  } catch (const CollectiveAborted &) {
    FAIL() << "root cause was masked";
  } catch (const std::runtime_error &e) {
    EXPECT_STREQ(e.what(), "bad sample");
  }
}

TEST(Speedup, ReportShapeAndCsv) {
  const auto data = make_blobs(64, 4, 2, 1);
  MlpTask task(data, 8, 1);
  for (auto mode : {ScalingMode::weak, ScalingMode::strong}) {
    const auto r = measure_speedup(task, iota_ids(64), {1, 2}, ParallelConfig{1, 4, 0}, sgd_config(1), 3, 1, mode);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(r.rows[0].speedup, 1.0);
    EXPECT_EQ(r.rows[0].efficiency, 1.0);
    EXPECT_GT(r.rows[1].samples_per_sec, 0.0);
    std::ostringstream os;
    r.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "k,wall_seconds,samples_per_sec,speedup,efficiency");
  }
  EXPECT_THROW(
      measure_speedup(task, iota_ids(64), {2, 3}, ParallelConfig{1, 3, 0}, sgd_config(1), 1, 0, ScalingMode::strong),
      std::invalid_argument);
}

TEST(Speedup, WorkerCapSkipsWithWarning) {
  const auto data = make_blobs(64, 4, 2, 1);
  MlpTask task(data, 8, 1);
  setenv("DOCCLF_MAX_WORKERS", "2", 1);
  const auto r = measure_speedup(task, iota_ids(64), {1, 2, 4}, ParallelConfig{1, 4, 0}, sgd_config(1), 2);
  unsetenv("DOCCLF_MAX_WORKERS");
  EXPECT_EQ(r.rows.size(), 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("k=4"), std::string::npos);
}
