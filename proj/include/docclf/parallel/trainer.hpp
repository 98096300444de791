#ifndef DOCCLF_PARALLEL_TRAINER_HPP
#define DOCCLF_PARALLEL_TRAINER_HPP

#include "docclf/optim/optimizer.hpp"
#include "docclf/optim/schedule.hpp"
#include "docclf/parallel/allreduce.hpp"

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace docclf {

struct ParallelConfig {
  int workers = 1;
  int batch_per_worker = 8;
  std::uint64_t seed = 0;
  Reduction reduction = Reduction::ring;
  bool deterministic = true;
  /// Compare replica checksums after every step and fail on divergence.
  bool debug_checks = false;

  int global_batch() const { return workers * batch_per_worker; }
  void validate() const;
};

enum class OptimizerKind { sgd, adam };
enum class ScheduleKind { constant, stlr };

struct TrainConfig {
  int epochs = 1;
  /// Stop after this many optimizer steps in total; 0 means no cap.
  long max_steps = 0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  SgdConfig sgd;
  AdamConfig adam;
  ScheduleKind schedule = ScheduleKind::stlr;
  /// Peak (STLR) or constant learning rate for groups without an entry below.
  double lr = 0.1;
  double cut_frac = 0.1;
  double ratio = 32.0;
  /// Absolute per-group peak rates; the schedule scales them like `lr`.
  std::map<std::string, double> group_lrs;

  void validate() const;
};

struct StepRecord {
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  /// NaN when no evaluator was supplied.
  double val_acc = 0.0;
  /// Peak rate reached during the epoch.
  double lr = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double seconds = 0.0;
};

/// What a replica must provide: its network and the mean loss over a shard
/// of sample ids. Replicas are copies of one prototype.
template <typename T>
concept TrainTask = std::copy_constructible<T> && requires(T t, Graph<typename T::Scalar> &g,
                                                           std::span<const std::size_t> ids, int epoch) {
  { t.network() } -> std::same_as<NetworkGraph<typename T::Scalar> &>;
  { t.loss(g, ids, epoch) } -> std::same_as<Var<typename T::Scalar>>;
};

/// Steps per epoch with drop-last of incomplete global batches.
long steps_per_epoch(std::size_t train_size, int global_batch);

/// Permutation of `ids` for `epoch`, a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(const std::vector<std::size_t> &ids, std::uint64_t seed, int epoch);

/// Total optimizer steps a run will take.
long planned_steps(std::size_t train_size, const ParallelConfig &pcfg, const TrainConfig &tcfg);

/// Schedule value at `step` divided by its peak: 1 for a constant schedule.
double schedule_factor(const TrainConfig &tcfg, long step, long total_steps);

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Scalar>
std::size_t gradient_length(const NetworkGraph<Scalar> &net) {
  std::size_t n = 0;
  for (const auto &p : net.parameters())
    if (p.trainable) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename Scalar>
void pack_gradients(const NetworkGraph<Scalar> &net, std::vector<Scalar> &buf) {
  std::size_t off = 0;
  for (const auto &p : net.parameters()) {
    if (!p.trainable) continue;
    const auto n = static_cast<std::size_t>(p.value.size());
    if (p.grad.empty())
      std::fill_n(buf.begin() + static_cast<std::ptrdiff_t>(off), n, Scalar(0));
    else
      std::copy_n(p.grad.data(), n, buf.begin() + static_cast<std::ptrdiff_t>(off));
    off += n;
  }
}

template <typename Scalar>
void unpack_gradients(NetworkGraph<Scalar> &net, const std::vector<Scalar> &buf, Scalar scale) {
  std::size_t off = 0;
  for (auto &p : net.parameters()) {
    if (!p.trainable) continue;
    const auto n = static_cast<std::size_t>(p.value.size());
    if (p.grad.empty()) p.zero_grad();
    for (std::size_t i = 0; i < n; ++i) p.grad[static_cast<Index>(i)] = buf[off + i] * scale;
    off += n;
  }
}

} // namespace detail

/// Hooks into a running job. Both are called on worker 0 only.
template <typename Task>
struct TrainHooks {
  /// Validation accuracy at the end of each epoch.
  std::function<double(Task &)> evaluate;
  /// Called with (steps done, seconds since start) after every step.
  std::function<void(long, double)> on_step;
};

/// Synchronous data-parallel training. Each of k workers owns a replica
/// copied from `task`, computes the mean loss over its shard of every
/// global batch, and the shard gradients are summed by all-reduce and
/// divided by k, giving the mean over the k*n global batch. Every replica
/// then applies the same optimizer step. On return `task` holds replica 0.
template <TrainTask Task>
TrainResult train_parallel(Task &task, const std::vector<std::size_t> &train_ids, const ParallelConfig &pcfg,
                           const TrainConfig &tcfg, const TrainHooks<Task> &hooks = {}) {
  using Scalar = typename Task::Scalar;
  pcfg.validate();
  tcfg.validate();
  const int k = pcfg.workers, n = pcfg.batch_per_worker;
  const long per_epoch = steps_per_epoch(train_ids.size(), pcfg.global_batch());
  const long total = planned_steps(train_ids.size(), pcfg, tcfg);

  std::vector<Task> replicas(static_cast<std::size_t>(k), task);
  Collective<Scalar> collective(k, pcfg.reduction, pcfg.deterministic);
  std::vector<std::uint64_t> checksums(static_cast<std::size_t>(k));
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();

  run_workers(collective, [&](int rank) {
    Task &replica = replicas[static_cast<std::size_t>(rank)];
    auto &net = replica.network();
    std::optional<Sgd<Scalar>> sgd;
    std::optional<Adam<Scalar>> adam;
    if (tcfg.optimizer == OptimizerKind::sgd)
      sgd.emplace(tcfg.sgd);
    else
      adam.emplace(tcfg.adam);
    // The extra trailing slot carries the shard loss through the reduction.
    std::vector<Scalar> buf(detail::gradient_length(net) + 1);

    long step = 0;
    for (int epoch = 0; epoch < tcfg.epochs && step < total; ++epoch) {
      const auto order = epoch_order(train_ids, pcfg.seed, epoch);
      double loss_sum = 0.0, peak_lr = 0.0;
      long epoch_steps = 0;
      for (long s = 0; s < per_epoch && step < total; ++s, ++step) {
        const auto *first = order.data() + s * pcfg.global_batch() + static_cast<long>(rank) * n;
        const std::span<const std::size_t> shard(first, static_cast<std::size_t>(n));

        net.zero_grad();
        Graph<Scalar> g(true, detail::mix_seed(pcfg.seed, static_cast<std::uint64_t>(step) * 131 + rank));
        auto loss = replica.loss(g, shard, epoch);
        g.backward(loss);

        detail::pack_gradients(net, buf);
        buf.back() = loss->value[0];
        collective.allreduce(rank, std::span<Scalar>(buf));
        detail::unpack_gradients(net, buf, Scalar(1) / Scalar(k));

        const double factor = schedule_factor(tcfg, step, total);
        GroupRates rates{tcfg.lr * factor, {}};
        for (const auto &[group, lr] : tcfg.group_lrs) rates.groups[group] = lr * factor;
        if (sgd)
          sgd->step(net.parameters(), rates);
        else
          adam->step(net.parameters(), rates);

        if (pcfg.debug_checks) {
          checksums[static_cast<std::size_t>(rank)] = net.checksum();
          collective.sync();
          for (int r = 0; r < k; ++r) {
            if (checksums[static_cast<std::size_t>(r)] != checksums[0]) {
              throw std::runtime_error("replica " + std::to_string(r) + " diverged from replica 0 after step " +
                                       std::to_string(step));
            }
          }
          collective.sync();
        }

        if (rank == 0) {
          const double global_loss = static_cast<double>(buf.back()) / k;
          result.steps.push_back({epoch, step, global_loss, rates.base});
          loss_sum += global_loss;
          peak_lr = std::max(peak_lr, rates.base);
          ++epoch_steps;
          if (hooks.on_step)
            hooks.on_step(step + 1, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
      }
      if (rank == 0) {
        EpochRecord rec{epoch, epoch_steps ? loss_sum / epoch_steps : 0.0, std::numeric_limits<double>::quiet_NaN(),
                        peak_lr};
        if (hooks.evaluate) rec.val_acc = hooks.evaluate(replica);
        result.epochs.push_back(rec);
      }
    }
  });

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  task = std::move(replicas.front());
  return result;
}

struct SpeedupRow {
  int k = 1;
  double wall_seconds = 0.0;
  double samples_per_sec = 0.0;
  double speedup = 1.0;
  double efficiency = 1.0;
};

struct SpeedupReport {
  std::vector<SpeedupRow> rows;
  std::vector<std::string> warnings;

  static constexpr const char *csv_header = "k,wall_seconds,samples_per_sec,speedup,efficiency";
  void write_csv(std::ostream &os) const;
};

/// Worker cap from DOCCLF_MAX_WORKERS, if set.
std::optional<int> max_workers_from_env();

/// weak: n per worker fixed, so the global batch grows with k.
/// strong: the global batch stays at n * max(k_list) and is split k ways.
enum class ScalingMode { weak, strong };

std::string to_string(ScalingMode mode);
ScalingMode parse_scaling_mode(const std::string &name);

/// For each k, `warmup` steps run untimed and then `steps` are timed;
/// S(k) is throughput(k) / throughput(1). Entries above the worker cap are
/// skipped with a warning.
template <TrainTask Task>
SpeedupReport measure_speedup(const Task &task, const std::vector<std::size_t> &train_ids,
                              const std::vector<int> &k_list, ParallelConfig pcfg, TrainConfig tcfg, long steps,
                              long warmup = 1, ScalingMode mode = ScalingMode::weak) {
  if (k_list.empty()) throw std::invalid_argument("measure_speedup: k list is empty");
  if (steps < 1) throw std::invalid_argument("measure_speedup: steps must be >= 1");
  SpeedupReport report;
  const auto cap = max_workers_from_env();
  const int global = pcfg.batch_per_worker * *std::max_element(k_list.begin(), k_list.end());

  const auto timed = [&](int k) {
    pcfg.workers = k;
    if (mode == ScalingMode::strong) {
      if (global % k != 0) {
        throw std::invalid_argument("measure_speedup: global batch " + std::to_string(global) +
                                    " does not split evenly over k=" + std::to_string(k));
      }
      pcfg.batch_per_worker = global / k;
    }
    tcfg.epochs = 1 << 20;
    tcfg.max_steps = warmup + steps;
    // Keep the schedule flat so every k does identical arithmetic per step.
    tcfg.schedule = ScheduleKind::constant;
    if (steps_per_epoch(train_ids.size(), pcfg.global_batch()) < 1) {
      throw std::invalid_argument("measure_speedup: " + std::to_string(train_ids.size()) +
                                  " samples cannot fill a global batch of " + std::to_string(pcfg.global_batch()));
    }
    Task copy = task;
    double t_warm = 0.0, t_end = 0.0;
    TrainHooks<Task> hooks;
    hooks.on_step = [&](long done, double t) {
      if (done == warmup) t_warm = t;
      t_end = t;
    };
    train_parallel(copy, train_ids, pcfg, tcfg, hooks);
    SpeedupRow row;
    row.k = k;
    row.wall_seconds = t_end - t_warm;
    row.samples_per_sec = static_cast<double>(steps) * pcfg.global_batch() / row.wall_seconds;
    return row;
  };

  std::optional<SpeedupRow> base;
  for (int k : k_list) {
    if (k < 1) throw std::invalid_argument("measure_speedup: k must be >= 1");
    if (cap && k > *cap) {
      report.warnings.push_back("skipping k=" + std::to_string(k) + ": above worker cap " + std::to_string(*cap));
      continue;
    }
    if (!base) base = timed(1);
    SpeedupRow row = k == 1 ? *base : timed(k);
    row.speedup = row.samples_per_sec / base->samples_per_sec;
    row.efficiency = row.speedup / k;
    report.rows.push_back(row);
  }
  return report;
}

} // namespace docclf

#endif // DOCCLF_PARALLEL_TRAINER_HPP
