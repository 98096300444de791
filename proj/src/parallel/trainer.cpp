#include "docclf/parallel/trainer.hpp"

#include <ostream>

namespace docclf {

void ParallelConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("parallel: workers must be >= 1");
  if (batch_per_worker < 1) throw std::invalid_argument("parallel: batch_per_worker must be >= 1");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("train: max_steps must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  for (const auto &[group, rate] : group_lrs)
    if (!(rate >= 0.0)) throw std::invalid_argument("train: learning rate for group '" + group + "' must be >= 0");
  sgd.validate();
  adam.validate();
}

long steps_per_epoch(std::size_t train_size, int global_batch) {
  if (global_batch < 1) throw std::invalid_argument("global batch must be >= 1");
  return static_cast<long>(train_size / static_cast<std::size_t>(global_batch));
}

std::vector<std::size_t> epoch_order(const std::vector<std::size_t> &ids, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(ids);
  std::mt19937_64 rng(detail::mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

long planned_steps(std::size_t train_size, const ParallelConfig &pcfg, const TrainConfig &tcfg) {
  const long per_epoch = steps_per_epoch(train_size, pcfg.global_batch());
  if (per_epoch < 1) {
    throw std::invalid_argument("training set of " + std::to_string(train_size) +
                                " samples is smaller than the global batch of " +
                                std::to_string(pcfg.global_batch()));
  }
  const long total = per_epoch * tcfg.epochs;
  return tcfg.max_steps > 0 ? std::min(total, tcfg.max_steps) : total;
}

double schedule_factor(const TrainConfig &tcfg, long step, long total_steps) {
  if (tcfg.schedule == ScheduleKind::constant) return 1.0;
  StlrConfig cfg{tcfg.lr, total_steps, tcfg.cut_frac, tcfg.ratio};
  // Too few steps for a warmup segment: fall back to the peak rate.
  if (cfg.cut() < 1 || cfg.cut() >= total_steps) return 1.0;
  return stlr_lr(step, cfg) / tcfg.lr;
}

void SpeedupReport::write_csv(std::ostream &os) const {
  os << csv_header << '\n';
  for (const auto &r : rows)
    os << r.k << ',' << r.wall_seconds << ',' << r.samples_per_sec << ',' << r.speedup << ',' << r.efficiency << '\n';
}

std::string to_string(ScalingMode mode) { return mode == ScalingMode::weak ? "weak" : "strong"; }

ScalingMode parse_scaling_mode(const std::string &name) {
  if (name == "weak") return ScalingMode::weak;
  if (name == "strong") return ScalingMode::strong;
  throw std::invalid_argument("unknown scaling mode '" + name + "' (expected weak or strong)");
}

std::optional<int> max_workers_from_env() {
  const char *v = std::getenv("DOCCLF_MAX_WORKERS");
  if (!v || !*v) return std::nullopt;
  try {
    const int cap = std::stoi(v);
    if (cap >= 1) return cap;
  } catch (const std::exception &) {
  }
  throw std::invalid_argument(std::string("DOCCLF_MAX_WORKERS must be a positive integer, got '") + v + "'");
}

} // namespace docclf
