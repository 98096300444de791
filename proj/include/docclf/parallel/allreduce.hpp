#ifndef DOCCLF_PARALLEL_ALLREDUCE_HPP
#define DOCCLF_PARALLEL_ALLREDUCE_HPP

#include <atomic>
#include <barrier>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace docclf {

/// Splits a global batch into k contiguous equal shards.
template <typename T>
std::vector<std::vector<T>> shard_batch(std::span<const T> global_batch, int k) {
  if (k < 1) throw std::invalid_argument("shard_batch: k must be >= 1");
  const std::size_t n = global_batch.size();
  if (n % static_cast<std::size_t>(k) != 0) {
    throw std::invalid_argument("shard_batch: batch of " + std::to_string(n) + " is not divisible by k=" +
                                std::to_string(k));
  }
  const std::size_t per = n / static_cast<std::size_t>(k);
  std::vector<std::vector<T>> shards(static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < shards.size(); ++j)
    shards[j].assign(global_batch.begin() + static_cast<std::ptrdiff_t>(j * per),
                     global_batch.begin() + static_cast<std::ptrdiff_t>((j + 1) * per));
  return shards;
}

template <typename T>
std::vector<std::vector<T>> shard_batch(const std::vector<T> &global_batch, int k) {
  return shard_batch(std::span<const T>(global_batch), k);
}

enum class Reduction { ring, naive };

/// Thrown in surviving workers when a peer failed mid-collective.
class CollectiveAborted : public std::runtime_error {
public:
  CollectiveAborted() : std::runtime_error("collective aborted by a failed worker") {}
};

/// In-memory collective shared by k worker threads. Every worker calls
/// allreduce() with its own buffer; on return all buffers hold the
/// elementwise sum. Workers only meet at the barrier between phases.
template <typename Scalar>
class Collective {
public:
  Collective(int k, Reduction reduction = Reduction::ring, bool deterministic = true)
      : k_(k), reduction_(reduction), deterministic_(deterministic), barrier_(k), buffers_(static_cast<std::size_t>(k)) {
    if (k < 1) throw std::invalid_argument("collective: k must be >= 1");
  }

  int size() const { return k_; }

  /// Ring all-reduce: k-1 scatter-reduce phases then k-1 all-gather phases
  /// over k chunks. In scatter-reduce phase s worker j adds chunk
  /// (j-1-s) mod k of its left neighbour into its own copy, so the
  /// summation order of every element is fixed by the ring alone.
  void allreduce(int rank, std::span<Scalar> buffer) {
    if (k_ == 1) return;
    buffers_[static_cast<std::size_t>(rank)] = buffer;
    sync();
    const std::size_t len = buffer.size();
    for (const auto &b : buffers_) {
      if (b.size() != len) {
        throw std::invalid_argument("allreduce: buffer lengths differ (" + std::to_string(b.size()) + " vs " +
                                    std::to_string(len) + ")");
      }
    }
    if (reduction_ == Reduction::ring)
      ring(rank, len);
    else
      naive(rank, len);
  }

  /// Blocks until all k workers arrive.
  void sync() {
    if (aborted_.load()) throw CollectiveAborted();
    barrier_.arrive_and_wait();
    if (aborted_.load()) throw CollectiveAborted();
  }

  /// Called by a worker that is leaving because of an error; peers blocked
  /// in sync() are released and throw CollectiveAborted.
  void abort() {
    aborted_.store(true);
    barrier_.arrive_and_drop();
  }

  bool aborted() const { return aborted_.load(); }

private:
  std::size_t chunk_begin(std::size_t len, int c) const {
    return len * static_cast<std::size_t>(c) / static_cast<std::size_t>(k_);
  }
  int mod(int v) const { return ((v % k_) + k_) % k_; }

  void ring(int rank, std::size_t len) {
    auto mine = buffers_[static_cast<std::size_t>(rank)];
    auto left = buffers_[static_cast<std::size_t>(mod(rank - 1))];
    for (int s = 0; s < k_ - 1; ++s) {
      const int c = mod(rank - 1 - s);
      for (std::size_t i = chunk_begin(len, c); i < chunk_begin(len, c + 1); ++i) mine[i] += left[i];
      sync();
    }
    for (int s = 0; s < k_ - 1; ++s) {
      const int c = mod(rank - s);
      for (std::size_t i = chunk_begin(len, c); i < chunk_begin(len, c + 1); ++i) mine[i] = left[i];
      sync();
    }
  }

  /// Reference reduction through a shared accumulator: rank order when
  /// deterministic, arrival order otherwise.
  void naive(int rank, std::size_t len) {
    if (rank == 0) accumulator_.assign(len, Scalar(0));
    sync();
    if (deterministic_) {
      if (rank == 0)
        for (const auto &b : buffers_)
          for (std::size_t i = 0; i < len; ++i) accumulator_[i] += b[i];
    } else {
      std::lock_guard lock(mutex_);
      auto mine = buffers_[static_cast<std::size_t>(rank)];
      for (std::size_t i = 0; i < len; ++i) accumulator_[i] += mine[i];
    }
    sync();
    auto mine = buffers_[static_cast<std::size_t>(rank)];
    std::copy(accumulator_.begin(), accumulator_.end(), mine.begin());
    sync();
  }

  int k_;
  Reduction reduction_;
  bool deterministic_;
  std::barrier<> barrier_;
  std::vector<std::span<Scalar>> buffers_;
  std::vector<Scalar> accumulator_;
  std::mutex mutex_;
  std::atomic<bool> aborted_{false};
};

/// Runs `body(rank)` on k threads and rethrows the first failure. A worker
/// that throws aborts the collective so its peers do not block forever.
template <typename Scalar, typename Body>
void run_workers(Collective<Scalar> &collective, Body &&body) {
  const int k = collective.size();
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
  auto work = [&](int rank) {
    try {
      body(rank);
    } catch (...) {
      errors[static_cast<std::size_t>(rank)] = std::current_exception();
      collective.abort();
    }
  };
  if (k == 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(k));
    for (int r = 0; r < k; ++r) threads.emplace_back(work, r);
  }
  // Prefer the root cause over the aborts it triggered.
  std::exception_ptr aborted;
  for (const auto &e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const CollectiveAborted &) {
      aborted = e;
    } catch (...) {
      throw;
    }
  }
  if (aborted) std::rethrow_exception(aborted);
}

/// Convenience form: all-reduces k vectors in place using k threads.
template <typename Scalar>
void ring_allreduce(std::vector<std::vector<Scalar>> &vectors, Reduction reduction = Reduction::ring,
                    bool deterministic = true) {
  if (vectors.empty()) throw std::invalid_argument("ring_allreduce: no vectors");
  for (const auto &v : vectors)
    if (v.size() != vectors.front().size()) throw std::invalid_argument("ring_allreduce: vector lengths differ");
  Collective<Scalar> collective(static_cast<int>(vectors.size()), reduction, deterministic);
  run_workers(collective, [&](int rank) {
    collective.allreduce(rank, std::span<Scalar>(vectors[static_cast<std::size_t>(rank)]));
  });
}

} // namespace docclf

#endif // DOCCLF_PARALLEL_ALLREDUCE_HPP
