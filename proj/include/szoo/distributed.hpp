#pragma once

// Synchronous data-parallel training over in-process worker threads.

#include <barrier>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "szoo/training.hpp"

namespace szoo {

enum class Topology { ring, tree };
std::string to_string(Topology t);
Topology parse_topology(const std::string& s);

struct WorkerPoolConfig {
  int workers = 1;
  int per_worker_batch = 32;
  Topology topology = Topology::ring;
  double base_lr = 1e-3;

  double effective_lr() const { return base_lr * workers; }
  void validate() const;
};

/// Step t uses order[t*W*b, (t+1)*W*b); worker w takes the w-th contiguous run
/// of b indices. A short final step is split into near-equal contiguous runs
/// (earlier workers take the extra sample); a tail smaller than W is dropped.
/// Result is indexed [step][worker].
std::vector<std::vector<std::vector<std::size_t>>> shard_batches(const std::vector<std::size_t>& order, int workers,
                                                                 int per_worker_batch);

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedGradients = std::vector<std::pair<std::string, Tensor>>;

/// Elementwise mean across workers; every worker's entry is overwritten with
/// the same result. Summation runs in double in the topology's fixed order.
void allreduce_mean(std::vector<NamedGradients>& per_worker, Topology topology = Topology::ring);

/// Shared-memory exchange for W threads. Every collective call must be made by
/// all ranks in the same order.
class Communicator {
 public:
  Communicator(int workers, Topology topology);

  int size() const { return workers_; }
  Topology topology() const { return topology_; }

  /// On return buf holds the sum over ranks, identical on every rank.
  void allreduce_sum(int rank, std::vector<double>& buf);
  void barrier() { barrier_.arrive_and_wait(); }
  /// Doubles each rank has read from peers so far.
  std::int64_t received(int rank) const { return received_[static_cast<std::size_t>(rank)]; }

 private:
  int workers_;
  Topology topology_;
  std::barrier<> barrier_;
  std::vector<std::vector<double>*> slots_;
  std::vector<std::int64_t> received_;
};

/// Sequential versions of the two reduction schedules over W buffers.
void ring_allreduce_sum(std::vector<std::vector<double>*>& bufs, std::vector<std::int64_t>* received = nullptr);
void tree_allreduce_sum(std::vector<std::vector<double>*>& bufs, std::vector<std::int64_t>* received = nullptr);

struct DistributedOptions {
  /// Synchronized batch statistics; needed for the large-batch equivalence.
  bool sync_bn = true;
  /// Stop after this many optimizer steps (0 = run every epoch).
  std::int64_t max_steps = 0;
  /// Per step, recompute the full-batch gradient on one replica and compare it with the reduced gradient.
  bool verify_linearity = false;
};

struct StepStat {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double compute_seconds = 0.0;  // slowest worker
  double reduce_seconds = 0.0;
  std::int64_t reduction_bytes = 0;  // summed over workers
  double linearity_error = 0.0;
};

struct DistributedResult {
  Model model;
  TrainStats stats;
  std::vector<StepStat> steps;
  /// Replica weights compared bitwise after every step.
  bool replicas_identical = true;
  double max_linearity_error = 0.0;
};

/// lr follows lr_schedule with base_lr replaced by pool.effective_lr();
/// cfg.batch_size is ignored in favour of pool.per_worker_batch.
DistributedResult distributed_train(const Model& initial, const Dataset& ds, const WorkerPoolConfig& pool,
                                    const TrainConfig& cfg, const DistributedOptions& opt = {});

std::string step_stats_csv(const std::vector<StepStat>& steps);

}  // namespace szoo
