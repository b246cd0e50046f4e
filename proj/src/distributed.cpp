#include "szoo/distributed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <optional>
#include <sstream>
#include <thread>

namespace szoo {

std::string to_string(Topology t) { return t == Topology::ring ? "ring" : "tree"; }

Topology parse_topology(const std::string& s) {
  if (s == "ring") return Topology::ring;
  if (s == "tree") return Topology::tree;
  throw std::invalid_argument("unknown reduction topology '" + s + "' (ring|tree)");
}

void WorkerPoolConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (per_worker_batch < 1) throw std::invalid_argument("per_worker_batch must be >= 1");
  if (!(base_lr > 0)) throw std::invalid_argument("base_lr must be positive");
}

std::vector<std::vector<std::vector<std::size_t>>> shard_batches(const std::vector<std::size_t>& order, int workers,
                                                                 int per_worker_batch) {
  if (workers < 1 || per_worker_batch < 1) throw std::invalid_argument("shard_batches: workers and batch must be >= 1");
  const std::size_t W = static_cast<std::size_t>(workers), b = static_cast<std::size_t>(per_worker_batch);
  std::vector<std::vector<std::vector<std::size_t>>> steps;
  for (std::size_t start = 0; start < order.size(); start += W * b) {
    const std::size_t n = std::min(W * b, order.size() - start);
    if (n < W) break;
    std::vector<std::vector<std::size_t>> shards(W);
    std::size_t pos = start;
    for (std::size_t w = 0; w < W; ++w) {
      const std::size_t len = n / W + (w < n % W ? 1 : 0);
      shards[w].assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
    }
    steps.push_back(std::move(shards));
  }
  return steps;
}

// --- reduction schedules ----------------------------------------------------------
//
// Both schedules are written as a sequence of rounds; inside a round no buffer
// region is read by one rank while another writes it, so the threaded
// communicator runs each round concurrently with a barrier in between.

namespace {

std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t W, std::size_t c) {
  const std::size_t base = n / W, extra = n % W;
  const std::size_t begin = c * base + std::min(c, extra);
  return {begin, begin + base + (c < extra ? 1 : 0)};
}

std::size_t mod(std::int64_t a, std::size_t W) {
  const auto w = static_cast<std::int64_t>(W);
  return static_cast<std::size_t>(((a % w) + w) % w);
}

// Rounds 0..W-2: reduce-scatter; rounds W-1..2W-3: all-gather.
// At reduce round s rank r adds chunk (r-1-s) of rank r-1 into its own copy.
// At gather round s rank r copies chunk (r-s) from rank r-1.
void ring_round(std::vector<std::vector<double>*>& bufs, std::size_t r, std::size_t round, std::int64_t* received) {
  const std::size_t W = bufs.size();
  const std::size_t n = bufs[0]->size();
  const std::size_t prev = mod(static_cast<std::int64_t>(r) - 1, W);
  const auto ri = static_cast<std::int64_t>(r);
  if (round + 1 < W) {
    const std::size_t c = mod(ri - 1 - static_cast<std::int64_t>(round), W);
    auto [lo, hi] = chunk_range(n, W, c);
    const double* src = bufs[prev]->data();
    double* dst = bufs[r]->data();
    for (std::size_t i = lo; i < hi; ++i) dst[i] = src[i] + dst[i];
    if (received) *received += static_cast<std::int64_t>(hi - lo);
  } else {
    const std::size_t s = round - (W - 1);
    const std::size_t c = mod(ri - static_cast<std::int64_t>(s), W);
    auto [lo, hi] = chunk_range(n, W, c);
    std::copy(bufs[prev]->begin() + static_cast<std::ptrdiff_t>(lo), bufs[prev]->begin() + static_cast<std::ptrdiff_t>(hi),
              bufs[r]->begin() + static_cast<std::ptrdiff_t>(lo));
    if (received) *received += static_cast<std::int64_t>(hi - lo);
  }
}

std::size_t ring_rounds(std::size_t W) { return W > 1 ? 2 * (W - 1) : 0; }

// Binomial tree: at level d (stride 2^d) rank r with r % 2^(d+1) == 0 adds
// rank r + 2^d. One final round broadcasts rank 0's buffer.
std::size_t tree_levels(std::size_t W) {
  std::size_t levels = 0;
  while ((std::size_t{1} << levels) < W) ++levels;
  return levels;
}

void tree_round(std::vector<std::vector<double>*>& bufs, std::size_t r, std::size_t round, std::int64_t* received) {
  const std::size_t W = bufs.size();
  const std::size_t levels = tree_levels(W);
  if (round < levels) {
    const std::size_t stride = std::size_t{1} << round;
    if (r % (2 * stride) == 0 && r + stride < W) {
      const double* src = bufs[r + stride]->data();
      double* dst = bufs[r]->data();
      for (std::size_t i = 0; i < bufs[r]->size(); ++i) dst[i] += src[i];
      if (received) *received += static_cast<std::int64_t>(bufs[r]->size());
    }
  } else if (r != 0) {
    *bufs[r] = *bufs[0];
    if (received) *received += static_cast<std::int64_t>(bufs[r]->size());
  }
}

std::size_t tree_rounds(std::size_t W) { return W > 1 ? tree_levels(W) + 1 : 0; }

void check_sizes(const std::vector<std::vector<double>*>& bufs) {
  for (const auto* b : bufs)
    if (b->size() != bufs[0]->size()) throw ProtocolError("allreduce: buffer sizes differ across workers");
}

}  // namespace

void ring_allreduce_sum(std::vector<std::vector<double>*>& bufs, std::vector<std::int64_t>* received) {
  if (bufs.empty()) return;
  check_sizes(bufs);
  if (received) received->assign(bufs.size(), 0);
  for (std::size_t round = 0; round < ring_rounds(bufs.size()); ++round)
    for (std::size_t r = 0; r < bufs.size(); ++r) ring_round(bufs, r, round, received ? &(*received)[r] : nullptr);
}

void tree_allreduce_sum(std::vector<std::vector<double>*>& bufs, std::vector<std::int64_t>* received) {
  if (bufs.empty()) return;
  check_sizes(bufs);
  if (received) received->assign(bufs.size(), 0);
  // Sequentially, the broadcast round must not overwrite rank 0 before others copy it; it never does.
  for (std::size_t round = 0; round < tree_rounds(bufs.size()); ++round)
    for (std::size_t r = 0; r < bufs.size(); ++r) tree_round(bufs, r, round, received ? &(*received)[r] : nullptr);
}

void allreduce_mean(std::vector<NamedGradients>& per_worker, Topology topology) {
  if (per_worker.empty()) return;
  const auto& ref = per_worker[0];
  for (std::size_t w = 1; w < per_worker.size(); ++w) {
    if (per_worker[w].size() != ref.size())
      throw ProtocolError("allreduce: worker " + std::to_string(w) + " sent " + std::to_string(per_worker[w].size()) +
                          " tensors, worker 0 sent " + std::to_string(ref.size()));
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (per_worker[w][i].first != ref[i].first)
        throw ProtocolError("allreduce: tensor " + std::to_string(i) + " is '" + per_worker[w][i].first + "' on worker " +
                            std::to_string(w) + " but '" + ref[i].first + "' on worker 0");
      if (per_worker[w][i].second.shape() != ref[i].second.shape())
        throw ProtocolError("allreduce: shape mismatch for '" + ref[i].first + "'");
    }
  }
  const std::size_t W = per_worker.size();
  std::vector<std::vector<double>> flat(W);
  for (std::size_t w = 0; w < W; ++w)
    for (const auto& [name, t] : per_worker[w]) {
      auto v = t.to_vector();
      flat[w].insert(flat[w].end(), v.begin(), v.end());
    }
  std::vector<std::vector<double>*> bufs;
  for (auto& f : flat) bufs.push_back(&f);
  if (topology == Topology::ring) ring_allreduce_sum(bufs);
  else tree_allreduce_sum(bufs);
  for (std::size_t w = 0; w < W; ++w) {
    std::size_t off = 0;
    for (auto& [name, t] : per_worker[w]) {
      Tensor out(t.shape(), t.precision());
      dispatch(t.precision(), [&]<typename T>() {
        auto d = out.data<T>();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(flat[w][off + i] / static_cast<double>(W));
      });
      off += static_cast<std::size_t>(t.numel());
      t = out;
    }
  }
}

Communicator::Communicator(int workers, Topology topology)
    : workers_(workers),
      topology_(topology),
      barrier_(workers),
      slots_(static_cast<std::size_t>(workers), nullptr),
      received_(static_cast<std::size_t>(workers), 0) {
  if (workers < 1) throw std::invalid_argument("Communicator: workers must be >= 1");
}

void Communicator::allreduce_sum(int rank, std::vector<double>& buf) {
  const auto r = static_cast<std::size_t>(rank);
  const std::size_t W = slots_.size();
  if (W == 1) return;
  slots_[r] = &buf;
  barrier();
  if (r == 0) {
    for (std::size_t i = 1; i < W; ++i)
      if (slots_[i]->size() != buf.size()) throw ProtocolError("allreduce: buffer sizes differ across workers");
  }
  barrier();
  const std::size_t rounds = topology_ == Topology::ring ? ring_rounds(W) : tree_rounds(W);
  for (std::size_t round = 0; round < rounds; ++round) {
    if (topology_ == Topology::ring) ring_round(slots_, r, round, &received_[r]);
    else tree_round(slots_, r, round, &received_[r]);
    barrier();
  }
}

// --- training ---------------------------------------------------------------------

namespace {

class SyncBatchNorm final : public BatchNormCollective {
 public:
  SyncBatchNorm(Communicator& comm, int rank) : comm_(&comm), rank_(rank) {}
  void allreduce_sum(std::vector<double>& values) override { comm_->allreduce_sum(rank_, values); }

 private:
  Communicator* comm_;
  int rank_;
};

bool same_bits(const ParameterStore& a, const ParameterStore& b) {
  for (ParamId id = 0; id < a.size(); ++id) {
    const Tensor& x = a.entry(id).value;
    const Tensor& y = b.entry(id).value;
    if (x.precision() != y.precision() || x.numel() != y.numel()) return false;
    const bool eq = dispatch(x.precision(), [&]<typename T>() {
      auto p = x.data<T>();
      auto q = y.data<T>();
      return p.empty() || std::memcmp(p.data(), q.data(), p.size() * sizeof(T)) == 0;
    });
    if (!eq) return false;
  }
  return true;
}

std::vector<double> flatten(const GradientSet& g) {
  std::vector<double> out;
  for (const auto& t : g)
    if (t) {
      auto v = t->to_vector();
      out.insert(out.end(), v.begin(), v.end());
    }
  return out;
}

void unflatten(const std::vector<double>& flat, double divisor, GradientSet& g) {
  std::size_t off = 0;
  for (auto& t : g) {
    if (!t) continue;
    Tensor out(t->shape(), t->precision());
    dispatch(t->precision(), [&]<typename T>() {
      // Dividing by 1 is exact, so one worker reproduces single-worker training bit for bit.
      auto d = out.data<T>();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(flat[off + i] / divisor);
    });
    off += static_cast<std::size_t>(t->numel());
    t = out;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

DistributedResult distributed_train(const Model& initial, const Dataset& ds, const WorkerPoolConfig& pool,
                                    const TrainConfig& cfg, const DistributedOptions& opt) {
  pool.validate();
  TrainConfig tc = cfg;
  tc.base_lr = pool.effective_lr();
  tc.batch_size = pool.per_worker_batch;
  tc.validate();
  if (ds.size() == 0) throw std::invalid_argument("distributed_train: empty dataset");
  if (ds.samples[0].pixels.dim(1) != initial.config().resolution)
    throw std::invalid_argument("distributed_train: dataset resolution differs from model resolution");

  const int W = pool.workers;
  const auto Wz = static_cast<std::size_t>(W);
  const auto prec = initial.params().entry(0).value.precision();

  // Build the full schedule up front so every worker agrees on it.
  std::vector<std::vector<std::vector<std::size_t>>> schedule;
  std::vector<int> step_epoch;
  for (int e = 0; e < tc.epochs; ++e) {
    auto steps = shard_batches(epoch_order(ds.size(), e, tc.seed), W, pool.per_worker_batch);
    for (auto& s : steps) {
      if (opt.max_steps > 0 && static_cast<std::int64_t>(schedule.size()) >= opt.max_steps) break;
      schedule.push_back(std::move(s));
      step_epoch.push_back(e);
    }
  }

  std::vector<Model> replicas;
  for (int w = 0; w < W; ++w) replicas.push_back(initial.clone());
  std::vector<Adam> optimizers(Wz, Adam(tc));
  Communicator comm(W, pool.topology);
  std::vector<SyncBatchNorm> sync;
  for (int w = 0; w < W; ++w) sync.emplace_back(comm, w);

  DistributedResult result;
  result.steps.resize(schedule.size());
  std::vector<double> shard_loss(Wz), shard_compute(Wz);
  std::vector<std::int64_t> bytes_before(Wz);
  std::vector<double> epoch_loss_sum(static_cast<std::size_t>(tc.epochs), 0.0);
  std::vector<std::size_t> epoch_seen(static_cast<std::size_t>(tc.epochs), 0);
  bool abort = false;

  const auto t0 = std::chrono::steady_clock::now();
  auto worker = [&](int rank) {
    const auto r = static_cast<std::size_t>(rank);
    Model& model = replicas[r];
    for (std::size_t step = 0; step < schedule.size(); ++step) {
      const auto& shards = schedule[step];
      std::size_t total = 0;
      for (const auto& s : shards) total += s.size();
      StepOptions so;
      so.bn_collective = (opt.sync_bn && W > 1) ? &sync[r] : nullptr;
      so.loss_scale = static_cast<double>(shards[r].size() * Wz) / static_cast<double>(total);
      const auto tc0 = std::chrono::steady_clock::now();
      // Inputs were validated up front; an exception here would strand the
      // peers inside a collective, so it ends the process instead.
      std::optional<Model> before;
      if (opt.verify_linearity && rank == 0) before = model.clone();
      StepResult g;
      try {
        g = compute_gradients(model, make_batch(ds, shards[r], prec), so);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "worker %d failed at step %zu: %s\n", rank, step, e.what());
        std::abort();
      }
      shard_loss[r] = g.loss;
      shard_compute[r] = seconds_since(tc0);
      comm.barrier();

      auto tr0 = std::chrono::steady_clock::now();
      bytes_before[r] = comm.received(rank);
      auto flat = flatten(g.grads);
      comm.allreduce_sum(rank, flat);
      unflatten(flat, static_cast<double>(W), g.grads);
      const double reduce_s = seconds_since(tr0);

      const double lr = lr_schedule(step_epoch[step], tc);
      optimizers[r].step(model.params(), g.grads, lr);

      double lin_err = 0.0;
      if (before) {
        std::vector<std::size_t> all;
        for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());
        auto full = compute_gradients(*before, make_batch(ds, all, prec));
        for (ParamId id = 0; id < full.grads.size(); ++id) {
          if (!full.grads[id] || !g.grads[id]) continue;
          auto a = full.grads[id]->to_vector();
          auto b = g.grads[id]->to_vector();
          for (std::size_t i = 0; i < a.size(); ++i) lin_err = std::max(lin_err, std::abs(a[i] - b[i]));
        }
      }
      comm.barrier();

      if (rank == 0) {
        double loss = 0.0;
        for (std::size_t w = 0; w < Wz; ++w) loss += shard_loss[w] * static_cast<double>(shards[w].size());
        loss /= static_cast<double>(total);
        auto& st = result.steps[step];
        st.step = static_cast<std::int64_t>(step);
        st.epoch = step_epoch[step];
        st.loss = loss;
        st.compute_seconds = *std::max_element(shard_compute.begin(), shard_compute.end());
        st.reduce_seconds = reduce_s;
        std::int64_t bytes = 0;
        for (int w = 0; w < W; ++w) bytes += (comm.received(w) - bytes_before[static_cast<std::size_t>(w)]) * 8;
        st.reduction_bytes = bytes;
        st.linearity_error = lin_err;
        result.max_linearity_error = std::max(result.max_linearity_error, lin_err);
        for (std::size_t w = 1; w < Wz; ++w)
          if (!same_bits(replicas[0].params(), replicas[w].params())) result.replicas_identical = false;
        if (!std::isfinite(loss)) abort = true;
        epoch_loss_sum[static_cast<std::size_t>(st.epoch)] += loss * static_cast<double>(total);
        epoch_seen[static_cast<std::size_t>(st.epoch)] += total;
      }
      comm.barrier();
      if (abort) return;
    }
  };

  std::vector<std::thread> threads;
  for (int w = 1; w < W; ++w) threads.emplace_back(worker, w);
  worker(0);
  for (auto& t : threads) t.join();

  if (abort) {
    for (const auto& st : result.steps)
      if (!std::isfinite(st.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(st.epoch) + ", step " + std::to_string(st.step));
  }
  result.stats.wall_seconds = seconds_since(t0);
  result.stats.steps = static_cast<std::int64_t>(schedule.size());
  for (int e = 0; e < tc.epochs; ++e)
    if (epoch_seen[static_cast<std::size_t>(e)] > 0)
      result.stats.epoch_loss.push_back(epoch_loss_sum[static_cast<std::size_t>(e)] /
                                        static_cast<double>(epoch_seen[static_cast<std::size_t>(e)]));
  result.model = std::move(replicas[0]);
  return result;
}

std::string step_stats_csv(const std::vector<StepStat>& steps) {
  std::ostringstream os;
  os.precision(9);
  os << "step,epoch,loss,compute_seconds,reduce_seconds,reduction_bytes,linearity_error\n";
  for (const auto& s : steps)
    os << s.step << ',' << s.epoch << ',' << s.loss << ',' << s.compute_seconds << ',' << s.reduce_seconds << ','
       << s.reduction_bytes << ',' << s.linearity_error << '\n';
  return os.str();
}

}  // namespace szoo
