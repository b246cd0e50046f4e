#include "szoo/training.hpp"

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "szoo/serialize.hpp"

namespace szoo {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (epochs > 0 && decay_epoch >= epochs)
    throw std::invalid_argument("decay_epoch " + std::to_string(decay_epoch) + " must be below epochs " + std::to_string(epochs));
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(base_lr > 0)) throw std::invalid_argument("base_lr must be positive");
}

Tensor bce_loss(const Tensor& logits, const Tensor& targets) { return bce_with_logits(logits, targets); }

double lr_schedule(int epoch, const TrainConfig& cfg) {
  return epoch >= cfg.decay_epoch ? cfg.base_lr * cfg.decay_factor : cfg.base_lr;
}

void Adam::step(ParameterStore& params, const GradientSet& grads, double lr) {
  if (m_.size() < params.size()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (ParamId id = 0; id < grads.size(); ++id) {
    if (!grads[id]) continue;
    Tensor& p = params.entry(id).value;
    const Tensor& g = *grads[id];
    if (!m_[id]) {
      m_[id] = Tensor(p.shape(), p.precision());
      v_[id] = Tensor(p.shape(), p.precision());
    }
    dispatch(p.precision(), [&]<typename T>() {
      auto pd = p.data<T>();
      auto gd = g.data<T>();
      auto md = m_[id]->data<T>();
      auto vd = v_[id]->data<T>();
      const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_), e = static_cast<T>(eps_);
      const T ic1 = static_cast<T>(1.0 / c1), ic2 = static_cast<T>(1.0 / c2), a = static_cast<T>(lr);
      for (std::size_t i = 0; i < pd.size(); ++i) {
        md[i] = b1 * md[i] + (T(1) - b1) * gd[i];
        vd[i] = b2 * vd[i] + (T(1) - b2) * gd[i] * gd[i];
        pd[i] -= a * (md[i] * ic1) / (std::sqrt(vd[i] * ic2) + e);
      }
    });
  }
}

StepResult compute_gradients(Model& model, const Batch& batch, const StepOptions& opt) {
  Tape tape;
  Context ctx(model.params(), &tape, true);
  if (opt.frozen) ctx.freeze(opt.frozen);
  ctx.bn_collective = opt.bn_collective;
  Tensor loss = bce_loss(model.forward(ctx, batch.x), batch.y);
  StepResult r;
  r.loss = loss.item();
  tape.backward(opt.loss_scale == 1.0 ? loss : scale(loss, opt.loss_scale));
  r.grads.resize(model.params().size());
  for (ParamId id = 0; id < model.params().size(); ++id) r.grads[id] = ctx.grad(id);
  return r;
}

std::vector<std::size_t> epoch_order(std::size_t n, int epoch, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(epoch));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

TrainStats train(Model& model, const Dataset& ds, const TrainConfig& cfg, const StepOptions& opt,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  if (ds.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (!ds.samples.empty() && ds.samples[0].pixels.dim(1) != model.config().resolution)
    throw std::invalid_argument("train: dataset resolution " + std::to_string(ds.samples[0].pixels.dim(1)) +
                                " differs from model resolution " + std::to_string(model.config().resolution));
  TrainStats stats;
  Adam adam(cfg);
  const auto prec = model.params().entry(0).value.precision();
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto order = epoch_order(ds.size(), e, cfg.seed);
    const double lr = lr_schedule(e, cfg);
    double total = 0;
    std::size_t seen = 0;
    int b = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++b) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      auto step = compute_gradients(model, make_batch(ds, idx, prec), opt);
      if (!std::isfinite(step.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(e) + ", batch " + std::to_string(b));
      adam.step(model.params(), step.grads, lr);
      total += step.loss * static_cast<double>(idx.size());
      seen += idx.size();
      ++stats.steps;
    }
    stats.epoch_loss.push_back(total / static_cast<double>(seen));
    if (on_epoch) on_epoch(e, stats.epoch_loss.back());
  }
  stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

EvalResult evaluate(Model& model, const Dataset& ds, double tau, int batch_size) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  EvalResult r;
  std::vector<LabelSet> labels;
  const auto prec = model.params().entry(0).value.precision();
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t start = 0; start < ds.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto b = make_batch(ds, idx, prec);
    auto p = rows(sigmoid(model.predict(b.x)));
    for (auto& row : p) r.probabilities.push_back(std::move(row));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& s : ds.samples) labels.push_back(s.labels);
  r.report = make_report(r.probabilities, labels, tau);
  r.inference_rate = static_cast<double>(ds.size()) / std::max(secs, 1e-9);
  return r;
}

// --- checkpoints ------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'Z', 'O', 'O'};

void put_u32(std::vector<unsigned char>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<unsigned char>& o, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) o.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::vector<unsigned char>& b;
  std::size_t pos = 0;
  std::size_t limit;
  void need(std::size_t n) {
    if (pos + n > limit) throw CheckpointError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    return s;
  }
};

std::uint32_t crc_of(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace

std::vector<unsigned char> checkpoint_bytes(const Model& model) {
  std::vector<unsigned char> o(kMagic, kMagic + 4);
  put_u32(o, kCheckpointVersion);
  const std::string cfg = config_to_json(model.config()).dump();
  put_u32(o, static_cast<std::uint32_t>(cfg.size()));
  o.insert(o.end(), cfg.begin(), cfg.end());
  const auto& entries = model.params().entries();
  put_u32(o, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(o, static_cast<std::uint32_t>(e.name.size()));
    o.insert(o.end(), e.name.begin(), e.name.end());
    put_u32(o, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) put_u64(o, static_cast<std::uint64_t>(d));
    Tensor v = e.value.precision() == Precision::f32 ? e.value : e.value.to(Precision::f32);
    for (float f : v.data<float>()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(o, bits);
    }
  }
  put_u32(o, crc_of(o.data(), o.size()));
  return o;
}

Model model_from_checkpoint(const std::vector<unsigned char>& b) {
  if (b.size() < 12) throw CheckpointError("checkpoint too short");
  Reader tail{b, b.size() - 4, b.size()};
  if (tail.u32() != crc_of(b.data(), b.size() - 4)) throw CheckpointError("checkpoint CRC mismatch");
  Reader r{b, 0, b.size() - 4};
  if (r.str(4) != std::string(kMagic, 4)) throw CheckpointError("bad checkpoint magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto cfg_len = r.u32();
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(r.str(cfg_len)));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  Model m = build_model(cfg, 0);
  const auto count = r.u32();
  if (count != m.params().size())
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(m.params().size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const auto id = m.params().find(name);
    if (!id) throw CheckpointError("checkpoint tensor '" + name + "' is not part of the model");
    Shape s(r.u32());
    for (auto& d : s) d = static_cast<std::int64_t>(r.u64());
    Tensor& dst = m.params().entry(*id).value;
    if (s != dst.shape()) throw CheckpointError("shape mismatch for '" + name + "': " + shape_str(s) + " vs " + shape_str(dst.shape()));
    auto d = dst.data<float>();
    for (auto& f : d) {
      const auto bits = r.u32();
      std::memcpy(&f, &bits, 4);
    }
  }
  if (r.pos != r.limit) throw CheckpointError("trailing bytes in checkpoint");
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = checkpoint_bytes(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return model_from_checkpoint(bytes);
}

// --- fine-tuning --------------------------------------------------------------------

bool is_head_param(const std::string& name) { return name.rfind(kHeadPrefix, 0) == 0; }

Model finetune(const Model& source, const Dataset& ds, int new_num_classes, bool freeze_backbone, const TrainConfig& cfg,
               std::uint64_t head_seed, TrainStats* stats) {
  ModelConfig c = source.config();
  c.num_classes = new_num_classes;
  Model m = build_model(c, head_seed);
  for (ParamId id = 0; id < m.params().size(); ++id) {
    auto& e = m.params().entry(id);
    if (is_head_param(e.name)) continue;
    const auto src = source.params().find(e.name);
    if (!src) throw std::invalid_argument("finetune: source lacks '" + e.name + "'");
    e.value = source.params().entry(*src).value.clone();
  }
  StepOptions opt;
  if (freeze_backbone) opt.frozen = [](const std::string& n) { return !is_head_param(n); };
  auto s = train(m, ds, cfg, opt);
  if (stats) *stats = s;
  return m;
}

}  // namespace szoo
