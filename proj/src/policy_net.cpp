#include "robmapf/policy_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "robmapf/rng.hpp"

namespace robmapf::net {
namespace {

constexpr int kTaps = kKernel * kKernel;
constexpr int kCols1 = kTaps * env::kObsChannels;  // 27, tap-major then channel
constexpr int kCols2 = kTaps * kConv1Filters;      // 288

// Convolution weights are stored OHWI: column = tap * in_channels + channel.
std::array<TensorInfo, kNumTensors> make_layout() {
  std::array<TensorInfo, kNumTensors> l{{
      {"conv1.weight", {kConv1Filters, kKernel, kKernel, env::kObsChannels}, kConv1Filters, kCols1, 0, 0},
      {"conv1.bias", {kConv1Filters}, 1, kConv1Filters, 0, 0},
      {"conv2.weight", {kConv2Filters, kKernel, kKernel, kConv1Filters}, kConv2Filters, kCols2, 0, 0},
      {"conv2.bias", {kConv2Filters}, 1, kConv2Filters, 0, 0},
      {"trunk.weight", {kTrunkUnits, kFlatSize}, kTrunkUnits, kFlatSize, 0, 0},
      {"trunk.bias", {kTrunkUnits}, 1, kTrunkUnits, 0, 0},
      {"actor.weight", {env::kNumActions, kTrunkUnits}, env::kNumActions, kTrunkUnits, 0, 0},
      {"actor.bias", {env::kNumActions}, 1, env::kNumActions, 0, 0},
      {"critic.weight", {1, kTrunkUnits}, 1, kTrunkUnits, 0, 0},
      {"critic.bias", {1}, 1, 1, 0, 0},
  }};
  std::size_t offset = 0;
  for (auto& t : l) {
    t.size = static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols);
    t.offset = offset;
    offset += t.size;
  }
  return l;
}

// For each output position and kernel tap, the input position it reads
// (or -1 for zero padding).
using TapTable = std::array<std::array<int, kTaps>, env::kObsCells>;
const TapTable& tap_table() {
  static const TapTable table = [] {
    TapTable t{};
    for (int i = 0; i < env::kObsSide; ++i)
      for (int j = 0; j < env::kObsSide; ++j)
        for (int ki = 0; ki < kKernel; ++ki)
          for (int kj = 0; kj < kKernel; ++kj) {
            const int si = i + ki - 1, sj = j + kj - 1;
            const bool inside = si >= 0 && sj >= 0 && si < env::kObsSide && sj < env::kObsSide;
            t[i * env::kObsSide + j][ki * kKernel + kj] = inside ? si * env::kObsSide + sj : -1;
          }
    return t;
  }();
  return table;
}

void softmax_rows(const RowMatrix& logits, RowMatrix& probs, RowMatrix& log_probs) {
  probs.resize(logits.rows(), logits.cols());
  log_probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const float m = logits.row(b).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index a = 0; a < logits.cols(); ++a) sum += std::exp(static_cast<double>(logits(b, a) - m));
    const double log_sum = std::log(sum);
    for (Eigen::Index a = 0; a < logits.cols(); ++a) {
      const double lp = static_cast<double>(logits(b, a) - m) - log_sum;
      log_probs(b, a) = static_cast<float>(lp);
      probs(b, a) = static_cast<float>(std::exp(lp));
    }
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw NetError("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "GRPN1";

}  // namespace

const std::array<TensorInfo, kNumTensors>& tensor_layout() {
  static const auto layout = make_layout();
  return layout;
}

const TensorInfo& info(Tensor t) { return tensor_layout()[static_cast<std::size_t>(t)]; }

std::size_t parameter_count() {
  const auto& last = tensor_layout().back();
  return last.offset + last.size;
}

NetParams init_params(std::uint64_t seed) {
  NetParams p;
  Rng rng(stream_seed(seed, 0x6e6574));
  auto fill = [&](Tensor t, int fan_in, double gain) {
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    for (float& v : p.view(t).reshaped()) v = static_cast<float>(rng.uniform(-bound, bound));
  };
  fill(Tensor::Conv1Weight, kCols1, 1.0);
  fill(Tensor::Conv2Weight, kCols2, 1.0);
  fill(Tensor::TrunkWeight, kFlatSize, 1.0);
  // A small actor head starts the policy close to uniform.
  fill(Tensor::ActorWeight, kTrunkUnits, 0.01);
  fill(Tensor::CriticWeight, kTrunkUnits, 1.0);
  return p;
}

int PolicyBatch::argmax(Eigen::Index row) const {
  Eigen::Index best = 0;
  logits.row(row).maxCoeff(&best);
  return static_cast<int>(best);
}

double PolicyBatch::entropy(Eigen::Index row) const {
  double h = 0.0;
  for (Eigen::Index a = 0; a < probs.cols(); ++a) h -= static_cast<double>(probs(row, a)) * log_probs(row, a);
  return std::max(0.0, h);
}

PolicyBatch forward(const NetParams& params, const ObsBatch& obs, ForwardTrace* trace) {
  if (obs.cols() != env::kObsSize)
    throw NetError("observation batch must have " + std::to_string(env::kObsSize) + " columns");
  const Eigen::Index batch = obs.rows();
  const Eigen::Index rows = batch * env::kObsCells;
  const TapTable& taps = tap_table();

  RowMatrix cols1 = RowMatrix::Zero(rows, kCols1);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int p = 0; p < env::kObsCells; ++p)
      for (int k = 0; k < kTaps; ++k) {
        const int src = taps[p][k];
        if (src < 0) continue;
        for (int c = 0; c < env::kObsChannels; ++c)
          cols1(b * env::kObsCells + p, k * env::kObsChannels + c) = obs(b, c * env::kObsCells + src);
      }

  RowMatrix pre1 = cols1 * params.view(Tensor::Conv1Weight).transpose();
  pre1.rowwise() += params.view(Tensor::Conv1Bias).row(0);
  const RowMatrix act1 = pre1.cwiseMax(0.0f);

  RowMatrix cols2 = RowMatrix::Zero(rows, kCols2);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int p = 0; p < env::kObsCells; ++p) {
      float* dst = cols2.row(b * env::kObsCells + p).data();
      for (int k = 0; k < kTaps; ++k) {
        const int src = taps[p][k];
        if (src < 0) continue;
        std::memcpy(dst + k * kConv1Filters, act1.row(b * env::kObsCells + src).data(),
                    sizeof(float) * kConv1Filters);
      }
    }

  RowMatrix pre2 = cols2 * params.view(Tensor::Conv2Weight).transpose();
  pre2.rowwise() += params.view(Tensor::Conv2Bias).row(0);
  const RowMatrix act2 = pre2.cwiseMax(0.0f);
  // Row-major storage is already position-major per sample.
  RowMatrix flat = Eigen::Map<const RowMatrix>(act2.data(), batch, kFlatSize);

  RowMatrix pre3 = flat * params.view(Tensor::TrunkWeight).transpose();
  pre3.rowwise() += params.view(Tensor::TrunkBias).row(0);
  RowMatrix hidden = pre3.cwiseMax(0.0f);

  PolicyBatch out;
  out.logits = hidden * params.view(Tensor::ActorWeight).transpose();
  out.logits.rowwise() += params.view(Tensor::ActorBias).row(0);
  out.values = hidden * params.view(Tensor::CriticWeight).row(0).transpose();
  out.values.array() += params.view(Tensor::CriticBias)(0, 0);
  softmax_rows(out.logits, out.probs, out.log_probs);

  if (trace != nullptr) {
    trace->params_ = &params;
    trace->batch_ = batch;
    trace->cols1_ = std::move(cols1);
    trace->pre1_ = std::move(pre1);
    trace->cols2_ = std::move(cols2);
    trace->pre2_ = std::move(pre2);
    trace->flat_ = std::move(flat);
    trace->pre3_ = std::move(pre3);
    trace->hidden_ = std::move(hidden);
    trace->consumed_ = false;
  }
  return out;
}

void backward(ForwardTrace& trace, const RowMatrix& dlogits, const Vector* dvalues, NetGrads* grads,
              RowMatrix* dinput) {
  if (trace.consumed_) throw NetError("forward trace already consumed");
  if (dlogits.rows() != trace.batch_ || dlogits.cols() != env::kNumActions)
    throw NetError("upstream logit gradient has the wrong shape");
  if (dvalues != nullptr && dvalues->size() != trace.batch_)
    throw NetError("upstream value gradient has the wrong shape");
  trace.consumed_ = true;

  const NetParams& params = *trace.params_;
  const Eigen::Index batch = trace.batch_;
  const Eigen::Index rows = batch * env::kObsCells;
  const TapTable& taps = tap_table();

  RowMatrix d_hidden = dlogits * params.view(Tensor::ActorWeight);
  if (dvalues != nullptr) d_hidden.noalias() += *dvalues * params.view(Tensor::CriticWeight);
  if (grads != nullptr) {
    grads->view(Tensor::ActorWeight).noalias() += dlogits.transpose() * trace.hidden_;
    grads->view(Tensor::ActorBias).row(0) += dlogits.colwise().sum();
    if (dvalues != nullptr) {
      grads->view(Tensor::CriticWeight).row(0).noalias() += dvalues->transpose() * trace.hidden_;
      grads->view(Tensor::CriticBias)(0, 0) += dvalues->sum();
    }
  }

  const RowMatrix d_pre3 = d_hidden.cwiseProduct((trace.pre3_.array() > 0.0f).cast<float>().matrix());
  if (grads != nullptr) {
    grads->view(Tensor::TrunkWeight).noalias() += d_pre3.transpose() * trace.flat_;
    grads->view(Tensor::TrunkBias).row(0) += d_pre3.colwise().sum();
  }

  const RowMatrix d_flat = d_pre3 * params.view(Tensor::TrunkWeight);
  const Eigen::Map<const RowMatrix> d_act2(d_flat.data(), rows, kConv2Filters);
  const RowMatrix d_pre2 = d_act2.cwiseProduct((trace.pre2_.array() > 0.0f).cast<float>().matrix());
  if (grads != nullptr) {
    grads->view(Tensor::Conv2Weight).noalias() += d_pre2.transpose() * trace.cols2_;
    grads->view(Tensor::Conv2Bias).row(0) += d_pre2.colwise().sum();
  }

  const RowMatrix d_cols2 = d_pre2 * params.view(Tensor::Conv2Weight);
  RowMatrix d_act1 = RowMatrix::Zero(rows, kConv1Filters);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int p = 0; p < env::kObsCells; ++p) {
      const auto src_row = d_cols2.row(b * env::kObsCells + p);
      for (int k = 0; k < kTaps; ++k) {
        const int src = taps[p][k];
        if (src < 0) continue;
        d_act1.row(b * env::kObsCells + src) += src_row.segment(k * kConv1Filters, kConv1Filters);
      }
    }
  const RowMatrix d_pre1 = d_act1.cwiseProduct((trace.pre1_.array() > 0.0f).cast<float>().matrix());
  if (grads != nullptr) {
    grads->view(Tensor::Conv1Weight).noalias() += d_pre1.transpose() * trace.cols1_;
    grads->view(Tensor::Conv1Bias).row(0) += d_pre1.colwise().sum();
  }

  if (dinput != nullptr) {
    const RowMatrix d_cols1 = d_pre1 * params.view(Tensor::Conv1Weight);
    dinput->setZero(batch, env::kObsSize);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int p = 0; p < env::kObsCells; ++p)
        for (int k = 0; k < kTaps; ++k) {
          const int src = taps[p][k];
          if (src < 0) continue;
          for (int c = 0; c < env::kObsChannels; ++c)
            (*dinput)(b, c * env::kObsCells + src) += d_cols1(b * env::kObsCells + p, k * env::kObsChannels + c);
        }
  }

  // Release cached activations; the trace cannot be reused.
  trace.cols1_ = RowMatrix();
  trace.cols2_ = RowMatrix();
  trace.flat_ = RowMatrix();
}

NetGrads backward_params(ForwardTrace& trace, const RowMatrix& dlogits, const Vector& dvalues) {
  NetGrads g;
  backward(trace, dlogits, &dvalues, &g, nullptr);
  return g;
}

InputLoss InputLoss::cross_entropy(std::vector<int> targets) {
  InputLoss l;
  l.kind = Kind::CrossEntropy;
  l.targets = std::move(targets);
  return l;
}

InputLoss InputLoss::kl_from(RowMatrix reference) {
  InputLoss l;
  l.kind = Kind::KlFromReference;
  l.reference = std::move(reference);
  return l;
}

Vector evaluate_loss(const PolicyBatch& out, const InputLoss& loss) {
  Vector v(out.size());
  for (Eigen::Index b = 0; b < out.size(); ++b) {
    if (loss.kind == InputLoss::Kind::CrossEntropy) {
      v(b) = -out.log_probs(b, loss.targets[static_cast<std::size_t>(b)]);
    } else {
      double kl = 0.0;
      for (Eigen::Index a = 0; a < out.log_probs.cols(); ++a) {
        const double p = loss.reference(b, a);
        if (p > 0.0) kl += p * (std::log(p) - out.log_probs(b, a));
      }
      v(b) = static_cast<float>(std::max(0.0, kl));
    }
  }
  return v;
}

RowMatrix loss_logit_gradient(const PolicyBatch& out, const InputLoss& loss) {
  RowMatrix d = out.probs;
  if (loss.kind == InputLoss::Kind::CrossEntropy) {
    if (static_cast<Eigen::Index>(loss.targets.size()) != out.size())
      throw NetError("cross-entropy targets must match the batch");
    for (Eigen::Index b = 0; b < out.size(); ++b) d(b, loss.targets[static_cast<std::size_t>(b)]) -= 1.0f;
  } else {
    if (loss.reference.rows() != out.size() || loss.reference.cols() != env::kNumActions)
      throw NetError("KL reference must match the batch");
    d -= loss.reference;
  }
  return d;
}

InputGradient input_gradient(const NetParams& params, const ObsBatch& obs, const InputLoss& loss) {
  ForwardTrace trace;
  InputGradient r;
  r.outputs = forward(params, obs, &trace);
  r.loss = evaluate_loss(r.outputs, loss);
  backward(trace, loss_logit_gradient(r.outputs, loss), nullptr, nullptr, &r.grad);
  return r;
}

ObsBatch to_batch(std::span<const env::Observation> obs) {
  ObsBatch b(static_cast<Eigen::Index>(obs.size()), env::kObsSize);
  for (std::size_t i = 0; i < obs.size(); ++i)
    std::copy(obs[i].begin(), obs[i].end(), b.row(static_cast<Eigen::Index>(i)).data());
  return b;
}

ObsBatch to_batch(const env::Observation& obs) { return to_batch(std::span<const env::Observation>(&obs, 1)); }

env::Observation row_observation(const ObsBatch& batch, Eigen::Index row) {
  env::Observation o{};
  std::copy(batch.row(row).data(), batch.row(row).data() + env::kObsSize, o.begin());
  return o;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::vector<std::uint8_t> serialize(const NetParams& params) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  for (const TensorInfo& t : tensor_layout()) {
    const std::string_view name(t.name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) put_u32(out, d);
    const auto values = params.flat().subspan(t.offset, t.size);
    for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  const auto payload = std::span<const std::uint8_t>(out).subspan(kMagic.size());
  put_u64(out, fnv1a64(payload));
  return out;
}

NetParams deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 8 ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic)
    throw NetError("checkpoint header is not GRPN1");
  Reader in(bytes.subspan(kMagic.size()));
  NetParams params;
  std::size_t total = 0;
  for (const TensorInfo& t : tensor_layout()) {
    const std::uint32_t name_len = in.u32();
    if (name_len > 256) throw NetError("checkpoint tensor name too long");
    const std::string name = in.str(name_len);
    if (name != t.name) throw NetError("checkpoint tensor '" + name + "' where '" + t.name + "' expected");
    const std::uint32_t rank = in.u32();
    if (rank != t.dims.size()) throw NetError("checkpoint rank mismatch for " + name);
    for (std::uint32_t d : t.dims)
      if (in.u32() != d) throw NetError("checkpoint shape mismatch for " + name);
    auto dst = params.flat().subspan(t.offset, t.size);
    for (float& v : dst) {
      v = std::bit_cast<float>(in.u32());
      if (!std::isfinite(v)) throw NetError("checkpoint holds a non-finite value in " + name);
    }
    total += t.size;
  }
  if (total != parameter_count()) throw NetError("checkpoint parameter count mismatch");
  const std::size_t payload_len = in.pos();
  const std::uint64_t stored = in.u64();
  if (in.remaining() != 0) throw NetError("checkpoint has trailing bytes");
  if (stored != fnv1a64(bytes.subspan(kMagic.size(), payload_len))) throw NetError("checkpoint checksum mismatch");
  return params;
}

void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw NetError("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw NetError("failed writing checkpoint: " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NetError("cannot open checkpoint: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t params_hash(const NetParams& params) { return fnv1a64(serialize(params)); }

}  // namespace robmapf::net
