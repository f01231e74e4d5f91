#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "robmapf/grid_env.hpp"

namespace robmapf::net {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXf;

// One observation per row, channel-major (see env::obs_index).
using ObsBatch = RowMatrix;

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConv1Filters = 32;
inline constexpr int kConv2Filters = 64;
inline constexpr int kKernel = 3;
inline constexpr int kTrunkUnits = 128;
inline constexpr int kFlatSize = kConv2Filters * env::kObsCells;  // 1600, position-major

enum class Tensor : int {
  Conv1Weight, Conv1Bias, Conv2Weight, Conv2Bias, TrunkWeight, TrunkBias,
  ActorWeight, ActorBias, CriticWeight, CriticBias,
};
inline constexpr int kNumTensors = 10;

struct TensorInfo {
  const char* name;
  std::vector<std::uint32_t> dims;  // as stored in checkpoints
  int rows;                         // in-memory matrix view
  int cols;
  std::size_t offset;
  std::size_t size;
};

const std::array<TensorInfo, kNumTensors>& tensor_layout();
const TensorInfo& info(Tensor t);
std::size_t parameter_count();

// Flat float storage with named matrix views. Parameters and gradients share
// the layout but are distinct types.
template <class Tag>
class Bundle {
 public:
  Bundle() : values_(parameter_count(), 0.0f) {}

  std::span<float> flat() { return {values_.data(), values_.size()}; }
  std::span<const float> flat() const { return {values_.data(), values_.size()}; }

  Eigen::Map<RowMatrix> view(Tensor t) {
    const auto& i = info(t);
    return {values_.data() + i.offset, i.rows, i.cols};
  }
  Eigen::Map<const RowMatrix> view(Tensor t) const {
    const auto& i = info(t);
    return {values_.data() + i.offset, i.rows, i.cols};
  }

  bool operator==(const Bundle&) const = default;

 private:
  // Fixed base alignment keeps vectorized reductions over views bit-reproducible.
  std::vector<float, Eigen::aligned_allocator<float>> values_;
};

struct ParamsTag {};
struct GradsTag {};
using NetParams = Bundle<ParamsTag>;
using NetGrads = Bundle<GradsTag>;

NetParams init_params(std::uint64_t seed);

struct PolicyBatch {
  RowMatrix logits;     // B x 5
  RowMatrix probs;      // B x 5
  RowMatrix log_probs;  // B x 5
  Vector values;        // B

  Eigen::Index size() const { return logits.rows(); }
  int argmax(Eigen::Index row) const;
  double entropy(Eigen::Index row) const;
};

// Cached activations for one backward pass.
class ForwardTrace {
 public:
  ForwardTrace() = default;
  ForwardTrace(const ForwardTrace&) = delete;
  ForwardTrace& operator=(const ForwardTrace&) = delete;
  ForwardTrace(ForwardTrace&&) = default;
  ForwardTrace& operator=(ForwardTrace&&) = default;

  bool consumed() const { return consumed_; }
  Eigen::Index batch() const { return batch_; }

 private:
  friend PolicyBatch forward(const NetParams&, const ObsBatch&, ForwardTrace*);
  friend void backward(ForwardTrace&, const RowMatrix&, const Vector*, NetGrads*, RowMatrix*);

  const NetParams* params_ = nullptr;
  Eigen::Index batch_ = 0;
  RowMatrix cols1_, pre1_, cols2_, pre2_, flat_, pre3_, hidden_;
  bool consumed_ = true;
};

PolicyBatch forward(const NetParams& params, const ObsBatch& obs, ForwardTrace* trace = nullptr);

// Gradients of a scalar loss given its gradient w.r.t. logits (B x 5) and
// optionally values (B). Either output may be null. Consumes the trace.
void backward(ForwardTrace& trace, const RowMatrix& dlogits, const Vector* dvalues,
              NetGrads* grads, RowMatrix* dinput);

NetGrads backward_params(ForwardTrace& trace, const RowMatrix& dlogits, const Vector& dvalues);

// Scalar losses over the action distribution whose input gradient attacks
// and regularizers need.
struct InputLoss {
  enum class Kind { CrossEntropy, KlFromReference };
  Kind kind = Kind::CrossEntropy;
  std::vector<int> targets;  // CrossEntropy: one action per row
  RowMatrix reference;       // KlFromReference: fixed distribution per row

  static InputLoss cross_entropy(std::vector<int> targets);
  static InputLoss kl_from(RowMatrix reference);
};

struct InputGradient {
  RowMatrix grad;       // B x 75, gradient of each row's own loss
  Vector loss;          // per row
  PolicyBatch outputs;  // at the evaluated inputs
};

// Per-row losses and their gradients w.r.t. the rows of `obs`.
InputGradient input_gradient(const NetParams& params, const ObsBatch& obs, const InputLoss& loss);
// Row losses without the gradient.
Vector evaluate_loss(const PolicyBatch& out, const InputLoss& loss);
// d(loss_row)/d(logits_row) for each row.
RowMatrix loss_logit_gradient(const PolicyBatch& out, const InputLoss& loss);

ObsBatch to_batch(std::span<const env::Observation> obs);
ObsBatch to_batch(const env::Observation& obs);
env::Observation row_observation(const ObsBatch& batch, Eigen::Index row);

std::vector<std::uint8_t> serialize(const NetParams& params);
NetParams deserialize(std::span<const std::uint8_t> bytes);
void save_checkpoint(const NetParams& params, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t hash = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::uint64_t params_hash(const NetParams& params);

}  // namespace robmapf::net
