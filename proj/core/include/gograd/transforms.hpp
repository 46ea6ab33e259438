#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gograd {

// Primitive set for parameter transforms. Affine carries learnable weights
// (row-major W of shape out x in, then bias of length out); scale_positive
// multiplies each coordinate by softplus(w_i) with one learnable w per
// coordinate; the rest are weightless elementwise maps.
enum class StageOp {
  kAffine,
  kExp,
  kSoftplus,
  kSigmoid,
  kTanh,
  kIdentity,
  kScalePositive,
};

std::string stage_op_name(StageOp op);
StageOp stage_op_from_name(std::string_view name);

struct Stage {
  StageOp op = StageOp::kIdentity;
  int out_dim = 0;  // affine only; elementwise stages keep their input dim
};

// Composition of primitives mapping (input vector, weight slice) to an
// output vector, with exact reverse-mode Jacobian-vector products wrt both
// the input and the weights.
class ParamTransform {
 public:
  ParamTransform(int in_dim, std::vector<Stage> stages);

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  int weight_count() const { return weight_count_; }
  const std::vector<Stage>& stages() const { return stages_; }

  // Intermediate values of one forward pass, kept for the backward pass.
  struct Trace {
    std::vector<std::vector<double>> values;  // values[0] = input
  };

  std::vector<double> forward(std::span<const double> input,
                              std::span<const double> weights,
                              Trace* trace = nullptr) const;

  // Accumulates J_in^T * cotangent into input_grad and J_w^T * cotangent
  // into weight_grad (both may be empty spans to skip that side).
  void vjp(const Trace& trace, std::span<const double> weights,
           std::span<const double> cotangent, std::span<double> input_grad,
           std::span<double> weight_grad) const;

 private:
  int in_dim_;
  int out_dim_;
  int weight_count_;
  std::vector<Stage> stages_;
  std::vector<int> stage_weight_offset_;
  std::vector<int> stage_in_dim_;
};

}  // namespace gograd
