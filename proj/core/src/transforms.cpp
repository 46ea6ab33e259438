#include "gograd/transforms.hpp"

#include <cmath>
#include <stdexcept>

namespace gograd {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("transform: " + what);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

std::string stage_op_name(StageOp op) {
  switch (op) {
    case StageOp::kAffine: return "affine";
    case StageOp::kExp: return "exp";
    case StageOp::kSoftplus: return "softplus";
    case StageOp::kSigmoid: return "sigmoid";
    case StageOp::kTanh: return "tanh";
    case StageOp::kIdentity: return "identity";
    case StageOp::kScalePositive: return "scale_positive";
  }
  fail("unknown stage op");
}

StageOp stage_op_from_name(std::string_view name) {
  static const std::pair<std::string_view, StageOp> table[] = {
      {"affine", StageOp::kAffine},
      {"exp", StageOp::kExp},
      {"softplus", StageOp::kSoftplus},
      {"sigmoid", StageOp::kSigmoid},
      {"tanh", StageOp::kTanh},
      {"identity", StageOp::kIdentity},
      {"scale_positive", StageOp::kScalePositive},
  };
  for (const auto& [n, op] : table) {
    if (n == name) return op;
  }
  fail("unknown stage op '" + std::string(name) + "'");
}

ParamTransform::ParamTransform(int in_dim, std::vector<Stage> stages)
    : in_dim_(in_dim), stages_(std::move(stages)) {
  if (in_dim_ < 0) fail("negative input dimension");
  if (stages_.empty()) fail("empty stage list");
  int dim = in_dim_;
  weight_count_ = 0;
  for (const auto& s : stages_) {
    stage_in_dim_.push_back(dim);
    stage_weight_offset_.push_back(weight_count_);
    switch (s.op) {
      case StageOp::kAffine:
        if (s.out_dim < 1) fail("affine stage needs out_dim >= 1");
        weight_count_ += s.out_dim * dim + s.out_dim;
        dim = s.out_dim;
        break;
      case StageOp::kScalePositive:
        if (dim < 1) fail("scale_positive needs a nonempty input");
        weight_count_ += dim;
        break;
      default:
        if (dim < 1) fail("elementwise stage needs a nonempty input");
        break;
    }
  }
  out_dim_ = dim;
}

std::vector<double> ParamTransform::forward(std::span<const double> input,
                                            std::span<const double> weights,
                                            Trace* trace) const {
  if (static_cast<int>(input.size()) != in_dim_) {
    fail("forward: input dimension mismatch");
  }
  if (static_cast<int>(weights.size()) != weight_count_) {
    fail("forward: weight slice size mismatch");
  }
  std::vector<double> cur(input.begin(), input.end());
  if (trace) {
    trace->values.clear();
    trace->values.push_back(cur);
  }
  for (size_t si = 0; si < stages_.size(); ++si) {
    const auto& s = stages_[si];
    const int din = stage_in_dim_[si];
    const int woff = stage_weight_offset_[si];
    std::vector<double> next;
    switch (s.op) {
      case StageOp::kAffine: {
        const int dout = s.out_dim;
        next.assign(dout, 0.0);
        const double* W = weights.data() + woff;
        const double* b = W + dout * din;
        for (int i = 0; i < dout; ++i) {
          double acc = b[i];
          for (int j = 0; j < din; ++j) acc += W[i * din + j] * cur[j];
          next[i] = acc;
        }
        break;
      }
      case StageOp::kExp:
        next.resize(cur.size());
        for (size_t i = 0; i < cur.size(); ++i) next[i] = std::exp(cur[i]);
        break;
      case StageOp::kSoftplus:
        next.resize(cur.size());
        for (size_t i = 0; i < cur.size(); ++i) next[i] = softplus(cur[i]);
        break;
      case StageOp::kSigmoid:
        next.resize(cur.size());
        for (size_t i = 0; i < cur.size(); ++i) next[i] = sigmoid(cur[i]);
        break;
      case StageOp::kTanh:
        next.resize(cur.size());
        for (size_t i = 0; i < cur.size(); ++i) next[i] = std::tanh(cur[i]);
        break;
      case StageOp::kIdentity:
        next = cur;
        break;
      case StageOp::kScalePositive: {
        const double* w = weights.data() + woff;
        next.resize(cur.size());
        for (size_t i = 0; i < cur.size(); ++i) {
          next[i] = softplus(w[i]) * cur[i];
        }
        break;
      }
    }
    cur = std::move(next);
    if (trace) trace->values.push_back(cur);
  }
  return cur;
}

void ParamTransform::vjp(const Trace& trace, std::span<const double> weights,
                         std::span<const double> cotangent,
                         std::span<double> input_grad,
                         std::span<double> weight_grad) const {
  if (trace.values.size() != stages_.size() + 1) {
    fail("vjp: trace does not match transform");
  }
  if (static_cast<int>(cotangent.size()) != out_dim_) {
    fail("vjp: cotangent dimension mismatch");
  }
  if (!input_grad.empty() && static_cast<int>(input_grad.size()) != in_dim_) {
    fail("vjp: input_grad dimension mismatch");
  }
  if (!weight_grad.empty() &&
      static_cast<int>(weight_grad.size()) != weight_count_) {
    fail("vjp: weight_grad dimension mismatch");
  }

  std::vector<double> bar(cotangent.begin(), cotangent.end());
  for (int si = static_cast<int>(stages_.size()) - 1; si >= 0; --si) {
    const auto& s = stages_[si];
    const auto& x = trace.values[si];      // stage input
    const auto& y = trace.values[si + 1];  // stage output
    const int woff = stage_weight_offset_[si];
    std::vector<double> xbar(x.size(), 0.0);
    switch (s.op) {
      case StageOp::kAffine: {
        const int dout = s.out_dim;
        const int din = static_cast<int>(x.size());
        const double* W = weights.data() + woff;
        for (int i = 0; i < dout; ++i) {
          for (int j = 0; j < din; ++j) {
            xbar[j] += W[i * din + j] * bar[i];
            if (!weight_grad.empty()) {
              weight_grad[woff + i * din + j] += bar[i] * x[j];
            }
          }
          if (!weight_grad.empty()) {
            weight_grad[woff + dout * din + i] += bar[i];
          }
        }
        break;
      }
      case StageOp::kExp:
        for (size_t i = 0; i < x.size(); ++i) xbar[i] = y[i] * bar[i];
        break;
      case StageOp::kSoftplus:
        for (size_t i = 0; i < x.size(); ++i) xbar[i] = sigmoid(x[i]) * bar[i];
        break;
      case StageOp::kSigmoid:
        for (size_t i = 0; i < x.size(); ++i) {
          xbar[i] = y[i] * (1.0 - y[i]) * bar[i];
        }
        break;
      case StageOp::kTanh:
        for (size_t i = 0; i < x.size(); ++i) {
          xbar[i] = (1.0 - y[i] * y[i]) * bar[i];
        }
        break;
      case StageOp::kIdentity:
        xbar = bar;
        break;
      case StageOp::kScalePositive: {
        const double* w = weights.data() + woff;
        for (size_t i = 0; i < x.size(); ++i) {
          xbar[i] = softplus(w[i]) * bar[i];
          if (!weight_grad.empty()) {
            weight_grad[woff + static_cast<int>(i)] +=
                sigmoid(w[i]) * x[i] * bar[i];
          }
        }
        break;
      }
    }
    bar = std::move(xbar);
  }
  if (!input_grad.empty()) {
    for (int j = 0; j < in_dim_; ++j) input_grad[j] += bar[j];
  }
}

}  // namespace gograd
