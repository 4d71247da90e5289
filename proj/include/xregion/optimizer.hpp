#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xregion/error.hpp"
#include "xregion/linalg.hpp"

namespace xregion {

/// Adaptive-moment optimizer over a fixed, ordered list of tensors.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  /// params[i] -= lr * mhat / (sqrt(vhat) + eps). The tensor list must keep the
  /// same order and shapes across calls.
  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
    require(params.size() == grads.size(), ErrorKind::Contract, "optimizer parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Matrix* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    require(m_.size() == params.size(), ErrorKind::Contract, "optimizer tensor list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix& g = *grads[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
      params[i]->array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  std::int64_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace xregion
