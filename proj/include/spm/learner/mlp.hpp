#pragma once

// Fully connected tanh network over a flat parameter vector. Samples are
// columns; the flat layout lets the optimizer and finite-difference checks
// treat every parameter uniformly.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "spm/core/errors.hpp"
#include "spm/core/random.hpp"

namespace spm::learn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Mlp {
 public:
  Mlp() = default;
  /// sizes = {input, hidden..., output}; no hidden entries gives an affine map.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw InputError("network needs input and output sizes");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += static_cast<std::size_t>(sizes_[l + 1]) * static_cast<std::size_t>(sizes_[l]);
      b_off_.push_back(off);
      off += static_cast<std::size_t>(sizes_[l + 1]);
    }
    count_ = off;
  }

  std::size_t num_params() const { return count_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }

  /// Uniform Glorot init; the last layer is scaled by `out_scale`.
  void init(Eigen::Ref<VectorXd> theta, Rng& rng, double out_scale) const {
    for (int l = 0; l < layers(); ++l) {
      const int fan_in = sizes_[static_cast<std::size_t>(l)], fan_out = sizes_[static_cast<std::size_t>(l) + 1];
      const double a = std::sqrt(6.0 / std::max(1, fan_in + fan_out)) * (l + 1 == layers() ? out_scale : 1.0);
      for (int k = 0; k < fan_in * fan_out; ++k) theta[static_cast<Eigen::Index>(w_off_[static_cast<std::size_t>(l)]) + k] = uniform(rng, -a, a);
      for (int k = 0; k < fan_out; ++k) theta[static_cast<Eigen::Index>(b_off_[static_cast<std::size_t>(l)]) + k] = 0.0;
    }
  }

  struct Cache {
    std::vector<MatrixXd> act;  // act[0] = input, act[l] = output of layer l
  };

  MatrixXd forward(const Eigen::Ref<const VectorXd>& theta, const MatrixXd& x, Cache* cache = nullptr) const {
    if (x.rows() != input_size()) throw InputError("observation length does not match the network input");
    MatrixXd h = x;
    if (cache) cache->act = {x};
    for (int l = 0; l < layers(); ++l) {
      MatrixXd z = weight(theta, l) * h;
      z.colwise() += bias(theta, l);
      if (l + 1 < layers()) z = z.array().tanh().matrix();
      h = std::move(z);
      if (cache) cache->act.push_back(h);
    }
    return h;
  }

  /// Accumulates d(loss)/d(theta) into `grad` given d(loss)/d(output).
  void backward(const Eigen::Ref<const VectorXd>& theta, const Cache& cache, MatrixXd d_out,
                Eigen::Ref<VectorXd> grad) const {
    for (int l = layers() - 1; l >= 0; --l) {
      const MatrixXd& in = cache.act[static_cast<std::size_t>(l)];
      const int rows = sizes_[static_cast<std::size_t>(l) + 1], cols = sizes_[static_cast<std::size_t>(l)];
      Eigen::Map<MatrixXd> gw(grad.data() + w_off_[static_cast<std::size_t>(l)], rows, cols);
      Eigen::Map<VectorXd> gb(grad.data() + b_off_[static_cast<std::size_t>(l)], rows);
      gw.noalias() += d_out * in.transpose();
      gb += d_out.rowwise().sum();
      if (l == 0) break;
      MatrixXd d_in = weight(theta, l).transpose() * d_out;
      d_out = (d_in.array() * (1.0 - in.array().square())).matrix();  // tanh'
    }
  }

 private:
  Eigen::Map<const MatrixXd> weight(const Eigen::Ref<const VectorXd>& theta, int l) const {
    return {theta.data() + w_off_[static_cast<std::size_t>(l)], sizes_[static_cast<std::size_t>(l) + 1],
            sizes_[static_cast<std::size_t>(l)]};
  }
  Eigen::Map<const VectorXd> bias(const Eigen::Ref<const VectorXd>& theta, int l) const {
    return {theta.data() + b_off_[static_cast<std::size_t>(l)], sizes_[static_cast<std::size_t>(l) + 1]};
  }

  std::vector<int> sizes_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t count_ = 0;
};

/// Adam without momentum (beta1 = 0): per-coordinate steps scaled by a
/// running RMS of the gradient.
class RmsAdam {
 public:
  RmsAdam() = default;
  RmsAdam(std::size_t n, double lr, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta2_(beta2), eps_(eps), v_(VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

  /// Gradient descent step on `theta`.
  void step(Eigen::Ref<VectorXd> theta, const VectorXd& grad) {
    ++t_;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double corr = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    theta.array() -= lr_ * grad.array() / ((v_.array() / corr).sqrt() + eps_);
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 3e-4, beta2_ = 0.999, eps_ = 1e-8;
  VectorXd v_;
  long t_ = 0;
};

}  // namespace spm::learn
