#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "rpo/errors.hpp"
#include "rpo/rng.hpp"

namespace rpo {

/// Shape of a fully connected net with tanh hidden activations and a linear
/// output layer. Parameters live in an external flat array (weights stored
/// column-major, then biases, layer by layer) so optimizers, checkpoints and
/// finite-difference checks all see one contiguous vector.
struct MlpSpec {
    std::vector<Eigen::Index> dims;  // e.g. {obs_dim, 64, 64, out_dim}

    Eigen::Index layers() const { return Eigen::Index(dims.size()) - 1; }

    Eigen::Index param_count() const {
        Eigen::Index total = 0;
        for (Eigen::Index l = 0; l + 1 < Eigen::Index(dims.size()); ++l) total += (dims[l] + 1) * dims[l + 1];
        return total;
    }

    Eigen::Index weight_offset(Eigen::Index layer) const {
        Eigen::Index at = 0;
        for (Eigen::Index l = 0; l < layer; ++l) at += (dims[l] + 1) * dims[l + 1];
        return at;
    }
};

/// Per-layer activations kept for the backward pass.
struct MlpCache {
    std::vector<Eigen::VectorXd> activations;  // a[0] = input, a[L] = output
};

inline Eigen::VectorXd mlp_forward(const MlpSpec& spec, const double* params, const Eigen::VectorXd& x,
                                   MlpCache* cache = nullptr) {
    if (x.size() != spec.dims.front()) throw Error("MLP input dimension mismatch");
    Eigen::VectorXd a = x;
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(a);
    }
    for (Eigen::Index l = 0; l < spec.layers(); ++l) {
        const Eigen::Index in = spec.dims[l], out = spec.dims[l + 1];
        const double* base = params + spec.weight_offset(l);
        const Eigen::Map<const Eigen::MatrixXd> W(base, out, in);
        const Eigen::Map<const Eigen::VectorXd> b(base + out * in, out);
        a = (W * a + b).eval();
        if (l + 1 < spec.layers()) a = a.array().tanh();
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

/// Accumulate dLoss/dparams into `grad` given dLoss/doutput; returns
/// dLoss/dinput. `grad` must be zero-initialized by the caller.
inline Eigen::VectorXd mlp_backward(const MlpSpec& spec, const double* params, const MlpCache& cache,
                                    const Eigen::VectorXd& d_out, double* grad) {
    Eigen::VectorXd delta = d_out;
    for (Eigen::Index l = spec.layers() - 1; l >= 0; --l) {
        const Eigen::Index in = spec.dims[l], out = spec.dims[l + 1];
        const double* base = params + spec.weight_offset(l);
        const Eigen::Map<const Eigen::MatrixXd> W(base, out, in);
        double* gbase = grad + spec.weight_offset(l);
        Eigen::Map<Eigen::MatrixXd> gW(gbase, out, in);
        Eigen::Map<Eigen::VectorXd> gb(gbase + out * in, out);

        const Eigen::VectorXd& a_in = cache.activations[std::size_t(l)];
        gW.noalias() += delta * a_in.transpose();
        gb += delta;
        if (l == 0) return W.transpose() * delta;
        delta = (W.transpose() * delta).cwiseProduct(
            Eigen::VectorXd::Ones(in) - cache.activations[std::size_t(l)].cwiseProduct(cache.activations[std::size_t(l)]));
    }
    return delta;
}

/// Orthogonal initialization (QR of a Gaussian matrix, sign-fixed) with the
/// given gain; biases zero.
inline void mlp_init(const MlpSpec& spec, double* params, std::mt19937_64& rng, double hidden_gain = std::sqrt(2.0),
                     double output_gain = 0.01) {
    for (Eigen::Index l = 0; l < spec.layers(); ++l) {
        const Eigen::Index in = spec.dims[l], out = spec.dims[l + 1];
        const bool tall = out >= in;
        const Eigen::Index rows = tall ? out : in, cols = tall ? in : out;
        Eigen::MatrixXd g(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = normal_sample(rng);
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
        const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < cols; ++j)
            if (r(j, j) < 0.0) q.col(j) = -q.col(j);

        const double gain = (l + 1 == spec.layers()) ? output_gain : hidden_gain;
        double* base = params + spec.weight_offset(l);
        Eigen::Map<Eigen::MatrixXd> W(base, out, in);
        W = gain * (tall ? q : Eigen::MatrixXd(q.transpose()));
        Eigen::Map<Eigen::VectorXd>(base + out * in, out).setZero();
    }
}

/// Adam with bias correction; state sized lazily on first step.
class AdamOptimizer {
  public:
    explicit AdamOptimizer(double learn_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(learn_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        if (m_.size() != params.size()) {
            m_ = Eigen::VectorXd::Zero(params.size());
            v_ = Eigen::VectorXd::Zero(params.size());
            t_ = 0;
        }
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1_, double(t_));
        const double c2 = 1.0 - std::pow(beta2_, double(t_));
        params -= (lr_ / c1) * m_.cwiseQuotient(((v_ / c2).cwiseSqrt().array() + eps_).matrix());
    }

    void reset() { m_.resize(0); v_.resize(0); t_ = 0; }
    long steps_taken() const { return t_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

}  // namespace rpo
