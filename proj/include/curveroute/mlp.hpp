#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <random>
#include <vector>

namespace curveroute {

/// Fully connected regressor: rectifier hidden layers and a logistic scalar
/// output. All parameters live in one flat buffer; layer l occupies a
/// row-major (out x in) weight block followed by its bias vector, which is
/// also the checkpoint layout.
template <typename Scalar>
class Mlp {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using WeightMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstWeightMap =
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using BiasMap = Eigen::Map<Vector>;
    using ConstBiasMap = Eigen::Map<const Vector>;

    Mlp() = default;

    /// Zero-initialized network with the given hidden widths.
    Mlp(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden) {
        dims_.push_back(input_dim);
        dims_.insert(dims_.end(), hidden.begin(), hidden.end());
        dims_.push_back(1);
        Eigen::Index offset = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offsets_.push_back(offset);
            offset += dims_[l + 1] * dims_[l] + dims_[l + 1];
        }
        params_ = Vector::Zero(offset);
    }

    Eigen::Index input_dim() const { return dims_.front(); }
    std::size_t layer_count() const { return offsets_.size(); }
    const std::vector<Eigen::Index>& dims() const { return dims_; }
    std::vector<Eigen::Index> hidden() const { return {dims_.begin() + 1, dims_.end() - 1}; }
    Eigen::Index parameter_count() const { return params_.size(); }

    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    WeightMap weights(std::size_t l) { return weights_in(params_, l); }
    ConstWeightMap weights(std::size_t l) const { return weights_in(params_, l); }
    BiasMap bias(std::size_t l) { return bias_in(params_, l); }
    ConstBiasMap bias(std::size_t l) const { return bias_in(params_, l); }

    // Views into any buffer laid out like the parameters (e.g. a gradient).
    WeightMap weights_in(Vector& buf, std::size_t l) const {
        return {buf.data() + offsets_[l], dims_[l + 1], dims_[l]};
    }
    ConstWeightMap weights_in(const Vector& buf, std::size_t l) const {
        return {buf.data() + offsets_[l], dims_[l + 1], dims_[l]};
    }
    BiasMap bias_in(Vector& buf, std::size_t l) const {
        return {buf.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
    }
    ConstBiasMap bias_in(const Vector& buf, std::size_t l) const {
        return {buf.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
    }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
    template <typename Rng>
    void init_glorot(Rng& rng) {
        params_.setZero();
        for (std::size_t l = 0; l < layer_count(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(dims_[l] + dims_[l + 1]));
            std::uniform_real_distribution<double> dist(-limit, limit);
            auto w = weights(l);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<Scalar>(dist(rng));
        }
    }

    Scalar predict(const Eigen::Ref<const Vector>& x) const {
        assert(x.size() == input_dim());
        Vector a = x;
        for (std::size_t l = 0; l + 1 < layer_count(); ++l)
            a = (weights(l) * a + bias(l)).cwiseMax(Scalar(0));
        const std::size_t last = layer_count() - 1;
        const Scalar z = (weights(last) * a)(0) + bias(last)(0);
        return logistic(z);
    }

    /// Predictions for the columns of `x` (input_dim x n).
    Vector predict_batch(const Eigen::Ref<const Matrix>& x) const {
        Matrix a = x;
        for (std::size_t l = 0; l + 1 < layer_count(); ++l)
            a = ((weights(l) * a).colwise() + bias(l)).cwiseMax(Scalar(0));
        const std::size_t last = layer_count() - 1;
        Vector z = (weights(last) * a).transpose();
        z.array() += bias(last)(0);
        return z.unaryExpr([](Scalar v) { return logistic(v); });
    }

    template <typename Other>
    Mlp<Other> cast() const {
        Mlp<Other> out(dims_.front(), hidden());
        out.parameters() = params_.template cast<Other>();
        return out;
    }

    static Scalar logistic(Scalar z) { return Scalar(1) / (Scalar(1) + std::exp(-z)); }

    bool operator==(const Mlp& other) const {
        return dims_ == other.dims_ && params_.size() == other.params_.size() &&
               params_ == other.params_;
    }

private:
    std::vector<Eigen::Index> dims_;
    std::vector<Eigen::Index> offsets_;
    Vector params_;
};

/// Mean squared error over the columns of `x` and its exact gradient with
/// respect to every parameter, written into `grad` (resized as needed).
template <typename Scalar>
Scalar loss_and_gradient(const Mlp<Scalar>& net,
                         const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& x,
                         const Eigen::Ref<const typename Mlp<Scalar>::Vector>& y,
                         typename Mlp<Scalar>::Vector& grad) {
    using Matrix = typename Mlp<Scalar>::Matrix;
    const std::size_t layers = net.layer_count();
    const auto n = x.cols();

    // Forward pass, keeping every activation.
    std::vector<Matrix> act(layers);
    act[0] = x;
    for (std::size_t l = 0; l + 1 < layers; ++l)
        act[l + 1] = ((net.weights(l) * act[l]).colwise() + net.bias(l)).cwiseMax(Scalar(0));
    Matrix out = (net.weights(layers - 1) * act[layers - 1]).array() + net.bias(layers - 1)(0);
    out = out.unaryExpr([](Scalar v) { return Mlp<Scalar>::logistic(v); });

    const Eigen::Array<Scalar, 1, Eigen::Dynamic> residual = out.row(0).array() - y.transpose().array();
    const Scalar loss = residual.square().sum() / Scalar(n);

    grad.resize(net.parameter_count());
    // d loss / d z at the output: (2/n) r * p (1 - p).
    Matrix delta = ((Scalar(2) / Scalar(n)) * residual * out.row(0).array() *
                    (Scalar(1) - out.row(0).array())).matrix();
    for (std::size_t l = layers; l-- > 0;) {
        net.weights_in(grad, l).noalias() = delta * act[l].transpose();
        net.bias_in(grad, l) = delta.rowwise().sum();
        if (l == 0) break;
        Matrix back = net.weights(l).transpose() * delta;
        delta = (act[l].array() > Scalar(0)).select(back, Scalar(0));
    }
    return loss;
}

/// Gradient of the single-sample squared error (prediction - target)^2.
template <typename Scalar>
typename Mlp<Scalar>::Vector mlp_gradient(const Mlp<Scalar>& net,
                                          const Eigen::Ref<const typename Mlp<Scalar>::Vector>& x,
                                          Scalar target) {
    typename Mlp<Scalar>::Vector grad;
    typename Mlp<Scalar>::Vector y(1);
    y(0) = target;
    loss_and_gradient<Scalar>(net, x, y, grad);
    return grad;
}

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment update with bias correction.
template <typename Scalar>
class Adam {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Adam(Eigen::Index size, AdamConfig cfg) : cfg_(cfg), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

    void step(Vector& params, const Vector& grad) {
        ++t_;
        const Scalar b1 = Scalar(cfg_.beta1);
        const Scalar b2 = Scalar(cfg_.beta2);
        m_ = b1 * m_ + (Scalar(1) - b1) * grad;
        v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
        const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
        const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
        const Scalar lr = Scalar(cfg_.learning_rate);
        const Scalar eps = Scalar(cfg_.epsilon);
        params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    Vector m_;
    Vector v_;
    long t_ = 0;
};

}  // namespace curveroute
