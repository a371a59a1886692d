#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "jppo/error.hpp"
#include "jppo/rng.hpp"

namespace jppo::agent {

/// Feed-forward value network: affine layers with ReLU between them and an
/// identity output. Weight matrices are (out x in).
template <typename Scalar = double>
class QNetwork {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Gradients {
        std::vector<Matrix> weights;
        std::vector<Vector> biases;
    };

    /// Intermediate values of a batched forward pass, kept for backprop.
    struct Cache {
        std::vector<Matrix> inputs; // inputs[l] feeds layer l
        Matrix output;
    };

    QNetwork() = default;

    /// Zero-initialized network with layer widths dims[0] -> ... -> dims.back().
    explicit QNetwork(std::vector<int> dims) : dims_(std::move(dims))
    {
        detail::require(dims_.size() >= 2, "network needs at least an input and an output layer");
        for (int d : dims_) {
            detail::require(d >= 1, "layer widths must be positive");
        }
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            weights_.push_back(Matrix::Zero(dims_[l + 1], dims_[l]));
            biases_.push_back(Vector::Zero(dims_[l + 1]));
        }
    }

    /// He-uniform weights, zero biases.
    static QNetwork he_uniform(std::vector<int> dims, Rng& rng)
    {
        QNetwork net(std::move(dims));
        for (auto& w : net.weights_) {
            const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) {
                    w(r, c) = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * limit);
                }
            }
        }
        return net;
    }

    const std::vector<int>& dims() const { return dims_; }
    std::size_t num_layers() const { return weights_.size(); }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }

    Matrix& weight(std::size_t l) { return weights_[l]; }
    const Matrix& weight(std::size_t l) const { return weights_[l]; }
    Vector& bias(std::size_t l) { return biases_[l]; }
    const Vector& bias(std::size_t l) const { return biases_[l]; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
        }
        return n;
    }

    /// Visits every parameter in checkpoint order: per layer, weights
    /// row-major then biases.
    template <typename F>
    void for_each_parameter(F&& f)
    {
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
                for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
                    f(weights_[l](r, c));
                }
            }
            for (Eigen::Index r = 0; r < biases_[l].size(); ++r) {
                f(biases_[l](r));
            }
        }
    }

    template <typename F>
    void for_each_parameter(F&& f) const
    {
        const_cast<QNetwork*>(this)->for_each_parameter(
            [&](Scalar& v) { f(static_cast<const Scalar&>(v)); });
    }

    Vector forward(std::span<const Scalar> input) const
    {
        detail::require(static_cast<int>(input.size()) == input_dim(),
                        "state dimension does not match the network input");
        Vector a = Eigen::Map<const Vector>(input.data(), static_cast<Eigen::Index>(input.size()));
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Vector z = weights_[l] * a + biases_[l];
            if (l + 1 < weights_.size()) {
                a = z.cwiseMax(Scalar(0));
            } else {
                a = std::move(z);
            }
        }
        return a;
    }

    /// Columns of x are samples.
    Matrix forward_batch(const Matrix& x) const
    {
        detail::require(x.rows() == input_dim(), "batch rows do not match the network input");
        Matrix a = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Matrix z = weights_[l] * a;
            z.colwise() += biases_[l];
            if (l + 1 < weights_.size()) {
                a = z.cwiseMax(Scalar(0));
            } else {
                a = std::move(z);
            }
        }
        return a;
    }

    void forward_batch(const Matrix& x, Cache& cache) const
    {
        detail::require(x.rows() == input_dim(), "batch rows do not match the network input");
        cache.inputs.resize(weights_.size());
        cache.inputs[0] = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Matrix z = weights_[l] * cache.inputs[l];
            z.colwise() += biases_[l];
            if (l + 1 < weights_.size()) {
                cache.inputs[l + 1] = z.cwiseMax(Scalar(0));
            } else {
                cache.output = std::move(z);
            }
        }
    }

    /// Gradients of a scalar loss given dLoss/dOutput for the cached batch.
    Gradients backward(const Cache& cache, const Matrix& d_output) const
    {
        Gradients g;
        g.weights.resize(weights_.size());
        g.biases.resize(weights_.size());
        Matrix dz = d_output;
        for (std::size_t l = weights_.size(); l-- > 0;) {
            g.weights[l].noalias() = dz * cache.inputs[l].transpose();
            g.biases[l] = dz.rowwise().sum();
            if (l > 0) {
                Matrix da = weights_[l].transpose() * dz;
                // ReLU derivative; the cached input of layer l is max(z, 0).
                dz = (cache.inputs[l].array() > Scalar(0)).select(da, Scalar(0));
            }
        }
        return g;
    }

    Gradients zero_gradients() const
    {
        Gradients g;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            g.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
            g.biases.push_back(Vector::Zero(biases_[l].size()));
        }
        return g;
    }

    bool same_shape(const QNetwork& other) const { return dims_ == other.dims_; }

    bool all_finite() const
    {
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const QNetwork& a, const QNetwork& b)
    {
        if (a.dims_ != b.dims_) {
            return false;
        }
        for (std::size_t l = 0; l < a.weights_.size(); ++l) {
            if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<int> dims_;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
};

/// theta <- theta - lr * grad.
template <typename Scalar>
void sgd_step(QNetwork<Scalar>& net, const typename QNetwork<Scalar>::Gradients& grads,
              double learning_rate)
{
    detail::require(grads.weights.size() == net.num_layers() && grads.biases.size() == net.num_layers(),
                    "gradient layer count does not match the network");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        detail::require(grads.weights[l].rows() == net.weight(l).rows() &&
                            grads.weights[l].cols() == net.weight(l).cols() &&
                            grads.biases[l].size() == net.bias(l).size(),
                        "gradient shape does not match the network");
        net.weight(l) -= static_cast<Scalar>(learning_rate) * grads.weights[l];
        net.bias(l) -= static_cast<Scalar>(learning_rate) * grads.biases[l];
    }
}

} // namespace jppo::agent
