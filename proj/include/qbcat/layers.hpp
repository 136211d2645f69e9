#pragma once

#include <cmath>
#include <stdexcept>

#include "qbcat/tensor.hpp"

namespace qbcat {

enum class Activation { Mish, Sigmoid };
enum class Mode { Train, Eval };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// softplus with saturation guards so mish stays finite for any |x|.
template <typename T>
inline T softplus(T x) {
    if (x > T(20)) return x;
    if (x < T(-20)) return std::exp(x);
    return std::log1p(std::exp(x));
}

template <typename T>
inline T mish(T x) {
    return x * std::tanh(softplus(x));
}

// d/dx [x * tanh(softplus(x))]
template <typename T>
inline T mish_grad(T x) {
    T sp = softplus(x);
    T th = std::tanh(sp);
    T sig = T(1) / (T(1) + std::exp(-x));
    return th + x * (T(1) - th * th) * sig;
}

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// Fully-connected layer: affine -> batch norm -> activation.
// weight is out×in; batch norm is per output unit.
template <typename T>
struct Dense {
    Mat<T> weight;
    std::vector<T> bias;
    std::vector<T> bn_gamma, bn_beta;
    std::vector<T> bn_running_mean, bn_running_var;
    Activation act = Activation::Mish;

    Dense() = default;
    Dense(std::size_t in, std::size_t out, Activation a)
        : weight(out, in),
          bias(out, T(0)),
          bn_gamma(out, T(1)),
          bn_beta(out, T(0)),
          bn_running_mean(out, T(0)),
          bn_running_var(out, T(1)),
          act(a) {}

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }

    void init(Rng& rng) {
        T bound = std::sqrt(T(6) / T(in_dim() + out_dim()));
        for (auto& w : weight.data) w = static_cast<T>(rng.uniform(-bound, bound));
    }
};

template <typename T>
struct DenseCache {
    Mat<T> x;        // input
    Mat<T> xhat;     // normalized pre-scale
    Mat<T> preact;   // gamma*xhat + beta
    std::vector<T> mean, inv_std;
    bool train = false;
};

template <typename T>
struct DenseGrads {
    Mat<T> weight;
    std::vector<T> bias, bn_gamma, bn_beta;

    explicit DenseGrads(const Dense<T>& l)
        : weight(l.out_dim(), l.in_dim()),
          bias(l.out_dim(), T(0)),
          bn_gamma(l.out_dim(), T(0)),
          bn_beta(l.out_dim(), T(0)) {}
};

// Train mode uses batch statistics (biased variance) and advances the running
// estimates; Eval mode reads the running estimates and mutates nothing.
template <typename T>
inline Mat<T> dense_forward(Dense<T>& layer, const Mat<T>& x, Mode mode, DenseCache<T>* cache = nullptr) {
    if (x.cols != layer.in_dim()) throw std::invalid_argument("dense_forward: input dim mismatch");
    if (mode == Mode::Train && x.rows < 2)
        throw std::invalid_argument("dense_forward: train mode needs at least 2 rows for batch statistics");

    const std::size_t n = x.rows, out = layer.out_dim();
    Mat<T> lin;
    matmul_nt(x, layer.weight, lin);
    for (std::size_t i = 0; i < n; ++i) {
        T* li = lin.row(i);
        for (std::size_t j = 0; j < out; ++j) li[j] += layer.bias[j];
    }

    std::vector<T> mean(out, T(0)), inv_std(out, T(0));
    if (mode == Mode::Train) {
        std::vector<T> var(out, T(0));
        for (std::size_t i = 0; i < n; ++i) {
            const T* li = lin.row(i);
            for (std::size_t j = 0; j < out; ++j) mean[j] += li[j];
        }
        for (std::size_t j = 0; j < out; ++j) mean[j] /= T(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T* li = lin.row(i);
            for (std::size_t j = 0; j < out; ++j) {
                T d = li[j] - mean[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < out; ++j) {
            var[j] /= T(n);
            inv_std[j] = T(1) / std::sqrt(var[j] + T(kBnEps));
            layer.bn_running_mean[j] =
                T(1 - kBnMomentum) * layer.bn_running_mean[j] + T(kBnMomentum) * mean[j];
            layer.bn_running_var[j] =
                T(1 - kBnMomentum) * layer.bn_running_var[j] + T(kBnMomentum) * var[j];
        }
    } else {
        for (std::size_t j = 0; j < out; ++j) {
            mean[j] = layer.bn_running_mean[j];
            inv_std[j] = T(1) / std::sqrt(layer.bn_running_var[j] + T(kBnEps));
        }
    }

    Mat<T> xhat(n, out), preact(n, out), y(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        const T* li = lin.row(i);
        T* xi = xhat.row(i);
        T* pi = preact.row(i);
        T* yi = y.row(i);
        for (std::size_t j = 0; j < out; ++j) {
            xi[j] = (li[j] - mean[j]) * inv_std[j];
            pi[j] = layer.bn_gamma[j] * xi[j] + layer.bn_beta[j];
            yi[j] = layer.act == Activation::Mish ? mish(pi[j]) : sigmoid(pi[j]);
        }
    }
    check_finite(y, "dense_forward output");

    if (cache) {
        cache->x = x;
        cache->xhat = std::move(xhat);
        cache->preact = std::move(preact);
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->train = (mode == Mode::Train);
    }
    return y;
}

// Backward through activation, batch norm and affine. Train-mode caches use
// the batch-statistics coupling; eval-mode caches treat the normalization as
// a fixed affine map. Accumulates parameter gradients, returns dL/dx.
template <typename T>
inline Mat<T> dense_backward(const Dense<T>& layer, const DenseCache<T>& cache,
                             const Mat<T>& grad_out, DenseGrads<T>& grads) {
    const std::size_t n = cache.x.rows, out = layer.out_dim();
    require_shape(grad_out, n, out, "dense_backward grad_out");

    // through activation
    Mat<T> dpre(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        const T* gi = grad_out.row(i);
        const T* pi = cache.preact.row(i);
        T* di = dpre.row(i);
        for (std::size_t j = 0; j < out; ++j) {
            if (layer.act == Activation::Mish) {
                di[j] = gi[j] * mish_grad(pi[j]);
            } else {
                T s = sigmoid(pi[j]);
                di[j] = gi[j] * s * (T(1) - s);
            }
        }
    }

    // through batch norm: needs column sums of dpre and dpre*xhat
    std::vector<T> sum_d(out, T(0)), sum_dx(out, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        const T* di = dpre.row(i);
        const T* xi = cache.xhat.row(i);
        for (std::size_t j = 0; j < out; ++j) {
            sum_d[j] += di[j];
            sum_dx[j] += di[j] * xi[j];
        }
    }
    for (std::size_t j = 0; j < out; ++j) {
        grads.bn_gamma[j] += sum_dx[j];
        grads.bn_beta[j] += sum_d[j];
    }

    Mat<T> dlin(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        const T* di = dpre.row(i);
        const T* xi = cache.xhat.row(i);
        T* li = dlin.row(i);
        for (std::size_t j = 0; j < out; ++j) {
            T dxhat = di[j] * layer.bn_gamma[j];
            if (cache.train) {
                li[j] = cache.inv_std[j] / T(n) *
                        (T(n) * dxhat - sum_d[j] * layer.bn_gamma[j] -
                         xi[j] * sum_dx[j] * layer.bn_gamma[j]);
            } else {
                li[j] = dxhat * cache.inv_std[j];
            }
        }
    }

    // through affine
    for (std::size_t i = 0; i < n; ++i) {
        const T* li = dlin.row(i);
        for (std::size_t j = 0; j < out; ++j) grads.bias[j] += li[j];
    }
    matmul_tn_acc(dlin, cache.x, grads.weight);
    Mat<T> dx;
    matmul_nn(dlin, layer.weight, dx);
    return dx;
}

// The model's feed-forward block: hidden layer with Mish, output layer with
// sigmoid so every output coordinate lies in (0,1).
template <typename T>
struct TwoLayerNet {
    Dense<T> l1, l2;

    TwoLayerNet() = default;
    TwoLayerNet(std::size_t in, std::size_t hidden, std::size_t out)
        : l1(in, hidden, Activation::Mish), l2(hidden, out, Activation::Sigmoid) {}

    void init(Rng& rng) {
        l1.init(rng);
        l2.init(rng);
    }
};

template <typename T>
struct NetCache {
    DenseCache<T> c1, c2;
};

template <typename T>
struct NetGrads {
    DenseGrads<T> g1, g2;
    explicit NetGrads(const TwoLayerNet<T>& n) : g1(n.l1), g2(n.l2) {}
};

template <typename T>
inline Mat<T> net_forward(TwoLayerNet<T>& net, const Mat<T>& x, Mode mode, NetCache<T>* cache = nullptr) {
    Mat<T> h = dense_forward(net.l1, x, mode, cache ? &cache->c1 : nullptr);
    return dense_forward(net.l2, h, mode, cache ? &cache->c2 : nullptr);
}

template <typename T>
inline Mat<T> net_backward(const TwoLayerNet<T>& net, const NetCache<T>& cache,
                           const Mat<T>& grad_out, NetGrads<T>& grads) {
    Mat<T> dh = dense_backward(net.l2, cache.c2, grad_out, grads.g2);
    return dense_backward(net.l1, cache.c1, dh, grads.g1);
}

}  // namespace qbcat
