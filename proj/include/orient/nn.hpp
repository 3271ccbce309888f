#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "orient/errors.hpp"
#include "orient/tensor.hpp"

// Fixed kernel set with exact reverse-mode gradients: conv2d, batch norm,
// ReLU, 2x2 max pooling, global average pooling, fully connected, softmax
// cross-entropy, Adam. Everything is templated on the scalar type; training
// runs in float, the gradient-check tests instantiate double.
//
// Parallelization rule: OpenMP loops only ever split independent output
// slots (rows, channels, batch items) and every accumulation stays in a
// fixed serial order, so results are bit-identical for any thread count.

namespace orient {
namespace nn_detail {

// C[M,N] = A[M,K] * B[K,N], optionally accumulating into C.
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        if (!accumulate)
            for (std::int64_t j = 0; j < n; ++j) ci[j] = T(0);
        const T* ai = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = ai[p];
            if (av == T(0)) continue;
            const T* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[M,N] = A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            T acc = T(0);
            for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

// C[M,N] = A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        if (!accumulate)
            for (std::int64_t j = 0; j < n; ++j) ci[j] = T(0);
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[p * m + i];
            if (av == T(0)) continue;
            const T* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// col[(c*K*K + ky*K + kx), (oy*OW + ox)] = x[c, oy*stride-pad+ky, ox*stride-pad+kx]
template <typename T>
void im2col(const T* x, std::int64_t channels, std::int64_t h, std::int64_t w,
            std::int64_t kernel, std::int64_t stride, std::int64_t pad,
            std::int64_t oh, std::int64_t ow, T* col) {
    const std::int64_t rows = channels * kernel * kernel;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t c = r / (kernel * kernel);
        const std::int64_t ky = (r / kernel) % kernel;
        const std::int64_t kx = r % kernel;
        const T* xc = x + c * h * w;
        T* out = col + r * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
                for (std::int64_t ox = 0; ox < ow; ++ox) out[oy * ow + ox] = T(0);
                continue;
            }
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix = ox * stride - pad + kx;
                out[oy * ow + ox] = (ix >= 0 && ix < w) ? xc[iy * w + ix] : T(0);
            }
        }
    }
}

// Scatter-add of a column buffer back onto the input gradient. Serial per
// channel (output rows of the same channel overlap), parallel over channels.
template <typename T>
void col2im_accumulate(const T* col, std::int64_t channels, std::int64_t h, std::int64_t w,
                       std::int64_t kernel, std::int64_t stride, std::int64_t pad,
                       std::int64_t oh, std::int64_t ow, T* gx) {
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < channels; ++c) {
        T* gxc = gx + c * h * w;
        for (std::int64_t ky = 0; ky < kernel; ++ky) {
            for (std::int64_t kx = 0; kx < kernel; ++kx) {
                const T* in = col + ((c * kernel + ky) * kernel + kx) * oh * ow;
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const std::int64_t ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) gxc[iy * w + ix] += in[oy * ow + ox];
                    }
                }
            }
        }
    }
}

inline void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

} // namespace nn_detail

template <typename T>
struct ConvDims {
    std::int64_t batch, in_channels, h, w, filters, kernel, oh, ow;
};

template <typename T>
ConvDims<T> conv2d_dims(const Tensor<T>& x, const Tensor<T>& weight, std::int64_t stride,
                        std::int64_t pad) {
    using nn_detail::require;
    require(x.rank() == 4, "conv2d: input must be B x C x H x W");
    require(weight.rank() == 4, "conv2d: weight must be F x C x K x K");
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(pad >= 0, "conv2d: pad must be >= 0");
    require(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square");
    require(x.dim(1) == weight.dim(1), "conv2d: input channels mismatch");
    const std::int64_t k = weight.dim(2);
    require(k <= x.dim(2) + 2 * pad && k <= x.dim(3) + 2 * pad,
            "conv2d: kernel larger than padded input");
    ConvDims<T> d;
    d.batch = x.dim(0);
    d.in_channels = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.filters = weight.dim(0);
    d.kernel = k;
    d.oh = (d.h + 2 * pad - k) / stride + 1;
    d.ow = (d.w + 2 * pad - k) / stride + 1;
    return d;
}

// Cross-correlation with zero padding (deep-learning convention, no kernel
// flip).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::int64_t stride, std::int64_t pad) {
    const auto d = conv2d_dims(x, weight, stride, pad);
    nn_detail::require(bias.numel() == d.filters, "conv2d: bias size must equal filter count");

    Tensor<T> y({d.batch, d.filters, d.oh, d.ow});
    const std::int64_t col_rows = d.in_channels * d.kernel * d.kernel;
    const std::int64_t out_pixels = d.oh * d.ow;
    std::vector<T> col(static_cast<std::size_t>(col_rows * out_pixels));
    for (std::int64_t n = 0; n < d.batch; ++n) {
        nn_detail::im2col(x.data() + n * d.in_channels * d.h * d.w, d.in_channels, d.h, d.w,
                          d.kernel, stride, pad, d.oh, d.ow, col.data());
        T* yn = y.data() + n * d.filters * out_pixels;
        nn_detail::gemm_nn(d.filters, out_pixels, col_rows, weight.data(), col.data(), yn, false);
#pragma omp parallel for schedule(static)
        for (std::int64_t f = 0; f < d.filters; ++f) {
            const T b = bias[f];
            T* row = yn + f * out_pixels;
            for (std::int64_t i = 0; i < out_pixels; ++i) row[i] += b;
        }
    }
    return y;
}

// Gradients for input (optional, pass nullptr to skip), weight and bias.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_y,
                     std::int64_t stride, std::int64_t pad, Tensor<T>* grad_x,
                     Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
    const auto d = conv2d_dims(x, weight, stride, pad);
    nn_detail::require(grad_y.rank() == 4 && grad_y.dim(0) == d.batch &&
                           grad_y.dim(1) == d.filters && grad_y.dim(2) == d.oh &&
                           grad_y.dim(3) == d.ow,
                       "conv2d_backward: upstream gradient shape mismatch");

    grad_weight = Tensor<T>(weight.shape);
    grad_bias = Tensor<T>({d.filters});
    if (grad_x) {
        *grad_x = Tensor<T>(x.shape);
        grad_x->zero();
    }

    const std::int64_t col_rows = d.in_channels * d.kernel * d.kernel;
    const std::int64_t out_pixels = d.oh * d.ow;
    std::vector<T> col(static_cast<std::size_t>(col_rows * out_pixels));
    std::vector<T> gcol(grad_x ? static_cast<std::size_t>(col_rows * out_pixels) : 0);

    for (std::int64_t n = 0; n < d.batch; ++n) {
        const T* gyn = grad_y.data() + n * d.filters * out_pixels;
        nn_detail::im2col(x.data() + n * d.in_channels * d.h * d.w, d.in_channels, d.h, d.w,
                          d.kernel, stride, pad, d.oh, d.ow, col.data());
        nn_detail::gemm_nt(d.filters, col_rows, out_pixels, gyn, col.data(), grad_weight.data(),
                           true);
        for (std::int64_t f = 0; f < d.filters; ++f) {
            T acc = T(0);
            const T* row = gyn + f * out_pixels;
            for (std::int64_t i = 0; i < out_pixels; ++i) acc += row[i];
            grad_bias[f] += acc;
        }
        if (grad_x) {
            nn_detail::gemm_tn(col_rows, out_pixels, d.filters, weight.data(), gyn, gcol.data(),
                               false);
            nn_detail::col2im_accumulate(gcol.data(), d.in_channels, d.h, d.w, d.kernel, stride,
                                         pad, d.oh, d.ow,
                                         grad_x->data() + n * d.in_channels * d.h * d.w);
        }
    }
}

// Per-channel batch normalization state for a B x C x H x W activation.
template <typename T>
struct BatchNormState {
    Parameter<T> gamma;
    Parameter<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
    bool update_running_stats = true;

    BatchNormState() = default;
    explicit BatchNormState(std::int64_t channels)
        : gamma({channels}), beta({channels}),
          running_mean(static_cast<std::size_t>(channels), T(0)),
          running_var(static_cast<std::size_t>(channels), T(1)) {
        gamma.value.fill(T(1));
    }

    std::int64_t channels() const { return gamma.value.numel(); }
};

template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std; // per channel, batch statistics
};

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state, bool training,
                            BatchNormCache<T>* cache = nullptr) {
    using nn_detail::require;
    require(x.rank() == 4, "batchnorm: input must be B x C x H x W");
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(c == state.channels(), "batchnorm: channel count mismatch");
    const std::int64_t reduce = b * h * w;
    if (training && reduce < 2)
        throw ShapeError("batchnorm: training requires B*H*W >= 2 per channel");

    Tensor<T> y(x.shape);
    if (cache) {
        cache->xhat = Tensor<T>(x.shape);
        cache->inv_std.assign(static_cast<std::size_t>(c), T(0));
    }

    const std::int64_t plane = h * w;
#pragma omp parallel for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T mean, var;
        if (training) {
            T sum = T(0);
            for (std::int64_t n = 0; n < b; ++n) {
                const T* xc = x.data() + (n * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) sum += xc[i];
            }
            mean = sum / static_cast<T>(reduce);
            T sq = T(0);
            for (std::int64_t n = 0; n < b; ++n) {
                const T* xc = x.data() + (n * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T d = xc[i] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<T>(reduce);
            if (state.update_running_stats) {
                state.running_mean[ch] = (T(1) - state.momentum) * state.running_mean[ch] +
                                         state.momentum * mean;
                state.running_var[ch] = (T(1) - state.momentum) * state.running_var[ch] +
                                        state.momentum * var;
            }
        } else {
            mean = state.running_mean[ch];
            var = state.running_var[ch];
        }
        const T inv_std = T(1) / std::sqrt(var + state.eps);
        const T g = state.gamma.value[ch];
        const T bt = state.beta.value[ch];
        if (cache) cache->inv_std[static_cast<std::size_t>(ch)] = inv_std;
        for (std::int64_t n = 0; n < b; ++n) {
            const T* xc = x.data() + (n * c + ch) * plane;
            T* yc = y.data() + (n * c + ch) * plane;
            T* hc = cache ? cache->xhat.data() + (n * c + ch) * plane : nullptr;
            for (std::int64_t i = 0; i < plane; ++i) {
                const T xh = (xc[i] - mean) * inv_std;
                if (hc) hc[i] = xh;
                yc[i] = g * xh + bt;
            }
        }
    }
    return y;
}

// Training-mode backward (batch statistics).
template <typename T>
void batchnorm_backward(const BatchNormState<T>& state, const BatchNormCache<T>& cache,
                        const Tensor<T>& grad_y, Tensor<T>& grad_x, Tensor<T>& grad_gamma,
                        Tensor<T>& grad_beta) {
    const Tensor<T>& xhat = cache.xhat;
    nn_detail::require(grad_y.shape == xhat.shape, "batchnorm_backward: shape mismatch");
    const std::int64_t b = xhat.dim(0), c = xhat.dim(1), h = xhat.dim(2), w = xhat.dim(3);
    const std::int64_t plane = h * w;
    const T reduce = static_cast<T>(b * plane);

    grad_x = Tensor<T>(xhat.shape);
    grad_gamma = Tensor<T>({c});
    grad_beta = Tensor<T>({c});

#pragma omp parallel for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T sum_gy = T(0), sum_gy_xhat = T(0);
        for (std::int64_t n = 0; n < b; ++n) {
            const T* gy = grad_y.data() + (n * c + ch) * plane;
            const T* xh = xhat.data() + (n * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                sum_gy += gy[i];
                sum_gy_xhat += gy[i] * xh[i];
            }
        }
        grad_beta[ch] = sum_gy;
        grad_gamma[ch] = sum_gy_xhat;
        const T scale = state.gamma.value[ch] * cache.inv_std[static_cast<std::size_t>(ch)] / reduce;
        for (std::int64_t n = 0; n < b; ++n) {
            const T* gy = grad_y.data() + (n * c + ch) * plane;
            const T* xh = xhat.data() + (n * c + ch) * plane;
            T* gx = grad_x.data() + (n * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i)
                gx[i] = scale * (reduce * gy[i] - sum_gy - xh[i] * sum_gy_xhat);
        }
    }
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_y) {
    nn_detail::require(x.shape == grad_y.shape, "relu_backward: shape mismatch");
    Tensor<T> gx(x.shape);
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? grad_y[i] : T(0);
    return gx;
}

// 2x2 max pooling, stride 2, trailing odd row/column dropped. Ties go to the
// first element in row-major window scan order; argmax records flat input
// indices for the backward pass.
template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, Tensor<std::int64_t>& argmax) {
    using nn_detail::require;
    require(x.rank() == 4, "maxpool2d: input must be B x C x H x W");
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(h >= 2 && w >= 2, "maxpool2d: input smaller than 2x2 window");
    const std::int64_t oh = h / 2, ow = w / 2;
    Tensor<T> y({b, c, oh, ow});
    argmax = Tensor<std::int64_t>({b, c, oh, ow});
    const std::int64_t planes = b * c;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* xp = x.data() + p * h * w;
        T* yp = y.data() + p * oh * ow;
        std::int64_t* ap = argmax.data() + p * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                std::int64_t best = (2 * oy) * w + 2 * ox;
                T bv = xp[best];
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::int64_t idx = (2 * oy + dy) * w + 2 * ox + dx;
                        if (xp[idx] > bv) {
                            bv = xp[idx];
                            best = idx;
                        }
                    }
                }
                yp[oy * ow + ox] = bv;
                ap[oy * ow + ox] = p * h * w + best;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<std::int64_t>& argmax,
                             const std::vector<std::int64_t>& input_shape,
                             const Tensor<T>& grad_y) {
    nn_detail::require(argmax.shape == grad_y.shape, "maxpool2d_backward: shape mismatch");
    Tensor<T> gx(input_shape);
    gx.zero();
    const std::int64_t n = grad_y.numel();
    for (std::int64_t i = 0; i < n; ++i) gx[argmax[i]] += grad_y[i];
    return gx;
}

// B x C x H x W -> B x C (mean over the spatial plane).
template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
    nn_detail::require(x.rank() == 4, "global_avgpool: input must be B x C x H x W");
    const std::int64_t b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> y({b, c});
    const std::int64_t slots = b * c;
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < slots; ++s) {
        const T* xp = x.data() + s * plane;
        T acc = T(0);
        for (std::int64_t i = 0; i < plane; ++i) acc += xp[i];
        y[s] = acc / static_cast<T>(plane);
    }
    return y;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Tensor<T>& grad_y, std::int64_t h, std::int64_t w) {
    const std::int64_t b = grad_y.dim(0), c = grad_y.dim(1);
    Tensor<T> gx({b, c, h, w});
    const std::int64_t plane = h * w;
    const std::int64_t slots = b * c;
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < slots; ++s) {
        const T g = grad_y[s] / static_cast<T>(plane);
        T* gp = gx.data() + s * plane;
        for (std::int64_t i = 0; i < plane; ++i) gp[i] = g;
    }
    return gx;
}

// y[B,O] = x[B,I] * w[O,I]^T + b
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    using nn_detail::require;
    require(x.rank() == 2 && weight.rank() == 2, "linear: x must be B x I, weight O x I");
    require(x.dim(1) == weight.dim(1), "linear: input feature mismatch");
    require(bias.numel() == weight.dim(0), "linear: bias size mismatch");
    const std::int64_t b = x.dim(0), in = x.dim(1), out = weight.dim(0);
    Tensor<T> y({b, out});
    nn_detail::gemm_nt(b, out, in, x.data(), weight.data(), y.data(), false);
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < b; ++n)
        for (std::int64_t o = 0; o < out; ++o) y[n * out + o] += bias[o];
    return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_y,
                     Tensor<T>* grad_x, Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
    const std::int64_t b = x.dim(0), in = x.dim(1), out = weight.dim(0);
    nn_detail::require(grad_y.rank() == 2 && grad_y.dim(0) == b && grad_y.dim(1) == out,
                       "linear_backward: upstream gradient shape mismatch");
    grad_weight = Tensor<T>(weight.shape);
    grad_bias = Tensor<T>({out});
    nn_detail::gemm_tn(out, in, b, grad_y.data(), x.data(), grad_weight.data(), false);
    for (std::int64_t o = 0; o < out; ++o) {
        T acc = T(0);
        for (std::int64_t n = 0; n < b; ++n) acc += grad_y[n * out + o];
        grad_bias[o] = acc;
    }
    if (grad_x) {
        *grad_x = Tensor<T>({b, in});
        nn_detail::gemm_nn(b, in, out, grad_y.data(), weight.data(), grad_x->data(), false);
    }
}

template <typename T>
void softmax_rows(const Tensor<T>& logits, Tensor<T>& probs) {
    const std::int64_t b = logits.dim(0), c = logits.dim(1);
    probs = Tensor<T>(logits.shape);
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < b; ++n) {
        const T* l = logits.data() + n * c;
        T* p = probs.data() + n * c;
        T mx = l[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, l[j]);
        T sum = T(0);
        for (std::int64_t j = 0; j < c; ++j) {
            p[j] = std::exp(l[j] - mx);
            sum += p[j];
        }
        for (std::int64_t j = 0; j < c; ++j) p[j] /= sum;
    }
}

// Mean cross-entropy over the batch, computed in the log domain (max
// subtraction) so the loss stays finite for any finite logits. The returned
// gradient is (softmax - onehot) / B.
template <typename T>
std::pair<T, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits,
                                              const std::vector<int>& labels) {
    using nn_detail::require;
    require(logits.rank() == 2, "softmax_cross_entropy: logits must be B x C");
    const std::int64_t b = logits.dim(0), c = logits.dim(1);
    require(static_cast<std::int64_t>(labels.size()) == b,
            "softmax_cross_entropy: one label per batch row required");
    for (int lab : labels)
        if (lab < 0 || lab >= c)
            throw DataError("softmax_cross_entropy: label out of range: " + std::to_string(lab));

    Tensor<T> grad(logits.shape);
    T loss = T(0);
    for (std::int64_t n = 0; n < b; ++n) {
        const T* l = logits.data() + n * c;
        T* g = grad.data() + n * c;
        T mx = l[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, l[j]);
        T sum = T(0);
        for (std::int64_t j = 0; j < c; ++j) {
            g[j] = std::exp(l[j] - mx);
            sum += g[j];
        }
        const T log_sum = std::log(sum);
        loss += -(l[labels[static_cast<std::size_t>(n)]] - mx - log_sum);
        const T inv = T(1) / sum;
        for (std::int64_t j = 0; j < c; ++j) g[j] *= inv;
        g[labels[static_cast<std::size_t>(n)]] -= T(1);
    }
    loss /= static_cast<T>(b);
    const T inv_b = T(1) / static_cast<T>(b);
    for (std::int64_t i = 0; i < grad.numel(); ++i) grad[i] *= inv_b;
    return {loss, std::move(grad)};
}

// Adam with bias correction. Moment buffers are lazily allocated and the
// step count lives here, so a fresh AdamState restarts the optimizer (as the
// transfer-learning stages require).
template <typename T>
struct AdamState {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    std::int64_t step_count = 0;
    std::vector<Tensor<T>> m, v;

    explicit AdamState(T learning_rate = T(1e-3)) : lr(learning_rate) {}
};

template <typename T>
void adam_step(std::vector<Parameter<T>*>& params, AdamState<T>& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Tensor<T>(params[i]->value.shape);
            state.v[i] = Tensor<T>(params[i]->value.shape);
        }
    }
    nn_detail::require(state.m.size() == params.size(), "adam_step: parameter list changed size");
    ++state.step_count;
    const T t = static_cast<T>(state.step_count);
    const T bc1 = T(1) - std::pow(state.beta1, t);
    const T bc2 = T(1) - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<T>& p = *params[i];
        if (p.frozen) continue;
        nn_detail::require(p.grad.numel() == p.value.numel(), "adam_step: grad/value size mismatch");
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        const std::int64_t n = p.value.numel();
#pragma omp parallel for schedule(static)
        for (std::int64_t j = 0; j < n; ++j) {
            const T g = p.grad[j];
            m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g * g;
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            p.value[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

} // namespace orient
