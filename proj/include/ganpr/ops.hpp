#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ganpr/parallel.hpp"
#include "ganpr/tensor.hpp"

namespace ganpr {

enum class Mode { train, eval };

constexpr double kBceEpsilon = 1e-7;

// Square-kernel convolution geometry shared by conv and transposed conv.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;

    void validate() const {
        check(in_channels > 0 && out_channels > 0, "conv spec: channels must be positive, got in=",
              in_channels, " out=", out_channels);
        check(kernel > 0, "conv spec: kernel must be positive, got ", kernel);
        check(stride > 0, "conv spec: stride must be positive, got ", stride);
        check(padding >= 0, "conv spec: padding must be non-negative, got ", padding);
    }

    int out_size(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
    int transposed_out_size(int in) const { return (in - 1) * stride - 2 * padding + kernel; }
};

namespace detail {

// col layout: [C*k*k rows, Ho*Wo cols], one batch item at a time.
inline void im2col(const double* src, int C, int H, int W, const ConvSpec& s, int Ho, int Wo,
                   double* col) {
    const int k = s.kernel;
    for (int c = 0; c < C; ++c) {
        const double* chan = src + static_cast<size_t>(c) * H * W;
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                double* row = col + (static_cast<size_t>(c) * k * k + i * k + j) *
                                        (static_cast<size_t>(Ho) * Wo);
                for (int y = 0; y < Ho; ++y) {
                    const int hy = y * s.stride - s.padding + i;
                    double* out = row + static_cast<size_t>(y) * Wo;
                    if (hy < 0 || hy >= H) {
                        std::fill(out, out + Wo, 0.0);
                        continue;
                    }
                    const double* in_row = chan + static_cast<size_t>(hy) * W;
                    for (int x = 0; x < Wo; ++x) {
                        const int wx = x * s.stride - s.padding + j;
                        out[x] = (wx >= 0 && wx < W) ? in_row[wx] : 0.0;
                    }
                }
            }
        }
    }
}

inline void col2im_add(const double* col, int C, int H, int W, const ConvSpec& s, int Ho, int Wo,
                       double* dst) {
    const int k = s.kernel;
    for (int c = 0; c < C; ++c) {
        double* chan = dst + static_cast<size_t>(c) * H * W;
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                const double* row = col + (static_cast<size_t>(c) * k * k + i * k + j) *
                                              (static_cast<size_t>(Ho) * Wo);
                for (int y = 0; y < Ho; ++y) {
                    const int hy = y * s.stride - s.padding + i;
                    if (hy < 0 || hy >= H) continue;
                    double* out_row = chan + static_cast<size_t>(hy) * W;
                    const double* in_row = row + static_cast<size_t>(y) * Wo;
                    for (int x = 0; x < Wo; ++x) {
                        const int wx = x * s.stride - s.padding + j;
                        if (wx >= 0 && wx < W) out_row[wx] += in_row[x];
                    }
                }
            }
        }
    }
}

// C[M,N] = A[M,K] * B[K,N], C preset by caller (bias or zeros).
inline void gemm_add(const double* A, const double* B, double* C, int M, int K, int N) {
    parallel_for(0, M, [&](int64_t m) {
        double* crow = C + static_cast<size_t>(m) * N;
        const double* arow = A + static_cast<size_t>(m) * K;
        for (int kk = 0; kk < K; ++kk) {
            const double a = arow[kk];
            if (a == 0.0) continue;
            const double* brow = B + static_cast<size_t>(kk) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    });
}

// GW[M,R] += G[M,N] * col[R,N]^T, rows in parallel; caller iterates batch
// sequentially so accumulation order over the batch stays fixed.
inline void gemm_abt_add(const double* G, const double* col, double* GW, int M, int R, int N) {
    parallel_for(0, M, [&](int64_t m) {
        const double* grow = G + static_cast<size_t>(m) * N;
        double* wrow = GW + static_cast<size_t>(m) * R;
        for (int r = 0; r < R; ++r) {
            const double* crow = col + static_cast<size_t>(r) * N;
            double acc = 0.0;
            for (int j = 0; j < N; ++j) acc += grow[j] * crow[j];
            wrow[r] += acc;
        }
    });
}

// colgrad[R,N] = W[M,R]^T * G[M,N]
inline void gemm_atb(const double* W, const double* G, double* colgrad, int M, int R, int N) {
    parallel_for(0, R, [&](int64_t r) {
        double* row = colgrad + static_cast<size_t>(r) * N;
        std::fill(row, row + N, 0.0);
        for (int m = 0; m < M; ++m) {
            const double a = W[static_cast<size_t>(m) * R + r];
            if (a == 0.0) continue;
            const double* grow = G + static_cast<size_t>(m) * N;
            for (int j = 0; j < N; ++j) row[j] += a * grow[j];
        }
    });
}

inline void check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias,
                            const ConvSpec& spec, const char* op) {
    spec.validate();
    check(input.ndim() == 4, op, ": input must be 4-d [N,C,H,W], got ", input.shape_str());
    check(weights.ndim() == 4, op, ": weights must be 4-d, got ", weights.shape_str());
    check(weights.dim(2) == spec.kernel && weights.dim(3) == spec.kernel, op,
          ": weight kernel dims ", weights.shape_str(), " do not match spec kernel ", spec.kernel);
    check(bias.ndim() == 1, op, ": bias must be 1-d, got ", bias.shape_str());
}

}  // namespace detail

// Cross-correlation with zero padding; out[n,o,y,x] = b[o] + sum_{c,i,j} in[...] * w[o,c,i,j].
inline Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     const ConvSpec& spec) {
    detail::check_conv_args(input, weights, bias, spec, "conv2d");
    check(input.dim(1) == spec.in_channels, "conv2d: input channels ", input.dim(1),
          " do not match spec in_channels ", spec.in_channels);
    check(weights.dim(0) == spec.out_channels && weights.dim(1) == spec.in_channels,
          "conv2d: weight shape ", weights.shape_str(), " does not match spec channels ",
          spec.in_channels, "->", spec.out_channels);
    check(bias.dim(0) == spec.out_channels, "conv2d: bias length ", bias.dim(0),
          " does not match out_channels ", spec.out_channels);
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Ho = spec.out_size(H), Wo = spec.out_size(W);
    check(Ho >= 1 && Wo >= 1, "conv2d: output size ", Ho, "x", Wo, " is degenerate for input ",
          H, "x", W, " kernel ", spec.kernel, " stride ", spec.stride, " padding ", spec.padding);
    const int K = spec.out_channels;
    const int R = C * spec.kernel * spec.kernel;
    const size_t plane = static_cast<size_t>(Ho) * Wo;

    Tensor out({N, K, Ho, Wo});
    parallel_for(0, N, [&](int64_t n) {
        std::vector<double> col(static_cast<size_t>(R) * plane);
        detail::im2col(input.data() + static_cast<size_t>(n) * C * H * W, C, H, W, spec, Ho, Wo,
                       col.data());
        double* dst = out.data() + static_cast<size_t>(n) * K * plane;
        for (int o = 0; o < K; ++o)
            std::fill(dst + o * plane, dst + (o + 1) * plane, bias[static_cast<size_t>(o)]);
        detail::gemm_add(weights.data(), col.data(), dst, K, R, static_cast<int>(plane));
    });
    return out;
}

// Gradients accumulate into grad_weights/grad_bias; grad_input is overwritten.
inline void conv2d_backward_accum(const Tensor& grad_out, const Tensor& saved_input,
                                  const Tensor& weights, const ConvSpec& spec, Tensor* grad_input,
                                  std::vector<double>& grad_weights,
                                  std::vector<double>& grad_bias) {
    check(saved_input.numel() > 0, "conv2d_backward: missing saved forward input");
    const int N = saved_input.dim(0), C = saved_input.dim(1), H = saved_input.dim(2),
              W = saved_input.dim(3);
    const int Ho = spec.out_size(H), Wo = spec.out_size(W);
    const int K = spec.out_channels;
    check(grad_out.ndim() == 4 && grad_out.dim(0) == N && grad_out.dim(1) == K &&
              grad_out.dim(2) == Ho && grad_out.dim(3) == Wo,
          "conv2d_backward: grad_out shape ", grad_out.shape_str(), " does not match forward output [",
          N, ",", K, ",", Ho, ",", Wo, "]");
    const int R = C * spec.kernel * spec.kernel;
    const size_t plane = static_cast<size_t>(Ho) * Wo;

    for (int o = 0; o < K; ++o) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
            const double* g = grad_out.data() + (static_cast<size_t>(n) * K + o) * plane;
            for (size_t t = 0; t < plane; ++t) acc += g[t];
        }
        grad_bias[static_cast<size_t>(o)] += acc;
    }

    if (grad_input != nullptr) {
        *grad_input = Tensor({N, C, H, W});
        parallel_for(0, N, [&](int64_t n) {
            std::vector<double> colgrad(static_cast<size_t>(R) * plane);
            detail::gemm_atb(weights.data(), grad_out.data() + static_cast<size_t>(n) * K * plane,
                             colgrad.data(), K, R, static_cast<int>(plane));
            detail::col2im_add(colgrad.data(), C, H, W, spec, Ho, Wo,
                               grad_input->data() + static_cast<size_t>(n) * C * H * W);
        });
    }

    std::vector<double> col(static_cast<size_t>(R) * plane);
    for (int n = 0; n < N; ++n) {
        detail::im2col(saved_input.data() + static_cast<size_t>(n) * C * H * W, C, H, W, spec, Ho,
                       Wo, col.data());
        detail::gemm_abt_add(grad_out.data() + static_cast<size_t>(n) * K * plane, col.data(),
                             grad_weights.data(), K, R, static_cast<int>(plane));
    }
}

struct Conv2dGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& saved_input,
                                   const Tensor& weights, const ConvSpec& spec) {
    Conv2dGrads g;
    g.weights = Tensor(weights.shape());
    g.bias = Tensor({spec.out_channels});
    conv2d_backward_accum(grad_out, saved_input, weights, spec, &g.input, g.weights.values(),
                          g.bias.values());
    return g;
}

// Linear adjoint of conv2d with the same weights, plus a per-channel bias.
// weights: [in_channels, out_channels, k, k]; bias: [out_channels].
inline Tensor transposed_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                                const ConvSpec& spec) {
    detail::check_conv_args(input, weights, bias, spec, "transposed_conv2d");
    check(input.dim(1) == spec.in_channels, "transposed_conv2d: input channels ", input.dim(1),
          " do not match spec in_channels ", spec.in_channels);
    check(weights.dim(0) == spec.in_channels && weights.dim(1) == spec.out_channels,
          "transposed_conv2d: weight shape ", weights.shape_str(), " does not match spec channels ",
          spec.in_channels, "->", spec.out_channels);
    check(bias.dim(0) == spec.out_channels, "transposed_conv2d: bias length ", bias.dim(0),
          " does not match out_channels ", spec.out_channels);
    const int N = input.dim(0), K = input.dim(1), Hi = input.dim(2), Wi = input.dim(3);
    const int Ho = spec.transposed_out_size(Hi), Wo = spec.transposed_out_size(Wi);
    check(Ho >= 1 && Wo >= 1, "transposed_conv2d: output size ", Ho, "x", Wo, " is degenerate");
    const int C = spec.out_channels;
    const int R = C * spec.kernel * spec.kernel;
    const size_t in_plane = static_cast<size_t>(Hi) * Wi;
    // spec as seen from the adjoint conv's perspective: C-channel image -> K maps
    ConvSpec fwd = spec;
    fwd.in_channels = C;
    fwd.out_channels = K;

    Tensor out({N, C, Ho, Wo});
    parallel_for(0, N, [&](int64_t n) {
        std::vector<double> colgrad(static_cast<size_t>(R) * in_plane);
        detail::gemm_atb(weights.data(), input.data() + static_cast<size_t>(n) * K * in_plane,
                         colgrad.data(), K, R, static_cast<int>(in_plane));
        double* dst = out.data() + static_cast<size_t>(n) * C * Ho * Wo;
        for (int c = 0; c < C; ++c) {
            double* chan = dst + static_cast<size_t>(c) * Ho * Wo;
            std::fill(chan, chan + static_cast<size_t>(Ho) * Wo, bias[static_cast<size_t>(c)]);
        }
        detail::col2im_add(colgrad.data(), C, Ho, Wo, fwd, Hi, Wi, dst);
    });
    return out;
}

inline void transposed_conv2d_backward_accum(const Tensor& grad_out, const Tensor& saved_input,
                                             const Tensor& weights, const ConvSpec& spec,
                                             Tensor* grad_input, std::vector<double>& grad_weights,
                                             std::vector<double>& grad_bias) {
    check(saved_input.numel() > 0, "transposed_conv2d_backward: missing saved forward input");
    const int N = saved_input.dim(0), K = saved_input.dim(1), Hi = saved_input.dim(2),
              Wi = saved_input.dim(3);
    const int Ho = spec.transposed_out_size(Hi), Wo = spec.transposed_out_size(Wi);
    const int C = spec.out_channels;
    check(grad_out.ndim() == 4 && grad_out.dim(0) == N && grad_out.dim(1) == C &&
              grad_out.dim(2) == Ho && grad_out.dim(3) == Wo,
          "transposed_conv2d_backward: grad_out shape ", grad_out.shape_str(),
          " does not match forward output [", N, ",", C, ",", Ho, ",", Wo, "]");
    const int R = C * spec.kernel * spec.kernel;
    const size_t out_plane = static_cast<size_t>(Ho) * Wo;
    const size_t in_plane = static_cast<size_t>(Hi) * Wi;

    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
            const double* g = grad_out.data() + (static_cast<size_t>(n) * C + c) * out_plane;
            for (size_t t = 0; t < out_plane; ++t) acc += g[t];
        }
        grad_bias[static_cast<size_t>(c)] += acc;
    }

    if (grad_input != nullptr) {
        // adjoint of the adjoint: a plain convolution of grad_out
        *grad_input = Tensor({N, K, Hi, Wi});
        parallel_for(0, N, [&](int64_t n) {
            std::vector<double> col(static_cast<size_t>(R) * in_plane);
            detail::im2col(grad_out.data() + static_cast<size_t>(n) * C * out_plane, C, Ho, Wo,
                           spec, Hi, Wi, col.data());
            detail::gemm_add(weights.data(), col.data(),
                             grad_input->data() + static_cast<size_t>(n) * K * in_plane, K, R,
                             static_cast<int>(in_plane));
        });
    }

    std::vector<double> col(static_cast<size_t>(R) * in_plane);
    for (int n = 0; n < N; ++n) {
        detail::im2col(grad_out.data() + static_cast<size_t>(n) * C * out_plane, C, Ho, Wo, spec,
                       Hi, Wi, col.data());
        detail::gemm_abt_add(saved_input.data() + static_cast<size_t>(n) * K * in_plane, col.data(),
                             grad_weights.data(), K, R, static_cast<int>(in_plane));
    }
}

// ---- batch normalization -------------------------------------------------

struct RunningStats {
    Tensor mean;
    Tensor var;
};

struct BatchNormCache {
    Mode mode = Mode::train;
    std::vector<double> xhat;
    std::vector<double> inv_std;  // per channel
};

inline Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, Mode mode,
                        RunningStats& running, BatchNormCache* cache = nullptr,
                        double momentum = 0.1, double eps = 1e-5) {
    check(input.ndim() == 4, "batchnorm: input must be 4-d, got ", input.shape_str());
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    check(gamma.ndim() == 1 && gamma.dim(0) == C, "batchnorm: gamma length ", gamma.shape_str(),
          " does not match channels ", C);
    check(beta.ndim() == 1 && beta.dim(0) == C, "batchnorm: beta length ", beta.shape_str(),
          " does not match channels ", C);
    if (mode == Mode::train)
        check(N >= 2, "batchnorm: train mode requires batch size >= 2, got ", N);

    const size_t plane = static_cast<size_t>(H) * W;
    const size_t m = static_cast<size_t>(N) * plane;
    Tensor out(input.shape());
    if (cache != nullptr) {
        cache->mode = mode;
        cache->xhat.assign(input.numel(), 0.0);
        cache->inv_std.assign(static_cast<size_t>(C), 0.0);
    }

    parallel_for(0, C, [&](int64_t c) {
        double mean, inv_std;
        if (mode == Mode::train) {
            double sum = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* src = input.data() + (static_cast<size_t>(n) * C + c) * plane;
                for (size_t t = 0; t < plane; ++t) sum += src[t];
            }
            mean = sum / static_cast<double>(m);
            double varsum = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* src = input.data() + (static_cast<size_t>(n) * C + c) * plane;
                for (size_t t = 0; t < plane; ++t) {
                    const double d = src[t] - mean;
                    varsum += d * d;
                }
            }
            const double var = varsum / static_cast<double>(m);
            inv_std = 1.0 / std::sqrt(var + eps);
            running.mean[static_cast<size_t>(c)] =
                (1.0 - momentum) * running.mean[static_cast<size_t>(c)] + momentum * mean;
            running.var[static_cast<size_t>(c)] =
                (1.0 - momentum) * running.var[static_cast<size_t>(c)] + momentum * var;
        } else {
            mean = running.mean[static_cast<size_t>(c)];
            inv_std = 1.0 / std::sqrt(running.var[static_cast<size_t>(c)] + eps);
        }
        const double g = gamma[static_cast<size_t>(c)];
        const double b = beta[static_cast<size_t>(c)];
        for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * plane;
            const double* src = input.data() + off;
            double* dst = out.data() + off;
            for (size_t t = 0; t < plane; ++t) {
                const double xh = (src[t] - mean) * inv_std;
                if (cache != nullptr) cache->xhat[off + t] = xh;
                dst[t] = g * xh + b;
            }
        }
        if (cache != nullptr) cache->inv_std[static_cast<size_t>(c)] = inv_std;
    });
    return out;
}

inline void batchnorm_backward_accum(const Tensor& grad_out, const Tensor& gamma,
                                     const BatchNormCache& cache, Tensor* grad_input,
                                     std::vector<double>& grad_gamma,
                                     std::vector<double>& grad_beta) {
    const int N = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3);
    const size_t plane = static_cast<size_t>(H) * W;
    const double m = static_cast<double>(static_cast<size_t>(N) * plane);
    check(cache.xhat.size() == grad_out.numel(), "batchnorm_backward: cache does not match grad");
    if (grad_input != nullptr) *grad_input = Tensor(grad_out.shape());

    std::vector<double> sum_g(static_cast<size_t>(C)), sum_gx(static_cast<size_t>(C));
    parallel_for(0, C, [&](int64_t c) {
        double sg = 0.0, sgx = 0.0;
        for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * plane;
            const double* g = grad_out.data() + off;
            const double* xh = cache.xhat.data() + off;
            for (size_t t = 0; t < plane; ++t) {
                sg += g[t];
                sgx += g[t] * xh[t];
            }
        }
        sum_g[static_cast<size_t>(c)] = sg;
        sum_gx[static_cast<size_t>(c)] = sgx;
        if (grad_input != nullptr) {
            const double gam = gamma[static_cast<size_t>(c)];
            const double istd = cache.inv_std[static_cast<size_t>(c)];
            for (int n = 0; n < N; ++n) {
                const size_t off = (static_cast<size_t>(n) * C + c) * plane;
                const double* g = grad_out.data() + off;
                const double* xh = cache.xhat.data() + off;
                double* gi = grad_input->data() + off;
                if (cache.mode == Mode::train) {
                    for (size_t t = 0; t < plane; ++t)
                        gi[t] = gam * istd * (g[t] - sg / m - xh[t] * (sgx / m));
                } else {
                    for (size_t t = 0; t < plane; ++t) gi[t] = gam * istd * g[t];
                }
            }
        }
    });
    for (int c = 0; c < C; ++c) {
        grad_gamma[static_cast<size_t>(c)] += sum_gx[static_cast<size_t>(c)];
        grad_beta[static_cast<size_t>(c)] += sum_g[static_cast<size_t>(c)];
    }
}

// ---- element-wise activations ---------------------------------------------

inline Tensor leaky_relu(const Tensor& input, double slope) {
    check(slope > 0.0 && slope < 1.0, "leaky_relu: slope must be in (0,1), got ", slope);
    Tensor out(input.shape());
    const double* src = input.data();
    double* dst = out.data();
    for (size_t i = 0; i < input.numel(); ++i) dst[i] = src[i] > 0.0 ? src[i] : slope * src[i];
    return out;
}

inline Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& saved_input,
                                  double slope) {
    Tensor g(grad_out.shape());
    for (size_t i = 0; i < g.numel(); ++i)
        g[i] = grad_out[i] * (saved_input[i] > 0.0 ? 1.0 : slope);
    return g;
}

inline Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    for (size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

inline Tensor relu_backward(const Tensor& grad_out, const Tensor& saved_input) {
    Tensor g(grad_out.shape());
    for (size_t i = 0; i < g.numel(); ++i) g[i] = saved_input[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

inline double sigmoid_scalar(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    // keep the output strictly inside (0,1)
    return std::min(std::max(s, 1e-15), 1.0 - 1e-15);
}

inline Tensor sigmoid(const Tensor& input) {
    Tensor out(input.shape());
    for (size_t i = 0; i < input.numel(); ++i) out[i] = sigmoid_scalar(input[i]);
    return out;
}

inline Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& saved_output) {
    Tensor g(grad_out.shape());
    for (size_t i = 0; i < g.numel(); ++i)
        g[i] = grad_out[i] * saved_output[i] * (1.0 - saved_output[i]);
    return g;
}

inline double tanh_scalar(double x) {
    const double bound = 1.0 - 1e-16;
    return std::min(std::max(std::tanh(x), -bound), bound);
}

inline Tensor tanh_act(const Tensor& input) {
    Tensor out(input.shape());
    for (size_t i = 0; i < input.numel(); ++i) out[i] = tanh_scalar(input[i]);
    return out;
}

inline Tensor tanh_backward(const Tensor& grad_out, const Tensor& saved_output) {
    Tensor g(grad_out.shape());
    for (size_t i = 0; i < g.numel(); ++i)
        g[i] = grad_out[i] * (1.0 - saved_output[i] * saved_output[i]);
    return g;
}

// ---- fully connected -------------------------------------------------------

inline Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    check(input.ndim() == 2, "fully_connected: input must be 2-d [N,D], got ", input.shape_str());
    check(weights.ndim() == 2, "fully_connected: weights must be 2-d [D,M], got ",
          weights.shape_str());
    check(input.dim(1) == weights.dim(0), "fully_connected: inner dimensions disagree, input ",
          input.shape_str(), " vs weights ", weights.shape_str());
    const int M = weights.dim(1);
    check(bias.ndim() == 1 && bias.dim(0) == M, "fully_connected: bias length ", bias.shape_str(),
          " does not match output dim ", M);
    const int N = input.dim(0), D = input.dim(1);
    Tensor out({N, M});
    parallel_for(0, N, [&](int64_t n) {
        double* row = out.data() + static_cast<size_t>(n) * M;
        for (int j = 0; j < M; ++j) row[j] = bias[static_cast<size_t>(j)];
        const double* in_row = input.data() + static_cast<size_t>(n) * D;
        for (int d = 0; d < D; ++d) {
            const double a = in_row[d];
            if (a == 0.0) continue;
            const double* wrow = weights.data() + static_cast<size_t>(d) * M;
            for (int j = 0; j < M; ++j) row[j] += a * wrow[j];
        }
    });
    return out;
}

inline void fully_connected_backward_accum(const Tensor& grad_out, const Tensor& saved_input,
                                           const Tensor& weights, Tensor* grad_input,
                                           std::vector<double>& grad_weights,
                                           std::vector<double>& grad_bias) {
    const int N = saved_input.dim(0), D = saved_input.dim(1), M = weights.dim(1);
    check(grad_out.ndim() == 2 && grad_out.dim(0) == N && grad_out.dim(1) == M,
          "fully_connected_backward: grad_out shape ", grad_out.shape_str(), " does not match [",
          N, ",", M, "]");
    for (int j = 0; j < M; ++j) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) acc += grad_out.at(n, j);
        grad_bias[static_cast<size_t>(j)] += acc;
    }
    parallel_for(0, D, [&](int64_t d) {
        double* wrow = grad_weights.data() + static_cast<size_t>(d) * M;
        for (int n = 0; n < N; ++n) {
            const double a = saved_input.at(static_cast<int>(n), static_cast<int>(d));
            if (a == 0.0) continue;
            const double* grow = grad_out.data() + static_cast<size_t>(n) * M;
            for (int j = 0; j < M; ++j) wrow[j] += a * grow[j];
        }
    });
    if (grad_input != nullptr) {
        *grad_input = Tensor({N, D});
        parallel_for(0, N, [&](int64_t n) {
            const double* grow = grad_out.data() + static_cast<size_t>(n) * M;
            double* girow = grad_input->data() + static_cast<size_t>(n) * D;
            for (int d = 0; d < D; ++d) {
                const double* wrow = weights.data() + static_cast<size_t>(d) * M;
                double acc = 0.0;
                for (int j = 0; j < M; ++j) acc += grow[j] * wrow[j];
                girow[d] = acc;
            }
        });
    }
}

// ---- losses -----------------------------------------------------------------

inline double mse_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse_loss");
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

// d(mse)/da; d/db is its negation.
inline Tensor mse_loss_grad_a(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse_loss");
    Tensor g(a.shape());
    const double scale = 2.0 / static_cast<double>(a.numel());
    for (size_t i = 0; i < a.numel(); ++i) g[i] = scale * (a[i] - b[i]);
    return g;
}

inline double bce_clamp(double p) {
    return std::min(std::max(p, kBceEpsilon), 1.0 - kBceEpsilon);
}

inline double bce_loss(double prediction, double target) {
    const double p = bce_clamp(prediction);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

// Gradient through the clamped prediction; bounded by the clamp epsilon.
inline double bce_grad(double prediction, double target) {
    const double p = bce_clamp(prediction);
    return (p - target) / (p * (1.0 - p));
}

// ---- optimizer ----------------------------------------------------------------

// Adaptive-moment update with bias correction.
struct OptimizerState {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<const Tensor*>& params) {
        m.clear();
        v.clear();
        for (const Tensor* p : params) {
            m.emplace_back(p->numel(), 0.0);
            v.emplace_back(p->numel(), 0.0);
        }
    }
    bool initialized() const { return !m.empty(); }
};

inline void adam_step(const std::vector<Tensor*>& params, OptimizerState& state) {
    if (!state.initialized()) {
        std::vector<const Tensor*> view(params.begin(), params.end());
        state.init(view);
    }
    check(state.m.size() == params.size(), "adam_step: state tracks ", state.m.size(),
          " parameters but ", params.size(), " were given");
    state.step_count++;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        check(p.has_grad(), "adam_step: parameter ", i, " has no gradient buffer");
        check(state.m[i].size() == p.numel(), "adam_step: moment shape mismatch at parameter ", i);
        const std::vector<double>& g = p.grad();
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (size_t j = 0; j < p.numel(); ++j) {
            check(std::isfinite(g[j]), "adam_step: non-finite gradient at parameter ", i,
                  " element ", j);
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace ganpr
