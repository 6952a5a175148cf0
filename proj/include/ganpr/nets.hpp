#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ganpr/ops.hpp"
#include "ganpr/rng.hpp"

namespace ganpr {

/// Encoder-decoder translator: stride-2 conv encoder, mirrored transposed-conv
/// decoder, LeakyReLU down / ReLU up, tanh output head. Skip connections add
/// each encoder activation onto the equal-resolution decoder pre-activation.
struct GeneratorConfig {
    int input_size = 64;
    int input_channels = 3;
    std::vector<int> encoder_channels = {64, 128, 256, 512};
    int kernel = 4;
    int stride = 2;
    double leaky_slope = 0.2;
    bool skip_connections = true;

    bool operator==(const GeneratorConfig&) const = default;

    int depth() const { return static_cast<int>(encoder_channels.size()); }
    int padding() const { return (kernel - stride) / 2; }

    void validate() const {
        check(input_size > 0, "generator config: input_size must be positive");
        check(input_channels > 0, "generator config: input_channels must be positive");
        check(kernel >= stride && (kernel - stride) % 2 == 0,
              "generator config: kernel ", kernel, " and stride ", stride,
              " must keep layer output size at exactly input/stride");
        check(leaky_slope > 0.0 && leaky_slope < 1.0, "generator config: leaky_slope must be in (0,1)");
        int size = input_size;
        for (int c : encoder_channels) {
            check(c > 0, "generator config: encoder channel counts must be positive");
            check(size % stride == 0 && size / stride >= 1,
                  "generator config: input_size ", input_size, " cannot be downsampled ", depth(),
                  " times by stride ", stride);
            size /= stride;
        }
    }

    // conv/tconv weights+biases plus batchnorm gamma/beta where present
    size_t param_count() const {
        size_t total = 0;
        int in_ch = input_channels;
        for (int i = 0; i < depth(); ++i) {
            const int out_ch = encoder_channels[static_cast<size_t>(i)];
            total += static_cast<size_t>(out_ch) * in_ch * kernel * kernel + out_ch;
            if (i > 0) total += 2 * static_cast<size_t>(out_ch);
            in_ch = out_ch;
        }
        for (int j = 0; j < depth(); ++j) {
            const int out_ch = (j == depth() - 1)
                                   ? input_channels
                                   : encoder_channels[static_cast<size_t>(depth() - 2 - j)];
            total += static_cast<size_t>(in_ch) * out_ch * kernel * kernel + out_ch;
            if (j < depth() - 1) total += 2 * static_cast<size_t>(out_ch);
            in_ch = out_ch;
        }
        return total;
    }
};

/// Discriminator: the generator's encoder followed by a fully connected
/// feature layer and a single sigmoid realness head. The feature layer's
/// activations are the place-recognition descriptor.
struct DiscriminatorConfig {
    int input_size = 64;
    int input_channels = 3;
    std::vector<int> encoder_channels = {64, 128, 256, 512};
    int kernel = 4;
    int stride = 2;
    double leaky_slope = 0.2;
    int feature_dim = 512;

    bool operator==(const DiscriminatorConfig&) const = default;

    int depth() const { return static_cast<int>(encoder_channels.size()); }
    int padding() const { return (kernel - stride) / 2; }
    int final_spatial() const {
        int size = input_size;
        for (int i = 0; i < depth(); ++i) size /= stride;
        return size;
    }
    int flat_dim() const {
        return encoder_channels.empty()
                   ? input_channels * input_size * input_size
                   : encoder_channels.back() * final_spatial() * final_spatial();
    }

    void validate() const {
        check(!encoder_channels.empty(), "discriminator config: needs at least one encoder layer");
        check(feature_dim > 0, "discriminator config: feature_dim must be positive");
        GeneratorConfig as_gen;
        as_gen.input_size = input_size;
        as_gen.input_channels = input_channels;
        as_gen.encoder_channels = encoder_channels;
        as_gen.kernel = kernel;
        as_gen.stride = stride;
        as_gen.leaky_slope = leaky_slope;
        as_gen.validate();
    }

    size_t param_count() const {
        size_t total = 0;
        int in_ch = input_channels;
        for (int i = 0; i < depth(); ++i) {
            const int out_ch = encoder_channels[static_cast<size_t>(i)];
            total += static_cast<size_t>(out_ch) * in_ch * kernel * kernel + out_ch;
            if (i > 0) total += 2 * static_cast<size_t>(out_ch);
            in_ch = out_ch;
        }
        total += static_cast<size_t>(flat_dim()) * feature_dim + feature_dim;  // feature layer
        total += static_cast<size_t>(feature_dim) + 1;                         // realness head
        return total;
    }
};

namespace detail {

struct ConvBlock {
    ConvSpec spec;
    Tensor w, b;
    bool has_bn = false;
    Tensor gamma, beta;
    RunningStats running;

    void init(Rng& rng, double stddev) {
        w = Tensor::randn(w.shape(), rng, stddev);
        b.fill(0.0);
        if (has_bn) {
            gamma.fill(1.0);
            beta.fill(0.0);
            running.mean.fill(0.0);
            running.var.fill(1.0);
        }
    }

    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", b);
        if (has_bn) {
            fn(prefix + ".gamma", gamma);
            fn(prefix + ".beta", beta);
        }
    }
    void visit_buffers(const std::string& prefix,
                       const std::function<void(const std::string&, Tensor&)>& fn) {
        if (has_bn) {
            fn(prefix + ".running_mean", running.mean);
            fn(prefix + ".running_var", running.var);
        }
    }
};

inline ConvBlock make_conv_block(int in_ch, int out_ch, int kernel, int stride, int padding,
                                 bool bn) {
    ConvBlock blk;
    blk.spec = ConvSpec{in_ch, out_ch, kernel, stride, padding};
    blk.w = Tensor({out_ch, in_ch, kernel, kernel});
    blk.b = Tensor({out_ch});
    blk.has_bn = bn;
    if (bn) {
        blk.gamma = Tensor({out_ch});
        blk.beta = Tensor({out_ch});
        blk.running.mean = Tensor({out_ch});
        blk.running.var = Tensor({out_ch}, 1.0);
    }
    return blk;
}

// transposed conv stores weights as [in_ch, out_ch, k, k]
inline ConvBlock make_tconv_block(int in_ch, int out_ch, int kernel, int stride, int padding,
                                  bool bn) {
    ConvBlock blk;
    blk.spec = ConvSpec{in_ch, out_ch, kernel, stride, padding};
    blk.w = Tensor({in_ch, out_ch, kernel, kernel});
    blk.b = Tensor({out_ch});
    blk.has_bn = bn;
    if (bn) {
        blk.gamma = Tensor({out_ch});
        blk.beta = Tensor({out_ch});
        blk.running.mean = Tensor({out_ch});
        blk.running.var = Tensor({out_ch}, 1.0);
    }
    return blk;
}

}  // namespace detail

struct GeneratorTrace {
    Mode mode = Mode::train;
    Tensor input;
    std::vector<Tensor> enc_preact;  // fed to LeakyReLU
    std::vector<Tensor> enc_out;     // post-activation; also the skip sources
    std::vector<BatchNormCache> enc_bn;
    std::vector<Tensor> dec_preact;  // fed to ReLU (post skip add)
    std::vector<Tensor> dec_out;
    std::vector<BatchNormCache> dec_bn;
    Tensor output;  // post tanh
};

class Generator {
public:
    Generator() = default;

    explicit Generator(const GeneratorConfig& cfg) : config(cfg) {
        config.validate();
        const int L = config.depth();
        int in_ch = config.input_channels;
        for (int i = 0; i < L; ++i) {
            const int out_ch = config.encoder_channels[static_cast<size_t>(i)];
            enc_.push_back(detail::make_conv_block(in_ch, out_ch, config.kernel, config.stride,
                                                   config.padding(), i > 0));
            in_ch = out_ch;
        }
        for (int j = 0; j < L; ++j) {
            const bool last = j == L - 1;
            const int out_ch =
                last ? config.input_channels : config.encoder_channels[static_cast<size_t>(L - 2 - j)];
            dec_.push_back(detail::make_tconv_block(in_ch, out_ch, config.kernel, config.stride,
                                                    config.padding(), !last));
            in_ch = out_ch;
        }
    }

    void init_params(Rng& rng, double stddev = 0.02) {
        for (auto& blk : enc_) blk.init(rng, stddev);
        for (auto& blk : dec_) blk.init(rng, stddev);
    }

    Tensor forward(const Tensor& batch, Mode mode, GeneratorTrace* trace = nullptr) {
        check(batch.ndim() == 4, "generator: batch must be 4-d, got ", batch.shape_str());
        check(batch.dim(1) == config.input_channels && batch.dim(2) == config.input_size &&
                  batch.dim(3) == config.input_size,
              "generator: batch ", batch.shape_str(), " does not match configured input ",
              config.input_channels, "x", config.input_size, "x", config.input_size);
        const int L = config.depth();
        if (trace != nullptr) {
            trace->mode = mode;
            trace->input = batch;
            trace->enc_preact.assign(static_cast<size_t>(L), Tensor());
            trace->enc_out.assign(static_cast<size_t>(L), Tensor());
            trace->enc_bn.assign(static_cast<size_t>(L), BatchNormCache());
            trace->dec_preact.assign(static_cast<size_t>(L), Tensor());
            trace->dec_out.assign(static_cast<size_t>(L), Tensor());
            trace->dec_bn.assign(static_cast<size_t>(L), BatchNormCache());
        }

        GeneratorTrace local;  // used when the caller does not need gradients
        GeneratorTrace& tr = trace != nullptr ? *trace : local;
        if (trace == nullptr) {
            tr.enc_preact.resize(static_cast<size_t>(L));
            tr.enc_out.resize(static_cast<size_t>(L));
            tr.enc_bn.resize(static_cast<size_t>(L));
        }

        Tensor x = batch;
        for (int i = 0; i < L; ++i) {
            auto& blk = enc_[static_cast<size_t>(i)];
            Tensor h = conv2d(x, blk.w, blk.b, blk.spec);
            if (blk.has_bn)
                h = batchnorm(h, blk.gamma, blk.beta, mode, blk.running,
                              trace != nullptr ? &tr.enc_bn[static_cast<size_t>(i)] : nullptr);
            tr.enc_preact[static_cast<size_t>(i)] = h;
            x = leaky_relu(h, config.leaky_slope);
            tr.enc_out[static_cast<size_t>(i)] = x;
        }
        for (int j = 0; j < L; ++j) {
            auto& blk = dec_[static_cast<size_t>(j)];
            Tensor h = transposed_conv2d(x, blk.w, blk.b, blk.spec);
            const bool last = j == L - 1;
            if (blk.has_bn)
                h = batchnorm(h, blk.gamma, blk.beta, mode, blk.running,
                              trace != nullptr ? &tr.dec_bn[static_cast<size_t>(j)] : nullptr);
            if (!last && config.skip_connections) {
                const Tensor& skip = tr.enc_out[static_cast<size_t>(L - 2 - j)];
                check_same_shape(h, skip, "generator skip connection");
                for (size_t t = 0; t < h.numel(); ++t) h[t] += skip[t];
            }
            if (trace != nullptr) tr.dec_preact[static_cast<size_t>(j)] = h;
            x = last ? tanh_act(h) : relu(h);
            if (trace != nullptr) tr.dec_out[static_cast<size_t>(j)] = x;
        }
        if (L == 0) x = tanh_act(x);  // degenerate depth-0 config: pure tanh head
        if (trace != nullptr) tr.output = x;
        return x;
    }

    // Returns the gradient with respect to the forward input; parameter
    // gradients accumulate into the Tensor grad buffers unless disabled.
    Tensor backward(const Tensor& grad_output, const GeneratorTrace& trace,
                    bool accumulate_param_grads = true) {
        const int L = config.depth();
        if (L == 0) return tanh_backward(grad_output, trace.output);
        check_same_shape(grad_output, trace.output, "generator backward");

        std::vector<Tensor> skip_grads(static_cast<size_t>(L));
        std::vector<double> discard_a, discard_b;
        auto sink = [&](Tensor& param, std::vector<double>& discard) -> std::vector<double>& {
            if (accumulate_param_grads) return param.grad();
            discard.assign(param.numel(), 0.0);
            return discard;
        };
        Tensor g;
        for (int j = L - 1; j >= 0; --j) {
            auto& blk = dec_[static_cast<size_t>(j)];
            const bool last = j == L - 1;
            Tensor g_pre = last ? tanh_backward(grad_output, trace.output)
                                : relu_backward(g, trace.dec_preact[static_cast<size_t>(j)]);
            if (!last && config.skip_connections) {
                // the add fans the gradient out to the encoder activation as-is
                skip_grads[static_cast<size_t>(L - 2 - j)] = g_pre;
            }
            Tensor g_bn = g_pre;
            if (blk.has_bn) {
                Tensor tmp;
                batchnorm_backward_accum(g_pre, blk.gamma, trace.dec_bn[static_cast<size_t>(j)],
                                         &tmp, sink(blk.gamma, discard_a), sink(blk.beta, discard_b));
                g_bn = tmp;
            }
            const Tensor& layer_in =
                j == 0 ? trace.enc_out[static_cast<size_t>(L - 1)] : trace.dec_out[static_cast<size_t>(j - 1)];
            Tensor g_in;
            transposed_conv2d_backward_accum(g_bn, layer_in, blk.w, blk.spec, &g_in,
                                             sink(blk.w, discard_a), sink(blk.b, discard_b));
            g = std::move(g_in);
        }
        for (int i = L - 1; i >= 0; --i) {
            auto& blk = enc_[static_cast<size_t>(i)];
            if (skip_grads[static_cast<size_t>(i)].numel() > 0) {
                const Tensor& extra = skip_grads[static_cast<size_t>(i)];
                for (size_t t = 0; t < g.numel(); ++t) g[t] += extra[t];
            }
            Tensor g_pre = leaky_relu_backward(g, trace.enc_preact[static_cast<size_t>(i)],
                                               config.leaky_slope);
            Tensor g_bn = g_pre;
            if (blk.has_bn) {
                Tensor tmp;
                batchnorm_backward_accum(g_pre, blk.gamma, trace.enc_bn[static_cast<size_t>(i)],
                                         &tmp, sink(blk.gamma, discard_a), sink(blk.beta, discard_b));
                g_bn = tmp;
            }
            const Tensor& layer_in = i == 0 ? trace.input : trace.enc_out[static_cast<size_t>(i - 1)];
            Tensor g_in;
            conv2d_backward_accum(g_bn, layer_in, blk.w, blk.spec, &g_in, sink(blk.w, discard_a),
                                  sink(blk.b, discard_b));
            g = std::move(g_in);
        }
        return g;
    }

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
        for (size_t i = 0; i < enc_.size(); ++i) enc_[i].visit("enc" + std::to_string(i), fn);
        for (size_t j = 0; j < dec_.size(); ++j) dec_[j].visit("dec" + std::to_string(j), fn);
    }
    void visit_buffers(const std::function<void(const std::string&, Tensor&)>& fn) {
        for (size_t i = 0; i < enc_.size(); ++i)
            enc_[i].visit_buffers("enc" + std::to_string(i), fn);
        for (size_t j = 0; j < dec_.size(); ++j)
            dec_[j].visit_buffers("dec" + std::to_string(j), fn);
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        visit_params([&](const std::string&, Tensor& t) { out.push_back(&t); });
        return out;
    }

    void zero_grads() {
        visit_params([](const std::string&, Tensor& t) { t.grad(); t.zero_grad(); });
    }

    size_t param_count() {
        size_t n = 0;
        visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
        return n;
    }

    GeneratorConfig config;

private:
    std::vector<detail::ConvBlock> enc_;
    std::vector<detail::ConvBlock> dec_;
};

struct DiscriminatorTrace {
    Mode mode = Mode::train;
    Tensor input;
    std::vector<Tensor> enc_preact;
    std::vector<Tensor> enc_out;
    std::vector<BatchNormCache> enc_bn;
    Tensor flat;      // [N, flat_dim]
    Tensor features;  // [N, feature_dim]
    Tensor realness;  // [N], sigmoid output
};

struct DiscriminatorOutput {
    Tensor features;  // [N, feature_dim]
    Tensor realness;  // [N], strictly in (0,1)
};

class Discriminator {
public:
    Discriminator() = default;

    explicit Discriminator(const DiscriminatorConfig& cfg) : config(cfg) {
        config.validate();
        int in_ch = config.input_channels;
        for (int i = 0; i < config.depth(); ++i) {
            const int out_ch = config.encoder_channels[static_cast<size_t>(i)];
            enc_.push_back(detail::make_conv_block(in_ch, out_ch, config.kernel, config.stride,
                                                   config.padding(), i > 0));
            in_ch = out_ch;
        }
        feature_w_ = Tensor({config.flat_dim(), config.feature_dim});
        feature_b_ = Tensor({config.feature_dim});
        head_w_ = Tensor({config.feature_dim, 1});
        head_b_ = Tensor({1});
    }

    void init_params(Rng& rng, double stddev = 0.02) {
        for (auto& blk : enc_) blk.init(rng, stddev);
        feature_w_ = Tensor::randn(feature_w_.shape(), rng, stddev);
        feature_b_.fill(0.0);
        head_w_ = Tensor::randn(head_w_.shape(), rng, stddev);
        head_b_.fill(0.0);
    }

    DiscriminatorOutput forward(const Tensor& batch, Mode mode,
                                DiscriminatorTrace* trace = nullptr) {
        check(batch.ndim() == 4, "discriminator: batch must be 4-d, got ", batch.shape_str());
        check(batch.dim(1) == config.input_channels && batch.dim(2) == config.input_size &&
                  batch.dim(3) == config.input_size,
              "discriminator: batch ", batch.shape_str(), " does not match configured input ",
              config.input_channels, "x", config.input_size, "x", config.input_size);
        const int L = config.depth();
        const int N = batch.dim(0);
        if (trace != nullptr) {
            trace->mode = mode;
            trace->input = batch;
            trace->enc_preact.assign(static_cast<size_t>(L), Tensor());
            trace->enc_out.assign(static_cast<size_t>(L), Tensor());
            trace->enc_bn.assign(static_cast<size_t>(L), BatchNormCache());
        }
        Tensor x = batch;
        for (int i = 0; i < L; ++i) {
            auto& blk = enc_[static_cast<size_t>(i)];
            Tensor h = conv2d(x, blk.w, blk.b, blk.spec);
            if (blk.has_bn)
                h = batchnorm(h, blk.gamma, blk.beta, mode, blk.running,
                              trace != nullptr ? &trace->enc_bn[static_cast<size_t>(i)] : nullptr);
            if (trace != nullptr) trace->enc_preact[static_cast<size_t>(i)] = h;
            x = leaky_relu(h, config.leaky_slope);
            if (trace != nullptr) trace->enc_out[static_cast<size_t>(i)] = x;
        }
        Tensor flat = Tensor::from_values({N, config.flat_dim()}, x.values());
        DiscriminatorOutput out;
        out.features = fully_connected(flat, feature_w_, feature_b_);
        Tensor logit = fully_connected(out.features, head_w_, head_b_);  // [N,1]
        out.realness = Tensor({N});
        for (int n = 0; n < N; ++n) out.realness[static_cast<size_t>(n)] = sigmoid_scalar(logit.at(n, 0));
        if (trace != nullptr) {
            trace->flat = flat;
            trace->features = out.features;
            trace->realness = out.realness;
        }
        return out;
    }

    // grad_realness: [N] gradient of the loss in the sigmoid output.
    Tensor backward(const Tensor& grad_realness, const DiscriminatorTrace& trace,
                    bool accumulate_param_grads = true) {
        const int N = trace.input.dim(0);
        check(grad_realness.ndim() == 1 && grad_realness.dim(0) == N,
              "discriminator backward: grad must be [N]");
        Tensor g_logit({N, 1});
        for (int n = 0; n < N; ++n) {
            const double y = trace.realness[static_cast<size_t>(n)];
            g_logit.at(n, 0) = grad_realness[static_cast<size_t>(n)] * y * (1.0 - y);
        }
        std::vector<double> discard_a, discard_b;
        auto sink = [&](Tensor& param, std::vector<double>& discard) -> std::vector<double>& {
            if (accumulate_param_grads) return param.grad();
            discard.assign(param.numel(), 0.0);
            return discard;
        };
        Tensor g_features;
        fully_connected_backward_accum(g_logit, trace.features, head_w_, &g_features,
                                       sink(head_w_, discard_a), sink(head_b_, discard_b));
        Tensor g_flat;
        fully_connected_backward_accum(g_features, trace.flat, feature_w_, &g_flat,
                                       sink(feature_w_, discard_a), sink(feature_b_, discard_b));
        const int L = config.depth();
        const int fs = config.final_spatial();
        Tensor g = Tensor::from_values({N, config.encoder_channels.back(), fs, fs}, g_flat.values());
        for (int i = L - 1; i >= 0; --i) {
            auto& blk = enc_[static_cast<size_t>(i)];
            Tensor g_pre =
                leaky_relu_backward(g, trace.enc_preact[static_cast<size_t>(i)], config.leaky_slope);
            Tensor g_bn = g_pre;
            if (blk.has_bn) {
                Tensor tmp;
                batchnorm_backward_accum(g_pre, blk.gamma, trace.enc_bn[static_cast<size_t>(i)],
                                         &tmp, sink(blk.gamma, discard_a), sink(blk.beta, discard_b));
                g_bn = tmp;
            }
            const Tensor& layer_in = i == 0 ? trace.input : trace.enc_out[static_cast<size_t>(i - 1)];
            Tensor g_in;
            conv2d_backward_accum(g_bn, layer_in, blk.w, blk.spec, &g_in, sink(blk.w, discard_a),
                                  sink(blk.b, discard_b));
            g = std::move(g_in);
        }
        return g;
    }

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
        for (size_t i = 0; i < enc_.size(); ++i) enc_[i].visit("enc" + std::to_string(i), fn);
        fn("feature.w", feature_w_);
        fn("feature.b", feature_b_);
        fn("head.w", head_w_);
        fn("head.b", head_b_);
    }
    void visit_buffers(const std::function<void(const std::string&, Tensor&)>& fn) {
        for (size_t i = 0; i < enc_.size(); ++i)
            enc_[i].visit_buffers("enc" + std::to_string(i), fn);
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        visit_params([&](const std::string&, Tensor& t) { out.push_back(&t); });
        return out;
    }

    void zero_grads() {
        visit_params([](const std::string&, Tensor& t) { t.grad(); t.zero_grad(); });
    }

    size_t param_count() {
        size_t n = 0;
        visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
        return n;
    }

    DiscriminatorConfig config;

private:
    std::vector<detail::ConvBlock> enc_;
    Tensor feature_w_, feature_b_;
    Tensor head_w_, head_b_;
};

struct Networks {
    Generator g_a;  // translates into domain A
    Generator g_b;  // translates into domain B
    Discriminator d_a;
    Discriminator d_b;
};

inline Networks init_networks(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                              uint64_t seed, double init_stddev = 0.02) {
    gen_cfg.validate();
    disc_cfg.validate();
    Networks nets;
    nets.g_a = Generator(gen_cfg);
    nets.g_b = Generator(gen_cfg);
    nets.d_a = Discriminator(disc_cfg);
    nets.d_b = Discriminator(disc_cfg);
    Rng rng(seed);
    nets.g_a.init_params(rng, init_stddev);
    nets.g_b.init_params(rng, init_stddev);
    nets.d_a.init_params(rng, init_stddev);
    nets.d_b.init_params(rng, init_stddev);
    return nets;
}

}  // namespace ganpr
