#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "orient/errors.hpp"
#include "orient/nn.hpp"
#include "orient/rng.hpp"
#include "orient/tensor.hpp"

// The orientation classifier: 3 x (conv 3x3 pad 1 -> batchnorm -> ReLU ->
// maxpool 2x2), global average pooling, fc + ReLU, fc -> 8 logits.

namespace orient {

struct OrientNetConfig {
    int input_size = 64;
    std::array<int, 3> channels{16, 32, 64};
    int kernel = 3;
    int hidden_units = 32;
    int num_classes = 8;

    void validate() const {
        if (input_size < 8 || input_size % 8 != 0)
            throw DataError("input_size must be a positive multiple of 8 (three 2x poolings)");
        for (int c : channels)
            if (c < 1) throw DataError("channel widths must be >= 1");
        if (kernel < 1 || kernel % 2 == 0)
            throw DataError("kernel must be odd (same-size convolutions)");
        if (hidden_units < 1) throw DataError("hidden_units must be >= 1");
        if (num_classes != 8) throw DataError("num_classes must be 8");
    }
};

template <typename T>
struct OrientNet;

template <typename T>
struct ModelForwardCache {
    Tensor<T> input;
    std::array<Tensor<T>, 3> conv_in;   // activation entering each conv
    std::array<Tensor<T>, 3> conv_out;  // conv output (batchnorm input)
    std::array<BatchNormCache<T>, 3> bn_cache;
    std::array<Tensor<T>, 3> bn_out;    // relu input
    std::array<Tensor<T>, 3> relu_out;  // maxpool input
    std::array<Tensor<std::int64_t>, 3> pool_argmax;
    std::array<Tensor<T>, 3> pool_out;
    Tensor<T> gap_out;  // fc1 input
    Tensor<T> fc1_out;  // hidden pre-activation
    Tensor<T> fc1_relu; // fc2 input
};

template <typename T>
struct OrientNet {
    OrientNetConfig config;
    std::array<Parameter<T>, 3> conv_w;
    std::array<Parameter<T>, 3> conv_b;
    std::vector<BatchNormState<T>> bn; // size 3
    Parameter<T> fc1_w, fc1_b;
    Parameter<T> fc2_w, fc2_b;

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        for (int i = 0; i < 3; ++i) {
            out.push_back(&conv_w[i]);
            out.push_back(&conv_b[i]);
            out.push_back(&bn[i].gamma);
            out.push_back(&bn[i].beta);
        }
        out.push_back(&fc1_w);
        out.push_back(&fc1_b);
        out.push_back(&fc2_w);
        out.push_back(&fc2_b);
        return out;
    }

    // Conv weights/biases plus batchnorm affine parameters: everything the
    // transfer-learning freeze stage pins.
    std::vector<Parameter<T>*> backbone_parameters() {
        std::vector<Parameter<T>*> out;
        for (int i = 0; i < 3; ++i) {
            out.push_back(&conv_w[i]);
            out.push_back(&conv_b[i]);
            out.push_back(&bn[i].gamma);
            out.push_back(&bn[i].beta);
        }
        return out;
    }

    void set_backbone_frozen(bool frozen) {
        for (Parameter<T>* p : backbone_parameters()) p->frozen = frozen;
        for (auto& state : bn) state.update_running_stats = !frozen;
    }

    Tensor<T> forward(const Tensor<T>& batch, bool training,
                      ModelForwardCache<T>* cache = nullptr) {
        if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != config.input_size ||
            batch.dim(3) != config.input_size)
            throw ShapeError("OrientNet::forward: batch must be B x 3 x S x S with S = input_size");
        if (cache) cache->input = batch;
        Tensor<T> x = batch;
        const std::int64_t pad = config.kernel / 2;
        for (int i = 0; i < 3; ++i) {
            if (cache) cache->conv_in[i] = x;
            Tensor<T> c = conv2d_forward(x, conv_w[i].value, conv_b[i].value, 1, pad);
            if (cache) cache->conv_out[i] = c;
            Tensor<T> b = batchnorm_forward(c, bn[i], training, cache ? &cache->bn_cache[i] : nullptr);
            if (cache) cache->bn_out[i] = b;
            Tensor<T> r = relu_forward(b);
            if (cache) cache->relu_out[i] = r;
            Tensor<std::int64_t> argmax;
            x = maxpool2d_forward(r, argmax);
            if (cache) {
                cache->pool_argmax[i] = std::move(argmax);
                cache->pool_out[i] = x;
            }
        }
        Tensor<T> g = global_avgpool_forward(x);
        if (cache) cache->gap_out = g;
        Tensor<T> h = linear_forward(g, fc1_w.value, fc1_b.value);
        if (cache) cache->fc1_out = h;
        Tensor<T> hr = relu_forward(h);
        if (cache) cache->fc1_relu = hr;
        return linear_forward(hr, fc2_w.value, fc2_b.value);
    }

    // Accumulates parameter gradients for one batch (gradients are written,
    // not summed, so callers run one backward per step). When the backbone
    // is frozen only the fc gradients are produced.
    void backward(const ModelForwardCache<T>& cache, const Tensor<T>& grad_logits,
                  bool backbone_frozen = false) {
        Tensor<T> grad_fc1_relu;
        linear_backward(cache.fc1_relu, fc2_w.value, grad_logits, &grad_fc1_relu, fc2_w.grad,
                        fc2_b.grad);
        Tensor<T> grad_fc1 = relu_backward(cache.fc1_out, grad_fc1_relu);
        if (backbone_frozen) {
            Tensor<T>* no_input_grad = nullptr;
            (void)no_input_grad;
            linear_backward(cache.gap_out, fc1_w.value, grad_fc1, nullptr, fc1_w.grad, fc1_b.grad);
            return;
        }
        Tensor<T> grad_gap;
        linear_backward(cache.gap_out, fc1_w.value, grad_fc1, &grad_gap, fc1_w.grad, fc1_b.grad);
        Tensor<T> g = global_avgpool_backward(grad_gap, cache.pool_out[2].dim(2),
                                              cache.pool_out[2].dim(3));
        const std::int64_t pad = config.kernel / 2;
        for (int i = 2; i >= 0; --i) {
            Tensor<T> grad_relu =
                maxpool2d_backward(cache.pool_argmax[i], cache.relu_out[i].shape, g);
            Tensor<T> grad_bn = relu_backward(cache.bn_out[i], grad_relu);
            Tensor<T> grad_conv;
            batchnorm_backward(bn[i], cache.bn_cache[i], grad_bn, grad_conv, bn[i].gamma.grad,
                               bn[i].beta.grad);
            Tensor<T>* gx = i > 0 ? &g : nullptr; // input gradient unused at the first conv
            Tensor<T> grad_in;
            conv2d_backward(cache.conv_in[i], conv_w[i].value, grad_conv, i > 0 ? &grad_in : nullptr,
                            conv_w[i].grad, conv_b[i].grad);
            (void)gx;
            if (i > 0) g = std::move(grad_in);
        }
    }
};

// He-style uniform init (bound sqrt(6/fan_in)) for conv and fc weights,
// zero biases, batchnorm gamma 1 / beta 0 / running stats (0,1).
// Deterministic: tensors are filled in declaration order from the one rng.
template <typename T>
OrientNet<T> init_model(const OrientNetConfig& config, Rng& rng) {
    config.validate();
    OrientNet<T> net;
    net.config = config;

    auto he_fill = [&rng](Tensor<T>& t, std::int64_t fan_in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<T>(uniform_range(rng, -bound, bound));
    };

    int in_ch = 3;
    for (int i = 0; i < 3; ++i) {
        const int out_ch = config.channels[static_cast<std::size_t>(i)];
        net.conv_w[i] = Parameter<T>({out_ch, in_ch, config.kernel, config.kernel});
        he_fill(net.conv_w[i].value, static_cast<std::int64_t>(in_ch) * config.kernel * config.kernel);
        net.conv_b[i] = Parameter<T>({out_ch});
        net.bn.emplace_back(out_ch);
        in_ch = out_ch;
    }
    net.fc1_w = Parameter<T>({config.hidden_units, config.channels[2]});
    he_fill(net.fc1_w.value, config.channels[2]);
    net.fc1_b = Parameter<T>({config.hidden_units});
    net.fc2_w = Parameter<T>({config.num_classes, config.hidden_units});
    he_fill(net.fc2_w.value, config.hidden_units);
    net.fc2_b = Parameter<T>({config.num_classes});
    return net;
}

// ------------------------------------------------------------------------
// Checkpoint format (all multi-byte values little-endian):
//   magic "ORNT", version u32 (=1),
//   config: u32 x7 (input_size, channels[3], kernel, hidden_units, num_classes),
//   tensor count u32,
//   per tensor: name length u16, name bytes, rank u8, dims u32 each,
//               float32 payload.
// Optimizer state is deliberately not stored: each training stage restarts
// optimization.

namespace checkpoint_detail {

constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ofstream& out, std::uint32_t x) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(x >> 8),
                         static_cast<std::uint8_t>(x >> 16), static_cast<std::uint8_t>(x >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u16(std::ofstream& out, std::uint16_t x) {
    std::uint8_t b[2] = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(x >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

struct Reader {
    std::ifstream in;
    std::string path;

    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw DataError("cannot open checkpoint: " + p);
    }

    void bytes(void* dst, std::size_t n) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw DataError("truncated checkpoint file: " + path);
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint16_t u16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint8_t u8() {
        std::uint8_t b;
        bytes(&b, 1);
        return b;
    }
};

inline std::vector<std::pair<std::string, const Tensor<float>*>> named_tensors(
    const OrientNet<float>& net) {
    std::vector<std::pair<std::string, const Tensor<float>*>> out;
    for (int i = 0; i < 3; ++i) {
        const std::string b = "conv" + std::to_string(i + 1);
        const std::string n = "bn" + std::to_string(i + 1);
        out.emplace_back(b + ".weight", &net.conv_w[i].value);
        out.emplace_back(b + ".bias", &net.conv_b[i].value);
        out.emplace_back(n + ".gamma", &net.bn[i].gamma.value);
        out.emplace_back(n + ".beta", &net.bn[i].beta.value);
        out.emplace_back(n + ".running_mean", nullptr); // handled specially below
        out.emplace_back(n + ".running_var", nullptr);
    }
    out.emplace_back("fc1.weight", &net.fc1_w.value);
    out.emplace_back("fc1.bias", &net.fc1_b.value);
    out.emplace_back("fc2.weight", &net.fc2_w.value);
    out.emplace_back("fc2.bias", &net.fc2_b.value);
    return out;
}

} // namespace checkpoint_detail

inline void save_checkpoint(const OrientNet<float>& net, const std::string& path) {
    namespace cd = checkpoint_detail;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write("ORNT", 4);
    cd::put_u32(out, cd::kVersion);
    const auto& c = net.config;
    for (std::uint32_t v : {static_cast<std::uint32_t>(c.input_size),
                            static_cast<std::uint32_t>(c.channels[0]),
                            static_cast<std::uint32_t>(c.channels[1]),
                            static_cast<std::uint32_t>(c.channels[2]),
                            static_cast<std::uint32_t>(c.kernel),
                            static_cast<std::uint32_t>(c.hidden_units),
                            static_cast<std::uint32_t>(c.num_classes)})
        cd::put_u32(out, v);

    auto write_tensor = [&out](const std::string& name, const float* data,
                               const std::vector<std::int64_t>& shape) {
        cd::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(static_cast<char>(shape.size()));
        std::int64_t n = 1;
        for (auto d : shape) {
            cd::put_u32(out, static_cast<std::uint32_t>(d));
            n *= d;
        }
        out.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(float))));
    };

    cd::put_u32(out, 22); // tensor count
    for (int i = 0; i < 3; ++i) {
        const std::string cb = "conv" + std::to_string(i + 1);
        const std::string nb = "bn" + std::to_string(i + 1);
        const auto& bn = net.bn[static_cast<std::size_t>(i)];
        write_tensor(cb + ".weight", net.conv_w[i].value.data(), net.conv_w[i].value.shape);
        write_tensor(cb + ".bias", net.conv_b[i].value.data(), net.conv_b[i].value.shape);
        write_tensor(nb + ".gamma", bn.gamma.value.data(), bn.gamma.value.shape);
        write_tensor(nb + ".beta", bn.beta.value.data(), bn.beta.value.shape);
        const std::int64_t ch = bn.channels();
        write_tensor(nb + ".running_mean", bn.running_mean.data(), {ch});
        write_tensor(nb + ".running_var", bn.running_var.data(), {ch});
    }
    write_tensor("fc1.weight", net.fc1_w.value.data(), net.fc1_w.value.shape);
    write_tensor("fc1.bias", net.fc1_b.value.data(), net.fc1_b.value.shape);
    write_tensor("fc2.weight", net.fc2_w.value.data(), net.fc2_w.value.shape);
    write_tensor("fc2.bias", net.fc2_b.value.data(), net.fc2_b.value.shape);
    if (!out) throw DataError("I/O failure writing checkpoint: " + path);
}

inline OrientNet<float> load_checkpoint(const std::string& path) {
    namespace cd = checkpoint_detail;
    cd::Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "ORNT", 4) != 0)
        throw DataError("bad checkpoint magic (expected \"ORNT\"): " + path);
    const std::uint32_t version = r.u32();
    if (version != cd::kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    OrientNetConfig config;
    config.input_size = static_cast<int>(r.u32());
    for (int i = 0; i < 3; ++i) config.channels[static_cast<std::size_t>(i)] = static_cast<int>(r.u32());
    config.kernel = static_cast<int>(r.u32());
    config.hidden_units = static_cast<int>(r.u32());
    config.num_classes = static_cast<int>(r.u32());
    config.validate();

    const std::uint32_t count = r.u32();
    std::map<std::string, Tensor<float>> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const int rank = r.u8();
        std::vector<std::int64_t> shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = r.u32();
        Tensor<float> t(shape);
        r.bytes(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
        tensors.emplace(std::move(name), std::move(t));
    }

    OrientNet<float> net;
    net.config = config;
    auto take = [&tensors, &path](const std::string& name,
                                  const std::vector<std::int64_t>& want) -> Tensor<float> {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw DataError("checkpoint missing tensor \"" + name + "\": " + path);
        if (it->second.shape != want)
            throw DataError("checkpoint tensor \"" + name + "\" has mismatched shape: " + path);
        return std::move(it->second);
    };

    int in_ch = 3;
    for (int i = 0; i < 3; ++i) {
        const std::int64_t out_ch = config.channels[static_cast<std::size_t>(i)];
        const std::string cb = "conv" + std::to_string(i + 1);
        const std::string nb = "bn" + std::to_string(i + 1);
        net.conv_w[i].value = take(cb + ".weight", {out_ch, in_ch, config.kernel, config.kernel});
        net.conv_w[i].grad = Tensor<float>(net.conv_w[i].value.shape);
        net.conv_b[i].value = take(cb + ".bias", {out_ch});
        net.conv_b[i].grad = Tensor<float>({out_ch});
        BatchNormState<float> bn(out_ch);
        bn.gamma.value = take(nb + ".gamma", {out_ch});
        bn.beta.value = take(nb + ".beta", {out_ch});
        Tensor<float> rm = take(nb + ".running_mean", {out_ch});
        Tensor<float> rv = take(nb + ".running_var", {out_ch});
        bn.running_mean.assign(rm.v.begin(), rm.v.end());
        bn.running_var.assign(rv.v.begin(), rv.v.end());
        net.bn.push_back(std::move(bn));
        in_ch = static_cast<int>(out_ch);
    }
    net.fc1_w.value = take("fc1.weight", {config.hidden_units, config.channels[2]});
    net.fc1_w.grad = Tensor<float>(net.fc1_w.value.shape);
    net.fc1_b.value = take("fc1.bias", {config.hidden_units});
    net.fc1_b.grad = Tensor<float>({config.hidden_units});
    net.fc2_w.value = take("fc2.weight", {config.num_classes, config.hidden_units});
    net.fc2_w.grad = Tensor<float>(net.fc2_w.value.shape);
    net.fc2_b.value = take("fc2.bias", {config.num_classes});
    net.fc2_b.grad = Tensor<float>({config.num_classes});
    return net;
}

} // namespace orient
