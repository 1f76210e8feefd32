#pragma once

// Flat residual CNN acting on the real/imaginary planes of a complex image:
// 3x3 "same" convolutions with ReLU between layers and, when the residual
// flag is set, output = input - network(input).

#include <cstdint>
#include <random>
#include <vector>

#include "types.hpp"

namespace mfjmodl {

struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<double> weights;  // [out][in][3][3]
    std::vector<double> bias;     // [out]

    static constexpr int kKernel = 3;

    ConvLayer() = default;
    ConvLayer(int in, int out)
        : in_channels(in), out_channels(out),
          weights(static_cast<std::size_t>(in * out * kKernel * kKernel), 0.0),
          bias(static_cast<std::size_t>(out), 0.0) {}

    std::size_t index(int o, int i, int ky, int kx) const {
        return ((static_cast<std::size_t>(o) * in_channels + i) * kKernel + ky) * kKernel + kx;
    }
    double& w(int o, int i, int ky, int kx) { return weights[index(o, i, ky, kx)]; }
    double w(int o, int i, int ky, int kx) const { return weights[index(o, i, ky, kx)]; }
};

struct DenoiserModel {
    std::vector<ConvLayer> layers;
    bool residual = true;

    void validate() const {
        require(!layers.empty(), "DenoiserModel: no layers");
        require(layers.front().in_channels == 2, "DenoiserModel: first layer must take 2 channels");
        require(layers.back().out_channels == 2, "DenoiserModel: last layer must produce 2 channels");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const ConvLayer& L = layers[l];
            require(L.in_channels >= 1 && L.out_channels >= 1, "DenoiserModel: empty layer");
            require(L.weights.size() == static_cast<std::size_t>(L.in_channels * L.out_channels * 9) &&
                        L.bias.size() == static_cast<std::size_t>(L.out_channels),
                    "DenoiserModel: layer storage does not match 3x3 kernels");
            if (l > 0)
                require(layers[l - 1].out_channels == L.in_channels, "DenoiserModel: channel count mismatch between layers");
        }
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& L : layers) n += L.weights.size() + L.bias.size();
        return n;
    }

    /// Same shapes, all parameters zero.
    DenoiserModel zeros_like() const {
        DenoiserModel z;
        z.residual = residual;
        for (const auto& L : layers) z.layers.emplace_back(L.in_channels, L.out_channels);
        return z;
    }

    /// Parameters in layer order: weights then bias per layer.
    std::vector<double> flatten() const {
        std::vector<double> v;
        v.reserve(parameter_count());
        for (const auto& L : layers) {
            v.insert(v.end(), L.weights.begin(), L.weights.end());
            v.insert(v.end(), L.bias.begin(), L.bias.end());
        }
        return v;
    }

    void unflatten(const std::vector<double>& v) {
        require(v.size() == parameter_count(), "DenoiserModel: flat parameter size mismatch");
        std::size_t k = 0;
        for (auto& L : layers) {
            for (double& w : L.weights) w = v[k++];
            for (double& b : L.bias) b = v[k++];
        }
    }

    /// depth layers of width channels: 2 -> width -> ... -> width -> 2. Hidden
    /// layers use He-scaled Gaussian weights; the output layer starts at
    /// `output_scale` times that so the residual model begins near identity.
    static DenoiserModel make(int depth, int width, std::uint64_t seed, bool residual = true,
                              double output_scale = 0.1) {
        require(depth >= 1 && width >= 1, "DenoiserModel::make: depth and width must be positive");
        DenoiserModel m;
        m.residual = residual;
        std::mt19937_64 rng(seed);
        for (int l = 0; l < depth; ++l) {
            const int in = l == 0 ? 2 : width;
            const int out = l == depth - 1 ? 2 : width;
            ConvLayer L(in, out);
            const double scale = std::sqrt(2.0 / (9.0 * in)) * (l == depth - 1 ? output_scale : 1.0);
            std::normal_distribution<double> normal(0.0, scale);
            for (double& w : L.weights) w = normal(rng);
            m.layers.push_back(std::move(L));
        }
        m.validate();
        return m;
    }
};

/// Planar multi-channel image, [channel][row][col].
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
    const double* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * height * width; }
};

inline FeatureMap to_planes(const CMatrix& x) {
    FeatureMap f(2, static_cast<int>(x.rows()), static_cast<int>(x.cols()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        f.data[static_cast<std::size_t>(i)] = x.data()[i].real();
        f.data[static_cast<std::size_t>(x.size() + i)] = x.data()[i].imag();
    }
    return f;
}

inline CMatrix from_planes(const FeatureMap& f) {
    require_shape(f.channels == 2, "from_planes: need exactly two channels");
    CMatrix x(f.height, f.width);
    const std::size_t n = static_cast<std::size_t>(f.height) * f.width;
    for (std::size_t i = 0; i < n; ++i) x.data()[i] = cdouble(f.data[i], f.data[n + i]);
    return x;
}

namespace conv {

inline FeatureMap forward(const ConvLayer& L, const FeatureMap& in) {
    require_shape(in.channels == L.in_channels, "conv: input channel count does not match kernels");
    const int h = in.height, w = in.width;
    FeatureMap out(L.out_channels, h, w);
    for (int o = 0; o < L.out_channels; ++o) {
        double* dst = out.plane(o);
        std::fill(dst, dst + static_cast<std::size_t>(h) * w, L.bias[static_cast<std::size_t>(o)]);
        for (int i = 0; i < L.in_channels; ++i) {
            const double* src = in.plane(i);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double k = L.w(o, i, ky, kx);
                    if (k == 0.0) continue;
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* drow = dst + static_cast<std::size_t>(y) * w;
                        const double* srow = src + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) drow[x] += k * srow[x];
                    }
                }
        }
    }
    return out;
}

// Accumulates kernel/bias gradients into `grad` and returns the input gradient.
inline FeatureMap backward(const ConvLayer& L, const FeatureMap& in, const FeatureMap& grad_out, ConvLayer& grad) {
    const int h = in.height, w = in.width;
    FeatureMap grad_in(L.in_channels, h, w);
    for (int o = 0; o < L.out_channels; ++o) {
        const double* g = grad_out.plane(o);
        double bsum = 0.0;
        for (std::size_t k = 0; k < static_cast<std::size_t>(h) * w; ++k) bsum += g[k];
        grad.bias[static_cast<std::size_t>(o)] += bsum;
        for (int i = 0; i < L.in_channels; ++i) {
            const double* src = in.plane(i);
            double* gin = grad_in.plane(i);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    const double k = L.w(o, i, ky, kx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = g + static_cast<std::size_t>(y) * w;
                        const double* srow = src + static_cast<std::size_t>(y + dy) * w + dx;
                        double* girow = gin + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) {
                            acc += grow[x] * srow[x];
                            girow[x] += k * grow[x];
                        }
                    }
                    grad.w(o, i, ky, kx) += acc;
                }
        }
    }
    return grad_in;
}

}  // namespace conv

/// Per-layer inputs and pre-activations from one forward pass.
struct DenoiserCache {
    std::vector<FeatureMap> inputs;
    std::vector<FeatureMap> pre_activations;
};

inline CMatrix denoiser_forward(const DenoiserModel& model, const CMatrix& x, DenoiserCache* cache = nullptr) {
    model.validate();
    FeatureMap a = to_planes(x);
    if (cache) {
        cache->inputs.clear();
        cache->pre_activations.clear();
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (cache) cache->inputs.push_back(a);
        FeatureMap z = conv::forward(model.layers[l], a);
        if (l + 1 < model.layers.size()) {
            if (cache) cache->pre_activations.push_back(z);
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
        }
        a = std::move(z);
    }
    CMatrix net = from_planes(a);
    return model.residual ? CMatrix(x - net) : net;
}

inline ReflectivityMap denoiser_apply(const DenoiserModel& model, const ReflectivityMap& image) {
    return ReflectivityMap(denoiser_forward(model, image.data), image.azimuth_spacing, image.range_spacing);
}

struct DenoiserGradient {
    DenoiserModel d_weights;  // same shapes as the model
    CMatrix d_input;          // complex convention: dL/dRe + j dL/dIm
};

/// Exact reverse pass of denoiser_forward. Gradients use the complex
/// convention g = dL/dRe + j dL/dIm on both sides.
inline DenoiserGradient denoiser_backward(const DenoiserModel& model, const CMatrix& x, const CMatrix& upstream,
                                          const DenoiserCache* cached = nullptr) {
    require_shape(x.rows() == upstream.rows() && x.cols() == upstream.cols(), "denoiser_backward: shape mismatch");
    DenoiserCache local;
    if (!cached) {
        denoiser_forward(model, x, &local);
        cached = &local;
    }
    require(cached->inputs.size() == model.layers.size(), "denoiser_backward: cache does not match model");
    DenoiserGradient out{model.zeros_like(), CMatrix()};
    FeatureMap g = to_planes(model.residual ? CMatrix(-upstream) : upstream);
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        if (l + 1 < model.layers.size()) {
            const FeatureMap& pre = cached->pre_activations[l];
            for (std::size_t k = 0; k < g.data.size(); ++k)
                if (!(pre.data[k] > 0.0)) g.data[k] = 0.0;
        }
        g = conv::backward(model.layers[l], cached->inputs[l], g, out.d_weights.layers[l]);
    }
    out.d_input = from_planes(g);
    if (model.residual) out.d_input += upstream;
    return out;
}

}  // namespace mfjmodl
