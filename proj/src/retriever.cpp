#include "rd/retriever.hpp"

#include <stdexcept>
#include <string>

namespace rd {

RetrieverWeights::RetrieverWeights(int n, int f, int k)
    : atoms(n), features(f), kernel_size(k) {
    if (n <= 0 || f <= 0 || k <= 0)
        throw std::invalid_argument("RetrieverWeights: dimensions must be positive");
    if (k % 2 == 0)
        throw std::invalid_argument("RetrieverWeights: kernel_size must be odd, got " +
                                    std::to_string(k));
    pointwise.assign(static_cast<std::size_t>(n) * f, 0.0);
    depthwise.assign(static_cast<std::size_t>(n) * k * k, 0.0);
}

CoefficientMap coefficient_generator(const FeatureMap& x, const RetrieverWeights& w) {
    if (x.channels != w.features)
        throw std::invalid_argument("coefficient_generator: input channels (" +
                                    std::to_string(x.channels) + ") != pointwise columns (" +
                                    std::to_string(w.features) + ")");
    CoefficientMap out(w.atoms, x.height, x.width);
    for (int n = 0; n < w.atoms; ++n)
        for (int h = 0; h < x.height; ++h)
            for (int c = 0; c < x.width; ++c) {
                double acc = 0.0;
                for (int i = 0; i < w.features; ++i)
                    acc += w.pw(n, i) * x.at(i, h, c);
                out.at(n, h, c) = acc;
            }
    return out;
}

CoefficientMap global_information_exchanger(const CoefficientMap& y, const RetrieverWeights& w) {
    if (w.kernel_size % 2 == 0)
        throw std::invalid_argument("global_information_exchanger: kernel_size must be odd");
    if (y.atoms != w.atoms)
        throw std::invalid_argument("global_information_exchanger: input atoms (" +
                                    std::to_string(y.atoms) + ") != depthwise channels (" +
                                    std::to_string(w.atoms) + ")");
    const int k = w.kernel_size;
    const int pad = (k - 1) / 2;
    CoefficientMap out(y.atoms, y.height, y.width);
    for (int n = 0; n < y.atoms; ++n)
        for (int h = 0; h < y.height; ++h)
            for (int c = 0; c < y.width; ++c) {
                double acc = 0.0;
                for (int m = 0; m < k; ++m) {
                    const int hh = h + m - pad;
                    if (hh < 0 || hh >= y.height) continue;
                    for (int l = 0; l < k; ++l) {
                        const int cc = c + l - pad;
                        if (cc < 0 || cc >= y.width) continue;
                        acc += w.dw(n, m, l) * y.at(n, hh, cc);
                    }
                }
                out.at(n, h, c) = acc;
            }
    return out;
}

CoefficientMap retriever_core(const FeatureMap& x, const RetrieverWeights& w) {
    return global_information_exchanger(coefficient_generator(x, w), w);
}

FusedKernel fuse_weights(const RetrieverWeights& w) {
    FusedKernel out;
    out.atoms = w.atoms;
    out.features = w.features;
    out.kernel_size = w.kernel_size;
    out.data.resize(static_cast<std::size_t>(w.atoms) * w.features * w.kernel_size * w.kernel_size);
    for (int c = 0; c < w.atoms; ++c)
        for (int i = 0; i < w.features; ++i)
            for (int m = 0; m < w.kernel_size; ++m)
                for (int n = 0; n < w.kernel_size; ++n)
                    out.at(c, i, m, n) = w.pw(c, i) * w.dw(c, m, n);
    return out;
}

CoefficientMap fused_retriever(const FeatureMap& x, const FusedKernel& kernel) {
    if (x.channels != kernel.features)
        throw std::invalid_argument("fused_retriever: input channels (" +
                                    std::to_string(x.channels) + ") != kernel features (" +
                                    std::to_string(kernel.features) + ")");
    const int k = kernel.kernel_size;
    const int pad = (k - 1) / 2;
    CoefficientMap out(kernel.atoms, x.height, x.width);
    for (int c = 0; c < kernel.atoms; ++c)
        for (int h = 0; h < x.height; ++h)
            for (int col = 0; col < x.width; ++col) {
                double acc = 0.0;
                for (int i = 0; i < kernel.features; ++i)
                    for (int m = 0; m < k; ++m) {
                        const int hh = h + m - pad;
                        if (hh < 0 || hh >= x.height) continue;
                        for (int n = 0; n < k; ++n) {
                            const int cc = col + n - pad;
                            if (cc < 0 || cc >= x.width) continue;
                            acc += kernel.at(c, i, m, n) * x.at(i, hh, cc);
                        }
                    }
                out.at(c, h, col) = acc;
            }
    return out;
}

long long param_count(ParamMode mode, int f, int n, int k) {
    if (f <= 0 || n <= 0 || k <= 0)
        throw std::invalid_argument("param_count: dimensions must be positive");
    const long long lf = f, ln = n, lk = k;
    if (mode == ParamMode::Split) return lf * ln + ln * lk * lk;
    return ln * lf * lk * lk;
}

}  // namespace rd
