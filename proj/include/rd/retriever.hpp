#pragma once

#include <vector>

#include "rd/tensor.hpp"

namespace rd {

/// Weights of the split retriever core: a 1x1 pointwise projection (f -> N)
/// followed by a per-channel k x k depthwise convolution. No bias anywhere.
struct RetrieverWeights {
    int atoms = 0;        // N
    int features = 0;     // f
    int kernel_size = 0;  // k, odd
    std::vector<double> pointwise;  // N x f
    std::vector<double> depthwise;  // N x k x k

    RetrieverWeights() = default;
    RetrieverWeights(int n, int f, int k);

    double& pw(int n, int i) { return pointwise[static_cast<std::size_t>(n) * features + i]; }
    double pw(int n, int i) const { return pointwise[static_cast<std::size_t>(n) * features + i]; }
    double& dw(int n, int m, int l) {
        return depthwise[(static_cast<std::size_t>(n) * kernel_size + m) * kernel_size + l];
    }
    double dw(int n, int m, int l) const {
        return depthwise[(static_cast<std::size_t>(n) * kernel_size + m) * kernel_size + l];
    }
};

/// Single dense convolution algebraically equal to the split core,
/// rank-1 per output channel: data[c,i,m,n] = pointwise[c,i] * depthwise[c,m,n].
struct FusedKernel {
    int atoms = 0;
    int features = 0;
    int kernel_size = 0;
    std::vector<double> data;  // N x f x k x k

    double at(int c, int i, int m, int n) const {
        return data[((static_cast<std::size_t>(c) * features + i) * kernel_size + m) * kernel_size + n];
    }
    double& at(int c, int i, int m, int n) {
        return data[((static_cast<std::size_t>(c) * features + i) * kernel_size + m) * kernel_size + n];
    }
};

/// 1x1 projection producing coarse per-atom coefficients.
CoefficientMap coefficient_generator(const FeatureMap& x, const RetrieverWeights& w);

/// Depthwise k x k convolution, zero padding (k-1)/2, channels never mix.
CoefficientMap global_information_exchanger(const CoefficientMap& y, const RetrieverWeights& w);

/// Exchanger applied to generator output; no nonlinearity between stages.
CoefficientMap retriever_core(const FeatureMap& x, const RetrieverWeights& w);

FusedKernel fuse_weights(const RetrieverWeights& w);

/// Full dense convolution with the fused kernel, zero padding (k-1)/2.
CoefficientMap fused_retriever(const FeatureMap& x, const FusedKernel& kernel);

enum class ParamMode { Split, Fused };

/// split -> f*N + N*k^2, fused -> N*f*k^2.
long long param_count(ParamMode mode, int f, int n, int k);

}  // namespace rd
