#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rd/normalization.hpp"
#include "rd/retriever.hpp"
#include "rd/tensor.hpp"

namespace rd {

/// Full trainable state of one RD layer. lambda is a fixed hyperparameter.
struct RDParams {
    RetrieverWeights retriever;
    PonoParams pono;
    Dictionary dictionary;
    double lambda = 0.8;
    bool freeze_dictionary = false;

    void validate() const;
    /// Fingerprint over every parameter byte, used for stale-cache detection
    /// and freeze-contract checks.
    std::uint64_t fingerprint() const;
};

/// Intermediates retained by rd_forward for the manual backward pass.
struct RDCache {
    FeatureMap input;
    CoefficientMap coarse;        // G(x)
    CoefficientMap exchanged;     // E(G(x))
    CoefficientMap standardized;  // (c - mu) / sqrt(var + eps), pre-affine
    std::vector<double> inv_std;  // per spatial position, row-major (h, w)
    CoefficientMap mixed_coeffs;  // c' after the affine
    Dictionary normalized_dict;   // WN(D)
    std::vector<double> atom_norms;
    std::uint64_t params_fingerprint = 0;
};

struct RDGradients {
    std::vector<double> d_pointwise;   // N x f
    std::vector<double> d_depthwise;   // N x k x k
    std::vector<double> d_gamma;       // N
    std::vector<double> d_beta;        // N
    std::vector<double> d_dictionary;  // N x f, zero when frozen
    FeatureMap d_input;
};

/// Weighted summation of (already normalized) atoms; a 1x1 bias-free conv
/// with the atoms as filters.
FeatureMap atom_mix(const CoefficientMap& cprime, const Dictionary& d);

/// z = lambda*x + (1-lambda) * atom_mix(pono(E(G(x))), WN(D)).
/// lambda == 1 is an exact passthrough.
std::pair<FeatureMap, RDCache> rd_forward(const FeatureMap& x, const RDParams& p);

RDGradients rd_backward(const FeatureMap& grad_z, const RDCache& cache, const RDParams& p);

using LossFn = std::function<double(const FeatureMap&)>;

/// Central finite differences of loss_fn(rd_forward(x, p)) w.r.t. every
/// scalar parameter and input element. Verification oracle for rd_backward.
RDGradients finite_difference_gradients(const FeatureMap& x, const RDParams& p,
                                        const LossFn& loss_fn, double step);

}  // namespace rd
