#pragma once

#include <vector>

#include "rd/tensor.hpp"

namespace rd {

/// Positional normalization affine parameters, one (gamma, beta) per atom channel.
struct PonoParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    double epsilon = 1e-5;

    PonoParams() = default;
    PonoParams(int atoms, double eps = 1e-5);
};

/// The knowledge store: N atoms, each a length-f vector. Row-major N x f.
struct Dictionary {
    int atoms = 0;
    int dim = 0;
    std::vector<double> data;
    bool trainable = true;

    Dictionary() = default;
    Dictionary(int n, int f);

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim + j]; }
};

/// Standardize the N atom values at every spatial position, then apply the
/// per-atom affine. Population variance (divide by N).
CoefficientMap pono(const CoefficientMap& c, const PonoParams& p);

/// Project every atom to unit L2 norm. Idempotent; order preserved.
Dictionary weight_normalize(const Dictionary& d);

}  // namespace rd
