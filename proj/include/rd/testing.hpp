#pragma once

#include <cstdint>
#include <random>

#include "rd/rd_layer.hpp"

namespace rd::testing {

/// Seeded random instances shared by the check suites and the test oracles.

inline FeatureMap random_feature_map(int f, int h, int w, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    FeatureMap x(f, h, w);
    for (double& v : x.data) v = gauss(rng);
    return x;
}

inline CoefficientMap random_coefficient_map(int n, int h, int w, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    CoefficientMap y(n, h, w);
    for (double& v : y.data) v = gauss(rng);
    return y;
}

inline RetrieverWeights random_weights(int n, int f, int k, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    RetrieverWeights w(n, f, k);
    for (double& v : w.pointwise) v = gauss(rng);
    for (double& v : w.depthwise) v = gauss(rng);
    return w;
}

inline RDParams random_params(int n, int f, int k, std::mt19937_64& rng, double lambda = 0.8) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    RDParams p;
    p.retriever = random_weights(n, f, k, rng);
    p.pono = PonoParams(n);
    for (double& v : p.pono.gamma) v = unit(rng);
    for (double& v : p.pono.beta) v = 0.2 * gauss(rng);
    p.dictionary = Dictionary(n, f);
    for (double& v : p.dictionary.data) v = gauss(rng);
    p.lambda = lambda;
    return p;
}

}  // namespace rd::testing
