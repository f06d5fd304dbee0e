#include <doctest.h>

#include <random>

#include "rd/retriever.hpp"
#include "rd/testing.hpp"

using namespace rd;

namespace {

// Independent naive oracles: straight loops, no shared code with the library path.

CoefficientMap naive_pointwise(const FeatureMap& x, const RetrieverWeights& w) {
    CoefficientMap out(w.atoms, x.height, x.width);
    for (int n = 0; n < w.atoms; ++n)
        for (int i = 0; i < w.features; ++i)
            for (int h = 0; h < x.height; ++h)
                for (int c = 0; c < x.width; ++c)
                    out.at(n, h, c) += w.pw(n, i) * x.at(i, h, c);
    return out;
}

CoefficientMap naive_depthwise(const CoefficientMap& y, const RetrieverWeights& w) {
    const int pad = (w.kernel_size - 1) / 2;
    CoefficientMap out(y.atoms, y.height, y.width);
    for (int n = 0; n < y.atoms; ++n)
        for (int h = 0; h < y.height; ++h)
            for (int c = 0; c < y.width; ++c)
                for (int m = 0; m < w.kernel_size; ++m)
                    for (int l = 0; l < w.kernel_size; ++l) {
                        const int hh = h + m - pad, cc = c + l - pad;
                        if (hh < 0 || hh >= y.height || cc < 0 || cc >= y.width) continue;
                        out.at(n, h, c) += w.dw(n, m, l) * y.at(n, hh, cc);
                    }
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("coefficient generator: identity projection") {
    RetrieverWeights w(2, 2, 1);
    w.pw(0, 0) = 1.0;
    w.pw(1, 1) = 1.0;
    FeatureMap x(2, 1, 1);
    x.at(0, 0, 0) = 5.0;
    x.at(1, 0, 0) = -3.0;
    const CoefficientMap out = coefficient_generator(x, w);
    CHECK(out.at(0, 0, 0) == 5.0);
    CHECK(out.at(1, 0, 0) == -3.0);
}

TEST_CASE("coefficient generator: hand matrix-vector product") {
    RetrieverWeights w(2, 2, 1);
    w.pw(0, 0) = 1.0; w.pw(0, 1) = 2.0;
    w.pw(1, 0) = 3.0; w.pw(1, 1) = 4.0;
    FeatureMap x(2, 1, 1);
    x.at(0, 0, 0) = 1.0;
    x.at(1, 0, 0) = 1.0;
    const CoefficientMap out = coefficient_generator(x, w);
    CHECK(out.at(0, 0, 0) == doctest::Approx(3.0));
    CHECK(out.at(1, 0, 0) == doctest::Approx(7.0));
}

TEST_CASE("coefficient generator matches the naive loop oracle at paper scale") {
    std::mt19937_64 rng(7);
    const RetrieverWeights w = testing::random_weights(512, 512, 1, rng);
    const FeatureMap x = testing::random_feature_map(512, 80, 80, rng);
    const CoefficientMap got = coefficient_generator(x, w);
    const CoefficientMap want = naive_pointwise(x, w);
    CHECK(max_abs_diff(got.data, want.data) < 1e-6);
}

TEST_CASE("coefficient generator rejects channel mismatch") {
    RetrieverWeights w(2, 3, 1);
    FeatureMap x(4, 2, 2);
    CHECK_THROWS_WITH_AS(coefficient_generator(x, w),
                         doctest::Contains("input channels (4)"), std::invalid_argument);
}

TEST_CASE("exchanger: 1x1 all-ones kernel is identity") {
    std::mt19937_64 rng(11);
    RetrieverWeights w(3, 2, 1);
    for (double& v : w.depthwise) v = 1.0;
    const CoefficientMap y = testing::random_coefficient_map(3, 4, 5, rng);
    const CoefficientMap out = global_information_exchanger(y, w);
    CHECK(out.data == y.data);
}

TEST_CASE("exchanger: 3x3 box filter on a 3x3 map of ones") {
    RetrieverWeights w(1, 2, 3);
    for (double& v : w.depthwise) v = 1.0;
    CoefficientMap y(1, 3, 3);
    for (double& v : y.data) v = 1.0;
    const CoefficientMap out = global_information_exchanger(y, w);
    CHECK(out.at(0, 1, 1) == 9.0);
    CHECK(out.at(0, 0, 0) == 4.0);
    CHECK(out.at(0, 2, 2) == 4.0);
    CHECK(out.at(0, 0, 1) == 6.0);
    CHECK(out.at(0, 1, 0) == 6.0);
}

TEST_CASE("exchanger matches the naive 5-loop convolution oracle") {
    std::mt19937_64 rng(13);
    const RetrieverWeights w = testing::random_weights(8, 2, 5, rng);
    const CoefficientMap y = testing::random_coefficient_map(8, 16, 16, rng);
    const CoefficientMap got = global_information_exchanger(y, w);
    const CoefficientMap want = naive_depthwise(y, w);
    CHECK(max_abs_diff(got.data, want.data) < 1e-6);
}

TEST_CASE("even kernel size is rejected at construction") {
    CHECK_THROWS_AS(RetrieverWeights(2, 2, 4), std::invalid_argument);
}

TEST_CASE("exchanger rejects atom-count mismatch") {
    RetrieverWeights w(3, 2, 3);
    CoefficientMap y(5, 2, 2);
    CHECK_THROWS_AS(global_information_exchanger(y, w), std::invalid_argument);
}

TEST_CASE("retriever core: composition of identities") {
    RetrieverWeights w(2, 2, 1);
    w.pw(0, 0) = w.pw(1, 1) = 1.0;
    for (double& v : w.depthwise) v = 1.0;
    std::mt19937_64 rng(17);
    const FeatureMap x = testing::random_feature_map(2, 3, 3, rng);
    const CoefficientMap out = retriever_core(x, w);
    CHECK(out.data == x.data);
}

TEST_CASE("retriever core: single-pixel hand computation") {
    RetrieverWeights w(1, 2, 1);
    w.pw(0, 0) = w.pw(0, 1) = 1.0;
    w.dw(0, 0, 0) = 2.0;
    FeatureMap x(2, 1, 1);
    x.at(0, 0, 0) = 3.0;
    x.at(1, 0, 0) = 4.0;
    CHECK(retriever_core(x, w).at(0, 0, 0) == doctest::Approx(14.0));
}

TEST_CASE("retriever core agrees with the fused path") {
    std::mt19937_64 rng(19);
    const RetrieverWeights w = testing::random_weights(8, 16, 3, rng);
    const FeatureMap x = testing::random_feature_map(16, 10, 10, rng);
    const CoefficientMap split = retriever_core(x, w);
    const CoefficientMap fused = fused_retriever(x, fuse_weights(w));
    CHECK(max_abs_diff(split.data, fused.data) < 1e-6);
}

TEST_CASE("fuse_weights: scalar case and annihilation") {
    RetrieverWeights w(1, 1, 1);
    w.pw(0, 0) = 2.0;
    w.dw(0, 0, 0) = 3.0;
    CHECK(fuse_weights(w).at(0, 0, 0, 0) == 6.0);

    std::mt19937_64 rng(23);
    RetrieverWeights w2 = testing::random_weights(3, 4, 3, rng);
    for (int i = 0; i < 4; ++i) w2.pw(1, i) = 0.0;
    const FusedKernel fused = fuse_weights(w2);
    for (int i = 0; i < 4; ++i)
        for (int m = 0; m < 3; ++m)
            for (int n = 0; n < 3; ++n) CHECK(fused.at(1, i, m, n) == 0.0);
}

TEST_CASE("fused kernel is rank-1 per output channel: all 2x2 minors vanish") {
    std::mt19937_64 rng(29);
    const int N = 8, f = 16, k = 3;
    const FusedKernel fused = fuse_weights(testing::random_weights(N, f, k, rng));
    // Flatten each channel to an f x k^2 matrix and enumerate every minor.
    for (int c = 0; c < N; ++c)
        for (int i1 = 0; i1 < f; ++i1)
            for (int i2 = i1 + 1; i2 < f; ++i2)
                for (int s1 = 0; s1 < k * k; ++s1)
                    for (int s2 = s1 + 1; s2 < k * k; ++s2) {
                        const double a = fused.at(c, i1, s1 / k, s1 % k);
                        const double b = fused.at(c, i1, s2 / k, s2 % k);
                        const double cc = fused.at(c, i2, s1 / k, s1 % k);
                        const double d = fused.at(c, i2, s2 / k, s2 % k);
                        REQUIRE(std::abs(a * d - b * cc) < 1e-10);
                    }
}

TEST_CASE("fused retriever: 1x1x1 identity") {
    FusedKernel kernel;
    kernel.atoms = kernel.features = kernel.kernel_size = 1;
    kernel.data = {1.0};
    std::mt19937_64 rng(31);
    const FeatureMap x = testing::random_feature_map(1, 4, 4, rng);
    CHECK(fused_retriever(x, kernel).data == x.data);
}

TEST_CASE("parameter counts at the paper defaults") {
    CHECK(param_count(ParamMode::Split, 512, 512, 5) == 274944);
    CHECK(param_count(ParamMode::Fused, 512, 512, 5) == 6553600);
    CHECK(param_count(ParamMode::Fused, 512, 512, 5) -
              param_count(ParamMode::Split, 512, 512, 5) == 6278656);
    CHECK_THROWS_AS(param_count(ParamMode::Split, 0, 1, 1), std::invalid_argument);
}

TEST_CASE("split parameter count equals the stored real count") {
    RetrieverWeights w(7, 5, 3);
    CHECK(param_count(ParamMode::Split, 5, 7, 3) ==
          static_cast<long long>(w.pointwise.size() + w.depthwise.size()));
}

TEST_CASE("retriever core is linear") {
    std::mt19937_64 rng(37);
    const RetrieverWeights w = testing::random_weights(5, 6, 3, rng);
    const FeatureMap x1 = testing::random_feature_map(6, 7, 7, rng);
    const FeatureMap x2 = testing::random_feature_map(6, 7, 7, rng);
    const double a = 1.7, b = -0.3;
    FeatureMap combo(6, 7, 7);
    for (std::size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = a * x1.data[i] + b * x2.data[i];
    const CoefficientMap lhs = retriever_core(combo, w);
    const CoefficientMap r1 = retriever_core(x1, w);
    const CoefficientMap r2 = retriever_core(x2, w);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        REQUIRE(lhs.data[i] == doctest::Approx(a * r1.data[i] + b * r2.data[i]).epsilon(1e-9));
}

TEST_CASE("exchanger channels never mix") {
    std::mt19937_64 rng(41);
    const RetrieverWeights w = testing::random_weights(4, 2, 3, rng);
    CoefficientMap y = testing::random_coefficient_map(4, 6, 6, rng);
    const CoefficientMap base = global_information_exchanger(y, w);
    y.at(2, 3, 3) += 1.0;  // perturb channel 2 only
    const CoefficientMap perturbed = global_information_exchanger(y, w);
    for (int n = 0; n < 4; ++n)
        for (int h = 0; h < 6; ++h)
            for (int c = 0; c < 6; ++c) {
                if (n == 2) continue;
                REQUIRE(perturbed.at(n, h, c) == base.at(n, h, c));
            }
}
