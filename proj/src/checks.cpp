#include "rd/checks.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "rd/harness.hpp"
#include "rd/rd_layer.hpp"
#include "rd/testing.hpp"

namespace rd {

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    double m = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max({std::abs(got[i]), std::abs(want[i]), 1e-6});
        m = std::max(m, std::abs(got[i] - want[i]) / scale);
    }
    return m;
}

}  // namespace

bool check_fuse(std::ostream& os, int seeds) {
    const int kernels[] = {1, 3, 5};
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(1000 + s);
        std::uniform_int_distribution<int> fdim(2, 32), ndim(1, 16), sdim(2, 16);
        const int f = fdim(rng), n = ndim(rng), k = kernels[s % 3];
        const int h = sdim(rng), w = sdim(rng);
        const RetrieverWeights weights = testing::random_weights(n, f, k, rng);
        const FeatureMap x = testing::random_feature_map(f, h, w, rng);
        const CoefficientMap split = retriever_core(x, weights);
        const CoefficientMap fused = fused_retriever(x, fuse_weights(weights));
        const double diff = max_abs_diff(split.data, fused.data);
        if (diff >= 1e-6) {
            os << "FAIL seed=" << s << " f=" << f << " N=" << n << " k=" << k
               << " split/fused max diff=" << diff << " (tol 1e-6)\n";
            return false;
        }
    }
    os << "fuse: " << seeds << " instances, split/fused max diff < 1e-6\n";
    return true;
}

bool check_grads(std::ostream& os, int seeds) {
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(2000 + s);
        const int f = 6, n = 4, k = 3, h = 5, w = 5;
        RDParams p = testing::random_params(n, f, k, rng);
        const FeatureMap x = testing::random_feature_map(f, h, w, rng);

        // Weighted-sum loss so every output element carries distinct weight.
        std::vector<double> lw(x.size());
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (double& v : lw) v = u(rng);
        auto loss = [&lw](const FeatureMap& z) {
            double acc = 0.0;
            for (std::size_t i = 0; i < z.data.size(); ++i) acc += lw[i] * z.data[i];
            return acc;
        };

        auto [z, cache] = rd_forward(x, p);
        FeatureMap gz(f, h, w);
        gz.data = lw;
        const RDGradients analytic = rd_backward(gz, cache, p);
        const RDGradients fd = finite_difference_gradients(x, p, loss, 1e-5);

        struct Pair { const char* name; const std::vector<double>* a; const std::vector<double>* b; };
        const Pair pairs[] = {
            {"W^G", &analytic.d_pointwise, &fd.d_pointwise},
            {"W^E", &analytic.d_depthwise, &fd.d_depthwise},
            {"gamma", &analytic.d_gamma, &fd.d_gamma},
            {"beta", &analytic.d_beta, &fd.d_beta},
            {"D", &analytic.d_dictionary, &fd.d_dictionary},
            {"input", &analytic.d_input.data, &fd.d_input.data},
        };
        for (const auto& pr : pairs) {
            const double err = max_rel_err(*pr.a, *pr.b);
            if (err >= 1e-4) {
                os << "FAIL seed=" << s << " class=" << pr.name << " rel err=" << err
                   << " (tol 1e-4)\n";
                return false;
            }
        }
    }
    os << "grads: " << seeds << " instances, all parameter classes match finite differences\n";
    return true;
}

bool check_taylor(std::ostream& os) {
    std::mt19937_64 rng(3000);
    const RetrieverWeights w = testing::random_weights(4, 6, 3, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> dg(w.pointwise.size()), de(w.depthwise.size());
    for (double& v : dg) v = gauss(rng);
    for (double& v : de) v = gauss(rng);

    std::vector<double> etas;
    for (double eta = 1e-3; eta <= 1e-2 * (1 + 1e-12); eta *= 2.0) etas.push_back(eta);
    etas.push_back(1e-2);
    const auto table = taylor_update_check(w, dg, de, etas);
    const double base_ratio = table[0].second / (table[0].first * table[0].first);
    for (const auto& [eta, gap] : table) {
        const double ratio = gap / (eta * eta);
        if (std::abs(ratio - base_ratio) > 0.05 * base_ratio) {
            os << "FAIL eta=" << eta << " gap/eta^2=" << ratio << " vs " << base_ratio
               << " (5% tol)\n";
            return false;
        }
    }

    const std::vector<double> zero(dg.size(), 0.0);
    const auto one_sided = taylor_update_check(w, zero, de, {1e-2, 1e-3});
    for (const auto& [eta, gap] : one_sided)
        if (gap != 0.0) {
            os << "FAIL one-sided update should have zero gap, eta=" << eta << " gap=" << gap
               << "\n";
            return false;
        }
    os << "taylor: gap/eta^2 constant within 5%, one-sided update exact\n";
    return true;
}

bool check_pono(std::ostream& os, int seeds) {
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(4000 + s);
        const int n = 8, h = 6, w = 6;
        const CoefficientMap c = testing::random_coefficient_map(n, h, w, rng);
        PonoParams p(n);
        const CoefficientMap out = pono(c, p);
        for (int hh = 0; hh < h; ++hh)
            for (int ww = 0; ww < w; ++ww) {
                double mean = 0.0;
                for (int i = 0; i < n; ++i) mean += out.at(i, hh, ww);
                mean /= n;
                if (std::abs(mean) >= 1e-9) {
                    os << "FAIL pono mean=" << mean << " at seed " << s << "\n";
                    return false;
                }
                double raw_mu = 0.0;
                for (int i = 0; i < n; ++i) raw_mu += c.at(i, hh, ww);
                raw_mu /= n;
                double raw_var = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double d = c.at(i, hh, ww) - raw_mu;
                    raw_var += d * d;
                }
                raw_var /= n;
                double var = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double d = out.at(i, hh, ww) - mean;
                    var += d * d;
                }
                var /= n;
                const double expect = raw_var / (raw_var + p.epsilon);
                if (std::abs(var - expect) >= 1e-9) {
                    os << "FAIL pono variance ratio " << var << " vs " << expect << "\n";
                    return false;
                }
            }

        // Weight-normalization idempotence and scale invariance.
        Dictionary d(n, 5);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (double& v : d.data) v = gauss(rng);
        const Dictionary wn = weight_normalize(d);
        const Dictionary wn2 = weight_normalize(wn);
        Dictionary scaled = d;
        for (double& v : scaled.data) v *= 3.7;
        const Dictionary wns = weight_normalize(scaled);
        for (std::size_t i = 0; i < wn.data.size(); ++i) {
            if (std::abs(wn.data[i] - wn2.data[i]) >= 1e-9) {
                os << "FAIL WN idempotence at seed " << s << "\n";
                return false;
            }
            if (std::abs(wn.data[i] - wns.data[i]) >= 1e-9) {
                os << "FAIL WN scale invariance at seed " << s << "\n";
                return false;
            }
        }

        // Residual-only limit is bitwise identity.
        RDParams params = testing::random_params(n, 5, 3, rng, 1.0);
        const FeatureMap x = testing::random_feature_map(5, h, w, rng);
        const FeatureMap z = rd_forward(x, params).first;
        if (z.data != x.data) {
            os << "FAIL lambda=1 passthrough is not bitwise identity\n";
            return false;
        }
    }
    os << "pono: mean/variance, WN idempotence and scale invariance, lambda=1 identity\n";
    return true;
}

}  // namespace rd
