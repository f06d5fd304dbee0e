#include "rd/rd_layer.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace rd {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* ptr, std::size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a(std::uint64_t h, const std::vector<double>& v) {
    return fnv1a(h, v.data(), v.size() * sizeof(double));
}

}  // namespace

void RDParams::validate() const {
    if (dictionary.dim != retriever.features)
        throw std::invalid_argument("RDParams: dictionary dim (" + std::to_string(dictionary.dim) +
                                    ") != retriever feature dim (" +
                                    std::to_string(retriever.features) + ")");
    if (dictionary.atoms != retriever.atoms)
        throw std::invalid_argument("RDParams: dictionary atoms (" +
                                    std::to_string(dictionary.atoms) + ") != retriever atoms (" +
                                    std::to_string(retriever.atoms) + ")");
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("RDParams: lambda must lie in [0, 1]");
    if (static_cast<int>(pono.gamma.size()) != retriever.atoms)
        throw std::invalid_argument("RDParams: pono affine length != atom count");
}

std::uint64_t RDParams::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    h = fnv1a(h, retriever.pointwise);
    h = fnv1a(h, retriever.depthwise);
    h = fnv1a(h, pono.gamma);
    h = fnv1a(h, pono.beta);
    h = fnv1a(h, &pono.epsilon, sizeof(double));
    h = fnv1a(h, dictionary.data);
    h = fnv1a(h, &lambda, sizeof(double));
    return h;
}

FeatureMap atom_mix(const CoefficientMap& cprime, const Dictionary& d) {
    if (cprime.atoms != d.atoms)
        throw std::invalid_argument("atom_mix: coefficient atoms (" + std::to_string(cprime.atoms) +
                                    ") != dictionary atoms (" + std::to_string(d.atoms) + ")");
    FeatureMap out(d.dim, cprime.height, cprime.width);
    for (int h = 0; h < cprime.height; ++h)
        for (int w = 0; w < cprime.width; ++w)
            for (int i = 0; i < d.atoms; ++i) {
                const double c = cprime.at(i, h, w);
                if (c == 0.0) continue;
                for (int j = 0; j < d.dim; ++j)
                    out.at(j, h, w) += c * d.at(i, j);
            }
    return out;
}

std::pair<FeatureMap, RDCache> rd_forward(const FeatureMap& x, const RDParams& p) {
    p.validate();
    if (x.channels != p.retriever.features)
        throw std::invalid_argument("rd_forward: input channels (" + std::to_string(x.channels) +
                                    ") != feature dim (" + std::to_string(p.retriever.features) +
                                    ")");
    RDCache cache;
    cache.input = x;
    cache.params_fingerprint = p.fingerprint();

    cache.coarse = coefficient_generator(x, p.retriever);
    cache.coarse.require_finite("coefficient_generator");
    cache.exchanged = global_information_exchanger(cache.coarse, p.retriever);
    cache.exchanged.require_finite("global_information_exchanger");

    // Standardization statistics kept separately so backward can reuse them.
    const int n_atoms = cache.exchanged.atoms;
    cache.standardized = CoefficientMap(n_atoms, x.height, x.width);
    cache.inv_std.assign(static_cast<std::size_t>(x.height) * x.width, 0.0);
    for (int h = 0; h < x.height; ++h)
        for (int w = 0; w < x.width; ++w) {
            double mu = 0.0;
            for (int n = 0; n < n_atoms; ++n) mu += cache.exchanged.at(n, h, w);
            mu /= n_atoms;
            double var = 0.0;
            for (int n = 0; n < n_atoms; ++n) {
                const double d = cache.exchanged.at(n, h, w) - mu;
                var += d * d;
            }
            var /= n_atoms;
            const double inv = 1.0 / std::sqrt(var + p.pono.epsilon);
            cache.inv_std[static_cast<std::size_t>(h) * x.width + w] = inv;
            for (int n = 0; n < n_atoms; ++n)
                cache.standardized.at(n, h, w) = (cache.exchanged.at(n, h, w) - mu) * inv;
        }
    cache.mixed_coeffs = CoefficientMap(n_atoms, x.height, x.width);
    for (int n = 0; n < n_atoms; ++n)
        for (int h = 0; h < x.height; ++h)
            for (int w = 0; w < x.width; ++w)
                cache.mixed_coeffs.at(n, h, w) =
                    cache.standardized.at(n, h, w) * p.pono.gamma[n] + p.pono.beta[n];
    cache.mixed_coeffs.require_finite("pono");

    cache.atom_norms.assign(p.dictionary.atoms, 0.0);
    for (int i = 0; i < p.dictionary.atoms; ++i) {
        double nrm = 0.0;
        for (int j = 0; j < p.dictionary.dim; ++j)
            nrm += p.dictionary.at(i, j) * p.dictionary.at(i, j);
        cache.atom_norms[i] = std::sqrt(nrm);
    }
    cache.normalized_dict = weight_normalize(p.dictionary);

    FeatureMap z(x.channels, x.height, x.width);
    if (p.lambda == 1.0) {
        // Exact passthrough: the residual-only limit must be bitwise identity.
        z.data = x.data;
    } else {
        FeatureMap mix = atom_mix(cache.mixed_coeffs, cache.normalized_dict);
        mix.require_finite("atom_mix");
        for (std::size_t i = 0; i < z.data.size(); ++i)
            z.data[i] = p.lambda * x.data[i] + (1.0 - p.lambda) * mix.data[i];
    }
    z.require_finite("output");
    return {std::move(z), std::move(cache)};
}

RDGradients rd_backward(const FeatureMap& grad_z, const RDCache& cache, const RDParams& p) {
    if (p.fingerprint() != cache.params_fingerprint)
        throw std::logic_error("rd_backward: cache is stale, params mutated since forward");
    if (!grad_z.same_shape(cache.input))
        throw std::invalid_argument("rd_backward: grad shape != input shape");

    const int N = p.retriever.atoms;
    const int f = p.retriever.features;
    const int k = p.retriever.kernel_size;
    const int H = cache.input.height;
    const int W = cache.input.width;
    const int pad = (k - 1) / 2;
    const double mix_w = 1.0 - p.lambda;

    RDGradients g;
    g.d_pointwise.assign(static_cast<std::size_t>(N) * f, 0.0);
    g.d_depthwise.assign(static_cast<std::size_t>(N) * k * k, 0.0);
    g.d_gamma.assign(N, 0.0);
    g.d_beta.assign(N, 0.0);
    g.d_dictionary.assign(static_cast<std::size_t>(N) * f, 0.0);
    g.d_input = FeatureMap(f, H, W);

    // Residual branch.
    for (std::size_t i = 0; i < grad_z.data.size(); ++i)
        g.d_input.data[i] = p.lambda * grad_z.data[i];

    // Mix branch: d_mix[j,h,w] = (1-lambda) * grad_z[j,h,w].
    CoefficientMap d_cprime(N, H, W);
    std::vector<double> d_ndict(static_cast<std::size_t>(N) * f, 0.0);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int i = 0; i < N; ++i) {
                double acc = 0.0;
                for (int j = 0; j < f; ++j)
                    acc += mix_w * grad_z.at(j, h, w) * cache.normalized_dict.at(i, j);
                d_cprime.at(i, h, w) = acc;
                const double c = cache.mixed_coeffs.at(i, h, w);
                for (int j = 0; j < f; ++j)
                    d_ndict[static_cast<std::size_t>(i) * f + j] +=
                        c * mix_w * grad_z.at(j, h, w);
            }

    // Through weight normalization: per atom, d_a = (I - uu^T) d_u / |a|.
    if (!p.freeze_dictionary) {
        for (int i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int j = 0; j < f; ++j)
                dot += cache.normalized_dict.at(i, j) * d_ndict[static_cast<std::size_t>(i) * f + j];
            const double inv = 1.0 / cache.atom_norms[i];
            for (int j = 0; j < f; ++j)
                g.d_dictionary[static_cast<std::size_t>(i) * f + j] =
                    (d_ndict[static_cast<std::size_t>(i) * f + j] -
                     dot * cache.normalized_dict.at(i, j)) * inv;
        }
    }

    // Through the affine and the per-position standardization.
    CoefficientMap d_exchanged(N, H, W);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double mean_dhat = 0.0, mean_dhat_hat = 0.0;
            for (int n = 0; n < N; ++n) {
                const double dc = d_cprime.at(n, h, w);
                g.d_gamma[n] += dc * cache.standardized.at(n, h, w);
                g.d_beta[n] += dc;
                const double dhat = dc * p.pono.gamma[n];
                mean_dhat += dhat;
                mean_dhat_hat += dhat * cache.standardized.at(n, h, w);
            }
            mean_dhat /= N;
            mean_dhat_hat /= N;
            const double inv = cache.inv_std[static_cast<std::size_t>(h) * W + w];
            for (int n = 0; n < N; ++n) {
                const double dhat = d_cprime.at(n, h, w) * p.pono.gamma[n];
                d_exchanged.at(n, h, w) =
                    inv * (dhat - mean_dhat - cache.standardized.at(n, h, w) * mean_dhat_hat);
            }
        }

    // Through the depthwise exchanger.
    CoefficientMap d_coarse(N, H, W);
    for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const double dout = d_exchanged.at(n, h, w);
                if (dout == 0.0) continue;
                for (int m = 0; m < k; ++m) {
                    const int hh = h + m - pad;
                    if (hh < 0 || hh >= H) continue;
                    for (int l = 0; l < k; ++l) {
                        const int ww = w + l - pad;
                        if (ww < 0 || ww >= W) continue;
                        g.d_depthwise[(static_cast<std::size_t>(n) * k + m) * k + l] +=
                            dout * cache.coarse.at(n, hh, ww);
                        d_coarse.at(n, hh, ww) += dout * p.retriever.dw(n, m, l);
                    }
                }
            }

    // Through the pointwise generator.
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int n = 0; n < N; ++n) {
                const double dy = d_coarse.at(n, h, w);
                if (dy == 0.0) continue;
                for (int i = 0; i < f; ++i) {
                    g.d_pointwise[static_cast<std::size_t>(n) * f + i] += dy * cache.input.at(i, h, w);
                    g.d_input.at(i, h, w) += dy * p.retriever.pw(n, i);
                }
            }

    return g;
}

namespace {

double eval_loss(const FeatureMap& x, const RDParams& p, const LossFn& loss_fn) {
    const double L = loss_fn(rd_forward(x, p).first);
    if (!std::isfinite(L))
        throw std::runtime_error("finite_difference_gradients: non-finite loss");
    return L;
}

double central_diff(double& slot, const FeatureMap& x, const RDParams& p, const LossFn& loss_fn,
                    double step) {
    const double saved = slot;
    slot = saved + step;
    const double lp = eval_loss(x, p, loss_fn);
    slot = saved - step;
    const double lm = eval_loss(x, p, loss_fn);
    slot = saved;
    return (lp - lm) / (2.0 * step);
}

}  // namespace

RDGradients finite_difference_gradients(const FeatureMap& x, const RDParams& p,
                                        const LossFn& loss_fn, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_difference_gradients: step must be > 0");
    FeatureMap xm = x;
    RDParams pm = p;
    const int N = p.retriever.atoms;
    const int f = p.retriever.features;
    const int k = p.retriever.kernel_size;

    RDGradients g;
    g.d_pointwise.resize(static_cast<std::size_t>(N) * f);
    g.d_depthwise.resize(static_cast<std::size_t>(N) * k * k);
    g.d_gamma.resize(N);
    g.d_beta.resize(N);
    g.d_dictionary.assign(static_cast<std::size_t>(N) * f, 0.0);
    g.d_input = FeatureMap(x.channels, x.height, x.width);

    for (std::size_t i = 0; i < pm.retriever.pointwise.size(); ++i)
        g.d_pointwise[i] = central_diff(pm.retriever.pointwise[i], xm, pm, loss_fn, step);
    for (std::size_t i = 0; i < pm.retriever.depthwise.size(); ++i)
        g.d_depthwise[i] = central_diff(pm.retriever.depthwise[i], xm, pm, loss_fn, step);
    for (std::size_t i = 0; i < pm.pono.gamma.size(); ++i)
        g.d_gamma[i] = central_diff(pm.pono.gamma[i], xm, pm, loss_fn, step);
    for (std::size_t i = 0; i < pm.pono.beta.size(); ++i)
        g.d_beta[i] = central_diff(pm.pono.beta[i], xm, pm, loss_fn, step);
    if (!p.freeze_dictionary)
        for (std::size_t i = 0; i < pm.dictionary.data.size(); ++i)
            g.d_dictionary[i] = central_diff(pm.dictionary.data[i], xm, pm, loss_fn, step);
    for (std::size_t i = 0; i < xm.data.size(); ++i)
        g.d_input.data[i] = central_diff(xm.data[i], xm, pm, loss_fn, step);
    return g;
}

}  // namespace rd
