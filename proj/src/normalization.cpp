#include "rd/normalization.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rd {

PonoParams::PonoParams(int atoms, double eps)
    : gamma(atoms, 1.0), beta(atoms, 0.0), epsilon(eps) {
    if (atoms <= 0) throw std::invalid_argument("PonoParams: atom count must be positive");
    if (eps <= 0.0) throw std::invalid_argument("PonoParams: epsilon must be > 0");
}

Dictionary::Dictionary(int n, int f) : atoms(n), dim(f) {
    if (n <= 0 || f <= 0)
        throw std::invalid_argument("Dictionary: dimensions must be positive");
    data.assign(static_cast<std::size_t>(n) * f, 0.0);
}

CoefficientMap pono(const CoefficientMap& c, const PonoParams& p) {
    if (static_cast<std::size_t>(c.atoms) != p.gamma.size() ||
        static_cast<std::size_t>(c.atoms) != p.beta.size())
        throw std::invalid_argument("pono: atom count (" + std::to_string(c.atoms) +
                                    ") != affine length (" + std::to_string(p.gamma.size()) + ")");
    if (p.epsilon <= 0.0)
        throw std::invalid_argument("pono: epsilon must be > 0");
    const int n_atoms = c.atoms;
    CoefficientMap out(n_atoms, c.height, c.width);
    for (int h = 0; h < c.height; ++h)
        for (int w = 0; w < c.width; ++w) {
            double mu = 0.0;
            for (int n = 0; n < n_atoms; ++n) mu += c.at(n, h, w);
            mu /= n_atoms;
            double var = 0.0;
            for (int n = 0; n < n_atoms; ++n) {
                const double d = c.at(n, h, w) - mu;
                var += d * d;
            }
            var /= n_atoms;
            const double inv = 1.0 / std::sqrt(var + p.epsilon);
            for (int n = 0; n < n_atoms; ++n)
                out.at(n, h, w) = (c.at(n, h, w) - mu) * inv * p.gamma[n] + p.beta[n];
        }
    return out;
}

Dictionary weight_normalize(const Dictionary& d) {
    Dictionary out = d;
    for (int i = 0; i < d.atoms; ++i) {
        double nrm = 0.0;
        for (int j = 0; j < d.dim; ++j) nrm += d.at(i, j) * d.at(i, j);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-12)
            throw std::runtime_error("weight_normalize: degenerate atom " + std::to_string(i) +
                                     " has near-zero norm");
        for (int j = 0; j < d.dim; ++j) out.at(i, j) = d.at(i, j) / nrm;
    }
    return out;
}

}  // namespace rd
