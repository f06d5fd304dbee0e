#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rd {

/// Dense rank-3 feature tensor, row-major (channel, row, column).
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w)
        : channels(c), height(h), width(w) {
        if (c <= 0 || h <= 0 || w <= 0)
            throw std::invalid_argument("FeatureMap: dimensions must be positive, got " +
                                        std::to_string(c) + "x" + std::to_string(h) + "x" +
                                        std::to_string(w));
        data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
    }

    std::size_t size() const { return data.size(); }

    double& at(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * height + h) * width + w];
    }
    double at(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * height + h) * width + w];
    }

    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    void require_finite(const std::string& stage) const {
        for (double v : data)
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite value detected at stage: " + stage);
    }
};

/// Per-pixel atom coefficients, row-major (atom, row, column).
struct CoefficientMap {
    int atoms = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    CoefficientMap() = default;
    CoefficientMap(int n, int h, int w)
        : atoms(n), height(h), width(w) {
        if (n <= 0 || h <= 0 || w <= 0)
            throw std::invalid_argument("CoefficientMap: dimensions must be positive, got " +
                                        std::to_string(n) + "x" + std::to_string(h) + "x" +
                                        std::to_string(w));
        data.assign(static_cast<std::size_t>(n) * h * w, 0.0);
    }

    std::size_t size() const { return data.size(); }

    double& at(int n, int h, int w) {
        return data[(static_cast<std::size_t>(n) * height + h) * width + w];
    }
    double at(int n, int h, int w) const {
        return data[(static_cast<std::size_t>(n) * height + h) * width + w];
    }

    void require_finite(const std::string& stage) const {
        for (double v : data)
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite value detected at stage: " + stage);
    }
};

}  // namespace rd
