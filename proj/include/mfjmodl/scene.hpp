#pragma once

// Synthetic maritime scenes: elongated ship-like blobs plus isolated point
// scatterers on an empty sea, with uniformly random phase per pixel.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "types.hpp"

namespace mfjmodl {

enum class SceneTier { Sparse, Medium, Dense };

inline SceneTier parse_scene_tier(const std::string& s) {
    if (s == "sparse") return SceneTier::Sparse;
    if (s == "medium") return SceneTier::Medium;
    if (s == "dense") return SceneTier::Dense;
    throw InvalidArgument("unknown scene tier '" + s + "' (expected sparse, medium or dense)");
}

inline const char* to_string(SceneTier t) {
    switch (t) {
        case SceneTier::Sparse: return "sparse";
        case SceneTier::Medium: return "medium";
        case SceneTier::Dense: return "dense";
    }
    return "?";
}

struct SceneRecipe {
    int ships = 1;
    int points = 3;
};

inline SceneRecipe recipe_for(SceneTier t) {
    switch (t) {
        case SceneTier::Sparse: return {1, 3};
        case SceneTier::Medium: return {2, 8};
        case SceneTier::Dense: return {4, 20};
    }
    return {};
}

/// Amplitudes lie in [0, 1]. Ship length scales with the smaller raster side
/// (about a fifth of it), width is a third of the length.
inline CMatrix synthetic_scene(Eigen::Index rows, Eigen::Index cols, SceneTier tier, std::uint64_t seed) {
    require(rows >= 4 && cols >= 4, "synthetic_scene: raster must be at least 4x4");
    const SceneRecipe recipe = recipe_for(tier);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RMatrix amp = RMatrix::Zero(rows, cols);
    const double side = static_cast<double>(std::min(rows, cols));
    for (int s = 0; s < recipe.ships; ++s) {
        const double cy = unit(rng) * static_cast<double>(rows);
        const double cx = unit(rng) * static_cast<double>(cols);
        const double half_len = std::max(1.0, side * (0.07 + 0.06 * unit(rng)));
        const double half_wid = std::max(0.6, half_len / 3.0);
        const double heading = unit(rng) * kPi;
        const double brightness = 0.5 + 0.3 * unit(rng);
        const double c = std::cos(heading), sn = std::sin(heading);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index k = 0; k < cols; ++k) {
                const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(k) - cx;
                const double u = (c * dx + sn * dy) / half_len, v = (-sn * dx + c * dy) / half_wid;
                if (u * u + v * v <= 1.0) amp(r, k) = std::max(amp(r, k), brightness * (0.8 + 0.2 * unit(rng)));
            }
    }
    for (int p = 0; p < recipe.points; ++p) {
        const auto r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(rows));
        const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(cols));
        amp(r, k) = 0.7 + 0.3 * unit(rng);
    }
    CMatrix scene(rows, cols);
    for (Eigen::Index i = 0; i < amp.size(); ++i) scene.data()[i] = std::polar(amp.data()[i], 2.0 * kPi * unit(rng));
    return scene;
}

}  // namespace mfjmodl
