#pragma once

// Azimuth sampling patterns: continuous pulse times inside a half-open
// aperture, with a minimum spacing between consecutive pulses.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "types.hpp"

namespace mfjmodl {

struct Aperture {
    double start = 0.0;
    double end = 1.0;
    double length() const { return end - start; }
};

struct SamplingPattern {
    std::vector<double> positions;
    Aperture aperture;
    double min_spacing = 0.0;

    std::size_t budget() const { return positions.size(); }

    std::vector<double> gaps() const {
        std::vector<double> g;
        for (std::size_t i = 1; i < positions.size(); ++i) g.push_back(positions[i] - positions[i - 1]);
        return g;
    }

    // Spacing is checked with a tolerance of a few ulps of the aperture so
    // that projected patterns (exact up to rounding) count as feasible.
    bool satisfies_invariants() const {
        if (positions.empty()) return false;
        const double slack = 1e-12 * std::max(1.0, std::abs(aperture.end) + std::abs(aperture.start));
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (!std::isfinite(positions[i])) return false;
            if (positions[i] < aperture.start || positions[i] >= aperture.end) return false;
            if (i > 0) {
                const double gap = positions[i] - positions[i - 1];
                if (gap <= 0.0 || gap < min_spacing - slack) return false;
            }
        }
        return true;
    }

    void validate() const {
        if (!satisfies_invariants()) throw InvalidArgument("SamplingPattern: invariants violated");
    }
};

namespace detail {

inline void check_aperture(const Aperture& a) {
    require(std::isfinite(a.start) && std::isfinite(a.end) && a.end > a.start, "aperture must be a non-empty interval");
}

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementation.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

inline SamplingPattern uniform_pattern(const Aperture& aperture, std::size_t budget) {
    detail::check_aperture(aperture);
    require(budget >= 2, "uniform_pattern: budget must be at least 2");
    const double stride = aperture.length() / static_cast<double>(budget);
    SamplingPattern p;
    p.aperture = aperture;
    p.min_spacing = 0.0;
    p.positions.resize(budget);
    for (std::size_t i = 0; i < budget; ++i) p.positions[i] = aperture.start + static_cast<double>(i) * stride;
    return p;
}

/// Dart throwing: uniform candidates are rejected when closer than min_spacing
/// to an accepted sample. Gives up after a bounded number of attempts.
inline SamplingPattern poisson_disk_pattern(const Aperture& aperture, std::size_t budget, double min_spacing,
                                            std::uint64_t seed, std::size_t max_attempts_per_sample = 10000) {
    detail::check_aperture(aperture);
    require(budget >= 1, "poisson_disk_pattern: budget must be positive");
    require(min_spacing >= 0.0, "poisson_disk_pattern: negative min spacing");
    if (static_cast<double>(budget) * min_spacing >= aperture.length())
        throw Infeasible("poisson_disk_pattern: budget * min_spacing exceeds aperture");
    std::mt19937_64 rng(seed);
    std::vector<double> accepted;
    accepted.reserve(budget);
    const std::size_t limit = max_attempts_per_sample * budget;
    std::size_t attempts = 0;
    while (accepted.size() < budget) {
        if (++attempts > limit) throw Infeasible("poisson_disk_pattern: attempt limit reached");
        const double t = aperture.start + detail::unit_draw(rng) * aperture.length();
        if (t >= aperture.end) continue;
        auto it = std::lower_bound(accepted.begin(), accepted.end(), t);
        if (it != accepted.end() && *it - t < min_spacing) continue;
        if (it != accepted.begin() && t - *(it - 1) < min_spacing) continue;
        if ((it != accepted.end() && *it == t) || (it != accepted.begin() && *(it - 1) == t)) continue;
        accepted.insert(it, t);
    }
    SamplingPattern p;
    p.aperture = aperture;
    p.min_spacing = min_spacing;
    p.positions = std::move(accepted);
    return p;
}

/// PRIs cycle through a linear ramp of `ramp_steps` values from pri_min to
/// pri_max; positions are the cumulative sums starting at the aperture start.
inline SamplingPattern staggered_pattern(const Aperture& aperture, std::size_t budget, double pri_min,
                                         double pri_max, std::size_t ramp_steps) {
    detail::check_aperture(aperture);
    require(budget >= 2, "staggered_pattern: budget must be at least 2");
    require(pri_min > 0.0 && pri_max >= pri_min, "staggered_pattern: need 0 < pri_min <= pri_max");
    require(ramp_steps >= 1, "staggered_pattern: ramp needs at least one step");
    const std::size_t steps = pri_max == pri_min ? 1 : std::max<std::size_t>(ramp_steps, 2);
    std::vector<double> ramp(steps);
    for (std::size_t k = 0; k < steps; ++k)
        ramp[k] = steps == 1 ? pri_min
                             : pri_min + (pri_max - pri_min) * static_cast<double>(k) / static_cast<double>(steps - 1);
    SamplingPattern p;
    p.aperture = aperture;
    p.min_spacing = pri_min;
    p.positions.resize(budget);
    double t = aperture.start;
    for (std::size_t i = 0; i < budget; ++i) {
        if (t >= aperture.end) throw Infeasible("staggered_pattern: ramp does not fit the budget in the aperture");
        p.positions[i] = t;
        t += ramp[i % steps];
    }
    return p;
}

/// Euclidean projection of (sorted) positions onto {gaps >= s, inside the
/// aperture}. Substituting z_i = y_i - i*s turns the gap constraint into
/// monotonicity, solved by pool-adjacent-violators, then clamped to the box.
inline SamplingPattern project_constraints(std::vector<double> raw, const Aperture& aperture, double min_spacing) {
    detail::check_aperture(aperture);
    require(!raw.empty(), "project_constraints: empty position list");
    require(min_spacing >= 0.0, "project_constraints: negative min spacing");
    for (double v : raw) require(std::isfinite(v), "project_constraints: non-finite position");
    const std::size_t m = raw.size();
    if (static_cast<double>(m) * min_spacing > aperture.length())
        throw Infeasible("project_constraints: budget * min_spacing exceeds aperture");

    std::sort(raw.begin(), raw.end());
    SamplingPattern out;
    out.aperture = aperture;
    out.min_spacing = min_spacing;
    out.positions = raw;
    if (out.satisfies_invariants()) return out;

    const double lo = aperture.start;
    // Largest representable time strictly inside the half-open aperture,
    // minus room for the distinct-positions requirement when s == 0.
    const double gap = min_spacing > 0.0 ? min_spacing : aperture.length() * 1e-12;
    const double hi = std::nextafter(aperture.end, aperture.start) - gap * 1e-6;

    // Pool-adjacent-violators on w_i = x_i - i*gap.
    std::vector<double> block_value;
    std::vector<std::size_t> block_size;
    for (std::size_t i = 0; i < m; ++i) {
        block_value.push_back(raw[i] - static_cast<double>(i) * gap);
        block_size.push_back(1);
        while (block_value.size() > 1 && block_value[block_value.size() - 2] > block_value.back()) {
            const std::size_t n2 = block_size.back();
            const double v2 = block_value.back();
            block_value.pop_back();
            block_size.pop_back();
            const std::size_t n1 = block_size.back();
            block_value.back() = (block_value.back() * static_cast<double>(n1) + v2 * static_cast<double>(n2)) /
                                 static_cast<double>(n1 + n2);
            block_size.back() = n1 + n2;
        }
    }
    const double z_hi = hi - static_cast<double>(m - 1) * gap;
    std::size_t i = 0;
    for (std::size_t b = 0; b < block_value.size(); ++b) {
        const double z = std::clamp(block_value[b], lo, std::max(lo, z_hi));
        for (std::size_t k = 0; k < block_size[b]; ++k, ++i) out.positions[i] = z + static_cast<double>(i) * gap;
    }
    if (!out.satisfies_invariants()) throw Infeasible("project_constraints: could not reach a feasible pattern");
    return out;
}

inline SamplingPattern project_constraints(const SamplingPattern& p) {
    return project_constraints(p.positions, p.aperture, p.min_spacing);
}

/// Uniform pattern plus seeded jitter of up to `jitter_fraction` of the stride,
/// projected back onto the constraints.
inline SamplingPattern jittered_uniform_pattern(const Aperture& aperture, std::size_t budget, double min_spacing,
                                                double jitter_fraction, std::uint64_t seed) {
    SamplingPattern base = uniform_pattern(aperture, budget);
    const double stride = aperture.length() / static_cast<double>(budget);
    std::mt19937_64 rng(seed);
    for (double& t : base.positions) t += (2.0 * detail::unit_draw(rng) - 1.0) * jitter_fraction * stride;
    return project_constraints(base.positions, aperture, min_spacing);
}

struct IntervalHistogram {
    std::vector<double> bin_edges;  // bins + 1 edges
    std::vector<std::size_t> counts;
};

inline IntervalHistogram interval_histogram(const SamplingPattern& p, std::size_t bins) {
    require(p.positions.size() >= 2, "interval_histogram: need at least two samples");
    require(bins >= 1, "interval_histogram: need at least one bin");
    const std::vector<double> g = p.gaps();
    double lo = *std::min_element(g.begin(), g.end());
    double hi = *std::max_element(g.begin(), g.end());
    // Equal gaps up to rounding collapse into a single occupied bin.
    if (hi - lo <= 1e-9 * std::abs(hi)) {
        const double w = std::max(2e-9 * std::abs(hi), std::numeric_limits<double>::min());
        hi = lo + w * static_cast<double>(bins);
    }
    IntervalHistogram h;
    h.counts.assign(bins, 0);
    h.bin_edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t k = 0; k <= bins; ++k) h.bin_edges[k] = lo + static_cast<double>(k) * width;
    h.bin_edges[bins] = hi;
    for (double v : g) {
        auto k = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
        k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(k)];
    }
    return h;
}

// CSV: one position per line, seconds, 15 significant digits.
inline std::string pattern_to_csv(const SamplingPattern& p) {
    std::ostringstream os;
    os << std::setprecision(15);
    for (double t : p.positions) os << t << '\n';
    return os.str();
}

inline std::vector<double> positions_from_csv(std::istream& in) {
    std::vector<double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw InvalidArgument("pattern CSV line " + std::to_string(line_no) + ": not a number");
        }
        if (used != line.size())
            throw InvalidArgument("pattern CSV line " + std::to_string(line_no) + ": trailing characters");
        out.push_back(v);
    }
    return out;
}

inline void write_pattern_csv(const SamplingPattern& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << pattern_to_csv(p);
}

inline std::vector<double> read_pattern_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    return positions_from_csv(f);
}

}  // namespace mfjmodl
