#pragma once
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "exosim/rng.hpp"
#include "exosim/rod.hpp"

// Parametric exosuit surface families and scenario sampling. Family formulas
// follow the design-table conventions: lengths and radii are stored in
// meters; the cosine-series and Legendre amplitudes are dimensioned in
// centimeters and converted on evaluation.

namespace exosim {

enum class ShapeFamily { R01, Rs, Rcc, Rsc, RLP };

inline const char* family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::R01: return "R01";
        case ShapeFamily::Rs: return "Rs";
        case ShapeFamily::Rcc: return "Rcc";
        case ShapeFamily::Rsc: return "Rsc";
        case ShapeFamily::RLP: return "RLP";
    }
    return "?";
}

inline ShapeFamily family_from_name(const std::string& s) {
    if (s == "R01") return ShapeFamily::R01;
    if (s == "Rs") return ShapeFamily::Rs;
    if (s == "Rcc") return ShapeFamily::Rcc;
    if (s == "Rsc") return ShapeFamily::Rsc;
    if (s == "RLP") return ShapeFamily::RLP;
    throw std::invalid_argument("unknown shape family: " + s);
}

// Parameter layout per family:
//   R01: {R0, R1}                  (m)
//   Rs : {R0, A}                   (m, -)
//   Rcc: {B0..B6}                  (cm)
//   Rsc: {R0, C, D, phiC, phiD}    (m, -, -, rad, rad)
//   RLP: {m0..m6}                  (-)
struct ShapeSpec {
    ShapeFamily family = ShapeFamily::R01;
    int scenario = 0;
    double length = 0.10; // m
    std::vector<double> params{0.0058, 0.004};
    uint64_t seed = 0;
    std::string id = "default";
};

inline constexpr double kMinRadius = 0.004; // m, lower clamp from the design rules
inline constexpr double kMaxRadius = 0.020; // m, upper clamp keeping shapes inside the scene

inline double legendre(int n, double x) {
    double p0 = 1.0, p1 = x;
    if (n == 0) return p0;
    if (n == 1) return p1;
    for (int k = 1; k < n; ++k) {
        const double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

inline double radius_profile(const ShapeSpec& spec, double X_L) {
    if (X_L < -1e-12 || X_L > 1.0 + 1e-12) throw std::out_of_range("X_L outside [0,1]");
    double r = 0.0;
    switch (spec.family) {
        case ShapeFamily::R01:
            r = spec.params[0] + X_L * (spec.params[1] - spec.params[0]);
            break;
        case ShapeFamily::Rs:
            r = spec.params[0] * (1.0 + std::sin(spec.params[1] * M_PI * X_L) / 20.0);
            break;
        case ShapeFamily::Rcc: {
            double cm = 0.0;
            for (int n = 0; n <= 6; ++n) cm += spec.params[size_t(n)] * std::cos(n * M_PI * X_L);
            r = 0.01 * cm;
            break;
        }
        case ShapeFamily::Rsc: {
            const double R0 = spec.params[0];
            const double Rs = R0 / 20.0;
            r = R0 + Rs * (std::sin(spec.params[1] * M_PI * X_L + spec.params[3]) +
                           std::cos(spec.params[2] * M_PI * X_L + spec.params[4]));
            break;
        }
        case ShapeFamily::RLP: {
            double cm = 0.0;
            double scale = 2.0;
            for (int n = 0; n <= 6; ++n) {
                cm += scale * spec.params[size_t(n)] * legendre(n, X_L);
                scale /= 3.0;
            }
            r = 0.01 * cm;
            break;
        }
    }
    return std::min(std::max(r, kMinRadius), kMaxRadius);
}

inline RodModel make_rod(const ShapeSpec& spec) {
    RodModel m;
    m.length = spec.length;
    m.radius = [spec](double xl) { return radius_profile(spec, xl); };
    return m;
}

// --- scenario sampling -------------------------------------------------

namespace grids {

struct Grid {
    double lb, step;
    int count;
    double value(int i) const { return lb + step * i; }
};

inline constexpr Grid length{0.07, 1e-4, 401};    // 7..11 cm
inline constexpr Grid radius{0.004, 1e-4, 61};    // 0.4..1 cm
inline constexpr Grid freq_amp{-15.0, 0.1, 151};  // A and B_n rows
inline constexpr Grid freq_cd{1e-4, 0.01, 500};   // C, D
inline constexpr Grid phase{0.0, 0.01, 629};      // [0, 2pi)
inline constexpr Grid lp_amp{0.001, 5e-3, 200};   // m_n

} // namespace grids

struct Scenario {
    ShapeFamily family;
    bool vary_shape;
    bool vary_length;
    const char* tag;
};

// Eleven scenarios: every family varies shape and shape+length; the linear
// family also gets a length-only scenario since its default shape equals the
// baseline design.
inline const std::vector<Scenario>& scenario_table() {
    static const std::vector<Scenario> t = {
        {ShapeFamily::R01, true, false, "R01_shape"},
        {ShapeFamily::R01, false, true, "R01_length"},
        {ShapeFamily::R01, true, true, "R01_both"},
        {ShapeFamily::Rs, true, false, "Rs_shape"},
        {ShapeFamily::Rs, true, true, "Rs_both"},
        {ShapeFamily::Rcc, true, false, "Rcc_shape"},
        {ShapeFamily::Rcc, true, true, "Rcc_both"},
        {ShapeFamily::Rsc, true, false, "Rsc_shape"},
        {ShapeFamily::Rsc, true, true, "Rsc_both"},
        {ShapeFamily::RLP, true, false, "RLP_shape"},
        {ShapeFamily::RLP, true, true, "RLP_both"},
    };
    return t;
}

namespace detail {

inline std::vector<const grids::Grid*> shape_grids(ShapeFamily f) {
    using namespace grids;
    switch (f) {
        case ShapeFamily::R01: return {&radius, &radius};
        case ShapeFamily::Rs: return {&radius, &freq_amp};
        case ShapeFamily::Rcc:
            return {&freq_amp, &freq_amp, &freq_amp, &freq_amp, &freq_amp, &freq_amp, &freq_amp};
        case ShapeFamily::Rsc: return {&radius, &freq_cd, &freq_cd, &phase, &phase};
        case ShapeFamily::RLP:
            return {&lp_amp, &lp_amp, &lp_amp, &lp_amp, &lp_amp, &lp_amp, &lp_amp};
    }
    return {};
}

inline std::vector<double> default_shape_params(ShapeFamily f) {
    if (f == ShapeFamily::R01) return {0.0058, 0.004}; // baseline design
    throw std::logic_error("length-only scenario only defined for R01");
}

} // namespace detail

// Uniform draws on the parameter grids, duplicates rejected per scenario.
inline std::vector<ShapeSpec> sample_scenarios(Rng& rng, int instances_per_scenario) {
    if (instances_per_scenario < 1) throw std::invalid_argument("instance count must be >= 1");
    std::vector<ShapeSpec> specs;
    const auto& table = scenario_table();
    for (size_t sc = 0; sc < table.size(); ++sc) {
        const Scenario& scen = table[sc];
        const auto sgrids = detail::shape_grids(scen.family);
        std::set<std::vector<int>> seen;
        const long max_attempts = 10000L * instances_per_scenario;
        long attempts = 0;
        int made = 0;
        while (made < instances_per_scenario) {
            if (++attempts > max_attempts)
                throw std::runtime_error("insufficient unique combinations for scenario " +
                                         std::string(scen.tag));
            std::vector<int> key;
            ShapeSpec spec;
            spec.family = scen.family;
            spec.scenario = int(sc);
            if (scen.vary_shape) {
                spec.params.clear();
                for (const auto* g : sgrids) {
                    const int i = int(rng.uniform_int(uint64_t(g->count)));
                    key.push_back(i);
                    spec.params.push_back(g->value(i));
                }
            } else {
                spec.params = detail::default_shape_params(scen.family);
            }
            if (scen.vary_length) {
                const int i = int(rng.uniform_int(uint64_t(grids::length.count)));
                key.push_back(i);
                spec.length = grids::length.value(i);
            } else {
                spec.length = 0.10;
            }
            if (!seen.insert(key).second) continue;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s_i%03d", scen.tag, made);
            spec.id = buf;
            spec.seed = rng.fork(uint64_t(sc) * 1000 + uint64_t(made)).next_u64();
            specs.push_back(std::move(spec));
            ++made;
        }
    }
    return specs;
}

} // namespace exosim
