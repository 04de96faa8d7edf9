#pragma once

#include "lcinf/regression.hpp"
#include "lcinf/rng.hpp"

#include <string>

namespace lcinf::fixtures {

// units x periods panel with p controls; unit i sits at a random point.
inline PanelDataset random_panel(int units, int periods, int p, std::uint64_t seed, bool iv = false, double theta = 0.0) {
    Stream rng(seed, {1});
    PanelDataset d;
    const Index n = static_cast<Index>(units) * periods;
    d.y.resize(n);
    d.x.resize(n);
    d.w.resize(n, p);
    if (iv) d.z = Vector(n);
    for (int i = 0; i < units; ++i) {
        const double lat = 30.0 + 7.0 * rng.uniform();
        const double lon = 61.0 + 10.0 * rng.uniform();
        for (int t = 1; t <= periods; ++t) {
            const Index r = static_cast<Index>(i) * periods + (t - 1);
            d.unit_id.push_back(std::to_string(i + 1));
            d.loc.push_back({lat, lon, t});
            for (int j = 0; j < p; ++j) d.w(r, j) = rng.normal();
            const double u = rng.normal();
            if (iv) {
                (*d.z)(r) = rng.normal();
                const double v = 0.8 * u + 0.6 * rng.normal();
                d.x(r) = 2.0 * (*d.z)(r) + v;
            } else {
                d.x(r) = rng.normal();
            }
            d.y(r) = theta * d.x(r) + (p > 0 ? 0.5 * d.w(r, 0) : 0.0) + u;
        }
    }
    for (int j = 0; j < p; ++j) d.control_names.push_back("w" + std::to_string(j + 1));
    return d;
}

}  // namespace lcinf::fixtures
