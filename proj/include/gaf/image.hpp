#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gaf/array.hpp"

namespace gaf {

struct ScatterStyle {
    std::size_t width = 512;
    std::size_t height = 512;
    /// Square viewport [-extent, extent]^2 in data coordinates.
    double extent = 3.0;
    int dot_radius = 1;
};

/// Binary PPM (P6) scatter of the first two coordinates; point r gets the colour of group[r].
std::vector<std::uint8_t> scatter_ppm(const Array<float>& points, const std::vector<std::size_t>& group,
                                      const ScatterStyle& style = {});

}  // namespace gaf
