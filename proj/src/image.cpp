#include "gaf/image.hpp"

#include <array>
#include <cmath>
#include <string>

#include "gaf/errors.hpp"

namespace gaf {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 8> palette = {{
    {31, 119, 180},
    {255, 127, 14},
    {44, 160, 44},
    {214, 39, 40},
    {148, 103, 189},
    {140, 86, 75},
    {227, 119, 194},
    {127, 127, 127},
}};

}  // namespace

std::vector<std::uint8_t> scatter_ppm(const Array<float>& points, const std::vector<std::size_t>& group,
                                      const ScatterStyle& style) {
    if (points.rank() != 2 || points.cols() < 2) {
        throw ShapeError("scatter plots need points with at least two coordinates");
    }
    if (!group.empty() && group.size() != points.rows()) {
        throw ShapeError("scatter plot needs one group per point");
    }
    if (style.width == 0 || style.height == 0 || !(style.extent > 0.0)) {
        throw ValueError("invalid scatter style");
    }
    const std::string header = "P6\n" + std::to_string(style.width) + " " + std::to_string(style.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const std::size_t offset = out.size();
    out.resize(offset + style.width * style.height * 3, 255);

    const auto w = static_cast<long>(style.width);
    const auto h = static_cast<long>(style.height);
    for (std::size_t r = 0; r < points.rows(); ++r) {
        const double x = points.at(r, 0);
        const double y = points.at(r, 1);
        const long px = std::lround((x + style.extent) / (2.0 * style.extent) * static_cast<double>(w - 1));
        const long py = std::lround((style.extent - y) / (2.0 * style.extent) * static_cast<double>(h - 1));
        const auto& colour = palette[(group.empty() ? 0 : group[r]) % palette.size()];
        for (long dy = -style.dot_radius; dy <= style.dot_radius; ++dy) {
            for (long dx = -style.dot_radius; dx <= style.dot_radius; ++dx) {
                const long cx = px + dx;
                const long cy = py + dy;
                if (cx < 0 || cy < 0 || cx >= w || cy >= h) continue;
                const std::size_t idx = offset + 3 * static_cast<std::size_t>(cy * w + cx);
                out[idx] = colour[0];
                out[idx + 1] = colour[1];
                out[idx + 2] = colour[2];
            }
        }
    }
    return out;
}

}  // namespace gaf
