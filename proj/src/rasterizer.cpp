#include "segsplat/rasterizer.hpp"

namespace segsplat {

template std::vector<Splat2D<double>> project(const GaussianCloud<double>&, std::span<const std::uint32_t>,
                                              const Camera<double>&, const RenderOptions&);
template std::vector<Splat2D<float>> project(const GaussianCloud<float>&, std::span<const std::uint32_t>,
                                             const Camera<float>&, const RenderOptions&);
template RenderResult<double> render(std::span<const Splat2D<double>>, int, int, const RenderOptions&);
template RenderResult<float> render(std::span<const Splat2D<float>>, int, int, const RenderOptions&);

}  // namespace segsplat
