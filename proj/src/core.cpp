#include "segsplat/core.hpp"

namespace segsplat {

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::Small: return "small";
    case Granularity::Middle: return "middle";
    case Granularity::Large: return "large";
  }
  return "unknown";
}

Granularity parse_granularity(std::string_view text) {
  if (text == "S" || text == "small" || text == "Small") return Granularity::Small;
  if (text == "M" || text == "middle" || text == "Middle") return Granularity::Middle;
  if (text == "L" || text == "large" || text == "Large") return Granularity::Large;
  throw Error("unknown granularity '" + std::string(text) + "'");
}

}  // namespace segsplat
