#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace segsplat {

using ObjectId = std::uint32_t;

/// Shared id for unsegmented pixels and background Gaussians at every level.
inline constexpr ObjectId kBackground = 0;

/// Segmentation granularity. Ordered Small < Middle < Large (containment).
enum class Granularity : std::uint8_t { Small = 0, Middle = 1, Large = 2 };

inline constexpr std::array<Granularity, 3> kAllLevels{Granularity::Small, Granularity::Middle,
                                                       Granularity::Large};

constexpr std::size_t level_index(Granularity g) { return static_cast<std::size_t>(g); }

constexpr char level_code(Granularity g) {
  switch (g) {
    case Granularity::Small: return 'S';
    case Granularity::Middle: return 'M';
    case Granularity::Large: return 'L';
  }
  return '?';
}

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view text);

/// One object id per granularity level.
struct ObjectIds {
  ObjectId large = kBackground;
  ObjectId middle = kBackground;
  ObjectId small = kBackground;

  ObjectId& operator[](Granularity g) {
    switch (g) {
      case Granularity::Small: return small;
      case Granularity::Middle: return middle;
      default: return large;
    }
  }
  ObjectId operator[](Granularity g) const {
    switch (g) {
      case Granularity::Small: return small;
      case Granularity::Middle: return middle;
      default: return large;
    }
  }
  bool operator==(const ObjectIds&) const = default;
};

template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar> using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar> using Mat23 = Eigen::Matrix<Scalar, 2, 3>;
template <typename Scalar> using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Error raised for malformed inputs and violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace segsplat
