#pragma once

// Generated by tests/data/make_fixtures.py.

#include <array>
#include <cstddef>
#include <cstdint>

namespace fixture {

inline constexpr std::array<std::int64_t, 35> kCounts35 = {6383, 2769, 1702, 1205, 922, 741, 615, 524, 455, 401, 358, 322, 293, 268, 246, 228, 212, 198, 185, 174, 164, 155, 147, 140, 133, 127, 121, 116, 111, 107, 103, 99, 95, 92, 89};
inline constexpr std::array<std::int64_t, 23> kPeriod1 = {5568, 2778, 1852, 1389, 1111, 926, 793, 694, 617, 555, 505, 463, 427, 396, 370, 347, 326, 308, 292, 277, 1, 2, 3};
inline constexpr std::array<std::int64_t, 30> kPeriod2 = {7323, 2968, 1752, 1205, 901, 711, 582, 489, 420, 366, 323, 289, 260, 236, 216, 198, 183, 170, 159, 148, 139, 131, 124, 117, 111, 105, 100, 96, 91, 87};
inline constexpr std::array<std::int64_t, 10> kOperatingPointCounts = {13304, 1736, 1200, 900, 800, 700, 600, 400, 292, 68};

inline constexpr std::array<int, 3> kStaleDistinct = {56, 41, 70};
inline constexpr std::int64_t kStartHeight = 600000;
inline constexpr std::size_t kRemainder = 137;

} // namespace fixture
