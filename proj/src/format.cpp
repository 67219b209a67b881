#include "topoaug/format.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace topoaug {

std::string format_double(double value) {
  if (value == 0.0) return "0";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

}  // namespace topoaug
