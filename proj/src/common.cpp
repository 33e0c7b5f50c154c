#include "usersim/common.hpp"

#include <array>
#include <cstdio>

namespace usersim {

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

namespace {
std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320U ^ (c >> 1) : (c >> 1);
    table[i] = c;
  }
  return table;
}
}  // namespace

std::uint32_t crc32(const void* bytes, std::size_t count) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint32_t c = 0xffffffffU;
  for (std::size_t i = 0; i < count; ++i) c = table[(c ^ p[i]) & 0xffU] ^ (c >> 8);
  return c ^ 0xffffffffU;
}

}  // namespace usersim
