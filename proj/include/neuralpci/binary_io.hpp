#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

// Little-endian scalar encoding for the binary file formats.
namespace neuralpci::binio {

template <typename U>
inline U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFFu));
    return out;
  }
}

template <typename U>
inline void write_raw(std::ostream& os, U v) {
  v = to_little(v);
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  os.write(buf, sizeof(U));
}

template <typename U>
inline U read_raw(std::istream& is) {
  char buf[sizeof(U)];
  if (!is.read(buf, sizeof(U))) throw std::runtime_error("unexpected end of binary stream");
  U v;
  std::memcpy(&v, buf, sizeof(U));
  return to_little(v);
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, v); }
inline void write_f32(std::ostream& os, float v) { write_raw(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_raw(os, std::bit_cast<std::uint64_t>(v)); }
inline std::uint32_t read_u32(std::istream& is) { return read_raw<std::uint32_t>(is); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_raw<std::uint32_t>(is)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_raw<std::uint64_t>(is)); }

}  // namespace neuralpci::binio
