// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian scalar encoding shared by the binary file formats.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>

namespace lmslice::detail {

template <typename T>
concept LeScalar = std::is_arithmetic_v<T>;

template <LeScalar T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  auto bits = std::bit_cast<U>(value);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  }
  out.append(bytes.data(), bytes.size());
}

template <LeScalar T>
T get_le(const char* in) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(static_cast<std::uint8_t>(in[i])) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace lmslice::detail
