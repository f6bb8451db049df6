#pragma once

#include <cstdint>
#include <span>

namespace ship {

/// CRC-32C (Castagnoli, reflected 0x82F63B78). `crc` is the value returned
/// by a previous call, so a message may be hashed in pieces.
/// Uses the SSE4.2 crc32 instruction when the CPU has it.
std::uint32_t crc32c(std::span<const std::uint8_t> data, std::uint32_t crc = 0);

/// Table-driven path (slicing-by-8), always available.
std::uint32_t crc32c_software(std::span<const std::uint8_t> data, std::uint32_t crc = 0);
bool crc32c_hardware_available();

}  // namespace ship
