#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace edms {

struct ContainerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// EDMS container, 28-byte header (all integers little-endian):
//   magic "EDMS" | u8 version=1 | u8 flags | u16 Q | u16 width | u16 height |
//   u8[8] weight-digest prefix | u32 compact length | u32 residual length
// followed by the two sections and, when flags bit0 is set, an 8-byte
// synthesis-hash prefix. There is no segment section: the segment costs
// zero rate by construction.
inline constexpr std::size_t kContainerHeaderSize = 28;
inline constexpr uint8_t kFlagSynthHash = 0x01;
inline constexpr uint8_t kFlagNoEnhance = 0x02;

struct ContainerHeader {
    uint8_t version = 1;
    uint8_t flags = 0;
    uint16_t q = 1;
    uint16_t width = 0, height = 0;  // original (pre-padding) dims
    std::array<uint8_t, 8> weight_digest8{};
    uint32_t compact_len = 0;
    uint32_t residual_len = 0;

    bool has_synth_hash() const { return flags & kFlagSynthHash; }
    bool no_enhance() const { return flags & kFlagNoEnhance; }
};

struct ParsedContainer {
    ContainerHeader header;
    std::span<const uint8_t> compact;
    std::span<const uint8_t> residual;
    std::optional<std::array<uint8_t, 8>> synth_hash8;
};

std::vector<uint8_t> write_container(const ContainerHeader& h,
                                     std::span<const uint8_t> compact,
                                     std::span<const uint8_t> residual,
                                     const std::optional<std::array<uint8_t, 8>>& synth_hash8);

// Validates magic, version, and the exact size identity
// header + sections (+ hash) = file size.
ParsedContainer parse_container(std::span<const uint8_t> bytes);

}  // namespace edms
