#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "edms/tensor.hpp"

namespace edms {

using Digest = std::array<uint8_t, 32>;

Digest sha256(std::span<const uint8_t> bytes);
std::string hex8(std::span<const uint8_t, 8> prefix);

struct WeightError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WeightEntry {
    std::string name;
    std::vector<uint32_t> dims;  // rank 1..4
    std::vector<float> data;

    std::size_t count() const;
};

// Named tensor collection for one or more networks. The digest is the
// SHA-256 of the serialized file payload and doubles as the model identity
// in the container's matching handshake.
class WeightSet {
public:
    const std::vector<WeightEntry>& entries() const { return entries_; }
    const WeightEntry* find(std::string_view name) const;
    const WeightEntry& get(std::string_view name) const;

    // Replaces the entry with the same name or appends a new one.
    void put(WeightEntry entry);
    bool has_prefix(std::string_view prefix) const;
    std::size_t size() const { return entries_.size(); }

    const Digest& digest() const;  // computed lazily, cached until mutation

private:
    std::vector<WeightEntry> entries_;
    mutable std::optional<Digest> digest_;
};

// EDMW file format (bit-exact external interface):
//   magic "EDMW", u16 version=1, u16 tensor_count;
//   per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims[rank],
//   float32 payload row-major; all integers little-endian.
// A 32-byte SHA-256 of everything above trails the file and must match on
// load.
std::vector<uint8_t> serialize_weights(const WeightSet& w);
WeightSet deserialize_weights(std::span<const uint8_t> bytes);

void save_weights(const WeightSet& w, const std::filesystem::path& path);
WeightSet load_weights(const std::filesystem::path& path);

}  // namespace edms
