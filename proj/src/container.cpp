#include "edms/container.hpp"

#include <cstring>

namespace edms {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<uint8_t> write_container(const ContainerHeader& h,
                                     std::span<const uint8_t> compact,
                                     std::span<const uint8_t> residual,
                                     const std::optional<std::array<uint8_t, 8>>& synth_hash8) {
    if (h.has_synth_hash() != synth_hash8.has_value()) {
        throw ContainerError("synthesis-hash flag and payload disagree");
    }
    std::vector<uint8_t> out;
    out.reserve(kContainerHeaderSize + compact.size() + residual.size() + 8);
    out.insert(out.end(), {'E', 'D', 'M', 'S'});
    out.push_back(h.version);
    out.push_back(h.flags);
    put_u16(out, h.q);
    put_u16(out, h.width);
    put_u16(out, h.height);
    out.insert(out.end(), h.weight_digest8.begin(), h.weight_digest8.end());
    put_u32(out, uint32_t(compact.size()));
    put_u32(out, uint32_t(residual.size()));
    out.insert(out.end(), compact.begin(), compact.end());
    out.insert(out.end(), residual.begin(), residual.end());
    if (synth_hash8) out.insert(out.end(), synth_hash8->begin(), synth_hash8->end());
    return out;
}

ParsedContainer parse_container(std::span<const uint8_t> bytes) {
    if (bytes.size() < kContainerHeaderSize) throw ContainerError("container too short");
    if (std::memcmp(bytes.data(), "EDMS", 4) != 0) throw ContainerError("bad EDMS magic");
    ParsedContainer pc;
    ContainerHeader& h = pc.header;
    h.version = bytes[4];
    if (h.version != 1) throw ContainerError("unsupported container version");
    h.flags = bytes[5];
    h.q = get_u16(bytes.data() + 6);
    h.width = get_u16(bytes.data() + 8);
    h.height = get_u16(bytes.data() + 10);
    std::memcpy(h.weight_digest8.data(), bytes.data() + 12, 8);
    h.compact_len = get_u32(bytes.data() + 20);
    h.residual_len = get_u32(bytes.data() + 24);

    const std::size_t expect = kContainerHeaderSize + std::size_t(h.compact_len) +
                               h.residual_len + (h.has_synth_hash() ? 8 : 0);
    if (bytes.size() != expect) {
        throw ContainerError("container size does not match header accounting");
    }
    pc.compact = bytes.subspan(kContainerHeaderSize, h.compact_len);
    pc.residual = bytes.subspan(kContainerHeaderSize + h.compact_len, h.residual_len);
    if (h.has_synth_hash()) {
        std::array<uint8_t, 8> hash{};
        std::memcpy(hash.data(), bytes.data() + expect - 8, 8);
        pc.synth_hash8 = hash;
    }
    return pc;
}

}  // namespace edms
