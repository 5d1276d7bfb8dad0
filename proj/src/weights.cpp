#include "edms/weights.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace edms {

static_assert(std::endian::native == std::endian::little,
              "EDMW serialization assumes a little-endian host");

Digest sha256(std::span<const uint8_t> bytes) {
    Digest d{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr);
    return d;
}

std::string hex8(std::span<const uint8_t, 8> prefix) {
    static const char* k = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 0; i < 8; ++i) {
        s[2 * i] = k[prefix[i] >> 4];
        s[2 * i + 1] = k[prefix[i] & 0xf];
    }
    return s;
}

std::size_t WeightEntry::count() const {
    std::size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
}

const WeightEntry* WeightSet::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const WeightEntry& WeightSet::get(std::string_view name) const {
    const WeightEntry* e = find(name);
    if (!e) throw WeightError("missing weight entry: " + std::string(name));
    return *e;
}

void WeightSet::put(WeightEntry entry) {
    if (entry.dims.empty() || entry.dims.size() > 4) {
        throw WeightError("weight entry rank must be 1..4: " + entry.name);
    }
    if (entry.count() != entry.data.size()) {
        throw WeightError("weight entry size mismatch: " + entry.name);
    }
    digest_.reset();
    for (auto& e : entries_) {
        if (e.name == entry.name) {
            e = std::move(entry);
            return;
        }
    }
    entries_.push_back(std::move(entry));
}

bool WeightSet::has_prefix(std::string_view prefix) const {
    for (const auto& e : entries_) {
        if (e.name.starts_with(prefix)) return true;
    }
    return false;
}

namespace {

void append_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t(v >> 8));
}

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

struct Reader {
    std::span<const uint8_t> buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw WeightError("weight file truncated");
    }
    uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(buf[pos]) | uint16_t(buf[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

}  // namespace

std::vector<uint8_t> serialize_weights(const WeightSet& w) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'E', 'D', 'M', 'W'});
    append_u16(out, 1);
    if (w.size() > 0xffff) throw WeightError("too many weight entries");
    append_u16(out, uint16_t(w.size()));
    for (const auto& e : w.entries()) {
        if (e.name.size() > 0xffff) throw WeightError("weight name too long");
        append_u16(out, uint16_t(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(uint8_t(e.dims.size()));
        for (uint32_t d : e.dims) append_u32(out, d);
        const std::size_t off = out.size();
        out.resize(off + e.data.size() * 4);
        std::memcpy(out.data() + off, e.data.data(), e.data.size() * 4);
    }
    return out;
}

WeightSet deserialize_weights(std::span<const uint8_t> bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), "EDMW", 4) != 0) throw WeightError("bad EDMW magic");
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != 1) throw WeightError("unsupported EDMW version");
    const uint16_t count = r.u16();
    WeightSet w;
    for (uint16_t t = 0; t < count; ++t) {
        WeightEntry e;
        const uint16_t name_len = r.u16();
        r.need(name_len);
        e.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        const uint8_t rank = r.u8();
        if (rank < 1 || rank > 4) throw WeightError("bad tensor rank");
        for (int i = 0; i < rank; ++i) e.dims.push_back(r.u32());
        const std::size_t n = e.count();
        r.need(n * 4);
        e.data.resize(n);
        std::memcpy(e.data.data(), bytes.data() + r.pos, n * 4);
        r.pos += n * 4;
        if (w.find(e.name)) throw WeightError("duplicate weight name: " + e.name);
        w.put(std::move(e));
    }
    if (r.pos != bytes.size()) throw WeightError("trailing bytes in weight payload");
    return w;
}

const Digest& WeightSet::digest() const {
    if (!digest_) digest_ = sha256(serialize_weights(*this));
    return *digest_;
}

void save_weights(const WeightSet& w, const std::filesystem::path& path) {
    const std::vector<uint8_t> payload = serialize_weights(w);
    const Digest d = sha256(payload);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WeightError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
    f.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size()));
    if (!f) throw WeightError("write failed: " + path.string());
}

WeightSet load_weights(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WeightError("cannot open: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 32) throw WeightError("weight file truncated");
    const std::span<const uint8_t> payload(bytes.data(), bytes.size() - 32);
    const Digest d = sha256(payload);
    if (std::memcmp(d.data(), bytes.data() + payload.size(), 32) != 0) {
        throw WeightError("weight digest mismatch: " + path.string());
    }
    WeightSet w = deserialize_weights(payload);
    if (!(w.digest() == d)) throw WeightError("weight digest mismatch after parse");
    return w;
}

}  // namespace edms
