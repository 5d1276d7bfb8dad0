#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace edms {

struct StreamError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Carryless byte-oriented range coder (Subbotin style). Encoder and decoder
// renormalize in lockstep: the decoder consumes exactly the bytes the
// encoder emitted, so a truncated stream surfaces as a read past the end.
class RangeEncoder {
public:
    void encode(uint32_t cum, uint32_t freq, uint32_t total);
    std::vector<uint8_t> finish();  // flushes 4 tail bytes

private:
    uint32_t low_ = 0;
    uint32_t range_ = 0xffffffffu;
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes);

    // Splits the current interval by total and returns the scaled code point
    // in [0, total). Must be followed by exactly one consume().
    uint32_t decode_freq(uint32_t total);
    void consume(uint32_t cum, uint32_t freq);

private:
    uint8_t next_byte();

    uint32_t low_ = 0;
    uint32_t range_ = 0xffffffffu;
    uint32_t code_ = 0;
    std::span<const uint8_t> buf_;
    std::size_t pos_ = 0;
};

// Adaptive order-0 frequency model. Frequencies start at 1, grow by 32 per
// coded symbol, and all halve (rounding up, so counts stay >= 1) once the
// total would exceed 65536. These constants are normative so compression
// ratios stay comparable across implementations.
class AdaptiveModel {
public:
    static constexpr uint32_t kIncrement = 32;
    static constexpr uint32_t kRescaleLimit = 65536;

    explicit AdaptiveModel(int alphabet_size);

    int alphabet_size() const { return int(freq_.size()); }
    uint32_t total() const { return total_; }

    void encode(RangeEncoder& enc, int sym);
    int decode(RangeDecoder& dec);

    // freq += 32 for sym, then rescale if the total exceeds the limit.
    // Called automatically after every encode/decode.
    void update(int sym);

private:
    std::vector<uint32_t> freq_;
    uint32_t total_ = 0;
};

}  // namespace edms
