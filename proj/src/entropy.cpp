#include "edms/entropy.hpp"

namespace edms {

namespace {
constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;
}  // namespace

void RangeEncoder::encode(uint32_t cum, uint32_t freq, uint32_t total) {
    low_ += cum * (range_ /= total);
    range_ *= freq;
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
        out_.push_back(uint8_t(low_ >> 24));
        range_ <<= 8;
        low_ <<= 8;
    }
}

std::vector<uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 4; ++i) {
        out_.push_back(uint8_t(low_ >> 24));
        low_ <<= 8;
    }
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : buf_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    if (pos_ >= buf_.size()) throw StreamError("truncated stream");
    return buf_[pos_++];
}

uint32_t RangeDecoder::decode_freq(uint32_t total) {
    const uint32_t v = (code_ - low_) / (range_ /= total);
    if (v >= total) throw StreamError("corrupt stream");
    return v;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
    low_ += cum * range_;
    range_ *= freq;
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
        low_ <<= 8;
    }
}

AdaptiveModel::AdaptiveModel(int alphabet_size) {
    if (alphabet_size < 2 || alphabet_size > 256) {
        throw StreamError("alphabet size must be in [2, 256]");
    }
    freq_.assign(std::size_t(alphabet_size), 1);
    total_ = uint32_t(alphabet_size);
}

void AdaptiveModel::update(int sym) {
    freq_[sym] += kIncrement;
    total_ += kIncrement;
    if (total_ > kRescaleLimit) {
        total_ = 0;
        for (uint32_t& f : freq_) {
            f = (f + 1) >> 1;
            total_ += f;
        }
    }
}

void AdaptiveModel::encode(RangeEncoder& enc, int sym) {
    uint32_t cum = 0;
    for (int i = 0; i < sym; ++i) cum += freq_[i];
    enc.encode(cum, freq_[sym], total_);
    update(sym);
}

int AdaptiveModel::decode(RangeDecoder& dec) {
    const uint32_t target = dec.decode_freq(total_);
    uint32_t cum = 0;
    int sym = 0;
    while (cum + freq_[sym] <= target) cum += freq_[sym++];
    dec.consume(cum, freq_[sym]);
    update(sym);
    return sym;
}

}  // namespace edms
