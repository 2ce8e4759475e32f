#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace callosum {

// Minimal SHA-256. Content digests (training slices, requests, checkpoints)
// and derived training seeds all go through this.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);

    void update_u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        update(b, 8);
    }

    void update_i64(std::int64_t v) { update_u64(static_cast<std::uint64_t>(v)); }

    void update_double(double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        update_u64(bits);
    }

    void update_string(const std::string& s) {
        update_u64(s.size());
        update(s.data(), s.size());
    }

    std::array<std::uint8_t, 32> finish();
    std::string finish_hex();

    // First 8 bytes of the digest as a seed value.
    std::uint64_t finish_u64();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t h_[8];
    std::uint64_t total_len_ = 0;
    std::uint8_t buf_[64];
    std::size_t buf_len_ = 0;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

} // namespace callosum
