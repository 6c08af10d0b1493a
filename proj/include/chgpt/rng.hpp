#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace chgpt {

// Philox-4x32-10 counter-based generator. Each path owns an independent
// stream keyed by (master_seed, path_index); draws depend only on the key
// and the draw counter, so results are identical no matter how paths are
// scheduled across workers.
class PathRng {
public:
    PathRng(std::uint64_t master_seed, std::uint64_t path_index)
        : key_{static_cast<std::uint32_t>(master_seed),
               static_cast<std::uint32_t>(master_seed >> 32)},
          path_{static_cast<std::uint32_t>(path_index),
                static_cast<std::uint32_t>(path_index >> 32)} {}

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t lo = next_u32();
        std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    // Standard normal via Box-Muller; the sine partner is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) {
        return static_cast<std::uint32_t>(
            (static_cast<std::uint64_t>(a) * b) >> 32);
    }

    void refill() {
        std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
        std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
        std::uint32_t c2 = path_[0];
        std::uint32_t c3 = path_[1];
        std::uint32_t k0 = key_[0];
        std::uint32_t k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            const std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
            std::uint32_t hi0 = mulhi(m0, c0), lo0 = m0 * c0;
            std::uint32_t hi1 = mulhi(m1, c2), lo1 = m1 * c2;
            std::uint32_t n0 = hi1 ^ c1 ^ k0;
            std::uint32_t n1 = lo1;
            std::uint32_t n2 = hi0 ^ c3 ^ k1;
            std::uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_ = {c0, c1, c2, c3};
        buf_pos_ = 0;
        ++counter_;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> path_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace chgpt
