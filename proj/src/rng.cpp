#include "rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "errors.hpp"

namespace nastl {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::format: return "format error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::completeness: return "completeness error";
    case ErrorKind::not_found: return "not found";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::numeric: return "numeric fault";
    case ErrorKind::config_mismatch: return "config mismatch";
    case ErrorKind::checksum: return "checksum error";
    case ErrorKind::contract: return "contract violation";
    case ErrorKind::domain: return "domain error";
    }
    return "error";
}

uint64_t fnv1a64(std::string_view bytes, uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t master, std::string_view name) {
    return splitmix64(splitmix64(master) ^ fnv1a64(name));
}

uint64_t derive_seed(uint64_t master, std::string_view name, uint64_t index) {
    return splitmix64(derive_seed(master, name) + splitmix64(index + 1));
}

uint64_t uniform_index(Rng& rng, uint64_t n) {
    if (n <= 1) {
        return 0;
    }
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
    require(!is.fail(), ErrorKind::format, "malformed rng state");
}

}  // namespace nastl
