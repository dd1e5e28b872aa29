// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vls {

// Scalar type for all model math. float for training builds, double for the
// gradient-verification build (VLS_REAL64).
#ifdef VLS_REAL64
using real = double;
#else
using real = float;
#endif

// Shape/dimension errors and misuse of an operation. Maps to CLI exit code 2.
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A record missing fields its task requires, or malformed input files.
// Maps to CLI exit code 2.
struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or inconsistent persisted state (checkpoints, tensor files).
// Maps to CLI exit code 3.
struct integrity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime training failures (non-finite loss).
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for content hashes in manifests and per-parameter seeds.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
    return fnv1a(s.data(), s.size());
}

} // namespace vls
