// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vls/common.hpp"

namespace vls {

// Raw modality payloads. Values are preprocessed reals (images in [0,1],
// audio in [-1,1]); shape invariants are checked by the encoders.
struct ImageTensor {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 3;
    std::vector<real> values; // row-major [H][W][C]
};

struct VideoTensor {
    std::int64_t frames = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 3;
    std::vector<real> values; // [T][H][W][C]
};

struct AudioTensor {
    std::vector<real> samples; // mono waveform
    std::int64_t sample_rate = 16000;
};

} // namespace vls
