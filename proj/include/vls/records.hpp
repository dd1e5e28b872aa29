// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "vls/media.hpp"

namespace vls {

// One dataset record, one structured-text object per line on disk. Modality
// fields name tensor files relative to the record file; loaders attach the
// decoded payloads before example building.
struct RawRecord {
    std::string task;
    std::optional<std::string> text_input;
    std::string text_target;
    std::optional<std::string> style;
    std::optional<std::string> label;
    std::optional<std::string> image_path;
    std::optional<std::string> video_path;
    std::optional<std::string> audio_path;

    std::optional<ImageTensor> image;
    std::optional<VideoTensor> video;
    std::optional<AudioTensor> audio;
};

} // namespace vls
