// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vls/common.hpp"

namespace vls {

// The twelve task kinds: nine pretraining tasks plus the downstream
// summarization / dialogue / clip-sentiment framings.
enum class TaskKind {
    ImageCaptioning,
    VideoCaptioning,
    VisionQA,
    VisionTextReconstruction,
    SpeechTranscription,
    SpeechSentiment,
    SpeechEmotion,
    SpeechTextReconstruction,
    LanguageReconstruction,
    MultimodalSummarization,
    DialogueGeneration,
    ClipSentiment,
};

inline constexpr TaskKind kAllTasks[] = {
    TaskKind::ImageCaptioning,        TaskKind::VideoCaptioning,
    TaskKind::VisionQA,               TaskKind::VisionTextReconstruction,
    TaskKind::SpeechTranscription,    TaskKind::SpeechSentiment,
    TaskKind::SpeechEmotion,          TaskKind::SpeechTextReconstruction,
    TaskKind::LanguageReconstruction, TaskKind::MultimodalSummarization,
    TaskKind::DialogueGeneration,     TaskKind::ClipSentiment,
};

// The nine tasks used for pretraining.
inline constexpr TaskKind kPretrainTasks[] = {
    TaskKind::ImageCaptioning,        TaskKind::VideoCaptioning,
    TaskKind::VisionQA,               TaskKind::VisionTextReconstruction,
    TaskKind::SpeechTranscription,    TaskKind::SpeechSentiment,
    TaskKind::SpeechEmotion,          TaskKind::SpeechTextReconstruction,
    TaskKind::LanguageReconstruction,
};

const std::string& task_name(TaskKind task);
TaskKind task_from_name(const std::string& name); // schema_error on unknown

} // namespace vls
