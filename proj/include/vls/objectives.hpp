// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vls/common.hpp"
#include "vls/records.hpp"
#include "vls/tasks.hpp"
#include "vls/tokenizer.hpp"

namespace vls {

// Span corruption ran out of sentinel ids; callers shrink the mask rate.
struct corruption_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sentinel bookkeeping in a (masked input, target) pair is inconsistent.
struct reconstruction_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpanMaskSpec {
    double mask_rate = 0.15;
    double mean_span_len = 3.0;
    std::uint64_t seed = 0;
};

struct CorruptResult {
    std::vector<int> masked_input;
    std::vector<int> target;
};

// Replaces random contiguous spans (geometric lengths, capped at the
// remaining sequence) by sentinel ids in left-to-right order. The target is
// SENTINEL_0 span_0 SENTINEL_1 span_1 ... followed by a terminal sentinel.
// Consecutive spans always leave at least one unmasked token between them.
CorruptResult corrupt_spans(const std::vector<int>& tokens, const SpanMaskSpec& spec);

// Deterministic variant taking explicit (start, length) spans, ascending and
// separated by >= 1 unmasked token.
CorruptResult corrupt_spans_at(const std::vector<int>& tokens,
                               const std::vector<std::pair<std::int64_t, std::int64_t>>& spans);

// Total inverse of corrupt_spans: splices target spans back into sentinel
// positions. Throws reconstruction_error on sentinel mismatch.
std::vector<int> reconstruct(const std::vector<int>& masked_input,
                             const std::vector<int>& target);

// One unified text-completion training instance.
struct TrainingExample {
    TaskKind task = TaskKind::LanguageReconstruction;
    std::optional<ImageTensor> image;
    std::optional<VideoTensor> video;
    std::optional<AudioTensor> audio;
    std::string prompt_text;
    std::string input_text;
    std::string target_text;
};

// Converts a raw record into a TrainingExample for `task`: prompt from the
// registry, modality payloads carried over, reconstruction tasks span-masked
// with `mask` (defaults apply when absent). Missing required fields raise
// schema_error naming the field.
TrainingExample build_example(const RawRecord& record, TaskKind task, const Vocab& vocab,
                              const std::optional<SpanMaskSpec>& mask = std::nullopt);

// Open-vocabulary classification scoring: exact match if possible, otherwise
// the label with the highest token F1 against the generation, ties broken by
// label_set order.
std::string label_of_generation(const std::string& generated,
                                const std::vector<std::string>& label_set);

const std::vector<std::string>& sentiment_labels(); // 5-point scale
const std::vector<std::string>& emotion_labels();   // 6 categories
const std::vector<std::string>& clip_labels();      // funny / unfunny

} // namespace vls
