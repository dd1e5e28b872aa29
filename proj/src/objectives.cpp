// SPDX-License-Identifier: Apache-2.0
#include "vls/objectives.hpp"

#include <algorithm>

#include "vls/metrics.hpp"
#include "vls/rng.hpp"

namespace vls {

CorruptResult corrupt_spans_at(const std::vector<int>& tokens,
                               const std::vector<std::pair<std::int64_t, std::int64_t>>& spans) {
    if (tokens.empty()) throw usage_error("corrupt_spans: token sequence is empty");
    if (static_cast<int>(spans.size()) + 1 > kNumSentinels) {
        throw corruption_error("corrupt_spans: " + std::to_string(spans.size()) +
                               " spans need " + std::to_string(spans.size() + 1) +
                               " sentinels, only " + std::to_string(kNumSentinels) +
                               " available");
    }
    const auto n = static_cast<std::int64_t>(tokens.size());
    std::int64_t prev_end = -1; // exclusive end of the previous span
    for (const auto& [start, len] : spans) {
        if (len <= 0 || start < 0 || start + len > n) {
            throw usage_error("corrupt_spans: span out of range");
        }
        // an unmasked gap of >= 1 token keeps spans from merging
        if (prev_end >= 0 && start <= prev_end) {
            throw usage_error("corrupt_spans: spans must be ascending with a gap");
        }
        prev_end = start + len;
    }

    CorruptResult out;
    std::size_t span_idx = 0;
    std::int64_t i = 0;
    while (i < n) {
        if (span_idx < spans.size() && spans[span_idx].first == i) {
            out.masked_input.push_back(sentinel_id(static_cast<int>(span_idx)));
            const auto [start, len] = spans[span_idx];
            out.target.push_back(sentinel_id(static_cast<int>(span_idx)));
            for (std::int64_t j = start; j < start + len; ++j) {
                out.target.push_back(tokens[static_cast<std::size_t>(j)]);
            }
            i = start + len;
            ++span_idx;
        } else {
            out.masked_input.push_back(tokens[static_cast<std::size_t>(i)]);
            ++i;
        }
    }
    out.target.push_back(sentinel_id(static_cast<int>(spans.size()))); // terminal
    return out;
}

CorruptResult corrupt_spans(const std::vector<int>& tokens, const SpanMaskSpec& spec) {
    if (tokens.empty()) throw usage_error("corrupt_spans: token sequence is empty");
    if (spec.mask_rate < 0.0 || spec.mask_rate >= 1.0) {
        throw usage_error("corrupt_spans: mask_rate must be in [0,1)");
    }
    SeededRng rng(spec.seed);
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    const auto n = static_cast<std::int64_t>(tokens.size());
    // Start probability calibrated so the long-run masked fraction matches
    // mask_rate: each cycle masks mean_span_len of ~(1/q + mean_span_len)
    // positions.
    const double q = spec.mask_rate <= 0.0
                         ? 0.0
                         : spec.mask_rate / (spec.mean_span_len * (1.0 - spec.mask_rate));
    std::int64_t i = 0;
    while (i < n) {
        if (q > 0.0 && rng.uniform() < q) {
            const std::int64_t len =
                std::min<std::int64_t>(rng.geometric(spec.mean_span_len), n - i);
            spans.emplace_back(i, len);
            if (static_cast<int>(spans.size()) + 1 > kNumSentinels) {
                throw corruption_error(
                    "corrupt_spans: span budget exceeds " + std::to_string(kNumSentinels) +
                    " sentinels; shrink mask_rate");
            }
            i += len + 1; // skip one token so spans never merge
        } else {
            ++i;
        }
    }
    return corrupt_spans_at(tokens, spans);
}

std::vector<int> reconstruct(const std::vector<int>& masked_input,
                             const std::vector<int>& target) {
    bool has_sentinel = false;
    for (int id : masked_input) has_sentinel = has_sentinel || is_sentinel(id);
    if (!has_sentinel) return masked_input;

    // slice target into spans keyed by sentinel index; sentinels must appear
    // in increasing order, the last one terminal
    std::vector<std::vector<int>> spans;
    int expected = 0;
    std::size_t pos = 0;
    if (target.empty() || !is_sentinel(target[0])) {
        throw reconstruction_error("reconstruct: target must start with a sentinel");
    }
    while (pos < target.size()) {
        if (!is_sentinel(target[pos])) {
            throw reconstruction_error("reconstruct: expected sentinel in target");
        }
        if (sentinel_index(target[pos]) != expected) {
            throw reconstruction_error("reconstruct: sentinel order mismatch in target, saw " +
                                       std::to_string(sentinel_index(target[pos])) +
                                       " expected " + std::to_string(expected));
        }
        ++expected;
        ++pos;
        std::vector<int> span;
        while (pos < target.size() && !is_sentinel(target[pos])) {
            span.push_back(target[pos]);
            ++pos;
        }
        spans.push_back(std::move(span));
    }
    if (!spans.empty() && !spans.back().empty()) {
        throw reconstruction_error("reconstruct: target missing terminal sentinel");
    }
    spans.pop_back(); // terminal marker carries no span

    std::vector<int> out;
    int next = 0;
    for (int id : masked_input) {
        if (is_sentinel(id)) {
            const int idx = sentinel_index(id);
            if (idx != next) {
                throw reconstruction_error("reconstruct: sentinel order mismatch in input, saw " +
                                           std::to_string(idx) + " expected " +
                                           std::to_string(next));
            }
            if (idx >= static_cast<int>(spans.size())) {
                throw reconstruction_error("reconstruct: sentinel " + std::to_string(idx) +
                                           " has no span in target");
            }
            out.insert(out.end(), spans[static_cast<std::size_t>(idx)].begin(),
                       spans[static_cast<std::size_t>(idx)].end());
            ++next;
        } else {
            out.push_back(id);
        }
    }
    if (next != static_cast<int>(spans.size())) {
        throw reconstruction_error("reconstruct: target has unused spans");
    }
    return out;
}

namespace {

const std::string& require_field(const std::optional<std::string>& field, const char* name) {
    if (!field.has_value()) throw schema_error(std::string("record missing field: ") + name);
    return *field;
}

std::string resolve_label(const std::string& raw, const std::vector<std::string>& labels) {
    // the label is either an index into the set or one of the label names
    bool numeric = !raw.empty();
    for (char c : raw) numeric = numeric && std::isdigit(static_cast<unsigned char>(c));
    if (numeric) {
        const auto idx = static_cast<std::size_t>(std::stol(raw));
        if (idx >= labels.size()) {
            throw schema_error("label index " + raw + " out of range, " +
                               std::to_string(labels.size()) + " labels available");
        }
        return labels[idx];
    }
    if (std::find(labels.begin(), labels.end(), raw) == labels.end()) {
        throw schema_error("label '" + raw + "' is not in the task label set");
    }
    return raw;
}

void write_corruption(TrainingExample& ex, const std::string& text, const Vocab& vocab,
                      const std::optional<SpanMaskSpec>& mask) {
    const auto tokens = vocab.encode(text);
    if (tokens.empty()) throw schema_error("record missing field: text_target");
    const auto res = corrupt_spans(tokens, mask.value_or(SpanMaskSpec{}));
    ex.input_text = vocab.decode(res.masked_input);
    ex.target_text = vocab.decode(res.target);
}

} // namespace

TrainingExample build_example(const RawRecord& record, TaskKind task, const Vocab& vocab,
                              const std::optional<SpanMaskSpec>& mask) {
    if (record.image.has_value() && record.video.has_value()) {
        throw schema_error("record carries both image and video");
    }
    TrainingExample ex;
    ex.task = task;
    ex.image = record.image;
    ex.video = record.video;
    ex.audio = record.audio;
    ex.prompt_text = record.style.has_value() ? prompt_for(task, *record.style)
                                              : prompt_for(task);

    auto need_image = [&] {
        if (!ex.image.has_value()) throw schema_error("record missing field: image");
    };
    auto need_video = [&] {
        if (!ex.video.has_value()) throw schema_error("record missing field: video");
    };
    auto need_audio = [&] {
        if (!ex.audio.has_value()) throw schema_error("record missing field: audio");
    };
    auto need_target = [&] {
        if (record.text_target.empty()) throw schema_error("record missing field: text_target");
        ex.target_text = record.text_target;
    };

    switch (task) {
    case TaskKind::ImageCaptioning:
        need_image();
        need_target();
        break;
    case TaskKind::VideoCaptioning:
        need_video();
        need_target();
        break;
    case TaskKind::VisionQA:
        need_image();
        ex.input_text = require_field(record.text_input, "text_input");
        need_target();
        break;
    case TaskKind::VisionTextReconstruction:
        need_image();
        write_corruption(ex, record.text_target, vocab, mask);
        break;
    case TaskKind::SpeechTranscription:
        need_audio();
        need_target();
        break;
    case TaskKind::SpeechSentiment:
        need_audio();
        ex.target_text = resolve_label(require_field(record.label, "label"), sentiment_labels());
        break;
    case TaskKind::SpeechEmotion:
        need_audio();
        ex.target_text = resolve_label(require_field(record.label, "label"), emotion_labels());
        break;
    case TaskKind::SpeechTextReconstruction:
        need_audio();
        write_corruption(ex, record.text_target, vocab, mask);
        break;
    case TaskKind::LanguageReconstruction:
        write_corruption(ex, record.text_target, vocab, mask);
        break;
    case TaskKind::MultimodalSummarization:
        need_image();
        ex.input_text = require_field(record.text_input, "text_input");
        need_target();
        break;
    case TaskKind::DialogueGeneration:
        need_image();
        require_field(record.style, "style");
        ex.input_text = require_field(record.text_input, "text_input");
        need_target();
        break;
    case TaskKind::ClipSentiment:
        need_video();
        need_audio();
        if (record.text_input.has_value()) ex.input_text = *record.text_input;
        ex.target_text = resolve_label(require_field(record.label, "label"), clip_labels());
        break;
    }
    if (ex.target_text.empty()) throw schema_error("record produced an empty target");
    return ex;
}

std::string label_of_generation(const std::string& generated,
                                const std::vector<std::string>& label_set) {
    if (label_set.empty()) throw usage_error("label_of_generation: empty label set");
    for (const auto& label : label_set) {
        if (generated == label) return label;
    }
    std::size_t best = 0;
    double best_f1 = -1.0;
    for (std::size_t i = 0; i < label_set.size(); ++i) {
        const double f = metrics::token_f1(generated, label_set[i]);
        if (f > best_f1) {
            best_f1 = f;
            best = i;
        }
    }
    return label_set[best];
}

const std::vector<std::string>& sentiment_labels() {
    static const std::vector<std::string> labels = {
        "highly negative", "negative", "neutral", "positive", "highly positive",
    };
    return labels;
}

const std::vector<std::string>& emotion_labels() {
    static const std::vector<std::string> labels = {
        "happiness", "sadness", "anger", "fear", "disgust", "surprise",
    };
    return labels;
}

const std::vector<std::string>& clip_labels() {
    static const std::vector<std::string> labels = {"funny", "unfunny"};
    return labels;
}

} // namespace vls
