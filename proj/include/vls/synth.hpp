// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "vls/media.hpp"

namespace vls {

// Synthetic paired corpora: captions render as grids of solid color blocks
// (one block per token), transcripts as fixed-frequency tone segments (one
// hop per token), so captioning and transcription are exactly solvable from
// the modality payload. Generation is a pure function of the spec.
struct SyntheticCorpusSpec {
    std::int64_t vocab_words = 24;      // content token count; color table caps at 511
    std::int64_t examples_per_task = 16;
    std::uint64_t seed = 7;
    std::int64_t block = 8;             // image block edge, matches the vision patch
    std::int64_t caption_len_min = 2;
    std::int64_t caption_len_max = 4;   // <= 10 so VisionQA block indices stay single-digit
    std::int64_t sentence_len_min = 8;  // LanguageReconstruction text
    std::int64_t sentence_len_max = 16;
    std::int64_t tone_hop = 160;        // samples per transcript token
    std::int64_t sample_rate = 16000;
    std::int64_t video_frames = 4;
    bool attach_paired = false; // give caption records the paired audio and vice versa
    std::string tasks;          // comma subset of the nine pretraining tasks; empty = all

    static SyntheticCorpusSpec parse_file(const std::string& path);
};

std::string synthetic_word(std::int64_t idx); // "w<idx>"
// Distinct RGB per token index; usage_error beyond the 512-entry table.
std::array<real, 3> color_for_token(std::int64_t idx);
// Distinct tone frequency per token index; usage_error beyond Nyquist.
double tone_for_token(std::int64_t idx, std::int64_t sample_rate);
// Balanced deterministic label assignment from content.
int label_index_for_content(const std::string& content, std::uint64_t seed, int n_classes);

ImageTensor render_caption_image(const std::vector<std::int64_t>& word_idx, std::int64_t block);
VideoTensor render_caption_video(const std::vector<std::int64_t>& word_idx, std::int64_t block,
                                 std::int64_t frames);
AudioTensor render_transcript_audio(const std::vector<std::int64_t>& word_idx,
                                    std::int64_t tone_hop, std::int64_t sample_rate);

// Writes <Task>.jsonl, <Task>.refs.txt, media/*.mmt and vocab.txt under
// out_dir for the selected pretraining tasks.
void generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::string& out_dir);

} // namespace vls
