// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "vls/encoders.hpp"
#include "vls/objectives.hpp"
#include "vls/tokenizer.hpp"

namespace vls {

struct ModelConfig {
    std::int64_t d_text = 64;
    int joint_layers = 4;
    int dec_layers = 4;
    int heads = 4;
    std::int64_t ffn_mult = 4;
    std::int64_t max_text_len = 64;   // encoder text segment limit
    std::int64_t max_target_len = 48; // decoder sequence limit (incl. BOS)
    std::int64_t vocab_size = 0;
    std::uint64_t seed = 42;
    VisionEncoderConfig vision;
    SpeechEncoderConfig speech;
};

// Encoder-side input: any combination of modalities plus the prompt/input
// text ids (no BOS/EOS framing). The optional *_valid vectors mark positions
// of a present segment invalid (right padding within a batch); empty means
// all valid.
struct MultimodalInput {
    std::optional<ImageTensor> image;
    std::optional<VideoTensor> video;
    std::optional<AudioTensor> audio;
    std::vector<int> text_ids;
    std::vector<std::uint8_t> vision_valid;
    std::vector<std::uint8_t> speech_valid;
    std::vector<std::uint8_t> text_valid;
};

struct FusedMemory {
    TensorPtr states; // [(Lv+Ls+Lt) x d_text]
    std::vector<std::uint8_t> valid;
    std::int64_t len_vision = 0;
    std::int64_t len_speech = 0;
    std::int64_t len_text = 0;
    std::int64_t length() const { return len_vision + len_speech + len_text; }
};

struct GenerationConfig {
    enum class Mode { Greedy, Beam };
    Mode mode = Mode::Greedy;
    int beam_width = 4;        // Beam only
    std::int64_t max_len = 32; // generated tokens, excluding BOS/EOS framing
    double length_penalty = 1.0;
};

// Modality projections into the text embedding space, segment/position
// embeddings, joint full-attention encoder, and a causal decoder that
// cross-attends to the fused memory in every layer. The decoder output
// projection is tied to the text embedding table.
struct TrimodalModel {
    ModelConfig cfg;
    ParamStore params;
    VisionEncoder vision;
    SpeechEncoder speech;
    Linear proj_vision; // d_mod -> d_text
    Linear proj_speech;
    Parameter* embed = nullptr;    // [V x d_text]
    Parameter* seg_embed = nullptr; // [3 x d_text], order vision/speech/text
    Parameter* pos_vision = nullptr;
    Parameter* pos_speech = nullptr;
    Parameter* pos_text = nullptr;
    Parameter* pos_target = nullptr;
    std::vector<EncoderLayer> joint;
    LayerNorm joint_ln;
    std::vector<DecoderLayer> decoder;
    LayerNorm decoder_ln;

    explicit TrimodalModel(const ModelConfig& config);
};

// Projects present modalities, concatenates [vision, speech, text] with
// per-segment positions and segment embeddings, and runs the joint encoder.
// Absent segments contribute length zero; at least one segment must be
// present.
FusedMemory fuse_and_encode(Tape& t, const TrimodalModel& model, const MultimodalInput& input);

// Teacher-forced decoding. decoder_input_ids must be BOS ++ target tokens;
// returns logits [len x V] where row i conditions on ids[0..i] and the memory.
TensorPtr forward_teacher_forced(Tape& t, const TrimodalModel& model, const FusedMemory& memory,
                                 const std::vector<int>& decoder_input_ids);

// Greedy or length-penalized beam decoding, deterministic tie-breaking by
// lowest token id. Returns generated token ids without BOS/EOS.
std::vector<int> generate(const TrimodalModel& model, const MultimodalInput& input,
                          const GenerationConfig& cfg);

std::int64_t count_parameters(const TrimodalModel& model, bool trainable_only);

// Builds the encoder input for an example: text segment is prompt ++
// input_text; ablate flags drop the corresponding modality.
MultimodalInput input_from_example(const TrainingExample& ex, const Vocab& vocab,
                                   bool ablate_vision = false, bool ablate_speech = false);

// Mean cross-entropy of the example's target (tokens ++ EOS) under teacher
// forcing, and the number of scored positions.
struct ExampleLoss {
    TensorPtr loss;
    std::int64_t positions = 0;
};
ExampleLoss example_loss(Tape& t, const TrimodalModel& model, const TrainingExample& ex,
                         const Vocab& vocab, bool ablate_vision = false,
                         bool ablate_speech = false);

} // namespace vls
