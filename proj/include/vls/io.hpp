// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vls/common.hpp"
#include "vls/records.hpp"
#include "vls/trainer.hpp"

namespace vls {

// Binary tensor file: magic "MMT1", dtype byte (0 = f32, 1 = f64), rank byte,
// rank x u32 little-endian dims, row-major little-endian payload.
struct TensorData {
    std::vector<std::int64_t> shape;
    std::vector<real> data; // converted to the build's precision on load
};

void save_tensor_file(const std::string& path, const std::vector<std::int64_t>& shape,
                      const std::vector<real>& data);
TensorData load_tensor_file(const std::string& path);

// All file writes go through a temp-then-rename so interrupted runs never
// leave torn files.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string hash_bytes_hex(const void* data, std::size_t n);
std::string read_text_file(const std::string& path);

// Line-delimited JSON records.
std::vector<RawRecord> load_records(const std::string& path);
void save_records(const std::string& path, const std::vector<RawRecord>& records);
// Resolves the record's tensor-file paths against base_dir and attaches the
// decoded payloads.
void attach_record_media(RawRecord& record, const std::string& base_dir);

// Plain-text key = value configuration. Unknown keys are rejected; every key
// has a documented default (see config key table in io.cpp).
struct RunConfig {
    // model dims
    std::int64_t d_text = 64;
    int joint_layers = 4;
    int dec_layers = 4;
    int heads = 4;
    std::int64_t ffn_mult = 4;
    std::int64_t max_text_len = 64;
    std::int64_t max_target_len = 48;
    std::int64_t vocab_max = 512;
    // vision encoder
    std::int64_t patch = 8;
    std::int64_t temporal_stride = 2;
    std::int64_t d_mod = 64;
    int enc_layers = 2;
    int enc_heads = 4;
    std::int64_t max_vision_len = 256;
    // speech encoder
    std::int64_t audio_stride1 = 8;
    std::int64_t audio_stride2 = 20;
    std::int64_t audio_c1 = 32;
    int rel_buckets = 32;
    int rel_max_distance = 128;
    bool use_rel_bias = true;
    std::int64_t max_speech_len = 256;
    // training
    double lr = 1e-3;
    int batch_size = 8;
    int accumulation_steps = 1;
    std::int64_t max_steps = 200;
    std::int64_t warmup_steps = 100;
    double clip_norm = 1.0;
    double esw_s = 0.5;
    std::uint64_t seed = 42;
    std::optional<bool> freeze_vision; // unset -> command default
    std::optional<bool> freeze_speech;
    bool ablate_vision = false;
    bool ablate_speech = false;
    double mask_rate = 0.15;
    double mean_span_len = 3.0;
    std::string tasks; // comma-separated subset; empty = all present
    // paths
    std::string data_dir;
    std::string out_dir;
    std::string vocab_file; // default data_dir/vocab.txt
    // generation
    std::string gen_mode = "greedy"; // greedy | beam
    int beam_width = 4;
    std::int64_t gen_max_len = 32;
    double length_penalty = 1.0;
    // logging / checkpoints
    std::int64_t checkpoint_every = 0; // 0 = final only

    static RunConfig parse_file(const std::string& path);
    static RunConfig from_kv(const std::map<std::string, std::string>& kv);
    std::map<std::string, std::string> to_kv() const;

    ModelConfig model_config(std::int64_t vocab_size) const;
    TrainConfig train_config(bool default_freeze) const;
    GenerationConfig generation_config() const;
};

// Loads the per-task record files named by the task subset (all *.jsonl task
// files under data_dir when the subset is empty) and builds TrainingExamples,
// masking reconstruction tasks with per-record seeds.
DatasetPool load_dataset_pool(const RunConfig& cfg, const Vocab& vocab);

} // namespace vls
