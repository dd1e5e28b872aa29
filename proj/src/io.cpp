// SPDX-License-Identifier: Apache-2.0
#include "vls/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vls/objectives.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vls {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', '1'};

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

void atomic_write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw integrity_error("cannot open for writing: " + tmp);
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) throw integrity_error("short write to: " + tmp);
    }
    fs::rename(tmp, path);
}

std::string hash_bytes_hex(const void* data, std::size_t n) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(data, n)));
    return std::string(buf);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw integrity_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void save_tensor_file(const std::string& path, const std::vector<std::int64_t>& shape,
                      const std::vector<real>& data) {
    std::int64_t numel = 1;
    for (auto d : shape) {
        if (d <= 0) throw usage_error("save_tensor_file: non-positive dimension");
        numel *= d;
    }
    if (numel != static_cast<std::int64_t>(data.size())) {
        throw usage_error("save_tensor_file: payload does not match shape");
    }
    std::string out;
    out.append(kMagic, 4);
    out.push_back(sizeof(real) == 8 ? char(1) : char(0));
    out.push_back(static_cast<char>(shape.size()));
    for (auto d : shape) put_u32le(out, static_cast<std::uint32_t>(d));
    // values are little-endian on every platform this targets
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(real));
    atomic_write_file(path, out);
}

TensorData load_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw integrity_error("cannot read tensor file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw integrity_error("tensor file '" + path + "' has a bad magic header");
    }
    const int dtype = bytes[4];
    const int rank = static_cast<unsigned char>(bytes[5]);
    if (dtype != 0 && dtype != 1) {
        throw integrity_error("tensor file '" + path + "' has unknown dtype code");
    }
    const std::size_t header = 6 + 4 * static_cast<std::size_t>(rank);
    if (bytes.size() < header) {
        throw integrity_error("tensor file '" + path + "' is truncated in the shape block");
    }
    TensorData out;
    std::int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        const auto d = get_u32le(reinterpret_cast<const unsigned char*>(bytes.data()) + 6 + 4 * i);
        out.shape.push_back(static_cast<std::int64_t>(d));
        numel *= d;
    }
    const std::size_t width = dtype == 1 ? 8 : 4;
    if (bytes.size() != header + static_cast<std::size_t>(numel) * width) {
        throw integrity_error("tensor file '" + path + "' payload length mismatch: have " +
                              std::to_string(bytes.size() - header) + " bytes, expected " +
                              std::to_string(numel * static_cast<std::int64_t>(width)));
    }
    out.data.resize(static_cast<std::size_t>(numel));
    const char* payload = bytes.data() + header;
    if (dtype == 1) {
        for (std::int64_t i = 0; i < numel; ++i) {
            double v;
            std::memcpy(&v, payload + i * 8, 8);
            out.data[static_cast<std::size_t>(i)] = static_cast<real>(v);
        }
    } else {
        for (std::int64_t i = 0; i < numel; ++i) {
            float v;
            std::memcpy(&v, payload + i * 4, 4);
            out.data[static_cast<std::size_t>(i)] = static_cast<real>(v);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// records
// ---------------------------------------------------------------------------

std::vector<RawRecord> load_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw integrity_error("cannot read record file: " + path);
    std::vector<RawRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw schema_error(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
        RawRecord rec;
        if (!j.contains("task") || !j["task"].is_string()) {
            throw schema_error(path + ":" + std::to_string(lineno) + ": record missing field: task");
        }
        rec.task = j["task"].get<std::string>();
        auto opt_str = [&](const char* key) -> std::optional<std::string> {
            if (j.contains(key) && !j[key].is_null()) return j[key].get<std::string>();
            return std::nullopt;
        };
        rec.text_input = opt_str("text_input");
        rec.text_target = j.value("text_target", std::string());
        rec.style = opt_str("style");
        rec.label = opt_str("label");
        rec.image_path = opt_str("image");
        rec.video_path = opt_str("video");
        rec.audio_path = opt_str("audio");
        out.push_back(std::move(rec));
    }
    return out;
}

void save_records(const std::string& path, const std::vector<RawRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        json j;
        j["task"] = rec.task;
        if (rec.text_input) j["text_input"] = *rec.text_input;
        j["text_target"] = rec.text_target;
        if (rec.style) j["style"] = *rec.style;
        if (rec.label) j["label"] = *rec.label;
        if (rec.image_path) j["image"] = *rec.image_path;
        if (rec.video_path) j["video"] = *rec.video_path;
        if (rec.audio_path) j["audio"] = *rec.audio_path;
        out += j.dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

void attach_record_media(RawRecord& record, const std::string& base_dir) {
    auto resolve = [&](const std::string& rel) { return (fs::path(base_dir) / rel).string(); };
    if (record.image_path) {
        auto td = load_tensor_file(resolve(*record.image_path));
        if (td.shape.size() != 3) throw schema_error("image tensor must be rank 3 [H W C]");
        ImageTensor img;
        img.height = td.shape[0];
        img.width = td.shape[1];
        img.channels = td.shape[2];
        img.values = std::move(td.data);
        record.image = std::move(img);
    }
    if (record.video_path) {
        auto td = load_tensor_file(resolve(*record.video_path));
        if (td.shape.size() != 4) throw schema_error("video tensor must be rank 4 [T H W C]");
        VideoTensor vid;
        vid.frames = td.shape[0];
        vid.height = td.shape[1];
        vid.width = td.shape[2];
        vid.channels = td.shape[3];
        vid.values = std::move(td.data);
        record.video = std::move(vid);
    }
    if (record.audio_path) {
        auto td = load_tensor_file(resolve(*record.audio_path));
        if (td.shape.size() != 1) throw schema_error("audio tensor must be rank 1 [samples]");
        AudioTensor audio;
        audio.samples = std::move(td.data);
        record.audio = std::move(audio);
    }
}

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

namespace {

struct KeyDoc {
    const char* key;
    const char* doc;
};

// Every accepted key with its default baked into RunConfig's initializers.
constexpr KeyDoc kKeyTable[] = {
    {"d_text", "joint encoder / decoder width (default 64)"},
    {"joint_layers", "joint encoder depth (default 4)"},
    {"dec_layers", "decoder depth (default 4)"},
    {"heads", "attention heads in the joint encoder and decoder (default 4)"},
    {"ffn_mult", "feed-forward width multiplier (default 4)"},
    {"max_text_len", "encoder text segment limit (default 64)"},
    {"max_target_len", "decoder length limit incl. BOS (default 48)"},
    {"vocab_max", "vocabulary size cap when building (default 512)"},
    {"patch", "vision patch edge (default 8)"},
    {"temporal_stride", "video tokenizer temporal stride (default 2)"},
    {"d_mod", "modality encoder width (default 64)"},
    {"enc_layers", "modality encoder depth (default 2)"},
    {"enc_heads", "modality encoder heads (default 4)"},
    {"max_vision_len", "vision positional table size (default 256)"},
    {"audio_stride1", "speech conv stage one stride (default 8)"},
    {"audio_stride2", "speech conv stage two stride (default 20)"},
    {"audio_c1", "speech conv stage one channels (default 32)"},
    {"rel_buckets", "relative position bias buckets (default 32)"},
    {"rel_max_distance", "relative bias log-bucket range (default 128)"},
    {"use_rel_bias", "enable gated relative position bias (default true)"},
    {"max_speech_len", "speech positional table size (default 256)"},
    {"lr", "Adam learning rate (default 1e-3)"},
    {"batch_size", "examples per micro-batch (default 8)"},
    {"accumulation_steps", "micro-batches per optimizer step (default 1)"},
    {"max_steps", "optimizer steps to run (default 200)"},
    {"warmup_steps", "linear LR warmup steps (default 100)"},
    {"clip_norm", "global gradient norm clip, <=0 disables (default 1.0)"},
    {"esw_s", "ESW smoothing exponent (default 0.5)"},
    {"seed", "run seed (default 42)"},
    {"freeze_vision", "freeze the vision encoder (default: true for pretrain, false for finetune)"},
    {"freeze_speech", "freeze the speech encoder (default: true for pretrain, false for finetune)"},
    {"ablate_vision", "drop the vision segment from every input (default false)"},
    {"ablate_speech", "drop the speech segment from every input (default false)"},
    {"mask_rate", "span corruption rate for reconstruction tasks (default 0.15)"},
    {"mean_span_len", "mean corrupted span length (default 3)"},
    {"tasks", "comma-separated task subset; empty = all record files present"},
    {"data_dir", "directory of <Task>.jsonl record files"},
    {"out_dir", "output directory for checkpoints and logs"},
    {"vocab_file", "vocabulary path (default data_dir/vocab.txt)"},
    {"gen_mode", "generation mode: greedy | beam (default greedy)"},
    {"beam_width", "beam width (default 4)"},
    {"gen_max_len", "max generated tokens (default 32)"},
    {"length_penalty", "beam length penalty exponent (default 1.0)"},
    {"checkpoint_every", "periodic checkpoint interval in steps, 0 = final only"},
};

bool known_key(const std::string& key) {
    for (const auto& kd : kKeyTable) {
        if (key == kd.key) return true;
    }
    return false;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw usage_error("config key '" + key + "' expects true/false, got '" + value + "'");
}

} // namespace

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
    RunConfig c;
    for (const auto& [key, value] : kv) {
        if (!known_key(key)) throw usage_error("unknown config key: " + key);
        try {
            if (key == "d_text") c.d_text = std::stoll(value);
            else if (key == "joint_layers") c.joint_layers = std::stoi(value);
            else if (key == "dec_layers") c.dec_layers = std::stoi(value);
            else if (key == "heads") c.heads = std::stoi(value);
            else if (key == "ffn_mult") c.ffn_mult = std::stoll(value);
            else if (key == "max_text_len") c.max_text_len = std::stoll(value);
            else if (key == "max_target_len") c.max_target_len = std::stoll(value);
            else if (key == "vocab_max") c.vocab_max = std::stoll(value);
            else if (key == "patch") c.patch = std::stoll(value);
            else if (key == "temporal_stride") c.temporal_stride = std::stoll(value);
            else if (key == "d_mod") c.d_mod = std::stoll(value);
            else if (key == "enc_layers") c.enc_layers = std::stoi(value);
            else if (key == "enc_heads") c.enc_heads = std::stoi(value);
            else if (key == "max_vision_len") c.max_vision_len = std::stoll(value);
            else if (key == "audio_stride1") c.audio_stride1 = std::stoll(value);
            else if (key == "audio_stride2") c.audio_stride2 = std::stoll(value);
            else if (key == "audio_c1") c.audio_c1 = std::stoll(value);
            else if (key == "rel_buckets") c.rel_buckets = std::stoi(value);
            else if (key == "rel_max_distance") c.rel_max_distance = std::stoi(value);
            else if (key == "use_rel_bias") c.use_rel_bias = parse_bool(key, value);
            else if (key == "max_speech_len") c.max_speech_len = std::stoll(value);
            else if (key == "lr") c.lr = std::stod(value);
            else if (key == "batch_size") c.batch_size = std::stoi(value);
            else if (key == "accumulation_steps") c.accumulation_steps = std::stoi(value);
            else if (key == "max_steps") c.max_steps = std::stoll(value);
            else if (key == "warmup_steps") c.warmup_steps = std::stoll(value);
            else if (key == "clip_norm") c.clip_norm = std::stod(value);
            else if (key == "esw_s") c.esw_s = std::stod(value);
            else if (key == "seed") c.seed = std::stoull(value);
            else if (key == "freeze_vision") c.freeze_vision = parse_bool(key, value);
            else if (key == "freeze_speech") c.freeze_speech = parse_bool(key, value);
            else if (key == "ablate_vision") c.ablate_vision = parse_bool(key, value);
            else if (key == "ablate_speech") c.ablate_speech = parse_bool(key, value);
            else if (key == "mask_rate") c.mask_rate = std::stod(value);
            else if (key == "mean_span_len") c.mean_span_len = std::stod(value);
            else if (key == "tasks") c.tasks = value;
            else if (key == "data_dir") c.data_dir = value;
            else if (key == "out_dir") c.out_dir = value;
            else if (key == "vocab_file") c.vocab_file = value;
            else if (key == "gen_mode") c.gen_mode = value;
            else if (key == "beam_width") c.beam_width = std::stoi(value);
            else if (key == "gen_max_len") c.gen_max_len = std::stoll(value);
            else if (key == "length_penalty") c.length_penalty = std::stod(value);
            else if (key == "checkpoint_every") c.checkpoint_every = std::stoll(value);
        } catch (const std::invalid_argument&) {
            throw usage_error("config key '" + key + "' has a malformed value '" + value + "'");
        } catch (const std::out_of_range&) {
            throw usage_error("config key '" + key + "' has an out-of-range value '" + value + "'");
        }
    }
    if (c.gen_mode != "greedy" && c.gen_mode != "beam") {
        throw usage_error("gen_mode must be greedy or beam, got '" + c.gen_mode + "'");
    }
    return c;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw usage_error("cannot read config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        bool blank = true;
        for (char ch : line) blank = blank && std::isspace(static_cast<unsigned char>(ch));
        if (blank) continue;
        if (eq == std::string::npos) {
            throw usage_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (kv.count(key)) {
            throw usage_error(path + ":" + std::to_string(lineno) + ": duplicate key " + key);
        }
        kv[key] = value;
    }
    return from_kv(kv);
}

std::map<std::string, std::string> RunConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    auto fmt = [](double v) {
        std::ostringstream ss;
        ss.precision(17);
        ss << v;
        return ss.str();
    };
    kv["d_text"] = std::to_string(d_text);
    kv["joint_layers"] = std::to_string(joint_layers);
    kv["dec_layers"] = std::to_string(dec_layers);
    kv["heads"] = std::to_string(heads);
    kv["ffn_mult"] = std::to_string(ffn_mult);
    kv["max_text_len"] = std::to_string(max_text_len);
    kv["max_target_len"] = std::to_string(max_target_len);
    kv["vocab_max"] = std::to_string(vocab_max);
    kv["patch"] = std::to_string(patch);
    kv["temporal_stride"] = std::to_string(temporal_stride);
    kv["d_mod"] = std::to_string(d_mod);
    kv["enc_layers"] = std::to_string(enc_layers);
    kv["enc_heads"] = std::to_string(enc_heads);
    kv["max_vision_len"] = std::to_string(max_vision_len);
    kv["audio_stride1"] = std::to_string(audio_stride1);
    kv["audio_stride2"] = std::to_string(audio_stride2);
    kv["audio_c1"] = std::to_string(audio_c1);
    kv["rel_buckets"] = std::to_string(rel_buckets);
    kv["rel_max_distance"] = std::to_string(rel_max_distance);
    kv["use_rel_bias"] = use_rel_bias ? "true" : "false";
    kv["max_speech_len"] = std::to_string(max_speech_len);
    kv["lr"] = fmt(lr);
    kv["batch_size"] = std::to_string(batch_size);
    kv["accumulation_steps"] = std::to_string(accumulation_steps);
    kv["max_steps"] = std::to_string(max_steps);
    kv["warmup_steps"] = std::to_string(warmup_steps);
    kv["clip_norm"] = fmt(clip_norm);
    kv["esw_s"] = fmt(esw_s);
    kv["seed"] = std::to_string(seed);
    if (freeze_vision) kv["freeze_vision"] = *freeze_vision ? "true" : "false";
    if (freeze_speech) kv["freeze_speech"] = *freeze_speech ? "true" : "false";
    kv["ablate_vision"] = ablate_vision ? "true" : "false";
    kv["ablate_speech"] = ablate_speech ? "true" : "false";
    kv["mask_rate"] = fmt(mask_rate);
    kv["mean_span_len"] = fmt(mean_span_len);
    if (!tasks.empty()) kv["tasks"] = tasks;
    if (!data_dir.empty()) kv["data_dir"] = data_dir;
    if (!out_dir.empty()) kv["out_dir"] = out_dir;
    if (!vocab_file.empty()) kv["vocab_file"] = vocab_file;
    kv["gen_mode"] = gen_mode;
    kv["beam_width"] = std::to_string(beam_width);
    kv["gen_max_len"] = std::to_string(gen_max_len);
    kv["length_penalty"] = fmt(length_penalty);
    kv["checkpoint_every"] = std::to_string(checkpoint_every);
    return kv;
}

ModelConfig RunConfig::model_config(std::int64_t vocab_size) const {
    ModelConfig mc;
    mc.d_text = d_text;
    mc.joint_layers = joint_layers;
    mc.dec_layers = dec_layers;
    mc.heads = heads;
    mc.ffn_mult = ffn_mult;
    mc.max_text_len = max_text_len;
    mc.max_target_len = max_target_len;
    mc.vocab_size = vocab_size;
    mc.seed = seed;
    mc.vision.patch = patch;
    mc.vision.temporal_stride = temporal_stride;
    mc.vision.d_mod = d_mod;
    mc.vision.layers = enc_layers;
    mc.vision.heads = enc_heads;
    mc.vision.max_len = max_vision_len;
    mc.speech.stride1 = audio_stride1;
    mc.speech.stride2 = audio_stride2;
    mc.speech.c1 = audio_c1;
    mc.speech.d_mod = d_mod;
    mc.speech.layers = enc_layers;
    mc.speech.heads = enc_heads;
    mc.speech.max_len = max_speech_len;
    mc.speech.rel_buckets = rel_buckets;
    mc.speech.rel_max_distance = rel_max_distance;
    mc.speech.use_rel_bias = use_rel_bias;
    return mc;
}

TrainConfig RunConfig::train_config(bool default_freeze) const {
    TrainConfig tc;
    tc.lr = lr;
    tc.batch_size = batch_size;
    tc.accumulation_steps = accumulation_steps;
    tc.max_steps = max_steps;
    tc.warmup_steps = warmup_steps;
    tc.clip_norm = clip_norm;
    tc.esw_s = esw_s;
    tc.seed = seed;
    tc.freeze_vision = freeze_vision.value_or(default_freeze);
    tc.freeze_speech = freeze_speech.value_or(default_freeze);
    tc.ablate_vision = ablate_vision;
    tc.ablate_speech = ablate_speech;
    return tc;
}

GenerationConfig RunConfig::generation_config() const {
    GenerationConfig gc;
    gc.mode = gen_mode == "beam" ? GenerationConfig::Mode::Beam : GenerationConfig::Mode::Greedy;
    gc.beam_width = beam_width;
    gc.max_len = gen_max_len;
    gc.length_penalty = length_penalty;
    return gc;
}

DatasetPool load_dataset_pool(const RunConfig& cfg, const Vocab& vocab) {
    if (cfg.data_dir.empty()) throw usage_error("config: data_dir is required");
    std::vector<std::string> task_names;
    if (!cfg.tasks.empty()) {
        std::istringstream ss(cfg.tasks);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) task_names.push_back(item);
        }
    } else {
        for (TaskKind t : kAllTasks) {
            if (fs::exists(fs::path(cfg.data_dir) / (task_name(t) + ".jsonl"))) {
                task_names.push_back(task_name(t));
            }
        }
    }
    if (task_names.empty()) {
        throw usage_error("no task record files found under " + cfg.data_dir);
    }

    std::vector<std::string> missing;
    for (const auto& name : task_names) {
        if (!fs::exists(fs::path(cfg.data_dir) / (name + ".jsonl"))) {
            missing.push_back((fs::path(cfg.data_dir) / (name + ".jsonl")).string());
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += "\n  " + m;
        throw usage_error("missing dataset files:" + list);
    }

    DatasetPool pool;
    for (const auto& name : task_names) {
        const TaskKind task = task_from_name(name);
        auto records = load_records((fs::path(cfg.data_dir) / (name + ".jsonl")).string());
        DatasetPool::Dataset ds;
        ds.name = name;
        for (std::size_t i = 0; i < records.size(); ++i) {
            attach_record_media(records[i], cfg.data_dir);
            SpanMaskSpec mask;
            mask.mask_rate = cfg.mask_rate;
            mask.mean_span_len = cfg.mean_span_len;
            mask.seed = cfg.seed ^ (0x100000001b3ull * (i + 1));
            ds.examples.push_back(build_example(records[i], task, vocab, mask));
        }
        pool.datasets.push_back(std::move(ds));
    }
    pool.validate();
    return pool;
}

} // namespace vls
