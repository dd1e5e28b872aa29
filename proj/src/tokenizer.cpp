// SPDX-License-Identifier: Apache-2.0
#include "vls/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace vls {

const std::string& task_name(TaskKind task) {
    static const std::string names[] = {
        "ImageCaptioning",        "VideoCaptioning",
        "VisionQA",               "VisionTextReconstruction",
        "SpeechTranscription",    "SpeechSentiment",
        "SpeechEmotion",          "SpeechTextReconstruction",
        "LanguageReconstruction", "MultimodalSummarization",
        "DialogueGeneration",     "ClipSentiment",
    };
    return names[static_cast<int>(task)];
}

TaskKind task_from_name(const std::string& name) {
    for (TaskKind t : kAllTasks) {
        if (task_name(t) == name) return t;
    }
    throw schema_error("unknown task: " + name);
}

std::string sentinel_token(int i) {
    return "<extra_" + std::to_string(i) + ">";
}

std::vector<std::string> split_whitespace(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

void Vocab::push(const std::string& tok) {
    ids_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(tok);
}

Vocab::Vocab() {
    push("<pad>");
    push("<bos>");
    push("<eos>");
    push("<unk>");
    for (int i = 0; i < kNumSentinels; ++i) push(sentinel_token(i));
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t max_size) {
    if (max_size <= static_cast<std::size_t>(kNumReserved)) {
        throw usage_error("build_vocab: max_size " + std::to_string(max_size) +
                          " must exceed the " + std::to_string(kNumReserved) +
                          " reserved tokens");
    }
    Vocab v;
    std::map<std::string, std::int64_t> freq; // ordered map keeps iteration deterministic
    for (const auto& text : corpus) {
        for (auto& tok : split_whitespace(text)) {
            if (v.ids_.count(tok)) continue; // reserved literals keep their ids
            ++freq[tok];
        }
    }
    std::vector<std::pair<std::string, std::int64_t>> by_freq(freq.begin(), freq.end());
    std::stable_sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t room = max_size - static_cast<std::size_t>(kNumReserved);
    for (std::size_t i = 0; i < by_freq.size() && i < room; ++i) {
        v.push(by_freq[i].first);
    }
    return v;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> out;
    for (auto& tok : split_whitespace(text)) {
        auto it = ids_.find(tok);
        out.push_back(it == ids_.end() ? kUnkId : it->second);
    }
    return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        const std::string& tok = token_of(id);
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

int Vocab::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token_of(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size())) {
        throw usage_error("vocab: id " + std::to_string(id) + " out of range [0," +
                          std::to_string(tokens_.size()) + ")");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw integrity_error("cannot write vocab file: " + path);
    for (const auto& tok : tokens_) f << tok << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw integrity_error("cannot read vocab file: " + path);
    Vocab v;
    std::string line;
    std::size_t at = 0;
    while (std::getline(f, line)) {
        if (at < static_cast<std::size_t>(kNumReserved)) {
            if (line != v.tokens_[at]) {
                throw integrity_error("vocab file " + path + ": reserved token " +
                                      std::to_string(at) + " is '" + line + "', expected '" +
                                      v.tokens_[at] + "'");
            }
        } else {
            v.push(line);
        }
        ++at;
    }
    if (at < static_cast<std::size_t>(kNumReserved)) {
        throw integrity_error("vocab file " + path + ": truncated reserved block");
    }
    return v;
}

const std::string& prompt_for(TaskKind task) {
    static const std::unordered_map<int, std::string> prompts = {
        {static_cast<int>(TaskKind::ImageCaptioning), "Generate the caption for this image: "},
        {static_cast<int>(TaskKind::VideoCaptioning), "Generate the caption for this video: "},
        {static_cast<int>(TaskKind::VisionQA), "Answer the following question based on the image: "},
        {static_cast<int>(TaskKind::VisionTextReconstruction),
         "Reconstruct the following text based on the image: "},
        {static_cast<int>(TaskKind::SpeechTranscription), "Transcribe the speech utterance to text: "},
        {static_cast<int>(TaskKind::SpeechSentiment), "Predict the sentiment of this segment: "},
        {static_cast<int>(TaskKind::SpeechEmotion), "Predict the emotion of this segment: "},
        {static_cast<int>(TaskKind::SpeechTextReconstruction),
         "Reconstruct the following text based on the speech: "},
        {static_cast<int>(TaskKind::LanguageReconstruction),
         "Reconstruct masked spans in the following text: "},
        {static_cast<int>(TaskKind::MultimodalSummarization),
         "Summarize this article with the images: "},
        {static_cast<int>(TaskKind::DialogueGeneration),
         "Generate the response for the dialogue in {style} style: "},
        {static_cast<int>(TaskKind::ClipSentiment), "Predict the sentiment of this clip: "},
    };
    auto it = prompts.find(static_cast<int>(task));
    if (it == prompts.end()) throw usage_error("no prompt registered for task");
    return it->second;
}

std::string prompt_for(TaskKind task, const std::string& style) {
    std::string p = prompt_for(task);
    const std::string ph = "{style}";
    const auto pos = p.find(ph);
    if (pos != std::string::npos) p.replace(pos, ph.size(), style);
    return p;
}

} // namespace vls
