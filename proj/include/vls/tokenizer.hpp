// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vls/common.hpp"
#include "vls/tasks.hpp"

namespace vls {

// Reserved token ids. Sentinels mark masked spans in span-corruption targets.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;
constexpr int kNumSentinels = 32;
constexpr int kFirstSentinelId = 4;
constexpr int kNumReserved = kFirstSentinelId + kNumSentinels;

inline int sentinel_id(int i) { return kFirstSentinelId + i; }
inline bool is_sentinel(int id) {
    return id >= kFirstSentinelId && id < kFirstSentinelId + kNumSentinels;
}
inline int sentinel_index(int id) { return id - kFirstSentinelId; }
std::string sentinel_token(int i); // "<extra_i>"

// Whitespace-token vocabulary with dense ids. Reserved ids occupy 0..35 and
// are never reassigned. Immutable after construction.
class Vocab {
public:
    Vocab(); // reserved tokens only

    // Keeps the most frequent whitespace tokens up to max_size, ties broken
    // lexicographically. Deterministic for a fixed corpus.
    static Vocab build(const std::vector<std::string>& corpus, std::size_t max_size);

    // Whitespace split; unknown tokens map to UNK. No BOS/EOS framing.
    std::vector<int> encode(const std::string& text) const;
    // Tokens joined by single spaces; PAD/BOS/EOS dropped, sentinels and UNK
    // rendered as their literal token strings.
    std::string decode(const std::vector<int>& ids) const;

    int id_of(const std::string& token) const; // kUnkId when absent
    const std::string& token_of(int id) const; // usage_error when out of range
    std::size_t size() const { return tokens_.size(); }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    void push(const std::string& tok);
};

std::vector<std::string> split_whitespace(const std::string& text);

// Byte-exact task prompts. The dialogue prompt carries a {style} placeholder
// substituted by the styled overload.
const std::string& prompt_for(TaskKind task);
std::string prompt_for(TaskKind task, const std::string& style);

} // namespace vls
