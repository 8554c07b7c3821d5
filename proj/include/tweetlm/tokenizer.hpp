#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tweetlm::bpe {

// Reserved ids. The word-boundary marker right after them is an ordinary
// token (it merges and may be masked); only ids below kNumSpecials are
// special.
inline constexpr int32_t kPad = 0;
inline constexpr int32_t kCls = 1;
inline constexpr int32_t kSep = 2;
inline constexpr int32_t kMask = 3;
inline constexpr int32_t kUnk = 4;
inline constexpr int32_t kUsr = 5;
inline constexpr int32_t kUrl = 6;
inline constexpr int32_t kNumSpecials = 7;
inline constexpr int32_t kMarker = 7;  // id of the word-initial marker token

extern const std::array<std::string, kNumSpecials> kSpecialTokens;

// Marker glyph prefixed to every word so decode can restore spaces.
extern const std::string kMarkerToken;  // U+2581

// Base vocabulary: specials + marker + all 256 bytes.
inline constexpr int64_t kBaseVocab = kNumSpecials + 1 + 256;

struct TokenSpan {
  int32_t start = 0;
  int32_t end = 0;  // byte offsets into the source text; zero-width for specials
};

struct TokenSequence {
  std::vector<int32_t> ids;
  std::vector<TokenSpan> offsets;
};

// Byte-level BPE vocabulary. Token strings store bytes through a fixed
// byte-to-printable-codepoint bijection so vocab files stay one clean token
// per line.
class Vocabulary {
 public:
  int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
  const std::string& token(int32_t id) const;
  int32_t id_of(std::string_view token) const;  // -1 when absent
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  static bool is_special(int32_t id) { return id >= 0 && id < kNumSpecials; }

  // Greedy pair-merge training. Counts adjacent symbol pairs over the
  // whitespace-split corpus (specials never pair), repeatedly merges the most
  // frequent pair (ties broken by lexicographic token strings) until
  // target_vocab is reached or no pair has min_frequency occurrences.
  static Vocabulary train(const std::vector<std::string>& corpus, int64_t target_vocab,
                          int64_t min_frequency = 2);

  TokenSequence encode(std::string_view text, bool add_cls_sep) const;

  // Inverse of encode up to whitespace normalization: words come back joined
  // by single spaces. strip drops <pad>/<cls>/<sep>.
  std::string decode(const std::vector<int32_t>& ids, bool strip = true) const;

  // vocab.txt (token per line, line number = id) and merges.txt ("left right"
  // per line in training order).
  void save(const std::string& dir) const;
  static Vocabulary load(const std::string& dir);

 private:
  Vocabulary() = default;
  void init_base();
  int32_t intern(const std::string& token);  // existing id or new one
  void index_merges();

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int32_t> token_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
  // (left_id << 32 | right_id) -> {rank, merged_id}
  std::unordered_map<uint64_t, std::pair<int32_t, int32_t>> merge_rank_;
};

// Byte <-> printable codepoint bijection used for token strings.
uint32_t byte_to_codepoint(uint8_t b);
int32_t codepoint_to_byte(uint32_t cp);  // -1 when not in the image
std::string byte_token(uint8_t b);       // UTF-8 of byte_to_codepoint(b)

}  // namespace tweetlm::bpe
