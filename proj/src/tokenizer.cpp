#include "tweetlm/tokenizer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "tweetlm/errors.hpp"

namespace tweetlm::bpe {

const std::array<std::string, kNumSpecials> kSpecialTokens = {
    "<pad>", "<cls>", "<sep>", "<mask>", "<unk>", "<usr>", "<url>"};

const std::string kMarkerToken = "\xe2\x96\x81";  // U+2581

namespace {

bool ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::string encode_utf8(uint32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

// Decodes one UTF-8 codepoint, advancing i. Returns 0xFFFD on bad bytes.
uint32_t next_codepoint(std::string_view s, size_t& i) {
  const auto b0 = static_cast<uint8_t>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  if ((b0 >> 5) == 0x6 && i + 1 < s.size()) {
    const uint32_t cp = ((b0 & 0x1F) << 6) | (static_cast<uint8_t>(s[i + 1]) & 0x3F);
    i += 2;
    return cp;
  }
  if ((b0 >> 4) == 0xE && i + 2 < s.size()) {
    const uint32_t cp = ((b0 & 0x0F) << 12) | ((static_cast<uint8_t>(s[i + 1]) & 0x3F) << 6) |
                        (static_cast<uint8_t>(s[i + 2]) & 0x3F);
    i += 3;
    return cp;
  }
  ++i;
  return 0xFFFD;
}

struct ByteMap {
  std::array<uint32_t, 256> to_cp{};
  std::unordered_map<uint32_t, uint8_t> to_byte;

  ByteMap() {
    // printable single-codepoint bytes keep their value; the rest are shifted
    // past 0xFF so every token string stays printable
    auto printable = [](int b) {
      return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
    };
    uint32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      const uint32_t cp = printable(b) ? static_cast<uint32_t>(b) : next++;
      to_cp[static_cast<size_t>(b)] = cp;
      to_byte.emplace(cp, static_cast<uint8_t>(b));
    }
  }
};

const ByteMap& byte_map() {
  static const ByteMap m;
  return m;
}

uint64_t pair_key(int32_t a, int32_t b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

// A word split into special-token literals and raw byte stretches.
struct Segment {
  int32_t special_id = -1;  // >= 0 for a special literal
  size_t begin = 0;         // byte offsets within the word
  size_t end = 0;
};

std::vector<Segment> segment_word(std::string_view word) {
  std::vector<Segment> segs;
  size_t raw_begin = 0;
  size_t p = 0;
  while (p < word.size()) {
    int32_t matched = -1;
    size_t matched_len = 0;
    if (word[p] == '<') {
      for (int32_t s = 0; s < kNumSpecials; ++s) {
        const std::string& lit = kSpecialTokens[static_cast<size_t>(s)];
        if (word.compare(p, lit.size(), lit) == 0) {
          matched = s;
          matched_len = lit.size();
          break;
        }
      }
    }
    if (matched >= 0) {
      if (raw_begin < p) segs.push_back({-1, raw_begin, p});
      segs.push_back({matched, p, p + matched_len});
      p += matched_len;
      raw_begin = p;
    } else {
      ++p;
    }
  }
  if (raw_begin < word.size()) segs.push_back({-1, raw_begin, word.size()});
  return segs;
}

struct Word {
  std::vector<int32_t> syms;
  int64_t count = 0;
};

// Initial symbol sequence: marker, then per segment either the special id or
// one base token per byte.
std::vector<int32_t> initial_symbols(std::string_view word,
                                     const std::unordered_map<std::string, int32_t>& tok2id) {
  std::vector<int32_t> syms;
  syms.push_back(kMarker);
  for (const Segment& seg : segment_word(word)) {
    if (seg.special_id >= 0) {
      syms.push_back(seg.special_id);
      continue;
    }
    for (size_t i = seg.begin; i < seg.end; ++i) {
      const std::string tok = byte_token(static_cast<uint8_t>(word[i]));
      auto it = tok2id.find(tok);
      syms.push_back(it == tok2id.end() ? kUnk : it->second);
    }
  }
  return syms;
}

}  // namespace

uint32_t byte_to_codepoint(uint8_t b) { return byte_map().to_cp[b]; }

int32_t codepoint_to_byte(uint32_t cp) {
  auto it = byte_map().to_byte.find(cp);
  return it == byte_map().to_byte.end() ? -1 : static_cast<int32_t>(it->second);
}

std::string byte_token(uint8_t b) { return encode_utf8(byte_to_codepoint(b)); }

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of range [0," +
                            std::to_string(size()) + ")");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

int32_t Vocabulary::id_of(std::string_view tok) const {
  auto it = token_to_id_.find(std::string(tok));
  return it == token_to_id_.end() ? -1 : it->second;
}

void Vocabulary::init_base() {
  for (const std::string& s : kSpecialTokens) intern(s);
  intern(kMarkerToken);
  for (int b = 0; b < 256; ++b) intern(byte_token(static_cast<uint8_t>(b)));
}

int32_t Vocabulary::intern(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const auto id = static_cast<int32_t>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

void Vocabulary::index_merges() {
  merge_rank_.clear();
  for (size_t r = 0; r < merges_.size(); ++r) {
    const auto& [ls, rs] = merges_[r];
    const int32_t li = id_of(ls), ri = id_of(rs), mi = id_of(ls + rs);
    if (li < 0 || ri < 0 || mi < 0) {
      throw ValidationError("merges.txt references unknown token at rank " + std::to_string(r));
    }
    merge_rank_.emplace(pair_key(li, ri), std::make_pair(static_cast<int32_t>(r), mi));
  }
}

Vocabulary Vocabulary::train(const std::vector<std::string>& corpus, int64_t target_vocab,
                             int64_t min_frequency) {
  if (target_vocab <= kBaseVocab) {
    throw ValidationError("target_vocab must exceed base vocabulary (" +
                          std::to_string(kBaseVocab) + ")");
  }
  Vocabulary v;
  v.init_base();

  // unique words with counts
  std::unordered_map<std::string, int64_t> word_counts;
  for (const std::string& line : corpus) {
    size_t i = 0;
    while (i < line.size()) {
      if (ascii_space(line[i])) {
        ++i;
        continue;
      }
      size_t j = i;
      while (j < line.size() && !ascii_space(line[j])) ++j;
      ++word_counts[line.substr(i, j - i)];
      i = j;
    }
  }
  if (word_counts.empty()) throw ValidationError("train_bpe: empty corpus");

  std::vector<Word> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) {
    words.push_back({initial_symbols(w, v.token_to_id_), c});
  }

  // pair counts and an index of which words contain each pair
  std::unordered_map<uint64_t, int64_t> pair_count;
  std::unordered_map<uint64_t, std::unordered_set<size_t>> pair_words;
  auto add_word_pairs = [&](size_t wi, int64_t sign) {
    const Word& w = words[wi];
    for (size_t i = 0; i + 1 < w.syms.size(); ++i) {
      const int32_t a = w.syms[i], b = w.syms[i + 1];
      if (Vocabulary::is_special(a) || Vocabulary::is_special(b)) continue;
      const uint64_t key = pair_key(a, b);
      pair_count[key] += sign * w.count;
      if (sign > 0) pair_words[key].insert(wi);
    }
  };
  for (size_t wi = 0; wi < words.size(); ++wi) add_word_pairs(wi, +1);

  while (v.size() < target_vocab) {
    // best pair: highest count, ties by lexicographic (left, right) strings
    uint64_t best_key = 0;
    int64_t best_count = 0;
    const std::string* best_l = nullptr;
    const std::string* best_r = nullptr;
    for (const auto& [key, cnt] : pair_count) {
      if (cnt < min_frequency || cnt <= 0) continue;
      const auto a = static_cast<int32_t>(key >> 32);
      const auto b = static_cast<int32_t>(key & 0xFFFFFFFFu);
      const std::string& ls = v.id_to_token_[static_cast<size_t>(a)];
      const std::string& rs = v.id_to_token_[static_cast<size_t>(b)];
      const bool better =
          cnt > best_count ||
          (cnt == best_count && best_l != nullptr &&
           std::make_pair(std::cref(ls), std::cref(rs)) <
               std::make_pair(std::cref(*best_l), std::cref(*best_r)));
      if (best_l == nullptr || better) {
        best_key = key;
        best_count = cnt;
        best_l = &ls;
        best_r = &rs;
      }
    }
    if (best_l == nullptr) break;  // no pair reaches min_frequency

    const auto left_id = static_cast<int32_t>(best_key >> 32);
    const auto right_id = static_cast<int32_t>(best_key & 0xFFFFFFFFu);
    const std::string left = *best_l, right = *best_r;
    const int32_t merged = v.intern(left + right);
    v.merges_.emplace_back(left, right);

    auto affected = pair_words[best_key];  // copy: rebuilt below
    for (size_t wi : affected) {
      Word& w = words[wi];
      bool contains = false;
      for (size_t i = 0; i + 1 < w.syms.size(); ++i) {
        if (w.syms[i] == left_id && w.syms[i + 1] == right_id) {
          contains = true;
          break;
        }
      }
      if (!contains) continue;  // stale index entry
      add_word_pairs(wi, -1);
      std::vector<int32_t> next;
      next.reserve(w.syms.size());
      size_t i = 0;
      while (i < w.syms.size()) {
        if (i + 1 < w.syms.size() && w.syms[i] == left_id && w.syms[i + 1] == right_id) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(w.syms[i]);
          ++i;
        }
      }
      w.syms = std::move(next);
      add_word_pairs(wi, +1);
    }
    pair_count.erase(best_key);
    pair_words.erase(best_key);
  }

  v.index_merges();
  return v;
}

TokenSequence Vocabulary::encode(std::string_view text, bool add_cls_sep) const {
  TokenSequence seq;
  const auto text_len = static_cast<int32_t>(text.size());
  if (add_cls_sep) {
    seq.ids.push_back(kCls);
    seq.offsets.push_back({0, 0});
  }

  size_t i = 0;
  while (i < text.size()) {
    if (ascii_space(text[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && !ascii_space(text[j])) ++j;
    const std::string_view word = text.substr(i, j - i);
    const auto word_off = static_cast<int32_t>(i);

    // initial symbols with byte spans
    std::vector<int32_t> syms;
    std::vector<TokenSpan> spans;
    syms.push_back(kMarker);
    spans.push_back({word_off, word_off});
    for (const Segment& seg : segment_word(word)) {
      if (seg.special_id >= 0) {
        syms.push_back(seg.special_id);
        const auto at = word_off + static_cast<int32_t>(seg.begin);
        spans.push_back({at, at});  // specials carry zero-width offsets
        continue;
      }
      for (size_t p = seg.begin; p < seg.end; ++p) {
        auto it = token_to_id_.find(byte_token(static_cast<uint8_t>(word[p])));
        syms.push_back(it == token_to_id_.end() ? kUnk : it->second);
        spans.push_back({word_off + static_cast<int32_t>(p), word_off + static_cast<int32_t>(p) + 1});
      }
    }

    // repeatedly apply the lowest-rank merge, left to right
    for (;;) {
      int32_t best_rank = -1;
      int32_t best_merged = -1;
      int32_t best_left = 0, best_right = 0;
      for (size_t p = 0; p + 1 < syms.size(); ++p) {
        auto it = merge_rank_.find(pair_key(syms[p], syms[p + 1]));
        if (it == merge_rank_.end()) continue;
        if (best_rank < 0 || it->second.first < best_rank) {
          best_rank = it->second.first;
          best_merged = it->second.second;
          best_left = syms[p];
          best_right = syms[p + 1];
        }
      }
      if (best_rank < 0) break;
      std::vector<int32_t> next_syms;
      std::vector<TokenSpan> next_spans;
      next_syms.reserve(syms.size());
      next_spans.reserve(spans.size());
      size_t p = 0;
      while (p < syms.size()) {
        if (p + 1 < syms.size() && syms[p] == best_left && syms[p + 1] == best_right) {
          next_syms.push_back(best_merged);
          next_spans.push_back({spans[p].start, spans[p + 1].end});
          p += 2;
        } else {
          next_syms.push_back(syms[p]);
          next_spans.push_back(spans[p]);
          ++p;
        }
      }
      syms = std::move(next_syms);
      spans = std::move(next_spans);
    }

    seq.ids.insert(seq.ids.end(), syms.begin(), syms.end());
    seq.offsets.insert(seq.offsets.end(), spans.begin(), spans.end());
    i = j;
  }

  if (add_cls_sep) {
    seq.ids.push_back(kSep);
    seq.offsets.push_back({text_len, text_len});
  }
  return seq;
}

std::string Vocabulary::decode(const std::vector<int32_t>& ids, bool strip) const {
  std::string out;
  for (const int32_t id : ids) {
    const std::string& tok = token(id);  // range-checked
    if (id < kNumSpecials) {
      if (strip && (id == kPad || id == kCls || id == kSep)) continue;
      if (id == kUsr || id == kUrl) {
        out += tok;  // text specials splice in like normal text
      } else {
        if (!out.empty() && out.back() != ' ') out += ' ';
        out += tok;
      }
      continue;
    }
    // regular token: unmap codepoints, marker becomes a space
    size_t p = 0;
    while (p < tok.size()) {
      const uint32_t cp = next_codepoint(tok, p);
      if (cp == 0x2581) {
        out += ' ';
        continue;
      }
      const int32_t b = codepoint_to_byte(cp);
      out += b < 0 ? '?' : static_cast<char>(b);
    }
  }
  if (!out.empty() && out.front() == ' ') out.erase(out.begin());
  return out;
}

void Vocabulary::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/vocab.txt");
    if (!f) throw std::runtime_error("cannot write " + dir + "/vocab.txt");
    for (const std::string& t : id_to_token_) f << t << '\n';
  }
  {
    std::ofstream f(dir + "/merges.txt");
    if (!f) throw std::runtime_error("cannot write " + dir + "/merges.txt");
    for (const auto& [l, r] : merges_) f << l << ' ' << r << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& dir) {
  Vocabulary v;
  {
    std::ifstream f(dir + "/vocab.txt");
    if (!f) throw std::runtime_error("cannot open " + dir + "/vocab.txt");
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto id = static_cast<int32_t>(v.id_to_token_.size());
      v.id_to_token_.push_back(line);
      if (!v.token_to_id_.emplace(line, id).second) {
        throw ValidationError("vocab.txt: duplicate token at line " + std::to_string(id + 1));
      }
    }
  }
  if (v.size() < kBaseVocab) throw ValidationError("vocab.txt: missing base vocabulary");
  for (int32_t s = 0; s < kNumSpecials; ++s) {
    if (v.id_to_token_[static_cast<size_t>(s)] != kSpecialTokens[static_cast<size_t>(s)]) {
      throw ValidationError("vocab.txt: special tokens must occupy the lowest ids");
    }
  }
  if (v.id_to_token_[kMarker] != kMarkerToken) {
    throw ValidationError("vocab.txt: marker token missing at id " + std::to_string(kMarker));
  }
  {
    std::ifstream f(dir + "/merges.txt");
    if (!f) throw std::runtime_error("cannot open " + dir + "/merges.txt");
    std::string line;
    int64_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const size_t sp = line.find(' ');
      if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
        throw ParseError("merges.txt: malformed pair at line " + std::to_string(line_no));
      }
      v.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
  }
  v.index_merges();
  return v;
}

}  // namespace tweetlm::bpe
