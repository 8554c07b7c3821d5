#include "tweetlm/corpus.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tweetlm/errors.hpp"

namespace tweetlm::corpus {

namespace {

using nlohmann::json;

bool ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

std::string where(int64_t line_no) {
  return line_no > 0 ? "line " + std::to_string(line_no) + ": " : "";
}

std::string require_string(const json& j, const std::string& key, int64_t line_no) {
  if (!j.contains(key)) throw SchemaError(where(line_no) + "missing field '" + key + "'");
  const json& v = j.at(key);
  std::string s;
  if (v.is_string()) {
    s = v.get<std::string>();
  } else if (v.is_number_integer()) {
    s = std::to_string(v.get<int64_t>());  // numeric tweet ids are common
  } else {
    throw SchemaError(where(line_no) + "field '" + key + "' is not a string");
  }
  if (s.empty()) throw SchemaError(where(line_no) + "field '" + key + "' is empty");
  return s;
}

std::optional<std::string> optional_string(const json& j, const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const json& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
  return std::nullopt;
}

// Twitter handle: 1-15 word chars. Longer word-char runs are not handles, so
// the run is left untouched.
size_t mention_length(std::string_view run, size_t at) {
  size_t k = 0;
  while (at + 1 + k < run.size() && word_char(run[at + 1 + k]) && k < 15) ++k;
  if (k == 0) return 0;
  if (at + 1 + k < run.size() && word_char(run[at + 1 + k])) return 0;
  return k;
}

// Mention replacement inside one non-whitespace run. URLs were already
// handled, so '@' is the only trigger here.
std::string replace_mentions(std::string_view run) {
  std::string out;
  out.reserve(run.size());
  size_t p = 0;
  while (p < run.size()) {
    const bool boundary = p == 0 || !word_char(run[p - 1]);
    if (run[p] == '@' && boundary) {
      const size_t k = mention_length(run, p);
      if (k > 0) {
        out += "<usr>";
        p += 1 + k;
        continue;
      }
    }
    out += run[p];
    ++p;
  }
  return out;
}

}  // namespace

RawTweet parse_tweet_record(const std::string& line, const FieldMap& fields, int64_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where(line_no) + "malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw ParseError(where(line_no) + "expected a JSON object");

  RawTweet t;
  t.id = require_string(j, fields.id, line_no);
  t.text = require_string(j, fields.text, line_no);
  t.lang = require_string(j, fields.lang, line_no);
  t.author_id = optional_string(j, fields.author_id);
  t.created_at = optional_string(j, fields.created_at);
  return t;
}

std::string preprocess_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (ascii_space(text[i])) {
      out += text[i];
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && !ascii_space(text[j])) ++j;
    const std::string_view run = text.substr(i, j - i);
    if (run.substr(0, 7) == "http://" || run.substr(0, 8) == "https://") {
      out += "<url>";
    } else {
      out += replace_mentions(run);
    }
    i = j;
  }
  return out;
}

bool url_only(std::string_view clean_text) {
  size_t i = 0;
  bool any_other = false;
  while (i < clean_text.size()) {
    if (ascii_space(clean_text[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < clean_text.size() && !ascii_space(clean_text[j])) ++j;
    if (clean_text.substr(i, j - i) != "<url>") any_other = true;
    i = j;
  }
  return !any_other;
}

bool select_for_corpus(const RawTweet& tweet, std::string_view lang_tag) {
  if (tweet.lang != lang_tag) return false;
  return !url_only(preprocess_text(tweet.text));
}

FilterStats filter_stream(std::istream& in, std::ostream& out, std::string_view lang_tag,
                          const FieldMap& fields) {
  FilterStats stats;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank line
    ++stats.lines;
    const RawTweet t = parse_tweet_record(line, fields, line_no);
    if (!select_for_corpus(t, lang_tag)) continue;
    std::string clean = preprocess_text(t.text);
    for (char& c : clean) {
      if (c == '\n' || c == '\r') c = ' ';  // keep the one-text-per-line format
    }
    out << clean << '\n';
    ++stats.kept;
  }
  return stats;
}

FilterStats filter_file(const std::string& in_path, const std::string& out_path,
                        std::string_view lang_tag, const FieldMap& fields) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open input file: " + in_path);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open output file: " + out_path);
  FilterStats stats = filter_stream(in, out, lang_tag, fields);
  if (!out) throw std::runtime_error("write failed: " + out_path);
  return stats;
}

}  // namespace tweetlm::corpus
