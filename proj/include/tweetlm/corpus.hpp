#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

namespace tweetlm::corpus {

struct RawTweet {
  std::string id;
  std::string text;
  std::string lang;
  std::optional<std::string> author_id;
  std::optional<std::string> created_at;
};

// Maps JSON keys onto RawTweet fields so differently shaped dumps can be
// ingested without rewriting them.
struct FieldMap {
  std::string id = "id";
  std::string text = "text";
  std::string lang = "lang";
  std::string author_id = "author_id";
  std::string created_at = "created_at";
};

// One JSON object per line. Throws ParseError on malformed JSON and
// SchemaError when id/text/lang are missing or empty; line_no (1-based, 0 =
// unknown) is included in messages.
RawTweet parse_tweet_record(const std::string& line, const FieldMap& fields = {},
                            int64_t line_no = 0);

// Replaces every URL run (maximal non-whitespace run starting with http:// or
// https://) with <url> and every @handle (1-15 word chars, at a non-word
// boundary) with <usr>. Everything else is preserved byte for byte.
std::string preprocess_text(std::string_view text);

// True when the cleaned text contains nothing but <url> tokens and whitespace.
bool url_only(std::string_view clean_text);

// Keep rule: language tag matches exactly and the tweet is not URL-only.
bool select_for_corpus(const RawTweet& tweet, std::string_view lang_tag = "es");

struct FilterStats {
  int64_t lines = 0;
  int64_t kept = 0;
};

// Streams JSON-lines in, writes one cleaned text per line for every selected
// tweet. Embedded newlines are flattened to spaces to keep the line format.
FilterStats filter_stream(std::istream& in, std::ostream& out, std::string_view lang_tag,
                          const FieldMap& fields = {});

FilterStats filter_file(const std::string& in_path, const std::string& out_path,
                        std::string_view lang_tag, const FieldMap& fields = {});

}  // namespace tweetlm::corpus
