#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ceqe/stem.hpp"
#include "ceqe/stopwords.hpp"

namespace ceqe {

struct Token {
  std::string surface;  // lowercased
  std::string stem;
  std::uint32_t position = 0;
  bool is_stopword = false;

  bool operator==(const Token&) const = default;
};

namespace detail {

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace detail

/// Splits `text` into lowercase tokens on any non-alphanumeric ASCII byte.
/// Bytes >= 0x80 are kept inside tokens so UTF-8 words survive intact.
/// Stopwords are flagged, never removed, so positions stay aligned with the
/// embedding extractor.
inline std::vector<Token> tokenize(std::string_view text, const StopwordSet& stopwords, StemmerId stemmer) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  std::uint32_t position = 0;
  while (i < text.size()) {
    while (i < text.size() && !detail::is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t start = i;
    while (i < text.size() && detail::is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    Token tok;
    tok.surface.reserve(i - start);
    for (std::size_t j = start; j < i; ++j) tok.surface.push_back(detail::ascii_lower(text[j]));
    tok.is_stopword = stopwords.contains(tok.surface);
    tok.stem = stem_word(tok.surface, stemmer);
    tok.position = position++;
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

/// Overload taking the stemmer by name; unknown names raise ConfigError.
inline std::vector<Token> tokenize(std::string_view text, const StopwordSet& stopwords,
                                   std::string_view stemmer_id) {
  return tokenize(text, stopwords, parse_stemmer_id(stemmer_id));
}

/// Bundles the stopword list and stemmer so documents and queries are
/// analyzed identically.
class Analyzer {
 public:
  Analyzer() = default;
  explicit Analyzer(StemmerId stemmer, StopwordSet stopwords = StopwordSet())
      : stemmer_(stemmer), stopwords_(std::move(stopwords)) {}

  std::vector<Token> analyze(std::string_view text) const { return tokenize(text, stopwords_, stemmer_); }

  /// Non-stopword stems of `text`, in order, duplicates kept.
  std::vector<std::string> query_stems(std::string_view text) const {
    std::vector<std::string> stems;
    for (auto& tok : analyze(text)) {
      if (!tok.is_stopword) stems.push_back(std::move(tok.stem));
    }
    return stems;
  }

  StemmerId stemmer() const noexcept { return stemmer_; }
  const StopwordSet& stopwords() const noexcept { return stopwords_; }

 private:
  StemmerId stemmer_ = StemmerId::krovetz;
  StopwordSet stopwords_;
};

/// Non-stopword stems of an already-tokenized sequence.
inline std::vector<std::string> content_stems(const std::vector<Token>& tokens) {
  std::vector<std::string> stems;
  for (const auto& tok : tokens) {
    if (!tok.is_stopword) stems.push_back(tok.stem);
  }
  return stems;
}

}  // namespace ceqe
