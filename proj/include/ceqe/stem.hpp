#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <unordered_map>

#include "ceqe/error.hpp"

namespace ceqe {

enum class StemmerId { krovetz, porter2, none };

inline StemmerId parse_stemmer_id(std::string_view name) {
  if (name == "krovetz") return StemmerId::krovetz;
  if (name == "porter2") return StemmerId::porter2;
  if (name == "none") return StemmerId::none;
  throw ConfigError("unknown stemmer '" + std::string(name) + "' (expected krovetz, porter2 or none)");
}

inline std::string_view to_string(StemmerId id) {
  switch (id) {
    case StemmerId::krovetz: return "krovetz";
    case StemmerId::porter2: return "porter2";
    case StemmerId::none: return "none";
  }
  return "none";
}

namespace detail {

inline bool ends_with(std::string_view word, std::string_view suffix) {
  return word.size() >= suffix.size() && word.substr(word.size() - suffix.size()) == suffix;
}

inline bool is_alpha_word(std::string_view word) {
  return std::all_of(word.begin(), word.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Krovetz-style inflectional stemmer.
//
// The original KStem validates every candidate against a ~30k word lexicon.
// This version has no lexicon: it strips plural, past-tense and progressive
// suffixes with shape rules and a short exception table. Known divergences
// from KStem: derivational suffixes (-ly, -ness, -ion, ...) are left alone,
// and words such as "hoping"/"hopping" are resolved by consonant shape rather
// than dictionary lookup.
// ---------------------------------------------------------------------------
namespace krovetz_detail {

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

inline bool has_vowel(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_vowel(s[i]) || (s[i] == 'y' && i > 0)) return true;
  }
  return false;
}

inline const std::unordered_map<std::string_view, std::string_view>& exceptions() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"children", "child"}, {"men", "man"},       {"women", "woman"},     {"mice", "mouse"},
      {"feet", "foot"},      {"teeth", "tooth"},   {"geese", "goose"},     {"goes", "go"},
      {"does", "do"},        {"went", "go"},       {"data", "datum"},      {"news", "news"},
      {"series", "series"},  {"species", "species"}, {"means", "means"},   {"always", "always"},
      {"lens", "lens"},      {"bias", "bias"},     {"atlas", "atlas"},     {"gas", "gas"},
      {"yes", "yes"},        {"was", "was"},       {"has", "has"},         {"this", "this"},
      {"ties", "tie"},       {"lies", "lie"},      {"dies", "die"},        {"pies", "pie"},
      {"dying", "die"},      {"lying", "lie"},     {"tying", "tie"},       {"united", "united"},
      {"red", "red"},        {"bed", "bed"},       {"need", "need"},       {"feed", "feed"},
      {"seed", "seed"},      {"speed", "speed"},   {"proceed", "proceed"}, {"exceed", "exceed"},
      {"succeed", "succeed"}, {"hundred", "hundred"}, {"sacred", "sacred"}, {"naked", "naked"},
      {"thing", "thing"},    {"things", "thing"},  {"king", "king"},       {"ring", "ring"},
      {"spring", "spring"},  {"string", "string"}, {"wing", "wing"},       {"sing", "sing"},
      {"bring", "bring"},    {"during", "during"}, {"morning", "morning"}, {"evening", "evening"},
      {"ceiling", "ceiling"}, {"building", "building"}, {"wedding", "wedding"},
  };
  return table;
}

// Repairs the stem left after removing -ed/-ing.
inline std::string repair_stem(std::string stem) {
  const auto n = stem.size();
  if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
      stem[n - 1] != 'l' && stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
    return stem;
  }
  if (detail::ends_with(stem, "at") || detail::ends_with(stem, "bl") || detail::ends_with(stem, "iz") ||
      detail::ends_with(stem, "ur") || detail::ends_with(stem, "iv") || detail::ends_with(stem, "ag")) {
    return stem + "e";
  }
  // consonant-vowel-consonant monosyllable such as "hop", "rat" -> restore final e
  if (n == 3 && !is_vowel(stem[0]) && is_vowel(stem[1]) && !is_vowel(stem[2]) &&
      stem[2] != 'w' && stem[2] != 'x' && stem[2] != 'y') {
    return stem + "e";
  }
  return stem;
}

inline std::string strip_plural(std::string word) {
  if (detail::ends_with(word, "ies") && word.size() > 4) {
    word.resize(word.size() - 3);
    return word + "y";
  }
  if (detail::ends_with(word, "sses") || detail::ends_with(word, "shes") ||
      detail::ends_with(word, "ches") || detail::ends_with(word, "xes") ||
      detail::ends_with(word, "zes")) {
    word.resize(word.size() - 2);
    return word;
  }
  if (detail::ends_with(word, "s") && !detail::ends_with(word, "ss") && !detail::ends_with(word, "us") &&
      !detail::ends_with(word, "is") && !detail::ends_with(word, "'s")) {
    word.pop_back();
  }
  return word;
}

inline std::string strip_tense(std::string word) {
  if (detail::ends_with(word, "ied") && word.size() > 4) {
    word.resize(word.size() - 3);
    return word + "y";
  }
  if (detail::ends_with(word, "eed")) return word;
  if (detail::ends_with(word, "ed") && word.size() > 4) {
    std::string stem = word.substr(0, word.size() - 2);
    if (!has_vowel(stem)) return word;
    return repair_stem(std::move(stem));
  }
  if (detail::ends_with(word, "ing") && word.size() > 5) {
    std::string stem = word.substr(0, word.size() - 3);
    if (!has_vowel(stem)) return word;
    return repair_stem(std::move(stem));
  }
  return word;
}

}  // namespace krovetz_detail

inline std::string krovetz_stem(std::string_view word) {
  if (word.size() <= 3 || !detail::is_alpha_word(word)) return std::string(word);
  const auto& table = krovetz_detail::exceptions();
  if (auto it = table.find(word); it != table.end()) return std::string(it->second);
  std::string stem = krovetz_detail::strip_plural(std::string(word));
  if (auto it = table.find(stem); it != table.end()) return std::string(it->second);
  return krovetz_detail::strip_tense(std::move(stem));
}

// ---------------------------------------------------------------------------
// Porter2 (Snowball English) stemmer.
// ---------------------------------------------------------------------------
namespace porter2_detail {

inline bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}

inline bool is_double(std::string_view w) {
  if (w.size() < 2) return false;
  char a = w[w.size() - 1];
  if (a != w[w.size() - 2]) return false;
  return a == 'b' || a == 'd' || a == 'f' || a == 'g' || a == 'm' || a == 'n' || a == 'p' || a == 'r' ||
         a == 't';
}

inline bool is_li_ending(char c) {
  return c == 'c' || c == 'd' || c == 'e' || c == 'g' || c == 'h' || c == 'k' || c == 'm' || c == 'n' ||
         c == 'r' || c == 't';
}

// Region after the first non-vowel following a vowel, starting at `from`.
inline std::size_t region_after(std::string_view w, std::size_t from) {
  for (std::size_t i = from + 1; i < w.size(); ++i) {
    if (!is_vowel(w[i]) && is_vowel(w[i - 1])) return i + 1;
  }
  return w.size();
}

inline bool ends_in_short_syllable(std::string_view w) {
  const auto n = w.size();
  if (n == 2) return is_vowel(w[0]) && !is_vowel(w[1]);
  if (n >= 3) {
    char c = w[n - 1];
    return !is_vowel(w[n - 3]) && is_vowel(w[n - 2]) && !is_vowel(c) && c != 'w' && c != 'x' && c != 'Y';
  }
  return false;
}

struct Word {
  std::string s;
  std::size_t r1 = 0;
  std::size_t r2 = 0;

  bool ends(std::string_view suffix) const { return detail::ends_with(s, suffix); }
  bool in_r1(std::string_view suffix) const { return s.size() - suffix.size() >= r1; }
  bool in_r2(std::string_view suffix) const { return s.size() - suffix.size() >= r2; }
  void replace(std::string_view suffix, std::string_view with) {
    s.resize(s.size() - suffix.size());
    s += with;
  }
  bool has_vowel_before(std::size_t end) const {
    for (std::size_t i = 0; i < end; ++i) {
      if (is_vowel(s[i])) return true;
    }
    return false;
  }
  bool is_short() const { return r1 >= s.size() && ends_in_short_syllable(s); }
};

// Finds the longest suffix of the table that the word ends with.
template <std::size_t N>
inline const std::pair<std::string_view, std::string_view>* longest_match(
    const Word& w, const std::array<std::pair<std::string_view, std::string_view>, N>& table) {
  const std::pair<std::string_view, std::string_view>* best = nullptr;
  for (const auto& entry : table) {
    if (w.ends(entry.first) && (best == nullptr || entry.first.size() > best->first.size())) best = &entry;
  }
  return best;
}

inline void step0(Word& w) {
  for (std::string_view suffix : {"'s'", "'s", "'"}) {
    if (w.ends(suffix)) {
      w.replace(suffix, "");
      return;
    }
  }
}

inline void step1a(Word& w) {
  if (w.ends("sses")) {
    w.replace("sses", "ss");
  } else if (w.ends("ied") || w.ends("ies")) {
    w.replace(w.s.substr(w.s.size() - 3), w.s.size() > 4 ? "i" : "ie");
  } else if (w.ends("us") || w.ends("ss")) {
    return;
  } else if (w.ends("s")) {
    if (w.s.size() >= 2 && w.has_vowel_before(w.s.size() - 2)) w.replace("s", "");
  }
}

inline void step1b(Word& w) {
  static constexpr std::array<std::string_view, 6> suffixes = {"eedly", "ingly", "edly", "eed", "ing", "ed"};
  std::string_view match;
  for (auto suffix : suffixes) {
    if (w.ends(suffix)) {
      match = suffix;
      break;
    }
  }
  if (match.empty()) return;
  if (match == "eed" || match == "eedly") {
    if (w.in_r1(match)) w.replace(match, "ee");
    return;
  }
  if (!w.has_vowel_before(w.s.size() - match.size())) return;
  w.replace(match, "");
  if (w.ends("at") || w.ends("bl") || w.ends("iz")) {
    w.s += 'e';
  } else if (is_double(w.s)) {
    w.s.pop_back();
  } else if (w.is_short()) {
    w.s += 'e';
  }
}

inline void step1c(Word& w) {
  const auto n = w.s.size();
  if (n > 2 && (w.s[n - 1] == 'y' || w.s[n - 1] == 'Y') && !is_vowel(w.s[n - 2])) w.s[n - 1] = 'i';
}

inline void step2(Word& w) {
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 24> table = {{
      {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},   {"abli", "able"},   {"entli", "ent"},
      {"izer", "ize"},    {"ization", "ize"}, {"ational", "ate"}, {"ation", "ate"},   {"ator", "ate"},
      {"alism", "al"},    {"aliti", "al"},    {"alli", "al"},     {"fulness", "ful"}, {"ousli", "ous"},
      {"ousness", "ous"}, {"iveness", "ive"}, {"iviti", "ive"},   {"biliti", "ble"},  {"bli", "ble"},
      {"ogi", "og"},      {"fulli", "ful"},   {"lessli", "less"}, {"li", ""},
  }};
  const auto* m = longest_match(w, table);
  if (m == nullptr || !w.in_r1(m->first)) return;
  if (m->first == "ogi") {
    if (w.s.size() >= 4 && w.s[w.s.size() - 4] == 'l') w.replace("ogi", "og");
  } else if (m->first == "li") {
    if (w.s.size() >= 3 && is_li_ending(w.s[w.s.size() - 3])) w.replace("li", "");
  } else {
    w.replace(m->first, m->second);
  }
}

inline void step3(Word& w) {
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 9> table = {{
      {"tional", "tion"}, {"ational", "ate"}, {"alize", "al"}, {"icate", "ic"}, {"iciti", "ic"},
      {"ical", "ic"},     {"ful", ""},        {"ness", ""},    {"ative", ""},
  }};
  const auto* m = longest_match(w, table);
  if (m == nullptr || !w.in_r1(m->first)) return;
  if (m->first == "ative") {
    if (w.in_r2(m->first)) w.replace(m->first, "");
  } else {
    w.replace(m->first, m->second);
  }
}

inline void step4(Word& w) {
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 18> table = {{
      {"al", ""},   {"ance", ""}, {"ence", ""}, {"er", ""},  {"ic", ""},  {"able", ""},
      {"ible", ""}, {"ant", ""},  {"ement", ""}, {"ment", ""}, {"ent", ""}, {"ism", ""},
      {"ate", ""},  {"iti", ""},  {"ous", ""},  {"ive", ""},  {"ize", ""}, {"ion", ""},
  }};
  const auto* m = longest_match(w, table);
  if (m == nullptr || !w.in_r2(m->first)) return;
  if (m->first == "ion") {
    const auto n = w.s.size();
    if (n >= 4 && (w.s[n - 4] == 's' || w.s[n - 4] == 't')) w.replace("ion", "");
  } else {
    w.replace(m->first, "");
  }
}

inline void step5(Word& w) {
  if (w.ends("e")) {
    if (w.in_r2("e")) {
      w.s.pop_back();
    } else if (w.in_r1("e")) {
      std::string_view head(w.s.data(), w.s.size() - 1);
      if (!ends_in_short_syllable(head)) w.s.pop_back();
    }
  } else if (w.ends("ll") && w.in_r2("l")) {
    w.s.pop_back();
  }
}

inline const std::unordered_map<std::string_view, std::string_view>& exceptions1() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"skis", "ski"},   {"skies", "sky"},   {"dying", "die"},   {"lying", "lie"},     {"tying", "tie"},
      {"idly", "idl"},   {"gently", "gentl"}, {"ugly", "ugli"},   {"early", "earli"},   {"only", "onli"},
      {"singly", "singl"}, {"sky", "sky"},   {"news", "news"},   {"howe", "howe"},     {"atlas", "atlas"},
      {"cosmos", "cosmos"}, {"bias", "bias"}, {"andes", "andes"},
  };
  return table;
}

inline bool is_exception2(std::string_view w) {
  static constexpr std::array<std::string_view, 8> words = {"inning",  "outing", "canning", "herring",
                                                            "earring", "proceed", "exceed", "succeed"};
  return std::find(words.begin(), words.end(), w) != words.end();
}

}  // namespace porter2_detail

inline std::string porter2_stem(std::string_view input) {
  using namespace porter2_detail;
  if (input.size() <= 2 || !std::all_of(input.begin(), input.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || c == '\'';
      })) {
    return std::string(input);
  }
  if (auto it = exceptions1().find(input); it != exceptions1().end()) return std::string(it->second);

  Word w;
  w.s = std::string(input);
  if (!w.s.empty() && w.s[0] == '\'') w.s.erase(0, 1);
  if (w.s.size() <= 2) return w.s;
  if (w.s[0] == 'y') w.s[0] = 'Y';
  for (std::size_t i = 1; i < w.s.size(); ++i) {
    if (w.s[i] == 'y' && is_vowel(w.s[i - 1])) w.s[i] = 'Y';
  }

  std::size_t r1_start = 0;
  bool prefixed = false;
  for (std::string_view prefix : {"gener", "commun", "arsen"}) {
    if (w.s.rfind(prefix, 0) == 0) {
      r1_start = prefix.size();
      prefixed = true;
      break;
    }
  }
  w.r1 = prefixed ? r1_start : region_after(w.s, 0);
  w.r2 = w.r1 < w.s.size() ? region_after(w.s, w.r1) : w.s.size();

  step0(w);
  step1a(w);
  if (is_exception2(w.s)) return w.s;
  step1b(w);
  step1c(w);
  step2(w);
  step3(w);
  step4(w);
  step5(w);

  std::replace(w.s.begin(), w.s.end(), 'Y', 'y');
  return w.s;
}

/// Dispatches to the configured stemmer. Empty input stays empty.
inline std::string stem_word(std::string_view word, StemmerId id) {
  switch (id) {
    case StemmerId::krovetz: return krovetz_stem(word);
    case StemmerId::porter2: return porter2_stem(word);
    case StemmerId::none: return std::string(word);
  }
  return std::string(word);
}

}  // namespace ceqe
