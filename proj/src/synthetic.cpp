#include "babyhgrn/synthetic.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "babyhgrn/corpus.hpp"
#include "babyhgrn/errors.hpp"

namespace babyhgrn {

WordVocabulary::WordVocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto& w = words_[i];
    require(!w.empty() && w.find_first_of(" \t\r\n") == std::string::npos, ErrorKind::config,
            "vocabulary word must be a non-empty token without whitespace");
    const bool inserted = index_.emplace(w, static_cast<TokenId>(kSpecialCount + i)).second;
    require(inserted, ErrorKind::config, "duplicate vocabulary word '" + w + "'");
  }
}

TokenId WordVocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? SpecialIds{}.unk : it->second;
}

std::vector<TokenId> WordVocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) ids.push_back(id(text.substr(i, j - i)));
    i = j;
  }
  return ids;
}

std::string WordVocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < static_cast<TokenId>(kSpecialCount)) continue;
    require(static_cast<std::size_t>(id) < vocab_size(), ErrorKind::data,
            "token id " + std::to_string(id) + " outside vocabulary");
    if (!out.empty()) out += ' ';
    out += words_[static_cast<std::size_t>(id) - kSpecialCount];
  }
  return out;
}

nlohmann::json WordVocabulary::to_json() const {
  return {{"type", "word"}, {"version", 1}, {"vocab_size", vocab_size()}, {"words", words_}};
}

WordVocabulary WordVocabulary::from_json(const nlohmann::json& j) {
  try {
    require(j.at("type").get<std::string>() == "word", ErrorKind::data, "not a word vocabulary");
    return WordVocabulary(j.at("words").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed word vocabulary: ") + e.what());
  }
}

void WordVocabulary::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

namespace {

struct Inflected {
  const char* singular;
  const char* plural;
};

constexpr Inflected kNouns[] = {
    {"dog", "dogs"},         {"cat", "cats"},         {"bird", "birds"},
    {"child", "children"},   {"teacher", "teachers"}, {"farmer", "farmers"},
    {"horse", "horses"},     {"student", "students"},
};
// kIntransitive[i] is the preferred verb of kNouns[i].
constexpr Inflected kIntransitive[] = {
    {"runs", "run"},   {"sleeps", "sleep"}, {"sings", "sing"}, {"laughs", "laugh"},
    {"speaks", "speak"}, {"works", "work"}, {"jumps", "jump"}, {"reads", "read"},
};
constexpr Inflected kTransitive[] = {
    {"sees", "see"}, {"likes", "like"}, {"follows", "follow"}, {"helps", "help"},
};
constexpr const char* kSingularDet[] = {"the", "a", "every"};
constexpr const char* kPluralDet[] = {"the", "many", "several"};
constexpr const char* kAdjectives[] = {"big", "small", "old", "young", "happy", "quiet"};
constexpr const char* kPrepositions[] = {"near", "with", "behind"};
constexpr const char* kAdverbs[] = {"quickly", "today"};
constexpr const char* kPreverbal[] = {"often", "always"};

template <typename T, std::size_t N>
const T& pick(Rng& rng, const T (&items)[N]) {
  return items[rng.below(N)];
}

std::vector<std::string> grammar_words() {
  std::vector<std::string> words = {"the", "a", "every", "many", "several"};
  for (const auto* table : {kNouns, kIntransitive}) {
    for (std::size_t i = 0; i < 8; ++i) {
      words.emplace_back(table[i].singular);
      words.emplace_back(table[i].plural);
    }
  }
  for (const auto& v : kTransitive) {
    words.emplace_back(v.singular);
    words.emplace_back(v.plural);
  }
  for (const auto* w : kAdjectives) words.emplace_back(w);
  for (const auto* w : kPrepositions) words.emplace_back(w);
  for (const auto* w : kAdverbs) words.emplace_back(w);
  for (const auto* w : kPreverbal) words.emplace_back(w);
  words.emplace_back(".");
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string flip_number(const std::string& verb) {
  for (const auto table : {std::span<const Inflected>(kIntransitive),
                           std::span<const Inflected>(kTransitive)}) {
    for (const auto& v : table) {
      if (verb == v.singular) return v.plural;
      if (verb == v.plural) return v.singular;
    }
  }
  fail(ErrorKind::usage, "'" + verb + "' is not a verb");
}

}  // namespace

std::size_t SyntheticGrammar::preferred_object(std::size_t noun, std::size_t verb) {
  return (noun + 1 + verb) % std::size(kNouns);
}

std::string Sentence::text() const { return join(words); }

SyntheticGrammar::SyntheticGrammar(GrammarOptions options)
    : options_(options), vocab_(grammar_words()) {
  require(options_.min_sentences >= 1 && options_.min_sentences <= options_.max_sentences,
          ErrorKind::config, "invalid sentences-per-document range");
}

std::size_t SyntheticGrammar::noun_phrase(Rng& rng, bool plural, std::vector<std::string>& out,
                                          std::optional<std::size_t> forced) const {
  out.emplace_back(plural ? pick(rng, kPluralDet) : pick(rng, kSingularDet));
  if (rng.bernoulli(options_.adjective_probability)) out.emplace_back(pick(rng, kAdjectives));
  const std::size_t noun = forced ? *forced : rng.below(std::size(kNouns));
  out.emplace_back(plural ? kNouns[noun].plural : kNouns[noun].singular);
  return noun;
}

Sentence SyntheticGrammar::sample_sentence(Rng& rng) const {
  return sample_sentence(rng, rng.bernoulli(options_.plural_probability));
}

Sentence SyntheticGrammar::sample_sentence(Rng& rng, bool plural) const {
  Sentence s;
  s.plural_subject = plural;
  const std::size_t noun = noun_phrase(rng, plural, s.words);
  if (rng.bernoulli(options_.pp_probability)) {
    s.attractor = true;
    s.words.emplace_back(pick(rng, kPrepositions));
    noun_phrase(rng, rng.bernoulli(0.5), s.words);
  }
  if (rng.bernoulli(options_.intransitive_probability)) {
    if (rng.bernoulli(options_.preverbal_probability)) s.words.emplace_back(pick(rng, kPreverbal));
    s.verb_position = s.words.size();
    const auto& verb = rng.bernoulli(options_.habit_probability) ? kIntransitive[noun]
                                                                 : pick(rng, kIntransitive);
    s.words.emplace_back(plural ? verb.plural : verb.singular);
    if (rng.bernoulli(options_.adverb_probability)) s.words.emplace_back(pick(rng, kAdverbs));
  } else {
    s.verb_position = s.words.size();
    const std::size_t verb = rng.below(std::size(kTransitive));
    s.words.emplace_back(plural ? kTransitive[verb].plural : kTransitive[verb].singular);
    std::optional<std::size_t> object;
    if (rng.bernoulli(options_.habit_probability)) object = preferred_object(noun, verb);
    noun_phrase(rng, rng.bernoulli(options_.plural_probability), s.words, object);
  }
  s.words.emplace_back(".");
  return s;
}

std::string SyntheticGrammar::sample_document(Rng& rng) const {
  const std::size_t span = options_.max_sentences - options_.min_sentences + 1;
  const std::size_t n = options_.min_sentences + rng.below(span);
  std::vector<std::string> sentences;
  for (std::size_t i = 0; i < n; ++i) sentences.push_back(sample_sentence(rng).text());
  return join(sentences);
}

std::vector<std::string> SyntheticGrammar::corpus(std::size_t target_words,
                                                  std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<std::string> docs;
  std::size_t words = 0;
  while (words < target_words) {
    docs.push_back(sample_document(rng));
    words += count_words(docs.back());
  }
  return docs;
}

std::vector<MinimalPair> SyntheticGrammar::minimal_pairs(std::size_t count,
                                                         std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<MinimalPair> pairs;
  Rng frame = rng;
  for (std::size_t i = 0; i < count; ++i) {
    // Odd items replay the previous frame's draws with a plural subject, so
    // every frame appears once per number.
    if (i % 2 == 0) frame = rng;
    const Sentence s = sample_sentence(i % 2 == 0 ? rng : frame, i % 2 == 1);
    Sentence bad = s;
    bad.words[s.verb_position] = flip_number(s.words[s.verb_position]);
    pairs.push_back({s.text(), bad.text(), s.attractor ? "attractor" : "agreement"});
  }
  return pairs;
}

std::vector<ChoiceInstance> SyntheticGrammar::choice_instances(std::size_t count,
                                                               std::size_t candidates,
                                                               std::uint64_t seed) const {
  constexpr std::size_t kCount = std::size(kNouns);
  require(candidates >= 2 && candidates <= kCount, ErrorKind::config,
          "candidates must lie in [2, " + std::to_string(kCount) + "]");
  Rng rng(seed);
  std::vector<ChoiceInstance> items;
  for (std::size_t i = 0; i < count; ++i) {
    const bool plural = rng.bernoulli(options_.plural_probability);
    std::vector<std::string> context;
    const std::size_t noun = noun_phrase(rng, plural, context);
    const std::size_t verb = rng.below(std::size(kTransitive));
    context.emplace_back(plural ? kTransitive[verb].plural : kTransitive[verb].singular);
    context.emplace_back("the");
    const std::size_t answer = preferred_object(noun, verb);

    std::vector<std::size_t> others;
    for (std::size_t n = 0; n < kCount; ++n) {
      if (n != answer) others.push_back(n);
    }
    rng.shuffle(std::span<std::size_t>(others));
    std::vector<std::size_t> chosen(others.begin(), others.begin() + std::ptrdiff_t(candidates - 1));
    const std::size_t gold = rng.below(candidates);
    chosen.insert(chosen.begin() + std::ptrdiff_t(gold), answer);

    ChoiceInstance item{join(context), {}, gold, kTransitive[verb].singular};
    for (std::size_t n : chosen) item.candidates.emplace_back(kNouns[n].singular);
    items.push_back(std::move(item));
  }
  return items;
}

double bigram_conditional_entropy(const PackedDataset& data) {
  require(data.chunk_count() > 0, ErrorKind::data, "empty dataset");
  const std::size_t v = data.vocab_size;
  std::vector<double> joint(v * v, 0.0);
  std::vector<double> left(v, 0.0);
  double total = 0;
  for (std::size_t c = 0; c < data.chunk_count(); ++c) {
    const auto chunk = data.chunk(c);
    for (std::size_t t = 1; t < chunk.size(); ++t) {
      joint[chunk[t - 1] * v + chunk[t]] += 1;
      left[chunk[t - 1]] += 1;
      total += 1;
    }
  }
  double h = 0;
  for (std::size_t a = 0; a < v; ++a) {
    for (std::size_t b = 0; b < v; ++b) {
      const double n = joint[a * v + b];
      if (n > 0) h -= n / total * std::log(n / left[a]);
    }
  }
  return h;
}

}  // namespace babyhgrn
