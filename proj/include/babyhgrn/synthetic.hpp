#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "babyhgrn/evaluation.hpp"
#include "babyhgrn/packed.hpp"
#include "babyhgrn/random.hpp"
#include "babyhgrn/text_encoder.hpp"

namespace babyhgrn {

// Whitespace-delimited closed vocabulary. Ids follow the shared specials;
// unknown words map to unk.
class WordVocabulary : public TextEncoder {
 public:
  explicit WordVocabulary(std::vector<std::string> words);

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return kSpecialCount + words_.size(); }

  const std::vector<std::string>& words() const { return words_; }
  TokenId id(std::string_view word) const;

  nlohmann::json to_json() const;
  static WordVocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct GrammarOptions {
  double plural_probability = 0.5;
  double adjective_probability = 0.3;
  double pp_probability = 0.25;  // prepositional phrase after the subject
  double intransitive_probability = 0.6;
  double habit_probability = 0.8;  // intransitive verb is the noun's own verb
  double preverbal_probability = 0.3;  // "often"/"always" before an intransitive verb
  double adverb_probability = 0.3;
  std::size_t min_sentences = 2;
  std::size_t max_sentences = 6;
};

struct Sentence {
  std::vector<std::string> words;
  std::size_t verb_position = 0;
  bool plural_subject = false;
  bool attractor = false;

  std::string text() const;
};

// Small agreement grammar (under 64 word types) for desk experiments. Main
// verbs agree with the subject head noun; each noun has a preferred
// intransitive verb and, per transitive verb, a preferred object.
class SyntheticGrammar {
 public:
  explicit SyntheticGrammar(GrammarOptions options = {});

  const WordVocabulary& vocabulary() const { return vocab_; }
  const GrammarOptions& options() const { return options_; }

  // Object noun a transitive verb favours for a given subject noun (never the
  // subject itself).
  static std::size_t preferred_object(std::size_t noun, std::size_t verb);

  Sentence sample_sentence(Rng& rng) const;
  Sentence sample_sentence(Rng& rng, bool plural_subject) const;
  std::string sample_document(Rng& rng) const;

  // Documents totalling at least `target_words` words.
  std::vector<std::string> corpus(std::size_t target_words, std::uint64_t seed) const;

  // Good/bad sentences differing only in the main verb's number. Items come
  // in twins: the same sentence frame with a singular, then a plural subject. Tag "attractor" marks a prepositional phrase
  // between subject and verb, otherwise "agreement".
  std::vector<MinimalPair> minimal_pairs(std::size_t count, std::uint64_t seed) const;

  // Context is "<subject> <transitive verb> the"; candidates are singular
  // nouns, gold being the preferred object of that subject and verb, placed at
  // a random position. Tag is the verb.
  std::vector<ChoiceInstance> choice_instances(std::size_t count, std::size_t candidates,
                                               std::uint64_t seed) const;

 private:
  std::size_t noun_phrase(Rng& rng, bool plural, std::vector<std::string>& out,
                          std::optional<std::size_t> forced = std::nullopt) const;

  GrammarOptions options_;
  WordVocabulary vocab_;
};

// H(X_t | X_{t-1}) in nats over consecutive pairs inside each chunk.
double bigram_conditional_entropy(const PackedDataset& data);

}  // namespace babyhgrn
