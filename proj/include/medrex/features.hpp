#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "medrex/corpus.hpp"

namespace medrex {

inline constexpr int kPosSequenceDim = 100;
inline constexpr int kAssertionDim = 7;
inline constexpr int kSentenceFeatureDim = kPosSequenceDim + 1 + kAssertionDim;

// Dense string->id maps, id 0 reserved for unknown input.
struct FeatureVocab {
  std::unordered_map<std::string, int> word_ids;
  std::unordered_map<std::string, int> pos_ids;
  std::unordered_map<std::string, int> chunk_ids;

  int word(const std::string& text) const;
  int pos(const std::string& tag) const;
  int chunk(const std::string& tag) const;

  int word_count() const { return static_cast<int>(word_ids.size()); }
  int pos_count() const { return static_cast<int>(pos_ids.size()); }
  int chunk_count() const { return static_cast<int>(chunk_ids.size()); }
};

// Ids assigned in first-occurrence order over the corpus sentences.
FeatureVocab build_vocab(const Corpus& train);

// Signed token distance to the span: negative left of it, zero inside,
// positive right of it.
std::vector<int> position_vector(int sentence_len, const ConceptSpan& span);

using PosSequence = std::vector<std::string>;

// POS tags of the tokens strictly between the two spans, in surface order.
PosSequence between_pos_sequence(const RelationInstance& inst);

// The k most frequent between-span POS sequences over the positive training
// instances; ties broken lexicographically. Adjacent entities contribute the
// empty sequence.
std::vector<PosSequence> top_pos_sequences(const Corpus& train,
                                           std::size_t k = kPosSequenceDim);

// One-hot over the top list, zero vector for unseen sequences, padded to
// kPosSequenceDim.
std::vector<double> encode_pos_sequence(const RelationInstance& inst,
                                        const std::vector<PosSequence>& top);

void save_pos_sequences(const std::vector<PosSequence>& top,
                        const std::filesystem::path& path);
std::vector<PosSequence> load_pos_sequences(const std::filesystem::path& path);

// Sentence-level co-occurrence counts of case-folded concept texts.
struct CooccurrenceCounts {
  std::size_t num_sentences = 0;
  std::unordered_map<std::string, int> text_counts;
  std::map<std::pair<std::string, std::string>, int> pair_counts;

  static CooccurrenceCounts build(const Corpus& train);

  int count(const std::string& text) const;
  int count(const std::string& a, const std::string& b) const;

  void save(const std::filesystem::path& path) const;
  static CooccurrenceCounts load(const std::filesystem::path& path);
};

// ln(((c(t,p)+1) * N) / ((c(t)+1) * (c(p)+1))), add-one smoothed.
double compute_pmi(const CooccurrenceCounts& counts,
                   const std::string& treatment_text,
                   const std::string& problem_text);

// Seven keyword lists in fixed order. Entries are lowercase, files are plain
// word lists with '#' comments.
struct AssertionLexicons {
  static const std::array<const char*, kAssertionDim> kNames;

  std::array<std::unordered_set<std::string>, kAssertionDim> lists;

  static AssertionLexicons load(const std::filesystem::path& dir);
};

// Per lexicon: (1 + index of the first matching token) / sentence length,
// 0 when nothing matches. Matching is case-insensitive.
std::array<double, kAssertionDim> assertion_indices(
    const Sentence& sentence, const AssertionLexicons& lexicons);

struct SentenceLevelFeatures {
  std::vector<double> pos_seq_onehot;            // kPosSequenceDim
  double pmi = 0.0;
  std::array<double, kAssertionDim> assertion_idx{};

  std::vector<double> to_vector() const;         // kSentenceFeatureDim
};

// Per-token feature ids plus the sentence-level block. Position channels
// hold raw signed offsets; clipping happens at embedding time.
struct EncodedInstance {
  std::vector<int> word_ids;
  std::vector<int> pos_ids;
  std::vector<int> chunk_ids;
  std::vector<int> pos_to_treatment;
  std::vector<int> pos_to_problem;
  SentenceLevelFeatures sentence_feats;
  RelationLabel label = RelationLabel::Null;

  int length() const { return static_cast<int>(word_ids.size()); }
};

EncodedInstance encode_instance(const RelationInstance& inst,
                                const FeatureVocab& vocab,
                                const std::vector<PosSequence>& top_pos,
                                const CooccurrenceCounts& counts,
                                const AssertionLexicons& lexicons);

}  // namespace medrex
