#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medrex/errors.hpp"

namespace medrex {

// Label order is the fixed enumeration order used for argmax tie-breaking
// and for all reports.
enum class RelationLabel : int { TrAP = 0, TrCP, TrIP, TrNAP, TrWP, Null };

inline constexpr int kNumLabels = 6;
inline constexpr int kNumPositiveLabels = 5;

const char* to_string(RelationLabel label);
std::optional<RelationLabel> label_from_string(std::string_view text);

enum class ConceptType : int { Treatment = 0, Problem, Test };

const char* to_string(ConceptType type);
std::optional<ConceptType> concept_type_from_string(std::string_view text);

struct Token {
  std::string text;
  int index = 0;  // 0-based position in the owning sentence
  std::string pos = "UNK";
  std::string chunk = "UNK";
};

struct Sentence {
  std::string doc_id;
  int line = 0;  // 1-based line number in the source document
  std::vector<Token> tokens;
};

// Token span of one annotated concept. Line numbers are 1-based, token
// indices 0-based with inclusive end.
struct ConceptSpan {
  std::string text;
  int line = 0;
  int tok_start = 0;
  int tok_end = 0;
  ConceptType ctype = ConceptType::Problem;

  int length() const { return tok_end - tok_start + 1; }
  bool same_span(const ConceptSpan& other) const {
    return line == other.line && tok_start == other.tok_start &&
           tok_end == other.tok_end;
  }
};

// One classification unit: a (treatment, problem) pair inside a sentence.
struct RelationInstance {
  std::shared_ptr<const Sentence> sentence;
  ConceptSpan treatment;
  ConceptSpan problem;
  RelationLabel label = RelationLabel::Null;
};

// A relation file line as written: two spans in file order plus the label.
// Concept roles are resolved later against the concept file.
struct RelationLine {
  ConceptSpan first;
  ConceptSpan second;
  RelationLabel label = RelationLabel::Null;
};

struct Corpus {
  struct DocConcept {
    std::string doc_id;
    ConceptSpan span;
  };

  std::vector<std::shared_ptr<const Sentence>> sentences;
  std::vector<DocConcept> concepts;
  std::vector<RelationInstance> gold_relations;
  std::vector<std::string> warnings;

  std::filesystem::path txt_dir, con_dir, rel_dir, tag_dir;

  const Sentence* find_sentence(std::string_view doc_id, int line) const;
  std::vector<std::string> doc_ids() const;
  bool empty() const { return sentences.empty(); }
};

// Whitespace tokenization of one pre-tokenized document line. Empty or
// whitespace-only input yields an empty vector; the caller keeps line
// numbering and skips the sentence.
std::vector<Token> tokenize_line(const std::string& text);

// `c="<text>" L:S L:E||t="<type>"`
ConceptSpan parse_concept_line(const std::string& line);
std::string serialize_concept(const ConceptSpan& span);

// `c="<text1>" L:S1 L:E1||r="<LABEL>"||c="<text2>" L:S2 L:E2`
RelationLine parse_relation_line(const std::string& line);
std::string serialize_relation(const RelationLine& rel);
std::string serialize_relation(const RelationInstance& inst);

// Loads every document under txt_dir with its .con/.rel/.tags sidecars
// paired by basename. Tag files are optional (placeholder POS "NN",
// chunk "NP" otherwise); missing .con produces a warning.
Corpus load_corpus(const std::filesystem::path& txt_dir,
                   const std::filesystem::path& con_dir,
                   const std::filesystem::path& rel_dir,
                   const std::filesystem::path& tag_dir);

// One instance per (treatment, problem) pair co-occurring in a sentence,
// gold label attached where the unordered pair matches, Null otherwise.
// Ordered by (doc_id, line, treatment start, problem start).
std::vector<RelationInstance> generate_candidates(const Corpus& corpus);

// Keeps every positive instance and min(n, available) Null instances chosen
// uniformly without replacement; original ordering is preserved.
std::vector<RelationInstance> sample_negatives(
    const std::vector<RelationInstance>& instances, std::size_t n,
    std::uint64_t seed);

}  // namespace medrex
