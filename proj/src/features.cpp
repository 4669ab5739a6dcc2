#include "medrex/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace medrex {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

int lookup(const std::unordered_map<std::string, int>& ids,
           const std::string& key) {
  auto it = ids.find(key);
  return it == ids.end() ? 0 : it->second;
}

void assign_id(std::unordered_map<std::string, int>& ids,
               const std::string& key) {
  ids.emplace(key, static_cast<int>(ids.size()) + 1);
}

// Surface-ordered (earlier, later) view of the instance spans.
std::pair<const ConceptSpan*, const ConceptSpan*> surface_order(
    const RelationInstance& inst) {
  if (inst.treatment.tok_start <= inst.problem.tok_start) {
    return {&inst.treatment, &inst.problem};
  }
  return {&inst.problem, &inst.treatment};
}

}  // namespace

int FeatureVocab::word(const std::string& text) const {
  return lookup(word_ids, text);
}
int FeatureVocab::pos(const std::string& tag) const {
  return lookup(pos_ids, tag);
}
int FeatureVocab::chunk(const std::string& tag) const {
  return lookup(chunk_ids, tag);
}

FeatureVocab build_vocab(const Corpus& train) {
  FeatureVocab vocab;
  for (const auto& sent : train.sentences) {
    for (const Token& tok : sent->tokens) {
      if (!vocab.word_ids.contains(tok.text)) assign_id(vocab.word_ids, tok.text);
      if (!vocab.pos_ids.contains(tok.pos)) assign_id(vocab.pos_ids, tok.pos);
      if (!vocab.chunk_ids.contains(tok.chunk)) {
        assign_id(vocab.chunk_ids, tok.chunk);
      }
    }
  }
  return vocab;
}

std::vector<int> position_vector(int sentence_len, const ConceptSpan& span) {
  if (span.tok_start < 0 || span.tok_start > span.tok_end ||
      span.tok_end >= sentence_len) {
    throw std::out_of_range("span [" + std::to_string(span.tok_start) + "," +
                            std::to_string(span.tok_end) +
                            "] out of bounds for sentence length " +
                            std::to_string(sentence_len));
  }
  std::vector<int> offsets(static_cast<std::size_t>(sentence_len));
  for (int i = 0; i < sentence_len; ++i) {
    if (i < span.tok_start) {
      offsets[static_cast<std::size_t>(i)] = i - span.tok_start;
    } else if (i > span.tok_end) {
      offsets[static_cast<std::size_t>(i)] = i - span.tok_end;
    }  // inside the span: 0
  }
  return offsets;
}

PosSequence between_pos_sequence(const RelationInstance& inst) {
  auto [first, second] = surface_order(inst);
  PosSequence seq;
  const auto& tokens = inst.sentence->tokens;
  for (int i = first->tok_end + 1; i < second->tok_start; ++i) {
    seq.push_back(tokens[static_cast<std::size_t>(i)].pos);
  }
  return seq;
}

std::vector<PosSequence> top_pos_sequences(const Corpus& train,
                                           std::size_t k) {
  std::map<PosSequence, int> counts;
  for (const auto& rel : train.gold_relations) {
    counts[between_pos_sequence(rel)]++;
  }
  std::vector<std::pair<PosSequence, int>> ranked(counts.begin(),
                                                  counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  std::vector<PosSequence> top;
  top.reserve(ranked.size());
  for (auto& [seq, count] : ranked) top.push_back(std::move(seq));
  return top;
}

std::vector<double> encode_pos_sequence(const RelationInstance& inst,
                                        const std::vector<PosSequence>& top) {
  std::vector<double> onehot(kPosSequenceDim, 0.0);
  const PosSequence seq = between_pos_sequence(inst);
  for (std::size_t j = 0; j < top.size() && j < onehot.size(); ++j) {
    if (top[j] == seq) {
      onehot[j] = 1.0;
      break;
    }
  }
  return onehot;
}

void save_pos_sequences(const std::vector<PosSequence>& top,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const PosSequence& seq : top) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i > 0) out << ' ';
      out << seq[i];
    }
    out << '\n';
  }
}

std::vector<PosSequence> load_pos_sequences(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<PosSequence> top;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    PosSequence seq;  // an empty line is the empty sequence
    std::istringstream words(line);
    std::string tag;
    while (words >> tag) seq.push_back(tag);
    top.push_back(std::move(seq));
  }
  return top;
}

CooccurrenceCounts CooccurrenceCounts::build(const Corpus& train) {
  CooccurrenceCounts counts;
  counts.num_sentences = train.sentences.size();
  for (const auto& sent : train.sentences) {
    std::set<std::string> texts;
    for (const auto& dc : train.concepts) {
      if (dc.doc_id == sent->doc_id && dc.span.line == sent->line) {
        texts.insert(lower(dc.span.text));
      }
    }
    for (auto it = texts.begin(); it != texts.end(); ++it) {
      counts.text_counts[*it]++;
      for (auto jt = std::next(it); jt != texts.end(); ++jt) {
        counts.pair_counts[{*it, *jt}]++;
      }
    }
  }
  return counts;
}

int CooccurrenceCounts::count(const std::string& text) const {
  auto it = text_counts.find(lower(text));
  return it == text_counts.end() ? 0 : it->second;
}

int CooccurrenceCounts::count(const std::string& a,
                              const std::string& b) const {
  std::string la = lower(a), lb = lower(b);
  if (lb < la) std::swap(la, lb);
  auto it = pair_counts.find({la, lb});
  return it == pair_counts.end() ? 0 : it->second;
}

void CooccurrenceCounts::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "N\t" << num_sentences << '\n';
  std::vector<std::pair<std::string, int>> texts(text_counts.begin(),
                                                 text_counts.end());
  std::sort(texts.begin(), texts.end());
  for (const auto& [text, count] : texts) {
    out << "T\t" << count << '\t' << text << '\n';
  }
  for (const auto& [pair, count] : pair_counts) {
    out << "P\t" << count << '\t' << pair.first << '\t' << pair.second << '\n';
  }
}

CooccurrenceCounts CooccurrenceCounts::load(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CooccurrenceCounts counts;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string kind;
    std::getline(fields, kind, '\t');
    if (kind == "N") {
      fields >> counts.num_sentences;
    } else if (kind == "T") {
      std::string count_text, text;
      std::getline(fields, count_text, '\t');
      std::getline(fields, text);
      counts.text_counts[text] = std::stoi(count_text);
    } else if (kind == "P") {
      std::string count_text, a, b;
      std::getline(fields, count_text, '\t');
      std::getline(fields, a, '\t');
      std::getline(fields, b);
      counts.pair_counts[{a, b}] = std::stoi(count_text);
    } else {
      throw DataError(path.string() + ": unknown record '" + kind + "'");
    }
  }
  return counts;
}

double compute_pmi(const CooccurrenceCounts& counts,
                   const std::string& treatment_text,
                   const std::string& problem_text) {
  if (counts.num_sentences == 0) return 0.0;
  const double joint = counts.count(treatment_text, problem_text) + 1.0;
  const double ct = counts.count(treatment_text) + 1.0;
  const double cp = counts.count(problem_text) + 1.0;
  return std::log(joint * static_cast<double>(counts.num_sentences) /
                  (ct * cp));
}

const std::array<const char*, kAssertionDim> AssertionLexicons::kNames = {
    "allergy", "cause", "fail", "certainty",
    "history", "hypothetical", "uncertainty"};

AssertionLexicons AssertionLexicons::load(const std::filesystem::path& dir) {
  AssertionLexicons lex;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    const auto path = dir / (std::string(kNames[i]) + ".txt");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream words(line);
      std::string word;
      while (words >> word) lex.lists[i].insert(lower(word));
    }
  }
  return lex;
}

std::array<double, kAssertionDim> assertion_indices(
    const Sentence& sentence, const AssertionLexicons& lexicons) {
  std::array<double, kAssertionDim> out{};
  const double len = static_cast<double>(sentence.tokens.size());
  for (std::size_t d = 0; d < lexicons.lists.size(); ++d) {
    for (const Token& tok : sentence.tokens) {
      if (lexicons.lists[d].contains(lower(tok.text))) {
        out[d] = (1.0 + tok.index) / len;
        break;
      }
    }
  }
  return out;
}

std::vector<double> SentenceLevelFeatures::to_vector() const {
  std::vector<double> out;
  out.reserve(kSentenceFeatureDim);
  out.insert(out.end(), pos_seq_onehot.begin(), pos_seq_onehot.end());
  out.resize(kPosSequenceDim, 0.0);
  out.push_back(pmi);
  out.insert(out.end(), assertion_idx.begin(), assertion_idx.end());
  return out;
}

EncodedInstance encode_instance(const RelationInstance& inst,
                                const FeatureVocab& vocab,
                                const std::vector<PosSequence>& top_pos,
                                const CooccurrenceCounts& counts,
                                const AssertionLexicons& lexicons) {
  const Sentence& sent = *inst.sentence;
  const int len = static_cast<int>(sent.tokens.size());

  EncodedInstance enc;
  enc.word_ids.reserve(sent.tokens.size());
  for (const Token& tok : sent.tokens) {
    enc.word_ids.push_back(vocab.word(tok.text));
    enc.pos_ids.push_back(vocab.pos(tok.pos));
    enc.chunk_ids.push_back(vocab.chunk(tok.chunk));
  }
  enc.pos_to_treatment = position_vector(len, inst.treatment);
  enc.pos_to_problem = position_vector(len, inst.problem);
  enc.sentence_feats.pos_seq_onehot = encode_pos_sequence(inst, top_pos);
  enc.sentence_feats.pmi =
      compute_pmi(counts, inst.treatment.text, inst.problem.text);
  enc.sentence_feats.assertion_idx = assertion_indices(sent, lexicons);
  enc.label = inst.label;
  return enc;
}

}  // namespace medrex
