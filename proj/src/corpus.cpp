#include "medrex/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace medrex {

namespace {

const char* kLabelNames[kNumLabels] = {"TrAP", "TrCP", "TrIP",
                                       "TrNAP", "TrWP", "Null"};
const char* kConceptTypeNames[3] = {"treatment", "problem", "test"};

bool ci_equal(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

// Cursor over one annotation line. All expect_* helpers throw ParseError
// carrying the current byte offset.
class LineScanner {
 public:
  explicit LineScanner(const std::string& line) : line_(line) {}

  void expect(std::string_view literal) {
    if (line_.compare(pos_, literal.size(), literal) != 0) {
      throw ParseError("expected '" + std::string(literal) + "'", pos_);
    }
    pos_ += literal.size();
  }

  std::string quoted_until(char delim) {
    std::size_t end = line_.find(delim, pos_);
    if (end == std::string::npos) {
      throw ParseError(std::string("unterminated quote, missing '") + delim +
                           "'",
                       pos_);
    }
    std::string out = line_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  int integer() {
    std::size_t start = pos_;
    while (pos_ < line_.size() &&
           std::isdigit(static_cast<unsigned char>(line_[pos_]))) {
      ++pos_;
    }
    if (pos_ == start) throw ParseError("expected integer", pos_);
    return std::stoi(line_.substr(start, pos_ - start));
  }

  void expect_end() {
    if (pos_ != line_.size()) {
      throw ParseError("trailing characters after annotation", pos_);
    }
  }

  std::size_t offset() const { return pos_; }

 private:
  const std::string& line_;
  std::size_t pos_ = 0;
};

// `L:S L:E` with a shared line number; cross-line spans are rejected.
void scan_span(LineScanner& sc, ConceptSpan& span) {
  std::size_t at = sc.offset();
  int line1 = sc.integer();
  sc.expect(":");
  span.tok_start = sc.integer();
  sc.expect(" ");
  int line2 = sc.integer();
  sc.expect(":");
  span.tok_end = sc.integer();
  if (line1 != line2) {
    throw ParseError("cross-line spans unsupported", at);
  }
  if (line1 < 1) throw ParseError("line numbers are 1-based", at);
  if (span.tok_start > span.tok_end) {
    throw ParseError("span start exceeds span end", at);
  }
  span.line = line1;
}

std::string span_text_from_tokens(const Sentence& sent,
                                  const ConceptSpan& span) {
  std::string out;
  for (int i = span.tok_start; i <= span.tok_end; ++i) {
    if (i > span.tok_start) out += ' ';
    out += sent.tokens[static_cast<std::size_t>(i)].text;
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

// Splits a sidecar file (.tags or .dep) into blank-line separated blocks,
// one block per non-empty sentence of the document.
std::vector<std::vector<std::string>> read_blocks(
    const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> blocks;
  std::vector<std::string> current;
  for (const std::string& line : read_lines(path)) {
    if (blank(line)) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(line);
    }
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

void apply_tags(Sentence& sent, const std::vector<std::string>& block,
                const std::filesystem::path& file) {
  if (block.size() != sent.tokens.size()) {
    throw DataError(file.string() + ": tag block for " + sent.doc_id +
                    " line " + std::to_string(sent.line) + " has " +
                    std::to_string(block.size()) + " rows, sentence has " +
                    std::to_string(sent.tokens.size()) + " tokens");
  }
  for (std::size_t i = 0; i < block.size(); ++i) {
    std::size_t t1 = block[i].find('\t');
    std::size_t t2 = t1 == std::string::npos ? t1 : block[i].find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError(file.string() + ": expected token<TAB>POS<TAB>chunk, got '" +
                      block[i] + "'");
    }
    sent.tokens[i].pos = block[i].substr(t1 + 1, t2 - t1 - 1);
    sent.tokens[i].chunk = block[i].substr(t2 + 1);
  }
}

std::vector<std::filesystem::path> sorted_files(
    const std::filesystem::path& dir, std::string_view extension) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) return files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

const char* to_string(RelationLabel label) {
  return kLabelNames[static_cast<int>(label)];
}

std::optional<RelationLabel> label_from_string(std::string_view text) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (text == kLabelNames[i]) return static_cast<RelationLabel>(i);
  }
  return std::nullopt;
}

const char* to_string(ConceptType type) {
  return kConceptTypeNames[static_cast<int>(type)];
}

std::optional<ConceptType> concept_type_from_string(std::string_view text) {
  for (int i = 0; i < 3; ++i) {
    if (text == kConceptTypeNames[i]) return static_cast<ConceptType>(i);
  }
  return std::nullopt;
}

const Sentence* Corpus::find_sentence(std::string_view doc_id,
                                      int line) const {
  for (const auto& sent : sentences) {
    if (sent->line == line && sent->doc_id == doc_id) return sent.get();
  }
  return nullptr;
}

std::vector<std::string> Corpus::doc_ids() const {
  std::vector<std::string> ids;
  for (const auto& sent : sentences) {
    if (ids.empty() || ids.back() != sent->doc_id) ids.push_back(sent->doc_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<Token> tokenize_line(const std::string& text) {
  std::vector<Token> tokens;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    Token tok;
    tok.text = word;
    tok.index = static_cast<int>(tokens.size());
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

ConceptSpan parse_concept_line(const std::string& line) {
  LineScanner sc(line);
  ConceptSpan span;
  sc.expect("c=\"");
  span.text = sc.quoted_until('"');
  sc.expect(" ");
  scan_span(sc, span);
  sc.expect("||t=\"");
  std::size_t type_at = sc.offset();
  std::string type_text = sc.quoted_until('"');
  auto ctype = concept_type_from_string(type_text);
  if (!ctype) {
    throw ParseError("unknown concept type '" + type_text + "'", type_at);
  }
  span.ctype = *ctype;
  sc.expect_end();
  return span;
}

std::string serialize_concept(const ConceptSpan& span) {
  std::ostringstream out;
  out << "c=\"" << span.text << "\" " << span.line << ':' << span.tok_start
      << ' ' << span.line << ':' << span.tok_end << "||t=\""
      << to_string(span.ctype) << '"';
  return out.str();
}

RelationLine parse_relation_line(const std::string& line) {
  LineScanner sc(line);
  RelationLine rel;
  sc.expect("c=\"");
  rel.first.text = sc.quoted_until('"');
  sc.expect(" ");
  scan_span(sc, rel.first);
  sc.expect("||r=\"");
  std::size_t label_at = sc.offset();
  std::string label_text = sc.quoted_until('"');
  auto label = label_from_string(label_text);
  if (!label || *label == RelationLabel::Null) {
    throw ParseError("unknown relation label '" + label_text + "'", label_at);
  }
  rel.label = *label;
  sc.expect("||c=\"");
  rel.second.text = sc.quoted_until('"');
  sc.expect(" ");
  scan_span(sc, rel.second);
  sc.expect_end();
  return rel;
}

std::string serialize_relation(const RelationLine& rel) {
  std::ostringstream out;
  out << "c=\"" << rel.first.text << "\" " << rel.first.line << ':'
      << rel.first.tok_start << ' ' << rel.first.line << ':'
      << rel.first.tok_end << "||r=\"" << to_string(rel.label) << "\"||c=\""
      << rel.second.text << "\" " << rel.second.line << ':'
      << rel.second.tok_start << ' ' << rel.second.line << ':'
      << rel.second.tok_end;
  return out.str();
}

std::string serialize_relation(const RelationInstance& inst) {
  RelationLine line;
  line.first = inst.treatment;
  line.second = inst.problem;
  line.label = inst.label;
  return serialize_relation(line);
}

Corpus load_corpus(const std::filesystem::path& txt_dir,
                   const std::filesystem::path& con_dir,
                   const std::filesystem::path& rel_dir,
                   const std::filesystem::path& tag_dir) {
  if (!std::filesystem::is_directory(txt_dir)) {
    throw DataError("document directory does not exist: " + txt_dir.string());
  }
  Corpus corpus;
  corpus.txt_dir = txt_dir;
  corpus.con_dir = con_dir;
  corpus.rel_dir = rel_dir;
  corpus.tag_dir = tag_dir;

  for (const auto& txt_path : sorted_files(txt_dir, ".txt")) {
    const std::string doc_id = txt_path.stem().string();

    std::vector<std::shared_ptr<const Sentence>> doc_sentences;
    std::vector<Sentence> mutable_sentences;
    const auto lines = read_lines(txt_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto tokens = tokenize_line(lines[i]);
      if (tokens.empty()) continue;  // blank line, numbering preserved
      Sentence sent;
      sent.doc_id = doc_id;
      sent.line = static_cast<int>(i) + 1;
      sent.tokens = std::move(tokens);
      mutable_sentences.push_back(std::move(sent));
    }

    const auto tag_path = tag_dir / (doc_id + ".tags");
    if (std::filesystem::exists(tag_path)) {
      auto blocks = read_blocks(tag_path);
      if (blocks.size() != mutable_sentences.size()) {
        throw DataError(tag_path.string() + ": " +
                        std::to_string(blocks.size()) + " tag blocks for " +
                        std::to_string(mutable_sentences.size()) +
                        " sentences");
      }
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        apply_tags(mutable_sentences[i], blocks[i], tag_path);
      }
    } else {
      for (auto& sent : mutable_sentences) {
        for (auto& tok : sent.tokens) {
          tok.pos = "NN";
          tok.chunk = "NP";
        }
      }
    }
    for (auto& sent : mutable_sentences) {
      doc_sentences.push_back(std::make_shared<const Sentence>(std::move(sent)));
    }

    auto sentence_at = [&](int line) -> const Sentence* {
      for (const auto& sent : doc_sentences) {
        if (sent->line == line) return sent.get();
      }
      return nullptr;
    };
    auto sentence_ref = [&](int line) -> std::shared_ptr<const Sentence> {
      for (const auto& sent : doc_sentences) {
        if (sent->line == line) return sent;
      }
      return nullptr;
    };

    std::vector<ConceptSpan> doc_concepts;
    const auto con_path = con_dir / (doc_id + ".con");
    if (std::filesystem::exists(con_path)) {
      const auto con_lines = read_lines(con_path);
      for (std::size_t i = 0; i < con_lines.size(); ++i) {
        if (blank(con_lines[i])) continue;
        ConceptSpan span;
        try {
          span = parse_concept_line(con_lines[i]);
        } catch (const ParseError& e) {
          throw DataError(con_path.string() + ":" + std::to_string(i + 1) +
                          ": " + e.what());
        }
        const Sentence* sent = sentence_at(span.line);
        if (!sent) {
          throw DataError(con_path.string() + ":" + std::to_string(i + 1) +
                          ": concept on line " + std::to_string(span.line) +
                          " but document has no such sentence");
        }
        if (span.tok_end >= static_cast<int>(sent->tokens.size())) {
          throw DataError(con_path.string() + ":" + std::to_string(i + 1) +
                          ": token range exceeds sentence length");
        }
        const std::string joined = span_text_from_tokens(*sent, span);
        if (!ci_equal(joined, span.text)) {
          throw DataError(con_path.string() + ":" + std::to_string(i + 1) +
                          ": concept text '" + span.text +
                          "' does not match sentence tokens '" + joined + "'");
        }
        doc_concepts.push_back(span);
        corpus.concepts.push_back({doc_id, span});
      }
    } else {
      corpus.warnings.push_back("no concept file for document " + doc_id);
    }

    const auto rel_path = rel_dir / (doc_id + ".rel");
    if (std::filesystem::exists(rel_path)) {
      const auto rel_lines = read_lines(rel_path);
      std::set<std::pair<std::string, std::string>> seen_pairs;
      for (std::size_t i = 0; i < rel_lines.size(); ++i) {
        if (blank(rel_lines[i])) continue;
        RelationLine rel;
        try {
          rel = parse_relation_line(rel_lines[i]);
        } catch (const ParseError& e) {
          throw DataError(rel_path.string() + ":" + std::to_string(i + 1) +
                          ": " + e.what());
        }
        auto resolve = [&](const ConceptSpan& span) -> const ConceptSpan* {
          for (const auto& c : doc_concepts) {
            if (c.same_span(span) && ci_equal(c.text, span.text)) return &c;
          }
          return nullptr;
        };
        const ConceptSpan* first = resolve(rel.first);
        const ConceptSpan* second = resolve(rel.second);
        if (!first || !second) {
          throw DataError(rel_path.string() + ":" + std::to_string(i + 1) +
                          ": relation references a concept absent from " +
                          doc_id + ".con");
        }
        if (rel.first.line != rel.second.line) {
          corpus.warnings.push_back(rel_path.string() + ":" +
                                    std::to_string(i + 1) +
                                    ": cross-sentence relation dropped");
          continue;
        }
        const ConceptSpan* treatment = nullptr;
        const ConceptSpan* problem = nullptr;
        if (first->ctype == ConceptType::Treatment &&
            second->ctype == ConceptType::Problem) {
          treatment = first;
          problem = second;
        } else if (first->ctype == ConceptType::Problem &&
                   second->ctype == ConceptType::Treatment) {
          treatment = second;
          problem = first;
        } else {
          throw DataError(rel_path.string() + ":" + std::to_string(i + 1) +
                          ": relation arguments are not a (treatment, problem)"
                          " pair");
        }
        auto span_key = [](const ConceptSpan& s) {
          return std::to_string(s.line) + ":" + std::to_string(s.tok_start) +
                 "-" + std::to_string(s.tok_end);
        };
        auto pair_key =
            std::make_pair(span_key(*treatment), span_key(*problem));
        if (!seen_pairs.insert(pair_key).second) {
          corpus.warnings.push_back(
              rel_path.string() + ":" + std::to_string(i + 1) +
              ": duplicate annotation for pair, keeping first");
          continue;
        }
        RelationInstance inst;
        inst.sentence = sentence_ref(rel.first.line);
        inst.treatment = *treatment;
        inst.problem = *problem;
        inst.label = rel.label;
        corpus.gold_relations.push_back(std::move(inst));
      }
    }

    corpus.sentences.insert(corpus.sentences.end(), doc_sentences.begin(),
                            doc_sentences.end());
  }
  return corpus;
}

std::vector<RelationInstance> generate_candidates(const Corpus& corpus) {
  // Index gold labels by unordered pair identity.
  auto key_of = [](std::string_view doc, const ConceptSpan& t,
                   const ConceptSpan& p) {
    return std::string(doc) + "\t" + std::to_string(t.line) + ":" +
           std::to_string(t.tok_start) + "-" + std::to_string(t.tok_end) +
           "\t" + std::to_string(p.tok_start) + "-" +
           std::to_string(p.tok_end);
  };
  std::map<std::string, RelationLabel> gold;
  for (const auto& rel : corpus.gold_relations) {
    gold.emplace(key_of(rel.sentence->doc_id, rel.treatment, rel.problem),
                 rel.label);
  }

  std::vector<RelationInstance> out;
  for (const auto& sent : corpus.sentences) {
    std::vector<const ConceptSpan*> treatments, problems;
    for (const auto& dc : corpus.concepts) {
      if (dc.doc_id != sent->doc_id || dc.span.line != sent->line) continue;
      if (dc.span.ctype == ConceptType::Treatment) {
        treatments.push_back(&dc.span);
      } else if (dc.span.ctype == ConceptType::Problem) {
        problems.push_back(&dc.span);
      }
    }
    auto by_start = [](const ConceptSpan* a, const ConceptSpan* b) {
      return std::tie(a->tok_start, a->tok_end) <
             std::tie(b->tok_start, b->tok_end);
    };
    std::sort(treatments.begin(), treatments.end(), by_start);
    std::sort(problems.begin(), problems.end(), by_start);
    for (const ConceptSpan* t : treatments) {
      for (const ConceptSpan* p : problems) {
        RelationInstance inst;
        inst.sentence = sent;
        inst.treatment = *t;
        inst.problem = *p;
        auto it = gold.find(key_of(sent->doc_id, *t, *p));
        inst.label = it == gold.end() ? RelationLabel::Null : it->second;
        out.push_back(std::move(inst));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RelationInstance& a, const RelationInstance& b) {
                     return std::tie(a.sentence->doc_id, a.sentence->line,
                                     a.treatment.tok_start,
                                     a.problem.tok_start) <
                            std::tie(b.sentence->doc_id, b.sentence->line,
                                     b.treatment.tok_start,
                                     b.problem.tok_start);
                   });
  return out;
}

std::vector<RelationInstance> sample_negatives(
    const std::vector<RelationInstance>& instances, std::size_t n,
    std::uint64_t seed) {
  std::vector<std::size_t> null_indices;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].label == RelationLabel::Null) null_indices.push_back(i);
  }
  const std::size_t take = std::min(n, null_indices.size());

  // Partial Fisher-Yates over the null indices, then restore file order.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, null_indices.size() - 1);
    std::swap(null_indices[i], null_indices[pick(rng)]);
  }
  null_indices.resize(take);
  std::sort(null_indices.begin(), null_indices.end());

  std::vector<RelationInstance> out;
  std::size_t next_null = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].label != RelationLabel::Null) {
      out.push_back(instances[i]);
    } else if (next_null < null_indices.size() &&
               null_indices[next_null] == i) {
      out.push_back(instances[i]);
      ++next_null;
    }
  }
  return out;
}

}  // namespace medrex
