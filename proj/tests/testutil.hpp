#pragma once

// Shared fixtures and independent oracles used across the test suites.

#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medrex/corpus.hpp"
#include "medrex/network.hpp"

namespace medrex::testutil {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("medrex_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  static int& counter() {
    static int value = 0;
    return value;
  }
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << content;
}

inline std::shared_ptr<const Sentence> make_sentence(const std::string& doc_id,
                                                     int line,
                                                     const std::string& text) {
  Sentence sent;
  sent.doc_id = doc_id;
  sent.line = line;
  sent.tokens = tokenize_line(text);
  for (auto& tok : sent.tokens) {
    tok.pos = "NN";
    tok.chunk = "NP";
  }
  return std::make_shared<const Sentence>(std::move(sent));
}

inline ConceptSpan span_of(const Sentence& sent, int start, int end,
                           ConceptType ctype) {
  ConceptSpan span;
  span.line = sent.line;
  span.tok_start = start;
  span.tok_end = end;
  span.ctype = ctype;
  std::string text;
  for (int i = start; i <= end; ++i) {
    if (i > start) text += ' ';
    text += sent.tokens[static_cast<std::size_t>(i)].text;
  }
  span.text = text;
  return span;
}

inline RelationInstance make_instance(std::shared_ptr<const Sentence> sent,
                                      int t_start, int t_end, int p_start,
                                      int p_end,
                                      RelationLabel label = RelationLabel::Null) {
  RelationInstance inst;
  inst.treatment = span_of(*sent, t_start, t_end, ConceptType::Treatment);
  inst.problem = span_of(*sent, p_start, p_end, ConceptType::Problem);
  inst.sentence = std::move(sent);
  inst.label = label;
  return inst;
}

// The worked example document: both drug-fever pairs are TrAP, the second
// sentence feeds the phrase-pattern tests.
inline void write_fixture_doc(const std::filesystem::path& root) {
  write_file(root / "txt" / "doc1.txt",
             "Given her fever the patient was treated with Ceptaz and "
             "Levaquin .\n"
             "His rash is diagnosed with steroids .\n");
  write_file(root / "con" / "doc1.con",
             "c=\"fever\" 1:2 1:2||t=\"problem\"\n"
             "c=\"Ceptaz\" 1:8 1:8||t=\"treatment\"\n"
             "c=\"Levaquin\" 1:10 1:10||t=\"treatment\"\n"
             "c=\"rash\" 2:1 2:1||t=\"problem\"\n"
             "c=\"steroids\" 2:5 2:5||t=\"treatment\"\n");
  write_file(root / "rel" / "doc1.rel",
             "c=\"Ceptaz\" 1:8 1:8||r=\"TrAP\"||c=\"fever\" 1:2 1:2\n"
             "c=\"Levaquin\" 1:10 1:10||r=\"TrAP\"||c=\"fever\" 1:2 1:2\n"
             "c=\"steroids\" 2:5 2:5||r=\"TrAP\"||c=\"rash\" 2:1 2:1\n");
}

// --- exact-arithmetic oracle for the metric formulas ----------------------

struct Frac {
  long long num = 0;
  long long den = 1;

  Frac() = default;
  Frac(long long n, long long d) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  friend Frac operator+(Frac a, Frac b) {
    return {a.num * b.den + b.num * a.den, a.den * b.den};
  }
  friend Frac operator*(Frac a, Frac b) { return {a.num * b.num, a.den * b.den}; }
  friend Frac operator/(Frac a, Frac b) { return {a.num * b.den, a.den * b.num}; }
  friend bool operator==(const Frac& a, const Frac& b) {
    return a.num == b.num && a.den == b.den;
  }

  double value() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

struct RationalPrf {
  Frac precision, recall, f;
};

// Straight from the formula definitions, every 0/0 as 0.
inline RationalPrf rational_prf(long long tp, long long fp, long long fn) {
  RationalPrf out;
  out.precision = tp + fp > 0 ? Frac(tp, tp + fp) : Frac(0, 1);
  out.recall = tp + fn > 0 ? Frac(tp, tp + fn) : Frac(0, 1);
  const Frac sum = out.precision + out.recall;
  out.f = sum.num != 0 ? Frac(2, 1) * out.precision * out.recall / sum
                       : Frac(0, 1);
  return out;
}

// --- finite-difference gradient oracle -------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-4});
  return std::abs(a - b) / scale;
}

// Central finite differences over every parameter of the model against the
// analytic gradients.
inline GradCheckReport finite_difference_check(BiLstmModel& model,
                                               const EncodedInstance& enc,
                                               RelationLabel label,
                                               double epsilon = 1e-4) {
  const ParamSet grads = backward(enc, label, model);

  std::vector<double*> grad_data;
  std::vector<Eigen::Index> sizes;
  const_cast<ParamSet&>(grads).visit([&](auto& t) {
    grad_data.push_back(t.data());
    sizes.push_back(t.size());
  });
  std::vector<double*> model_data;
  model.params.visit([&](auto& t) { model_data.push_back(t.data()); });

  GradCheckReport report;
  for (std::size_t k = 0; k < grad_data.size(); ++k) {
    for (Eigen::Index e = 0; e < sizes[k]; ++e) {
      double& theta = model_data[k][e];
      const double saved = theta;
      theta = saved + epsilon;
      const double plus = loss(forward(enc, model), label);
      theta = saved - epsilon;
      const double minus = loss(forward(enc, model), label);
      theta = saved;
      const double fd = (plus - minus) / (2.0 * epsilon);
      report.max_rel_error =
          std::max(report.max_rel_error, rel_error(grad_data[k][e], fd));
      ++report.checked;
    }
  }
  return report;
}

// Random small model + instance for gradient checking.
struct SmallSetup {
  BiLstmModel model;
  EncodedInstance enc;
  RelationLabel label = RelationLabel::Null;
};

inline SmallSetup random_small_setup(std::uint64_t seed, int sentence_len) {
  std::mt19937_64 rng(seed);
  TrainConfig config;
  config.lstm_hidden = 3;
  config.d_w = 4;
  config.d_p = 2;
  config.d_c = 2;
  config.d_pos = 2;
  config.p_max = 6;

  SmallSetup setup;
  const VocabDims dims{8, 3, 3};
  setup.model = make_model(config, dims);
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  setup.model.params.visit([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = init(rng);
  });

  std::uniform_int_distribution<int> word(0, dims.words);
  std::uniform_int_distribution<int> tag(0, dims.pos_tags);
  std::uniform_int_distribution<int> offset(-8, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < sentence_len; ++t) {
    setup.enc.word_ids.push_back(word(rng));
    setup.enc.pos_ids.push_back(tag(rng));
    setup.enc.chunk_ids.push_back(tag(rng));
    setup.enc.pos_to_treatment.push_back(offset(rng));
    setup.enc.pos_to_problem.push_back(offset(rng));
  }
  setup.enc.sentence_feats.pos_seq_onehot.assign(kPosSequenceDim, 0.0);
  setup.enc.sentence_feats.pos_seq_onehot[static_cast<std::size_t>(
      std::uniform_int_distribution<int>(0, kPosSequenceDim - 1)(rng))] = 1.0;
  setup.enc.sentence_feats.pmi = unit(rng) * 4.0 - 2.0;
  for (auto& a : setup.enc.sentence_feats.assertion_idx) a = unit(rng);
  setup.label = static_cast<RelationLabel>(
      std::uniform_int_distribution<int>(0, kNumLabels - 1)(rng));
  setup.enc.label = setup.label;
  return setup;
}

}  // namespace medrex::testutil
