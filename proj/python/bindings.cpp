#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "medrex/pipeline.hpp"

namespace py = pybind11;
using namespace medrex;

namespace {

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

PYBIND11_MODULE(_medrex, m) {
  m.doc() = "treatment-problem relation extraction core";

  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<ModelFormatError>(m, "ModelFormatError");
  py::register_exception<PatternError>(m, "PatternError");
  py::register_exception<TrainingError>(m, "TrainingError");

  py::enum_<RelationLabel>(m, "RelationLabel")
      .value("TrAP", RelationLabel::TrAP)
      .value("TrCP", RelationLabel::TrCP)
      .value("TrIP", RelationLabel::TrIP)
      .value("TrNAP", RelationLabel::TrNAP)
      .value("TrWP", RelationLabel::TrWP)
      .value("Null", RelationLabel::Null);

  py::enum_<ConceptType>(m, "ConceptType")
      .value("Treatment", ConceptType::Treatment)
      .value("Problem", ConceptType::Problem)
      .value("Test", ConceptType::Test);

  py::class_<Token>(m, "Token")
      .def(py::init<>())
      .def_readwrite("text", &Token::text)
      .def_readwrite("index", &Token::index)
      .def_readwrite("pos", &Token::pos)
      .def_readwrite("chunk", &Token::chunk)
      .def("__repr__", [](const Token& t) {
        return "Token(" + t.text + "/" + t.pos + ")";
      });

  py::class_<Sentence>(m, "Sentence")
      .def(py::init<>())
      .def_readwrite("doc_id", &Sentence::doc_id)
      .def_readwrite("line", &Sentence::line)
      .def_readwrite("tokens", &Sentence::tokens);

  py::class_<ConceptSpan>(m, "ConceptSpan")
      .def(py::init<>())
      .def_readwrite("text", &ConceptSpan::text)
      .def_readwrite("line", &ConceptSpan::line)
      .def_readwrite("tok_start", &ConceptSpan::tok_start)
      .def_readwrite("tok_end", &ConceptSpan::tok_end)
      .def_readwrite("ctype", &ConceptSpan::ctype);

  py::class_<RelationInstance>(m, "RelationInstance")
      .def_property_readonly(
          "sentence", [](const RelationInstance& r) { return *r.sentence; })
      .def_readwrite("treatment", &RelationInstance::treatment)
      .def_readwrite("problem", &RelationInstance::problem)
      .def_readwrite("label", &RelationInstance::label);
  m.def("make_instance",
        [](const Sentence& sentence, const ConceptSpan& treatment,
           const ConceptSpan& problem, RelationLabel label) {
          RelationInstance inst;
          inst.sentence = std::make_shared<const Sentence>(sentence);
          inst.treatment = treatment;
          inst.problem = problem;
          inst.label = label;
          return inst;
        },
        py::arg("sentence"), py::arg("treatment"), py::arg("problem"),
        py::arg("label") = RelationLabel::Null);

  py::class_<Corpus>(m, "Corpus")
      .def_property_readonly("sentences",
                             [](const Corpus& c) {
                               std::vector<Sentence> out;
                               for (const auto& s : c.sentences)
                                 out.push_back(*s);
                               return out;
                             })
      .def_property_readonly("gold_relations",
                             [](const Corpus& c) { return c.gold_relations; })
      .def_readonly("warnings", &Corpus::warnings)
      .def_property_readonly("num_concepts",
                             [](const Corpus& c) { return c.concepts.size(); })
      .def("doc_ids", &Corpus::doc_ids);

  m.def("tokenize_line", &tokenize_line);
  m.def("parse_concept_line", &parse_concept_line);
  m.def("serialize_concept", &serialize_concept);
  m.def("parse_relation_line", [](const std::string& line) {
    const RelationLine rel = parse_relation_line(line);
    return py::make_tuple(rel.first, rel.second, rel.label);
  });
  m.def("serialize_relation",
        [](const ConceptSpan& first, const ConceptSpan& second,
           RelationLabel label) {
          RelationLine rel{first, second, label};
          return serialize_relation(rel);
        });
  m.def("load_corpus", &load_corpus, py::arg("txt_dir"), py::arg("con_dir"),
        py::arg("rel_dir"), py::arg("tag_dir"));
  m.def("load_corpus_root", &load_corpus_root);
  m.def("generate_candidates", &generate_candidates);
  m.def("sample_negatives", &sample_negatives, py::arg("instances"),
        py::arg("n"), py::arg("seed"));

  py::class_<FeatureVocab>(m, "FeatureVocab")
      .def(py::init<>())
      .def("word", &FeatureVocab::word)
      .def("pos", &FeatureVocab::pos)
      .def("chunk", &FeatureVocab::chunk)
      .def_property_readonly("word_count", &FeatureVocab::word_count)
      .def_property_readonly("pos_count", &FeatureVocab::pos_count)
      .def_property_readonly("chunk_count", &FeatureVocab::chunk_count);
  m.def("build_vocab", &build_vocab);
  m.def("position_vector", &position_vector, py::arg("sentence_len"),
        py::arg("span"));
  m.def("top_pos_sequences", &top_pos_sequences, py::arg("train"),
        py::arg("k") = static_cast<std::size_t>(kPosSequenceDim));
  m.def("encode_pos_sequence", &encode_pos_sequence);

  py::class_<CooccurrenceCounts>(m, "CooccurrenceCounts")
      .def(py::init<>())
      .def_static("build", &CooccurrenceCounts::build)
      .def_readwrite("num_sentences", &CooccurrenceCounts::num_sentences)
      .def("count",
           py::overload_cast<const std::string&>(&CooccurrenceCounts::count,
                                                 py::const_))
      .def("pair_count",
           py::overload_cast<const std::string&, const std::string&>(
               &CooccurrenceCounts::count, py::const_));
  m.def("compute_pmi", &compute_pmi, py::arg("counts"),
        py::arg("treatment_text"), py::arg("problem_text"));

  py::class_<AssertionLexicons>(m, "AssertionLexicons")
      .def(py::init<>())
      .def_static("load", &AssertionLexicons::load);
  m.def("assertion_indices", &assertion_indices);

  py::class_<EncodedInstance>(m, "EncodedInstance")
      .def_readonly("word_ids", &EncodedInstance::word_ids)
      .def_readonly("pos_ids", &EncodedInstance::pos_ids)
      .def_readonly("chunk_ids", &EncodedInstance::chunk_ids)
      .def_readonly("pos_to_treatment", &EncodedInstance::pos_to_treatment)
      .def_readonly("pos_to_problem", &EncodedInstance::pos_to_problem)
      .def_readonly("label", &EncodedInstance::label)
      .def_property_readonly("sentence_features",
                             [](const EncodedInstance& e) {
                               return e.sentence_feats.to_vector();
                             });
  m.def("encode_instance", &encode_instance, py::arg("instance"),
        py::arg("vocab"), py::arg("top_pos"), py::arg("counts"),
        py::arg("lexicons"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lstm_hidden", &TrainConfig::lstm_hidden)
      .def_readwrite("d_w", &TrainConfig::d_w)
      .def_readwrite("d_p", &TrainConfig::d_p)
      .def_readwrite("d_c", &TrainConfig::d_c)
      .def_readwrite("d_pos", &TrainConfig::d_pos)
      .def_readwrite("p_max", &TrainConfig::p_max)
      .def_readwrite("neg_samples", &TrainConfig::neg_samples)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("class_weights", &TrainConfig::class_weights);

  py::class_<VocabDims>(m, "VocabDims")
      .def(py::init<>())
      .def(py::init([](int words, int pos_tags, int chunks) {
             return VocabDims{words, pos_tags, chunks};
           }),
           py::arg("words"), py::arg("pos_tags"), py::arg("chunks"))
      .def_readwrite("words", &VocabDims::words)
      .def_readwrite("pos_tags", &VocabDims::pos_tags)
      .def_readwrite("chunks", &VocabDims::chunks);

  py::class_<BiLstmModel>(m, "BiLstmModel")
      .def_readonly("hyper", &BiLstmModel::hyper)
      .def_property_readonly("hidden_size", &BiLstmModel::hidden_size)
      .def_property_readonly("num_labels", &BiLstmModel::num_labels);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("epoch_losses", &TrainResult::epoch_losses)
      .def_property_readonly(
          "model", [](TrainResult& r) -> BiLstmModel& { return r.model; },
          py::return_value_policy::reference_internal);

  m.def("train",
        [](const std::vector<EncodedInstance>& instances,
           const TrainConfig& config, const VocabDims& dims) {
          return train(instances, config, dims);
        },
        py::arg("instances"), py::arg("config"), py::arg("dims"));
  m.def("forward", [](const EncodedInstance& enc, const BiLstmModel& model) {
    return to_std(forward(enc, model));
  });
  m.def("predict", [](const BiLstmModel& model, const EncodedInstance& enc) {
    auto [label, probs] = predict(model, enc);
    return py::make_tuple(label, to_std(probs));
  });
  m.def("save_model", &save_model);
  m.def("load_model", &load_model);

  py::class_<PhrasePattern>(m, "PhrasePattern")
      .def_readonly("label", &PhrasePattern::label)
      .def_property_readonly("size", &PhrasePattern::size);
  m.def("parse_pattern", &parse_pattern, py::arg("text"), py::arg("label"));
  m.def("match_pattern", &match_pattern);
  m.def("load_patterns", &load_patterns);

  py::class_<VerbLexicon>(m, "VerbLexicon")
      .def(py::init<>())
      .def("contains", &VerbLexicon::contains);
  m.def("load_verbs", &load_verbs);
  m.def("surface_path", [](const RelationInstance& inst) {
    std::vector<std::string> out;
    for (const Token& tok : surface_path(inst)) out.push_back(tok.text);
    return out;
  });

  py::class_<ParseGraph>(m, "ParseGraph")
      .def(py::init<>())
      .def_readwrite("heads", &ParseGraph::heads)
      .def_readwrite("labels", &ParseGraph::labels)
      .def("validate", &ParseGraph::validate);
  m.def("dep_shortest_path",
        [](const ParseGraph* parse, const RelationInstance& inst) {
          std::vector<std::string> out;
          for (const Token& tok : dep_shortest_path(parse, inst)) {
            out.push_back(tok.text);
          }
          return out;
        },
        py::arg("parse").none(true), py::arg("instance"));
  m.def("verb_classify",
        [](const std::vector<std::string>& path, const VerbLexicon& lex) {
          std::vector<Token> tokens;
          for (const auto& text : path) {
            Token tok;
            tok.text = text;
            tokens.push_back(std::move(tok));
          }
          return verb_classify(tokens, lex);
        });
  m.def("rule_predict",
        [](const RelationInstance& inst,
           const std::vector<PhrasePattern>& patterns, const VerbLexicon& lex,
           const ParseGraph* parse) {
          return rule_predict(inst, patterns, lex, parse);
        },
        py::arg("instance"), py::arg("patterns"), py::arg("lexicon"),
        py::arg("parse") = nullptr);

  py::class_<InstanceKey>(m, "InstanceKey")
      .def(py::init<>())
      .def_readwrite("doc_id", &InstanceKey::doc_id)
      .def_readwrite("line", &InstanceKey::line)
      .def_readwrite("t_start", &InstanceKey::t_start)
      .def_readwrite("t_end", &InstanceKey::t_end)
      .def_readwrite("p_start", &InstanceKey::p_start)
      .def_readwrite("p_end", &InstanceKey::p_end)
      .def("__eq__",
           [](const InstanceKey& a, const InstanceKey& b) { return a == b; })
      .def("__lt__",
           [](const InstanceKey& a, const InstanceKey& b) { return a < b; })
      .def("__hash__", [](const InstanceKey& k) {
        return py::hash(py::make_tuple(k.doc_id, k.line, k.t_start, k.t_end,
                                       k.p_start, k.p_end));
      });
  m.def("key_of", &key_of);
  m.def("merge_predictions", &merge_predictions, py::arg("network"),
        py::arg("rules"),
        py::arg("excluded") = std::set<RelationLabel>{RelationLabel::TrAP});

  py::class_<ClassMetrics>(m, "ClassMetrics")
      .def_readonly("tp", &ClassMetrics::tp)
      .def_readonly("fp", &ClassMetrics::fp)
      .def_readonly("fn", &ClassMetrics::fn)
      .def_readonly("precision", &ClassMetrics::precision)
      .def_readonly("recall", &ClassMetrics::recall)
      .def_readonly("f", &ClassMetrics::f);
  m.def("prf", &prf, py::arg("tp"), py::arg("fp"), py::arg("fn"));

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("per_label", &EvalReport::per_label)
      .def_readonly("total", &EvalReport::total)
      .def("to_table", &EvalReport::to_table)
      .def("to_kv", &EvalReport::to_kv);
  m.def("evaluate", &evaluate, py::arg("gold"), py::arg("pred"),
        py::arg("macro_total") = false);

  py::class_<ModelBundle>(m, "ModelBundle")
      .def(py::init<>())
      .def_readwrite("vocab", &ModelBundle::vocab)
      .def_readwrite("top_pos", &ModelBundle::top_pos)
      .def_readwrite("counts", &ModelBundle::counts)
      .def_property(
          "model",
          [](ModelBundle& b) -> BiLstmModel& { return b.model; },
          [](ModelBundle& b, const BiLstmModel& model) { b.model = model; },
          py::return_value_policy::reference_internal);
  m.def("save_bundle", &save_bundle);
  m.def("load_bundle", &load_bundle);
  m.def("network_predict", &network_predict);
  m.def("rules_predict",
        [](const std::vector<PhrasePattern>& patterns, const VerbLexicon& lex,
           const std::vector<RelationInstance>& candidates) {
          return rules_predict(patterns, lex, ParseIndex{}, candidates);
        });
  m.def("gold_set", &gold_set);
}
