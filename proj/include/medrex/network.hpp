#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "medrex/features.hpp"

namespace medrex {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Gate parameters of one LSTM direction, no peepholes.
struct LstmParams {
  Mat W_i, W_f, W_o, W_c;  // hidden x input
  Mat U_i, U_f, U_o, U_c;  // hidden x hidden
  Vec b_i, b_f, b_o, b_c;  // hidden

  static LstmParams zeros(int hidden, int input);
  int hidden_size() const { return static_cast<int>(b_i.size()); }
  int input_size() const { return static_cast<int>(W_i.cols()); }
};

struct LstmState {
  Vec h, c;
  static LstmState zeros(int hidden);
};

// One step: i,f,o = sigmoid gates, g = tanh candidate,
// c = f*c_prev + i*g, h = o*tanh(c).
LstmState lstm_cell(const Vec& x, const LstmState& prev, const LstmParams& p);

// Row 0 of every table is the unknown-input row; the position table is
// shared by the treatment and problem channels.
struct EmbeddingTables {
  Mat word, pos, chunk, position;

  int word_dim() const { return static_cast<int>(word.cols()); }
  int pos_dim() const { return static_cast<int>(pos.cols()); }
  int chunk_dim() const { return static_cast<int>(chunk.cols()); }
  int position_dim() const { return static_cast<int>(position.cols()); }
  int p_max() const { return (static_cast<int>(position.rows()) - 1) / 2; }
  int input_dim() const {
    return word_dim() + pos_dim() + chunk_dim() + 2 * position_dim();
  }
};

struct TrainConfig {
  int epochs = 20;
  int lstm_hidden = 64;
  int d_w = 40;
  int d_p = 10;
  int d_c = 10;
  int d_pos = 5;
  int p_max = 60;
  int neg_samples = 20000;
  double learning_rate = 0.001;
  int batch_size = 32;
  std::uint64_t seed = 42;
  bool class_weights = true;
};

// Every trainable tensor of the model, in the order they are serialized
// and visited by the optimizer.
struct ParamSet {
  EmbeddingTables tables;
  LstmParams fwd, bwd;
  Mat out_W;  // labels x (2*hidden + sentence feature dim)
  Vec out_b;  // labels

  template <typename Fn>
  void visit(Fn&& fn) {
    fn(tables.word);
    fn(tables.pos);
    fn(tables.chunk);
    fn(tables.position);
    for (LstmParams* dir : {&fwd, &bwd}) {
      fn(dir->W_i);
      fn(dir->W_f);
      fn(dir->W_o);
      fn(dir->W_c);
      fn(dir->U_i);
      fn(dir->U_f);
      fn(dir->U_o);
      fn(dir->U_c);
      fn(dir->b_i);
      fn(dir->b_f);
      fn(dir->b_o);
      fn(dir->b_c);
    }
    fn(out_W);
    fn(out_b);
  }

  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<ParamSet*>(this)->visit([&fn](auto& t) {
      fn(std::as_const(t));
    });
  }

  void set_zero();
};

struct VocabDims {
  int words = 0;
  int pos_tags = 0;
  int chunks = 0;
};

struct BiLstmModel {
  ParamSet params;
  TrainConfig hyper;

  int hidden_size() const { return params.fwd.hidden_size(); }
  int num_labels() const { return static_cast<int>(params.out_b.size()); }
};

// Allocates all tensors for the given sizes without initializing them to
// anything meaningful.
BiLstmModel make_model(const TrainConfig& config, const VocabDims& dims);

// Per-token concatenation [word | pos | chunk | position_t | position_p];
// unseen ids hit row 0, positions clip to [-p_max, p_max].
std::vector<Vec> embed(const EncodedInstance& enc,
                       const EmbeddingTables& tables);

// Final hidden states of both directions, concatenated: [h_fwd | h_bwd].
Vec bilstm_forward(const std::vector<Vec>& inputs, const BiLstmModel& model);

// Softmax probabilities over the labels.
Vec forward(const EncodedInstance& enc, const BiLstmModel& model);

double loss(const Vec& probs, RelationLabel label);

// Exact gradients of weight * loss(forward(enc), label) for every tensor,
// by backpropagation through time. Untouched embedding rows stay zero.
ParamSet backward(const EncodedInstance& enc, RelationLabel label,
                  const BiLstmModel& model, double weight = 1.0);

// In-place variant used by the training loop; adds into `acc` and returns
// the weighted loss of the instance.
double backward_accumulate(const EncodedInstance& enc, RelationLabel label,
                           const BiLstmModel& model, double weight,
                           ParamSet& acc);

struct TrainResult {
  BiLstmModel model;
  std::vector<double> epoch_losses;
};

// Word-table rows to overwrite after random init, keyed by word id.
using WordVectors = std::map<int, std::vector<double>>;

// Uniform [-0.08, 0.08] init, per-epoch seeded shuffle, Adam
// (beta1 0.9, beta2 0.999) over mini-batches, optional inverse-frequency
// class weights. Deterministic for a fixed (instances, config).
TrainResult train(const std::vector<EncodedInstance>& instances,
                  const TrainConfig& config, const VocabDims& dims,
                  const WordVectors* pretrained = nullptr);

// Argmax label, ties broken by the lowest label index.
std::pair<RelationLabel, Vec> predict(const BiLstmModel& model,
                                      const EncodedInstance& enc);

// Binary format: magic "MDRX", version, config block, parameter tensors as
// little-endian 64-bit floats in ParamSet::visit order.
void save_model(const BiLstmModel& model, const std::filesystem::path& path);
BiLstmModel load_model(const std::filesystem::path& path);

// Optional pretrained word vectors: `word v1 .. v_dw` per line. Words
// outside the vocabulary are skipped; wrong dimensionality is an error.
WordVectors read_word_vectors(const std::filesystem::path& path,
                              const FeatureVocab& vocab, int dim);

}  // namespace medrex
