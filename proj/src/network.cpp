#include "medrex/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace medrex {

namespace {

Vec sigmoid(const Vec& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

// Forward pass of one direction with everything backward needs.
struct DirectionCache {
  std::vector<Vec> i, f, o, g, c, h;
};

DirectionCache run_direction(const std::vector<Vec>& xs,
                             const LstmParams& p) {
  DirectionCache cache;
  LstmState state = LstmState::zeros(p.hidden_size());
  for (const Vec& x : xs) {
    const Vec i = sigmoid(p.W_i * x + p.U_i * state.h + p.b_i);
    const Vec f = sigmoid(p.W_f * x + p.U_f * state.h + p.b_f);
    const Vec o = sigmoid(p.W_o * x + p.U_o * state.h + p.b_o);
    const Vec g = (p.W_c * x + p.U_c * state.h + p.b_c).array().tanh();
    state.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
    state.h = o.cwiseProduct(state.c.array().tanh().matrix());
    cache.i.push_back(i);
    cache.f.push_back(f);
    cache.o.push_back(o);
    cache.g.push_back(g);
    cache.c.push_back(state.c);
    cache.h.push_back(state.h);
  }
  return cache;
}

// Backpropagation through time for one direction. `dh_final` is the loss
// gradient at the last hidden state; returns per-step input gradients in
// processing order and adds parameter gradients into `grads`.
std::vector<Vec> backward_direction(const std::vector<Vec>& xs,
                                    const DirectionCache& cache,
                                    const LstmParams& p, const Vec& dh_final,
                                    LstmParams& grads) {
  const int hidden = p.hidden_size();
  const std::size_t steps = xs.size();
  std::vector<Vec> dxs(steps);

  Vec dh = dh_final;
  Vec dc = Vec::Zero(hidden);
  for (std::size_t t = steps; t-- > 0;) {
    const Vec& i = cache.i[t];
    const Vec& f = cache.f[t];
    const Vec& o = cache.o[t];
    const Vec& g = cache.g[t];
    const Vec tc = cache.c[t].array().tanh().matrix();
    const Vec h_prev = t > 0 ? cache.h[t - 1] : Vec::Zero(hidden);
    const Vec c_prev = t > 0 ? cache.c[t - 1] : Vec::Zero(hidden);

    const Vec do_ = dh.cwiseProduct(tc);
    dc += dh.cwiseProduct(o).cwiseProduct(
        (1.0 - tc.array().square()).matrix());
    const Vec di = dc.cwiseProduct(g);
    const Vec dg = dc.cwiseProduct(i);
    const Vec df = dc.cwiseProduct(c_prev);

    const Vec da_i =
        di.cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
    const Vec da_f =
        df.cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
    const Vec da_o =
        do_.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
    const Vec da_g = dg.cwiseProduct((1.0 - g.array().square()).matrix());

    grads.W_i.noalias() += da_i * xs[t].transpose();
    grads.W_f.noalias() += da_f * xs[t].transpose();
    grads.W_o.noalias() += da_o * xs[t].transpose();
    grads.W_c.noalias() += da_g * xs[t].transpose();
    grads.U_i.noalias() += da_i * h_prev.transpose();
    grads.U_f.noalias() += da_f * h_prev.transpose();
    grads.U_o.noalias() += da_o * h_prev.transpose();
    grads.U_c.noalias() += da_g * h_prev.transpose();
    grads.b_i += da_i;
    grads.b_f += da_f;
    grads.b_o += da_o;
    grads.b_c += da_g;

    dxs[t] = p.W_i.transpose() * da_i + p.W_f.transpose() * da_f +
             p.W_o.transpose() * da_o + p.W_c.transpose() * da_g;
    dh = p.U_i.transpose() * da_i + p.U_f.transpose() * da_f +
         p.U_o.transpose() * da_o + p.U_c.transpose() * da_g;
    dc = dc.cwiseProduct(f);
  }
  return dxs;
}

int clip_position(int offset, int p_max) {
  return std::clamp(offset, -p_max, p_max) + p_max;
}

Vec softmax(const Vec& z) {
  const Vec shifted = (z.array() - z.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

Vec merge_vector(const Vec& bilstm, const SentenceLevelFeatures& feats) {
  const std::vector<double> sent = feats.to_vector();
  Vec merged(bilstm.size() + static_cast<Eigen::Index>(sent.size()));
  merged.head(bilstm.size()) = bilstm;
  for (std::size_t i = 0; i < sent.size(); ++i) {
    merged[bilstm.size() + static_cast<Eigen::Index>(i)] = sent[i];
  }
  return merged;
}

struct TensorRef {
  double* data;
  Eigen::Index size;
};

std::vector<TensorRef> tensor_refs(ParamSet& p) {
  std::vector<TensorRef> refs;
  p.visit([&refs](auto& t) { refs.push_back({t.data(), t.size()}); });
  return refs;
}

// --- little-endian binary helpers -----------------------------------------

void write_bytes(std::ostream& out, std::uint64_t value, int n) {
  for (int i = 0; i < n; ++i) {
    out.put(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

std::uint64_t read_bytes(std::istream& in, int n) {
  std::uint64_t value = 0;
  for (int i = 0; i < n; ++i) {
    int byte = in.get();
    if (byte == std::char_traits<char>::eof()) {
      throw ModelFormatError("truncated model file");
    }
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(byte))
             << (8 * i);
  }
  return value;
}

void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, v, 8); }
void write_f64(std::ostream& out, double v) {
  write_bytes(out, std::bit_cast<std::uint64_t>(v), 8);
}
std::uint32_t read_u32(std::istream& in) {
  return static_cast<std::uint32_t>(read_bytes(in, 4));
}
std::uint64_t read_u64(std::istream& in) { return read_bytes(in, 8); }
double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_bytes(in, 8));
}

constexpr char kMagic[4] = {'M', 'D', 'R', 'X'};
constexpr std::uint32_t kFormatVersion = 1;

ParamSet zeros_like(const ParamSet& src) {
  ParamSet out = src;
  out.set_zero();
  return out;
}

}  // namespace

LstmParams LstmParams::zeros(int hidden, int input) {
  LstmParams p;
  p.W_i = Mat::Zero(hidden, input);
  p.W_f = Mat::Zero(hidden, input);
  p.W_o = Mat::Zero(hidden, input);
  p.W_c = Mat::Zero(hidden, input);
  p.U_i = Mat::Zero(hidden, hidden);
  p.U_f = Mat::Zero(hidden, hidden);
  p.U_o = Mat::Zero(hidden, hidden);
  p.U_c = Mat::Zero(hidden, hidden);
  p.b_i = Vec::Zero(hidden);
  p.b_f = Vec::Zero(hidden);
  p.b_o = Vec::Zero(hidden);
  p.b_c = Vec::Zero(hidden);
  return p;
}

LstmState LstmState::zeros(int hidden) {
  return LstmState{Vec::Zero(hidden), Vec::Zero(hidden)};
}

LstmState lstm_cell(const Vec& x, const LstmState& prev,
                    const LstmParams& p) {
  if (x.size() != p.input_size() || prev.h.size() != p.hidden_size() ||
      prev.c.size() != p.hidden_size()) {
    throw std::invalid_argument("lstm_cell: shape mismatch");
  }
  const Vec i = sigmoid(p.W_i * x + p.U_i * prev.h + p.b_i);
  const Vec f = sigmoid(p.W_f * x + p.U_f * prev.h + p.b_f);
  const Vec o = sigmoid(p.W_o * x + p.U_o * prev.h + p.b_o);
  const Vec g = (p.W_c * x + p.U_c * prev.h + p.b_c).array().tanh();
  LstmState next;
  next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

void ParamSet::set_zero() {
  visit([](auto& t) { t.setZero(); });
}

BiLstmModel make_model(const TrainConfig& config, const VocabDims& dims) {
  BiLstmModel model;
  model.hyper = config;
  auto& p = model.params;
  p.tables.word = Mat::Zero(dims.words + 1, config.d_w);
  p.tables.pos = Mat::Zero(dims.pos_tags + 1, config.d_p);
  p.tables.chunk = Mat::Zero(dims.chunks + 1, config.d_c);
  p.tables.position = Mat::Zero(2 * config.p_max + 1, config.d_pos);
  const int input = p.tables.input_dim();
  p.fwd = LstmParams::zeros(config.lstm_hidden, input);
  p.bwd = LstmParams::zeros(config.lstm_hidden, input);
  p.out_W = Mat::Zero(kNumLabels, 2 * config.lstm_hidden + kSentenceFeatureDim);
  p.out_b = Vec::Zero(kNumLabels);
  return model;
}

std::vector<Vec> embed(const EncodedInstance& enc,
                       const EmbeddingTables& tables) {
  const int p_max = tables.p_max();
  std::vector<Vec> xs;
  xs.reserve(static_cast<std::size_t>(enc.length()));
  for (int t = 0; t < enc.length(); ++t) {
    const std::size_t u = static_cast<std::size_t>(t);
    Vec x(tables.input_dim());
    Eigen::Index at = 0;
    x.segment(at, tables.word_dim()) = tables.word.row(enc.word_ids[u]);
    at += tables.word_dim();
    x.segment(at, tables.pos_dim()) = tables.pos.row(enc.pos_ids[u]);
    at += tables.pos_dim();
    x.segment(at, tables.chunk_dim()) = tables.chunk.row(enc.chunk_ids[u]);
    at += tables.chunk_dim();
    x.segment(at, tables.position_dim()) =
        tables.position.row(clip_position(enc.pos_to_treatment[u], p_max));
    at += tables.position_dim();
    x.segment(at, tables.position_dim()) =
        tables.position.row(clip_position(enc.pos_to_problem[u], p_max));
    xs.push_back(std::move(x));
  }
  return xs;
}

Vec bilstm_forward(const std::vector<Vec>& inputs, const BiLstmModel& model) {
  if (inputs.empty()) {
    throw std::invalid_argument("bilstm_forward: empty input sequence");
  }
  const DirectionCache fwd = run_direction(inputs, model.params.fwd);
  std::vector<Vec> reversed(inputs.rbegin(), inputs.rend());
  const DirectionCache bwd = run_direction(reversed, model.params.bwd);
  Vec out(2 * model.hidden_size());
  out.head(model.hidden_size()) = fwd.h.back();
  out.tail(model.hidden_size()) = bwd.h.back();
  return out;
}

Vec forward(const EncodedInstance& enc, const BiLstmModel& model) {
  const Vec merged = merge_vector(bilstm_forward(embed(enc, model.params.tables), model),
                                  enc.sentence_feats);
  return softmax(model.params.out_W * merged + model.params.out_b);
}

double loss(const Vec& probs, RelationLabel label) {
  const double p = probs[static_cast<int>(label)];
  return -std::log(std::max(p, 1e-12));
}

double backward_accumulate(const EncodedInstance& enc, RelationLabel label,
                           const BiLstmModel& model, double weight,
                           ParamSet& acc) {
  const auto& params = model.params;
  const int hidden = model.hidden_size();
  const int p_max = params.tables.p_max();

  const std::vector<Vec> xs = embed(enc, params.tables);
  if (xs.empty()) {
    throw std::invalid_argument("backward: empty input sequence");
  }
  const DirectionCache fwd = run_direction(xs, params.fwd);
  std::vector<Vec> reversed(xs.rbegin(), xs.rend());
  const DirectionCache bwd = run_direction(reversed, params.bwd);

  Vec bilstm(2 * hidden);
  bilstm.head(hidden) = fwd.h.back();
  bilstm.tail(hidden) = bwd.h.back();
  const Vec merged = merge_vector(bilstm, enc.sentence_feats);
  const Vec probs = softmax(params.out_W * merged + params.out_b);

  // d(weight * -ln p[label]) / dz = weight * (p - onehot)
  Vec dz = probs * weight;
  dz[static_cast<int>(label)] -= weight;
  acc.out_W.noalias() += dz * merged.transpose();
  acc.out_b += dz;

  const Vec dmerged = params.out_W.transpose() * dz;
  const std::vector<Vec> dxs_fwd = backward_direction(
      xs, fwd, params.fwd, dmerged.head(hidden), acc.fwd);
  const std::vector<Vec> dxs_bwd = backward_direction(
      reversed, bwd, params.bwd, dmerged.segment(hidden, hidden), acc.bwd);

  const std::size_t steps = xs.size();
  for (std::size_t t = 0; t < steps; ++t) {
    // Backward direction step s consumed sentence position steps-1-s.
    const Vec dx = dxs_fwd[t] + dxs_bwd[steps - 1 - t];
    Eigen::Index at = 0;
    acc.tables.word.row(enc.word_ids[t]) +=
        dx.segment(at, params.tables.word_dim()).transpose();
    at += params.tables.word_dim();
    acc.tables.pos.row(enc.pos_ids[t]) +=
        dx.segment(at, params.tables.pos_dim()).transpose();
    at += params.tables.pos_dim();
    acc.tables.chunk.row(enc.chunk_ids[t]) +=
        dx.segment(at, params.tables.chunk_dim()).transpose();
    at += params.tables.chunk_dim();
    acc.tables.position.row(clip_position(enc.pos_to_treatment[t], p_max)) +=
        dx.segment(at, params.tables.position_dim()).transpose();
    at += params.tables.position_dim();
    acc.tables.position.row(clip_position(enc.pos_to_problem[t], p_max)) +=
        dx.segment(at, params.tables.position_dim()).transpose();
  }
  return weight * loss(probs, label);
}

ParamSet backward(const EncodedInstance& enc, RelationLabel label,
                  const BiLstmModel& model, double weight) {
  ParamSet grads = zeros_like(model.params);
  backward_accumulate(enc, label, model, weight, grads);
  return grads;
}

TrainResult train(const std::vector<EncodedInstance>& instances,
                  const TrainConfig& config, const VocabDims& dims,
                  const WordVectors* pretrained) {
  if (instances.empty()) {
    throw TrainingError("train: empty training set");
  }

  BiLstmModel model = make_model(config, dims);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> init(-0.08, 0.08);
  model.params.visit([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = init(rng);
  });
  if (pretrained) {
    Mat& table = model.params.tables.word;
    for (const auto& [id, values] : *pretrained) {
      for (Eigen::Index d = 0; d < table.cols(); ++d) {
        table(id, d) = values[static_cast<std::size_t>(d)];
      }
    }
  }

  std::array<double, kNumLabels> weights;
  weights.fill(1.0);
  if (config.class_weights) {
    std::array<std::size_t, kNumLabels> counts{};
    for (const auto& inst : instances) counts[static_cast<int>(inst.label)]++;
    const std::size_t present =
        static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                               [](std::size_t c) { return c > 0; }));
    for (int l = 0; l < kNumLabels; ++l) {
      if (counts[l] > 0) {
        weights[l] = static_cast<double>(instances.size()) /
                     (static_cast<double>(present) *
                      static_cast<double>(counts[l]));
      }
    }
  }

  ParamSet grads = zeros_like(model.params);
  ParamSet adam_m = zeros_like(model.params);
  ParamSet adam_v = zeros_like(model.params);
  const auto model_refs = tensor_refs(model.params);
  const auto grad_refs = tensor_refs(grads);
  const auto m_refs = tensor_refs(adam_m);
  const auto v_refs = tensor_refs(adam_v);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  long long step = 0;

  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double batch = static_cast<double>(end - start);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const EncodedInstance& inst = instances[order[k]];
        batch_loss += backward_accumulate(
            inst, inst.label, model, weights[static_cast<int>(inst.label)],
            grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(epoch + 1) + ", batch starting " +
                            std::to_string(start));
      }
      epoch_loss += batch_loss;

      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t k = 0; k < model_refs.size(); ++k) {
        double* theta = model_refs[k].data;
        double* g = grad_refs[k].data;
        double* m = m_refs[k].data;
        double* v = v_refs[k].data;
        for (Eigen::Index e = 0; e < model_refs[k].size; ++e) {
          const double grad = g[e] / batch;
          m[e] = kBeta1 * m[e] + (1.0 - kBeta1) * grad;
          v[e] = kBeta2 * v[e] + (1.0 - kBeta2) * grad * grad;
          theta[e] -= config.learning_rate * (m[e] / bc1) /
                      (std::sqrt(v[e] / bc2) + kEps);
        }
      }
    }
    result.epoch_losses.push_back(epoch_loss /
                                  static_cast<double>(instances.size()));
  }
  result.model = std::move(model);
  return result;
}

std::pair<RelationLabel, Vec> predict(const BiLstmModel& model,
                                      const EncodedInstance& enc) {
  const Vec probs = forward(enc, model);
  int best = 0;
  for (int l = 1; l < static_cast<int>(probs.size()); ++l) {
    if (probs[l] > probs[best]) best = l;
  }
  return {static_cast<RelationLabel>(best), probs};
}

void save_model(const BiLstmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFormatError("cannot write " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);

  const TrainConfig& c = model.hyper;
  write_u32(out, static_cast<std::uint32_t>(c.epochs));
  write_u32(out, static_cast<std::uint32_t>(c.lstm_hidden));
  write_u32(out, static_cast<std::uint32_t>(c.d_w));
  write_u32(out, static_cast<std::uint32_t>(c.d_p));
  write_u32(out, static_cast<std::uint32_t>(c.d_c));
  write_u32(out, static_cast<std::uint32_t>(c.d_pos));
  write_u32(out, static_cast<std::uint32_t>(c.p_max));
  write_u32(out, static_cast<std::uint32_t>(c.neg_samples));
  write_u32(out, static_cast<std::uint32_t>(c.batch_size));
  write_f64(out, c.learning_rate);
  write_u64(out, c.seed);
  write_u32(out, c.class_weights ? 1 : 0);

  model.params.visit([&out](const auto& t) {
    write_u64(out, static_cast<std::uint64_t>(t.rows()));
    write_u64(out, static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index col = 0; col < t.cols(); ++col) {
        write_f64(out, t(r, col));
      }
    }
  });
  if (!out) throw ModelFormatError("write failure on " + path.string());
}

BiLstmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) {
    throw ModelFormatError(path.string() + ": not a model file (bad magic)");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) {
    throw ModelFormatError(path.string() + ": unsupported format version " +
                           std::to_string(version));
  }

  TrainConfig c;
  c.epochs = static_cast<int>(read_u32(in));
  c.lstm_hidden = static_cast<int>(read_u32(in));
  c.d_w = static_cast<int>(read_u32(in));
  c.d_p = static_cast<int>(read_u32(in));
  c.d_c = static_cast<int>(read_u32(in));
  c.d_pos = static_cast<int>(read_u32(in));
  c.p_max = static_cast<int>(read_u32(in));
  c.neg_samples = static_cast<int>(read_u32(in));
  c.batch_size = static_cast<int>(read_u32(in));
  c.learning_rate = read_f64(in);
  c.seed = read_u64(in);
  c.class_weights = read_u32(in) != 0;

  BiLstmModel model;
  model.hyper = c;
  model.params.visit([&in, &path](auto& t) {
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    if (rows < 0 || cols < 0 || rows > (1 << 28) || cols > (1 << 28)) {
      throw ModelFormatError(path.string() + ": implausible tensor shape");
    }
    t.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index col = 0; col < cols; ++col) {
        t(r, col) = read_f64(in);
      }
    }
  });
  if (in.get() != std::char_traits<char>::eof()) {
    throw ModelFormatError(path.string() + ": trailing bytes after tensors");
  }
  if (model.params.tables.word.cols() != c.d_w ||
      model.params.fwd.hidden_size() != c.lstm_hidden ||
      model.params.out_b.size() != kNumLabels) {
    throw ModelFormatError(path.string() +
                           ": tensor shapes disagree with config block");
  }
  return model;
}

WordVectors read_word_vectors(const std::filesystem::path& path,
                              const FeatureVocab& vocab, int dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  WordVectors vectors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    if (static_cast<int>(values.size()) != dim) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected " + std::to_string(dim) + " values, got " +
                      std::to_string(values.size()));
    }
    const int id = vocab.word(word);
    if (id == 0) continue;  // not in the training vocabulary
    vectors[id] = std::move(values);
  }
  return vectors;
}

}  // namespace medrex
