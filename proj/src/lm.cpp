#include "spt/lm.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "spt/errors.hpp"
#include "spt/ops.hpp"

namespace spt {

namespace {

// Fan-balanced normal init for projections.
Tensor init_weight(int rows, int cols, Rng& rng) {
  const double stddev = std::sqrt(2.0 / (rows + cols));
  return Tensor::randn({rows, cols}, rng, stddev, false);
}

}  // namespace

Seq2SeqLM::Seq2SeqLM(LMConfig cfg, Rng& rng) : cfg_(cfg) {
  const int d = cfg_.embed_dim;
  if (d % cfg_.heads != 0)
    throw ConfigError("embed_dim " + std::to_string(d) +
                      " not divisible by heads " + std::to_string(cfg_.heads));
  embedding_ = Tensor::randn({cfg_.vocab_size, d}, rng, 1.0, false);
  out_proj_ = init_weight(d, cfg_.vocab_size, rng);

  auto make_attention = [&]() {
    Attention at;
    at.wq = init_weight(d, d, rng);
    at.bq = Tensor::zeros({d});
    at.wk = init_weight(d, d, rng);
    at.bk = Tensor::zeros({d});
    at.wv = init_weight(d, d, rng);
    at.bv = Tensor::zeros({d});
    at.wo = init_weight(d, d, rng);
    at.bo = Tensor::zeros({d});
    return at;
  };
  auto make_ff = [&]() {
    FeedForward ff;
    ff.w1 = init_weight(d, cfg_.ff_dim, rng);
    ff.b1 = Tensor::zeros({cfg_.ff_dim});
    ff.w2 = init_weight(cfg_.ff_dim, d, rng);
    ff.b2 = Tensor::zeros({d});
    return ff;
  };
  auto ones = [&]() { return Tensor::full({d}, 1.0); };

  for (int l = 0; l < cfg_.enc_layers; ++l) {
    EncLayer layer;
    layer.ln1_g = ones();
    layer.ln1_b = Tensor::zeros({d});
    layer.self_attn = make_attention();
    layer.ln2_g = ones();
    layer.ln2_b = Tensor::zeros({d});
    layer.ff = make_ff();
    enc_.push_back(std::move(layer));
  }
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    DecLayer layer;
    layer.ln1_g = ones();
    layer.ln1_b = Tensor::zeros({d});
    layer.self_attn = make_attention();
    layer.ln2_g = ones();
    layer.ln2_b = Tensor::zeros({d});
    layer.cross_attn = make_attention();
    layer.ln3_g = ones();
    layer.ln3_b = Tensor::zeros({d});
    layer.ff = make_ff();
    dec_.push_back(std::move(layer));
  }
  enc_final_g_ = ones();
  enc_final_b_ = Tensor::zeros({d});
  dec_final_g_ = ones();
  dec_final_b_ = Tensor::zeros({d});

  // Sinusoidal absolute positions; prompt rows occupy positions 0..n-1.
  pos_table_ = Tensor::zeros({cfg_.max_seq_len, d});
  for (int pos = 0; pos < cfg_.max_seq_len; ++pos) {
    for (int j = 0; j < d; j += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(j) / d);
      pos_table_.data()[static_cast<int64_t>(pos) * d + j] =
          std::sin(pos * rate);
      if (j + 1 < d)
        pos_table_.data()[static_cast<int64_t>(pos) * d + j + 1] =
            std::cos(pos * rate);
    }
  }
}

std::vector<NamedTensor> Seq2SeqLM::parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("embedding", embedding_);
  out.emplace_back("out_proj", out_proj_);
  auto add_attn = [&out](const std::string& prefix, const Attention& at) {
    out.emplace_back(prefix + "/wq", at.wq);
    out.emplace_back(prefix + "/bq", at.bq);
    out.emplace_back(prefix + "/wk", at.wk);
    out.emplace_back(prefix + "/bk", at.bk);
    out.emplace_back(prefix + "/wv", at.wv);
    out.emplace_back(prefix + "/bv", at.bv);
    out.emplace_back(prefix + "/wo", at.wo);
    out.emplace_back(prefix + "/bo", at.bo);
  };
  auto add_ff = [&out](const std::string& prefix, const FeedForward& ff) {
    out.emplace_back(prefix + "/w1", ff.w1);
    out.emplace_back(prefix + "/b1", ff.b1);
    out.emplace_back(prefix + "/w2", ff.w2);
    out.emplace_back(prefix + "/b2", ff.b2);
  };
  for (size_t l = 0; l < enc_.size(); ++l) {
    const std::string p = "enc/" + std::to_string(l);
    out.emplace_back(p + "/ln1_g", enc_[l].ln1_g);
    out.emplace_back(p + "/ln1_b", enc_[l].ln1_b);
    add_attn(p + "/self", enc_[l].self_attn);
    out.emplace_back(p + "/ln2_g", enc_[l].ln2_g);
    out.emplace_back(p + "/ln2_b", enc_[l].ln2_b);
    add_ff(p + "/ff", enc_[l].ff);
  }
  for (size_t l = 0; l < dec_.size(); ++l) {
    const std::string p = "dec/" + std::to_string(l);
    out.emplace_back(p + "/ln1_g", dec_[l].ln1_g);
    out.emplace_back(p + "/ln1_b", dec_[l].ln1_b);
    add_attn(p + "/self", dec_[l].self_attn);
    out.emplace_back(p + "/ln2_g", dec_[l].ln2_g);
    out.emplace_back(p + "/ln2_b", dec_[l].ln2_b);
    add_attn(p + "/cross", dec_[l].cross_attn);
    out.emplace_back(p + "/ln3_g", dec_[l].ln3_g);
    out.emplace_back(p + "/ln3_b", dec_[l].ln3_b);
    add_ff(p + "/ff", dec_[l].ff);
  }
  out.emplace_back("enc/final_g", enc_final_g_);
  out.emplace_back("enc/final_b", enc_final_b_);
  out.emplace_back("dec/final_g", dec_final_g_);
  out.emplace_back("dec/final_b", dec_final_b_);
  return out;
}

void Seq2SeqLM::freeze() {
  for (auto& [name, t] : parameters()) {
    Tensor tt = t;
    tt.set_requires_grad(false);
    tt.drop_grad();
  }
  frozen_ = true;
}

void Seq2SeqLM::unfreeze() {
  for (auto& [name, t] : parameters()) {
    Tensor tt = t;
    tt.set_requires_grad(true);
  }
  frozen_ = false;
}

Tensor Seq2SeqLM::position_slice(Tape& tape, int len) const {
  Tensor rows = Tensor::zeros({len, cfg_.embed_dim});
  std::copy(pos_table_.data(),
            pos_table_.data() + static_cast<int64_t>(len) * cfg_.embed_dim,
            rows.data());
  (void)tape;
  return rows;
}

Tensor Seq2SeqLM::attention(Tape& tape, const Attention& at, const Tensor& q_in,
                            const Tensor& kv_in, bool causal) const {
  const int d = cfg_.embed_dim;
  const int dh = d / cfg_.heads;
  Tensor q = ops::add_rowwise(tape, ops::matmul(tape, q_in, at.wq), at.bq);
  Tensor k = ops::add_rowwise(tape, ops::matmul(tape, kv_in, at.wk), at.bk);
  Tensor v = ops::add_rowwise(tape, ops::matmul(tape, kv_in, at.wv), at.bv);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg_.heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < cfg_.heads; ++h) {
    Tensor qh = ops::slice_cols(tape, q, h * dh, dh);
    Tensor kh = ops::slice_cols(tape, k, h * dh, dh);
    Tensor vh = ops::slice_cols(tape, v, h * dh, dh);
    Tensor scores = ops::scale(
        tape, ops::matmul(tape, qh, ops::transpose(tape, kh)), inv_sqrt);
    Tensor attn = ops::softmax_rows(tape, scores, causal);
    heads.push_back(ops::matmul(tape, attn, vh));
  }
  Tensor ctx = ops::concat_cols(tape, heads);
  return ops::add_rowwise(tape, ops::matmul(tape, ctx, at.wo), at.bo);
}

Tensor Seq2SeqLM::feed_forward(Tape& tape, const FeedForward& ff,
                               const Tensor& x) const {
  Tensor h = ops::gelu(
      tape, ops::add_rowwise(tape, ops::matmul(tape, x, ff.w1), ff.b1));
  return ops::add_rowwise(tape, ops::matmul(tape, h, ff.w2), ff.b2);
}

Tensor Seq2SeqLM::encode_with_prompt(Tape& tape, const Tensor& prompt,
                                     std::span<const int> input) const {
  const int n = prompt.defined() ? prompt.dim(0) : 0;
  if (prompt.defined() &&
      (prompt.ndim() != 2 || prompt.dim(1) != cfg_.embed_dim))
    throw std::invalid_argument("prompt matrix must be [n x " +
                                std::to_string(cfg_.embed_dim) + "], got " +
                                shape_str(prompt.shape()));
  const int total = n + static_cast<int>(input.size());
  if (total > cfg_.max_seq_len)
    throw std::length_error("prompted sequence length " +
                            std::to_string(total) + " exceeds max " +
                            std::to_string(cfg_.max_seq_len));
  if (input.empty()) throw std::invalid_argument("empty encoder input");

  Tensor x = ops::embedding_lookup(
      tape, embedding_, std::vector<int>(input.begin(), input.end()));
  if (prompt.defined()) x = ops::concat_rows(tape, prompt, x);
  x = ops::add(tape, x, position_slice(tape, total));

  for (const auto& layer : enc_) {
    Tensor normed =
        ops::layer_norm(tape, x, layer.ln1_g, layer.ln1_b);
    x = ops::add(tape, x, attention(tape, layer.self_attn, normed, normed,
                                    /*causal=*/false));
    Tensor normed2 = ops::layer_norm(tape, x, layer.ln2_g, layer.ln2_b);
    x = ops::add(tape, x, feed_forward(tape, layer.ff, normed2));
  }
  return ops::layer_norm(tape, x, enc_final_g_, enc_final_b_);
}

Tensor Seq2SeqLM::decoder_logits(Tape& tape, const Tensor& enc_states,
                                 std::span<const int> decoder_input) const {
  if (decoder_input.empty())
    throw std::invalid_argument("empty decoder input");
  if (static_cast<int>(decoder_input.size()) > cfg_.max_seq_len)
    throw std::length_error("decoder length " +
                            std::to_string(decoder_input.size()) +
                            " exceeds max " + std::to_string(cfg_.max_seq_len));
  Tensor y = ops::embedding_lookup(
      tape, embedding_,
      std::vector<int>(decoder_input.begin(), decoder_input.end()));
  y = ops::add(tape,
               y, position_slice(tape, static_cast<int>(decoder_input.size())));
  for (const auto& layer : dec_) {
    Tensor normed = ops::layer_norm(tape, y, layer.ln1_g, layer.ln1_b);
    y = ops::add(tape, y, attention(tape, layer.self_attn, normed, normed,
                                    /*causal=*/true));
    Tensor normed2 = ops::layer_norm(tape, y, layer.ln2_g, layer.ln2_b);
    y = ops::add(tape, y, attention(tape, layer.cross_attn, normed2, enc_states,
                                    /*causal=*/false));
    Tensor normed3 = ops::layer_norm(tape, y, layer.ln3_g, layer.ln3_b);
    y = ops::add(tape, y, feed_forward(tape, layer.ff, normed3));
  }
  y = ops::layer_norm(tape, y, dec_final_g_, dec_final_b_);
  return ops::matmul(tape, y, out_proj_);
}

Tensor Seq2SeqLM::conditional_nll(Tape& tape, const Tensor& prompt,
                                  const Example& example) const {
  if (example.target.empty())
    throw std::invalid_argument("example target may not be empty");
  for (int id : example.input)
    if (id < 0 || id >= cfg_.vocab_size)
      throw std::out_of_range("input token id " + std::to_string(id) +
                              " outside vocabulary");
  for (int id : example.target)
    if (id < 0 || id >= cfg_.vocab_size)
      throw std::out_of_range("target token id " + std::to_string(id) +
                              " outside vocabulary");

  Tensor enc = encode_with_prompt(tape, prompt, example.input);
  std::vector<int> dec_in;
  dec_in.reserve(example.target.size() + 1);
  dec_in.push_back(kBosId);
  dec_in.insert(dec_in.end(), example.target.begin(), example.target.end());
  std::vector<int> targets(example.target);
  targets.push_back(kEosId);
  Tensor logits = decoder_logits(tape, enc, dec_in);
  return ops::softmax_cross_entropy(tape, logits, targets);
}

std::vector<int> Seq2SeqLM::greedy_decode(const Tensor& prompt,
                                          std::span<const int> input,
                                          int max_len) const {
  if (max_len < 1)
    throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  Tape tape = Tape::inference();
  Tensor enc = encode_with_prompt(tape, prompt, input);
  std::vector<int> emitted;
  std::vector<int> dec_in{kBosId};
  for (int step = 0; step < max_len; ++step) {
    if (static_cast<int>(dec_in.size()) >= cfg_.max_seq_len) break;
    Tensor logits = decoder_logits(tape, enc, dec_in);
    const int last = logits.dim(0) - 1;
    int best = 0;
    double best_val = logits.at(last, 0);
    for (int v = 1; v < cfg_.vocab_size; ++v) {
      const double val = logits.at(last, v);
      if (val > best_val) {  // strict: ties keep the lowest id
        best_val = val;
        best = v;
      }
    }
    if (best == kEosId) break;
    emitted.push_back(best);
    dec_in.push_back(best);
  }
  return emitted;
}

void load_parameters(std::vector<NamedTensor> params,
                     const std::vector<NamedTensor>& source) {
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& [name, t] : source) by_name.emplace(name, t);
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError("missing parameter '" + name + "' in checkpoint");
    if (it->second.shape() != t.shape())
      throw FormatError("parameter '" + name + "' has shape " +
                        shape_str(it->second.shape()) + ", expected " +
                        shape_str(t.shape()));
    std::copy(it->second.data(), it->second.data() + it->second.numel(),
              t.data());
  }
}

}  // namespace spt
