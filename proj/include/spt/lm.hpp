#pragma once

#include <span>
#include <string>
#include <vector>

#include "spt/tensor.hpp"

namespace spt {

struct LMConfig {
  int vocab_size = 256;
  int embed_dim = 16;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 2;
  int ff_dim = 64;
  int max_seq_len = 128;
};

// Input/target token id sequences for one training example.
struct Example {
  std::vector<int> input;
  std::vector<int> target;
};

// Tiny pre-LN encoder-decoder transformer. Soft prompts are prepended to the
// encoder input embeddings; prompt positions get position encodings and
// attention like ordinary tokens. Frozen by default: parameters receive no
// gradients and are excluded from optimization.
class Seq2SeqLM {
 public:
  static constexpr int kEosId = 1;
  static constexpr int kBosId = 2;

  Seq2SeqLM(LMConfig cfg, Rng& rng);

  const LMConfig& config() const { return cfg_; }
  const Tensor& embedding() const { return embedding_; }

  void freeze();
  void unfreeze();
  bool frozen() const { return frozen_; }

  // All weight tensors with stable names/order; shared handles, not copies.
  std::vector<NamedTensor> parameters() const;

  // Encoder states over [prompt; embed(input)]; prompt may be an undefined
  // tensor for the vanilla, promptless encoder. Output length is
  // prompt_rows + |input|.
  Tensor encode_with_prompt(Tape& tape, const Tensor& prompt,
                            std::span<const int> input) const;

  // Decoder logits [|decoder_input|, V] given encoder states.
  Tensor decoder_logits(Tape& tape, const Tensor& enc_states,
                        std::span<const int> decoder_input) const;

  // Teacher-forced mean negative log-likelihood of example.target (with EOS
  // appended) given the prompted encoding of example.input.
  Tensor conditional_nll(Tape& tape, const Tensor& prompt,
                         const Example& example) const;

  // Argmax decoding, ties broken toward the lowest token id; stops at EOS or
  // after max_len emitted tokens. Deterministic.
  std::vector<int> greedy_decode(const Tensor& prompt,
                                 std::span<const int> input,
                                 int max_len) const;

 private:
  struct Attention {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForward {
    Tensor w1, b1, w2, b2;
  };
  struct EncLayer {
    Tensor ln1_g, ln1_b;
    Attention self_attn;
    Tensor ln2_g, ln2_b;
    FeedForward ff;
  };
  struct DecLayer {
    Tensor ln1_g, ln1_b;
    Attention self_attn;
    Tensor ln2_g, ln2_b;
    Attention cross_attn;
    Tensor ln3_g, ln3_b;
    FeedForward ff;
  };

  Tensor position_slice(Tape& tape, int len) const;
  Tensor attention(Tape& tape, const Attention& at, const Tensor& q_in,
                   const Tensor& kv_in, bool causal) const;
  Tensor feed_forward(Tape& tape, const FeedForward& ff, const Tensor& x) const;

  LMConfig cfg_;
  bool frozen_ = true;
  Tensor embedding_;  // [V, d], shared by encoder and decoder inputs
  Tensor out_proj_;   // [d, V]
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  Tensor enc_final_g_, enc_final_b_;
  Tensor dec_final_g_, dec_final_b_;
  Tensor pos_table_;  // [max_seq_len, d] sinusoidal constants
};

// Copies values into the named parameters of an existing model; throws
// FormatError if a name is missing or a shape disagrees.
void load_parameters(std::vector<NamedTensor> params,
                     const std::vector<NamedTensor>& source);

}  // namespace spt
