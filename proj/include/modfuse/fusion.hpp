#pragma once

#include <vector>

#include "modfuse/embeddings.hpp"
#include "modfuse/modspec.hpp"
#include "modfuse/nn.hpp"

namespace modfuse {

struct FusionConfig {
    Eigen::Index ssl_dim = 1024;
    Eigen::Index proj_dim = 128;
    Eigen::Index query_dim = 202;  // modulation-frequency bins per query token
    Eigen::Index model_dim = 256;
    Eigen::Index heads = 4;

    Eigen::Index head_dim() const { return model_dim / heads; }
    void validate() const;
};

// Trainable layers of the attention fusion block. The modulation spectrogram
// supplies the queries (one token per acoustic-frequency row); the projected
// SSL sequence supplies keys and values.
struct FusionParams {
    FusionConfig config;
    nn::AffineLayer proj_ssl;   // ssl_dim -> proj_dim
    nn::AffineLayer q_layer;    // query_dim -> model_dim
    nn::AffineLayer k_layer;    // proj_dim -> model_dim
    nn::AffineLayer v_layer;    // proj_dim -> model_dim
    nn::AffineLayer out_layer;  // model_dim -> model_dim

    static FusionParams init(const FusionConfig& config, SeededRng& rng);
    void append_params(std::vector<nn::NamedParam>& out) const;
};

struct AttentionResult {
    nn::Tensor output;   // T x d_v
    nn::Tensor weights;  // T x T_kv, rows sum to 1
};

// softmax(Q K^T / sqrt(d)) V
AttentionResult scaled_dot_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v);

struct FusionOutput {
    nn::Tensor fused;                  // T x model_dim, after out_layer
    nn::Tensor heads_concat;           // T x model_dim, before out_layer
    std::vector<nn::Tensor> weights;   // one T x T_kv matrix per head
};

// Core wiring on already-projected key/value inputs (proj_dim wide). Keys and
// values are fed separately so the value path can be probed on its own.
FusionOutput attend_heads(const nn::Tensor& query_features, const nn::Tensor& key_input, const nn::Tensor& value_input,
                          const FusionParams& params);

// Full block: project SSL, then attend_heads.
FusionOutput fuse(const nn::Tensor& query_features, const nn::Tensor& ssl, const FusionParams& params);

// Canonical-geometry entry point: 201x202 modulation features, 201x1024 SSL.
nn::Tensor multi_head_fuse(const Matrix& modspec_features, const EmbeddingMatrix& ssl, const FusionParams& params);
nn::Tensor multi_head_fuse(const ModSpectrogram& modspec, const EmbeddingMatrix& ssl, const FusionParams& params);

std::vector<Matrix> attention_weights(const Matrix& modspec_features, const EmbeddingMatrix& ssl,
                                      const FusionParams& params);

}  // namespace modfuse
