#include "modfuse/fusion.hpp"

#include <cmath>
#include <string>

#include "modfuse/error.hpp"

namespace modfuse {

void FusionConfig::validate() const {
    if (ssl_dim <= 0 || proj_dim <= 0 || query_dim <= 0 || model_dim <= 0 || heads <= 0) {
        throw Error(ErrorCode::parameter, "fusion dimensions must be positive");
    }
    if (model_dim % heads != 0) {
        throw Error(ErrorCode::parameter, "heads (" + std::to_string(heads) + ") must divide model_dim (" +
                                              std::to_string(model_dim) + ")");
    }
}

FusionParams FusionParams::init(const FusionConfig& config, SeededRng& rng) {
    config.validate();
    FusionParams p;
    p.config = config;
    p.proj_ssl = nn::AffineLayer::xavier(config.ssl_dim, config.proj_dim, rng);
    p.q_layer = nn::AffineLayer::xavier(config.query_dim, config.model_dim, rng);
    p.k_layer = nn::AffineLayer::xavier(config.proj_dim, config.model_dim, rng);
    p.v_layer = nn::AffineLayer::xavier(config.proj_dim, config.model_dim, rng);
    p.out_layer = nn::AffineLayer::xavier(config.model_dim, config.model_dim, rng);
    return p;
}

void FusionParams::append_params(std::vector<nn::NamedParam>& out) const {
    proj_ssl.append_params("fusion.proj_ssl", out);
    q_layer.append_params("fusion.q", out);
    k_layer.append_params("fusion.k", out);
    v_layer.append_params("fusion.v", out);
    out_layer.append_params("fusion.out", out);
}

AttentionResult scaled_dot_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v) {
    if (q.cols() != k.cols()) {
        throw Error(ErrorCode::shape, "attention: query width " + std::to_string(q.cols()) + " != key width " +
                                          std::to_string(k.cols()));
    }
    if (k.rows() != v.rows()) {
        throw Error(ErrorCode::shape, "attention: " + std::to_string(k.rows()) + " keys but " +
                                          std::to_string(v.rows()) + " values");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    nn::Tensor logits = nn::scale(nn::matmul(q, nn::transpose(k)), inv_sqrt_d);
    nn::Tensor weights = nn::softmax_rows(logits);
    return {nn::matmul(weights, v), weights};
}

FusionOutput attend_heads(const nn::Tensor& query_features, const nn::Tensor& key_input, const nn::Tensor& value_input,
                          const FusionParams& params) {
    const FusionConfig& cfg = params.config;
    cfg.validate();
    if (query_features.cols() != cfg.query_dim) {
        throw Error(ErrorCode::shape, "query features are " + std::to_string(query_features.cols()) +
                                          " wide, expected " + std::to_string(cfg.query_dim));
    }
    const nn::Tensor q = nn::affine(query_features, params.q_layer);
    const nn::Tensor k = nn::affine(key_input, params.k_layer);
    const nn::Tensor v = nn::affine(value_input, params.v_layer);

    const Eigen::Index d = cfg.head_dim();
    FusionOutput out;
    std::vector<nn::Tensor> heads;
    for (Eigen::Index h = 0; h < cfg.heads; ++h) {
        auto r = scaled_dot_attention(nn::slice_cols(q, h * d, d), nn::slice_cols(k, h * d, d),
                                      nn::slice_cols(v, h * d, d));
        heads.push_back(r.output);
        out.weights.push_back(r.weights);
    }
    out.heads_concat = cfg.heads == 1 ? heads.front() : nn::concat_cols(heads);
    out.fused = nn::affine(out.heads_concat, params.out_layer);
    return out;
}

FusionOutput fuse(const nn::Tensor& query_features, const nn::Tensor& ssl, const FusionParams& params) {
    if (ssl.cols() != params.config.ssl_dim) {
        throw Error(ErrorCode::shape, "SSL embeddings are " + std::to_string(ssl.cols()) + " wide, expected " +
                                          std::to_string(params.config.ssl_dim));
    }
    const nn::Tensor projected = nn::affine(ssl, params.proj_ssl);
    return attend_heads(query_features, projected, projected, params);
}

namespace {

void check_canonical(const Matrix& modspec_features, const EmbeddingMatrix& ssl) {
    if (modspec_features.rows() != static_cast<Eigen::Index>(kFreqBins) ||
        modspec_features.cols() != static_cast<Eigen::Index>(kModBins)) {
        throw Error(ErrorCode::shape, "modulation features must be 201x202, got " +
                                          std::to_string(modspec_features.rows()) + "x" +
                                          std::to_string(modspec_features.cols()));
    }
    if (ssl.values.rows() != static_cast<Eigen::Index>(kSslFrames) ||
        ssl.values.cols() != static_cast<Eigen::Index>(kSslDim)) {
        throw Error(ErrorCode::shape, "SSL embeddings must be 201x1024, got " + std::to_string(ssl.values.rows()) +
                                          "x" + std::to_string(ssl.values.cols()));
    }
}

}  // namespace

nn::Tensor multi_head_fuse(const Matrix& modspec_features, const EmbeddingMatrix& ssl, const FusionParams& params) {
    check_canonical(modspec_features, ssl);
    return fuse(nn::Tensor::constant(modspec_features), nn::Tensor::constant(ssl.values), params).fused;
}

nn::Tensor multi_head_fuse(const ModSpectrogram& modspec, const EmbeddingMatrix& ssl, const FusionParams& params) {
    return multi_head_fuse(modspec.values, ssl, params);
}

std::vector<Matrix> attention_weights(const Matrix& modspec_features, const EmbeddingMatrix& ssl,
                                      const FusionParams& params) {
    check_canonical(modspec_features, ssl);
    const auto out = fuse(nn::Tensor::constant(modspec_features), nn::Tensor::constant(ssl.values), params);
    std::vector<Matrix> weights;
    for (const auto& w : out.weights) weights.push_back(w.value());
    return weights;
}

}  // namespace modfuse
