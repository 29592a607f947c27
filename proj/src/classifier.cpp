#include "modfuse/classifier.hpp"

#include <cmath>

#include "modfuse/error.hpp"

namespace modfuse {

HeadParams HeadParams::init(const HeadConfig& config, SeededRng& rng) {
    if (config.input_dim <= 0 || config.hidden_dim <= 0) throw Error(ErrorCode::parameter, "head dimensions must be positive");
    HeadParams h;
    h.config = config;
    h.hidden = nn::AffineLayer::xavier(config.input_dim, config.hidden_dim, rng);
    h.out = nn::AffineLayer::xavier(config.hidden_dim, 2, rng);
    return h;
}

void HeadParams::append_params(std::vector<nn::NamedParam>& out_params) const {
    hidden.append_params("head.hidden", out_params);
    out.append_params("head.out", out_params);
}

nn::Tensor pool_features(const nn::Tensor& fused) {
    if (fused.rows() == 0) throw Error(ErrorCode::empty_input, "cannot pool an empty sequence");
    const nn::Tensor parts[] = {nn::max_rows(fused), nn::mean_rows(fused)};
    return nn::concat_cols(parts);
}

nn::Tensor head_logits(const nn::Tensor& fused, const HeadParams& head) {
    const nn::Tensor pooled = pool_features(fused);
    if (pooled.cols() != head.hidden.in_dim()) {
        throw Error(ErrorCode::shape, "pooled width " + std::to_string(pooled.cols()) + " does not match head input " +
                                          std::to_string(head.hidden.in_dim()));
    }
    return nn::affine(nn::relu(nn::affine(pooled, head.hidden)), head.out);
}

nn::Tensor score_tensor(const nn::Tensor& logits) {
    if (logits.cols() != 2) throw Error(ErrorCode::shape, "score needs two logits");
    return nn::sub(nn::slice_cols(logits, kLabelBonafide, 1), nn::slice_cols(logits, kLabelFake, 1));
}

double score(const nn::Tensor& fused, const HeadParams& head) {
    const nn::Tensor logits = head_logits(fused, head);
    if (!logits.value().allFinite()) throw Error(ErrorCode::numeric, "non-finite logits");
    return logits.value()(0, kLabelBonafide) - logits.value()(0, kLabelFake);
}

Detector Detector::init(const FusionConfig& fusion_config, const HeadConfig& head_config, std::uint64_t seed) {
    if (head_config.input_dim != 2 * fusion_config.model_dim) {
        throw Error(ErrorCode::parameter, "head input must be twice the fusion model dimension");
    }
    SeededRng rng(seed);
    Detector d;
    d.fusion = FusionParams::init(fusion_config, rng);
    d.head = HeadParams::init(head_config, rng);
    return d;
}

std::vector<nn::NamedParam> Detector::named_params() const {
    std::vector<nn::NamedParam> out;
    fusion.append_params(out);
    head.append_params(out);
    return out;
}

nn::Tensor Detector::logits(const Matrix& query_features, const Matrix& ssl) const {
    const auto fused = fuse(nn::Tensor::constant(query_features), nn::Tensor::constant(ssl), fusion);
    return head_logits(fused.fused, head);
}

}  // namespace modfuse
