#pragma once

#include <vector>

#include "modfuse/fusion.hpp"
#include "modfuse/nn.hpp"

namespace modfuse {

inline constexpr int kLabelFake = 0;
inline constexpr int kLabelBonafide = 1;

struct HeadConfig {
    Eigen::Index input_dim = 512;  // max-pool and mean-pool of the fused sequence
    Eigen::Index hidden_dim = 128;
};

// Pooling head: [max | mean] -> affine -> ReLU -> affine -> 2 logits
// (index 0 fake, index 1 bonafide).
struct HeadParams {
    HeadConfig config;
    nn::AffineLayer hidden;
    nn::AffineLayer out;

    static HeadParams init(const HeadConfig& config, SeededRng& rng);
    void append_params(std::vector<nn::NamedParam>& out_params) const;
};

// Column-wise max concatenated with column-wise mean, 1 x 2C.
nn::Tensor pool_features(const nn::Tensor& fused);

nn::Tensor head_logits(const nn::Tensor& fused, const HeadParams& head);

// logit_bonafide - logit_fake; positive leans bonafide.
nn::Tensor score_tensor(const nn::Tensor& logits);
double score(const nn::Tensor& fused, const HeadParams& head);

// Fusion front-end plus head, with a stable parameter naming used by
// checkpoints and the optimizer.
struct Detector {
    FusionParams fusion;
    HeadParams head;

    static Detector init(const FusionConfig& fusion_config, const HeadConfig& head_config, std::uint64_t seed);

    std::vector<nn::NamedParam> named_params() const;

    // 1 x 2 logits for one utterance.
    nn::Tensor logits(const Matrix& query_features, const Matrix& ssl) const;
};

}  // namespace modfuse
