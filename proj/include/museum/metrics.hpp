#pragma once

#include <cstdint>
#include <vector>

#include "museum/autograd.hpp"
#include "museum/tensor.hpp"

namespace museum {

// Fixed random-weight conv net used as the style/FID feature space:
// conv3x3 3->16, conv3x3/2 16->16 [tap], conv3x3 16->32, conv3x3/2 32->32
// [tap], ReLU after each layer.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed = 0x5eed);

    // Activations at the two tap points.
    [[nodiscard]] std::vector<Tensor> taps(const Tensor& image) const;
    // Channel means of both taps concatenated; the FID feature vector.
    [[nodiscard]] std::vector<double> embed(const Tensor& image) const;

private:
    struct Layer {
        Tensor w, b;
        int stride;
    };
    std::vector<Layer> layers_;
};

// G = F F^T / (C H W) with F the (C, H*W) reshape.
Tensor gram_matrix(const Tensor& features);

// Mean over (generated, reference) pairs and tap layers of the squared
// Frobenius distance between Gram matrices. Not scaled.
double style_loss(const std::vector<Tensor>& generated, const std::vector<Tensor>& references,
                  const FeatureExtractor& extractor);

// Frechet distance between Gaussian fits of two feature sets.
double fid(const std::vector<std::vector<double>>& feats_a, const std::vector<std::vector<double>>& feats_b);

// Mean cosine similarity between generated and reference embeddings. Not
// comparable to CLIP score; reported only as a labelled proxy.
double proxy_clip(const std::vector<std::vector<double>>& generated, const std::vector<std::vector<double>>& references);

// Held-out accuracy of a seeded logistic-regression probe separating two
// feature sets. The first train_fraction of each set is used for fitting.
double linear_probe_accuracy(const std::vector<std::vector<double>>& class_a,
                             const std::vector<std::vector<double>>& class_b, double train_fraction = 0.5);

// Tiles images (3, S, S) into a rows x cols sheet with a 2px white border.
Tensor contact_sheet(const std::vector<std::vector<Tensor>>& rows);

}  // namespace museum
