#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "figforge/types.hpp"

namespace figforge {

// One aligned image/text batch. Row i of each matrix encodes the i-th pair;
// rows need not be pre-normalized, similarity is cosine throughout.
struct ContrastiveBatch {
  EmbeddingMatrix image_embeds;
  EmbeddingMatrix text_embeds;
  double tau = 1.0;  // temperature, > 0
};

// Symmetric InfoNCE loss: mean over pairs of the two-direction
// cross-entropy (natural log, temperature-scaled cosine similarities).
// Computed in double precision with max-subtraction stabilized softmaxes.
double infonce_loss(const ContrastiveBatch& batch);

struct InfonceGradients {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::vector<double> image;  // n*d row-major, d loss / d image_embeds
  std::vector<double> text;   // n*d row-major, d loss / d text_embeds
};

// Analytic gradient of infonce_loss with respect to the raw (unnormalized)
// embedding entries, cosine normalization included in the chain.
InfonceGradients infonce_grad(const ContrastiveBatch& batch);

// Fraction of queries whose matching target row (same index) ranks within
// the top k by cosine similarity. Equal similarities rank lower indices
// first. Requires 1 <= k <= n.
double recall_at_k(const EmbeddingMatrix& query, const EmbeddingMatrix& target,
                   std::uint32_t k);

// Nearest-class-embedding prediction (argmax cosine, ties to the lower
// class index), scored as macro-F1 over all classes; classes absent from
// both truth and prediction contribute 0.
double zero_shot_f1(const EmbeddingMatrix& image_embeds,
                    const EmbeddingMatrix& class_embeds,
                    const std::vector<std::uint32_t>& labels);

struct RobustnessReport {
  std::map<std::string, double> ratios;  // perturbation -> perturbed/clean
  double average = 0.0;
};

RobustnessReport robustness_ratio(
    double clean_metric, const std::map<std::string, double>& perturbed_metrics);

// Wilcoxon signed-rank test on paired samples. Zero differences are
// dropped; |d| ties get midranks; the statistic is W = min(W+, W-).
// Two-sided p is exact (full sign-assignment distribution) for up to 25
// nonzero differences, and a tie-corrected normal approximation with
// continuity correction beyond that.
StatTestResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

// Median pairwise Euclidean distance over the pooled rows of x and y
// (midpoint convention for even counts). Falls back to 1 when all rows
// coincide.
double median_heuristic_sigma(const EmbeddingMatrix& x,
                              const EmbeddingMatrix& y);

// Biased (V-statistic) squared MMD with an RBF kernel
// k(u,v) = exp(-|u-v|^2 / (2 sigma^2)). Defined for n, m >= 1; identical
// samples give exactly 0.
double mmd2_biased(const EmbeddingMatrix& x, const EmbeddingMatrix& y,
                   double sigma);

// Permutation test on mmd2_biased: pooled rows are reshuffled
// `permutations` times (iteration t uses the RNG seeded with
// derive_seed(seed, t), so runs are reproducible bit for bit) and
// p = (1 + #{permuted >= observed}) / (1 + permutations). Sigma defaults
// to the median heuristic on the pooled sample and is held fixed across
// permutations. Requires n, m >= 2.
StatTestResult mmd_permutation_test(const EmbeddingMatrix& x,
                                    const EmbeddingMatrix& y,
                                    int permutations = 100,
                                    std::optional<double> kernel_sigma = {},
                                    std::uint64_t seed = 0);

}  // namespace figforge
