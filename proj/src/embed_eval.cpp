#include "figforge/embed_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "figforge/rng.hpp"

namespace figforge {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Shape + finiteness check that, unlike validate(EmbeddingMatrix), does not
// involve the id sidecar; all math here ignores ids.
void ensure_numeric(const EmbeddingMatrix& m, const char* name) {
  if (m.data.size() != std::size_t(m.n) * m.d)
    throw ValidationError(std::string(name) + ": data size does not match n*d");
  for (float v : m.data)
    if (!std::isfinite(v))
      throw ValidationError(std::string(name) + ": non-finite value");
}

MatrixXd as_double(const EmbeddingMatrix& m) {
  return Eigen::Map<const RowMajorF>(m.data.data(), m.n, m.d).cast<double>();
}

// Rows scaled to unit Euclidean norm; zero rows are rejected since cosine
// similarity is undefined for them.
MatrixXd normalized_rows(const EmbeddingMatrix& m, const char* name) {
  ensure_numeric(m, name);
  MatrixXd out = as_double(m);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm == 0.0)
      throw ValidationError(std::string(name) + ": zero-norm row " +
                            std::to_string(i));
    out.row(i) /= norm;
  }
  return out;
}

void check_batch(const ContrastiveBatch& batch) {
  if (!(batch.tau > 0.0))
    throw ValidationError("temperature must be > 0");
  if (batch.image_embeds.n != batch.text_embeds.n ||
      batch.image_embeds.d != batch.text_embeds.d)
    throw ValidationError("image and text embedding shapes differ");
  if (batch.image_embeds.n == 0)
    throw ValidationError("batch must contain at least one pair");
}

double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double infonce_loss(const ContrastiveBatch& batch) {
  check_batch(batch);
  const MatrixXd x = normalized_rows(batch.image_embeds, "image_embeds");
  const MatrixXd t = normalized_rows(batch.text_embeds, "text_embeds");
  const Eigen::Index n = x.rows();
  const MatrixXd logits = (x * t.transpose()) / batch.tau;

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += log_sum_exp(logits.row(i)) - logits(i, i);   // image -> text
    loss += log_sum_exp(logits.col(i)) - logits(i, i);   // text -> image
  }
  return loss / static_cast<double>(n);
}

namespace {

MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// Chain rule through u = v / |v| for every row: given dL/du, produce dL/dv.
MatrixXd through_normalization(const MatrixXd& raw, const MatrixXd& unit,
                               const MatrixXd& grad_unit) {
  MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double norm = raw.row(i).norm();
    const double dot = unit.row(i).dot(grad_unit.row(i));
    out.row(i) = (grad_unit.row(i) - dot * unit.row(i)) / norm;
  }
  return out;
}

}  // namespace

InfonceGradients infonce_grad(const ContrastiveBatch& batch) {
  check_batch(batch);
  const MatrixXd raw_x = as_double(batch.image_embeds);
  const MatrixXd raw_t = as_double(batch.text_embeds);
  const MatrixXd x = normalized_rows(batch.image_embeds, "image_embeds");
  const MatrixXd t = normalized_rows(batch.text_embeds, "text_embeds");
  const Eigen::Index n = x.rows();
  const MatrixXd logits = (x * t.transpose()) / batch.tau;

  // d loss / d logits = (P + Q - 2I) / (n tau) with P the row softmax
  // (image -> text direction) and Q the column softmax.
  const MatrixXd p = softmax_rows(logits);
  const MatrixXd q = softmax_rows(logits.transpose()).transpose();
  MatrixXd g = p + q;
  g.diagonal().array() -= 2.0;
  g /= static_cast<double>(n) * batch.tau;

  const MatrixXd grad_unit_x = g * t;
  const MatrixXd grad_unit_t = g.transpose() * x;

  InfonceGradients grads;
  grads.n = batch.image_embeds.n;
  grads.d = batch.image_embeds.d;
  const MatrixXd gx = through_normalization(raw_x, x, grad_unit_x);
  const MatrixXd gt = through_normalization(raw_t, t, grad_unit_t);
  grads.image.resize(std::size_t(grads.n) * grads.d);
  grads.text.resize(std::size_t(grads.n) * grads.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < gx.cols(); ++j) {
      grads.image[std::size_t(i) * grads.d + j] = gx(i, j);
      grads.text[std::size_t(i) * grads.d + j] = gt(i, j);
    }
  }
  return grads;
}

double recall_at_k(const EmbeddingMatrix& query, const EmbeddingMatrix& target,
                   std::uint32_t k) {
  if (query.n != target.n || query.d != target.d)
    throw ValidationError("query and target embedding shapes differ");
  if (query.n == 0) throw ValidationError("empty embedding matrices");
  if (k < 1 || k > query.n)
    throw ValidationError("k must lie in [1, n]",
                          {{"k", std::to_string(k)},
                           {"n", std::to_string(query.n)}});
  const MatrixXd q = normalized_rows(query, "query");
  const MatrixXd t = normalized_rows(target, "target");
  const Eigen::Index n = q.rows();

  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd sims = t * q.row(i).transpose();
    const double own = sims(i);
    std::uint32_t rank = 1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (sims(j) > own || (sims(j) == own && j < i)) ++rank;
    }
    if (rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double zero_shot_f1(const EmbeddingMatrix& image_embeds,
                    const EmbeddingMatrix& class_embeds,
                    const std::vector<std::uint32_t>& labels) {
  if (image_embeds.n == 0) throw ValidationError("empty image embedding set");
  if (class_embeds.n == 0) throw ValidationError("empty class embedding set");
  if (image_embeds.d != class_embeds.d)
    throw ValidationError("image and class embedding dimensions differ");
  if (labels.size() != image_embeds.n)
    throw ValidationError("label count does not match image count");
  const std::uint32_t n_classes = class_embeds.n;
  for (std::uint32_t label : labels)
    if (label >= n_classes)
      throw ValidationError("label index out of range",
                            {{"label", std::to_string(label)},
                             {"classes", std::to_string(n_classes)}});

  const MatrixXd x = normalized_rows(image_embeds, "image_embeds");
  const MatrixXd c = normalized_rows(class_embeds, "class_embeds");

  std::vector<std::uint64_t> tp(n_classes, 0), fp(n_classes, 0),
      fn(n_classes, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const VectorXd sims = c * x.row(i).transpose();
    Eigen::Index pred = 0;
    for (Eigen::Index j = 1; j < sims.size(); ++j)
      if (sims(j) > sims(pred)) pred = j;
    const std::uint32_t truth = labels[static_cast<std::size_t>(i)];
    if (static_cast<std::uint32_t>(pred) == truth) {
      ++tp[truth];
    } else {
      ++fp[static_cast<std::size_t>(pred)];
      ++fn[truth];
    }
  }
  double sum = 0.0;
  for (std::uint32_t cls = 0; cls < n_classes; ++cls) {
    const double denom =
        static_cast<double>(2 * tp[cls] + fp[cls] + fn[cls]);
    sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[cls]) / denom : 0.0;
  }
  return sum / static_cast<double>(n_classes);
}

RobustnessReport robustness_ratio(
    double clean_metric,
    const std::map<std::string, double>& perturbed_metrics) {
  if (!(clean_metric > 0.0))
    throw ValidationError("clean metric must be > 0");
  if (perturbed_metrics.empty())
    throw ValidationError("no perturbed metrics given");
  RobustnessReport report;
  double sum = 0.0;
  for (const auto& [name, value] : perturbed_metrics) {
    const double ratio = value / clean_metric;
    report.ratios.emplace(name, ratio);
    sum += ratio;
  }
  report.average = sum / static_cast<double>(perturbed_metrics.size());
  return report;
}

namespace {

// Midranks of |d|, plus the tie-group sizes needed for the normal
// approximation's variance correction.
std::vector<double> midranks(const std::vector<double>& abs_d,
                             std::vector<std::size_t>* tie_sizes) {
  const std::size_t n = abs_d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t pos = 0;
  while (pos < n) {
    std::size_t end = pos + 1;
    while (end < n && abs_d[order[end]] == abs_d[order[pos]]) ++end;
    const double mid = (static_cast<double>(pos + 1) +
                        static_cast<double>(end)) / 2.0;
    for (std::size_t i = pos; i < end; ++i) ranks[order[i]] = mid;
    if (tie_sizes) tie_sizes->push_back(end - pos);
    pos = end;
  }
  return ranks;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

StatTestResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("paired lists must have equal length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw ValidationError("non-finite value in paired lists");
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n == 0)
    throw ValidationError("all paired differences are zero");

  std::vector<double> abs_d(n);
  for (std::size_t i = 0; i < n; ++i) abs_d[i] = std::abs(diffs[i]);
  std::vector<std::size_t> tie_sizes;
  const std::vector<double> ranks = midranks(abs_d, &tie_sizes);

  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    (diffs[i] > 0.0 ? w_plus : w_minus) += ranks[i];
  const double w = std::min(w_plus, w_minus);

  StatTestResult result;
  result.statistic = w;
  result.n_effective = n;

  if (n <= 25) {
    // Exact distribution of 2*W+ over all 2^n sign assignments, counted by
    // subset-sum DP over doubled ranks (midranks are half-integers).
    std::vector<long long> r2(n);
    long long total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = std::llround(2.0 * ranks[i]);
      total2 += r2[i];
    }
    std::vector<std::uint64_t> count(static_cast<std::size_t>(total2) + 1, 0);
    count[0] = 1;
    for (std::size_t i = 0; i < n; ++i)
      for (long long s = total2; s >= r2[i]; --s)
        count[static_cast<std::size_t>(s)] +=
            count[static_cast<std::size_t>(s - r2[i])];
    const long long w2 = std::llround(2.0 * w);
    std::uint64_t extreme = 0;
    for (long long s = 0; s <= total2; ++s)
      if (std::min(s, total2 - s) <= w2)
        extreme += count[static_cast<std::size_t>(s)];
    result.p_value = static_cast<double>(extreme) /
                     std::pow(2.0, static_cast<double>(n));
    result.method = "wilcoxon_exact";
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    for (std::size_t t : tie_sizes) {
      const double td = static_cast<double>(t);
      tie_term += td * td * td - td;
    }
    const double sigma2 =
        nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (w - mu + 0.5) / std::sqrt(sigma2);
    result.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    result.method = "wilcoxon_normal";
  }
  return result;
}

namespace {

MatrixXd pooled_rows(const EmbeddingMatrix& x, const EmbeddingMatrix& y) {
  ensure_numeric(x, "x");
  ensure_numeric(y, "y");
  if (x.d != y.d)
    throw ValidationError("sample dimensions differ",
                          {{"x_d", std::to_string(x.d)},
                           {"y_d", std::to_string(y.d)}});
  MatrixXd pooled(x.n + y.n, x.d);
  pooled.topRows(x.n) = as_double(x);
  pooled.bottomRows(y.n) = as_double(y);
  return pooled;
}

double rbf(double sq_dist, double sigma) {
  return std::exp(-sq_dist / (2.0 * sigma * sigma));
}

}  // namespace

double median_heuristic_sigma(const EmbeddingMatrix& x,
                              const EmbeddingMatrix& y) {
  const MatrixXd pooled = pooled_rows(x, y);
  const Eigen::Index total = pooled.rows();
  if (total < 2)
    throw ValidationError("median heuristic needs at least two pooled rows");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(total) * (total - 1) / 2);
  for (Eigen::Index i = 0; i < total; ++i)
    for (Eigen::Index j = i + 1; j < total; ++j)
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  std::sort(dists.begin(), dists.end());
  const std::size_t count = dists.size();
  const double median = count % 2 == 1
                            ? dists[count / 2]
                            : 0.5 * (dists[count / 2 - 1] + dists[count / 2]);
  return median > 0.0 ? median : 1.0;
}

double mmd2_biased(const EmbeddingMatrix& x, const EmbeddingMatrix& y,
                   double sigma) {
  if (x.n < 1 || y.n < 1)
    throw ValidationError("both samples must be nonempty");
  if (!(sigma > 0.0)) throw ValidationError("kernel sigma must be > 0");
  const MatrixXd xd = as_double(x);
  const MatrixXd yd = as_double(y);
  ensure_numeric(x, "x");
  ensure_numeric(y, "y");
  if (x.d != y.d) throw ValidationError("sample dimensions differ");

  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (Eigen::Index i = 0; i < xd.rows(); ++i)
    for (Eigen::Index j = 0; j < xd.rows(); ++j)
      kxx += rbf((xd.row(i) - xd.row(j)).squaredNorm(), sigma);
  for (Eigen::Index i = 0; i < yd.rows(); ++i)
    for (Eigen::Index j = 0; j < yd.rows(); ++j)
      kyy += rbf((yd.row(i) - yd.row(j)).squaredNorm(), sigma);
  for (Eigen::Index i = 0; i < xd.rows(); ++i)
    for (Eigen::Index j = 0; j < yd.rows(); ++j)
      kxy += rbf((xd.row(i) - yd.row(j)).squaredNorm(), sigma);
  const double nn = static_cast<double>(x.n);
  const double mm = static_cast<double>(y.n);
  return kxx / (nn * nn) + kyy / (mm * mm) - 2.0 * kxy / (nn * mm);
}

StatTestResult mmd_permutation_test(const EmbeddingMatrix& x,
                                    const EmbeddingMatrix& y, int permutations,
                                    std::optional<double> kernel_sigma,
                                    std::uint64_t seed) {
  if (x.n < 2 || y.n < 2)
    throw ValidationError("permutation test requires at least 2 rows per side");
  if (permutations < 1)
    throw ConfigError("permutations must be >= 1");
  const double sigma =
      kernel_sigma ? *kernel_sigma : median_heuristic_sigma(x, y);
  if (!(sigma > 0.0)) throw ValidationError("kernel sigma must be > 0");

  const MatrixXd pooled = pooled_rows(x, y);
  const std::size_t total = static_cast<std::size_t>(pooled.rows());
  const std::size_t n = x.n;
  const std::size_t m = y.n;

  // Kernel matrix and row sums are fixed; each partition's statistic is a
  // sum over index sets.
  MatrixXd kernel(total, total);
  for (std::size_t i = 0; i < total; ++i) {
    kernel(i, i) = 1.0;
    for (std::size_t j = i + 1; j < total; ++j) {
      const double k =
          rbf((pooled.row(i) - pooled.row(j)).squaredNorm(), sigma);
      kernel(i, j) = k;
      kernel(j, i) = k;
    }
  }
  const VectorXd row_sums = kernel.rowwise().sum();
  const double total_sum = row_sums.sum();

  const auto stat_for = [&](const std::vector<std::uint32_t>& side_a) {
    double s_aa = 0.0;
    double s_ax = 0.0;
    for (std::size_t i = 0; i < side_a.size(); ++i) {
      s_ax += row_sums(side_a[i]);
      for (std::size_t j = 0; j < side_a.size(); ++j)
        s_aa += kernel(side_a[i], side_a[j]);
    }
    const double s_ab = s_ax - s_aa;
    const double s_bb = total_sum - 2.0 * s_ax + s_aa;
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    return s_aa / (nn * nn) + s_bb / (mm * mm) - 2.0 * s_ab / (nn * mm);
  };

  std::vector<std::uint32_t> indices(total);
  std::iota(indices.begin(), indices.end(), 0);
  std::vector<std::uint32_t> side_a(indices.begin(), indices.begin() + n);
  const double observed = stat_for(side_a);

  int at_least = 0;
  for (int t = 1; t <= permutations; ++t) {
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> perm = indices;
    for (std::size_t i = total - 1; i > 0; --i) {
      const std::size_t j = rng.next_below(i + 1);
      std::swap(perm[i], perm[j]);
    }
    side_a.assign(perm.begin(), perm.begin() + n);
    if (stat_for(side_a) >= observed) ++at_least;
  }

  StatTestResult result;
  result.statistic = observed;
  result.p_value = static_cast<double>(1 + at_least) /
                   static_cast<double>(1 + permutations);
  result.method = "mmd_permutation";
  result.n_effective = total;
  return result;
}

}  // namespace figforge
