#include "semgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "semgen/errors.hpp"

namespace semgen {

double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ValidationError("auc: scores/labels size mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw ValidationError("auc: labels must be 0/1");
        n_pos += static_cast<size_t>(l);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("auc undefined: one class is empty");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // average ranks across tie groups, then the Mann-Whitney identity
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auc(const std::vector<std::vector<double>>& class_scores,
                 const std::vector<int>& labels, int n_classes) {
    if (class_scores.size() != labels.size()) throw ValidationError("auc: scores/labels size mismatch");
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> scores;
        std::vector<int> binary;
        scores.reserve(labels.size());
        binary.reserve(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) {
            scores.push_back(class_scores[i][static_cast<size_t>(c)]);
            binary.push_back(labels[i] == c ? 1 : 0);
        }
        const size_t pos = static_cast<size_t>(std::count(binary.begin(), binary.end(), 1));
        if (pos == 0 || pos == binary.size()) continue; // class absent on one side, skip
        sum += binary_auc(scores, binary);
        ++counted;
    }
    if (counted == 0) throw ValidationError("auc undefined: no class has both outcomes");
    return sum / counted;
}

double iou(const float* pred, const float* truth, int64_t n, double threshold) {
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < n; ++i) {
        const bool p = static_cast<double>(pred[i]) > threshold;
        const bool t = static_cast<double>(truth[i]) > threshold;
        inter += (p && t);
        uni += (p || t);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const float* pred, const float* truth, int64_t n, double threshold) {
    int64_t inter = 0, total = 0;
    for (int64_t i = 0; i < n; ++i) {
        const bool p = static_cast<double>(pred[i]) > threshold;
        const bool t = static_cast<double>(truth[i]) > threshold;
        inter += (p && t);
        total += static_cast<int64_t>(p) + static_cast<int64_t>(t);
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double iou(const Volume& pred, const Volume& truth, double threshold) {
    if (!(pred.shape == truth.shape)) throw ValidationError("iou: shape mismatch");
    return iou(pred.voxels.data(), truth.voxels.data(), pred.shape.voxels(), threshold);
}

double dice(const Volume& pred, const Volume& truth, double threshold) {
    if (!(pred.shape == truth.shape)) throw ValidationError("dice: shape mismatch");
    return dice(pred.voxels.data(), truth.voxels.data(), pred.shape.voxels(), threshold);
}

MeanSd mean_sd(const std::vector<double>& xs) {
    if (xs.empty()) throw ValidationError("mean_sd: empty sample");
    MeanSd out;
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return out;
}

double two_sample_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("two_sample_t: need at least 2 per group");
    const auto ma = mean_sd(a), mb = mean_sd(b);
    const double diff = ma.mean - mb.mean;
    if (diff == 0.0) return 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double sp2 = ((na - 1.0) * ma.sd * ma.sd + (nb - 1.0) * mb.sd * mb.sd) / (na + nb - 2.0);
    const double denom = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    if (denom == 0.0)
        return diff > 0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
    return diff / denom;
}

} // namespace semgen
