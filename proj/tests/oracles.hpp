#pragma once

// Straight-loop scalar re-implementations used as oracles by the unit and
// acceptance tests. Deliberately naive: no tensors, no shared code with the
// library beyond element access.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace oracles {

inline constexpr double kClamp = 1e-7;

// categorical cross-entropy over N rows of C probabilities
inline double loss_cls(const std::vector<std::vector<double>>& probs,
                       const std::vector<int>& labels) {
    double total = 0.0;
    for (size_t b = 0; b < probs.size(); ++b) {
        double p = probs[b][static_cast<size_t>(labels[b])];
        if (p < kClamp) p = kClamp;
        if (p > 1.0) p = 1.0;
        total -= std::log(p);
    }
    return total / static_cast<double>(probs.size());
}

// mean Euclidean norm of per-sample voxel differences
inline double loss_rec(const std::vector<std::vector<double>>& originals,
                       const std::vector<std::vector<double>>& recons) {
    double total = 0.0;
    for (size_t b = 0; b < originals.size(); ++b) {
        double ss = 0.0;
        for (size_t i = 0; i < originals[b].size(); ++i) {
            const double d = originals[b][i] - recons[b][i];
            ss += d * d;
        }
        total += std::sqrt(ss);
    }
    return total / static_cast<double>(originals.size());
}

inline double loss_total(double l_cls, double l_rec, double lambda_cls, double lambda_rec) {
    return lambda_cls * l_cls + lambda_rec * l_rec;
}

inline std::vector<double> softmax_row(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

// O(n^2) pair-counting AUC, ties get half credit
inline double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i)
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[i] != 1 || labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    return wins / static_cast<double>(pairs);
}

inline double iou(const std::vector<double>& pred, const std::vector<double>& truth,
                  double threshold = 0.5) {
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] > threshold, t = truth[i] > threshold;
        inter += p && t;
        uni += p || t;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double dice(const std::vector<double>& pred, const std::vector<double>& truth,
                   double threshold = 0.5) {
    int64_t inter = 0, psum = 0, tsum = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] > threshold, t = truth[i] > threshold;
        inter += p && t;
        psum += p;
        tsum += t;
    }
    return psum + tsum == 0 ? 1.0 : 2.0 * static_cast<double>(inter) /
                                        static_cast<double>(psum + tsum);
}

struct MeanVar {
    double mean = 0.0;
    double var = 0.0; // unbiased
};

inline MeanVar mean_var(const std::vector<double>& xs) {
    MeanVar mv;
    for (double x : xs) mv.mean += x;
    mv.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        for (double x : xs) mv.var += (x - mv.mean) * (x - mv.mean);
        mv.var /= static_cast<double>(xs.size() - 1);
    }
    return mv;
}

// textbook pooled-variance independent two-sample t statistic
inline double two_sample_t(const std::vector<double>& a, const std::vector<double>& b) {
    const MeanVar ma = mean_var(a), mb = mean_var(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    if (ma.mean == mb.mean) return 0.0;
    const double sp2 = ((na - 1.0) * ma.var + (nb - 1.0) * mb.var) / (na + nb - 2.0);
    const double denom = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    if (denom == 0.0)
        return ma.mean > mb.mean ? std::numeric_limits<double>::infinity()
                                 : -std::numeric_limits<double>::infinity();
    return (ma.mean - mb.mean) / denom;
}

// brute-force K nearest by L2 distance, ties by ascending id
inline std::vector<std::pair<std::string, double>> nearest(
    const std::vector<std::pair<std::string, std::vector<double>>>& points,
    const std::vector<double>& query, const std::string& query_id, size_t K) {
    std::vector<std::pair<std::string, double>> all;
    for (const auto& [id, v] : points) {
        if (id == query_id) continue;
        double ss = 0.0;
        for (size_t i = 0; i < v.size(); ++i) ss += (v[i] - query[i]) * (v[i] - query[i]);
        all.emplace_back(id, std::sqrt(ss));
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    all.resize(std::min(K, all.size()));
    return all;
}

} // namespace oracles
