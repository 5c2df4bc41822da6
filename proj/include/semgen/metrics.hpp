#pragma once

#include <cstdint>
#include <vector>

#include "semgen/types.hpp"

namespace semgen {

// Mann-Whitney AUC via average ranks (ties get half credit). Throws when
// either class is empty.
double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// macro one-vs-rest over classes present on both sides of the split
double macro_auc(const std::vector<std::vector<double>>& class_scores,
                 const std::vector<int>& labels, int n_classes);

// overlap metrics on thresholded masks; two empty masks count as perfect
double iou(const float* pred, const float* truth, int64_t n, double threshold = 0.5);
double dice(const float* pred, const float* truth, int64_t n, double threshold = 0.5);
double iou(const Volume& pred, const Volume& truth, double threshold = 0.5);
double dice(const Volume& pred, const Volume& truth, double threshold = 0.5);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0; // sample standard deviation (n-1); 0 when n < 2
};
MeanSd mean_sd(const std::vector<double>& xs);

// pooled-variance two-sample t. Equal means give exactly 0; unequal means
// with zero pooled variance give +/-infinity.
double two_sample_t(const std::vector<double>& a, const std::vector<double>& b);

} // namespace semgen
