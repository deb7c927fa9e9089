#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "seqpan/errors.hpp"

namespace seqpan {

struct Prediction {
    std::string video_id;
    int i_start = 0, i_end = 0;
    double t_start = 0.0, t_end = 0.0;
    double score = 0.0;  // P_s(i_start) * P_e(i_end)
};

struct EvalReport {
    std::vector<double> ious;
    double r1_03 = 0.0, r1_05 = 0.0, r1_07 = 0.0;
    double miou = 0.0;
    std::array<int, 10> histogram{};  // bins [0,0.1) ... [0.9,1.0]
};

// Constrained joint-probability decoding: the (a, b) pair with a <= b over
// unmasked positions maximizing p_start[a] * p_end[b]. Ties break to the
// smallest a, then the smallest b.
std::pair<int, int> infer_span(const std::vector<double>& p_start,
                               const std::vector<double>& p_end,
                               const std::vector<double>& mask);

// Temporal intersection over union of two [start, end] second intervals.
// Identical zero-length intervals count as 1.
double iou(std::pair<double, double> pred, std::pair<double, double> gt);

EvalReport aggregate(const std::vector<double>& ious);

// Fixed-width text bar chart of the IoU histogram.
std::string histogram_chart(const EvalReport& report);

// Predictions file: an optional {"config": ...} header line, then one JSON
// object per sample: {video_id, t_start, t_end, score}.
void save_predictions(const std::string& path, const std::vector<Prediction>& preds,
                      const std::string& config_json = "");
std::vector<Prediction> load_predictions(const std::string& path);

}  // namespace seqpan
