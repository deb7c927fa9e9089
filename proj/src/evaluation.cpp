#include "seqpan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace seqpan {

std::pair<int, int> infer_span(const std::vector<double>& p_start,
                               const std::vector<double>& p_end,
                               const std::vector<double>& mask) {
    const int n = static_cast<int>(p_start.size());
    if (p_end.size() != p_start.size() || mask.size() != p_start.size())
        throw ShapeError("infer_span: distribution/mask lengths disagree");

    // For each end b, the best start is the prefix argmax of p_start over
    // unmasked positions; the overall pick compares (score desc, a asc, b asc).
    int best_a = -1, best_b = -1;
    double best_score = -1.0;
    int prefix_arg = -1;
    double prefix_max = -1.0;
    for (int b = 0; b < n; ++b) {
        if (mask[b] <= 0.5) continue;
        if (p_start[b] > prefix_max) {
            prefix_max = p_start[b];
            prefix_arg = b;
        }
        const double score = prefix_max * p_end[b];
        if (score > best_score ||
            (score == best_score && (prefix_arg < best_a || (prefix_arg == best_a && b < best_b)))) {
            best_score = score;
            best_a = prefix_arg;
            best_b = b;
        }
    }
    if (best_a < 0) throw ShapeError("infer_span: no unmasked position");
    return {best_a, best_b};
}

double iou(std::pair<double, double> pred, std::pair<double, double> gt) {
    if (pred.first > pred.second || gt.first > gt.second)
        throw ConfigError("iou: interval start must not exceed its end");
    const double inter = std::min(pred.second, gt.second) - std::max(pred.first, gt.first);
    const double uni = std::max(pred.second, gt.second) - std::min(pred.first, gt.first);
    if (uni <= 0.0) return 1.0;  // two identical point intervals
    return std::max(0.0, inter / uni);
}

EvalReport aggregate(const std::vector<double>& ious) {
    if (ious.empty()) throw ConfigError("aggregate: empty IoU list");
    EvalReport r;
    r.ious = ious;
    double sum = 0.0;
    int c3 = 0, c5 = 0, c7 = 0;
    for (double v : ious) {
        sum += v;
        if (v > 0.3) ++c3;  // strictly larger than the threshold
        if (v > 0.5) ++c5;
        if (v > 0.7) ++c7;
        int bin = static_cast<int>(v * 10.0);
        if (bin > 9) bin = 9;
        if (bin < 0) bin = 0;
        ++r.histogram[bin];
    }
    const double n = static_cast<double>(ious.size());
    r.r1_03 = c3 / n;
    r.r1_05 = c5 / n;
    r.r1_07 = c7 / n;
    r.miou = sum / n;
    return r;
}

std::string histogram_chart(const EvalReport& report) {
    int max_count = 1;
    for (int c : report.histogram) max_count = std::max(max_count, c);
    std::ostringstream os;
    for (int b = 0; b < 10; ++b) {
        const double lo = b / 10.0, hi = (b + 1) / 10.0;
        const int width = (report.histogram[b] * 40 + max_count - 1) / max_count;
        os << "[" << lo << ", " << hi << (b == 9 ? "]" : ")") << '\t';
        for (int i = 0; i < width; ++i) os << '#';
        os << ' ' << report.histogram[b] << "\n";
    }
    return os.str();
}

void save_predictions(const std::string& path, const std::vector<Prediction>& preds,
                      const std::string& config_json) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open '" + path + "' for writing");
    if (!config_json.empty())
        os << nlohmann::json{{"config", nlohmann::json::parse(config_json)}}.dump() << "\n";
    for (const auto& p : preds) {
        nlohmann::json j{{"video_id", p.video_id},
                         {"t_start", p.t_start},
                         {"t_end", p.t_end},
                         {"score", p.score}};
        os << j.dump() << "\n";
    }
}

std::vector<Prediction> load_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open predictions file '" + path + "'");
    std::vector<Prediction> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.contains("config")) continue;  // header record
        Prediction p;
        p.video_id = j.at("video_id").get<std::string>();
        p.t_start = j.at("t_start").get<double>();
        p.t_end = j.at("t_end").get<double>();
        p.score = j.at("score").get<double>();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace seqpan
