#include "seqpan/labeling.hpp"

#include <cmath>
#include <string>

#include "seqpan/errors.hpp"

namespace seqpan {

namespace {

int region_bound(const std::vector<int>& labels, int cls, bool last) {
    int found = -1;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i)
        if (labels[i] == cls) {
            if (!last) return i;
            found = i;
        }
    return found;
}

}  // namespace

int RegionLabels::begin_lo() const { return region_bound(labels, kLabelB, false); }
int RegionLabels::begin_hi() const { return region_bound(labels, kLabelB, true); }
int RegionLabels::end_lo() const { return region_bound(labels, kLabelE, false); }
int RegionLabels::end_hi() const { return region_bound(labels, kLabelE, true); }

int time_to_index(double t, double duration, int n) {
    if (duration <= 0.0) throw ConfigError("time_to_index: duration must be positive");
    if (n < 2) throw ConfigError("time_to_index: need at least 2 positions");
    long idx = std::lround(t / duration * (n - 1));
    if (idx < 0) idx = 0;
    if (idx > n - 1) idx = n - 1;
    return static_cast<int>(idx);
}

double index_to_time(int index, double duration, int n) {
    return static_cast<double>(index) / (n - 1) * duration;
}

RegionLabels assign_bieo(int i_s, int i_e, int n, double eta) {
    if (!(0 <= i_s && i_s <= i_e && i_e <= n - 1))
        throw ConfigError("assign_bieo: invalid span [" + std::to_string(i_s) + ", " +
                          std::to_string(i_e) + "] for n=" + std::to_string(n));
    if (n < 2) throw ConfigError("assign_bieo: need at least 2 frames");
    if (eta < 0.0) throw ConfigError("assign_bieo: eta must be non-negative");

    const int span_len = i_e - i_s + 1;
    const int ext = static_cast<int>(std::ceil(eta * span_len));
    int b_lo = std::max(0, i_s - ext);
    int b_hi = std::min(n - 1, i_s + ext);
    int e_lo = std::max(0, i_e - ext);
    int e_hi = std::min(n - 1, i_e + ext);

    if (b_hi >= e_lo) {
        // Overlapping regions: earlier half stays B, the midpoint frame and
        // the later half go to E.
        const int lo = e_lo;
        const int count = b_hi - lo + 1;
        const int mid = lo + count / 2;
        b_hi = mid - 1;
        e_lo = mid;
    }
    if (b_hi < b_lo) {
        // Single-frame span with no extension: the frame keeps its E label
        // and B is forced onto the frame to its left (or E shifts right when
        // the span sits on frame 0).
        if (e_lo > 0) {
            b_lo = b_hi = e_lo - 1;
        } else {
            b_lo = b_hi = 0;
            e_lo = 1;
            e_hi = std::max(e_hi, 1);
        }
    }

    RegionLabels out;
    out.labels.assign(n, kLabelO);
    for (int i = b_lo; i <= b_hi; ++i) out.labels[i] = kLabelB;
    for (int i = b_hi + 1; i < e_lo; ++i) out.labels[i] = kLabelI;
    for (int i = e_lo; i <= e_hi; ++i) out.labels[i] = kLabelE;
    return out;
}

std::vector<int> fb_labels(int i_s, int i_e, int n, double eta) {
    RegionLabels bieo = assign_bieo(i_s, i_e, n, eta);
    std::vector<int> out(n, 0);
    for (int i = 0; i < n; ++i)
        if (bieo.labels[i] != kLabelO) out[i] = 1;
    return out;
}

}  // namespace seqpan
