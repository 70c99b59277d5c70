#include "patrack/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "patrack/errors.hpp"

namespace patrack {

double iou(const Box& a, const Box& b) {
    double ix = std::max(a.x, b.x);
    double iy = std::max(a.y, b.y);
    double ix2 = std::min(a.x + a.w, b.x + b.w);
    double iy2 = std::min(a.y + a.h, b.y + b.h);
    double iw = std::max(0.0, ix2 - ix);
    double ih = std::max(0.0, iy2 - iy);
    double inter = iw * ih;
    double uni = a.w * a.h + b.w * b.h - inter;
    if (uni <= 0) return 0.0;
    return inter / uni;
}

double center_error(const Box& a, const Box& b) {
    double dx = a.cx() - b.cx();
    double dy = a.cy() - b.cy();
    return std::sqrt(dx * dx + dy * dy);
}

double precision_rate(const std::vector<double>& center_errors_px, double threshold_px) {
    if (center_errors_px.empty()) throw ConfigError("precision_rate: empty input");
    int64_t hits = 0;
    for (double e : center_errors_px)
        if (e <= threshold_px) ++hits;
    return static_cast<double>(hits) / static_cast<double>(center_errors_px.size());
}

PrecisionResult precision_curve(const std::vector<double>& center_errors_px, double threshold_px) {
    PrecisionResult res;
    res.pr = precision_rate(center_errors_px, threshold_px);
    for (int t = 0; t <= 50; ++t) {
        double frac = 0;
        for (double e : center_errors_px)
            if (e <= t) frac += 1.0;
        res.curve.push_back({static_cast<double>(t), frac / static_cast<double>(center_errors_px.size())});
    }
    return res;
}

SuccessResult success_rate(const std::vector<double>& ious) {
    if (ious.empty()) throw ConfigError("success_rate: empty input");
    SuccessResult res;
    double acc = 0;
    for (int k = 0; k <= 20; ++k) {
        double tau = static_cast<double>(k) * 0.05;
        double frac = 0;
        for (double v : ious)
            if (v >= tau) frac += 1.0;
        frac /= static_cast<double>(ious.size());
        res.curve.push_back({tau, frac});
        acc += frac;
    }
    res.sr = acc / 21.0;
    return res;
}

NprResult normalized_precision(const std::vector<Box>& pred, const std::vector<Box>& gt) {
    if (pred.size() != gt.size()) throw ConfigError("normalized_precision: list length mismatch");
    if (pred.empty()) throw ConfigError("normalized_precision: empty input");
    std::vector<double> errors;
    errors.reserve(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        if (gt[i].w <= 0 || gt[i].h <= 0)
            throw ConfigError("normalized_precision: ground truth with zero extent at frame " + std::to_string(i));
        double ex = (pred[i].cx() - gt[i].cx()) / gt[i].w;
        double ey = (pred[i].cy() - gt[i].cy()) / gt[i].h;
        errors.push_back(std::sqrt(ex * ex + ey * ey));
    }
    NprResult res;
    double acc = 0;
    for (int k = 0; k <= 100; ++k) {
        double tau = static_cast<double>(k) * 0.005;
        double frac = 0;
        for (double e : errors)
            if (e <= tau) frac += 1.0;
        frac /= static_cast<double>(errors.size());
        res.curve.push_back({tau, frac});
        acc += frac;
    }
    res.npr = acc / 101.0;
    return res;
}

PrReFResult pr_re_f(const std::vector<Box>& pred, const std::vector<double>& confidence,
                    const std::vector<Box>& gt, const std::vector<int>& visible) {
    size_t n = pred.size();
    if (n == 0) throw ConfigError("pr_re_f: empty input");
    if (confidence.size() != n || gt.size() != n || visible.size() != n)
        throw ConfigError("pr_re_f: list length mismatch");

    // Per-frame overlap; counted 0 on invisible frames regardless of the box.
    std::vector<double> overlap(n, 0.0);
    size_t visible_count = 0;
    for (size_t i = 0; i < n; ++i) {
        if (visible[i]) {
            overlap[i] = iou(pred[i], gt[i]);
            ++visible_count;
        }
    }

    PrReFResult best;
    for (int k = 0; k <= 100; ++k) {
        double theta = static_cast<double>(k) * 0.01;
        double pr_sum = 0, re_sum = 0;
        size_t reported = 0;
        for (size_t i = 0; i < n; ++i) {
            if (confidence[i] >= theta) {
                pr_sum += overlap[i];
                ++reported;
                if (visible[i]) re_sum += overlap[i];
            }
        }
        double pr = reported > 0 ? pr_sum / static_cast<double>(reported) : 0.0;
        double re = visible_count > 0 ? re_sum / static_cast<double>(visible_count) : 0.0;
        double f = (pr + re) > 0 ? 2.0 * pr * re / (pr + re) : 0.0;
        best.f_curve.push_back({theta, f});
        if (f > best.f_score) {
            best.f_score = f;
            best.precision = pr;
            best.recall = re;
            best.best_threshold = theta;
        }
    }
    return best;
}

std::map<std::string, AttributeMetrics> attribute_breakdown(const std::vector<FrameOutcome>& frames) {
    std::map<std::string, std::vector<const FrameOutcome*>> buckets;
    for (const auto& f : frames)
        for (const auto& attr : f.attributes) buckets[attr].push_back(&f);

    std::map<std::string, AttributeMetrics> out;
    for (const auto& [attr, subset] : buckets) {
        std::vector<double> errs, ious;
        errs.reserve(subset.size());
        ious.reserve(subset.size());
        for (const auto* f : subset) {
            errs.push_back(f->center_error_px);
            ious.push_back(f->iou);
        }
        AttributeMetrics m;
        m.pr = precision_rate(errs);
        m.sr = success_rate(ious).sr;
        m.frames = static_cast<int64_t>(subset.size());
        out[attr] = m;
    }
    return out;
}

double image_entropy(const ImageU8& img) {
    std::vector<uint8_t> plane = luminance_plane(img);
    std::vector<int64_t> hist(256, 0);
    for (uint8_t v : plane) ++hist[v];
    double total = static_cast<double>(plane.size());
    double entropy = 0;
    for (int64_t count : hist) {
        if (count == 0) continue;
        double p = static_cast<double>(count) / total;
        entropy -= p * std::log2(p);
    }
    return entropy;
}

}  // namespace patrack
