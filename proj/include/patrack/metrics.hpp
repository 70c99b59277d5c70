#pragma once

#include <map>
#include <string>
#include <vector>

#include "patrack/image.hpp"

namespace patrack {

/// Axis-aligned box in corner form (x, y, w, h), frame pixel coordinates.
struct Box {
    double x = 0, y = 0, w = 0, h = 0;
    double cx() const { return x + w / 2; }
    double cy() const { return y + h / 2; }
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

/// Euclidean distance between box centers, pixels.
double center_error(const Box& a, const Box& b);

struct CurvePoint {
    double threshold = 0;
    double value = 0;
};

struct PrecisionResult {
    double pr = 0;                   // fraction of frames with center error <= threshold_px
    std::vector<CurvePoint> curve;   // thresholds 0..50 px, step 1
};

struct SuccessResult {
    double sr = 0;                   // mean of the 21-sample success curve
    std::vector<CurvePoint> curve;   // overlap thresholds 0, 0.05, ..., 1.0
};

struct NprResult {
    double npr = 0;                  // mean of the 101-sample curve
    std::vector<CurvePoint> curve;   // normalized thresholds 0, 0.005, ..., 0.5
};

struct PrReFResult {
    double precision = 0;
    double recall = 0;
    double f_score = 0;
    double best_threshold = 0;
    std::vector<CurvePoint> f_curve;  // F(theta) over the 101-point sweep
};

/// Fraction of frames with center error <= threshold (default 20 px).
double precision_rate(const std::vector<double>& center_errors_px, double threshold_px = 20.0);
PrecisionResult precision_curve(const std::vector<double>& center_errors_px, double threshold_px = 20.0);

/// success(tau) = fraction of frames with IoU >= tau (inclusive), sampled at
/// 21 thresholds; SR is the curve mean.
SuccessResult success_rate(const std::vector<double>& ious);

/// Center error normalized by ground-truth box extents, AUC over
/// tau in {0, 0.005, ..., 0.5}.
NprResult normalized_precision(const std::vector<Box>& pred, const std::vector<Box>& gt);

/// Long-term tracking precision/recall/F over a 101-point confidence sweep.
/// For threshold theta: Pr = mean IoU over frames with confidence >= theta
/// (IoU counts 0 on invisible frames where a box was reported); Re = mean IoU
/// over visible frames (0 where no box was reported). Reported values
/// maximize F over the sweep.
PrReFResult pr_re_f(const std::vector<Box>& pred, const std::vector<double>& confidence,
                    const std::vector<Box>& gt, const std::vector<int>& visible);

struct AttributeMetrics {
    double pr = 0;
    double sr = 0;
    int64_t frames = 0;
};

struct FrameOutcome {
    double iou = 0;
    double center_error_px = 0;
    std::vector<std::string> attributes;
};

/// Metrics over the frame subset carrying each attribute; attributes with
/// zero frames are omitted.
std::map<std::string, AttributeMetrics> attribute_breakdown(const std::vector<FrameOutcome>& frames);

/// Shannon entropy in bits of the 256-bin intensity histogram. Multi-channel
/// images are reduced to the luminance plane first.
double image_entropy(const ImageU8& img);

/// Target-background contrast: |mean luminance inside the box - mean
/// luminance outside|, on the [0,1] scale.
double region_contrast(const ImageU8& img, const Box& region);

}  // namespace patrack
