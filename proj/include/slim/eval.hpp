#pragma once

// Detection metrics: IoU, greedy class-wise NMS, per-class average precision
// with the all-point interpolated precision envelope, and ingestion of
// VisDrone-format annotation files.

#include <string>
#include <vector>

namespace slim {

// Axis-aligned box, corner form (left, top, width, height).
struct Box {
    double left = 0;
    double top = 0;
    double width = 0;
    double height = 0;
};

double iou(const Box& a, const Box& b);

struct GroundTruth {
    std::string image;
    Box box;
    int category = 0; // 1-based class id
    bool ignore = false;
};

struct EvalDetection {
    std::string image;
    int category = 0;
    double score = 0;
    Box box;
};

// VisDrone class ids 1..10.
const std::vector<std::string>& visdrone_class_names();

// Lines of "left,top,width,height,score,category,truncation,occlusion".
// Category 0 (ignored regions) sets the ignore flag; category 11 ("others")
// is dropped.
std::vector<GroundTruth> parse_visdrone(const std::string& text, const std::string& image_id);

// Greedy suppression: keep the best-scored box, drop same-class boxes whose
// IoU with it exceeds the threshold. Score ties break by input order.
std::vector<EvalDetection> nms(std::vector<EvalDetection> detections, double iou_threshold);

struct MatchOutcome {
    std::vector<int> labels; // per detection in score order: 1 TP, 0 FP, -1 ignored
    std::vector<int> order;  // indices of the score-sorted detections
    int total_gt = 0;        // non-ignored ground truths
};

// Detections visit in descending score order; each matches the unmatched
// non-ignored ground truth of its class with the highest IoU >= threshold.
// Detections overlapping only ignored regions count as neither TP nor FP.
MatchOutcome greedy_match(const std::vector<EvalDetection>& detections,
                          const std::vector<GroundTruth>& truths, double iou_threshold);

struct ApResult {
    double ap = 0;
    int gt_count = 0;
    bool defined = false; // false when the class has no ground truths
};

ApResult average_precision(const std::vector<EvalDetection>& detections,
                           const std::vector<GroundTruth>& truths, double iou_threshold = 0.5);

struct ClassSummary {
    int category = 0;
    std::string name;
    int instances = 0;
    double precision = 0; // fractions in [0,1]
    double recall = 0;
    double f1 = 0;
    double ap = 0;
    bool ap_defined = false;
};

struct EvalSummary {
    std::vector<ClassSummary> classes;
    double map = 0;      // mean over classes with ground truths
    double precision = 0; // micro-averaged at the confidence threshold
    double recall = 0;
    double f1 = 0;
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
};

EvalSummary evaluate(const std::vector<EvalDetection>& detections,
                     const std::vector<GroundTruth>& truths, double conf_threshold = 0.1,
                     double nms_threshold = 0.5, double iou_threshold = 0.5);

std::string render_eval_table(const EvalSummary& summary);
std::string render_eval_csv(const EvalSummary& summary);

} // namespace slim
