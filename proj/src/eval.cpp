#include "slim/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "slim/errors.hpp"

namespace slim {

double iou(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.left + a.width, b.left + b.width) -
                                  std::max(a.left, b.left));
    double iy = std::max(0.0, std::min(a.top + a.height, b.top + b.height) -
                                  std::max(a.top, b.top));
    double inter = ix * iy;
    double uni = a.width * a.height + b.width * b.height - inter;
    return uni > 0 ? inter / uni : 0.0;
}

const std::vector<std::string>& visdrone_class_names() {
    static const std::vector<std::string> names = {
        "pedestrian", "people", "bicycle", "car",   "van",
        "truck",      "tricycle", "awning-tricycle", "bus", "motor"};
    return names;
}

std::vector<GroundTruth> parse_visdrone(const std::string& text, const std::string& image_id) {
    std::vector<GroundTruth> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                fields.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw ParseError(image_id + " line " + std::to_string(line_no) +
                                 ": malformed annotation field '" + item + "'");
            }
        }
        if (fields.size() < 8)
            throw ParseError(image_id + " line " + std::to_string(line_no) +
                             ": expected 8 comma-separated fields, got " +
                             std::to_string(fields.size()));
        int category = static_cast<int>(fields[5]);
        if (category == 11) continue; // "others"
        GroundTruth gt;
        gt.image = image_id;
        gt.box = {fields[0], fields[1], fields[2], fields[3]};
        gt.category = category;
        gt.ignore = category == 0;
        out.push_back(gt);
    }
    return out;
}

std::vector<EvalDetection> nms(std::vector<EvalDetection> detections, double iou_threshold) {
    std::vector<size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return detections[a].score > detections[b].score;
    });

    std::vector<bool> suppressed(detections.size(), false);
    std::vector<EvalDetection> kept;
    for (size_t oi = 0; oi < order.size(); ++oi) {
        size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(detections[i]);
        for (size_t oj = oi + 1; oj < order.size(); ++oj) {
            size_t j = order[oj];
            if (suppressed[j] || detections[j].category != detections[i].category) continue;
            if (iou(detections[i].box, detections[j].box) > iou_threshold) suppressed[j] = true;
        }
    }
    return kept;
}

MatchOutcome greedy_match(const std::vector<EvalDetection>& detections,
                          const std::vector<GroundTruth>& truths, double iou_threshold) {
    MatchOutcome out;
    out.order.resize(detections.size());
    std::iota(out.order.begin(), out.order.end(), 0);
    std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
        return detections[a].score > detections[b].score;
    });

    for (const GroundTruth& gt : truths)
        if (!gt.ignore) ++out.total_gt;

    std::vector<bool> used(truths.size(), false);
    out.labels.reserve(detections.size());
    for (int idx : out.order) {
        const EvalDetection& det = detections[idx];
        int best = -1;
        double best_iou = 0;
        for (size_t g = 0; g < truths.size(); ++g) {
            const GroundTruth& gt = truths[g];
            if (gt.ignore || used[g] || gt.category != det.category || gt.image != det.image)
                continue;
            double v = iou(det.box, gt.box);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            used[best] = true;
            out.labels.push_back(1);
            continue;
        }
        // unmatched: excluded entirely when it lands on an ignored region
        bool on_ignored = false;
        for (const GroundTruth& gt : truths) {
            if (!gt.ignore || gt.image != det.image) continue;
            if (iou(det.box, gt.box) >= iou_threshold) {
                on_ignored = true;
                break;
            }
        }
        out.labels.push_back(on_ignored ? -1 : 0);
    }
    return out;
}

ApResult average_precision(const std::vector<EvalDetection>& detections,
                           const std::vector<GroundTruth>& truths, double iou_threshold) {
    ApResult result;
    MatchOutcome match = greedy_match(detections, truths, iou_threshold);
    result.gt_count = match.total_gt;
    if (match.total_gt == 0) return result; // AP undefined without ground truths
    result.defined = true;

    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (int label : match.labels) {
        if (label < 0) continue;
        label == 1 ? ++tp : ++fp;
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / match.total_gt);
    }

    // all-point interpolation: walk the monotone precision envelope
    double ap = 0, prev_recall = 0;
    for (size_t i = 0; i < precision.size(); ++i) {
        double envelope = precision[i];
        for (size_t j = i + 1; j < precision.size(); ++j)
            envelope = std::max(envelope, precision[j]);
        ap += (recall[i] - prev_recall) * envelope;
        prev_recall = recall[i];
    }
    result.ap = ap;
    return result;
}

EvalSummary evaluate(const std::vector<EvalDetection>& detections,
                     const std::vector<GroundTruth>& truths, double conf_threshold,
                     double nms_threshold, double iou_threshold) {
    if (truths.empty()) throw ArgumentError("evaluation needs at least one ground truth");

    std::vector<EvalDetection> filtered;
    for (const EvalDetection& d : detections)
        if (d.score >= conf_threshold) filtered.push_back(d);

    // per-image NMS, deterministic image order
    std::map<std::string, std::vector<EvalDetection>> by_image;
    for (const EvalDetection& d : filtered) by_image[d.image].push_back(d);
    std::vector<EvalDetection> survivors;
    for (auto& [image, dets] : by_image) {
        auto kept = nms(std::move(dets), nms_threshold);
        survivors.insert(survivors.end(), kept.begin(), kept.end());
    }

    std::set<int> categories;
    for (const GroundTruth& gt : truths)
        if (!gt.ignore) categories.insert(gt.category);

    EvalSummary summary;
    double map_sum = 0;
    int map_classes = 0;
    for (int category : categories) {
        std::vector<EvalDetection> class_dets;
        for (const EvalDetection& d : survivors)
            if (d.category == category) class_dets.push_back(d);
        std::vector<GroundTruth> class_gts;
        for (const GroundTruth& gt : truths)
            if (gt.category == category || gt.ignore) class_gts.push_back(gt);

        ApResult ap = average_precision(class_dets, class_gts, iou_threshold);
        MatchOutcome match = greedy_match(class_dets, class_gts, iou_threshold);
        int tp = 0, fp = 0;
        for (int label : match.labels) {
            if (label == 1) ++tp;
            if (label == 0) ++fp;
        }
        int fn = match.total_gt - tp;

        ClassSummary row;
        row.category = category;
        if (category >= 1 && category <= static_cast<int>(visdrone_class_names().size()))
            row.name = visdrone_class_names()[category - 1];
        else
            row.name = "class-" + std::to_string(category);
        row.instances = match.total_gt;
        row.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        row.recall = match.total_gt > 0 ? static_cast<double>(tp) / match.total_gt : 0.0;
        row.f1 = row.precision + row.recall > 0
                     ? 2 * row.precision * row.recall / (row.precision + row.recall)
                     : 0.0;
        row.ap = ap.ap;
        row.ap_defined = ap.defined;
        summary.classes.push_back(row);

        summary.true_positives += tp;
        summary.false_positives += fp;
        summary.false_negatives += fn;
        if (ap.defined) {
            map_sum += ap.ap;
            ++map_classes;
        }
    }

    summary.map = map_classes > 0 ? map_sum / map_classes : 0.0;
    int tp = summary.true_positives;
    summary.precision =
        tp + summary.false_positives > 0
            ? static_cast<double>(tp) / (tp + summary.false_positives)
            : 0.0;
    summary.recall = tp + summary.false_negatives > 0
                         ? static_cast<double>(tp) / (tp + summary.false_negatives)
                         : 0.0;
    summary.f1 = summary.precision + summary.recall > 0
                     ? 2 * summary.precision * summary.recall /
                           (summary.precision + summary.recall)
                     : 0.0;
    return summary;
}

std::string render_eval_table(const EvalSummary& s) {
    std::ostringstream out;
    out << std::left << std::setw(18) << "class" << std::right << std::setw(10) << "instances"
        << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1"
        << std::setw(9) << "ap" << "\n";
    out << std::fixed << std::setprecision(1);
    for (const ClassSummary& row : s.classes) {
        out << std::left << std::setw(18) << row.name << std::right << std::setw(10)
            << row.instances << std::setw(11) << 100 * row.precision << std::setw(9)
            << 100 * row.recall << std::setw(9) << 100 * row.f1;
        if (row.ap_defined)
            out << std::setw(9) << 100 * row.ap;
        else
            out << std::setw(9) << "n/a";
        out << "\n";
    }
    out << std::left << std::setw(18) << "overall" << std::right << std::setw(10)
        << (s.true_positives + s.false_negatives) << std::setw(11) << 100 * s.precision
        << std::setw(9) << 100 * s.recall << std::setw(9) << 100 * s.f1 << std::setw(9)
        << 100 * s.map << "\n";
    return out.str();
}

std::string render_eval_csv(const EvalSummary& s) {
    std::ostringstream out;
    out << "class,instances,precision,recall,f1,ap\n";
    out << std::fixed << std::setprecision(4);
    for (const ClassSummary& row : s.classes) {
        out << row.name << ',' << row.instances << ',' << 100 * row.precision << ','
            << 100 * row.recall << ',' << 100 * row.f1 << ',';
        if (row.ap_defined) out << 100 * row.ap;
        out << "\n";
    }
    out << "overall," << (s.true_positives + s.false_negatives) << ',' << 100 * s.precision << ','
        << 100 * s.recall << ',' << 100 * s.f1 << ',' << 100 * s.map << "\n";
    return out.str();
}

} // namespace slim
