#include "vlogdesk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

double landmark_error_mm(const AvatarTemplate& tmpl, const std::vector<AvatarParams>& pred,
                         const std::vector<AvatarParams>& gt) {
    if (pred.size() != gt.size())
        fail_data("landmark_error_mm: sequence lengths differ (" + std::to_string(pred.size()) +
                  " vs " + std::to_string(gt.size()) + ")");
    if (pred.empty()) fail_data("landmark_error_mm: empty sequences");
    const auto& ids = tmpl.landmarks.mouth;
    double total = 0;
    int64_t count = 0;
    for (size_t f = 0; f < pred.size(); ++f) {
        const auto a = pose_vertices(tmpl, pred[f], ids);
        const auto b = pose_vertices(tmpl, gt[f], ids);
        for (size_t i = 0; i < ids.size(); ++i) {
            total += (a[i] - b[i]).norm();
            ++count;
        }
    }
    return total / count * 1000.0;
}

double jitter_mm_s3(const std::vector<std::vector<Vec3>>& traj, double fps) {
    if (traj.size() < 4)
        fail_data("jitter: need at least 4 frames, got " + std::to_string(traj.size()));
    const size_t points = traj[0].size();
    const double scale = fps * fps * fps * 1000.0;
    double total = 0;
    int64_t count = 0;
    for (size_t f = 0; f + 3 < traj.size(); ++f) {
        for (size_t p = 0; p < points; ++p) {
            const Vec3 d = traj[f + 3][p] - traj[f + 2][p] * 3.0 + traj[f + 1][p] * 3.0 - traj[f][p];
            total += d.norm() * scale;
            ++count;
        }
    }
    return total / count;
}

std::vector<std::vector<Vec3>> landmark_trajectory(const AvatarTemplate& tmpl,
                                                   const std::vector<AvatarParams>& params,
                                                   const std::vector<int>& vertex_ids) {
    std::vector<std::vector<Vec3>> traj;
    traj.reserve(params.size());
    for (const auto& p : params) traj.push_back(pose_vertices(tmpl, p, vertex_ids));
    return traj;
}

double video_pixel_jitter(const VideoClip& clip) {
    if (clip.frames < 4) fail_data("video_pixel_jitter: need at least 4 frames");
    // Pixel colors as trajectories; fps^3 and the mm scale are carried the
    // same way as in the landmark metric so numbers are comparable across
    // clips of the same rate.
    const int hw = clip.h * clip.w;
    const double scale = clip.fps * clip.fps * clip.fps * 1000.0;
    const int64_t fsz = clip.frame_size();
    double total = 0;
    int64_t count = 0;
    for (int f = 0; f + 3 < clip.frames; ++f) {
        const double* p0 = clip.data.data() + static_cast<size_t>(f) * fsz;
        const double* p1 = p0 + fsz;
        const double* p2 = p1 + fsz;
        const double* p3 = p2 + fsz;
        for (int i = 0; i < hw; ++i) {
            double sq = 0;
            for (int c = 0; c < 3; ++c) {
                const int64_t k = static_cast<int64_t>(c) * hw + i;
                const double d = p3[k] - 3.0 * p2[k] + 3.0 * p1[k] - p0[k];
                sq += d * d;
            }
            total += std::sqrt(sq) * scale;
            ++count;
        }
    }
    return total / count;
}

DiversityReport expression_diversity(const std::vector<std::vector<double>>& samples,
                                     int expr_dims) {
    if (samples.empty()) fail_data("expression_diversity: empty sample set");
    DiversityReport rep;
    rep.per_coefficient.assign(expr_dims, 0.0);
    for (int e = 0; e < expr_dims; ++e) {
        double sum = 0, sum2 = 0;
        int64_t n = 0;
        for (const auto& s : samples) {
            if (s.size() % expr_dims != 0)
                fail_data("expression_diversity: sample size not a multiple of expr_dims");
            const int frames = static_cast<int>(s.size()) / expr_dims;
            for (int f = 0; f < frames; ++f) {
                const double v = s[static_cast<size_t>(f) * expr_dims + e];
                sum += v;
                sum2 += v * v;
                ++n;
            }
        }
        const double mean = sum / n;
        rep.per_coefficient[e] = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    }
    double m = 0;
    for (double v : rep.per_coefficient) m += v;
    rep.mean = m / expr_dims;
    return rep;
}

namespace {

ImagePairMetrics metrics_from_sums(double abs_sum, double sq_sum, int64_t count) {
    ImagePairMetrics m;
    m.l1 = abs_sum / count;
    const double mse = sq_sum / count;
    if (mse <= 0) {
        m.psnr = 99.0;  // identical inputs; report the cap
    } else {
        m.psnr = std::min(99.0, 10.0 * std::log10(4.0 / mse));  // peak 2 for [-1,1]
    }
    return m;
}

}  // namespace

ImagePairMetrics image_metrics(const VideoClip& pred, const VideoClip& gt) {
    if (pred.frames != gt.frames || pred.h != gt.h || pred.w != gt.w)
        fail_data("image_metrics: clip shapes differ");
    double abs_sum = 0, sq_sum = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    return metrics_from_sums(abs_sum, sq_sum, static_cast<int64_t>(pred.data.size()));
}

std::map<int, ImagePairMetrics> per_part_image_metrics(
    const VideoClip& pred, const VideoClip& gt, const std::vector<std::vector<uint8_t>>& semantic) {
    if (pred.frames != gt.frames || pred.h != gt.h || pred.w != gt.w)
        fail_data("per_part_image_metrics: clip shapes differ");
    if (semantic.size() != static_cast<size_t>(gt.frames))
        fail_data("per_part_image_metrics: one semantic mask per frame required");
    const int hw = pred.h * pred.w;
    const int64_t fsz = pred.frame_size();
    std::map<int, std::array<double, 2>> sums;  // class -> {abs, sq}
    std::map<int, int64_t> counts;
    for (int f = 0; f < pred.frames; ++f) {
        const auto& mask = semantic[f];
        for (int i = 0; i < hw; ++i) {
            const int cls = mask[i];
            if (cls == kClassBackground) continue;
            for (int c = 0; c < 3; ++c) {
                const size_t k = static_cast<size_t>(f) * fsz + static_cast<size_t>(c) * hw + i;
                const double d = pred.data[k] - gt.data[k];
                sums[cls][0] += std::abs(d);
                sums[cls][1] += d * d;
            }
            counts[cls] += 3;
        }
    }
    std::map<int, ImagePairMetrics> out;
    for (const auto& [cls, s] : sums) out[cls] = metrics_from_sums(s[0], s[1], counts[cls]);
    return out;
}

const char* semantic_class_name(int cls) {
    switch (cls) {
        case kClassBackground: return "background";
        case kClassFace: return "face";
        case kClassEyes: return "eyes";
        case kClassMouth: return "mouth";
        case kClassTorso: return "body";
        case kClassLeftArm: return "left_arm";
        case kClassRightArm: return "right_arm";
        case kClassHands: return "hands";
    }
    return "unknown";
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    if (lme_mm) j["lme_mm"] = *lme_mm;
    if (jitter_mm_s3) j["jitter_mm_s3"] = *jitter_mm_s3;
    if (pixel_jitter) j["pixel_jitter"] = *pixel_jitter;
    if (expression_std) j["expression_std"] = *expression_std;
    if (full_image) j["full_image"] = {{"psnr", full_image->psnr}, {"l1", full_image->l1}};
    for (const auto& [name, m] : per_part)
        j["per_part"][name] = {{"psnr", m.psnr}, {"l1", m.l1}};
    return j;
}

std::string MetricReport::to_table() const {
    char line[160];
    std::string out;
    auto row = [&](const char* name, double v, const char* unit) {
        std::snprintf(line, sizeof(line), "%-18s %12.4f %s\n", name, v, unit);
        out += line;
    };
    if (lme_mm) row("LME", *lme_mm, "mm");
    if (jitter_mm_s3) row("jitter", *jitter_mm_s3, "mm/s^3");
    if (pixel_jitter) row("pixel jitter", *pixel_jitter, "1/s^3");
    if (expression_std) row("expression std", *expression_std, "");
    if (full_image) {
        row("PSNR (full)", full_image->psnr, "dB");
        row("L1 (full)", full_image->l1, "");
    }
    for (const auto& [name, m] : per_part) {
        std::snprintf(line, sizeof(line), "%-18s %12.4f dB %10.4f L1\n", name.c_str(), m.psnr, m.l1);
        out += line;
    }
    return out;
}

}  // namespace vlogdesk
