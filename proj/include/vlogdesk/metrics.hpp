#ifndef VLOGDESK_METRICS_HPP
#define VLOGDESK_METRICS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlogdesk/avatar.hpp"
#include "vlogdesk/outpaint.hpp"

namespace vlogdesk {

// Mean Euclidean distance over posed mouth landmark vertices, in mm.
double landmark_error_mm(const AvatarTemplate& tmpl, const std::vector<AvatarParams>& pred,
                         const std::vector<AvatarParams>& gt);

// Mean magnitude of the third-order temporal difference of a point
// trajectory, scaled by fps^3 and meters-to-mm. Annihilates any trajectory
// that is quadratic in time. traj[frame][point] in meters; needs >= 4 frames.
double jitter_mm_s3(const std::vector<std::vector<Vec3>>& traj, double fps);

// Posed positions of the given landmark vertices per frame.
std::vector<std::vector<Vec3>> landmark_trajectory(const AvatarTemplate& tmpl,
                                                   const std::vector<AvatarParams>& params,
                                                   const std::vector<int>& vertex_ids);

// Third-difference roughness of per-pixel color trajectories (the video
// analog of the jitter metric; colors play the role of mm).
double video_pixel_jitter(const VideoClip& clip);

// Std per expression coefficient pooled across samples and frames, plus the
// scalar mean over coefficients. Each sample is frames x expr_dims.
struct DiversityReport {
    std::vector<double> per_coefficient;
    double mean = 0;
};
DiversityReport expression_diversity(const std::vector<std::vector<double>>& samples,
                                     int expr_dims);

struct ImagePairMetrics {
    double psnr = 0;  // dB, peak 2.0 for [-1,1] data, capped at 99
    double l1 = 0;
};

// Full-image metrics over matching clips.
ImagePairMetrics image_metrics(const VideoClip& pred, const VideoClip& gt);
// Restricted to the pixels of one semantic class (masks per frame, h*w class
// ids). Classes with no pixels are absent from the result.
std::map<int, ImagePairMetrics> per_part_image_metrics(
    const VideoClip& pred, const VideoClip& gt, const std::vector<std::vector<uint8_t>>& semantic);

struct MetricReport {
    std::optional<double> lme_mm;
    std::optional<double> jitter_mm_s3;
    std::optional<double> pixel_jitter;
    std::optional<double> expression_std;
    std::optional<ImagePairMetrics> full_image;
    std::map<std::string, ImagePairMetrics> per_part;

    nlohmann::json to_json() const;
    std::string to_table() const;  // aligned-column text
};

const char* semantic_class_name(int cls);

}  // namespace vlogdesk

#endif
