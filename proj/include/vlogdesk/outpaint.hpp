#ifndef VLOGDESK_OUTPAINT_HPP
#define VLOGDESK_OUTPAINT_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlogdesk/video_model.hpp"

namespace vlogdesk {

// Image sequence in [-1,1], frame-major (frames x 3 x h x w).
struct VideoClip {
    int frames = 0, h = 0, w = 0;
    double fps = 24.0;
    std::vector<double> data;

    int64_t frame_size() const { return static_cast<int64_t>(3) * h * w; }
    Image frame_image(int f) const;                       // [0,1] HWC view
    void set_frame(int f, const Image& img);              // from [0,1] HWC
    static VideoClip from_images(const std::vector<Image>& images, double fps);
    VideoClip slice_frames(int start, int count) const;
};

// PNG frame directory plus a JSON manifest (fps, resolution, frame count and
// any caller-provided entries).
void save_video_png_dir(const std::string& dir, const VideoClip& clip,
                        const nlohmann::json& manifest_extra = {});
VideoClip load_video_png_dir(const std::string& dir);

struct OutpaintPlan {
    int clip_len = 16;    // N frames per sampler call
    int overlap = 8;      // K frames conditioned from the previous clip
    int target_len = 16;  // L

    static OutpaintPlan make(int clip_len, int overlap, int target_len);
    int calls() const;
    // Frames that must exist in the driving motion: N + (calls-1)*(N-K).
    int frames_needed() const;
};

struct SampleOptions {
    int sample_steps = 50;
    uint64_t seed = 0;
    double noise_scale = 1.0;
};

// Ancestral DDPM sampling of one clip under the given controls (epsilon
// parameterization, x0 clamped to [-1,1] each step).
VideoClip sample_clip(const VideoModel& model, const Tensor& controls,
                      const DiffusionSchedule& sched, const SampleOptions& opts);

// Replacement-style temporal outpainting: at every denoising step the first
// prev_tail.frames slots are overwritten with the forward-diffused tail, and
// at the end with the tail itself, bit-exactly.
VideoClip outpaint_extend(const VideoModel& model, const VideoClip& prev_tail,
                          const Tensor& controls, const DiffusionSchedule& sched,
                          const SampleOptions& opts);

struct GenerateOptions {
    OutpaintPlan plan;
    int sample_steps = 50;
    uint64_t seed = 0;
};

// Full pipeline for one subject: renders the control windows from the motion
// sequence, bakes the reference colors once, and chains outpainted clips to
// the target length. Motion must cover plan.frames_needed() frames.
VideoClip generate_video(const VideoModel& model, const AvatarTemplate& tmpl,
                         const std::vector<AvatarParams>& motion, const Image& reference_image,
                         const AvatarParams& reference_params, const Camera& cam,
                         const DiffusionSchedule& sched, const GenerateOptions& opts);

// Per-frame inpainting mask: pixels where the original and edited renders
// disagree (coverage, class, or dense value), dilated by `dilate` pixels.
std::vector<std::vector<uint8_t>> edit_masks(const AvatarTemplate& tmpl,
                                             const std::vector<AvatarParams>& original,
                                             const std::vector<AvatarParams>& edited,
                                             const Camera& cam, int dilate = 2);

struct EditOptions {
    OutpaintPlan plan;
    int sample_steps = 50;
    uint64_t seed = 0;
    int dilate = 2;
};

// Mask-based video editing: unmasked pixels are held to the forward-diffused
// source at every step (and to the source exactly at the end); masked pixels
// are regenerated under the edited controls. An empty mask set returns the
// source unchanged.
VideoClip edit_video(const VideoModel& model, const AvatarTemplate& tmpl, const VideoClip& source,
                     const std::vector<AvatarParams>& original,
                     const std::vector<AvatarParams>& edited, const Camera& cam,
                     const DiffusionSchedule& sched, const EditOptions& opts);

// Expression override script: a JSON array of {"frames":[first,last],
// "set": {"<expression name>": value}} entries applied to a params sequence.
std::vector<AvatarParams> apply_edit_script(const AvatarTemplate& tmpl,
                                            const std::vector<AvatarParams>& params,
                                            const nlohmann::json& script);

}  // namespace vlogdesk

#endif
