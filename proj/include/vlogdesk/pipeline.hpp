#ifndef VLOGDESK_PIPELINE_HPP
#define VLOGDESK_PIPELINE_HPP

#include <string>
#include <vector>

#include "vlogdesk/config.hpp"
#include "vlogdesk/metrics.hpp"
#include "vlogdesk/synth.hpp"

namespace vlogdesk {

std::vector<SyntheticScene> load_scenes(const AvatarTemplate& tmpl, const std::string& data_dir,
                                        const std::vector<uint64_t>& seeds, int limit = -1);

std::vector<MotionTrack> make_motion_tracks(const std::vector<SyntheticScene>& scenes,
                                            int mel_bins);

// Training-example draws for the video stages. Reference frames are sampled
// at temporal distance >= gap_min from the target window.
VideoClipItem draw_base_frame(const std::vector<SyntheticScene>& scenes, Rng& rng);
VideoClipItem draw_control_frame(const AvatarTemplate& tmpl,
                                 const std::vector<SyntheticScene>& scenes, ControlMode mode,
                                 int gap_min, Rng& rng);
VideoClipItem draw_control_clip(const AvatarTemplate& tmpl,
                                const std::vector<SyntheticScene>& scenes, ControlMode mode,
                                int gap_min, int clip_len, Rng& rng);

// Unconditional base: train on single frames, then freeze.
VideoModel pretrain_base_model(const RunConfig& cfg, const std::vector<SyntheticScene>& scenes,
                               const DiffusionSchedule& sched,
                               const std::function<bool(int, double)>& progress = {});

enum class VideoTrainSchedule { TwoStage, Joint };

// Control-branch training on top of a frozen base. TwoStage learns the
// control layers on single frames first and adds the temporal layers on
// clips afterwards; Joint attaches everything at once and trains on clips
// for a sample-count-matched budget.
void train_video_pipeline(VideoModel& model, const RunConfig& cfg,
                          const std::vector<SyntheticScene>& scenes,
                          const DiffusionSchedule& sched, VideoTrainSchedule schedule_kind,
                          const std::function<bool(int, double)>& progress = {});

// Reenactment protocol: first frame as reference, ground-truth motion,
// generated video compared against the scene render.
struct ReenactResult {
    VideoClip generated;
    ImagePairMetrics full;
    std::map<int, ImagePairMetrics> per_part;
};
ReenactResult reenact_scene(const VideoModel& model, const AvatarTemplate& tmpl,
                            const SyntheticScene& scene, const DiffusionSchedule& sched,
                            const RunConfig& cfg, int length, uint64_t seed);

}  // namespace vlogdesk

#endif
