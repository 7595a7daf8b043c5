#ifndef VLOGDESK_SYNTH_HPP
#define VLOGDESK_SYNTH_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "vlogdesk/audio.hpp"
#include "vlogdesk/avatar.hpp"
#include "vlogdesk/motion_model.hpp"
#include "vlogdesk/outpaint.hpp"
#include "vlogdesk/render.hpp"

namespace vlogdesk {

// Per-identity appearance and framing, a deterministic function of the seed.
struct SceneIdentity {
    std::vector<Vec3> vertex_colors;
    Vec3 background;
    double fov = 0;         // radians
    double camera_dist = 0;
    std::vector<double> shape;
    std::vector<Vec3> base_pose;  // reference body pose
};

SceneIdentity make_identity(const AvatarTemplate& tmpl, uint64_t identity_seed);

// One coupled (audio, motion, video) example with known ground truth: the
// jaw channel tracks the audio energy envelope, the head sways and one arm
// gestures along seeded smooth walks, blinks arrive at Poisson times.
struct SyntheticScene {
    uint64_t seed = 0;
    double fps = 24.0;
    double duration = 2.0;
    int resolution = 32;
    SceneIdentity identity;
    Camera camera;
    AudioClip audio;
    std::vector<AvatarParams> motion;   // absolute per-frame params
    AvatarParams reference_params;      // base pose, neutral expression
    std::vector<Image> frames;          // ground-truth render, [0,1]

    int frame_count() const { return static_cast<int>(motion.size()); }
    VideoClip video() const { return VideoClip::from_images(frames, fps); }
};

SyntheticScene make_scene(const AvatarTemplate& tmpl, uint64_t seed, double duration_s, double fps,
                          int resolution);

// scenes/<seed>/ with audio.wav, motion.json, frames/*.png, meta.json.
void save_scene(const std::string& dir, const SyntheticScene& scene);
SyntheticScene load_scene(const AvatarTemplate& tmpl, const std::string& dir);

struct DatasetManifest {
    std::vector<uint64_t> train_seeds;
    std::vector<uint64_t> test_seeds;
    double duration = 2.0;
    double fps = 24.0;
    int resolution = 32;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

// Writes scenes/<seed>/... under out_dir plus manifest.json. Train and test
// identity seeds are disjoint by construction.
DatasetManifest make_dataset(const AvatarTemplate& tmpl, const std::string& out_dir, int n_train,
                             int n_test, uint64_t seed, double duration_s, double fps,
                             int resolution);
DatasetManifest load_manifest(const std::string& data_dir);
std::string scene_dir(const std::string& data_dir, uint64_t seed);

// Training-side helpers.
MotionTrack scene_motion_track(const SyntheticScene& scene, int mel_bins);

}  // namespace vlogdesk

#endif
