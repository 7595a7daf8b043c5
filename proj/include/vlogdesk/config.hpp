#ifndef VLOGDESK_CONFIG_HPP
#define VLOGDESK_CONFIG_HPP

#include <string>

#include "vlogdesk/motion_model.hpp"
#include "vlogdesk/video_model.hpp"

namespace vlogdesk {

// Sectioned key/value run configuration. Every key has a default; files
// override selectively; unknown sections or keys are usage errors. dump()
// lists the fully resolved configuration in canonical order and hash() is
// the FNV-1a of that listing, recorded in every artifact manifest.
struct RunConfig {
    struct Data {
        int train = 64;
        int test = 16;
        double duration = 2.0;
        double fps = 24.0;
        int resolution = 32;
        uint64_t seed = 1234;
    } data;

    struct Schedule {
        int steps = 1000;
        std::string kind = "cosine";
    } schedule;

    struct Motion {
        int width = 128;
        int heads = 4;
        int layers = 4;
        int mlp_mult = 4;
        int mel_bins = 80;
        double lambda_temp_expr = 0.1;
        double lambda_temp_pose = 1.0;
        double p_drop = 0.1;
        bool predict_residual = true;
        int max_frames = 256;
        int train_steps = 1500;
        int batch = 4;
        double lr = 1e-4;
        int min_clip = 16;
        int max_clip = 48;
        int sample_steps = 100;
        double guidance = 2.0;
    } motion;

    struct Video {
        int base_channels = 32;
        int temb_dim = 64;
        int groups = 8;
        int attn_heads = 2;
        int temporal_kernel = 3;
        std::string mode = "dense_warp";
        int base_steps = 1200;
        int base_batch = 8;
        double base_lr = 2e-4;
        int stage1_steps = 400;
        int stage1_batch = 6;
        int stage2_steps = 300;
        int stage2_clips = 2;
        double lr = 5e-5;
        int train_clip_len = 8;
        int gap_min = 24;
        int clip_len = 16;  // N per sampler call
        int overlap = 8;    // K conditioned frames
        int sample_steps = 50;
    } video;

    static RunConfig from_file(const std::string& path);
    // Applies "section.key = value" lines from a file onto *this.
    void apply_file(const std::string& path);

    std::string dump() const;
    uint64_t hash() const;

    DiffusionSchedule make_schedule() const;
    MotionModelConfig motion_config() const;
    VideoModelConfig video_config() const;
    MotionTrainOptions motion_train_options() const;
};

}  // namespace vlogdesk

#endif
