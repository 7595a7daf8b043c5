#ifndef VLOGDESK_VIDEO_MODEL_HPP
#define VLOGDESK_VIDEO_MODEL_HPP

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlogdesk/optim.hpp"
#include "vlogdesk/render.hpp"
#include "vlogdesk/schedule.hpp"
#include "vlogdesk/tensor.hpp"

namespace vlogdesk {

// Which control channels feed the conditioning branch.
enum class ControlMode { Keypoints, Dense, DenseWarp };

std::string control_mode_name(ControlMode mode);
ControlMode control_mode_from_name(const std::string& name);

struct VideoModelConfig {
    int resolution = 32;
    int base_channels = 32;  // second block doubles this
    int temb_dim = 64;
    int groups = 8;
    int attn_heads = 2;
    int temporal_kernel = 3;
    int n_classes = kNumClasses;
    ControlMode mode = ControlMode::DenseWarp;

    int control_channels() const {
        switch (mode) {
            case ControlMode::Keypoints: return 3 + 3;
            case ControlMode::Dense: return 3 + n_classes + 3;
            case ControlMode::DenseWarp: return 3 + n_classes + 3 + 1 + 3;
        }
        return 0;
    }
    nlohmann::json to_json() const;
    static VideoModelConfig from_json(const nlohmann::json& j);
};

// Builds the per-frame conditioning tensor (N, CC, H, W): control channels
// per mode plus the broadcast reference image. Keypoints mode takes
// precomputed keypoint maps.
Tensor make_control_stack(const ControlClip& clip, ControlMode mode,
                          const std::vector<Image>* keypoint_maps = nullptr);

// Tiny epsilon-prediction UNet (stem + two downsampling blocks + attention
// bottleneck + mirrored decoder), a zero-initialized trainable copy of the
// encoder as the control branch, and identity-initialized 1d temporal
// convolutions inserted into every downsampling block.
class VideoModel {
public:
    VideoModel(VideoModelConfig cfg, uint64_t init_seed);

    const VideoModelConfig& config() const { return cfg_; }
    bool has_control() const { return has_control_; }
    bool has_temporal() const { return has_temporal_; }
    bool base_frozen() const { return base_frozen_; }

    // Copies the encoder weights into the control branch and adds the
    // zero-initialized projections; output is unchanged until training.
    void attach_control_branch(uint64_t init_seed);
    // Identity-initialized temporal convolutions in each downsampling block
    // (base and control branch); output-preserving at insertion.
    void insert_temporal_layers();
    void freeze_base();

    // x: (N,3,H,W); t: per-frame diffusion steps (size N); controls:
    // (N,CC,H,W) or nullptr. Frames interact only through temporal layers.
    Tensor forward(const Tensor& x, const std::vector<int>& t, const Tensor* controls) const;

    ParamSet& base_params() { return base_; }
    ParamSet& control_params() { return control_; }
    ParamSet& temporal_params() { return temporal_; }
    const ParamSet& base_params() const { return base_; }
    const ParamSet& control_params() const { return control_; }
    const ParamSet& temporal_params() const { return temporal_; }

    void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static VideoModel load(const std::string& path);

private:
    VideoModelConfig cfg_;
    ParamSet base_, control_, temporal_;
    bool has_control_ = false;
    bool has_temporal_ = false;
    bool base_frozen_ = false;

    const Tensor* find(const std::string& name) const;
    Tensor down_block(const std::string& prefix, const std::string& temporal_name, Tensor h,
                      const Tensor& temb) const;
};

// One training example: a clip (N,3,H,W) in [-1,1] and its control stack
// (N,CC,H,W); controls may be undefined for the unconditional base.
struct VideoClipItem {
    Tensor clip;
    Tensor controls;
};

// Mean epsilon-prediction error; one diffusion step per item (shared by the
// item's frames). Items without temporal layers are merged into a single
// batched forward.
Tensor video_training_loss(const VideoModel& model, const std::vector<VideoClipItem>& batch,
                           const DiffusionSchedule& sched, Rng& rng);

struct VideoTrainOptions {
    int steps = 400;
    int items_per_step = 4;
    double lr = 1e-4;
    uint64_t seed = 1;
};

struct VideoTrainLogEntry {
    int step;
    double loss;
};

// Generic seeded loop: draw items, compute the loss, update `trainable`.
std::vector<VideoTrainLogEntry> train_video(
    VideoModel& model, const std::function<VideoClipItem(Rng&)>& draw, ParamSet& trainable,
    const DiffusionSchedule& sched, const VideoTrainOptions& opts,
    const std::function<bool(int step, double loss)>& progress = {});

}  // namespace vlogdesk

#endif
