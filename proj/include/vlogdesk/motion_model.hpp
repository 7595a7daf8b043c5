#ifndef VLOGDESK_MOTION_MODEL_HPP
#define VLOGDESK_MOTION_MODEL_HPP

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlogdesk/audio.hpp"
#include "vlogdesk/avatar.hpp"
#include "vlogdesk/optim.hpp"
#include "vlogdesk/schedule.hpp"
#include "vlogdesk/tensor.hpp"

namespace vlogdesk {

// Per-frame motion state: E expression coefficients followed by J*3 body
// pose values (residuals by default, absolute in the ablation variant).
struct MotionSequence {
    int frames = 0;
    int expr_dims = 0;
    int pose_dims = 0;
    std::vector<double> data;  // frames x (expr_dims + pose_dims)

    int frame_dims() const { return expr_dims + pose_dims; }
    double at(int f, int d) const { return data[static_cast<size_t>(f) * frame_dims() + d]; }
};

struct MotionModelConfig {
    int expr_dims = kNumExpressions;
    int pose_dims = kNumJoints * 3;
    int width = 128;
    int heads = 4;
    int layers = 4;  // temporal multi-head attention blocks
    int mlp_mult = 4;
    int mel_bins = 80;
    int max_frames = 256;
    double lambda_temp_expr = 0.1;
    double lambda_temp_pose = 1.0;
    double p_drop = 0.1;  // conditioning dropout for classifier-free guidance
    bool predict_residual = true;

    int frame_dims() const { return expr_dims + pose_dims; }
    nlohmann::json to_json() const;
    static MotionModelConfig from_json(const nlohmann::json& j);
};

// One training track: aligned mel rows and motion frames plus the reference
// pose the residuals are taken against.
struct MotionTrack {
    int frames = 0;
    int mel_cols = 0;
    std::vector<double> mel;        // frames x mel_cols
    std::vector<double> expr;       // frames x expr_dims
    std::vector<double> pose_abs;   // frames x pose_dims (absolute axis-angle)
    std::vector<double> ref_pose;   // pose_dims
};

// Causal temporal transformer that denoises motion sequences conditioned on
// mel-spectrogram audio, predicting the clean sample directly.
class MotionModel {
public:
    MotionModel(MotionModelConfig cfg, uint64_t init_seed);

    const MotionModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // x_t: (N, D); mel: (N, mel_bins) or nullptr for the unconditional branch
    // (the learned null embedding). Returns the x0 prediction (N, D).
    Tensor forward(const Tensor& x_t, int t, const Tensor* mel) const;

    void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static MotionModel load(const std::string& path);

private:
    MotionModelConfig cfg_;
    ParamSet params_;
    const Tensor* find(const std::string& name) const;
};

// Diffusion loss over a batch of (x0, mel) windows with the temporal
// smoothness terms; conditioning is dropped per item with probability p_drop.
struct MotionBatchItem {
    Tensor x0;   // (N, D)
    Tensor mel;  // (N, mel_bins)
};
Tensor motion_training_loss(const MotionModel& model, const std::vector<MotionBatchItem>& batch,
                            const DiffusionSchedule& sched, Rng& rng);

// uncond + scale * (cond - uncond), applied to x0 predictions.
Tensor cfg_combine(const Tensor& cond_pred, const Tensor& uncond_pred, double scale);

struct MotionSampleOptions {
    int sample_steps = 100;
    double guidance = 2.0;
    uint64_t seed = 0;
    double noise_scale = 1.0;  // 0 disables the stochastic term entirely
};

struct MotionSampleResult {
    MotionSequence sequence;                // network-space output
    std::vector<AvatarParams> params;       // absolute pose applied to the reference
};

// Ancestral sampling in the x0 parameterization with classifier-free
// guidance; the reference params supply shape/translation and the pose the
// residuals are applied to.
MotionSampleResult sample_motion(const MotionModel& model, const MelSpectrogram& mel,
                                 const AvatarParams& reference, const DiffusionSchedule& sched,
                                 const MotionSampleOptions& opts);

struct MotionTrainOptions {
    int steps = 2000;
    int batch = 4;
    double lr = 1e-4;
    uint64_t seed = 1;
    int min_clip = 16;
    int max_clip = 48;
};

struct TrainLogEntry {
    int step;
    double loss;
};

// Seeded training loop over variable-length windows cut from the tracks.
// The callback may stop training early by returning false.
std::vector<TrainLogEntry> train_motion_model(
    MotionModel& model, const std::vector<MotionTrack>& tracks, const DiffusionSchedule& sched,
    const MotionTrainOptions& opts,
    const std::function<bool(int step, double loss)>& progress = {});

}  // namespace vlogdesk

#endif
