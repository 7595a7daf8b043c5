#ifndef VLOGDESK_RENDER_HPP
#define VLOGDESK_RENDER_HPP

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "vlogdesk/avatar.hpp"
#include "vlogdesk/camera.hpp"
#include "vlogdesk/image.hpp"

namespace vlogdesk {

// Per-pixel rasterization result. tri == -1 marks an empty pixel.
struct Fragment {
    int tri = -1;
    double b0 = 0, b1 = 0, b2 = 0;  // perspective-correct barycentrics
    double depth = std::numeric_limits<double>::infinity();
};

struct FragmentBuffer {
    int h = 0, w = 0;
    std::vector<Fragment> frags;

    const Fragment& at(int y, int x) const { return frags[static_cast<size_t>(y) * w + x]; }
    Fragment& at(int y, int x) { return frags[static_cast<size_t>(y) * w + x]; }
};

// Z-buffer rasterization with perspective-correct barycentrics. Nearest depth
// wins; exact depth ties go to the lower triangle id. Degenerate and
// behind-camera triangles are skipped.
FragmentBuffer rasterize(const std::vector<Vec3>& vertices,
                         const std::vector<std::array<int, 3>>& triangles, const Camera& cam);

struct ControlFrame {
    Image dense;                       // h x w x 3, rest-coordinates in [0,1]^3, 0 at background
    std::vector<uint8_t> semantic;     // h*w class ids (kClassBackground at empty pixels)
    Image warp;                        // h x w x 3
    std::vector<uint8_t> warp_valid;   // h*w
    int h = 0, w = 0;

    // One-hot view of a semantic pixel (background = all zeros).
    std::array<double, kNumClasses> one_hot(int y, int x) const;
};

// Dense channel: normalized rest-template coordinates interpolated across the
// covered pixels.
Image render_dense(const AvatarTemplate& tmpl, const std::vector<Vec3>& posed,
                   const FragmentBuffer& fb);
// Per-pixel class of the winning triangle (majority vertex label).
std::vector<uint8_t> render_semantic(const AvatarTemplate& tmpl, const FragmentBuffer& fb);

struct BakedColors {
    std::vector<Vec3> color;      // per vertex RGB in [0,1]
    std::vector<uint8_t> visible;
};

// Projects every vertex into the reference image, keeps the ones that win the
// z-buffer at their pixel, and samples the image bilinearly.
BakedColors bake_vertex_colors(const Image& reference, const AvatarTemplate& tmpl,
                               const AvatarParams& reference_params, const Camera& cam);

// Re-renders baked colors under a new pose. Only triangles whose three
// vertices are visible in the reference contribute valid pixels.
void render_warp(const BakedColors& baked, const AvatarTemplate& tmpl, const FragmentBuffer& fb,
                 Image* warp, std::vector<uint8_t>* warp_valid);

// Full control frame (dense + semantic + warp when baked colors are given).
ControlFrame render_controls(const AvatarTemplate& tmpl, const AvatarParams& params,
                             const Camera& cam, const BakedColors* baked = nullptr);

// Flat-shaded render with per-vertex colors over a solid background; the
// synthetic data generator uses this as the ground-truth video.
Image render_colored(const AvatarTemplate& tmpl, const std::vector<Vec3>& posed,
                     const std::vector<Vec3>& vertex_colors, const Camera& cam,
                     const Vec3& background);

// Landmark positions splatted as small disks (the keypoints-only ablation).
Image render_keypoint_map(const AvatarTemplate& tmpl, const AvatarParams& params,
                          const Camera& cam);

struct ControlClip {
    std::vector<ControlFrame> frames;
    Image reference_image;
    AvatarParams reference_params;
};

// PNG directory (8-bit quantized) plus a JSON manifest, or a lossless raw
// binary blob for training.
void save_control_clip_png(const std::string& dir, const ControlClip& clip);
void save_control_clip_raw(const std::string& path, const ControlClip& clip);
ControlClip load_control_clip_png(const std::string& dir);
ControlClip load_control_clip_raw(const std::string& path);

}  // namespace vlogdesk

#endif
