#include "vlogdesk/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vlogdesk/errors.hpp"
#include "vlogdesk/threading.hpp"

namespace vlogdesk {

namespace fs = std::filesystem;

namespace {

struct ScreenVertex {
    double u, v, z;
    bool valid;
};

double edge(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

std::vector<ScreenVertex> project_all(const std::vector<Vec3>& vertices, const Camera& cam) {
    std::vector<ScreenVertex> out(vertices.size());
    for (size_t i = 0; i < vertices.size(); ++i) {
        const Projected p = project_point(cam, vertices[i]);
        out[i] = {p.u, p.v, p.depth, p.valid};
    }
    return out;
}

int triangle_class(const AvatarTemplate& tmpl, int tri) {
    const auto& t = tmpl.triangles[tri];
    const int a = tmpl.semantic_label[t[0]];
    const int b = tmpl.semantic_label[t[1]];
    const int c = tmpl.semantic_label[t[2]];
    // Majority vertex label; ties go to the smallest class id.
    if (a == b || a == c) return a;
    if (b == c) return b;
    return std::min({a, b, c});
}

}  // namespace

FragmentBuffer rasterize(const std::vector<Vec3>& vertices,
                         const std::vector<std::array<int, 3>>& triangles, const Camera& cam) {
    FragmentBuffer fb;
    fb.h = cam.height;
    fb.w = cam.width;
    fb.frags.assign(static_cast<size_t>(fb.h) * fb.w, Fragment{});

    const auto sv = project_all(vertices, cam);

    // Rows are partitioned across workers; every triangle is visited by each
    // worker but only rows inside its slice are written.
    parallel_for(fb.h, [&](int64_t y0, int64_t y1) {
        for (size_t tri = 0; tri < triangles.size(); ++tri) {
            const auto& t = triangles[tri];
            const ScreenVertex& a = sv[t[0]];
            const ScreenVertex& b = sv[t[1]];
            const ScreenVertex& c = sv[t[2]];
            if (!a.valid || !b.valid || !c.valid) continue;
            const double area = edge(a.u, a.v, b.u, b.v, c.u, c.v);
            if (area == 0.0) continue;

            const int min_x = std::max(0, static_cast<int>(std::floor(std::min({a.u, b.u, c.u}) - 0.5)));
            const int max_x = std::min(fb.w - 1, static_cast<int>(std::ceil(std::max({a.u, b.u, c.u}) + 0.5)));
            const int min_y = std::max(static_cast<int>(y0),
                                       static_cast<int>(std::floor(std::min({a.v, b.v, c.v}) - 0.5)));
            const int max_y = std::min(static_cast<int>(y1) - 1,
                                       static_cast<int>(std::ceil(std::max({a.v, b.v, c.v}) + 0.5)));
            if (min_x > max_x || min_y > max_y) continue;

            for (int y = min_y; y <= max_y; ++y)
                for (int x = min_x; x <= max_x; ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    const double w0 = edge(b.u, b.v, c.u, c.v, px, py);
                    const double w1 = edge(c.u, c.v, a.u, a.v, px, py);
                    const double w2 = edge(a.u, a.v, b.u, b.v, px, py);
                    const bool all_nonneg = w0 >= 0 && w1 >= 0 && w2 >= 0;
                    const bool all_nonpos = w0 <= 0 && w1 <= 0 && w2 <= 0;
                    if (!all_nonneg && !all_nonpos) continue;
                    const double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
                    const double inv_z = l0 / a.z + l1 / b.z + l2 / c.z;
                    if (inv_z <= 0) continue;
                    const double depth = 1.0 / inv_z;
                    Fragment& f = fb.at(y, x);
                    if (depth < f.depth ||
                        (depth == f.depth && static_cast<int>(tri) < f.tri)) {
                        f.tri = static_cast<int>(tri);
                        f.depth = depth;
                        f.b0 = (l0 / a.z) * depth;
                        f.b1 = (l1 / b.z) * depth;
                        f.b2 = (l2 / c.z) * depth;
                    }
                }
        }
    });
    return fb;
}

std::array<double, kNumClasses> ControlFrame::one_hot(int y, int x) const {
    std::array<double, kNumClasses> v{};
    const uint8_t c = semantic[static_cast<size_t>(y) * w + x];
    if (c != kClassBackground) v[c] = 1.0;
    return v;
}

Image render_dense(const AvatarTemplate& tmpl, const std::vector<Vec3>& posed,
                   const FragmentBuffer& fb) {
    (void)posed;
    Image img(fb.h, fb.w, 3, 0.0);
    const Vec3 lo = tmpl.bbox_min;
    const Vec3 span{tmpl.bbox_max.x - lo.x, tmpl.bbox_max.y - lo.y, tmpl.bbox_max.z - lo.z};
    auto norm_coord = [&](int v) {
        const Vec3 r = tmpl.vertices[v];
        return Vec3{(r.x - lo.x) / span.x, (r.y - lo.y) / span.y, (r.z - lo.z) / span.z};
    };
    for (int y = 0; y < fb.h; ++y)
        for (int x = 0; x < fb.w; ++x) {
            const Fragment& f = fb.at(y, x);
            if (f.tri < 0) continue;
            const auto& t = tmpl.triangles[f.tri];
            const Vec3 c0 = norm_coord(t[0]), c1 = norm_coord(t[1]), c2 = norm_coord(t[2]);
            img.at(y, x, 0) = f.b0 * c0.x + f.b1 * c1.x + f.b2 * c2.x;
            img.at(y, x, 1) = f.b0 * c0.y + f.b1 * c1.y + f.b2 * c2.y;
            img.at(y, x, 2) = f.b0 * c0.z + f.b1 * c1.z + f.b2 * c2.z;
        }
    return img;
}

std::vector<uint8_t> render_semantic(const AvatarTemplate& tmpl, const FragmentBuffer& fb) {
    std::vector<uint8_t> out(static_cast<size_t>(fb.h) * fb.w, kClassBackground);
    std::vector<uint8_t> tri_class(tmpl.triangle_count());
    for (int t = 0; t < tmpl.triangle_count(); ++t)
        tri_class[t] = static_cast<uint8_t>(triangle_class(tmpl, t));
    for (size_t i = 0; i < out.size(); ++i)
        if (fb.frags[i].tri >= 0) out[i] = tri_class[fb.frags[i].tri];
    return out;
}

BakedColors bake_vertex_colors(const Image& reference, const AvatarTemplate& tmpl,
                               const AvatarParams& reference_params, const Camera& cam) {
    if (reference.h != cam.height || reference.w != cam.width)
        fail_data("bake_vertex_colors: reference image size does not match the camera");
    const auto posed = pose_mesh(tmpl, reference_params);
    const FragmentBuffer fb = rasterize(posed, tmpl.triangles, cam);

    BakedColors baked;
    baked.color.assign(tmpl.vertex_count(), Vec3{});
    baked.visible.assign(tmpl.vertex_count(), 0);
    for (int v = 0; v < tmpl.vertex_count(); ++v) {
        const Projected p = project_point(cam, posed[v]);
        if (!p.valid) continue;
        if (p.u < 0 || p.u >= cam.width || p.v < 0 || p.v >= cam.height) continue;
        // The vertex wins the z-buffer if its depth matches the surface depth
        // at one of the pixel centers within half a pixel of its projection.
        // Covered samples that are all strictly nearer mean occlusion; no
        // covered sample at all is a silhouette corner, which stays visible.
        const int sx = static_cast<int>(std::floor(p.u - 0.5));
        const int sy = static_cast<int>(std::floor(p.v - 0.5));
        bool any_win = false;
        bool any_sample = false;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                const int x = sx + dx, y = sy + dy;
                if (x < 0 || x >= cam.width || y < 0 || y >= cam.height) continue;
                const Fragment& f = fb.at(y, x);
                if (f.tri < 0) continue;
                any_sample = true;
                if (p.depth <= f.depth * 1.01 + 1e-9) any_win = true;
            }
        if (any_sample && !any_win) continue;
        // Bilinear sample at the projection point.
        const double fx = std::clamp(p.u - 0.5, 0.0, static_cast<double>(reference.w - 1));
        const double fy = std::clamp(p.v - 0.5, 0.0, static_cast<double>(reference.h - 1));
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const int x1 = std::min(x0 + 1, reference.w - 1), y1 = std::min(y0 + 1, reference.h - 1);
        const double ax = fx - x0, ay = fy - y0;
        Vec3 c{};
        for (int ch = 0; ch < 3; ++ch) {
            const double v00 = reference.at(y0, x0, ch), v01 = reference.at(y0, x1, ch);
            const double v10 = reference.at(y1, x0, ch), v11 = reference.at(y1, x1, ch);
            const double val = (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
            (ch == 0 ? c.x : ch == 1 ? c.y : c.z) = val;
        }
        baked.color[v] = c;
        baked.visible[v] = 1;
    }
    return baked;
}

void render_warp(const BakedColors& baked, const AvatarTemplate& tmpl, const FragmentBuffer& fb,
                 Image* warp, std::vector<uint8_t>* warp_valid) {
    *warp = Image(fb.h, fb.w, 3, 0.0);
    warp_valid->assign(static_cast<size_t>(fb.h) * fb.w, 0);
    std::vector<uint8_t> tri_ok(tmpl.triangle_count(), 0);
    for (int t = 0; t < tmpl.triangle_count(); ++t) {
        const auto& tr = tmpl.triangles[t];
        tri_ok[t] = baked.visible[tr[0]] && baked.visible[tr[1]] && baked.visible[tr[2]];
    }
    for (int y = 0; y < fb.h; ++y)
        for (int x = 0; x < fb.w; ++x) {
            const Fragment& f = fb.at(y, x);
            if (f.tri < 0 || !tri_ok[f.tri]) continue;
            const auto& tr = tmpl.triangles[f.tri];
            const Vec3 c = baked.color[tr[0]] * f.b0 + baked.color[tr[1]] * f.b1 +
                           baked.color[tr[2]] * f.b2;
            warp->at(y, x, 0) = std::clamp(c.x, 0.0, 1.0);
            warp->at(y, x, 1) = std::clamp(c.y, 0.0, 1.0);
            warp->at(y, x, 2) = std::clamp(c.z, 0.0, 1.0);
            (*warp_valid)[static_cast<size_t>(y) * fb.w + x] = 1;
        }
}

ControlFrame render_controls(const AvatarTemplate& tmpl, const AvatarParams& params,
                             const Camera& cam, const BakedColors* baked) {
    const auto posed = pose_mesh(tmpl, params);
    const FragmentBuffer fb = rasterize(posed, tmpl.triangles, cam);
    ControlFrame frame;
    frame.h = fb.h;
    frame.w = fb.w;
    frame.dense = render_dense(tmpl, posed, fb);
    frame.semantic = render_semantic(tmpl, fb);
    if (baked) {
        render_warp(*baked, tmpl, fb, &frame.warp, &frame.warp_valid);
    } else {
        frame.warp = Image(fb.h, fb.w, 3, 0.0);
        frame.warp_valid.assign(static_cast<size_t>(fb.h) * fb.w, 0);
    }
    return frame;
}

Image render_colored(const AvatarTemplate& tmpl, const std::vector<Vec3>& posed,
                     const std::vector<Vec3>& vertex_colors, const Camera& cam,
                     const Vec3& background) {
    const FragmentBuffer fb = rasterize(posed, tmpl.triangles, cam);
    Image img(fb.h, fb.w, 3);
    for (int y = 0; y < fb.h; ++y)
        for (int x = 0; x < fb.w; ++x) {
            const Fragment& f = fb.at(y, x);
            Vec3 c = background;
            if (f.tri >= 0) {
                const auto& tr = tmpl.triangles[f.tri];
                c = vertex_colors[tr[0]] * f.b0 + vertex_colors[tr[1]] * f.b1 +
                    vertex_colors[tr[2]] * f.b2;
            }
            img.at(y, x, 0) = std::clamp(c.x, 0.0, 1.0);
            img.at(y, x, 1) = std::clamp(c.y, 0.0, 1.0);
            img.at(y, x, 2) = std::clamp(c.z, 0.0, 1.0);
        }
    return img;
}

Image render_keypoint_map(const AvatarTemplate& tmpl, const AvatarParams& params,
                          const Camera& cam) {
    Image img(cam.height, cam.width, 3, 0.0);
    auto splat = [&](const std::vector<int>& ids, int channel) {
        const auto lm = project_landmarks(tmpl, params, cam, ids);
        for (const auto& l : lm) {
            if (!l.valid) continue;
            const int cx = static_cast<int>(std::floor(l.u));
            const int cy = static_cast<int>(std::floor(l.v));
            for (int y = cy - 2; y <= cy + 2; ++y)
                for (int x = cx - 2; x <= cx + 2; ++x) {
                    if (x < 0 || x >= img.w || y < 0 || y >= img.h) continue;
                    const double du = (x + 0.5) - l.u, dv = (y + 0.5) - l.v;
                    const double g = std::exp(-(du * du + dv * dv) / (2.0 * 0.8 * 0.8));
                    img.at(y, x, channel) = std::min(1.0, img.at(y, x, channel) + g);
                }
        }
    };
    splat(tmpl.landmarks.mouth, 0);
    splat(tmpl.landmarks.eyes, 0);
    splat(tmpl.landmarks.face_outline, 1);
    splat(tmpl.landmarks.hands, 2);
    return img;
}

// ---- serialization ------------------------------------------------------------

namespace {

std::string frame_name(const char* prefix, int i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.png", prefix, i);
    return buf;
}

Image semantic_to_image(const std::vector<uint8_t>& semantic, int h, int w) {
    Image img(h, w, 1);
    for (size_t i = 0; i < semantic.size(); ++i) img.px[i] = semantic[i] / 255.0;
    return img;
}

std::vector<uint8_t> image_to_semantic(const Image& img) {
    std::vector<uint8_t> out(img.px.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(img.px[i] * 255.0));
    return out;
}

}  // namespace

void save_control_clip_png(const std::string& dir, const ControlClip& clip) {
    fs::create_directories(dir);
    for (size_t i = 0; i < clip.frames.size(); ++i) {
        const auto& f = clip.frames[i];
        save_png(dir + "/" + frame_name("dense", static_cast<int>(i)), f.dense);
        save_png(dir + "/" + frame_name("semantic", static_cast<int>(i)),
                 semantic_to_image(f.semantic, f.h, f.w));
        save_png(dir + "/" + frame_name("warp", static_cast<int>(i)), f.warp);
        save_png(dir + "/" + frame_name("warpvalid", static_cast<int>(i)),
                 semantic_to_image(f.warp_valid, f.h, f.w));
    }
    save_png(dir + "/reference.png", clip.reference_image);
    nlohmann::json manifest;
    manifest["frames"] = clip.frames.size();
    manifest["height"] = clip.frames.empty() ? clip.reference_image.h : clip.frames[0].h;
    manifest["width"] = clip.frames.empty() ? clip.reference_image.w : clip.frames[0].w;
    manifest["reference_params"] =
        nlohmann::json::parse(params_sequence_to_json({clip.reference_params}));
    std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
    if (!mf) fail_data("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

ControlClip load_control_clip_png(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) fail_data("cannot open " + dir + "/manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
    if (manifest.is_discarded()) fail_data("invalid manifest in " + dir);
    ControlClip clip;
    const int n = manifest.at("frames").get<int>();
    for (int i = 0; i < n; ++i) {
        ControlFrame f;
        f.dense = load_png(dir + "/" + frame_name("dense", i));
        f.h = f.dense.h;
        f.w = f.dense.w;
        f.semantic = image_to_semantic(load_png(dir + "/" + frame_name("semantic", i)));
        f.warp = load_png(dir + "/" + frame_name("warp", i));
        f.warp_valid = image_to_semantic(load_png(dir + "/" + frame_name("warpvalid", i)));
        clip.frames.push_back(std::move(f));
    }
    clip.reference_image = load_png(dir + "/reference.png");
    clip.reference_params =
        params_sequence_from_json(manifest.at("reference_params").dump()).at(0);
    return clip;
}

void save_control_clip_raw(const std::string& path, const ControlClip& clip) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("cannot open " + path);
    f.write("VDCTRLCLP", 9);
    const uint32_t n = static_cast<uint32_t>(clip.frames.size());
    const uint32_t h = clip.frames.empty() ? clip.reference_image.h : clip.frames[0].h;
    const uint32_t w = clip.frames.empty() ? clip.reference_image.w : clip.frames[0].w;
    f.write(reinterpret_cast<const char*>(&n), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    for (const auto& fr : clip.frames) {
        f.write(reinterpret_cast<const char*>(fr.dense.px.data()),
                static_cast<std::streamsize>(fr.dense.px.size() * 8));
        f.write(reinterpret_cast<const char*>(fr.semantic.data()),
                static_cast<std::streamsize>(fr.semantic.size()));
        f.write(reinterpret_cast<const char*>(fr.warp.px.data()),
                static_cast<std::streamsize>(fr.warp.px.size() * 8));
        f.write(reinterpret_cast<const char*>(fr.warp_valid.data()),
                static_cast<std::streamsize>(fr.warp_valid.size()));
    }
    f.write(reinterpret_cast<const char*>(clip.reference_image.px.data()),
            static_cast<std::streamsize>(clip.reference_image.px.size() * 8));
    const std::string pj = params_sequence_to_json({clip.reference_params});
    const uint64_t len = pj.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(pj.data(), static_cast<std::streamsize>(len));
    if (!f) fail_data("write failed: " + path);
}

ControlClip load_control_clip_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open " + path);
    char magic[9];
    if (!f.read(magic, 9) || std::memcmp(magic, "VDCTRLCLP", 9) != 0)
        fail_data("bad control clip magic in " + path);
    uint32_t n, h, w;
    f.read(reinterpret_cast<char*>(&n), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    if (!f) fail_data("truncated control clip header in " + path);
    ControlClip clip;
    for (uint32_t i = 0; i < n; ++i) {
        ControlFrame fr;
        fr.h = static_cast<int>(h);
        fr.w = static_cast<int>(w);
        fr.dense = Image(h, w, 3);
        fr.warp = Image(h, w, 3);
        fr.semantic.resize(static_cast<size_t>(h) * w);
        fr.warp_valid.resize(static_cast<size_t>(h) * w);
        f.read(reinterpret_cast<char*>(fr.dense.px.data()),
               static_cast<std::streamsize>(fr.dense.px.size() * 8));
        f.read(reinterpret_cast<char*>(fr.semantic.data()),
               static_cast<std::streamsize>(fr.semantic.size()));
        f.read(reinterpret_cast<char*>(fr.warp.px.data()),
               static_cast<std::streamsize>(fr.warp.px.size() * 8));
        f.read(reinterpret_cast<char*>(fr.warp_valid.data()),
               static_cast<std::streamsize>(fr.warp_valid.size()));
        if (!f) fail_data("truncated control clip frame in " + path);
        clip.frames.push_back(std::move(fr));
    }
    clip.reference_image = Image(h, w, 3);
    f.read(reinterpret_cast<char*>(clip.reference_image.px.data()),
           static_cast<std::streamsize>(clip.reference_image.px.size() * 8));
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string pj(len, '\0');
    f.read(pj.data(), static_cast<std::streamsize>(len));
    if (!f) fail_data("truncated control clip trailer in " + path);
    clip.reference_params = params_sequence_from_json(pj).at(0);
    return clip;
}

}  // namespace vlogdesk
