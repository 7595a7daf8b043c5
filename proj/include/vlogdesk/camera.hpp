#ifndef VLOGDESK_CAMERA_HPP
#define VLOGDESK_CAMERA_HPP

#include <array>
#include <cmath>

namespace vlogdesk {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

struct Mat3 {
    // Row-major.
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 mul(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0;
                for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
                r.m[i * 3 + j] = acc;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
        return r;
    }
};

// Axis-angle (Rodrigues) rotation.
Mat3 rotation_from_axis_angle(const Vec3& aa);

// Full-perspective pinhole camera. The focal length is derived from the
// diagonal field of view: focal = diag_pixels / (2 tan(fov/2)).
struct Camera {
    int width = 32, height = 32;
    double fov_diag = 50.0 * 3.14159265358979323846 / 180.0;
    double cx = 16.0, cy = 16.0;
    Mat3 rot;    // world -> camera rotation
    Vec3 trans;  // world -> camera translation

    static Camera look_at(int width, int height, double fov_diag, const Vec3& eye,
                          const Vec3& target, const Vec3& up = {0, 1, 0});

    double focal() const {
        const double diag = std::sqrt(static_cast<double>(width) * width +
                                      static_cast<double>(height) * height);
        return diag / (2.0 * std::tan(fov_diag / 2.0));
    }

    Vec3 to_camera(const Vec3& p) const { return rot.apply(p) + trans; }
};

struct Projected {
    double u = 0, v = 0;   // pixel coordinates
    double depth = 0;      // camera-space z
    bool valid = false;    // in front of the camera
};

inline constexpr double kNearPlane = 1e-6;

// The one projection used everywhere (landmarks, rasterizer, baking).
inline Projected project_point(const Camera& cam, const Vec3& p_world) {
    const Vec3 pc = cam.to_camera(p_world);
    Projected out;
    out.depth = pc.z;
    if (pc.z <= kNearPlane) return out;
    const double f = cam.focal();
    out.u = f * pc.x / pc.z + cam.cx;
    out.v = f * pc.y / pc.z + cam.cy;
    out.valid = true;
    return out;
}

}  // namespace vlogdesk

#endif
