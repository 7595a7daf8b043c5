#include "vlogdesk/camera.hpp"

namespace vlogdesk {

Mat3 rotation_from_axis_angle(const Vec3& aa) {
    const double angle = aa.norm();
    Mat3 r = Mat3::identity();
    if (angle < 1e-12) {
        // First-order term keeps tiny rotations smooth.
        r.m = {1, -aa.z, aa.y, aa.z, 1, -aa.x, -aa.y, aa.x, 1};
        return r;
    }
    const double c = std::cos(angle), s = std::sin(angle);
    const double t = 1.0 - c;
    const double x = aa.x / angle, y = aa.y / angle, z = aa.z / angle;
    r.m = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
           t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
           t * x * z - s * y, t * y * z + s * x, t * z * z + c};
    return r;
}

Camera Camera::look_at(int width, int height, double fov_diag, const Vec3& eye, const Vec3& target,
                       const Vec3& up) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fov_diag = fov_diag;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    // Camera convention: +z forward (into the scene), +x right, +y down in
    // pixel space; the world is y-up, so the vertical basis is flipped.
    Vec3 fwd = target - eye;
    const double fn = fwd.norm();
    fwd = fwd * (1.0 / fn);
    Vec3 right = fwd.cross(up);
    right = right * (1.0 / right.norm());
    Vec3 down = fwd.cross(right);
    down = down * (1.0 / down.norm());
    cam.rot.m = {right.x, right.y, right.z, down.x, down.y, down.z, fwd.x, fwd.y, fwd.z};
    const Vec3 re = cam.rot.apply(eye);
    cam.trans = re * -1.0;
    return cam;
}

}  // namespace vlogdesk
