#pragma once
#include <algorithm>
#include <cmath>
#include <vector>

#include "exosim/finger.hpp"
#include "exosim/image.hpp"
#include "exosim/rod.hpp"

// Deterministic orthographic rasterization of the sagittal plane. Bodies are
// polygonized once (suit: swept tube outline; finger: tapered capsules) and
// filled with a nonzero-winding scanline pass, sampling at pixel centers,
// no anti-aliasing. The finger is drawn first and the suit overdraws it.

namespace exosim {

struct RenderOptions {
    double x_min = -0.02, x_max = 0.13; // m
    double z_min = -0.09, z_max = 0.06; // m
    int size = 128;
    int rod_samples = 128;  // outline resolution along the rod
    int cap_segments = 16;  // arc resolution of capsule caps
    double rod_level = 0.8;
    double finger_level = 0.5;

    double pitch() const { return (x_max - x_min) / size; }
};

using Poly2 = std::vector<Eigen::Vector2d>; // (x, z), closed implicitly

// outline of the swept region centerline +/- S(X) along the local normal
inline Poly2 rod_polygon(const RodModel& m, const VectorXd& q, const RenderOptions& opts) {
    std::vector<double> Xs(size_t(opts.rod_samples) + 1);
    for (int i = 0; i <= opts.rod_samples; ++i)
        Xs[size_t(i)] = m.length * double(i) / double(opts.rod_samples);
    const auto frames = forward_kinematics(m, q, Xs);
    Poly2 poly;
    poly.reserve(2 * frames.size());
    for (size_t i = 0; i < frames.size(); ++i) {
        const Vec3 n = frames[i].R.col(2); // local z stays in-plane
        const Vec3 p = frames[i].r + m.radius_at(Xs[i]) * n;
        poly.emplace_back(p.x(), p.z());
    }
    for (size_t i = frames.size(); i-- > 0;) {
        const Vec3 n = frames[i].R.col(2);
        const Vec3 p = frames[i].r - m.radius_at(Xs[i]) * n;
        poly.emplace_back(p.x(), p.z());
    }
    return poly;
}

// tapered capsule per link: straight sides plus semicircular caps
inline std::vector<Poly2> finger_polygons(const FingerModel& m, const Vec3& theta,
                                          const RenderOptions& opts) {
    const FingerPose pose = finger_fk(m, theta);
    std::vector<Poly2> polys;
    for (int link = 0; link < 4; ++link) {
        const Transform& g = pose.link_pose[size_t(link)];
        const Eigen::Vector2d a(g.R.col(0).x(), g.R.col(0).z()); // axis
        const Eigen::Vector2d n(-a.y(), a.x());                  // in-plane normal
        const Eigen::Vector2d base(g.r.x(), g.r.z());
        const Eigen::Vector2d tip = base + m.link_length[size_t(link)] * a;
        const double rb = m.radius_base[size_t(link)];
        const double rt = m.radius_tip[size_t(link)];
        Poly2 poly;
        poly.push_back(base + rb * n);
        poly.push_back(tip + rt * n);
        for (int s = 1; s < opts.cap_segments; ++s) {
            const double ang = M_PI * double(s) / double(opts.cap_segments);
            poly.push_back(tip + rt * (std::cos(ang) * n + std::sin(ang) * a));
        }
        poly.push_back(tip - rt * n);
        poly.push_back(base - rb * n);
        for (int s = 1; s < opts.cap_segments; ++s) {
            const double ang = M_PI * double(s) / double(opts.cap_segments);
            poly.push_back(base - rb * (std::cos(ang) * n + std::sin(ang) * a));
        }
        polys.push_back(std::move(poly));
    }
    return polys;
}

// nonzero-winding scanline fill at pixel centers
inline void fill_polygon(Image& img, const Poly2& poly, double level,
                         const RenderOptions& opts) {
    if (poly.size() < 3) return;
    const double pitch = opts.pitch();
    struct Crossing {
        double x;
        int dir;
    };
    std::vector<Crossing> xs;
    for (int row = 0; row < img.height; ++row) {
        const double z = opts.z_max - (row + 0.5) * pitch;
        xs.clear();
        for (size_t i = 0; i < poly.size(); ++i) {
            const auto& p = poly[i];
            const auto& r = poly[(i + 1) % poly.size()];
            if ((p.y() <= z && r.y() > z) || (r.y() <= z && p.y() > z)) {
                const double t = (z - p.y()) / (r.y() - p.y());
                xs.push_back({p.x() + t * (r.x() - p.x()), r.y() > p.y() ? 1 : -1});
            }
        }
        std::sort(xs.begin(), xs.end(), [](const Crossing& a, const Crossing& b) {
            return a.x < b.x;
        });
        int winding = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            winding += xs[i].dir;
            if (winding != 0 && i + 1 < xs.size()) {
                const double xa = xs[i].x, xb = xs[i + 1].x;
                int c0 = int(std::ceil((xa - opts.x_min) / pitch - 0.5));
                int c1 = int(std::ceil((xb - opts.x_min) / pitch - 0.5)) - 1;
                c0 = std::max(c0, 0);
                c1 = std::min(c1, img.width - 1);
                for (int c = c0; c <= c1; ++c) img.at(row, c) = level;
            }
        }
    }
}

// winding-number point test, used by tests as the independent fill oracle
inline bool point_in_polygon(const Poly2& poly, double x, double z) {
    int winding = 0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const auto& p = poly[i];
        const auto& r = poly[(i + 1) % poly.size()];
        if ((p.y() <= z && r.y() > z) || (r.y() <= z && p.y() > z)) {
            const double t = (z - p.y()) / (r.y() - p.y());
            const double xi = p.x() + t * (r.x() - p.x());
            if (xi > x) winding += (r.y() > p.y()) ? 1 : -1;
        }
    }
    return winding != 0;
}

struct Scene {
    std::vector<Poly2> finger;
    Poly2 rod;
    bool has_rod = false;
};

inline Scene build_scene(const RodModel* rod, const VectorXd* q, const FingerModel* finger,
                         const Vec3* theta, const RenderOptions& opts) {
    Scene s;
    if (finger && theta) s.finger = finger_polygons(*finger, *theta, opts);
    if (rod && q) {
        s.rod = rod_polygon(*rod, *q, opts);
        s.has_rod = true;
    }
    return s;
}

inline Image render(const Scene& scene, const RenderOptions& opts = {}) {
    Image img(opts.size, opts.size);
    for (const auto& poly : scene.finger) fill_polygon(img, poly, opts.finger_level, opts);
    if (scene.has_rod) fill_polygon(img, scene.rod, opts.rod_level, opts);
    return img;
}

inline Image render_scene(const RodModel& rod, const VectorXd& q, const FingerModel& finger,
                          const Vec3& theta, const RenderOptions& opts = {}) {
    return render(build_scene(&rod, &q, &finger, &theta, opts), opts);
}

} // namespace exosim
