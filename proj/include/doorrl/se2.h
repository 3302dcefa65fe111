#ifndef DOORRL_SE2_H_
#define DOORRL_SE2_H_

#include <cmath>
#include <numbers>

namespace doorrl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double Dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double Cross(const Vec2& a, const Vec2& b) {
  return a.x * b.y - a.y * b.x;
}
inline double Norm(const Vec2& a) { return std::hypot(a.x, a.y); }
inline double SquaredNorm(const Vec2& a) { return a.x * a.x + a.y * a.y; }

inline Vec2 Rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline double WrapAngle(double a) {
  return std::remainder(a, 2.0 * std::numbers::pi);
}

inline double DegToRad(double deg) { return deg * std::numbers::pi / 180.0; }

// Planar rigid transform; yaw measured counter-clockwise from world +x.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Vec2 translation() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

// a * b: express b (given in a's frame) in a's parent frame.
inline Pose2 Compose(const Pose2& a, const Pose2& b) {
  const Vec2 t = Rotate({b.x, b.y}, a.yaw);
  return {a.x + t.x, a.y + t.y, WrapAngle(a.yaw + b.yaw)};
}

inline Pose2 Inverse(const Pose2& a) {
  const Vec2 t = Rotate({-a.x, -a.y}, -a.yaw);
  return {t.x, t.y, WrapAngle(-a.yaw)};
}

inline Vec2 TransformPoint(const Pose2& a, const Vec2& p) {
  return a.translation() + Rotate(p, a.yaw);
}

inline Vec2 InverseTransformPoint(const Pose2& a, const Vec2& p) {
  return Rotate(p - a.translation(), -a.yaw);
}

}  // namespace doorrl

#endif  // DOORRL_SE2_H_
