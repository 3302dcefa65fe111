#include "doorrl/door_gen.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace doorrl {
namespace {

constexpr uint64_t kSpecStream = 0xD00E5EEDULL;

void CheckRange(const char* name, double value, const double (&range)[2]) {
  if (!(value >= range[0] && value <= range[1])) {
    std::ostringstream msg;
    msg << "door spec field " << name << " = " << value << " outside ["
        << range[0] << ", " << range[1] << "]";
    throw std::invalid_argument(msg.str());
  }
}

// Shortest text that parses back to the same double.
std::string FormatDouble(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double ParseDouble(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto res =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw std::invalid_argument("door spec: bad number for " + key + ": " +
                                value);
  }
  return out;
}

}  // namespace

std::string_view CategoryName(DoorCategory category) {
  switch (category) {
    case DoorCategory::kPushLever:
      return "push_lever";
    case DoorCategory::kPullLever:
      return "pull_lever";
    case DoorCategory::kPushBar:
      return "push_bar";
  }
  return "unknown";
}

DoorCategory ParseCategory(std::string_view name) {
  if (name == "push_lever") return DoorCategory::kPushLever;
  if (name == "pull_lever") return DoorCategory::kPullLever;
  if (name == "push_bar") return DoorCategory::kPushBar;
  throw std::invalid_argument("unknown door category: " + std::string(name));
}

void ValidateDoorSpec(const DoorSpec& spec) {
  CheckRange("panel_width", spec.panel_width, DoorRanges::kPanelWidth);
  CheckRange("handle_to_edge", spec.handle_to_edge, DoorRanges::kHandleToEdge);
  CheckRange("mass", spec.mass, DoorRanges::kMass);
  CheckRange("hinge_max_force", spec.hinge_max_force,
             DoorRanges::kHingeMaxForce);
  CheckRange("hinge_damping", spec.hinge_damping, DoorRanges::kHingeDamping);
  CheckRange("hinge_stiffness", spec.hinge_stiffness,
             DoorRanges::kHingeStiffness);
  CheckRange("handle_max_force", spec.handle_max_force,
             DoorRanges::kHandleMaxForce);
  CheckRange("handle_damping", spec.handle_damping, DoorRanges::kHandleDamping);
  CheckRange("handle_stiffness", spec.handle_stiffness,
             DoorRanges::kHandleStiffness);
  const OpenDirection expected = spec.category == DoorCategory::kPullLever
                                     ? OpenDirection::kOut
                                     : OpenDirection::kIn;
  if (spec.open_direction != expected) {
    throw std::invalid_argument(
        "door spec: open direction inconsistent with category");
  }
  const double inertia =
      spec.mass * spec.panel_width * spec.panel_width / 3.0;
  if (std::abs(spec.inertia - inertia) > 1e-12 * inertia) {
    throw std::invalid_argument("door spec: inertia != m w^2 / 3");
  }
}

DoorSpec SampleDoorSpec(uint64_t seed, DoorCategory category) {
  Rng rng(seed, kSpecStream);
  DoorSpec spec;
  spec.category = category;
  spec.seed = seed;
  auto draw = [&rng](const double (&range)[2]) {
    return rng.Uniform(range[0], range[1]);
  };
  spec.panel_width = draw(DoorRanges::kPanelWidth);
  spec.handle_to_edge = draw(DoorRanges::kHandleToEdge);
  spec.mass = draw(DoorRanges::kMass);
  spec.hinge_max_force = draw(DoorRanges::kHingeMaxForce);
  spec.hinge_damping = draw(DoorRanges::kHingeDamping);
  spec.hinge_stiffness = draw(DoorRanges::kHingeStiffness);
  spec.handle_max_force = draw(DoorRanges::kHandleMaxForce);
  spec.handle_damping = draw(DoorRanges::kHandleDamping);
  spec.handle_stiffness = draw(DoorRanges::kHandleStiffness);
  spec.handedness = rng.Bernoulli(0.5) ? Handedness::kLeft : Handedness::kRight;
  spec.open_direction = category == DoorCategory::kPullLever
                            ? OpenDirection::kOut
                            : OpenDirection::kIn;
  spec.inertia = spec.mass * spec.panel_width * spec.panel_width / 3.0;
  return spec;
}

DoorSpec SampleDoorSpec(Rng& rng, DoorCategory category) {
  return SampleDoorSpec(rng.NextU64(), category);
}

std::string ExportDoorSpec(const DoorSpec& spec) {
  std::ostringstream out;
  out << "# door spec v1\n";
  out << "category=" << CategoryName(spec.category) << "\n";
  out << "seed=" << spec.seed << "\n";
  out << "handedness="
      << (spec.handedness == Handedness::kLeft ? "left" : "right") << "\n";
  out << "open_direction="
      << (spec.open_direction == OpenDirection::kIn ? "in" : "out") << "\n";
  out << "panel_width=" << FormatDouble(spec.panel_width) << "\n";
  out << "handle_to_edge=" << FormatDouble(spec.handle_to_edge) << "\n";
  out << "mass=" << FormatDouble(spec.mass) << "\n";
  out << "hinge_max_force=" << FormatDouble(spec.hinge_max_force) << "\n";
  out << "hinge_damping=" << FormatDouble(spec.hinge_damping) << "\n";
  out << "hinge_stiffness=" << FormatDouble(spec.hinge_stiffness) << "\n";
  out << "handle_max_force=" << FormatDouble(spec.handle_max_force) << "\n";
  out << "handle_damping=" << FormatDouble(spec.handle_damping) << "\n";
  out << "handle_stiffness=" << FormatDouble(spec.handle_stiffness) << "\n";
  return out.str();
}

DoorSpec ImportDoorSpec(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("door spec: malformed line: " + line);
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw std::invalid_argument("door spec: missing key " + key);
    }
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  DoorSpec spec;
  spec.category = ParseCategory(take("category"));
  {
    const std::string s = take("seed");
    const auto res = std::from_chars(s.data(), s.data() + s.size(), spec.seed);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw std::invalid_argument("door spec: bad seed " + s);
    }
  }
  const std::string hand = take("handedness");
  if (hand != "left" && hand != "right") {
    throw std::invalid_argument("door spec: bad handedness " + hand);
  }
  spec.handedness = hand == "left" ? Handedness::kLeft : Handedness::kRight;
  const std::string dir = take("open_direction");
  if (dir != "in" && dir != "out") {
    throw std::invalid_argument("door spec: bad open_direction " + dir);
  }
  spec.open_direction = dir == "in" ? OpenDirection::kIn : OpenDirection::kOut;
  spec.panel_width = ParseDouble("panel_width", take("panel_width"));
  spec.handle_to_edge = ParseDouble("handle_to_edge", take("handle_to_edge"));
  spec.mass = ParseDouble("mass", take("mass"));
  spec.hinge_max_force = ParseDouble("hinge_max_force", take("hinge_max_force"));
  spec.hinge_damping = ParseDouble("hinge_damping", take("hinge_damping"));
  spec.hinge_stiffness = ParseDouble("hinge_stiffness", take("hinge_stiffness"));
  spec.handle_max_force =
      ParseDouble("handle_max_force", take("handle_max_force"));
  spec.handle_damping = ParseDouble("handle_damping", take("handle_damping"));
  spec.handle_stiffness =
      ParseDouble("handle_stiffness", take("handle_stiffness"));
  if (!kv.empty()) {
    throw std::invalid_argument("door spec: unknown key " + kv.begin()->first);
  }
  spec.inertia = spec.mass * spec.panel_width * spec.panel_width / 3.0;
  ValidateDoorSpec(spec);
  return spec;
}

Vec2 HingePosition(const DoorSpec& spec) {
  const double half = 0.5 * spec.panel_width;
  return spec.handedness == Handedness::kLeft ? Vec2{-half, 0.0}
                                              : Vec2{half, 0.0};
}

double OpeningSign(const DoorSpec& spec) {
  const bool left = spec.handedness == Handedness::kLeft;
  const bool in = spec.open_direction == OpenDirection::kIn;
  return left == in ? 1.0 : -1.0;
}

Vec2 PanelDirection(const DoorSpec& spec, double hinge_angle) {
  const Vec2 closed = spec.handedness == Handedness::kLeft ? Vec2{1.0, 0.0}
                                                           : Vec2{-1.0, 0.0};
  return Rotate(closed, OpeningSign(spec) * hinge_angle);
}

Vec2 ApproachNormal(const DoorSpec& spec, double hinge_angle) {
  return Rotate({0.0, -1.0}, OpeningSign(spec) * hinge_angle);
}

Vec2 OpeningTangent(const DoorSpec& spec, double hinge_angle) {
  const Vec2 d = PanelDirection(spec, hinge_angle);
  const double s = OpeningSign(spec);
  return Vec2{-d.y, d.x} * s;
}

double GripRadius(const DoorSpec& spec) {
  return spec.panel_width - spec.handle_to_edge;
}

Vec2 GripPoint(const DoorSpec& spec, double hinge_angle) {
  return HingePosition(spec) +
         PanelDirection(spec, hinge_angle) * GripRadius(spec);
}

Vec2 FreeEdge(const DoorSpec& spec, double hinge_angle) {
  return HingePosition(spec) +
         PanelDirection(spec, hinge_angle) * spec.panel_width;
}

}  // namespace doorrl
