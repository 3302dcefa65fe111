#include <bit>
#include <cstring>
#include <stdexcept>
#include <string>

#include "doorrl/env.h"

namespace doorrl {
namespace {

constexpr char kMagic[4] = {'D', 'R', 'S', '1'};
// Magic and version; the door spec block follows.
constexpr size_t kHeaderSize = 8;

uint64_t Fnv1a(const uint8_t* data, size_t n) {
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  void U8(uint8_t v) { bytes_.push_back(v); }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) U8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) U8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void I64(int64_t v) { U64(static_cast<uint64_t>(v)); }
  void F64(double v) { U64(std::bit_cast<uint64_t>(v)); }
  void Raw(const char* p, size_t n) {
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<uint8_t>& bytes, size_t end)
      : bytes_(bytes), end_(end) {}
  uint8_t U8() {
    Need(1);
    return bytes_[pos_++];
  }
  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  uint64_t U64() {
    Need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  int64_t I64() { return static_cast<int64_t>(U64()); }
  double F64() { return std::bit_cast<double>(U64()); }
  bool Bool() {
    const uint8_t v = U8();
    if (v > 1) throw std::runtime_error("snapshot: bad bool");
    return v == 1;
  }
  size_t pos() const { return pos_; }
  void Seek(size_t pos) { pos_ = pos; }

 private:
  void Need(size_t n) {
    if (pos_ + n > end_) throw std::runtime_error("snapshot: truncated");
  }
  const std::vector<uint8_t>& bytes_;
  size_t end_;
  size_t pos_ = 0;
};

void WriteSpec(Writer& w, const DoorSpec& s) {
  w.U8(static_cast<uint8_t>(s.category));
  w.U8(static_cast<uint8_t>(s.handedness));
  w.U8(static_cast<uint8_t>(s.open_direction));
  w.U64(s.seed);
  w.F64(s.panel_width);
  w.F64(s.handle_to_edge);
  w.F64(s.mass);
  w.F64(s.hinge_max_force);
  w.F64(s.hinge_damping);
  w.F64(s.hinge_stiffness);
  w.F64(s.handle_max_force);
  w.F64(s.handle_damping);
  w.F64(s.handle_stiffness);
  w.F64(s.inertia);
}

template <typename E>
E ReadEnum(Reader& r, int count, const char* what) {
  const uint8_t v = r.U8();
  if (v >= count) {
    throw std::runtime_error(std::string("snapshot: bad ") + what);
  }
  return static_cast<E>(v);
}

DoorSpec ReadSpec(Reader& r) {
  DoorSpec s;
  s.category = ReadEnum<DoorCategory>(r, 3, "category");
  s.handedness = ReadEnum<Handedness>(r, 2, "handedness");
  s.open_direction = ReadEnum<OpenDirection>(r, 2, "open direction");
  s.seed = r.U64();
  s.panel_width = r.F64();
  s.handle_to_edge = r.F64();
  s.mass = r.F64();
  s.hinge_max_force = r.F64();
  s.hinge_damping = r.F64();
  s.hinge_stiffness = r.F64();
  s.handle_max_force = r.F64();
  s.handle_damping = r.F64();
  s.handle_stiffness = r.F64();
  s.inertia = r.F64();
  return s;
}

constexpr size_t kSpecSize = 3 + 8 + 10 * 8;

}  // namespace

Snapshot TakeSnapshot(const WorldState& world, const DoorSpec& spec) {
  Writer w;
  w.Raw(kMagic, 4);
  w.U32(kSnapshotVersion);
  WriteSpec(w, spec);

  w.U32(static_cast<uint32_t>(world.stage));
  w.I64(world.step_count);
  w.F64(world.episode_time);
  w.U64(world.rng.key());
  w.U64(world.rng.counter());
  w.U8(static_cast<uint8_t>(world.door_id.category));
  w.U64(world.door_id.seed);

  const RobotState& r = world.robot;
  w.F64(r.base_pose.x);
  w.F64(r.base_pose.y);
  w.F64(r.base_pose.yaw);
  w.F64(r.base_velocity.vx);
  w.F64(r.base_velocity.vy);
  w.F64(r.base_velocity.wz);
  w.F64(r.ee_offset.x);
  w.F64(r.ee_offset.y);
  w.F64(r.ee_velocity.x);
  w.F64(r.ee_velocity.y);
  w.F64(r.gripper_aperture);
  w.U8(r.attached ? 1 : 0);

  const DoorState& d = world.door;
  w.F64(d.hinge_angle);
  w.F64(d.hinge_rate);
  w.F64(d.handle_angle);
  w.F64(d.handle_rate);
  w.U8(d.latched ? 1 : 0);

  for (double a : world.last_action.ToArray()) w.F64(a);
  w.F64(world.grasp_force.x);
  w.F64(world.grasp_force.y);
  w.F64(world.handle_torque);
  w.F64(world.hinge_torque);
  w.F64(world.contact_force);
  w.U8(world.termination.terminated ? 1 : 0);
  w.U8(static_cast<uint8_t>(world.termination.reason));

  std::vector<uint8_t>& bytes = w.bytes();
  w.U64(Fnv1a(bytes.data(), bytes.size()));
  return {std::move(bytes)};
}

RestoredWorld RestoreSnapshot(const Snapshot& snapshot) {
  const std::vector<uint8_t>& b = snapshot.bytes;
  if (b.size() < kHeaderSize + 8 || std::memcmp(b.data(), kMagic, 4) != 0) {
    throw std::runtime_error("snapshot: bad magic");
  }
  Reader header(b, b.size());
  header.Seek(4);
  const uint32_t version = header.U32();
  if (version != kSnapshotVersion) {
    throw std::runtime_error("snapshot: unsupported version " +
                             std::to_string(version));
  }
  const size_t body_end = b.size() - 8;
  Reader tail(b, b.size());
  tail.Seek(body_end);
  if (tail.U64() != Fnv1a(b.data(), body_end)) {
    throw std::runtime_error("snapshot: checksum mismatch");
  }

  Reader r(b, body_end);
  r.Seek(kHeaderSize);
  RestoredWorld out;
  out.spec = ReadSpec(r);
  WorldState& world = out.world;
  world.stage = static_cast<int>(r.U32());
  if (world.stage < 0 || world.stage >= kNumStages) {
    throw std::runtime_error("snapshot: bad stage");
  }
  world.step_count = r.I64();
  world.episode_time = r.F64();
  const uint64_t key = r.U64();
  const uint64_t counter = r.U64();
  world.rng = Rng::FromState(key, counter);
  world.door_id.category = ReadEnum<DoorCategory>(r, 3, "door id");
  world.door_id.seed = r.U64();

  RobotState& rs = world.robot;
  rs.base_pose.x = r.F64();
  rs.base_pose.y = r.F64();
  rs.base_pose.yaw = r.F64();
  rs.base_velocity.vx = r.F64();
  rs.base_velocity.vy = r.F64();
  rs.base_velocity.wz = r.F64();
  rs.ee_offset.x = r.F64();
  rs.ee_offset.y = r.F64();
  rs.ee_velocity.x = r.F64();
  rs.ee_velocity.y = r.F64();
  rs.gripper_aperture = r.F64();
  rs.attached = r.Bool();

  DoorState& d = world.door;
  d.hinge_angle = r.F64();
  d.hinge_rate = r.F64();
  d.handle_angle = r.F64();
  d.handle_rate = r.F64();
  d.latched = r.Bool();

  std::array<double, kActionDim> a;
  for (double& v : a) v = r.F64();
  world.last_action = Action::FromArray(a);
  world.grasp_force.x = r.F64();
  world.grasp_force.y = r.F64();
  world.handle_torque = r.F64();
  world.hinge_torque = r.F64();
  world.contact_force = r.F64();
  world.termination.terminated = r.Bool();
  world.termination.reason = ReadEnum<TerminationReason>(r, 5, "termination");
  if (r.pos() != body_end) throw std::runtime_error("snapshot: trailing bytes");
  return out;
}

int SnapshotStage(const Snapshot& snapshot) {
  const std::vector<uint8_t>& b = snapshot.bytes;
  if (b.size() < kHeaderSize + kSpecSize + 4) {
    throw std::runtime_error("snapshot: truncated");
  }
  Reader r(b, b.size());
  r.Seek(kHeaderSize + kSpecSize);
  return static_cast<int>(r.U32());
}

}  // namespace doorrl
