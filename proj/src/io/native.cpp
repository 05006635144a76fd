// SPDX-License-Identifier: Apache-2.0

#include "streamseg/io/native.hpp"

#include <cstring>

namespace streamseg::io {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'E', 'Q'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const std::size_t at = bytes_.size();
    bytes_.resize(at + sizeof(T));
    std::memcpy(bytes_.data() + at, &v, sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const std::size_t at = bytes_.size();
    bytes_.resize(at + n);
    std::memcpy(bytes_.data() + at, p, n);
  }
  void put_string(const std::string& s) {
    put<uint16_t>(static_cast<uint16_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  void put_vec3(const Vec3& v) {
    put<double>(v.x());
    put<double>(v.y());
    put<double>(v.z());
  }
  std::vector<uint8_t> take() { return std::move(bytes_); }
  std::size_t size() const { return bytes_.size(); }
  void patch_u64(std::size_t at, uint64_t v) {
    std::memcpy(bytes_.data() + at, &v, sizeof(v));
  }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<uint8_t>& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  template <typename T>
  T get(const char* field) {
    if (at_ + sizeof(T) > bytes_.size()) {
      throw ParseError(field, at_, context_ + ": truncated while reading " + field);
    }
    T v;
    std::memcpy(&v, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  std::string get_string(const char* field) {
    const auto n = get<uint16_t>(field);
    if (at_ + n > bytes_.size()) {
      throw ParseError(field, at_, context_ + ": truncated string " + field);
    }
    std::string s(reinterpret_cast<const char*>(bytes_.data() + at_), n);
    at_ += n;
    return s;
  }
  Vec3 get_vec3(const char* field) {
    const double x = get<double>(field);
    const double y = get<double>(field);
    const double z = get<double>(field);
    return Vec3(x, y, z);
  }
  std::size_t offset() const { return at_; }
  std::size_t remaining() const { return bytes_.size() - at_; }

 private:
  const std::vector<uint8_t>& bytes_;
  std::string context_;
  std::size_t at_ = 0;
};

void put_pose(Writer& w, const RigidTransform& t) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.put<double>(t.rotation(r, c));
  w.put_vec3(t.translation);
}

RigidTransform get_pose(Reader& r) {
  RigidTransform t;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) t.rotation(i, c) = r.get<double>("pose");
  t.translation = r.get_vec3("pose");
  return t;
}

}  // namespace

std::vector<uint8_t> write_native(const sim::Sequence& seq,
                                  const std::vector<uint32_t>& moving_class_ids) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<uint32_t>(kVersion);
  w.put<double>(seq.fps);
  w.put<uint32_t>(static_cast<uint32_t>(seq.frames.size()));

  w.put<uint32_t>(static_cast<uint32_t>(seq.classes.classes.size()));
  for (const auto& c : seq.classes.classes) {
    w.put<uint32_t>(c.id);
    w.put<uint8_t>(c.thing ? 1 : 0);
    w.put_string(c.name);
  }
  w.put<uint32_t>(static_cast<uint32_t>(moving_class_ids.size()));
  for (uint32_t id : moving_class_ids) w.put<uint32_t>(id);

  w.put<uint32_t>(static_cast<uint32_t>(seq.bodies.size()));
  for (const auto& b : seq.bodies) {
    w.put<uint32_t>(b.id);
    w.put<uint32_t>(b.class_id);
    w.put<uint8_t>(b.shape == sim::ShapeKind::box ? 0 : 1);
    w.put<uint32_t>(b.n_points);
    w.put_vec3(b.extent);
    w.put_vec3(b.center);
    w.put_vec3(b.v);
    w.put_vec3(b.omega);
  }

  for (const auto& f : seq.frames) {
    const std::size_t size_at = w.size();
    w.put<uint64_t>(0);  // frame block length, patched below
    const std::size_t begin = w.size();
    w.put<uint32_t>(f.frame_index);
    w.put<double>(f.timestamp);
    const auto n = static_cast<uint32_t>(f.size());
    w.put<uint32_t>(n);
    for (const auto& p : f.points) w.put_vec3(p);
    for (uint32_t s : f.semantic_id) w.put<uint32_t>(s);
    for (uint32_t s : f.instance_id) w.put<uint32_t>(s);
    for (uint8_t m : f.moving) w.put<uint8_t>(m);
    put_pose(w, f.gt_pose_world_from_ego);
    for (const auto& v : f.gt_forward_flow) w.put_vec3(v);
    w.patch_u64(size_at, w.size() - begin);
  }
  return w.take();
}

NativeSequence read_native(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "native sequence");
  char magic[4];
  for (char& m : magic) m = static_cast<char>(r.get<uint8_t>("magic"));
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("magic", 0, "native sequence: bad magic");
  }
  const auto version = r.get<uint32_t>("version");
  if (version != kVersion) {
    throw ParseError("version", 4, "native sequence: unsupported version");
  }

  NativeSequence out;
  sim::Sequence& seq = out.sequence;
  seq.fps = r.get<double>("fps");
  if (!(seq.fps > 0.0)) {
    throw ParseError("fps", r.offset(), "native sequence: fps must be positive");
  }
  const auto n_frames = r.get<uint32_t>("n_frames");

  const auto n_classes = r.get<uint32_t>("class_table");
  for (uint32_t i = 0; i < n_classes; ++i) {
    sim::ClassInfo c;
    c.id = r.get<uint32_t>("class_id");
    c.thing = r.get<uint8_t>("class_thing") != 0;
    c.name = r.get_string("class_name");
    seq.classes.classes.push_back(c);
  }
  const auto n_moving = r.get<uint32_t>("moving_class_ids");
  for (uint32_t i = 0; i < n_moving; ++i) {
    out.moving_class_ids.push_back(r.get<uint32_t>("moving_class_id"));
  }

  const auto n_bodies = r.get<uint32_t>("bodies");
  for (uint32_t i = 0; i < n_bodies; ++i) {
    sim::RigidBody b;
    b.id = r.get<uint32_t>("body_id");
    b.class_id = r.get<uint32_t>("body_class");
    b.shape = r.get<uint8_t>("body_shape") == 0 ? sim::ShapeKind::box
                                                : sim::ShapeKind::cylinder;
    b.n_points = r.get<uint32_t>("body_points");
    b.extent = r.get_vec3("body_extent");
    b.center = r.get_vec3("body_center");
    b.v = r.get_vec3("body_v");
    b.omega = r.get_vec3("body_omega");
    seq.bodies.push_back(b);
  }

  for (uint32_t i = 0; i < n_frames; ++i) {
    const auto block_len = r.get<uint64_t>("frame_block");
    if (block_len > r.remaining()) {
      throw ParseError("frame_block", r.offset(), "native sequence: truncated frame block");
    }
    const std::size_t begin = r.offset();
    sim::FrameSample f;
    f.frame_index = r.get<uint32_t>("frame_index");
    f.timestamp = r.get<double>("timestamp");
    const auto n = r.get<uint32_t>("n_points");
    // Bound sanity before allocating: each point needs at least 24 bytes.
    if (static_cast<uint64_t>(n) * 24 > block_len) {
      throw ParseError("n_points", r.offset(), "native sequence: point count exceeds block");
    }
    f.points.resize(n);
    for (auto& p : f.points) p = r.get_vec3("points");
    f.semantic_id.resize(n);
    for (auto& s : f.semantic_id) s = r.get<uint32_t>("semantic_id");
    f.instance_id.resize(n);
    for (auto& s : f.instance_id) s = r.get<uint32_t>("instance_id");
    f.moving.resize(n);
    for (auto& m : f.moving) m = r.get<uint8_t>("moving");
    f.gt_pose_world_from_ego = get_pose(r);
    f.gt_forward_flow.resize(n);
    for (auto& v : f.gt_forward_flow) v = r.get_vec3("flow");
    if (r.offset() - begin != block_len) {
      throw ParseError("frame_block", begin, "native sequence: frame block length mismatch");
    }
    seq.frames.push_back(std::move(f));
  }
  if (r.remaining() != 0) {
    throw ParseError("trailer", r.offset(), "native sequence: trailing bytes");
  }
  return out;
}

void save_native(const std::string& path, const sim::Sequence& seq,
                 const std::vector<uint32_t>& moving_class_ids) {
  write_file(path, write_native(seq, moving_class_ids));
}

NativeSequence load_native(const std::string& path) {
  return read_native(read_file(path));
}

}  // namespace streamseg::io
