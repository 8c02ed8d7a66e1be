#include "maskvo/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "maskvo/error.hpp"
#include "maskvo/rng.hpp"

namespace maskvo::data {

namespace fs = std::filesystem;
using geometry::Pose;
using geometry::Quaternion;
using geometry::Vec3;

namespace {

std::string join(const std::string& root, const std::string& rel) {
  if (rel.empty()) return rel;
  return (fs::path(root) / rel).string();
}

double parse_double(const std::string& token, const std::string& context) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &pos);
  } catch (const std::exception&) {
    throw ParseError(context + ": not a number: '" + token + "'");
  }
  if (pos != token.size()) throw ParseError(context + ": trailing characters in '" + token + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, sep)) out.push_back(field);
  return out;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.precision(17);
  return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open: " + path);
  return in;
}

void write_pgm_raw(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void read_pgm_raw(const std::string& path, int& width, int& height,
                  std::vector<std::uint8_t>& bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  auto next_token = [&in, &path]() {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {  // comment to end of line
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!token.empty()) return token;
        continue;
      }
      token.push_back(static_cast<char>(c));
    }
    if (token.empty()) throw ParseError("truncated PGM header: " + path);
    return token;
  };

  if (next_token() != "P5") throw ParseError("not a binary PGM (P5): " + path);
  width = static_cast<int>(parse_double(next_token(), "PGM width"));
  height = static_cast<int>(parse_double(next_token(), "PGM height"));
  const int maxval = static_cast<int>(parse_double(next_token(), "PGM maxval"));
  if (width <= 0 || height <= 0) throw ParseError("PGM dimensions must be positive: " + path);
  if (maxval <= 0 || maxval > 255) {
    throw ParseError("PGM maxval must be in [1, 255] for 8-bit data: " + path);
  }
  bytes.resize(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DataIntegrityError("PGM pixel data truncated: " + path);
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string DatasetManifest::image_path(int index) const {
  if (index < 0 || index >= static_cast<int>(frames.size())) {
    throw InvalidArgument("frame index " + std::to_string(index) + " out of range of " +
                          std::to_string(frames.size()));
  }
  return join(root, frames[static_cast<std::size_t>(index)].image);
}

std::string DatasetManifest::imu_path() const { return join(root, imu_file); }

std::string DatasetManifest::groundtruth_path() const { return join(root, groundtruth_file); }

void DatasetManifest::validate() const {
  if (frames.empty()) throw InvalidArgument("manifest has no frames");
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].timestamp > frames[i - 1].timestamp)) {
      throw InvalidArgument("frame timestamps must be strictly increasing at index " +
                            std::to_string(i));
    }
  }
  if (groundtruth_format != "kitti" && groundtruth_format != "tum") {
    throw InvalidArgument("unknown groundtruth_format: '" + groundtruth_format + "'");
  }
  intrinsics.validate();
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in = open_in(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }

  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  try {
    for (const nlohmann::json& frame : doc.at("frames")) {
      FrameEntry entry;
      entry.timestamp = frame.at("t").get<double>();
      entry.image = frame.at("image").get<std::string>();
      m.frames.push_back(std::move(entry));
    }
    m.imu_file = doc.at("imu").get<std::string>();
    m.groundtruth_file = doc.at("groundtruth").get<std::string>();
    m.groundtruth_format = doc.at("groundtruth_format").get<std::string>();
    const nlohmann::json& k = doc.at("intrinsics");
    m.intrinsics.fx = k.at("fx").get<double>();
    m.intrinsics.fy = k.at("fy").get<double>();
    m.intrinsics.cx = k.at("cx").get<double>();
    m.intrinsics.cy = k.at("cy").get<double>();
    m.intrinsics.width = k.at("width").get<int>();
    m.intrinsics.height = k.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  m.validate();

  std::vector<std::string> missing;
  for (const FrameEntry& frame : m.frames) {
    const std::string p = join(m.root, frame.image);
    if (!fs::exists(p)) missing.push_back(p);
  }
  if (!fs::exists(m.imu_path())) missing.push_back(m.imu_path());
  if (!fs::exists(m.groundtruth_path())) missing.push_back(m.groundtruth_path());
  if (!missing.empty()) {
    std::string msg = "manifest references missing files:";
    for (const std::string& p : missing) msg += "\n  " + p;
    throw IoError(msg);
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  manifest.validate();
  nlohmann::json doc;
  doc["frames"] = nlohmann::json::array();
  for (const FrameEntry& frame : manifest.frames) {
    doc["frames"].push_back({{"t", frame.timestamp}, {"image", frame.image}});
  }
  doc["imu"] = manifest.imu_file;
  doc["groundtruth"] = manifest.groundtruth_file;
  doc["groundtruth_format"] = manifest.groundtruth_format;
  doc["intrinsics"] = {{"fx", manifest.intrinsics.fx}, {"fy", manifest.intrinsics.fy},
                       {"cx", manifest.intrinsics.cx}, {"cy", manifest.intrinsics.cy},
                       {"width", manifest.intrinsics.width},
                       {"height", manifest.intrinsics.height}};
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("manifest write failed: " + path);
}

std::vector<GroundTruthPose> load_kitti_poses(const std::string& path, double frame_rate) {
  if (!(frame_rate > 0.0)) throw InvalidArgument("frame_rate must be positive");
  std::ifstream in = open_in(path);
  std::vector<GroundTruthPose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::vector<double> v;
    std::string token;
    while (row >> token) v.push_back(parse_double(token, path + ":" + std::to_string(line_no)));
    if (v.size() != 12) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 12 values, got " +
                       std::to_string(v.size()));
    }
    geometry::Mat3 r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    const Vec3 t(v[3], v[7], v[11]);
    const double drift = (r.transpose() * r - geometry::Mat3::Identity()).norm();
    const geometry::RotationMatrix rot =
        drift > 1e-6 ? geometry::RotationMatrix::project(r) : geometry::RotationMatrix(r);
    GroundTruthPose gt;
    gt.timestamp = static_cast<double>(poses.size()) / frame_rate;
    gt.pose = Pose(geometry::rotmat_to_quat(rot), t);
    poses.push_back(gt);
  }
  return poses;
}

void save_kitti_poses(const std::string& path, const std::vector<GroundTruthPose>& poses) {
  std::ofstream out = open_out(path);
  for (const GroundTruthPose& gt : poses) {
    const geometry::Mat3 r = geometry::quat_to_rotmat(gt.pose.rotation).matrix();
    const Vec3& t = gt.pose.translation;
    out << r(0, 0) << ' ' << r(0, 1) << ' ' << r(0, 2) << ' ' << t.x() << ' '  //
        << r(1, 0) << ' ' << r(1, 1) << ' ' << r(1, 2) << ' ' << t.y() << ' '  //
        << r(2, 0) << ' ' << r(2, 1) << ' ' << r(2, 2) << ' ' << t.z() << '\n';
  }
  if (!out) throw IoError("pose write failed: " + path);
}

std::vector<GroundTruthPose> load_tum_poses(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<GroundTruthPose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::vector<double> v;
    std::string token;
    while (row >> token) v.push_back(parse_double(token, path + ":" + std::to_string(line_no)));
    if (v.size() != 8) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 8 values, got " +
                       std::to_string(v.size()));
    }
    GroundTruthPose gt;
    gt.timestamp = v[0];
    // Scalar-last on disk; scalar-first internally.
    gt.pose = Pose(Quaternion(v[7], v[4], v[5], v[6]), Vec3(v[1], v[2], v[3]));
    poses.push_back(gt);
  }
  return poses;
}

void save_tum_poses(const std::string& path, const std::vector<GroundTruthPose>& poses) {
  std::ofstream out = open_out(path);
  for (const GroundTruthPose& gt : poses) {
    const Quaternion& q = gt.pose.rotation;
    const Vec3& t = gt.pose.translation;
    out << gt.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' '
        << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  if (!out) throw IoError("pose write failed: " + path);
}

std::vector<GroundTruthPose> load_groundtruth(const DatasetManifest& manifest) {
  if (manifest.groundtruth_format == "tum") {
    return load_tum_poses(manifest.groundtruth_path());
  }
  std::vector<GroundTruthPose> poses = load_kitti_poses(manifest.groundtruth_path());
  if (poses.size() != manifest.frames.size()) {
    throw DataIntegrityError("ground truth has " + std::to_string(poses.size()) +
                             " poses for " + std::to_string(manifest.frames.size()) + " frames");
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    poses[i].timestamp = manifest.frames[i].timestamp;
  }
  return poses;
}

std::vector<imu::ImuSample> load_imu_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "t,ax,ay,az,wx,wy,wz") {
    throw ParseError(path + ": expected header `t,ax,ay,az,wx,wy,wz`");
  }
  std::vector<imu::ImuSample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != 7) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    }
    imu::ImuSample s;
    const std::string ctx = path + ":" + std::to_string(line_no);
    s.timestamp = parse_double(fields[0], ctx);
    s.accel = Vec3(parse_double(fields[1], ctx), parse_double(fields[2], ctx),
                   parse_double(fields[3], ctx));
    s.gyro = Vec3(parse_double(fields[4], ctx), parse_double(fields[5], ctx),
                  parse_double(fields[6], ctx));
    if (!samples.empty() && !(s.timestamp > samples.back().timestamp)) {
      throw DataIntegrityError(path + ":" + std::to_string(line_no) +
                               ": timestamps must be strictly increasing");
    }
    samples.push_back(s);
  }
  return samples;
}

void save_imu_csv(const std::string& path, const std::vector<imu::ImuSample>& samples) {
  std::ofstream out = open_out(path);
  out << "t,ax,ay,az,wx,wy,wz\n";
  for (const imu::ImuSample& s : samples) {
    out << s.timestamp << ',' << s.accel.x() << ',' << s.accel.y() << ',' << s.accel.z() << ','
        << s.gyro.x() << ',' << s.gyro.y() << ',' << s.gyro.z() << '\n';
  }
  if (!out) throw IoError("imu write failed: " + path);
}

vision::Image load_pgm(const std::string& path) {
  vision::Image img;
  read_pgm_raw(path, img.width, img.height, img.pixels);
  img.validate();
  return img;
}

void save_pgm(const std::string& path, const vision::Image& img) {
  img.validate();
  write_pgm_raw(path, img.width, img.height, img.pixels);
}

void save_mask(const std::string& path, const vision::BinaryMask& mask) {
  mask.validate();
  std::vector<std::uint8_t> bytes(mask.grid.size());
  for (std::size_t i = 0; i < mask.grid.size(); ++i) bytes[i] = mask.grid[i] ? 255 : 0;
  write_pgm_raw(path, mask.cols, mask.rows, bytes);
  nlohmann::json sidecar = {{"block_size", mask.block_size},
                            {"kept_fraction", mask.kept_fraction()}};
  std::ofstream out = open_out(path + ".json");
  out << sidecar.dump() << '\n';
  if (!out) throw IoError("mask sidecar write failed: " + path + ".json");
}

vision::BinaryMask load_mask(const std::string& path) {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bytes;
  read_pgm_raw(path, width, height, bytes);
  vision::BinaryMask mask;
  mask.rows = height;
  mask.cols = width;
  mask.grid.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255) {
      throw DataIntegrityError("mask pixels must be 0 or 255: " + path);
    }
    mask.grid[i] = bytes[i] == 255 ? 1 : 0;
  }

  std::ifstream in = open_in(path + ".json");
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(in);
    mask.block_size = sidecar.at("block_size").get<int>();
    const double recorded = sidecar.at("kept_fraction").get<double>();
    if (std::abs(recorded - mask.kept_fraction()) > 1e-9) {
      throw DataIntegrityError("mask sidecar kept_fraction " + format_double(recorded) +
                               " does not match grid fraction " +
                               format_double(mask.kept_fraction()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("mask sidecar " + path + ".json: " + e.what());
  }
  mask.validate();
  return mask;
}

Detections load_detections(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty detections file");
  std::istringstream header(line);
  long long count = -1, bits = -1;
  if (!(header >> count >> bits) || count < 0 || bits != vision::Descriptor::kBits) {
    throw ParseError(path + ": header must be `K " + std::to_string(vision::Descriptor::kBits) +
                     "`, got '" + line + "'");
  }
  Detections det;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string sx, sy, sscore, hex;
    if (!(row >> sx >> sy >> sscore >> hex)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected `x y score hexbits`");
    }
    const std::string ctx = path + ":" + std::to_string(line_no);
    vision::Keypoint kp;
    kp.x = parse_double(sx, ctx);
    kp.y = parse_double(sy, ctx);
    kp.score = parse_double(sscore, ctx);
    if (hex.size() != vision::Descriptor::kBits / 4) {
      throw ParseError(ctx + ": descriptor must be " +
                       std::to_string(vision::Descriptor::kBits / 4) + " hex digits");
    }
    vision::Descriptor d;
    for (int word = 0; word < 4; ++word) {
      std::uint64_t v = 0;
      for (int digit = 0; digit < 16; ++digit) {
        const char c = hex[static_cast<std::size_t>(word * 16 + digit)];
        int nibble = 0;
        if (c >= '0' && c <= '9') {
          nibble = c - '0';
        } else if (c >= 'a' && c <= 'f') {
          nibble = c - 'a' + 10;
        } else {
          throw ParseError(ctx + ": invalid hex digit '" + std::string(1, c) + "'");
        }
        v = (v << 4) | static_cast<std::uint64_t>(nibble);
      }
      d.bits[static_cast<std::size_t>(word)] = v;
    }
    det.keypoints.push_back(kp);
    det.descriptors.push_back(d);
  }
  if (static_cast<long long>(det.keypoints.size()) != count) {
    throw DataIntegrityError(path + ": header promises " + std::to_string(count) +
                             " keypoints, file holds " + std::to_string(det.keypoints.size()));
  }
  return det;
}

void save_detections(const std::string& path, const Detections& detections) {
  if (detections.keypoints.size() != detections.descriptors.size()) {
    throw InvalidArgument("detections need one descriptor per keypoint");
  }
  std::ofstream out = open_out(path);
  out << detections.keypoints.size() << ' ' << vision::Descriptor::kBits << '\n';
  for (std::size_t i = 0; i < detections.keypoints.size(); ++i) {
    const vision::Keypoint& kp = detections.keypoints[i];
    out << kp.x << ' ' << kp.y << ' ' << kp.score << ' ';
    for (int word = 0; word < 4; ++word) {
      out << std::hex << std::setw(16) << std::setfill('0')
          << detections.descriptors[i].bits[static_cast<std::size_t>(word)] << std::dec;
    }
    out << '\n';
  }
  if (!out) throw IoError("detections write failed: " + path);
}

void SyntheticSceneConfig::validate() const {
  if (point_count < 50) throw InvalidArgument("point_count must be at least 50");
  if (!(extent > 0.0)) throw InvalidArgument("extent must be positive");
  if (frame_count < 2) throw InvalidArgument("frame_count must be at least 2");
  if (!(frame_rate > 0.0) || !(imu_rate > 0.0)) throw InvalidArgument("rates must be positive");
  if (imu_rate < 10.0 * frame_rate) {
    throw InvalidArgument("imu_rate must be at least 10x frame_rate");
  }
  if (!(speed > 0.0)) throw InvalidArgument("speed must be positive");
  if (!(radius > extent)) {
    throw InvalidArgument("radius must exceed the point-cloud extent to keep the camera outside");
  }
  intrinsics.validate();
  noise.validate();
}

SyntheticSceneConfig load_scene_config(const std::string& path) {
  std::ifstream in = open_in(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("scene config " + path + ": " + e.what());
  }

  SyntheticSceneConfig config;
  try {
    config.point_count = doc.value("point_count", config.point_count);
    config.extent = doc.value("extent", config.extent);
    if (doc.contains("trajectory")) {
      const std::string kind = doc.at("trajectory").get<std::string>();
      if (kind == "circle") {
        config.trajectory = TrajectoryKind::kCircle;
      } else if (kind == "figure-eight") {
        config.trajectory = TrajectoryKind::kFigureEight;
      } else if (kind == "straight") {
        config.trajectory = TrajectoryKind::kStraight;
      } else {
        throw ParseError("unknown trajectory kind: '" + kind + "'");
      }
    }
    config.radius = doc.value("radius", config.radius);
    config.speed = doc.value("speed", config.speed);
    config.frame_count = doc.value("frame_count", config.frame_count);
    config.frame_rate = doc.value("frame_rate", config.frame_rate);
    config.imu_rate = doc.value("imu_rate", config.imu_rate);
    if (doc.contains("intrinsics")) {
      const nlohmann::json& k = doc.at("intrinsics");
      config.intrinsics.fx = k.value("fx", config.intrinsics.fx);
      config.intrinsics.fy = k.value("fy", config.intrinsics.fy);
      config.intrinsics.cx = k.value("cx", config.intrinsics.cx);
      config.intrinsics.cy = k.value("cy", config.intrinsics.cy);
      config.intrinsics.width = k.value("width", config.intrinsics.width);
      config.intrinsics.height = k.value("height", config.intrinsics.height);
    }
    if (doc.contains("noise")) {
      const nlohmann::json& n = doc.at("noise");
      config.noise.accel_noise_std = n.value("accel_noise_std", 0.0);
      config.noise.gyro_noise_std = n.value("gyro_noise_std", 0.0);
      config.noise.accel_bias_walk_std = n.value("accel_bias_walk_std", 0.0);
      config.noise.gyro_bias_walk_std = n.value("gyro_bias_walk_std", 0.0);
      if (n.contains("accel_bias")) {
        const auto v = n.at("accel_bias").get<std::vector<double>>();
        if (v.size() != 3) throw ParseError("accel_bias must have 3 components");
        config.noise.accel_bias = Vec3(v[0], v[1], v[2]);
      }
      if (n.contains("gyro_bias")) {
        const auto v = n.at("gyro_bias").get<std::vector<double>>();
        if (v.size() != 3) throw ParseError("gyro_bias must have 3 components");
        config.noise.gyro_bias = Vec3(v[0], v[1], v[2]);
      }
    }
    config.export_detections = doc.value("export_detections", config.export_detections);
    config.rng_seed = doc.value("rng_seed", config.rng_seed);
    config.noise.rng_seed = doc.value("noise_seed", config.rng_seed + 1);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scene config " + path + ": " + e.what());
  }
  config.validate();
  return config;
}

namespace {

/// Orientation looking from `eye` toward `target`: camera z forward, x right,
/// y down, built against the world up direction.
Quaternion look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 up(0.0, 0.0, 1.0);
  Vec3 right = up.cross(forward);
  if (right.norm() < 1e-9) throw InvalidArgument("camera forward axis parallel to world up");
  right.normalize();
  const Vec3 down = forward.cross(right);
  geometry::Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return geometry::rotmat_to_quat(geometry::RotationMatrix(r));
}

}  // namespace

geometry::Pose scene_pose_at(const SyntheticSceneConfig& config, double t) {
  switch (config.trajectory) {
    case TrajectoryKind::kCircle: {
      const double omega = config.speed / config.radius;
      const Vec3 p(config.radius * std::cos(omega * t), config.radius * std::sin(omega * t), 0.0);
      return Pose(look_at(p, Vec3::Zero()), p);
    }
    case TrajectoryKind::kFigureEight: {
      const double a = 0.2 * config.radius;
      const double b = 0.1 * config.radius;
      const double nu = config.speed / (2.0 * M_PI * a);
      const Vec3 p(a * std::sin(2.0 * M_PI * nu * t),
                   -config.radius + b * std::sin(4.0 * M_PI * nu * t), 0.0);
      return Pose(look_at(p, Vec3::Zero()), p);
    }
    case TrajectoryKind::kStraight: {
      const Vec3 p(config.speed * t, -config.radius, 0.0);
      // Fixed orientation looking along +y at the cloud.
      return Pose(look_at(p, Vec3(p.x(), 0.0, 0.0)), p);
    }
  }
  throw InvalidArgument("unknown trajectory kind");
}

DatasetManifest synth_generate(const SyntheticSceneConfig& config, const std::string& out_dir) {
  config.validate();
  fs::create_directories(fs::path(out_dir) / "frames");
  if (config.export_detections) fs::create_directories(fs::path(out_dir) / "detections");

  const int frames = config.frame_count;
  const double duration = static_cast<double>(frames - 1) / config.frame_rate;

  std::vector<double> frame_times(static_cast<std::size_t>(frames));
  std::vector<Pose> frame_poses(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    frame_times[static_cast<std::size_t>(i)] = static_cast<double>(i) / config.frame_rate;
    frame_poses[static_cast<std::size_t>(i)] =
        scene_pose_at(config, frame_times[static_cast<std::size_t>(i)]);
  }

  // World points, resampled until each stays in front of the camera on at
  // least 90% of frames.
  Rng rng(config.rng_seed);
  const double half = config.extent / 2.0;
  std::vector<Vec3> points;
  points.reserve(static_cast<std::size_t>(config.point_count));
  for (int i = 0; i < config.point_count; ++i) {
    Vec3 candidate = Vec3::Zero();
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      candidate = Vec3(rng.uniform(-half, half), rng.uniform(-half, half),
                       rng.uniform(-half, half));
      int in_front = 0;
      for (const Pose& pose : frame_poses) {
        const Vec3 cam = pose.rotation.conjugate().rotate(candidate - pose.translation);
        if (cam.z() > 0.5) ++in_front;
      }
      placed = in_front >= (9 * frames + 9) / 10;
    }
    if (!placed) {
      throw InsufficientData("could not place point " + std::to_string(i) +
                             " in front of the camera for 90% of frames");
    }
    points.push_back(candidate);
  }

  // Unique per-point descriptors for the exact-detection export.
  std::vector<vision::Descriptor> point_descriptors;
  if (config.export_detections) {
    for (int i = 0; i < config.point_count; ++i) {
      Rng drng = rng.derive(0x4a5aull << 32 | static_cast<std::uint64_t>(i));
      vision::Descriptor d;
      for (auto& word : d.bits) word = drng.raw();
      point_descriptors.push_back(d);
    }
  }

  const geometry::CameraIntrinsics& k = config.intrinsics;
  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.imu_file = "imu.csv";
  manifest.groundtruth_file = "groundtruth.txt";
  manifest.groundtruth_format = "tum";
  manifest.intrinsics = k;

  long long visible_total = 0;
  for (int f = 0; f < frames; ++f) {
    vision::Image img(k.width, k.height);
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        img.at(x, y) = ((x / 8 + y / 8) % 2) ? 40 : 0;  // static low-contrast backdrop
      }
    }

    const Pose& pose = frame_poses[static_cast<std::size_t>(f)];
    Detections detections;
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
      const Vec3 cam = pose.rotation.conjugate().rotate(points[pi] - pose.translation);
      if (cam.z() <= 0.5) continue;
      const double u = k.fx * cam.x() / cam.z() + k.cx;
      const double v = k.fy * cam.y() / cam.z() + k.cy;
      const int cx_px = static_cast<int>(std::lround(u));
      const int cy_px = static_cast<int>(std::lround(v));
      if (cx_px < 3 || cx_px >= k.width - 3 || cy_px < 3 || cy_px >= k.height - 3) continue;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) img.at(cx_px + dx, cy_px + dy) = 255;
      }
      ++visible_total;
      if (config.export_detections) {
        vision::Keypoint kp;
        kp.x = u;
        kp.y = v;
        kp.score = 100.0;
        detections.keypoints.push_back(kp);
        detections.descriptors.push_back(point_descriptors[pi]);
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "%06d.pgm", f);
    const std::string rel = std::string("frames/") + name;
    save_pgm(join(out_dir, rel), img);
    FrameEntry entry;
    entry.timestamp = frame_times[static_cast<std::size_t>(f)];
    entry.image = rel;
    manifest.frames.push_back(entry);

    if (config.export_detections) {
      std::snprintf(name, sizeof(name), "%06d.txt", f);
      save_detections(join(out_dir, std::string("detections/") + name), detections);
    }
  }

  const double average_visible = static_cast<double>(visible_total) / frames;
  if (average_visible < 50.0) {
    throw InsufficientData("scene too sparse: " + format_double(average_visible) +
                           " visible points per frame on average, need at least 50");
  }

  // Ground truth (TUM, world-from-camera).
  std::vector<GroundTruthPose> gt(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    gt[static_cast<std::size_t>(i)].timestamp = frame_times[static_cast<std::size_t>(i)];
    gt[static_cast<std::size_t>(i)].pose = frame_poses[static_cast<std::size_t>(i)];
  }
  save_tum_poses(join(out_dir, manifest.groundtruth_file), gt);

  // Inertial stream over a uniform grid covering every frame timestamp.
  const int imu_steps = static_cast<int>(std::ceil(duration * config.imu_rate - 1e-9));
  imu::TrajectorySamples trajectory;
  for (int j = 0; j <= imu_steps; ++j) {
    const double t = static_cast<double>(j) / config.imu_rate;
    trajectory.timestamps.push_back(t);
    trajectory.poses.push_back(scene_pose_at(config, t));
  }
  imu::ImuNoiseParams noise = config.noise;
  const std::vector<imu::ImuSample> samples = imu::simulate_measurements(trajectory, noise);
  save_imu_csv(join(out_dir, manifest.imu_file), samples);

  save_manifest(join(out_dir, "manifest.json"), manifest);
  return load_manifest(join(out_dir, "manifest.json"));
}

}  // namespace maskvo::data
