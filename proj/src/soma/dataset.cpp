// Copyright 2026 The soma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "soma/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "soma/container.hpp"
#include "soma/png_io.hpp"

namespace soma::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json mat4_to_json(const Mat4& m) {
  json a = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  return a;
}

Mat4 mat4_from_json(const json& a) {
  if (!a.is_array() || a.size() != 16) throw std::runtime_error("expected 16-element pose");
  Mat4 m;
  int k = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = a[k++].get<double>();
  return m;
}

json vec_to_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VecX vec_from_json(const json& a) {
  VecX v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_rgb_png(const std::string& path, const Image& img) {
  pngio::Png8 out;
  out.width = img.cols();
  out.height = img.rows();
  out.channels = 3;
  out.data.resize(static_cast<size_t>(out.width) * out.height * 3);
  size_t k = 0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) out.data[k++] = to_byte(img.ch[c](y, x));
  pngio::write(path, out);
}

Image read_rgb_png(const std::string& path) {
  const pngio::Png8 in = pngio::read(path);
  if (in.channels != 3) throw std::runtime_error("expected RGB png: " + path);
  Image img = Image::zero(in.height, in.width);
  size_t k = 0;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < 3; ++c) img.ch[c](y, x) = in.data[k++] / 255.0;
  return img;
}

void write_mask_png(const std::string& path, const MaskImage& mask) {
  pngio::Png8 out;
  out.width = static_cast<int>(mask.cols());
  out.height = static_cast<int>(mask.rows());
  out.channels = 1;
  out.data.resize(static_cast<size_t>(out.width) * out.height);
  size_t k = 0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.data[k++] = mask(y, x) ? 255 : 0;
  pngio::write(path, out);
}

MaskImage read_mask_png(const std::string& path) {
  const pngio::Png8 in = pngio::read(path);
  if (in.channels != 1) throw std::runtime_error("expected grayscale png: " + path);
  MaskImage mask(in.height, in.width);
  size_t k = 0;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) mask(y, x) = in.data[k++] >= 128 ? 1 : 0;
  return mask;
}

void write_f32_raw(const std::string& path, const MatX& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  std::vector<float> buf(static_cast<size_t>(m.size()));
  size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  json sidecar = {{"shape", {m.rows(), m.cols()}}, {"dtype", "float32"}, {"byte_order", "little"}};
  std::ofstream js(path.substr(0, path.size() - 4) + ".json", std::ios::trunc);
  js << sidecar.dump() << "\n";
}

MatX read_f32_raw(const std::string& path) {
  std::ifstream js(path.substr(0, path.size() - 4) + ".json");
  if (!js) throw std::runtime_error("missing sidecar header for " + path);
  const json sidecar = json::parse(js);
  if (sidecar.at("dtype") != "float32" || sidecar.at("byte_order") != "little")
    throw std::runtime_error("unsupported array encoding in sidecar of " + path);
  const auto rows = sidecar.at("shape")[0].get<std::int64_t>();
  const auto cols = sidecar.at("shape")[1].get<std::int64_t>();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::vector<float> buf(static_cast<size_t>(rows) * static_cast<size_t>(cols));
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (static_cast<size_t>(is.gcount()) != buf.size() * sizeof(float))
    throw std::runtime_error("array size disagrees with sidecar shape: " + path);
  MatX m(rows, cols);
  size_t k = 0;
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(buf[k++]);
  return m;
}

std::string frame_dir(const std::string& dir, int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", t);
  return dir + "/frames/" + buf;
}

container::Blob splats_to_blob(const SplatSetState& st) {
  const PackedSplats p = pack(st);
  container::Blob blob;
  blob.header["kind"] = "splats";
  blob.header["count"] = p.size();
  blob.header["attr_dim"] = static_cast<int>(p.attributes.cols());
  blob.blocks = {{"positions", p.positions}, {"covariances", p.covariances},
                 {"velocities", p.velocities}, {"colors", p.colors},
                 {"opacities", p.opacities},  {"masses", p.masses},
                 {"attributes", p.attributes}};
  return blob;
}

SplatSetState splats_from_blob(const container::Blob& blob) {
  PackedSplats p;
  p.positions = blob.block("positions");
  p.covariances = blob.block("covariances");
  p.velocities = blob.block("velocities");
  p.colors = blob.block("colors");
  p.opacities = blob.block("opacities");
  p.masses = blob.block("masses");
  p.attributes = blob.block("attributes");
  return unpack(p, 0);
}

}  // namespace

void save_sequence(const SceneSequence& seq, const std::string& dir) {
  // Validate up front so a partial directory is never left behind by bad data.
  try {
    seq.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("save_sequence: " + std::string(e.what()));
  }
  for (size_t t = 0; t < seq.frames.size(); ++t) {
    const SceneFrame& f = seq.frames[t];
    for (size_t c = 0; c < f.views.size(); ++c) {
      const auto& v = f.views[c];
      const int h = seq.cameras[c].height, w = seq.cameras[c].width;
      if (v.rgb.rows() != h || v.rgb.cols() != w || v.depth.rows() != h ||
          v.depth.cols() != w || v.obj_mask.rows() != h || v.obj_mask.cols() != w ||
          v.occ_mask.rows() != h || v.occ_mask.cols() != w)
        throw std::invalid_argument("save_sequence: inconsistent array shapes at frame " +
                                    std::to_string(t) + " camera " + std::to_string(c));
    }
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("save_sequence: cannot create " + dir + ": " + ec.message());

  json manifest;
  manifest["name"] = seq.name;
  manifest["dt"] = seq.dt;
  manifest["frame_count"] = static_cast<int>(seq.frames.size());
  manifest["wrist_camera"] = seq.wrist_camera;
  json cams = json::array();
  for (const auto& c : seq.cameras)
    cams.push_back({{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
                    {"width", c.width}, {"height", c.height},
                    {"pose", mat4_to_json(c.world_from_camera)}});
  manifest["cameras"] = cams;

  json frames = json::array();
  for (const auto& f : seq.frames) {
    json jf;
    jf["index"] = f.index;
    json poses = json::array();
    for (const auto& v : f.views) poses.push_back(mat4_to_json(v.camera_pose));
    jf["cam_poses"] = poses;
    jf["action"] = {{"q", vec_to_json(f.action.q)},
                    {"ee_pose", mat4_to_json(f.action.ee_pose_sim)},
                    {"gripper", f.action.gripper},
                    {"control_points", vec_to_json(Eigen::Map<const VecX>(
                         f.action.control_points.data(), f.action.control_points.size()))}};
    frames.push_back(std::move(jf));
  }
  manifest["frames"] = frames;

  json wrob = json::array();
  for (const auto& p : seq.wrist_pose_rob) wrob.push_back(mat4_to_json(p));
  manifest["wrist_pose_rob"] = wrob;

  json pairs = json::array();
  for (const auto& p : seq.reference_pairs) pairs.push_back({p.first, p.second});
  manifest["reference_pairs"] = pairs;

  {
    std::ofstream os(dir + "/manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("save_sequence: cannot write manifest in " + dir);
    os << manifest.dump(1) << "\n";
  }

  container::write(dir + "/splats0.bin", splats_to_blob(seq.initial_splats));

  for (size_t t = 0; t < seq.frames.size(); ++t) {
    const std::string fdir = frame_dir(dir, static_cast<int>(t));
    fs::create_directories(fdir, ec);
    if (ec) throw std::runtime_error("save_sequence: cannot create " + fdir);
    const SceneFrame& f = seq.frames[t];
    for (size_t c = 0; c < f.views.size(); ++c) {
      const std::string stem = fdir + "/cam" + std::to_string(c);
      write_rgb_png(stem + "_rgb.png", f.views[c].rgb);
      write_f32_raw(stem + "_depth.f32", f.views[c].depth);
      write_mask_png(stem + "_objmask.png", f.views[c].obj_mask);
      write_mask_png(stem + "_occmask.png", f.views[c].occ_mask);
    }
  }
}

SceneSequence load_sequence(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("load_sequence: missing manifest in " + dir);
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_sequence: bad manifest in " + dir + ": " + e.what());
  }

  SceneSequence seq;
  seq.name = manifest.value("name", "");
  seq.dt = manifest.at("dt").get<double>();
  seq.wrist_camera = manifest.at("wrist_camera").get<int>();
  for (const auto& jc : manifest.at("cameras")) {
    CameraModel c;
    c.fx = jc.at("fx").get<double>();
    c.fy = jc.at("fy").get<double>();
    c.cx = jc.at("cx").get<double>();
    c.cy = jc.at("cy").get<double>();
    c.width = jc.at("width").get<int>();
    c.height = jc.at("height").get<int>();
    c.world_from_camera = mat4_from_json(jc.at("pose"));
    seq.cameras.push_back(c);
  }

  const int frame_count = manifest.at("frame_count").get<int>();
  const auto& jframes = manifest.at("frames");
  if (static_cast<int>(jframes.size()) != frame_count)
    throw std::runtime_error("load_sequence: frame count disagrees with manifest in " + dir);

  for (int t = 0; t < frame_count; ++t) {
    const json& jf = jframes[t];
    SceneFrame f;
    f.index = jf.at("index").get<int>();
    const auto& ja = jf.at("action");
    f.action.q = vec_from_json(ja.at("q"));
    f.action.ee_pose_sim = mat4_from_json(ja.at("ee_pose"));
    f.action.gripper = ja.at("gripper").get<double>();
    const VecX cp = vec_from_json(ja.at("control_points"));
    if (cp.size() != RobotAction::kControlPoints * 3)
      throw std::runtime_error("load_sequence: bad control point payload in " + dir);
    f.action.control_points =
        Eigen::Map<const MatX>(cp.data(), RobotAction::kControlPoints, 3);

    const std::string fdir = frame_dir(dir, t);
    for (size_t c = 0; c < seq.cameras.size(); ++c) {
      const std::string stem = fdir + "/cam" + std::to_string(c);
      SceneFrame::View v;
      v.rgb = read_rgb_png(stem + "_rgb.png");
      v.depth = read_f32_raw(stem + "_depth.f32");
      v.obj_mask = read_mask_png(stem + "_objmask.png");
      v.occ_mask = read_mask_png(stem + "_occmask.png");
      v.camera_pose = mat4_from_json(jf.at("cam_poses")[c]);
      f.views.push_back(std::move(v));
    }
    seq.frames.push_back(std::move(f));
  }

  for (const auto& jp : manifest.at("wrist_pose_rob")) seq.wrist_pose_rob.push_back(mat4_from_json(jp));
  for (const auto& jp : manifest.at("reference_pairs"))
    seq.reference_pairs.emplace_back(jp[0].get<double>(), jp[1].get<double>());

  seq.initial_splats = splats_from_blob(container::read(dir + "/splats0.bin"));

  try {
    seq.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("load_sequence: loaded data violates invariants in " + dir + ": " +
                             e.what());
  }
  return seq;
}

void save_index(const DatasetIndex& index, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  json j;
  j["sequences"] = index.sequences;
  j["train"] = index.train;
  j["test"] = index.test;
  j["meta"] = index.meta;
  std::ofstream os(dir + "/dataset.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write dataset index in " + dir);
  os << j.dump(1) << "\n";
}

DatasetIndex load_index(const std::string& dir) {
  std::ifstream is(dir + "/dataset.json");
  if (!is) throw std::runtime_error("missing dataset.json in " + dir);
  const json j = json::parse(is);
  DatasetIndex index;
  index.sequences = j.at("sequences").get<std::vector<std::string>>();
  index.train = j.at("train").get<std::vector<int>>();
  index.test = j.at("test").get<std::vector<int>>();
  index.meta = j.value("meta", json::object());
  return index;
}

}  // namespace soma::dataset
