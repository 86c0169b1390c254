#include "core/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace octcast::dataset {

using nlohmann::json;

namespace {

constexpr char kMagic[5] = {'O', 'C', 'T', 'D', '1'};

json point_to_json(const Eigen::Vector2d& p) { return json::array({p.x(), p.y()}); }

Eigen::Vector2d point_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorKind::SchemaError, "point must be [x, y]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json points_to_json(const std::vector<Eigen::Vector2d>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(point_to_json(p));
  return a;
}

std::vector<Eigen::Vector2d> points_from_json(const json& j) {
  std::vector<Eigen::Vector2d> out;
  for (const auto& p : j) out.push_back(point_from_json(p));
  return out;
}

json trajectory_to_json(const geom::HandTrajectory& t) {
  json vis = json::array();
  for (const auto& v : t.visible) vis.push_back(json::array({v[0], v[1]}));
  return json{{"left", points_to_json(t.left)},
              {"right", points_to_json(t.right)},
              {"visible", vis}};
}

geom::HandTrajectory trajectory_from_json(const json& j) {
  geom::HandTrajectory t;
  t.left = points_from_json(j.at("left"));
  t.right = points_from_json(j.at("right"));
  for (const auto& v : j.at("visible"))
    t.visible.push_back({v.at(0).get<bool>(), v.at(1).get<bool>()});
  t.horizon = static_cast<int>(t.left.size());
  if (t.right.size() != t.left.size() || t.visible.size() != t.left.size())
    fail(ErrorKind::SchemaError, "trajectory arrays disagree on horizon");
  return t;
}

json box_to_json(const Eigen::Vector4d& b) { return json::array({b(0), b(1), b(2), b(3)}); }

Eigen::Vector4d box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) fail(ErrorKind::SchemaError, "box must be [x1,y1,x2,y2]");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

json boxes_to_json(const std::vector<Eigen::Vector4d>& boxes) {
  json a = json::array();
  for (const auto& b : boxes) a.push_back(box_to_json(b));
  return a;
}

json features_to_json(const std::vector<float>& feat, int T, int d_feat) {
  json frames = json::array();
  for (int t = 0; t < T; ++t) {
    json row = json::array();
    for (int k = 0; k < d_feat; ++k)
      row.push_back(static_cast<double>(feat[static_cast<size_t>(t) * d_feat + k]));
    frames.push_back(std::move(row));
  }
  return frames;
}

std::vector<float> features_from_json(const json& j, int T, int d_feat) {
  std::vector<float> out(static_cast<size_t>(T) * d_feat, 0.0f);
  if (static_cast<int>(j.size()) != T) fail(ErrorKind::SchemaError, "feature frame count");
  for (int t = 0; t < T; ++t) {
    const json& row = j.at(t);
    if (static_cast<int>(row.size()) != d_feat) fail(ErrorKind::SchemaError, "feature width");
    for (int k = 0; k < d_feat; ++k)
      out[static_cast<size_t>(t) * d_feat + k] = row.at(k).get<float>();
  }
  return out;
}

// record json without the bulky feature tensors (shared by both containers)
json record_skeleton(const TrainingSample& s) {
  json rec;
  rec["id"] = s.id;
  rec["T"] = s.T;
  rec["F"] = s.F;
  rec["boxes"] = {
      {"hand", json::array({boxes_to_json(s.box_hand[0]), boxes_to_json(s.box_hand[1])})},
      {"object", json::array({boxes_to_json(s.box_object[0]), boxes_to_json(s.box_object[1])})}};
  json vh0 = json::array(), vh1 = json::array(), vo0 = json::array(), vo1 = json::array();
  for (int t = 0; t < s.T; ++t) {
    vh0.push_back(static_cast<bool>(s.valid_hand[0][static_cast<size_t>(t)]));
    vh1.push_back(static_cast<bool>(s.valid_hand[1][static_cast<size_t>(t)]));
    vo0.push_back(static_cast<bool>(s.valid_object[0][static_cast<size_t>(t)]));
    vo1.push_back(static_cast<bool>(s.valid_object[1][static_cast<size_t>(t)]));
  }
  rec["valid"] = {{"hand", json::array({vh0, vh1})}, {"object", json::array({vo0, vo1})}};
  json gt = {{"trajectory", trajectory_to_json(s.gt_trajectory)},
             {"contacts", points_to_json(s.gt_contacts.points)}};
  gt["action"] = s.has_action ? json(json::array({s.verb, s.noun})) : json(nullptr);
  rec["gt"] = std::move(gt);
  rec["oracle"] = {{"trajectory", trajectory_to_json(s.oracle_trajectory)},
                   {"contacts", points_to_json(s.oracle_contacts.points)}};
  return rec;
}

TrainingSample sample_from_skeleton(const json& rec) {
  TrainingSample s;
  s.id = rec.at("id").get<std::string>();
  s.T = rec.at("T").get<int>();
  s.F = rec.at("F").get<int>();
  if (s.T < 1 || s.F < 1) fail(ErrorKind::SchemaError, "T and F must be positive");
  for (int slot = 0; slot < 2; ++slot) {
    for (const auto& b : rec.at("boxes").at("hand").at(slot))
      s.box_hand[slot].push_back(box_from_json(b));
    for (const auto& b : rec.at("boxes").at("object").at(slot))
      s.box_object[slot].push_back(box_from_json(b));
    for (const auto& v : rec.at("valid").at("hand").at(slot))
      s.valid_hand[slot].push_back(v.get<bool>() ? 1 : 0);
    for (const auto& v : rec.at("valid").at("object").at(slot))
      s.valid_object[slot].push_back(v.get<bool>() ? 1 : 0);
  }
  s.gt_trajectory = trajectory_from_json(rec.at("gt").at("trajectory"));
  s.gt_contacts.points = points_from_json(rec.at("gt").at("contacts"));
  if (!rec.at("gt").at("action").is_null()) {
    s.has_action = true;
    s.verb = rec.at("gt").at("action").at(0).get<int>();
    s.noun = rec.at("gt").at("action").at(1).get<int>();
  }
  s.oracle_trajectory = trajectory_from_json(rec.at("oracle").at("trajectory"));
  s.oracle_contacts.points = points_from_json(rec.at("oracle").at("contacts"));
  return s;
}

bool feature_block_zero(const std::vector<float>& feat, int t, int d_feat) {
  for (int k = 0; k < d_feat; ++k) {
    if (feat[static_cast<size_t>(t) * d_feat + k] != 0.0f) return false;
  }
  return true;
}

}  // namespace

void TrainingSample::validate() const {
  if (T < 1 || F < 1 || d_feat < 1) fail(ErrorKind::SchemaError, "bad sample dimensions");
  const auto expect = [&](size_t got, size_t want, const char* what) {
    if (got != want) fail(ErrorKind::SchemaError, std::string("sample field size: ") + what);
  };
  for (int slot = 0; slot < 2; ++slot) {
    expect(feat_hand[slot].size(), static_cast<size_t>(T) * d_feat, "hand features");
    expect(feat_object[slot].size(), static_cast<size_t>(T) * d_feat, "object features");
    expect(box_hand[slot].size(), static_cast<size_t>(T), "hand boxes");
    expect(box_object[slot].size(), static_cast<size_t>(T), "object boxes");
    expect(valid_hand[slot].size(), static_cast<size_t>(T), "hand validity");
    expect(valid_object[slot].size(), static_cast<size_t>(T), "object validity");
    for (int t = 0; t < T; ++t) {
      if (!valid_hand[slot][static_cast<size_t>(t)] &&
          !feature_block_zero(feat_hand[slot], t, d_feat))
        fail(ErrorKind::SchemaError, "invalid hand with nonzero feature");
      if (!valid_object[slot][static_cast<size_t>(t)] &&
          !feature_block_zero(feat_object[slot], t, d_feat))
        fail(ErrorKind::SchemaError, "invalid object with nonzero feature");
    }
  }
  expect(feat_global.size(), static_cast<size_t>(T) * d_feat, "global features");
  if (gt_trajectory.horizon != F || oracle_trajectory.horizon != F)
    fail(ErrorKind::SchemaError, "trajectory horizon differs from F");
}

void write_dataset(const std::string& path, const std::vector<TrainingSample>& samples) {
  const bool binary = path.size() > 5 && path.substr(path.size() - 5) == ".octd";
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path);

  if (!binary) {
    for (const auto& s : samples) {
      json rec = record_skeleton(s);
      rec["features"] = {
          {"hand", json::array({features_to_json(s.feat_hand[0], s.T, s.d_feat),
                                features_to_json(s.feat_hand[1], s.T, s.d_feat)})},
          {"object", json::array({features_to_json(s.feat_object[0], s.T, s.d_feat),
                                  features_to_json(s.feat_object[1], s.T, s.d_feat)})},
          {"global", features_to_json(s.feat_global, s.T, s.d_feat)}};
      out << rec.dump() << "\n";
    }
    if (!out) fail(ErrorKind::IOFailure, "failed writing " + path);
    return;
  }

  json manifest;
  manifest["records"] = json::array();
  uint64_t offset = 0;
  for (const auto& s : samples) {
    json rec = record_skeleton(s);
    rec["d_feat"] = s.d_feat;
    rec["feat_offset"] = offset;
    manifest["records"].push_back(std::move(rec));
    offset += static_cast<uint64_t>(5) * s.T * s.d_feat * sizeof(float);
  }
  const std::string mtext = manifest.dump();
  out.write(kMagic, sizeof(kMagic));
  const uint64_t mlen = mtext.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((mlen >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& s : samples) {
    for (const std::vector<float>* block :
         {&s.feat_hand[0], &s.feat_hand[1], &s.feat_object[0], &s.feat_object[1],
          &s.feat_global}) {
      out.write(reinterpret_cast<const char*>(block->data()),
                static_cast<std::streamsize>(block->size() * sizeof(float)));
    }
  }
  if (!out) fail(ErrorKind::IOFailure, "failed writing " + path);
}

std::vector<TrainingSample> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path);
  char magic[5] = {0, 0, 0, 0, 0};
  in.read(magic, 5);
  std::vector<TrainingSample> samples;

  if (in && std::memcmp(magic, kMagic, 5) == 0) {
    char lenbuf[8];
    in.read(lenbuf, 8);
    if (!in) fail(ErrorKind::SchemaError, "truncated dataset header");
    uint64_t mlen = 0;
    for (int i = 0; i < 8; ++i)
      mlen |= static_cast<uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!in) fail(ErrorKind::SchemaError, "truncated dataset manifest");
    const json manifest = json::parse(mtext, nullptr, false);
    if (manifest.is_discarded()) fail(ErrorKind::SchemaError, "malformed dataset manifest");
    const std::streampos payload = in.tellg();
    for (const auto& rec : manifest.at("records")) {
      TrainingSample s = sample_from_skeleton(rec);
      s.d_feat = rec.at("d_feat").get<int>();
      const uint64_t offset = rec.at("feat_offset").get<uint64_t>();
      in.seekg(payload + static_cast<std::streamoff>(offset));
      const size_t block = static_cast<size_t>(s.T) * s.d_feat;
      for (std::vector<float>* dst :
           {&s.feat_hand[0], &s.feat_hand[1], &s.feat_object[0], &s.feat_object[1],
            &s.feat_global}) {
        dst->resize(block);
        in.read(reinterpret_cast<char*>(dst->data()),
                static_cast<std::streamsize>(block * sizeof(float)));
      }
      if (!in) fail(ErrorKind::SchemaError, "truncated dataset payload");
      s.validate();
      samples.push_back(std::move(s));
    }
    return samples;
  }

  in.clear();
  in.seekg(0);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded())
      fail(ErrorKind::SchemaError, "malformed JSON at line " + std::to_string(line_no));
    try {
      TrainingSample s = sample_from_skeleton(rec);
      const json& f = rec.at("features");
      s.d_feat = static_cast<int>(f.at("global").at(0).size());
      s.feat_hand[0] = features_from_json(f.at("hand").at(0), s.T, s.d_feat);
      s.feat_hand[1] = features_from_json(f.at("hand").at(1), s.T, s.d_feat);
      s.feat_object[0] = features_from_json(f.at("object").at(0), s.T, s.d_feat);
      s.feat_object[1] = features_from_json(f.at("object").at(1), s.T, s.d_feat);
      s.feat_global = features_from_json(f.at("global"), s.T, s.d_feat);
      s.validate();
      samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaError,
           "bad dataset record at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

// ---- label formats ----

namespace {

json detections_to_json(const geom::FrameDetections& f) {
  json hands = json::array();
  for (const auto& hb : f.hand_boxes)
    hands.push_back({{"side", std::string(1, hb.side)}, {"box", box_to_json(hb.box)}});
  return json{{"frame_index", f.frame_index},
              {"hand_boxes", hands},
              {"object_boxes", boxes_to_json(f.object_boxes)},
              {"contact_candidates", points_to_json(f.contact_candidates)}};
}

geom::FrameDetections detections_from_json(const json& j) {
  geom::FrameDetections f;
  f.frame_index = j.at("frame_index").get<int>();
  for (const auto& hb : j.at("hand_boxes")) {
    const std::string side = hb.at("side").get<std::string>();
    if (side != "L" && side != "R") fail(ErrorKind::SchemaError, "hand side must be L or R");
    f.hand_boxes.push_back({side[0], box_from_json(hb.at("box"))});
  }
  for (const auto& b : j.at("object_boxes")) f.object_boxes.push_back(box_from_json(b));
  for (const auto& p : j.at("contact_candidates")) f.contact_candidates.push_back(point_from_json(p));
  return f;
}

}  // namespace

std::vector<LabelRequest> read_label_requests(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path);
  std::vector<LabelRequest> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail(ErrorKind::SchemaError, "malformed JSON at line " + std::to_string(line_no));
    try {
      LabelRequest r;
      r.clip_id = j.at("clip_id").get<std::string>();
      r.frame_size = point_from_json(j.at("frame_size"));
      for (const auto& f : j.at("future_frames")) r.future_frames.push_back(detections_from_json(f));
      for (const auto& c : j.at("correspondences")) {
        LabelRequest::PairCorrespondences pc;
        pc.from = c.at("from").get<int>();
        pc.to = c.at("to").get<int>();
        pc.points.src = points_from_json(c.at("src"));
        pc.points.dst = points_from_json(c.at("dst"));
        if (pc.points.src.size() != pc.points.dst.size())
          fail(ErrorKind::SchemaError, "src/dst length mismatch");
        r.correspondences.push_back(std::move(pc));
      }
      if (j.contains("active_object_track") && !j.at("active_object_track").is_null())
        r.object_track = points_from_json(j.at("active_object_track"));
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaError,
           "bad label request at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_label_requests(const std::string& path, const std::vector<LabelRequest>& requests) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path);
  for (const auto& r : requests) {
    json frames = json::array();
    for (const auto& f : r.future_frames) frames.push_back(detections_to_json(f));
    json pairs = json::array();
    for (const auto& c : r.correspondences)
      pairs.push_back({{"from", c.from},
                       {"to", c.to},
                       {"src", points_to_json(c.points.src)},
                       {"dst", points_to_json(c.points.dst)}});
    json j{{"clip_id", r.clip_id},
           {"frame_size", point_to_json(r.frame_size)},
           {"future_frames", frames},
           {"correspondences", pairs},
           {"active_object_track",
            r.object_track ? points_to_json(*r.object_track) : json(nullptr)}};
    out << j.dump() << "\n";
  }
  if (!out) fail(ErrorKind::IOFailure, "failed writing " + path);
}

void write_label_records(const std::string& path, const std::vector<LabelRecord>& records) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path);
  for (const auto& r : records) {
    const json j{{"clip_id", r.clip_id},
                 {"trajectory", trajectory_to_json(r.trajectory)},
                 {"contacts", points_to_json(r.contacts.points)}};
    out << j.dump() << "\n";
  }
  if (!out) fail(ErrorKind::IOFailure, "failed writing " + path);
}

std::vector<LabelRecord> read_label_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path);
  std::vector<LabelRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail(ErrorKind::SchemaError, "malformed JSON at line " + std::to_string(line_no));
    LabelRecord r;
    r.clip_id = j.at("clip_id").get<std::string>();
    r.trajectory = trajectory_from_json(j.at("trajectory"));
    r.contacts.points = points_from_json(j.at("contacts"));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace octcast::dataset

namespace octcast::dataset {

TrainingSample truncate_observation(const TrainingSample& s, int new_T) {
  if (new_T < 1 || new_T > s.T)
    fail(ErrorKind::InvalidArgument, "truncated length must be in [1, T]");
  TrainingSample out = s;
  out.T = new_T;
  const int drop = s.T - new_T;
  const size_t feat_off = static_cast<size_t>(drop) * s.d_feat;
  for (int slot = 0; slot < 2; ++slot) {
    out.feat_hand[slot].assign(s.feat_hand[slot].begin() + static_cast<long>(feat_off),
                               s.feat_hand[slot].end());
    out.feat_object[slot].assign(s.feat_object[slot].begin() + static_cast<long>(feat_off),
                                 s.feat_object[slot].end());
    out.box_hand[slot].assign(s.box_hand[slot].begin() + drop, s.box_hand[slot].end());
    out.box_object[slot].assign(s.box_object[slot].begin() + drop, s.box_object[slot].end());
    out.valid_hand[slot].assign(s.valid_hand[slot].begin() + drop, s.valid_hand[slot].end());
    out.valid_object[slot].assign(s.valid_object[slot].begin() + drop, s.valid_object[slot].end());
  }
  out.feat_global.assign(s.feat_global.begin() + static_cast<long>(feat_off),
                         s.feat_global.end());
  out.validate();
  return out;
}

}  // namespace octcast::dataset
