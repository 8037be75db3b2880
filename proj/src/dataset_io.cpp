#include "gemini/dataset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gemini/error.hpp"

namespace gemini {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume little endian");

namespace {

constexpr char kFeatureMagic[4] = {'G', 'F', 'E', 'A'};
constexpr char kTensorMagic[4] = {'G', 'T', 'N', 'S'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const fs::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated file " + path.string());
  return v;
}

void put_f32(std::ostream& os, const Tensor& t) {
  std::vector<float> buf(t.size());
  for (size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void get_f32(std::istream& is, Tensor& t, const fs::path& path) {
  std::vector<float> buf(t.size());
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw FormatError("truncated tensor data in " + path.string());
  }
  for (size_t i = 0; i < t.size(); ++i) t[i] = buf[i];
}

void check_magic(std::istream& is, const char (&magic)[4], const fs::path& path) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0) throw FormatError("bad magic in " + path.string());
  const auto version = get<uint32_t>(is, path);
  if (version != kSchemaVersion) {
    throw FormatError("unsupported schema version " + std::to_string(version) + " in " + path.string());
  }
}

void write_features(const Video& v, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write(kFeatureMagic, 4);
  put<uint32_t>(os, kSchemaVersion);
  put<uint32_t>(os, static_cast<uint32_t>(v.spatial_features.dim(1)));
  put<uint32_t>(os, static_cast<uint32_t>(v.spatial_features.dim(0)));
  put_f32(os, v.spatial_features);
  put_f32(os, v.temporal_features);
}

void read_features(Video& v, const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("missing feature file " + path.string());
  check_magic(is, kFeatureMagic, path);
  const auto d = static_cast<int>(get<uint32_t>(is, path));
  const auto units = static_cast<int>(get<uint32_t>(is, path));
  v.spatial_features = Tensor({units, d});
  v.temporal_features = Tensor({units, d});
  get_f32(is, v.spatial_features, path);
  get_f32(is, v.temporal_features, path);
}

void write_tensor(const Tensor& t, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write(kTensorMagic, 4);
  put<uint32_t>(os, kSchemaVersion);
  put<uint32_t>(os, static_cast<uint32_t>(t.rank()));
  for (int dim : t.shape()) put<uint32_t>(os, static_cast<uint32_t>(dim));
  put_f32(os, t);
}

Tensor read_tensor(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("missing tensor file " + path.string());
  check_magic(is, kTensorMagic, path);
  const auto rank = get<uint32_t>(is, path);
  std::vector<int> shape;
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get<uint32_t>(is, path)));
  Tensor t(shape);
  get_f32(is, t, path);
  return t;
}

void check_schema(const nlohmann::json& j, const std::string& what) {
  if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion) {
    throw FormatError(what + ": missing or unsupported schema_version");
  }
}

class Fnv {
 public:
  void bytes(const void* p, size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(T v) {
    bytes(&v, sizeof(T));
  }
  void text(const std::string& s) {
    value<uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    for (int d : t.shape()) value<int32_t>(d);
    bytes(t.data(), t.size() * sizeof(double));
  }
  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

nlohmann::json annotations_to_json(const Dataset& data) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : data.videos) {
    nlohmann::json inst = nlohmann::json::array();
    for (const auto& g : v.instances) {
      inst.push_back({{"class", g.class_id}, {"start", g.interval.start()}, {"end", g.interval.end()}});
    }
    videos.push_back({{"video_id", v.id}, {"frames", v.frames}, {"fps", v.fps}, {"split", v.split},
                      {"instances", inst}});
  }
  return {{"schema_version", kSchemaVersion}, {"videos", videos}};
}

std::vector<Video> videos_from_annotations(const nlohmann::json& j) {
  check_schema(j, "annotations");
  std::vector<Video> out;
  for (const auto& jv : j.at("videos")) {
    Video v;
    v.id = jv.at("video_id").get<std::string>();
    v.frames = jv.at("frames").get<int64_t>();
    v.fps = jv.at("fps").get<double>();
    v.split = jv.value("split", std::string("test"));
    if (v.frames < 1) throw FormatError("video " + v.id + " has no frames");
    for (const auto& ji : jv.at("instances")) {
      GroundTruth g{TemporalInterval(ji.at("start").get<int64_t>(), ji.at("end").get<int64_t>()),
                    ji.at("class").get<int>()};
      if (g.interval.end() > v.frames) throw FormatError("instance beyond the end of video " + v.id);
      if (g.class_id < 1) throw FormatError("class ids are 1-based in video " + v.id);
      v.instances.push_back(g);
    }
    out.push_back(std::move(v));
  }
  return out;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "annotations.json", annotations_to_json(data).dump(1) + "\n");
  const nlohmann::json meta = {{"schema_version", kSchemaVersion},
                               {"mode", data.mode == BackboneMode::kPixel ? "pixel" : "feature"},
                               {"unit_length", data.unit_length},
                               {"feature_dim", data.feature_dim},
                               {"num_classes", data.num_classes},
                               {"resolution", {data.height, data.width}}};
  write_text(dir / "dataset.json", meta.dump(1) + "\n");
  nlohmann::json act = {{"schema_version", kSchemaVersion}, {"videos", nlohmann::json::object()}};
  for (const auto& v : data.videos) act["videos"][v.id] = v.actionness;
  write_text(dir / "actionness.json", act.dump() + "\n");
  if (data.mode == BackboneMode::kFeature) {
    fs::create_directories(dir / "features");
    for (const auto& v : data.videos) write_features(v, dir / "features" / (v.id + ".feat"));
  } else {
    fs::create_directories(dir / "pixels");
    for (const auto& v : data.videos) {
      write_tensor(v.rgb, dir / "pixels" / (v.id + ".frames.gtns"));
      write_tensor(v.flow, dir / "pixels" / (v.id + ".flow.gtns"));
    }
  }
}

Dataset load_dataset(const fs::path& dir) {
  const auto meta = read_json(dir / "dataset.json");
  check_schema(meta, "dataset.json");
  Dataset data;
  data.mode = meta.at("mode").get<std::string>() == "pixel" ? BackboneMode::kPixel : BackboneMode::kFeature;
  data.unit_length = meta.at("unit_length").get<int>();
  data.feature_dim = meta.at("feature_dim").get<int>();
  data.num_classes = meta.at("num_classes").get<int>();
  data.height = meta.at("resolution").at(0).get<int>();
  data.width = meta.at("resolution").at(1).get<int>();
  data.videos = videos_from_annotations(read_json(dir / "annotations.json"));
  const auto act = read_json(dir / "actionness.json");
  check_schema(act, "actionness.json");
  for (auto& v : data.videos) {
    v.actionness = act.at("videos").at(v.id).get<std::vector<double>>();
    if (static_cast<int64_t>(v.actionness.size()) != data.unit_count(v)) {
      throw FormatError("actionness length does not match the unit count of " + v.id);
    }
    if (data.mode == BackboneMode::kFeature) {
      read_features(v, dir / "features" / (v.id + ".feat"));
      if (v.spatial_features.dim(1) != data.feature_dim ||
          v.spatial_features.dim(0) != data.unit_count(v)) {
        throw FormatError("feature file shape does not match " + v.id);
      }
    } else {
      v.rgb = read_tensor(dir / "pixels" / (v.id + ".frames.gtns"));
      v.flow = read_tensor(dir / "pixels" / (v.id + ".flow.gtns"));
    }
  }
  return data;
}

uint64_t dataset_fingerprint(const Dataset& data) {
  Fnv h;
  h.value<int32_t>(data.mode == BackboneMode::kPixel ? 1 : 0);
  h.value<int32_t>(data.unit_length);
  h.value<int32_t>(data.feature_dim);
  h.value<int32_t>(data.num_classes);
  for (const auto& v : data.videos) {
    h.text(v.id);
    h.text(v.split);
    h.value(v.frames);
    h.value(v.fps);
    for (const auto& g : v.instances) {
      h.value(g.interval.start());
      h.value(g.interval.end());
      h.value<int32_t>(g.class_id);
    }
    h.bytes(v.actionness.data(), v.actionness.size() * sizeof(double));
    h.tensor(v.spatial_features);
    h.tensor(v.temporal_features);
    h.tensor(v.rgb);
    h.tensor(v.flow);
  }
  return h.digest();
}

void write_detections(const std::vector<Detection>& detections, const fs::path& path) {
  std::ostringstream os;
  for (const auto& d : detections) {
    nlohmann::json j = {{"schema_version", kSchemaVersion},
                        {"video_id", d.video_id},
                        {"class", d.class_id},
                        {"start", d.interval.start()},
                        {"end", d.interval.end()},
                        {"score_a", d.action_score},
                        {"score_i", d.tiou_score},
                        {"score_s", d.combined_score}};
    os << j.dump() << '\n';
  }
  write_text(path, os.str());
}

std::vector<Detection> read_detections(const fs::path& path) {
  std::istringstream is(read_text(path));
  std::vector<Detection> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection d = Detection::make(j.at("video_id").get<std::string>(),
                                    TemporalInterval(j.at("start").get<int64_t>(), j.at("end").get<int64_t>()),
                                    j.at("class").get<int>(), j.at("score_a").get<double>(),
                                    j.at("score_i").get<double>());
      // Keep the stored combined score so files round-trip without recomputation drift.
      d.combined_score = j.at("score_s").get<double>();
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_metrics_csv(const EvaluationResult& result, const fs::path& path) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "row";
  for (double t : result.thresholds) os << ",tIoU=" << std::setprecision(2) << t << std::setprecision(6);
  os << '\n';
  for (const auto& [cls, aps] : result.class_ap) {
    os << "class_" << cls;
    for (double ap : aps) os << ',' << ap;
    os << '\n';
  }
  os << "mAP";
  for (double m : result.map) os << ',' << m;
  os << '\n';
  os << "average_mAP," << result.average_map << '\n';
  write_text(path, os.str());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
  if (!os) throw FormatError("write failed for " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string hex64(uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

}  // namespace gemini
