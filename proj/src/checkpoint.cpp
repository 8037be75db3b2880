#include "gemini/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "gemini/dataset_io.hpp"
#include "gemini/error.hpp"

namespace gemini {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'G', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw CheckpointError("missing checkpoint " + path.string());
  }

  template <typename T>
  T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }

  std::string get_string() {
    const auto n = get<uint32_t>();
    if (n > (1u << 20)) throw CheckpointError("corrupt string in " + path_.string());
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(void* dst, size_t n) {
    if (!is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
      throw CheckpointError("truncated checkpoint " + path_.string());
    }
  }

 private:
  fs::path path_;
  std::ifstream is_;
};

CheckpointInfo read_header(Reader& r, const fs::path& path) {
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint: " + path.string());
  const auto version = r.get<uint32_t>();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  CheckpointInfo info;
  info.config_hash = r.get<uint64_t>();
  info.phase = r.get_string();
  info.iteration = r.get<int64_t>();
  return info;
}

}  // namespace

void save_checkpoint(const fs::path& path, GeminiModel& model, const std::string& phase,
                     int64_t iteration) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os.write(kMagic, 4);
  put<uint32_t>(os, kVersion);
  put<uint64_t>(os, config_hash(model.config()));
  put_string(os, phase);
  put<int64_t>(os, iteration);
  const auto params = model.parameters();
  put<uint32_t>(os, static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_string(os, p->name);
    put<uint32_t>(os, static_cast<uint32_t>(p->value.rank()));
    for (int d : p->value.shape()) put<uint32_t>(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  Reader r(path);
  return read_header(r, path);
}

CheckpointInfo load_checkpoint(const fs::path& path, GeminiModel& model) {
  Reader r(path);
  const CheckpointInfo info = read_header(r, path);
  const uint64_t expected = config_hash(model.config());
  if (info.config_hash != expected) {
    throw CheckpointError("config hash mismatch: checkpoint " + hex64(info.config_hash) + ", model " +
                          hex64(expected));
  }
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : model.parameters()) by_name[p->name] = p;
  const auto count = r.get<uint32_t>();
  if (count != by_name.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(by_name.size()));
  }
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("unknown tensor " + name);
    const auto rank = r.get<uint32_t>();
    std::vector<int> shape;
    for (uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.get<uint32_t>()));
    Parameter& p = *it->second;
    if (shape != p.value.shape()) throw CheckpointError("shape mismatch for tensor " + name);
    r.read(p.value.data(), p.value.size() * sizeof(double));
  }
  return info;
}

}  // namespace gemini
