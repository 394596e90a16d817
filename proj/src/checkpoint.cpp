#include "unitst/checkpoint.hpp"

#include "unitst/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace unitst {

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'T', 'S', 'T', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw CheckpointError("checkpoint truncated");
  return v;
}

void read_tensors(std::istream& is, const std::filesystem::path& path, const nlohmann::json& header, Checkpoint& ck);

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, const Mat*>> tensors;
  for (const auto& t : named_parameters(ckpt.params)) tensors.emplace_back(t.name, t.tensor);
  for (const auto& t : named_buffers(ckpt.params)) tensors.emplace_back(t.name, t.tensor);
  Mat scaler_mean, scaler_std;
  if (ckpt.scaler) {
    scaler_mean = Mat(ckpt.scaler->mean.transpose());
    scaler_std = Mat(ckpt.scaler->std.transpose());
    tensors.emplace_back("scaler.mean", &scaler_mean);
    tensors.emplace_back("scaler.std", &scaler_std);
  }

  nlohmann::json header;
  header["format"] = "unitst-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = to_json(ckpt.params.config);
  header["metadata"] = ckpt.metadata;
  auto& list = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : tensors) list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  os.write(kMagic, sizeof kMagic);
  write_pod(os, kCheckpointVersion);
  write_pod(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : tensors) {
    os.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("error writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError(path.string() + ": not a checkpoint");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = read_pod<std::uint64_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointError("checkpoint truncated");
  Checkpoint ck;
  try {
    read_tensors(is, path, nlohmann::json::parse(text), ck);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  return ck;
}

namespace {

void read_tensors(std::istream& is, const std::filesystem::path& path, const nlohmann::json& header, Checkpoint& ck) {
  ck.params = init_params(model_config_from_json(header.at("config")), 0);
  ck.metadata = header.value("metadata", nlohmann::json::object());
  std::map<std::string, Mat*> slots;
  for (auto& t : named_parameters(ck.params)) slots[t.name] = t.tensor;
  for (auto& t : named_buffers(ck.params)) slots[t.name] = t.tensor;
  Mat scaler_mean, scaler_std;
  slots["scaler.mean"] = &scaler_mean;
  slots["scaler.std"] = &scaler_std;

  std::size_t filled = 0;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError(path.string() + ": unexpected tensor '" + name + "'");
    Mat& m = *it->second;
    if (name.rfind("scaler.", 0) != 0) {
      if (m.rows() != rows || m.cols() != cols) throw CheckpointError(path.string() + ": shape mismatch for '" + name + "'");
      ++filled;
    }
    m.resize(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
  }
  if (filled != slots.size() - 2) throw CheckpointError(path.string() + ": checkpoint is missing tensors");
  if (scaler_mean.size() > 0) {
    ck.scaler = GlobalScaler{Vec(scaler_mean.transpose()), Vec(scaler_std.transpose())};
  }
}

}  // namespace

}  // namespace unitst
