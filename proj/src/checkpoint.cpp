#include "prn/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>
#include <set>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace prn {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'N', 'C', 'K', 'P', 'T', '\x01'};
constexpr int kFormatVersion = 1;

std::uint32_t blob_crc32(const std::vector<float>& blob) {
  uLong crc = crc32(0L, Z_NULL, 0);
  if (!blob.empty())
    crc = crc32(crc, reinterpret_cast<const Bytef*>(blob.data()),
                static_cast<uInt>(blob.size() * sizeof(float)));
  return static_cast<std::uint32_t>(crc);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<ParamRef<float>>& arrays,
                     const std::string& config_json) {
  std::vector<const ParamRef<float>*> ordered;
  ordered.reserve(arrays.size());
  for (const auto& a : arrays) ordered.push_back(&a);
  std::sort(ordered.begin(), ordered.end(),
            [](const ParamRef<float>* a, const ParamRef<float>* b) { return a->name < b->name; });
  std::set<std::string> names;
  for (const auto* a : ordered)
    if (!names.insert(a->name).second)
      throw CheckpointError("save_checkpoint: duplicate array name '" + a->name + "'");

  std::vector<float> blob;
  nlohmann::json manifest_arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto* a : ordered) {
    const std::uint64_t nbytes = static_cast<std::uint64_t>(a->size) * sizeof(float);
    nlohmann::json rec;
    rec["name"] = a->name;
    rec["shape"] = a->shape;
    rec["dtype"] = "float32";
    rec["byte_order"] = "little";
    rec["offset"] = offset;
    rec["nbytes"] = nbytes;
    manifest_arrays.push_back(std::move(rec));
    blob.insert(blob.end(), a->value, a->value + a->size);
    offset += nbytes;
  }

  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["arrays"] = std::move(manifest_arrays);
  manifest["config"] =
      config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
  manifest["blob_crc32"] = blob_crc32(blob);
  const std::string text = manifest.dump();

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw CheckpointError("save_checkpoint: cannot open " + path + " for writing");
  const std::uint64_t manifest_size = text.size();
  if (std::fwrite(kMagic, 1, sizeof(kMagic), f.get()) != sizeof(kMagic) ||
      std::fwrite(&manifest_size, sizeof(manifest_size), 1, f.get()) != 1 ||
      (!text.empty() && std::fwrite(text.data(), 1, text.size(), f.get()) != text.size()) ||
      (!blob.empty() &&
       std::fwrite(blob.data(), sizeof(float), blob.size(), f.get()) != blob.size()))
    throw CheckpointError("save_checkpoint: short write to " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw CheckpointError("load_checkpoint: cannot open " + path);

  char magic[8];
  if (std::fread(magic, 1, sizeof(magic), f.get()) != sizeof(magic))
    throw CheckpointError("load_checkpoint: " + path + " is too short for a container header");
  if (std::memcmp(magic, kMagic, 7) != 0)
    throw CheckpointError("load_checkpoint: " + path + " is not a checkpoint container");
  if (magic[7] != kMagic[7])
    throw CheckpointError("load_checkpoint: container version " +
                          std::to_string(static_cast<int>(magic[7])) +
                          " is not supported (expected " +
                          std::to_string(static_cast<int>(kMagic[7])) +
                          "); no migration path exists");

  std::uint64_t manifest_size = 0;
  if (std::fread(&manifest_size, sizeof(manifest_size), 1, f.get()) != 1)
    throw CheckpointError("load_checkpoint: truncated manifest length in " + path);
  std::string text(manifest_size, '\0');
  if (manifest_size > 0 && std::fread(text.data(), 1, manifest_size, f.get()) != manifest_size)
    throw CheckpointError("load_checkpoint: truncated manifest in " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("load_checkpoint: malformed manifest in " + path + ": " + e.what());
  }
  if (!manifest.contains("format_version") || !manifest["format_version"].is_number_integer())
    throw CheckpointError("load_checkpoint: manifest lacks format_version in " + path);
  if (manifest["format_version"].get<int>() != kFormatVersion)
    throw CheckpointError("load_checkpoint: manifest format_version " +
                          manifest["format_version"].dump() + " is not supported (expected " +
                          std::to_string(kFormatVersion) + "); no migration path exists");

  CheckpointData data;
  std::uint64_t total_bytes = 0;
  for (const auto& rec : manifest.at("arrays")) {
    ArrayRecord a;
    a.name = rec.at("name").get<std::string>();
    a.shape = rec.at("shape").get<std::vector<Eigen::Index>>();
    a.offset = rec.at("offset").get<std::uint64_t>();
    a.nbytes = rec.at("nbytes").get<std::uint64_t>();
    if (rec.at("dtype").get<std::string>() != "float32")
      throw CheckpointError("load_checkpoint: array '" + a.name + "' has unsupported dtype " +
                            rec.at("dtype").dump());
    if (rec.at("byte_order").get<std::string>() != "little")
      throw CheckpointError("load_checkpoint: array '" + a.name + "' has unsupported byte order");
    if (a.offset != total_bytes || a.nbytes % sizeof(float) != 0)
      throw CheckpointError("load_checkpoint: array '" + a.name + "' has an inconsistent layout");
    total_bytes += a.nbytes;
    data.arrays.push_back(std::move(a));
  }

  data.blob.resize(total_bytes / sizeof(float));
  if (!data.blob.empty() &&
      std::fread(data.blob.data(), 1, total_bytes, f.get()) != total_bytes)
    throw CheckpointError("load_checkpoint: truncated blob section in " + path);
  char extra;
  if (std::fread(&extra, 1, 1, f.get()) == 1)
    throw CheckpointError("load_checkpoint: trailing bytes after blob section in " + path);

  const std::uint32_t expect = manifest.at("blob_crc32").get<std::uint32_t>();
  const std::uint32_t actual = blob_crc32(data.blob);
  if (expect != actual)
    throw CheckpointError("load_checkpoint: blob checksum mismatch in " + path + " (manifest " +
                          std::to_string(expect) + ", data " + std::to_string(actual) + ")");

  data.config_json = manifest.at("config").dump();
  return data;
}

void restore_arrays(const CheckpointData& data, const std::vector<ParamRef<float>>& arrays) {
  for (const auto& live : arrays) {
    const auto it = std::find_if(data.arrays.begin(), data.arrays.end(),
                                 [&](const ArrayRecord& a) { return a.name == live.name; });
    if (it == data.arrays.end())
      throw CheckpointError("restore_arrays: checkpoint is missing array '" + live.name + "'");
    if (it->shape != live.shape)
      throw CheckpointError("restore_arrays: shape mismatch for array '" + live.name + "'");
    if (it->nbytes != static_cast<std::uint64_t>(live.size) * sizeof(float))
      throw CheckpointError("restore_arrays: size mismatch for array '" + live.name + "'");
    std::memcpy(live.value, data.blob.data() + it->offset / sizeof(float), it->nbytes);
  }
}

}  // namespace prn
