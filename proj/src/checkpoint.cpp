#include "swp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace swp {

using nlohmann::json;

namespace {

std::string blob_path_for(const std::string& manifest_path) {
  const std::string suffix = ".json";
  if (manifest_path.size() > suffix.size() &&
      manifest_path.compare(manifest_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return manifest_path.substr(0, manifest_path.size() - suffix.size()) + ".bin";
  return manifest_path + ".bin";
}

std::string basename_of(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

std::string dirname_of(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

void put_le32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_tensors(const std::string& manifest_path, const std::vector<NamedTensorF>& tensors) {
  const std::string blob_path = blob_path_for(manifest_path);
  std::string blob;
  json manifest;
  manifest["format"] = "swp-checkpoint-v1";
  manifest["blob"] = basename_of(blob_path);
  json list = json::array();
  for (const NamedTensorF& t : tensors) {
    json entry;
    entry["name"] = t.name;
    entry["shape"] = t.value.shape;
    entry["dtype"] = "f32";
    entry["offset_bytes"] = blob.size();
    for (float v : t.value.data) put_le32(blob, std::bit_cast<std::uint32_t>(v));
    list.push_back(entry);
  }
  manifest["tensors"] = list;
  manifest["total_bytes"] = blob.size();

  std::ofstream mf(manifest_path);
  require(mf.good(), ErrorKind::Io, "cannot write checkpoint manifest '" + manifest_path + "'");
  mf << manifest.dump(2) << "\n";
  require(mf.good(), ErrorKind::Io, "write failed for '" + manifest_path + "'");
  std::ofstream bf(blob_path, std::ios::binary);
  require(bf.good(), ErrorKind::Io, "cannot write checkpoint blob '" + blob_path + "'");
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  require(bf.good(), ErrorKind::Io, "write failed for '" + blob_path + "'");
}

std::vector<NamedTensorF> load_tensors(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  require(mf.good(), ErrorKind::Io, "cannot open checkpoint manifest '" + manifest_path + "'");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "bad checkpoint manifest '" + manifest_path + "': " + e.what());
  }
  require(manifest.value("format", "") == "swp-checkpoint-v1", ErrorKind::Config,
          "unrecognized checkpoint format in '" + manifest_path + "'");
  const std::string blob_path = dirname_of(manifest_path) + "/" + manifest.at("blob").get<std::string>();
  std::ifstream bf(blob_path, std::ios::binary);
  require(bf.good(), ErrorKind::Io, "cannot open checkpoint blob '" + blob_path + "'");
  std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  require(blob.size() == manifest.at("total_bytes").get<std::size_t>(), ErrorKind::Config,
          "checkpoint blob size mismatch for '" + blob_path + "'");

  std::vector<NamedTensorF> out;
  for (const json& entry : manifest.at("tensors")) {
    NamedTensorF t;
    t.name = entry.at("name").get<std::string>();
    require(entry.at("dtype").get<std::string>() == "f32", ErrorKind::Config,
            "unsupported dtype for tensor '" + t.name + "'");
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset_bytes").get<std::size_t>();
    t.value = Tensor<float>(shape);
    require(offset + 4 * t.value.numel() <= blob.size(), ErrorKind::Config,
            "checkpoint tensor '" + t.name + "' runs past the blob");
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
    for (std::size_t i = 0; i < t.value.numel(); ++i)
      t.value.data[i] = std::bit_cast<float>(get_le32(p + 4 * i));
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::string& manifest_path, SupernetParams<float>& params) {
  std::vector<NamedTensorF> tensors;
  for (Param<float>* p : params.all_params()) tensors.push_back({p->name, p->value});
  save_tensors(manifest_path, tensors);
}

void load_checkpoint(const std::string& manifest_path, SupernetParams<float>& params) {
  auto tensors = load_tensors(manifest_path);
  std::map<std::string, Tensor<float>*> by_name;
  for (NamedTensorF& t : tensors) by_name[t.name] = &t.value;
  auto targets = params.all_params();
  require(by_name.size() == targets.size(), ErrorKind::Config,
          "checkpoint has " + std::to_string(by_name.size()) + " tensors, network expects " +
              std::to_string(targets.size()));
  for (Param<float>* p : targets) {
    auto it = by_name.find(p->name);
    require(it != by_name.end(), ErrorKind::Config,
            "checkpoint is missing tensor '" + p->name + "'");
    require(it->second->shape == p->value.shape, ErrorKind::Config,
            "checkpoint tensor '" + p->name + "' has shape " + it->second->shape_str() +
                ", network expects " + p->value.shape_str());
    p->value = *it->second;
  }
}

}  // namespace swp
