#include "points/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace points::tensorio {

namespace {

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kTruncated: return "truncated file";
    case ErrorKind::kBadHeader: return "malformed header";
    case ErrorKind::kUnknownDtype: return "unknown dtype";
    case ErrorKind::kShapeMismatch: return "shape/nbytes mismatch";
    case ErrorKind::kOverlap: return "overlapping tensor regions";
    case ErrorKind::kLengthMismatch: return "header/data length mismatch";
  }
  return "container error";
}

std::vector<std::uint8_t> serialize_container(const TensorMap& tensors) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {  // std::map: lexicographic
    for (std::int64_t d : tensor.shape)
      if (d < 0)
        throw std::invalid_argument("tensor \"" + name +
                                    "\" has a negative shape dimension");
    const auto count = static_cast<std::uint64_t>(tensor.element_count());
    if (tensor.data.size() != count)
      throw std::invalid_argument("tensor \"" + name +
                                  "\" data length does not match its shape");
    for (double v : tensor.data)
      if (!std::isfinite(v))
        throw std::invalid_argument("tensor \"" + name +
                                    "\" contains non-finite values");
    const std::uint64_t nbytes = count * 4;
    header[name] = {{"dtype", "f32"},
                    {"shape", tensor.shape},
                    {"offset", offset},
                    {"nbytes", nbytes}};
    offset += nbytes;
  }

  const std::string header_str = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + header_str.size() + offset);
  std::uint64_t hlen = header_str.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((hlen >> (8 * i)) & 0xFF));
  out.insert(out.end(), header_str.begin(), header_str.end());
  for (const auto& [name, tensor] : tensors)
    for (double v : tensor.data)
      append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

TensorMap parse_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8)
    throw ContainerError(ErrorKind::kTruncated,
                         "file too short for the 8-byte header length");
  const std::uint64_t hlen = read_u64_le(bytes.data());
  if (bytes.size() < 8 + hlen)
    throw ContainerError(ErrorKind::kTruncated,
                         "header extends past the end of the file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8,
                                   bytes.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(ErrorKind::kBadHeader, e.what());
  }
  if (!header.is_object())
    throw ContainerError(ErrorKind::kBadHeader, "header is not a JSON object");

  const std::uint64_t data_size = bytes.size() - 8 - hlen;
  const std::uint8_t* data = bytes.data() + 8 + hlen;

  struct Region {
    std::string name;
    std::uint64_t offset, nbytes;
  };
  std::vector<Region> regions;

  TensorMap tensors;
  for (const auto& [name, meta] : header.items()) {
    if (!meta.is_object() || !meta.contains("dtype") || !meta.contains("shape") ||
        !meta.contains("offset") || !meta.contains("nbytes"))
      throw ContainerError(ErrorKind::kBadHeader,
                           "tensor \"" + name + "\" entry is incomplete");
    if (meta["dtype"] != "f32")
      throw ContainerError(ErrorKind::kUnknownDtype,
                           "tensor \"" + name + "\" has dtype " +
                               meta["dtype"].dump());
    Tensor t;
    t.shape = meta["shape"].get<std::vector<std::int64_t>>();
    for (std::int64_t d : t.shape)
      if (d < 0)
        throw ContainerError(ErrorKind::kBadHeader,
                             "tensor \"" + name + "\" has a negative dimension");
    const auto offset = meta["offset"].get<std::uint64_t>();
    const auto nbytes = meta["nbytes"].get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(t.element_count()) * 4)
      throw ContainerError(ErrorKind::kShapeMismatch,
                           "tensor \"" + name + "\" declares " +
                               std::to_string(nbytes) +
                               " bytes but its shape needs " +
                               std::to_string(t.element_count() * 4));
    if (offset + nbytes > data_size)
      throw ContainerError(ErrorKind::kTruncated,
                           "tensor \"" + name + "\" region [" +
                               std::to_string(offset) + ", " +
                               std::to_string(offset + nbytes) +
                               ") runs past the data region of " +
                               std::to_string(data_size) + " bytes");
    regions.push_back({name, offset, nbytes});

    t.data.reserve(static_cast<std::size_t>(t.element_count()));
    for (std::uint64_t i = 0; i < nbytes; i += 4)
      t.data.push_back(static_cast<double>(
          std::bit_cast<float>(read_u32_le(data + offset + i))));
    tensors.emplace(name, std::move(t));
  }

  std::sort(regions.begin(), regions.end(),
            [](const Region& a, const Region& b) { return a.offset < b.offset; });
  std::uint64_t end = 0;
  for (const Region& r : regions) {
    if (r.offset < end)
      throw ContainerError(ErrorKind::kOverlap,
                           "tensor \"" + r.name + "\" overlaps the previous region");
    end = r.offset + r.nbytes;
  }
  if (data_size != end)
    throw ContainerError(ErrorKind::kLengthMismatch,
                         "data region holds " + std::to_string(data_size) +
                             " bytes but the header accounts for " +
                             std::to_string(end));
  return tensors;
}

void write_container(const TensorMap& tensors,
                     const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_container(tensors);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorMap read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open container: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

}  // namespace points::tensorio
