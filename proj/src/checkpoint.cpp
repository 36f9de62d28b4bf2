#include "mapgo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "mapgo/errors.hpp"

namespace mapgo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'A', 'P', 'G', 'O', 'C', 'K', 'P'};

std::string sha256_raw(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  return {reinterpret_cast<const char*>(md), len};
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  std::size_t end;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > end) throw CorruptCheckpoint("truncated checkpoint");
    T v;
    std::memcpy(&v, s.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos + n > end) throw CorruptCheckpoint("truncated checkpoint");
    std::string out = s.substr(pos, n);
    pos += n;
    return out;
  }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : sha256_raw(bytes)) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    out.append(reinterpret_cast<const char*>(t.value.data()), sizeof(double) * t.value.size());
  }
  out += sha256_raw(out);
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 + 32) throw CorruptCheckpoint("checkpoint too short");
  const std::size_t body = bytes.size() - 32;
  if (sha256_raw(bytes.substr(0, body)) != bytes.substr(body)) throw CorruptCheckpoint("checkpoint hash mismatch");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CorruptCheckpoint("not a checkpoint file");
  Reader r{bytes, sizeof kMagic, body};
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.bytes(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    const std::string payload = r.bytes(sizeof(double) * static_cast<std::size_t>(rows) * cols);
    t.value.resize(rows, cols);
    std::memcpy(t.value.data(), payload.data(), payload.size());
    out.push_back(std::move(t));
  }
  if (r.pos != body) throw CorruptCheckpoint("trailing bytes in checkpoint");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<ad::Parameter*>& params) {
  std::vector<NamedTensor> tensors;
  for (const auto* p : params) tensors.push_back({p->name, p->value});
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const std::vector<ad::Parameter*>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  std::map<std::string, ad::Mat> by_name;
  for (auto& t : decode_checkpoint(ss.str())) by_name.emplace(t.name, std::move(t.value));
  for (auto* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CorruptCheckpoint("checkpoint lacks tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw CorruptCheckpoint("shape mismatch for tensor " + p->name);
    p->value = it->second;
    p->zero_grad();
  }
}

}  // namespace mapgo
