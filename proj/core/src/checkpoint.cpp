#include "privleak/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "privleak/error.hpp"

namespace privleak {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'L', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kParse, "checkpoint truncated");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const ModelState& model) {
  const ModelConfig& c = model.config;
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, c.vocab_size);
  put<std::uint64_t>(out, c.embed_dim);
  put<std::uint64_t>(out, c.context_window);
  put<std::uint64_t>(out, c.hidden_blocks);
  put<std::uint64_t>(out, c.hidden_dim);
  put<double>(out, c.init_scale);
  put<std::uint64_t>(out, c.init_seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.tensors.size()));
  for (const auto& t : model.params.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint64_t>(out, t.layer);
    put<std::uint64_t>(out, t.value.rows);
    put<std::uint64_t>(out, t.value.cols);
    out.append(reinterpret_cast<const char*>(t.value.data.data()),
               t.value.data.size() * sizeof(double));
  }
  return out;
}

ModelState deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw Error(ErrorCode::kParse, "not a checkpoint (bad magic)");
  }
  if (r.get<std::uint32_t>() != kVersion) {
    throw Error(ErrorCode::kParse, "unsupported checkpoint version");
  }
  ModelState model;
  ModelConfig& c = model.config;
  c.vocab_size = r.get<std::uint64_t>();
  c.embed_dim = r.get<std::uint64_t>();
  c.context_window = r.get<std::uint64_t>();
  c.hidden_blocks = r.get<std::uint64_t>();
  c.hidden_dim = r.get<std::uint64_t>();
  c.init_scale = r.get<double>();
  c.init_seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = std::string(r.take(r.get<std::uint32_t>()));
    t.layer = r.get<std::uint64_t>();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    t.value = Matrix(rows, cols);
    auto raw = r.take(rows * cols * sizeof(double));
    std::memcpy(t.value.data.data(), raw.data(), raw.size());
    model.params.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw Error(ErrorCode::kParse, "trailing bytes in checkpoint");

  // Shapes must agree with a model freshly built from the stored config.
  c.validate();
  const ModelState reference = init_model([&] {
    ModelConfig z = c;
    z.init_scale = 0.0;
    return z;
  }());
  if (reference.params.tensors.size() != model.params.tensors.size()) {
    throw Error(ErrorCode::kParse, "checkpoint tensor count does not match config");
  }
  for (std::size_t i = 0; i < model.params.tensors.size(); ++i) {
    const auto& a = reference.params.tensors[i];
    const auto& b = model.params.tensors[i];
    if (a.name != b.name || a.layer != b.layer || a.value.rows != b.value.rows ||
        a.value.cols != b.value.cols) {
      throw Error(ErrorCode::kParse, "checkpoint tensor '" + b.name +
                                         "' does not match config");
    }
  }
  return model;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string model_hash(const ModelState& model) {
  return sha256_hex(serialize_model(model));
}

}  // namespace privleak
