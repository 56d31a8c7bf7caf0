#include "kgf/lm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace kgf::lm {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'K', 'G', 'F', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  std::string buf;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : buf(b), end_(end) {}
  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void need(std::size_t n) const {
    if (pos + n > end_) throw CheckpointError("checkpoint truncated");
  }
  const std::string& buf;
  std::size_t pos = 0;

 private:
  std::size_t end_;
};

void write_directory(Writer& w, const ParamSet<float>& ps) {
  for (const auto& s : ps.specs) {
    w.put(static_cast<std::uint16_t>(s.name.size()));
    w.put_bytes(s.name.data(), s.name.size());
    w.put(static_cast<std::uint32_t>(s.rows));
    w.put(static_cast<std::uint32_t>(s.cols));
  }
}

void read_directory(Reader& r, const ParamSet<float>& expected, std::uint32_t count) {
  if (count != expected.specs.size()) throw CheckpointError("tensor directory does not match the config");
  for (const auto& s : expected.specs) {
    const auto len = r.get<std::uint16_t>();
    const std::string name = r.get_string(len);
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (name != s.name || rows != s.rows || cols != s.cols) {
      throw CheckpointError("unexpected tensor '" + name + "' in directory");
    }
  }
}

}  // namespace

std::string serialize_checkpoint(const Model<float>& model) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  const auto& c = model.config();
  for (int v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_seq_len}) {
    w.put(static_cast<std::int32_t>(v));
  }
  w.put(static_cast<std::uint64_t>(c.seed));
  w.put(static_cast<std::uint8_t>(model.has_adapters()));
  if (model.has_adapters()) {
    const auto& l = model.lora_config();
    w.put(static_cast<std::int32_t>(l.rank));
    w.put(l.alpha);
    w.put(l.dropout);
  }
  const auto& base = model.params();
  std::uint32_t count = static_cast<std::uint32_t>(base.specs.size());
  if (model.has_adapters()) count += static_cast<std::uint32_t>(model.adapter_params().specs.size());
  w.put(count);
  write_directory(w, base);
  if (model.has_adapters()) write_directory(w, model.adapter_params());
  w.put_bytes(base.data.data(), base.data.size() * sizeof(float));
  if (model.has_adapters()) {
    const auto& a = model.adapter_params();
    w.put_bytes(a.data.data(), a.data.size() * sizeof(float));
  }
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(w.buf.data()), static_cast<uInt>(w.buf.size())));
  w.put(crc);
  return std::move(w.buf);
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(buf);
}

Model<float> deserialize_checkpoint(const std::string& buf) {
  if (buf.size() < sizeof kMagic + 8) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("bad checkpoint magic");
  Reader r(buf, buf.size() - sizeof(std::uint32_t));
  r.pos = sizeof kMagic;
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig c;
  c.vocab_size = r.get<std::int32_t>();
  c.d_model = r.get<std::int32_t>();
  c.n_layers = r.get<std::int32_t>();
  c.n_heads = r.get<std::int32_t>();
  c.d_ff = r.get<std::int32_t>();
  c.max_seq_len = r.get<std::int32_t>();
  c.seed = r.get<std::uint64_t>();
  const bool adapters = r.get<std::uint8_t>() != 0;
  LoraConfig lora;
  if (adapters) {
    lora.rank = r.get<std::int32_t>();
    lora.alpha = r.get<double>();
    lora.dropout = r.get<double>();
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - sizeof stored_crc, sizeof stored_crc);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - sizeof stored_crc)));
  if (crc != stored_crc) throw CheckpointError("checkpoint checksum mismatch");
  Model<float> model = [&] {
    try {
      return Model<float>(c);
    } catch (const ModelError& e) {
      throw CheckpointError(std::string("invalid config header: ") + e.what());
    }
  }();
  if (adapters) model.attach_adapters(lora, 0);
  const auto count = r.get<std::uint32_t>();
  const std::uint32_t base_count = static_cast<std::uint32_t>(model.params().specs.size());
  read_directory(r, model.params(), adapters ? base_count : count);
  if (adapters) read_directory(r, model.adapter_params(), count - base_count);
  auto read_payload = [&](ParamSet<float>& ps) {
    const std::size_t bytes = ps.data.size() * sizeof(float);
    r.need(bytes);
    std::memcpy(ps.data.data(), buf.data() + r.pos, bytes);
    r.pos += bytes;
  };
  read_payload(model.params());
  if (adapters) read_payload(model.adapter_params());
  if (r.pos != buf.size() - sizeof(std::uint32_t)) throw CheckpointError("trailing bytes in checkpoint");
  return model;
}

}  // namespace kgf::lm
