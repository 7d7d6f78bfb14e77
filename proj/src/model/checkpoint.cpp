#include "gw/model/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gw/core/error.hpp"

namespace gw::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }
  void read(void* dst, std::size_t n, const std::string& what) {
    if (pos_ + n > b_.size()) {
      throw FormatError("checkpoint truncated reading " + what + " at offset " +
                        std::to_string(pos_));
    }
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

struct StoredArray {
  std::string name;
  nn::Shape4 shape;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out;
  put_bytes(out, kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = model.config().to_text() + "grid=" +
                           std::to_string(model.grid().height) + "x" +
                           std::to_string(model.grid().width) + "\n";
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  put_bytes(out, text.data(), text.size());
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    put_bytes(out, p->name.data(), p->name.size());
    put_u32(out, 0);
    put_u32(out, 4);
    const auto& s = p->value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const auto* p : params) put_bytes(out, p->value.data(), p->value.size() * sizeof(float));
  return out;
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version mismatch: file " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::string text = r.str(r.u32("config length"), "config text");
  GridSpec grid{0, 0};
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("grid=", 0) == 0) {
        if (std::sscanf(line.c_str() + 5, "%dx%d", &grid.height, &grid.width) != 2) {
          throw FormatError("malformed grid line '" + line + "'");
        }
      }
    }
  }
  if (grid.height == 0) throw FormatError("checkpoint config lacks grid line");
  Model model(ModelConfig::from_text(text), grid, 0);

  const std::uint32_t count = r.u32("array count");
  std::vector<StoredArray> index;
  index.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredArray a;
    a.name = r.str(r.u32("name length"), "array name");
    const std::uint32_t dtype = r.u32("dtype");
    const std::uint32_t rank = r.u32("rank");
    if (dtype != 0 || rank != 4) throw FormatError("unsupported array encoding at " + a.name);
    a.shape.n = static_cast<int>(r.u32("dims"));
    a.shape.c = static_cast<int>(r.u32("dims"));
    a.shape.h = static_cast<int>(r.u32("dims"));
    a.shape.w = static_cast<int>(r.u32("dims"));
    index.push_back(std::move(a));
  }
  auto params = model.parameters();
  if (params.size() != index.size()) {
    throw FormatError("checkpoint holds " + std::to_string(index.size()) +
                      " arrays, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto& a = index[i];
    if (a.name != p->name) {
      throw FormatError("array order mismatch: found " + a.name + ", expected " + p->name);
    }
    if (!(a.shape == p->value.shape())) throw FormatError("shape mismatch at " + a.name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const std::size_t n = p->value.size() * sizeof(float);
    if (r.remaining() < n) throw FormatError("shape mismatch at " + p->name);
    r.read(p->value.data(), n, p->name);
  }
  if (r.remaining() != 0) {
    throw FormatError("shape mismatch at " + params.back()->name + ": " +
                      std::to_string(r.remaining()) + " trailing bytes");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write checkpoint " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("short write to " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Model model = load_checkpoint(path);
  if (!(model.config() == expected)) {
    throw ConfigError("checkpoint " + path.string() + " holds a " +
                      variant_name(model.config().variant) + " model that does not match the " +
                      variant_name(expected.variant) + " configuration requested");
  }
  return model;
}

}  // namespace gw::model
