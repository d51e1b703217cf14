#include "ndnn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ndnn/config_io.hpp"
#include "ndnn/error.hpp"

namespace ndnn {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace {

constexpr std::string_view kMlpMagic{"NDNNMLP\0", 8};
constexpr std::string_view kGraphMagic{"NDNNGRF\0", 8};

std::string frame(std::string_view magic, const json& header, std::string_view payload) {
  const std::string h = header.dump();
  const auto len = static_cast<std::uint32_t>(h.size());
  std::string out(magic);
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += h;
  out.append(payload);
  return out;
}

struct Framed {
  json header;
  std::string_view payload;
};

Framed unframe(std::string_view bytes, std::string_view magic, const char* what) {
  if (bytes.size() < magic.size() + 4 || bytes.substr(0, magic.size()) != magic)
    throw FormatError(std::string(what) + ": bad magic");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + magic.size(), sizeof len);
  const std::size_t start = magic.size() + sizeof len;
  if (bytes.size() < start + len) throw FormatError(std::string(what) + ": truncated header");
  Framed f;
  try {
    f.header = json::parse(bytes.substr(start, len));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": bad header: " + e.what());
  }
  f.payload = bytes.substr(start + len);
  return f;
}

}  // namespace

std::string encode_mlp(const MlpParams& p) {
  json tensors = json::array();
  std::string payload;
  std::size_t offset = 0;
  for_each_tensor(p, [&](const std::string& name, std::span<const double> d, bool) {
    tensors.push_back({{"name", name}, {"offset", offset}, {"count", d.size()}});
    payload.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
    offset += d.size();
  });
  return frame(kMlpMagic, {{"spec", p.spec}, {"tensors", tensors}}, payload);
}

MlpParams decode_mlp(std::string_view bytes) {
  auto f = unframe(bytes, kMlpMagic, ".ndnn");
  MlpSpec spec;
  try {
    spec = f.header.at("spec").get<MlpSpec>();
  } catch (const json::exception& e) {
    throw FormatError(std::string(".ndnn: bad spec: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(std::string(".ndnn: bad spec: ") + e.what());
  }
  RngStream dummy(0);
  MlpParams p;
  try {
    p = build_mlp(spec, dummy);
  } catch (const UsageError& e) {
    throw FormatError(std::string(".ndnn: invalid spec: ") + e.what());
  }
  const auto& tensors = f.header.at("tensors");
  std::size_t i = 0;
  std::size_t total = 0;
  for_each_tensor(p, [&](const std::string& name, std::span<double> d, bool) {
    if (i >= tensors.size()) throw FormatError(".ndnn: missing tensor " + name);
    const auto& t = tensors[i++];
    if (t.at("name") != name || t.at("count").get<std::size_t>() != d.size() ||
        t.at("offset").get<std::size_t>() != total)
      throw FormatError(".ndnn: tensor table mismatch at " + name);
    total += d.size();
  });
  if (i != tensors.size()) throw FormatError(".ndnn: extra tensors in table");
  if (f.payload.size() != total * sizeof(double))
    throw FormatError(".ndnn: payload has " + std::to_string(f.payload.size()) +
                      " bytes, expected " + std::to_string(total * sizeof(double)));
  std::size_t off = 0;
  for_each_tensor(p, [&](const std::string&, std::span<double> d, bool) {
    std::memcpy(d.data(), f.payload.data() + off, d.size() * sizeof(double));
    off += d.size() * sizeof(double);
  });
  return p;
}

std::string encode_checkpoint(const Checkpoint& c) {
  json nets = json::array();
  std::string payload;
  for (const auto& n : c.networks) {
    std::string blob = encode_mlp(n.params);
    nets.push_back({{"name", n.name}, {"offset", payload.size()}, {"length", blob.size()}});
    payload += blob;
  }
  return frame(kGraphMagic, {{"system", c.system}, {"graph_spec", c.spec}, {"networks", nets}},
               payload);
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  auto f = unframe(bytes, kGraphMagic, "checkpoint");
  Checkpoint c;
  try {
    c.system = f.header.at("system").get<std::string>();
    c.spec = f.header.at("graph_spec").get<GraphSpec>();
    for (const auto& n : f.header.at("networks")) {
      const auto off = n.at("offset").get<std::size_t>();
      const auto len = n.at("length").get<std::size_t>();
      if (off + len > f.payload.size()) throw FormatError("checkpoint: network blob out of range");
      c.networks.push_back({n.at("name").get<std::string>(), decode_mlp(f.payload.substr(off, len))});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed for " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace ndnn
