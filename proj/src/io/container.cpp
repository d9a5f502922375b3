#include "io/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace discorl::io {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'R', 'L'};

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}
void put_u64(std::string& out, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}
void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n) {
    if (pos + n > buf.size()) throw nn::IoError("container truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

const std::vector<double>& Container::section(const std::string& name) const {
  for (const auto& [n, d] : sections)
    if (n == name) return d;
  throw nn::IoError("container section not found: " + name);
}

bool Container::has_section(const std::string& name) const {
  for (const auto& [n, d] : sections)
    if (n == name) return true;
  return false;
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw nn::IoError("cannot open for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw nn::IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void Container::save(const std::filesystem::path& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_str(out, kind);
  put_str(out, meta.dump());
  put_u32(out, static_cast<uint32_t>(sections.size()));
  for (const auto& [name, data] : sections) {
    put_str(out, name);
    put_u64(out, data.size());
    out.append(reinterpret_cast<const char*>(data.data()),
               data.size() * sizeof(double));
  }
  atomic_write(path, out);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw nn::IoError("cannot open: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  Reader r(buf);
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw nn::IoError("bad container magic: " + path.string());
  r.pos = 4;
  uint32_t version = r.u32();
  if (version != kVersion)
    throw nn::IoError("unsupported container version: " + path.string());
  Container c;
  c.kind = r.str();
  c.meta = nlohmann::json::parse(r.str());
  uint32_t nsec = r.u32();
  for (uint32_t i = 0; i < nsec; ++i) {
    std::string name = r.str();
    uint64_t count = r.u64();
    r.need(count * sizeof(double));
    std::vector<double> data(count);
    std::memcpy(data.data(), buf.data() + r.pos, count * sizeof(double));
    r.pos += count * sizeof(double);
    c.sections.emplace_back(std::move(name), std::move(data));
  }
  return c;
}

uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw nn::IoError("cannot open: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

nlohmann::json layer_to_json(const nn::LayerSpec& l) {
  using K = nn::LayerSpec::Kind;
  switch (l.kind) {
    case K::Dense:
      return {{"type", "dense"}, {"in", l.in}, {"out", l.out}};
    case K::Conv:
      return {{"type", "conv"},
              {"in_ch", l.in_ch},
              {"out_ch", l.out_ch},
              {"kernel", l.kernel},
              {"stride", l.stride}};
    case K::Relu:
      return {{"type", "relu"}};
    case K::Tanh:
      return {{"type", "tanh"}};
    case K::Flatten:
      return {{"type", "flatten"}};
    case K::Softmax:
      return {{"type", "softmax"}};
  }
  throw nn::IoError("unknown layer kind");
}

nn::LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type");
  if (type == "dense") return nn::LayerSpec::dense(j.at("in"), j.at("out"));
  if (type == "conv")
    return nn::LayerSpec::conv(j.at("in_ch"), j.at("out_ch"), j.at("kernel"),
                               j.at("stride"));
  if (type == "relu") return nn::LayerSpec::relu();
  if (type == "tanh") return nn::LayerSpec::tanh();
  if (type == "flatten") return nn::LayerSpec::flatten();
  if (type == "softmax") return nn::LayerSpec::softmax();
  throw nn::IoError("unknown layer type: " + type);
}

void save_network(const std::filesystem::path& path, const nn::Network& net) {
  Container c;
  c.kind = "weights";
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.spec().layers) layers.push_back(layer_to_json(l));
  c.meta = {{"layers", layers}, {"seed", net.spec().seed}};
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (const nn::Tensor& p : net.params())
    flat.insert(flat.end(), p.data.begin(), p.data.end());
  c.add_section("params", std::move(flat));
  c.save(path);
}

nn::Network load_network(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.kind != "weights") throw nn::IoError("not a weight file: " + path.string());
  nn::NetworkSpec spec;
  spec.seed = c.meta.at("seed");
  for (const auto& lj : c.meta.at("layers")) spec.layers.push_back(layer_from_json(lj));
  nn::Network net(spec);
  const std::vector<double>& flat = c.section("params");
  size_t off = 0;
  for (nn::Tensor& p : net.params()) {
    if (off + p.size() > flat.size())
      throw nn::IoError("weight file parameter count mismatch");
    std::copy(flat.begin() + off, flat.begin() + off + p.size(),
              p.data.begin());
    off += p.size();
  }
  if (off != flat.size()) throw nn::IoError("weight file parameter count mismatch");
  return net;
}

void save_tensor(const std::filesystem::path& path, const nn::Tensor& t) {
  Container c;
  c.kind = "tensor";
  c.meta = {{"shape", t.shape}};
  c.add_section("data", t.data);
  c.save(path);
}

nn::Tensor load_tensor(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.kind != "tensor") throw nn::IoError("not a tensor file: " + path.string());
  std::vector<size_t> shape = c.meta.at("shape").get<std::vector<size_t>>();
  return nn::Tensor(shape, c.section("data"));
}

}  // namespace discorl::io
