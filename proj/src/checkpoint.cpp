#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pn/model.hpp"

namespace pn {

namespace {

constexpr char kMagic[4] = {'P', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

// Little-endian scalar I/O. The payload layout is fixed little-endian; this
// implementation assumes a little-endian host, as the build targets do.
template <class T>
void write_scalar(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_scalar(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return v;
}

std::string activation_str(Activation a) { return a == Activation::relu ? "relu" : "none"; }
std::string variant_str(Variant v) { return v == Variant::v2 ? "v2" : "v1"; }
std::string kind_str(LocalKind k) { return k == LocalKind::gcn ? "gcn" : "gat"; }
std::string scheme_str(Scheme s) {
  return s == Scheme::local_and_global ? "local_and_global" : "local_to_global";
}

std::string config_to_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "input_dim=" << c.input_dim << "\n";
  out << "hidden_dim=" << c.hidden_dim << "\n";
  out << "local_layers=" << c.local_layers << "\n";
  out << "global_layers=" << c.global_layers << "\n";
  out << "heads=" << c.heads << "\n";
  out << "classes=" << c.classes << "\n";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", c.dropout);
  out << "dropout=" << buf << "\n";
  out << "activation=" << activation_str(c.activation) << "\n";
  out << "variant=" << variant_str(c.variant) << "\n";
  out << "local_kind=" << kind_str(c.local_kind) << "\n";
  out << "scheme=" << scheme_str(c.scheme) << "\n";
  return out.str();
}

ModelConfig config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("checkpoint: malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint: config missing key " + key);
    return it->second;
  };
  ModelConfig c;
  c.input_dim = std::stoi(need("input_dim"));
  c.hidden_dim = std::stoi(need("hidden_dim"));
  c.local_layers = std::stoi(need("local_layers"));
  c.global_layers = std::stoi(need("global_layers"));
  c.heads = std::stoi(need("heads"));
  c.classes = std::stoi(need("classes"));
  c.dropout = std::stod(need("dropout"));
  const std::string act = need("activation");
  if (act == "none")
    c.activation = Activation::none;
  else if (act == "relu")
    c.activation = Activation::relu;
  else
    throw std::runtime_error("checkpoint: unknown activation " + act);
  const std::string var = need("variant");
  if (var == "v1")
    c.variant = Variant::v1;
  else if (var == "v2")
    c.variant = Variant::v2;
  else
    throw std::runtime_error("checkpoint: unknown variant " + var);
  const std::string kind = need("local_kind");
  if (kind == "gat")
    c.local_kind = LocalKind::gat;
  else if (kind == "gcn")
    c.local_kind = LocalKind::gcn;
  else
    throw std::runtime_error("checkpoint: unknown local_kind " + kind);
  const std::string sch = need("scheme");
  if (sch == "local_to_global")
    c.scheme = Scheme::local_to_global;
  else if (sch == "local_and_global")
    c.scheme = Scheme::local_and_global;
  else
    throw std::runtime_error("checkpoint: unknown scheme " + sch);
  return c;
}

void write_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
  write_scalar<std::uint16_t>(out, std::uint16_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_scalar<std::uint8_t>(out, 2);
  write_scalar<std::uint64_t>(out, std::uint64_t(m.rows()));
  write_scalar<std::uint64_t>(out, std::uint64_t(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const PolynormerModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_scalar<std::uint32_t>(out, kVersion);
  const std::string cfg = config_to_text(m.config);
  write_scalar<std::uint32_t>(out, std::uint32_t(cfg.size()));
  out.write(cfg.data(), std::streamsize(cfg.size()));

  std::uint32_t count = 0;
  m.for_each_param([&](const std::string&, const Matrix&) { ++count; });
  if (m.config.variant == Variant::v2) ++count;
  write_scalar<std::uint32_t>(out, count);
  m.for_each_param([&](const std::string& name, const Matrix& t) { write_tensor(out, name, t); });
  if (m.config.variant == Variant::v2) {
    if (!m.gate_carrier)
      throw std::runtime_error("checkpoint: v2 model has no cached carrier to save");
    write_tensor(out, "carrier.v2", *m.gate_carrier);
  }
  if (!out) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

PolynormerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic, not a PNCK file");
  const auto version = read_scalar<std::uint32_t>(in, "version");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto cfg_len = read_scalar<std::uint32_t>(in, "config length");
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), std::streamsize(cfg_len));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading config");
  const ModelConfig cfg = config_from_text(cfg_text);
  cfg.validate();

  // Build the shape schema for this config, then fill it strictly.
  PolynormerModel model = init_model(cfg, 0);
  std::map<std::string, Matrix*> expected;
  model.for_each_param([&](const std::string& name, Matrix& m) { expected[name] = &m; });
  Matrix carrier;
  if (cfg.variant == Variant::v2) expected["carrier.v2"] = &carrier;

  const auto count = read_scalar<std::uint32_t>(in, "tensor count");
  std::map<std::string, bool> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = read_scalar<std::uint16_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), std::streamsize(name_len));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading tensor name");
    const auto rank = read_scalar<std::uint8_t>(in, "rank of " + name);
    if (rank != 2) throw std::runtime_error("checkpoint: tensor " + name + " has rank != 2");
    const auto rows = read_scalar<std::uint64_t>(in, "dims of " + name);
    const auto cols = read_scalar<std::uint64_t>(in, "dims of " + name);

    auto it = expected.find(name);
    if (it == expected.end())
      throw std::runtime_error("checkpoint: unknown tensor " + name);
    if (seen[name]) throw std::runtime_error("checkpoint: duplicate tensor " + name);
    seen[name] = true;

    Matrix payload(static_cast<int>(rows), static_cast<int>(cols));
    if (name != "carrier.v2" && !payload.same_shape(*it->second))
      throw std::runtime_error("checkpoint: tensor " + name + " has shape " +
                               payload.shape_str() + ", expected " + it->second->shape_str());
    if (name == "carrier.v2" && cols != 1)
      throw std::runtime_error("checkpoint: tensor carrier.v2 must be a column vector");
    in.read(reinterpret_cast<char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading tensor " + name);
    *it->second = std::move(payload);
  }
  for (const auto& [name, ptr] : expected) {
    (void)ptr;
    if (!seen[name]) throw std::runtime_error("checkpoint: missing tensor " + name);
  }
  if (cfg.variant == Variant::v2) model.gate_carrier = std::move(carrier);
  return model;
}

}  // namespace pn
