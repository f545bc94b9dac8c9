#include "tatrack/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "tatrack/core/error.hpp"

namespace tatrack::model {

namespace fs = std::filesystem;

namespace {

constexpr const char* kHeader = "tatrack-checkpoint 1";

uint32_t to_le(uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

std::string dims_str(const Shape& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_dims(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw LoadError("bad dimension '" + part + "'");
      s.push_back(v);
    } catch (const std::logic_error&) {
      throw LoadError("bad dimension '" + part + "'");
    }
  }
  if (s.empty()) throw LoadError("empty shape");
  return s;
}

struct ManifestEntry {
  Shape shape;
  uint64_t offset = 0;
  bool trainable = false;
};

struct Manifest {
  ModelConfig config;
  std::map<std::string, ManifestEntry> entries;
  uint64_t total_bytes = 0;
};

Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw LoadError("checkpoint: cannot open " + (dir / "manifest.txt").string());
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw LoadError("checkpoint: bad header in manifest");
  Manifest m;
  if (!std::getline(in, line)) throw LoadError("checkpoint: missing config line");
  try {
    m.config = config_from_line(line);
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
  uint64_t expected_offset = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag, name, dtype, dims;
    uint64_t offset = 0;
    int trainable = -1;
    if (!(ls >> tag >> name >> dtype >> dims >> offset >> trainable) || tag != "param") {
      throw LoadError("checkpoint: malformed manifest line '" + line + "'");
    }
    if (dtype != "f32") throw LoadError("checkpoint: unsupported dtype " + dtype);
    if (offset != expected_offset) throw LoadError("checkpoint: non-contiguous offset for " + name);
    ManifestEntry e{parse_dims(dims), offset, trainable == 1};
    expected_offset += static_cast<uint64_t>(core::shape_numel(e.shape)) * 4;
    if (!m.entries.emplace(name, std::move(e)).second) throw LoadError("checkpoint: duplicate " + name);
  }
  m.total_bytes = expected_offset;
  return m;
}

}  // namespace

std::string config_to_line(const ModelConfig& cfg) {
  const auto& b = cfg.backbone;
  std::ostringstream os;
  os << "config patch=" << b.patch_size << " dim=" << b.token_dim << " depth=" << b.depth
     << " heads=" << b.num_heads << " ffn=" << b.ffn_ratio << " template=" << b.template_side
     << " search=" << b.search_side << " prompts=" << cfg.use_prompts << " dual=" << cfg.dual_branch
     << " sti=";
  if (cfg.sti_layers.empty()) os << "none";
  bool first = true;
  for (int l : cfg.sti_layers) {
    os << (first ? "" : ",") << l;
    first = false;
  }
  os << " sti_multi_head=" << cfg.sti_multi_head;
  return os.str();
}

ModelConfig config_from_line(const std::string& line) {
  std::istringstream ls(line);
  std::string tag;
  if (!(ls >> tag) || tag != "config") throw ConfigError("config line must start with 'config'");
  ModelConfig cfg;
  std::string kv;
  auto as_int = [](const std::string& key, const std::string& v) -> int64_t {
    try {
      size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != v.size()) throw ConfigError("bad value for " + key + ": " + v);
      return x;
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for " + key + ": " + v);
    }
  };
  while (ls >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string v = kv.substr(eq + 1);
    auto& b = cfg.backbone;
    if (key == "patch") b.patch_size = as_int(key, v);
    else if (key == "dim") b.token_dim = as_int(key, v);
    else if (key == "depth") b.depth = as_int(key, v);
    else if (key == "heads") b.num_heads = as_int(key, v);
    else if (key == "ffn") b.ffn_ratio = as_int(key, v);
    else if (key == "template") b.template_side = as_int(key, v);
    else if (key == "search") b.search_side = as_int(key, v);
    else if (key == "prompts") cfg.use_prompts = as_int(key, v) != 0;
    else if (key == "dual") cfg.dual_branch = as_int(key, v) != 0;
    else if (key == "sti_multi_head") cfg.sti_multi_head = as_int(key, v) != 0;
    else if (key == "sti") {
      cfg.sti_layers.clear();
      if (v != "none") {
        std::stringstream ss(v);
        std::string part;
        while (std::getline(ss, part, ',')) cfg.sti_layers.insert(static_cast<int>(as_int(key, part)));
      }
    } else {
      throw ConfigError("unknown config key " + key);
    }
  }
  cfg.validate();
  return cfg;
}

template <typename T>
void save_checkpoint(TATrackModel<T>& model, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream man(dir / "manifest.txt", std::ios::trunc);
  std::ofstream blob(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  if (!man || !blob) throw InputError("checkpoint: cannot write to " + dir.string());
  man << kHeader << "\n" << config_to_line(model.config()) << "\n";
  uint64_t offset = 0;
  for (auto* p : model.parameters()) {
    man << "param " << p->name() << " f32 " << dims_str(p->shape()) << " " << offset << " "
        << (p->trainable() ? 1 : 0) << "\n";
    for (const T v : p->value().data()) {
      const auto bits = to_le(std::bit_cast<uint32_t>(static_cast<float>(v)));
      blob.write(reinterpret_cast<const char*>(&bits), 4);
    }
    offset += static_cast<uint64_t>(p->numel()) * 4;
  }
  if (!man || !blob) throw InputError("checkpoint: write failed in " + dir.string());
}

ModelConfig read_checkpoint_config(const fs::path& dir) { return read_manifest(dir).config; }

template <typename T>
void load_into(TATrackModel<T>& model, const fs::path& dir, bool base_only) {
  const Manifest m = read_manifest(dir);
  const ParamList<T> targets = base_only ? model.base_parameters() : model.parameters();
  if (!base_only && m.entries.size() != targets.size()) {
    throw LoadError("checkpoint: " + std::to_string(m.entries.size()) + " entries, model has " +
                    std::to_string(targets.size()) + " parameters");
  }
  for (auto* p : targets) {
    const auto it = m.entries.find(p->name());
    if (it == m.entries.end()) throw LoadError("checkpoint: missing parameter " + p->name());
    if (it->second.shape != p->shape()) {
      throw LoadError("checkpoint: shape mismatch for " + p->name() + ": stored " +
                      core::shape_str(it->second.shape) + ", model " + core::shape_str(p->shape()));
    }
  }
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw LoadError("checkpoint: cannot open weights.bin");
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != m.total_bytes) {
    throw LoadError("checkpoint: blob holds " + std::to_string(bytes.size()) + " bytes, manifest expects " +
                    std::to_string(m.total_bytes));
  }
  // Everything validated; decode into staging tensors before touching the model.
  std::vector<Tensor<T>> staged;
  staged.reserve(targets.size());
  for (auto* p : targets) {
    const auto& e = m.entries.at(p->name());
    Tensor<T> t(p->shape());
    auto out = t.data();
    for (size_t i = 0; i < out.size(); ++i) {
      uint32_t bits = 0;
      std::memcpy(&bits, bytes.data() + e.offset + 4 * i, 4);
      const float f = std::bit_cast<float>(to_le(bits));
      out[i] = static_cast<T>(f);
    }
    if (!t.all_finite()) throw LoadError("checkpoint: non-finite values in " + p->name());
    staged.push_back(std::move(t));
  }
  for (size_t i = 0; i < targets.size(); ++i) {
    targets[i]->assign(staged[i]);
    if (!base_only && !targets[i]->is_buffer()) {
      targets[i]->set_trainable(m.entries.at(targets[i]->name()).trainable);
    }
  }
}

template <typename T>
std::unique_ptr<TATrackModel<T>> load_checkpoint(const fs::path& dir) {
  auto model = std::make_unique<TATrackModel<T>>(read_checkpoint_config(dir));
  load_into(*model, dir, false);
  return model;
}

#define TATRACK_INSTANTIATE(T)                                                        \
  template void save_checkpoint(TATrackModel<T>&, const fs::path&);                   \
  template void load_into(TATrackModel<T>&, const fs::path&, bool);                   \
  template std::unique_ptr<TATrackModel<T>> load_checkpoint<T>(const fs::path&);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::model
