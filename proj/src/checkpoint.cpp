#include "hopelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hopelab/error.hpp"

namespace hope {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order, which must be little-endian");

namespace {

constexpr char kMagic[8] = {'H', 'O', 'P', 'E', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPreamble = 8 + 4 + 8;

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(std::string_view bytes, std::size_t offset) {
  U value;
  std::memcpy(&value, bytes.data() + offset, sizeof(U));
  return value;
}

std::string_view dtype_name(DType t) { return t == DType::F32 ? "f32" : "f64"; }

std::size_t dtype_size(DType t) { return t == DType::F32 ? 4 : 8; }

void append_values(std::string& payload, const std::vector<double>& values, std::size_t offset,
                   std::size_t count, DType dtype) {
  for (std::size_t i = 0; i < count; ++i) {
    if (dtype == DType::F32) {
      put(payload, static_cast<float>(values[offset + i]));
    } else {
      put(payload, values[offset + i]);
    }
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const ParameterLayout layout(ckpt.model);
  if (ckpt.params.size() != layout.total()) {
    throw ShapeMismatch("checkpoint parameter count does not match its model config");
  }
  const bool has_optimizer = !ckpt.adam_m.empty();
  if (has_optimizer && (ckpt.adam_m.size() != layout.total() ||
                        ckpt.adam_v.size() != layout.total())) {
    throw ShapeMismatch("checkpoint optimizer state does not match its model config");
  }

  nlohmann::json dir = nlohmann::json::array();
  std::string payload;
  auto emit = [&](const std::string& prefix, const std::vector<double>& values) {
    for (const auto& e : layout.entries()) {
      const std::size_t nbytes = e.size * dtype_size(ckpt.dtype);
      dir.push_back({{"name", prefix + e.name},
                     {"shape", e.shape},
                     {"dtype", dtype_name(ckpt.dtype)},
                     {"offset", payload.size()},
                     {"nbytes", nbytes}});
      append_values(payload, values, e.offset, e.size, ckpt.dtype);
    }
  };
  emit("param/", ckpt.params);
  if (has_optimizer) {
    emit("adam_m/", ckpt.adam_m);
    emit("adam_v/", ckpt.adam_v);
  }

  const nlohmann::json header = {{"model", to_json(ckpt.model)},
                                 {"train", to_json(ckpt.train)},
                                 {"step", ckpt.step},
                                 {"rng_state", ckpt.rng_state},
                                 {"tensors", dir}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get<std::uint64_t>(bytes, 12);
  if (header_len > bytes.size() - kPreamble) throw FormatError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kPreamble, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupted checkpoint header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(kPreamble + header_len);

  Checkpoint c;
  try {
    c.model = model_config_from_json(header.at("model"));
    c.train = train_config_from_json(header.at("train"));
    c.step = header.at("step").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  const ParameterLayout layout(c.model);
  const auto& dir = header.at("tensors");
  const std::size_t per_group = layout.entries().size();
  if (dir.size() != per_group && dir.size() != 3 * per_group) {
    throw ShapeMismatch("checkpoint tensor directory does not match the model layout");
  }
  std::size_t expected_end = 0;
  for (std::size_t t = 0; t < dir.size(); ++t) {
    const auto& entry = layout.entries()[t % per_group];
    const char* prefix = t < per_group ? "param/" : (t < 2 * per_group ? "adam_m/" : "adam_v/");
    const auto& d = dir[t];
    const std::string dtype = d.at("dtype").get<std::string>();
    const DType dt = dtype == "f32" ? DType::F32 : DType::F64;
    if (dtype != "f32" && dtype != "f64") throw FormatError("unknown tensor dtype " + dtype);
    if (t == 0) c.dtype = dt;
    if (dt != c.dtype) throw FormatError("mixed tensor dtypes are not supported");
    if (d.at("name").get<std::string>() != prefix + entry.name ||
        d.at("shape").get<std::vector<int>>() != entry.shape) {
      throw ShapeMismatch("tensor '" + d.at("name").get<std::string>() +
                          "' does not match layout entry '" + prefix + entry.name + "'");
    }
    const auto offset = d.at("offset").get<std::size_t>();
    const auto nbytes = d.at("nbytes").get<std::size_t>();
    if (nbytes != entry.size * dtype_size(dt) || offset != expected_end) {
      throw FormatError("tensor directory offsets are inconsistent");
    }
    if (offset + nbytes > payload.size()) throw FormatError("truncated checkpoint payload");
    expected_end = offset + nbytes;

    std::vector<double>& dst = t < per_group ? c.params : (t < 2 * per_group ? c.adam_m : c.adam_v);
    if (dst.empty()) dst.resize(layout.total());
    for (std::size_t i = 0; i < entry.size; ++i) {
      dst[entry.offset + i] = dt == DType::F32
                                  ? static_cast<double>(get<float>(payload, offset + 4 * i))
                                  : get<double>(payload, offset + 8 * i);
    }
  }
  if (expected_end != payload.size()) throw FormatError("trailing bytes after checkpoint payload");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace hope
