#include "sinddm/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "sinddm/error.hpp"
#include "sinddm/json_io.hpp"

namespace sinddm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'I', 'N', 'D', 'D', 'M', 'C', 'K'};

struct TensorBlob {
  std::string name;
  std::string dtype;
  std::vector<std::int64_t> shape;
  const void* data = nullptr;
  std::size_t nbytes = 0;
};

template <class T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::vector<std::int64_t> to_shape(const std::vector<int>& s) { return {s.begin(), s.end()}; }

void add_weight_set(std::vector<TensorBlob>& blobs, const ParamLayout& layout, const std::string& prefix,
                    const std::vector<float>& values) {
  if (values.size() != layout.total) throw InvalidArgument(prefix + " size does not match the model layout");
  for (const ParamEntry& e : layout.entries)
    blobs.push_back({prefix + "." + e.name, "f32", to_shape(e.shape), values.data() + e.offset, e.size * sizeof(float)});
}

}  // namespace

std::uint64_t config_fingerprint(const DenoiserSpec& spec, const TrainConfig& cfg) {
  Json train = to_json(cfg);
  train.erase("steps");
  train.erase("checkpoint_every");
  const std::string canon = Json{{"model", to_json(spec)}, {"train", train}}.dump();
  return fnv1a64(canon.data(), canon.size());
}

std::string fingerprint_hex(std::uint64_t fp) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fp;
  return out.str();
}

Denoiser<float> Checkpoint::ema_model() const {
  Denoiser<float> m(spec);
  m.set_weights(ema_weights);
  return m;
}

Denoiser<float> Checkpoint::raw_model() const {
  Denoiser<float> m(spec);
  m.set_weights(weights);
  return m;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const ParamLayout layout = make_layout(c.spec);
  const int n = c.num_scales();
  const int T = c.plan.T();

  std::vector<double> gamma_train, gamma_sample;
  for (int s = 0; s < n; ++s) {
    gamma_train.insert(gamma_train.end(), c.plan.gamma_train[s].begin(), c.plan.gamma_train[s].end());
    gamma_sample.insert(gamma_sample.end(), c.plan.gamma_sample[s].begin(), c.plan.gamma_sample[s].end());
  }

  std::vector<TensorBlob> blobs;
  add_weight_set(blobs, layout, "weights", c.weights);
  add_weight_set(blobs, layout, "ema", c.ema_weights);
  add_weight_set(blobs, layout, "adam_m", c.adam_m);
  add_weight_set(blobs, layout, "adam_v", c.adam_v);
  const auto img = c.train_image.data();
  blobs.push_back({"train_image", "f64", {c.train_image.height(), c.train_image.width(), c.train_image.channels()},
                   img.data(), img.size_bytes()});
  blobs.push_back({"plan.alpha_bar", "f64", {T + 1}, c.plan.noise.alpha_bar.data(), (T + 1) * sizeof(double)});
  blobs.push_back({"plan.rmse", "f64", {n}, c.plan.rmse.data(), n * sizeof(double)});
  blobs.push_back({"plan.gamma_train", "f64", {n, T + 1}, gamma_train.data(), gamma_train.size() * sizeof(double)});
  blobs.push_back({"plan.gamma_sample", "f64", {n, T + 1}, gamma_sample.data(), gamma_sample.size() * sizeof(double)});

  Json manifest = Json::array();
  std::size_t offset = 0;
  for (const TensorBlob& b : blobs) {
    manifest.push_back({{"name", b.name}, {"dtype", b.dtype}, {"shape", b.shape}, {"offset", offset}, {"nbytes", b.nbytes}});
    offset += b.nbytes;
  }
  Json dims = Json::array();
  for (Dims d : c.dims) dims.push_back({d.h, d.w});
  const Json header{{"format_version", Checkpoint::kFormatVersion},
                    {"endianness", "little"},
                    {"model", to_json(c.spec)},
                    {"train", to_json(c.train)},
                    {"r", c.r},
                    {"dims", dims},
                    {"start_t", c.plan.start_t},
                    {"gap_norm", to_string(c.plan.norm)},
                    {"sigma_mode", to_string(c.plan.sigma_mode)},
                    {"step", c.step},
                    {"rng_state", c.rng_state},
                    {"fingerprint", fingerprint_hex(c.fingerprint)},
                    {"tensors", manifest}};
  const std::string header_text = header.dump();

  std::string buf;
  buf.reserve(64 + header_text.size() + offset);
  buf.append(kMagic, sizeof(kMagic));
  put(buf, Checkpoint::kFormatVersion);
  put(buf, static_cast<std::uint64_t>(header_text.size()));
  buf += header_text;
  put(buf, static_cast<std::uint64_t>(offset));
  for (const TensorBlob& b : blobs) buf.append(static_cast<const char*>(b.data), b.nbytes);
  put(buf, fnv1a64(buf.data(), buf.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) + 4 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError(path.string() + ": not a checkpoint file");
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(buf, pos);
  if (version != Checkpoint::kFormatVersion) {
    throw IntegrityError(path.string() + ": unsupported checkpoint format version " + std::to_string(version) +
                         " (this build reads version " + std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  const auto header_len = get<std::uint64_t>(buf, pos);
  if (header_len > buf.size() - pos) throw IntegrityError(path.string() + ": checkpoint truncated");
  const std::string header_text = buf.substr(pos, header_len);
  pos += header_len;
  const auto payload_len = get<std::uint64_t>(buf, pos);
  if (payload_len > buf.size() - pos || buf.size() - pos - payload_len != sizeof(std::uint64_t))
    throw IntegrityError(path.string() + ": checkpoint truncated or has trailing bytes");
  const std::size_t payload_pos = pos;
  std::size_t tail = payload_pos + payload_len;
  const auto stored_sum = get<std::uint64_t>(buf, tail);
  if (fnv1a64(buf.data(), payload_pos + payload_len) != stored_sum)
    throw IntegrityError(path.string() + ": checksum mismatch (corrupt checkpoint)");

  Checkpoint c;
  try {
    const Json h = Json::parse(header_text);
    if (h.at("endianness") != "little") throw IntegrityError("unsupported endianness");
    c.spec = denoiser_spec_from_json(h.at("model"));
    c.train = train_config_from_json(h.at("train"));
    c.r = h.at("r").get<double>();
    for (const auto& d : h.at("dims")) c.dims.push_back({d.at(0).get<int>(), d.at(1).get<int>()});
    c.plan.start_t = h.at("start_t").get<std::vector<int>>();
    c.plan.norm = gap_norm_from_string(h.at("gap_norm").get<std::string>());
    c.plan.sigma_mode = sigma_mode_from_string(h.at("sigma_mode").get<std::string>());
    c.step = h.at("step").get<std::int64_t>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.fingerprint = std::stoull(h.at("fingerprint").get<std::string>(), nullptr, 16);

    const ParamLayout layout = make_layout(c.spec);
    const int n = static_cast<int>(c.dims.size());
    const int T = c.train.T;
    if (n < 2 || static_cast<int>(c.plan.start_t.size()) != n) throw IntegrityError("inconsistent scale count");
    if (c.dims.back().h < 1 || c.dims.back().w < 1) throw IntegrityError("invalid dims");

    std::map<std::string, Json> manifest;
    for (const auto& t : h.at("tensors")) manifest[t.at("name").get<std::string>()] = t;
    auto fetch = [&](const std::string& name, const std::string& dtype, const std::vector<std::int64_t>& shape,
                     void* dst, std::size_t nbytes) {
      const auto it = manifest.find(name);
      if (it == manifest.end()) throw IntegrityError("missing tensor '" + name + "'");
      const Json& t = it->second;
      if (t.at("dtype") != dtype || t.at("shape").get<std::vector<std::int64_t>>() != shape)
        throw IntegrityError("tensor '" + name + "' has an unexpected dtype or shape");
      const auto off = t.at("offset").get<std::uint64_t>();
      const auto len = t.at("nbytes").get<std::uint64_t>();
      if (len != nbytes || off > payload_len || len > payload_len - off)
        throw IntegrityError("tensor '" + name + "' lies outside the payload");
      std::memcpy(dst, buf.data() + payload_pos + off, nbytes);
    };
    auto fetch_set = [&](const std::string& prefix, std::vector<float>& out) {
      out.assign(layout.total, 0.f);
      for (const ParamEntry& e : layout.entries)
        fetch(prefix + "." + e.name, "f32", to_shape(e.shape), out.data() + e.offset, e.size * sizeof(float));
    };
    fetch_set("weights", c.weights);
    fetch_set("ema", c.ema_weights);
    fetch_set("adam_m", c.adam_m);
    fetch_set("adam_v", c.adam_v);

    const Dims full = c.dims.back();
    c.train_image = ImageGrid(full, 3);
    fetch("train_image", "f64", {full.h, full.w, 3}, c.train_image.data().data(), c.train_image.size() * sizeof(double));

    std::vector<double> alpha_bar(T + 1), gamma_train(static_cast<std::size_t>(n) * (T + 1)),
        gamma_sample(gamma_train.size());
    c.plan.rmse.resize(n);
    fetch("plan.alpha_bar", "f64", {T + 1}, alpha_bar.data(), alpha_bar.size() * sizeof(double));
    fetch("plan.rmse", "f64", {n}, c.plan.rmse.data(), n * sizeof(double));
    fetch("plan.gamma_train", "f64", {n, T + 1}, gamma_train.data(), gamma_train.size() * sizeof(double));
    fetch("plan.gamma_sample", "f64", {n, T + 1}, gamma_sample.data(), gamma_sample.size() * sizeof(double));
    c.plan.noise = NoiseSchedule::from_table(std::move(alpha_bar));
    for (int s = 0; s < n; ++s) {
      c.plan.gamma_train.emplace_back(gamma_train.begin() + s * (T + 1), gamma_train.begin() + (s + 1) * (T + 1));
      c.plan.gamma_sample.emplace_back(gamma_sample.begin() + s * (T + 1), gamma_sample.begin() + (s + 1) * (T + 1));
    }
  } catch (const Json::exception& e) {
    throw IntegrityError(path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw IntegrityError(path.string() + ": invalid checkpoint contents: " + e.what());
  }
  return c;
}

}  // namespace sinddm
