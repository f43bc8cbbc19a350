#include "zscr/checkpoint.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "zscr/error.hpp"

namespace zscr {
namespace {

constexpr std::string_view kOptPrefix = "rms.";

std::vector<std::pair<std::string, const Tensor*>> optimizer_tensors(const ModelParams& params,
                                                                     const OptimizerStates& opt) {
  // Accumulators follow the parameter order of their block.
  std::vector<std::pair<std::string, const Tensor*>> out;
  const auto names = params.named_tensors();
  const RmsPropState* states[] = {&opt.text_encoder, &opt.generator, &opt.discriminator, &opt.csem};
  std::size_t name_idx = 0;
  for (const RmsPropState* s : states) {
    for (const Tensor& t : s->mean_square) {
      if (name_idx >= names.size()) throw Error(ErrorKind::ShapeMismatch, "optimizer state has too many tensors");
      out.emplace_back(std::string(kOptPrefix) + names[name_idx++].first, &t);
    }
  }
  return out;
}

void put_tensor(binary::Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.shape().size()));
  for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.f32s(t.raw(), t.size());
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorKind::FormatError, "checkpoint metadata " + key + " is not an integer: " + value);
  }
  return v;
}

const std::string& required(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw Error(ErrorKind::FormatError, "checkpoint metadata lacks " + key);
  return it->second;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ostringstream meta;
  meta << "model.text_dim=" << ck.params.dims.text_dim << '\n';
  meta << "model.image_dim=" << ck.params.dims.image_dim << '\n';
  for (const auto& [k, v] : to_key_values(ck.config)) meta << "config." << k << '=' << v << '\n';
  meta << "counters.discriminator=" << ck.counters.discriminator << '\n';
  meta << "counters.generator=" << ck.counters.generator << '\n';
  meta << "counters.csem=" << ck.counters.csem << '\n';
  meta << "counters.outer_completed=" << ck.counters.outer_completed << '\n';
  meta << "rng_state=" << ck.rng_state << '\n';

  binary::Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(ck.version);
  w.str(meta.str());
  for (const auto& [name, t] : ck.params.named_tensors()) put_tensor(w, name, *t);
  for (const auto& [name, t] : optimizer_tensors(ck.params, ck.optimizer)) put_tensor(w, name, *t);
  w.write_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto r = binary::Reader::from_file(path);
  char magic[4];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw Error(ErrorKind::FormatError, path.string() + " is not a checkpoint (bad magic)");
  }
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(ck.version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }

  std::map<std::string, std::string> meta;
  {
    std::istringstream in(r.str());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::FormatError, "bad checkpoint metadata line: " + line);
      meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  std::map<std::string, Tensor> records;
  while (!r.at_end()) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw Error(ErrorKind::FormatError, "tensor " + name + " has implausible rank");
    Tensor::Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape_product(shape) * sizeof(float) > r.remaining()) {
      throw Error(ErrorKind::FormatError, "truncated tensor record " + name);
    }
    Tensor t(shape);
    r.f32s(t.raw(), t.size());
    records.insert_or_assign(std::move(name), std::move(t));
  }

  TrainConfig config;
  try {
    for (const auto& [k, v] : meta) {
      if (k.starts_with("config.")) set_config_value(config, k.substr(7), v);
    }
  } catch (const Error& e) {
    throw Error(ErrorKind::FormatError, std::string("checkpoint config: ") + e.what());
  }
  config.dims.text_dim = parse_u64("model.text_dim", required(meta, "model.text_dim"));
  config.dims.image_dim = parse_u64("model.image_dim", required(meta, "model.image_dim"));
  ck.config = config;

  ck.counters.discriminator = parse_u64("counters.discriminator", required(meta, "counters.discriminator"));
  ck.counters.generator = parse_u64("counters.generator", required(meta, "counters.generator"));
  ck.counters.csem = parse_u64("counters.csem", required(meta, "counters.csem"));
  ck.counters.outer_completed =
      static_cast<std::uint32_t>(parse_u64("counters.outer_completed", required(meta, "counters.outer_completed")));
  ck.rng_state = required(meta, "rng_state");

  // Shapes come from a freshly laid out model; values from the records.
  ck.params.dims = config.dims;
  ck.params.leaky_slope = config.leaky_slope;
  auto take = [&](const std::string& name, Tensor& into, const Tensor::Shape& expect) {
    auto it = records.find(name);
    if (it == records.end()) throw Error(ErrorKind::FormatError, "checkpoint lacks tensor " + name);
    if (it->second.shape() != expect) {
      throw Error(ErrorKind::FormatError, "tensor " + name + " has shape " + shape_string(it->second.shape()) +
                                              ", expected " + shape_string(expect));
    }
    into = std::move(it->second);
    records.erase(it);
  };
  const Dims& d = config.dims;
  const auto layout = [&](Affine& a, std::size_t in, std::size_t out) {
    a.weight = Tensor({in, out});
    a.bias = Tensor({out});
  };
  layout(ck.params.text_encoder.layer, d.text_dim, 2 * d.latent_dim);
  layout(ck.params.generator.hidden1, d.noise_dim + d.latent_dim, d.gen_hidden1);
  layout(ck.params.generator.hidden2, d.gen_hidden1, d.gen_hidden2);
  layout(ck.params.generator.output, d.gen_hidden2, d.image_dim);
  layout(ck.params.discriminator.hidden, d.image_dim + d.text_dim, d.disc_hidden);
  layout(ck.params.discriminator.output, d.disc_hidden, 1);
  layout(ck.params.csem.layer, d.image_dim, d.latent_dim);

  for (auto& [name, t] : ck.params.named_tensors()) {
    const Tensor::Shape expect = t->shape();
    take(name, *t, expect);
  }
  ck.params.validate();

  auto fill = [&](RmsPropState& s, std::vector<Tensor*> block) {
    s = RmsPropState::zeros_like(block, config.rms_rho, config.rms_epsilon);
  };
  fill(ck.optimizer.text_encoder, tensors_of(ck.params.text_encoder));
  fill(ck.optimizer.generator, tensors_of(ck.params.generator));
  fill(ck.optimizer.discriminator, tensors_of(ck.params.discriminator));
  fill(ck.optimizer.csem, tensors_of(ck.params.csem));
  RmsPropState* states[] = {&ck.optimizer.text_encoder, &ck.optimizer.generator, &ck.optimizer.discriminator,
                            &ck.optimizer.csem};
  const auto names = ck.params.named_tensors();
  std::size_t name_idx = 0;
  for (RmsPropState* s : states) {
    for (Tensor& t : s->mean_square) {
      const Tensor::Shape expect = t.shape();
      take(std::string(kOptPrefix) + names[name_idx++].first, t, expect);
    }
  }
  if (!records.empty()) throw Error(ErrorKind::FormatError, "unexpected tensor " + records.begin()->first);
  return ck;
}

}  // namespace zscr
