#include "topoaug/model.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "topoaug/error.hpp"

namespace topoaug {

namespace nn {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

double decay_lr(double lr0, long long episode, double decay) {
  return lr0 * std::pow(decay, static_cast<double>(episode));
}

}  // namespace nn

void Architecture::validate() const {
  if (tm_size == 0 || adj_size == 0 || actions == 0) {
    throw ShapeError("architecture needs non-zero input and action sizes");
  }
  if (conv1_filters == 0 || conv2_filters == 0 || block_fc == 0 || trunk1 == 0 || trunk2 == 0) {
    throw ParameterError("layer widths must be positive");
  }
  if (kernel % 2 == 0) throw ParameterError("conv kernel size must be odd");
}

std::string Architecture::fingerprint() const {
  std::ostringstream out;
  out << "dualconv-v1 tm=" << tm_size << " adj=" << adj_size << " actions=" << actions
      << " conv=" << conv1_filters << "," << conv2_filters << " k=" << kernel
      << " block_fc=" << block_fc << " trunk=" << trunk1 << "," << trunk2;
  return out.str();
}

std::vector<std::pair<std::string, nn::Shape>> Architecture::layout() const {
  validate();
  const std::size_t k = kernel;
  const std::size_t flat_a = conv2_filters * tm_size * tm_size;
  const std::size_t flat_b = conv2_filters * adj_size * adj_size;
  return {
      {"conv_a1.w", {conv1_filters, 1, k, k}},
      {"conv_a1.b", {conv1_filters}},
      {"conv_a2.w", {conv2_filters, conv1_filters, k, k}},
      {"conv_a2.b", {conv2_filters}},
      {"fc_a.w", {block_fc, flat_a}},
      {"fc_a.b", {block_fc}},
      {"conv_b1.w", {conv1_filters, 1, k, k}},
      {"conv_b1.b", {conv1_filters}},
      {"conv_b2.w", {conv2_filters, conv1_filters, k, k}},
      {"conv_b2.b", {conv2_filters}},
      {"fc_b.w", {block_fc, flat_b}},
      {"fc_b.b", {block_fc}},
      {"trunk1.w", {trunk1, 2 * block_fc}},
      {"trunk1.b", {trunk1}},
      {"trunk2.w", {trunk2, trunk1}},
      {"trunk2.b", {trunk2}},
      {"policy.w", {actions, trunk2}},
      {"policy.b", {actions}},
      {"value.w", {1, trunk2}},
      {"value.b", {1}},
  };
}

ModelParams<float> init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams<float> model;
  model.arch = arch;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : arch.layout()) {
    nn::Tensor<float> t(shape);
    if (shape.size() > 1) {
      double limit = 0.0;
      if (shape.size() == 4) {
        const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
        limit = std::sqrt(6.0 / fan_in);
      } else {
        limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      }
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (float& v : t.values()) v = static_cast<float>(dist(rng));
    }
    model.params.tensors.push_back(std::move(t));
  }
  return model;
}

namespace {

constexpr const char* kMagic = "TOPOAUG-CHECKPOINT 1";

void write_block(std::ostream& out, const nn::ParamSet<float>& set) {
  for (const auto& t : set.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
}

void read_block(std::istream& in, nn::ParamSet<float>& set) {
  for (auto& t : set.tensors) {
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw ValidationError("checkpoint truncated");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto layout = ckpt.model.arch.layout();
  if (layout.size() != ckpt.model.params.tensors.size()) {
    throw ShapeError("checkpoint parameters do not match architecture");
  }
  const bool moments = !ckpt.adam_first.tensors.empty();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ParameterError("cannot write checkpoint " + path.string());
    out << kMagic << '\n';
    out << "fingerprint " << ckpt.model.arch.fingerprint() << '\n';
    out << "arch " << ckpt.model.arch.tm_size << ' ' << ckpt.model.arch.adj_size << ' '
        << ckpt.model.arch.actions << ' ' << ckpt.model.arch.conv1_filters << ' '
        << ckpt.model.arch.conv2_filters << ' ' << ckpt.model.arch.kernel << ' '
        << ckpt.model.arch.block_fc << ' ' << ckpt.model.arch.trunk1 << ' '
        << ckpt.model.arch.trunk2 << '\n';
    out << "version " << ckpt.model.version << '\n';
    out << "adam_steps " << ckpt.adam_steps << '\n';
    out << "meta " << ckpt.meta.size() << '\n';
    for (const auto& [key, value] : ckpt.meta) {
      out << key << ' ' << value.size() << '\n' << value << '\n';
    }
    out << "tensors " << layout.size() << ' ' << (moments ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < layout.size(); ++i) {
      out << layout[i].first << ' ' << nn::shape_string(ckpt.model.params.tensors[i].shape()) << '\n';
    }
    write_block(out, ckpt.model.params);
    if (moments) {
      write_block(out, ckpt.adam_first);
      write_block(out, ckpt.adam_second);
    }
    if (!out) throw ParameterError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  auto expect_word = [&](const std::string& word) {
    std::string got;
    in >> got;
    if (got != word) throw ValidationError("checkpoint: expected '" + word + "', got '" + got + "'");
  };
  std::string line;
  std::getline(in, line);
  if (line != kMagic) throw ValidationError("not a checkpoint file: " + path.string());
  std::getline(in, line);
  const std::string prefix = "fingerprint ";
  if (line.rfind(prefix, 0) != 0) throw ValidationError("checkpoint missing fingerprint");
  const std::string fingerprint = line.substr(prefix.size());
  if (expected && expected->fingerprint() != fingerprint) {
    throw ValidationError("checkpoint architecture mismatch: file has '" + fingerprint +
                          "', expected '" + expected->fingerprint() + "'");
  }

  Checkpoint ckpt;
  Architecture& arch = ckpt.model.arch;
  expect_word("arch");
  in >> arch.tm_size >> arch.adj_size >> arch.actions >> arch.conv1_filters >> arch.conv2_filters >>
      arch.kernel >> arch.block_fc >> arch.trunk1 >> arch.trunk2;
  if (arch.fingerprint() != fingerprint) throw ValidationError("checkpoint header is inconsistent");
  expect_word("version");
  in >> ckpt.model.version;
  expect_word("adam_steps");
  in >> ckpt.adam_steps;
  expect_word("meta");
  std::size_t meta_count = 0;
  in >> meta_count;
  for (std::size_t i = 0; i < meta_count; ++i) {
    std::string key;
    std::size_t len = 0;
    in >> key >> len;
    in.get();
    std::string value(len, '\0');
    in.read(value.data(), static_cast<std::streamsize>(len));
    ckpt.meta[key] = value;
  }
  expect_word("tensors");
  std::size_t count = 0;
  int moments = 0;
  in >> count >> moments;
  in.get();
  const auto layout = arch.layout();
  if (!in || count != layout.size()) throw ValidationError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    std::getline(in, line);
    if (line != layout[i].first + " " + nn::shape_string(layout[i].second)) {
      throw ValidationError("checkpoint tensor header mismatch: " + line);
    }
    ckpt.model.params.tensors.emplace_back(layout[i].second);
  }
  read_block(in, ckpt.model.params);
  if (moments) {
    ckpt.adam_first = ckpt.model.params.zeros_like();
    ckpt.adam_second = ckpt.model.params.zeros_like();
    read_block(in, ckpt.adam_first);
    read_block(in, ckpt.adam_second);
  }
  return ckpt;
}

}  // namespace topoaug
