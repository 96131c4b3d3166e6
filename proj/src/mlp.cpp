#include "mombo/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mombo/math.hpp"

namespace mombo {

void MlpParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("MlpParams: needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lay = layers[l];
    if (lay.weights.rows() == 0 || lay.weights.cols() == 0)
      throw std::invalid_argument("MlpParams: empty weight matrix at layer " + std::to_string(l));
    if (lay.bias.size() != lay.weights.rows())
      throw std::invalid_argument("MlpParams: bias size mismatch at layer " + std::to_string(l));
    if (l > 0 && layers[l - 1].weights.rows() != lay.weights.cols())
      throw std::invalid_argument("MlpParams: layer shapes do not chain at layer " + std::to_string(l));
    if (!lay.weights.allFinite() || !lay.bias.allFinite())
      throw std::invalid_argument("MlpParams: non-finite entries at layer " + std::to_string(l));
  }
}

MlpParams glorot_mlp(const std::vector<int>& widths, RngStream& rng) {
  if (widths.size() < 2) throw std::invalid_argument("glorot_mlp: need at least input and output widths");
  MlpParams params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l], fan_out = widths[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("glorot_mlp: widths must be positive");
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& x) {
  if (x.size() != params.input_dim())
    throw std::invalid_argument("forward: input size " + std::to_string(x.size()) +
                                " does not match first layer width " +
                                std::to_string(params.input_dim()));
  Eigen::VectorXd h = x;
  const int depth = params.depth();
  for (int l = 0; l < depth; ++l) {
    h = (params.layers[l].weights * h + params.layers[l].bias).eval();
    count_matvecs(1);
    if (l + 1 < depth) h = h.cwiseMax(0.0);
  }
  return h;
}

Eigen::MatrixXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& xs) {
  if (xs.cols() != params.input_dim())
    throw std::invalid_argument("forward_batch: column count does not match first layer width");
  Eigen::MatrixXd h = xs;
  const int depth = params.depth();
  for (int l = 0; l < depth; ++l) {
    h = ((h * params.layers[l].weights.transpose()).rowwise() +
         params.layers[l].bias.transpose())
            .eval();
    count_matvecs(static_cast<std::uint64_t>(xs.rows()));
    if (l + 1 < depth) h = h.cwiseMax(0.0);
  }
  return h;
}

ForwardTape forward_tape(const MlpParams& params, const Eigen::MatrixXd& xs) {
  if (xs.cols() != params.input_dim())
    throw std::invalid_argument("forward_tape: batch column count does not match first layer width");
  ForwardTape tape;
  const int depth = params.depth();
  tape.inputs.reserve(depth);
  tape.preact.reserve(depth);
  Eigen::MatrixXd h = xs;
  for (int l = 0; l < depth; ++l) {
    tape.inputs.push_back(h);
    h = ((h * params.layers[l].weights.transpose()).rowwise() +
         params.layers[l].bias.transpose())
            .eval();
    count_matvecs(static_cast<std::uint64_t>(xs.rows()));
    tape.preact.push_back(h);
    if (l + 1 < depth) h = h.cwiseMax(0.0);
  }
  return tape;
}

MlpGrads backward(const MlpParams& params, const ForwardTape& tape,
                  const Eigen::MatrixXd& upstream, Eigen::MatrixXd* dx) {
  const int depth = params.depth();
  if (static_cast<int>(tape.inputs.size()) != depth)
    throw std::invalid_argument("backward: tape does not match network depth");
  if (upstream.rows() != tape.inputs[0].rows() || upstream.cols() != params.output_dim())
    throw std::invalid_argument("backward: upstream shape mismatch");

  MlpGrads grads = zero_grads(params);
  Eigen::MatrixXd delta = upstream;
  for (int l = depth - 1; l >= 0; --l) {
    if (l < depth - 1) {
      // ReLU derivative, defined as 0 at exactly 0.
      delta = delta.cwiseProduct(
          (tape.preact[l].array() > 0.0).cast<double>().matrix());
    }
    grads.layers[l].weights = delta.transpose() * tape.inputs[l];
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0 || dx != nullptr) delta = (delta * params.layers[l].weights).eval();
  }
  if (dx != nullptr) *dx = delta;
  return grads;
}

MlpGrads backward(const MlpParams& params, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& upstream, Eigen::VectorXd* dx) {
  if (upstream.size() != params.output_dim())
    throw std::invalid_argument("backward: upstream size does not match output width");
  ForwardTape tape = forward_tape(params, x.transpose());
  Eigen::MatrixXd dxm;
  MlpGrads grads = backward(params, tape, upstream.transpose(), dx ? &dxm : nullptr);
  if (dx != nullptr) *dx = dxm.row(0).transpose();
  return grads;
}

MlpGrads zero_grads(const MlpParams& params) {
  MlpGrads grads;
  grads.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    DenseLayer g;
    g.weights = Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols());
    g.bias = Eigen::VectorXd::Zero(layer.bias.size());
    grads.layers.push_back(std::move(g));
  }
  return grads;
}

void scale_grads(MlpGrads& grads, double factor) {
  for (auto& layer : grads.layers) {
    layer.weights *= factor;
    layer.bias *= factor;
  }
}

void add_grads(MlpGrads& grads, const MlpGrads& other) {
  if (grads.layers.size() != other.layers.size())
    throw std::invalid_argument("add_grads: layer count mismatch");
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    grads.layers[l].weights += other.layers[l].weights;
    grads.layers[l].bias += other.layers[l].bias;
  }
}

namespace {

constexpr char kMagic[] = "MOMBO-NET";
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_net_section(std::ostream& out, const MlpParams& params) {
  params.validate();
  out.write(kMagic, sizeof(kMagic) - 1);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(params.depth()));
  for (const auto& layer : params.layers) {
    write_u32(out, static_cast<std::uint32_t>(layer.weights.rows()));
    write_u32(out, static_cast<std::uint32_t>(layer.weights.cols()));
  }
  for (const auto& layer : params.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) write_f64(out, layer.weights(r, c));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) write_f64(out, layer.bias(i));
  }
}

MlpParams read_net_section(std::istream& in) {
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic (expected MOMBO-NET)");
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  const std::uint32_t depth = read_u32(in);
  if (depth == 0 || depth > 1024) throw std::runtime_error("checkpoint: implausible layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(depth);
  for (auto& s : shapes) {
    s.first = read_u32(in);
    s.second = read_u32(in);
  }
  MlpParams params;
  for (const auto& [rows, cols] : shapes) {
    DenseLayer layer;
    layer.weights.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) layer.weights(r, c) = read_f64(in);
    layer.bias.resize(rows);
    for (std::uint32_t i = 0; i < rows; ++i) layer.bias(i) = read_f64(in);
    params.layers.push_back(std::move(layer));
  }
  params.validate();
  return params;
}

void save_mlp(const std::string& path, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
  write_net_section(out, params);
}

MlpParams load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
  return read_net_section(in);
}

void save_mlp_sections(const std::string& path, const std::vector<MlpParams>& nets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mlp_sections: cannot open " + path);
  for (const auto& net : nets) write_net_section(out, net);
}

std::vector<MlpParams> load_mlp_sections(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mlp_sections: cannot open " + path);
  std::vector<MlpParams> nets;
  while (in.peek() != std::char_traits<char>::eof()) nets.push_back(read_net_section(in));
  return nets;
}

}  // namespace mombo
