#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "mombo/rng.hpp"

namespace mombo {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

/// ReLU MLP parameters: hidden activations are ReLU, the output layer is
/// identity. Layer shapes must chain and all entries must stay finite.
struct MlpParams {
  std::vector<DenseLayer> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  int input_dim() const { return static_cast<int>(layers.front().weights.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weights.rows()); }

  /// Throws std::invalid_argument on shape or finiteness violations.
  void validate() const;
};

/// Gradients of a scalar objective with respect to every weight and bias.
struct MlpGrads {
  std::vector<DenseLayer> layers;
};

/// Glorot-uniform initialisation over the given widths (input, hidden..., output).
MlpParams glorot_mlp(const std::vector<int>& widths, RngStream& rng);

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& x);

/// Batched forward pass; rows of `xs` are independent inputs.
Eigen::MatrixXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& xs);

/// Activations recorded during a batched forward pass, for backpropagation.
/// inputs[l] is the input of layer l (inputs[0] = xs); preact[l] its
/// pre-activation output.
struct ForwardTape {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> preact;
  const Eigen::MatrixXd& output() const { return preact.back(); }
};

ForwardTape forward_tape(const MlpParams& params, const Eigen::MatrixXd& xs);

/// Reverse pass for the scalar objective sum_i upstream_i . output_i.
/// `upstream` has one row per batch row. When `dx` is non-null it receives the
/// gradient with respect to the inputs. ReLU derivative at exactly 0 is 0.
MlpGrads backward(const MlpParams& params, const ForwardTape& tape,
                  const Eigen::MatrixXd& upstream, Eigen::MatrixXd* dx = nullptr);

/// Single-input convenience wrapper: gradients of upstream . f(x).
MlpGrads backward(const MlpParams& params, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& upstream, Eigen::VectorXd* dx = nullptr);

MlpGrads zero_grads(const MlpParams& params);
void scale_grads(MlpGrads& grads, double factor);
void add_grads(MlpGrads& grads, const MlpGrads& other);

/// Checkpoint container: header magic "MOMBO-NET", format version, layer
/// count and shapes, then row-major little-endian float64 weights followed by
/// the bias, per layer. Multiple sections may be concatenated in one file.
void write_net_section(std::ostream& out, const MlpParams& params);
MlpParams read_net_section(std::istream& in);

void save_mlp(const std::string& path, const MlpParams& params);
MlpParams load_mlp(const std::string& path);
void save_mlp_sections(const std::string& path, const std::vector<MlpParams>& nets);
std::vector<MlpParams> load_mlp_sections(const std::string& path);

}  // namespace mombo
