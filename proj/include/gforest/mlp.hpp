#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

namespace gforest {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Activations cached by Mlp::forward, consumed by Mlp::backward.
/// Columns are samples.
struct MlpTape {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> hidden; // post-ReLU activations, one per hidden layer
    Eigen::MatrixXd output;
    std::uint64_t generation = 0;
};

/// Fully connected network input -> hidden (ReLU) x n_hidden -> output (linear).
///
/// All weights live in one flat parameter vector, layer by layer, each layer
/// stored as a row-major (out x in) weight block followed by its bias. This is
/// the order used for optimizer state and for serialization.
class Mlp {
public:
    Mlp() = default;
    Mlp(int input_dim, int output_dim, int hidden_dim = 64, int n_hidden = 2);

    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }
    int hidden_dim() const { return hidden_dim_; }
    int n_hidden() const { return n_hidden_; }
    int layer_count() const { return n_hidden_ + 1; }
    int layer_in(int layer) const;
    int layer_out(int layer) const;

    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
    const Eigen::VectorXd& parameters() const { return params_; }
    /// Mutable access; invalidates outstanding tapes.
    Eigen::VectorXd& mutable_parameters();

    Eigen::Map<const RowMatrix> weight(int layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    void init_glorot(std::mt19937_64& rng);

    MlpTape forward(const Eigen::MatrixXd& x) const;
    MlpTape eval(const Eigen::VectorXd& x) const { return forward(x); }

    /// Reverse pass for the sum over samples of <y, dy>. Adds weight
    /// gradients into `dparams` (resized and zeroed if empty) and returns dx.
    Eigen::MatrixXd backward(const MlpTape& tape, const Eigen::MatrixXd& dy,
                             Eigen::VectorXd& dparams) const;

    std::uint64_t generation() const { return generation_; }

private:
    std::size_t layer_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
    void touch();

    int input_dim_ = 0;
    int output_dim_ = 0;
    int hidden_dim_ = 0;
    int n_hidden_ = 0;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd params_;
    std::uint64_t generation_ = 0;
};

} // namespace gforest
