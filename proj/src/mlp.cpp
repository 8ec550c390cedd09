#include "gforest/mlp.hpp"
#include "gforest/errors.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>

namespace gforest {

namespace {

std::uint64_t fresh_generation() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

} // namespace

Mlp::Mlp(int input_dim, int output_dim, int hidden_dim, int n_hidden)
    : input_dim_(input_dim), output_dim_(output_dim), hidden_dim_(hidden_dim), n_hidden_(n_hidden) {
    if (input_dim < 1 || output_dim < 1 || hidden_dim < 1 || n_hidden < 1) {
        throw ContractError("mlp dimensions must be positive");
    }
    std::size_t offset = 0;
    for (int l = 0; l < layer_count(); ++l) {
        offsets_.push_back(offset);
        offset += static_cast<std::size_t>(layer_out(l)) * (layer_in(l) + 1);
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
    touch();
}

int Mlp::layer_in(int layer) const { return layer == 0 ? input_dim_ : hidden_dim_; }

int Mlp::layer_out(int layer) const { return layer == n_hidden_ ? output_dim_ : hidden_dim_; }

Eigen::VectorXd& Mlp::mutable_parameters() {
    touch();
    return params_;
}

void Mlp::touch() { generation_ = fresh_generation(); }

Eigen::Map<const RowMatrix> Mlp::weight(int layer) const {
    return {params_.data() + layer_offset(layer), layer_out(layer), layer_in(layer)};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
    const auto off = layer_offset(layer) + static_cast<std::size_t>(layer_out(layer)) * layer_in(layer);
    return {params_.data() + off, layer_out(layer)};
}

void Mlp::init_glorot(std::mt19937_64& rng) {
    for (int l = 0; l < layer_count(); ++l) {
        const double limit = std::sqrt(6.0 / (layer_in(l) + layer_out(l)));
        std::uniform_real_distribution<double> dist(-limit, limit);
        const auto off = layer_offset(l);
        const auto n_w = static_cast<std::size_t>(layer_out(l)) * layer_in(l);
        for (std::size_t i = 0; i < n_w; ++i) params_[static_cast<Eigen::Index>(off + i)] = dist(rng);
        for (int i = 0; i < layer_out(l); ++i) {
            params_[static_cast<Eigen::Index>(off + n_w + i)] = 0.0;
        }
    }
    touch();
}

MlpTape Mlp::forward(const Eigen::MatrixXd& x) const {
    if (x.rows() != input_dim_) {
        throw ContractError(
            fmt::format("mlp input has {} rows, expected {}", x.rows(), input_dim_));
    }
    MlpTape tape;
    tape.input = x;
    tape.generation = generation_;
    tape.hidden.reserve(static_cast<std::size_t>(n_hidden_));

    const Eigen::MatrixXd* prev = &tape.input;
    for (int l = 0; l < n_hidden_; ++l) {
        Eigen::MatrixXd h = weight(l) * (*prev);
        h.colwise() += bias(l);
        tape.hidden.push_back(h.cwiseMax(0.0));
        prev = &tape.hidden.back();
    }
    tape.output = weight(n_hidden_) * (*prev);
    tape.output.colwise() += bias(n_hidden_);
    return tape;
}

Eigen::MatrixXd Mlp::backward(const MlpTape& tape, const Eigen::MatrixXd& dy,
                              Eigen::VectorXd& dparams) const {
    if (tape.generation != generation_) {
        throw ContractError("mlp tape is stale: weights changed since forward");
    }
    if (dy.rows() != output_dim_ || dy.cols() != tape.output.cols()) {
        throw ContractError(fmt::format("mlp dy shape {}x{} does not match output {}x{}", dy.rows(),
                                        dy.cols(), tape.output.rows(), tape.output.cols()));
    }
    if (dparams.size() == 0) dparams = Eigen::VectorXd::Zero(params_.size());
    if (dparams.size() != params_.size()) throw ContractError("mlp gradient buffer has wrong size");

    Eigen::MatrixXd delta = dy;
    for (int l = n_hidden_; l >= 0; --l) {
        const Eigen::MatrixXd& in = l == 0 ? tape.input : tape.hidden[static_cast<std::size_t>(l - 1)];
        const auto off = static_cast<Eigen::Index>(layer_offset(l));
        const auto n_out = layer_out(l);
        const auto n_in = layer_in(l);
        Eigen::Map<RowMatrix> dw(dparams.data() + off, n_out, n_in);
        Eigen::Map<Eigen::VectorXd> db(dparams.data() + off + static_cast<Eigen::Index>(n_out) * n_in,
                                       n_out);
        dw.noalias() += delta * in.transpose();
        db += delta.rowwise().sum();

        Eigen::MatrixXd dx = weight(l).transpose() * delta;
        if (l > 0) {
            // ReLU gate: hidden activation is zero exactly where the unit was inactive.
            dx = dx.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
        }
        delta = std::move(dx);
    }
    return delta;
}

} // namespace gforest
