#ifndef BCROWN_MODEL_HPP
#define BCROWN_MODEL_HPP

#include <Eigen/Dense>

#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcrown {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInfNorm = std::numeric_limits<double>::infinity();

/** Base class for all model loading / validation failures. */
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ModelError {
public:
    using ModelError::ModelError;
};

class DimensionError : public ModelError {
public:
    using ModelError::ModelError;
};

class NonFiniteError : public ModelError {
public:
    using ModelError::ModelError;
};

/** One affine layer z = W x + b. */
struct Layer {
    Matrix weight;
    Vector bias;
};

/**
 * Dense feedforward ReLU network.
 *
 * Linear layers are indexed 0..num_layers()-1. A ReLU follows every linear
 * layer except the last one, so hidden layer h (0-based) is the output of
 * linear layer h and there are num_layers()-1 hidden layers.
 */
class Network {
public:
    Network() = default;
    explicit Network(std::vector<Layer> layers);

    std::size_t num_layers() const { return layers_.size(); }
    std::size_t num_hidden() const { return layers_.empty() ? 0 : layers_.size() - 1; }
    int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
    int width(std::size_t layer) const { return static_cast<int>(layers_[layer].weight.rows()); }

    const Layer& layer(std::size_t i) const { return layers_[i]; }
    const std::vector<Layer>& layers() const { return layers_; }

    bool operator==(const Network& other) const;

private:
    std::vector<Layer> layers_;
};

/** l-p ball around a center point. p is kInfNorm or a value >= 1. */
struct InputRegion {
    Vector center;
    double epsilon = 0.0;
    double p = kInfNorm;

    /** Hoelder conjugate q with 1/p + 1/q = 1. */
    double dual_order() const;
    void validate() const;
};

/** Rows of linear functionals over the raw network output. */
struct Specification {
    Matrix coeffs;
    Vector consts;

    int num_rows() const { return static_cast<int>(coeffs.rows()); }
};

struct Property {
    InputRegion region;
    Specification spec;
};

Network load_network(const std::filesystem::path& path);
Network parse_network(const std::string& text);
void save_network(const Network& net, const std::filesystem::path& path);
std::string serialize_network(const Network& net);

Property load_property(const std::filesystem::path& path);
Property parse_property(const std::string& text);

/** Folds one specification row into the last layer so the result has a scalar output. */
Network merge_specification(const Network& net, const Vector& spec_row, double spec_const);

/** Raw output vector of the network. */
Vector forward_raw(const Network& net, const Vector& x);

/** Scalar output; the network must have output_dim() == 1. */
double forward_eval(const Network& net, const Vector& x);

/** Pre-activation values of every linear layer (including the output layer). */
std::vector<Vector> pre_activations(const Network& net, const Vector& x);

} // namespace bcrown

#endif
