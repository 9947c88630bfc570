#include "bcrown/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bcrown {

using json = nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(what + ": " + e.what());
    }
}

double number_at(const json& v, const std::string& field) {
    if (!v.is_number()) {
        throw ParseError("field '" + field + "': expected a number");
    }
    double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw NonFiniteError("field '" + field + "': non-finite value");
    }
    return x;
}

Vector vector_at(const json& v, const std::string& field) {
    if (!v.is_array()) {
        throw ParseError("field '" + field + "': expected an array");
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = number_at(v[i], field + "[" + std::to_string(i) + "]");
    }
    return out;
}

Matrix matrix_at(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) {
        throw ParseError("field '" + field + "': expected a non-empty array of rows");
    }
    std::size_t cols = 0;
    Matrix out;
    for (std::size_t r = 0; r < v.size(); ++r) {
        std::string row_field = field + "[" + std::to_string(r) + "]";
        Vector row = vector_at(v[r], row_field);
        if (r == 0) {
            cols = static_cast<std::size_t>(row.size());
            if (cols == 0) {
                throw ParseError("field '" + row_field + "': empty row");
            }
            out.resize(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
        } else if (static_cast<std::size_t>(row.size()) != cols) {
            throw DimensionError("field '" + row_field + "': row has " + std::to_string(row.size()) +
                                 " entries, expected " + std::to_string(cols));
        }
        out.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return out;
}

json to_json(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

} // namespace

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
        throw DimensionError("network has no layers");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& layer = layers_[i];
        std::string tag = "layer " + std::to_string(i);
        if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
            throw DimensionError(tag + ": empty weight matrix");
        }
        if (layer.bias.size() != layer.weight.rows()) {
            throw DimensionError(tag + ": bias has " + std::to_string(layer.bias.size()) +
                                 " entries, weight has " + std::to_string(layer.weight.rows()) + " rows");
        }
        if (i > 0 && layer.weight.cols() != layers_[i - 1].weight.rows()) {
            throw DimensionError(tag + ": expects " + std::to_string(layer.weight.cols()) +
                                 " inputs but previous layer has " +
                                 std::to_string(layers_[i - 1].weight.rows()) + " outputs");
        }
        if (!all_finite(layer.weight) || !layer.bias.allFinite()) {
            throw NonFiniteError(tag + ": non-finite parameter");
        }
    }
}

bool Network::operator==(const Network& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& a = layers_[i];
        const Layer& b = other.layers_[i];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
        if (a.weight != b.weight || a.bias != b.bias) return false;
    }
    return true;
}

double InputRegion::dual_order() const {
    if (std::isinf(p)) return 1.0;
    if (p == 1.0) return kInfNorm;
    return p / (p - 1.0);
}

void InputRegion::validate() const {
    if (!center.allFinite()) throw NonFiniteError("input region center is not finite");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ModelError("epsilon must be finite and >= 0");
    if (!(p >= 1.0)) throw ModelError("norm order p must be >= 1 or inf");
}

Network parse_network(const std::string& text) {
    json doc = parse_json(text, "model file");
    if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array()) {
        throw ParseError("model file: expected an object with a 'layers' array");
    }
    std::vector<Layer> layers;
    const json& arr = doc["layers"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        std::string tag = "layers[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        if (!entry.is_object() || !entry.contains("weight") || !entry.contains("bias")) {
            throw ParseError(tag + ": expected object with 'weight' and 'bias'");
        }
        Layer layer;
        layer.weight = matrix_at(entry["weight"], tag + ".weight");
        layer.bias = vector_at(entry["bias"], tag + ".bias");
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
}

Network load_network(const std::filesystem::path& path) { return parse_network(read_file(path)); }

std::string serialize_network(const Network& net) {
    json doc;
    doc["layers"] = json::array();
    for (const Layer& layer : net.layers()) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            rows.push_back(to_json(layer.weight.row(r).transpose()));
        }
        doc["layers"].push_back({{"weight", rows}, {"bias", to_json(layer.bias)}});
    }
    return doc.dump();
}

void save_network(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write '" + path.string() + "'");
    out << serialize_network(net) << '\n';
}

Property parse_property(const std::string& text) {
    json doc = parse_json(text, "property file");
    if (!doc.is_object()) throw ParseError("property file: expected an object");
    for (const char* key : {"x0", "epsilon", "spec_rows", "spec_consts"}) {
        if (!doc.contains(key)) throw ParseError(std::string("property file: missing field '") + key + "'");
    }
    Property prop;
    prop.region.center = vector_at(doc["x0"], "x0");
    prop.region.epsilon = number_at(doc["epsilon"], "epsilon");
    if (doc.contains("p")) {
        const json& p = doc["p"];
        if (p.is_string()) {
            if (p.get<std::string>() != "inf") throw ParseError("field 'p': expected \"inf\" or a number");
            prop.region.p = kInfNorm;
        } else {
            prop.region.p = number_at(p, "p");
        }
    }
    prop.region.validate();
    prop.spec.coeffs = matrix_at(doc["spec_rows"], "spec_rows");
    prop.spec.consts = vector_at(doc["spec_consts"], "spec_consts");
    if (prop.spec.consts.size() != prop.spec.coeffs.rows()) {
        throw DimensionError("spec_consts has " + std::to_string(prop.spec.consts.size()) + " entries, spec_rows has " +
                             std::to_string(prop.spec.coeffs.rows()) + " rows");
    }
    return prop;
}

Property load_property(const std::filesystem::path& path) { return parse_property(read_file(path)); }

Network merge_specification(const Network& net, const Vector& spec_row, double spec_const) {
    if (spec_row.size() != net.output_dim()) {
        throw DimensionError("specification row has " + std::to_string(spec_row.size()) +
                             " entries, network output has " + std::to_string(net.output_dim()));
    }
    std::vector<Layer> layers = net.layers();
    Layer& last = layers.back();
    Layer merged;
    merged.weight = spec_row.transpose() * last.weight;
    merged.bias = Vector::Constant(1, spec_row.dot(last.bias) + spec_const);
    last = std::move(merged);
    return Network(std::move(layers));
}

std::vector<Vector> pre_activations(const Network& net, const Vector& x) {
    if (x.size() != net.input_dim()) {
        throw DimensionError("input has " + std::to_string(x.size()) + " entries, network expects " +
                             std::to_string(net.input_dim()));
    }
    std::vector<Vector> out;
    out.reserve(net.num_layers());
    Vector h = x;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const Layer& layer = net.layer(i);
        Vector z = layer.weight * h + layer.bias;
        h = z.cwiseMax(0.0);
        out.push_back(std::move(z));
    }
    return out;
}

Vector forward_raw(const Network& net, const Vector& x) { return pre_activations(net, x).back(); }

double forward_eval(const Network& net, const Vector& x) {
    if (net.output_dim() != 1) {
        throw DimensionError("forward_eval needs a scalar-output network; merge a specification first");
    }
    return forward_raw(net, x)[0];
}

} // namespace bcrown
