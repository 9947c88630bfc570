#include "bcrown/splits.hpp"
#include "bcrown/params.hpp"

#include <algorithm>
#include <cmath>

namespace bcrown {

SplitSet::SplitSet(const Network& net) {
    status_.resize(net.num_hidden());
    for (std::size_t h = 0; h < net.num_hidden(); ++h) {
        status_[h].assign(static_cast<std::size_t>(net.width(h)), SplitStatus::Free);
    }
}

double SplitSet::sign(int layer, int index) const {
    switch (status_[layer][index]) {
    case SplitStatus::Pos: return -1.0;
    case SplitStatus::Neg: return 1.0;
    case SplitStatus::Free: break;
    }
    return 0.0;
}

int SplitSet::count() const {
    int n = 0;
    for (const auto& row : status_) {
        n += static_cast<int>(std::count_if(row.begin(), row.end(), [](SplitStatus s) { return s != SplitStatus::Free; }));
    }
    return n;
}

void PreActBounds::apply_split(NeuronId n, SplitStatus s) {
    double& l = lower[n.layer][n.index];
    double& u = upper[n.layer][n.index];
    if (s == SplitStatus::Pos) {
        l = std::max(l, 0.0);
    } else if (s == SplitStatus::Neg) {
        u = std::min(u, 0.0);
    }
}

void PreActBounds::apply_splits(const SplitSet& splits) {
    for (std::size_t h = 0; h < num_layers() && h < splits.num_layers(); ++h) {
        for (int j = 0; j < splits.width(h); ++j) {
            apply_split({static_cast<int>(h), j}, splits.get({static_cast<int>(h), j}));
        }
    }
}

bool PreActBounds::contradictory() const {
    for (std::size_t h = 0; h < num_layers(); ++h) {
        for (Eigen::Index j = 0; j < lower[h].size(); ++j) {
            double l = lower[h][j];
            double u = upper[h][j];
            if (l > u + 1e-9 * (1.0 + std::abs(l) + std::abs(u))) return true;
        }
    }
    return false;
}

void PreActBounds::tighten_with(const PreActBounds& other) {
    for (std::size_t h = 0; h < num_layers(); ++h) {
        lower[h] = lower[h].cwiseMax(other.lower[h]);
        upper[h] = upper[h].cwiseMin(other.upper[h]);
    }
}

std::vector<NeuronId> unstable_free_neurons(const PreActBounds& bounds, const SplitSet& splits) {
    std::vector<NeuronId> out;
    for (std::size_t h = 0; h < bounds.num_layers(); ++h) {
        for (Eigen::Index j = 0; j < bounds.lower[h].size(); ++j) {
            NeuronId n{static_cast<int>(h), static_cast<int>(j)};
            if (splits.get(n) == SplitStatus::Free && bounds.is_unstable(n)) out.push_back(n);
        }
    }
    return out;
}

RelaxParams RelaxParams::initial(const Network& net, std::size_t num_layers) {
    RelaxParams p;
    for (std::size_t h = 0; h < num_layers; ++h) {
        p.alpha.push_back(Vector::Ones(net.width(h)));
        p.beta.push_back(Vector::Zero(net.width(h)));
    }
    return p;
}

namespace {

RelaxParams zeros_like(const RelaxParams& p) {
    RelaxParams z;
    for (std::size_t h = 0; h < p.num_layers(); ++h) {
        z.alpha.push_back(Vector::Zero(p.alpha[h].size()));
        z.beta.push_back(Vector::Zero(p.beta[h].size()));
    }
    return z;
}

} // namespace

ParamGroup ParamGroup::initial(const Network& net, std::size_t num_layers) {
    ParamGroup g;
    g.values = RelaxParams::initial(net, num_layers);
    g.reset_moments();
    return g;
}

void ParamGroup::reset_moments() {
    first_moment = zeros_like(values);
    second_moment = zeros_like(values);
    step = 0;
}

ParamState ParamState::initial(const Network& net) {
    ParamState s;
    s.output = ParamGroup::initial(net, net.num_hidden());
    for (std::size_t k = 0; k < net.num_hidden(); ++k) {
        s.inter_lower.push_back(ParamGroup::initial(net, k));
        s.inter_upper.push_back(ParamGroup::initial(net, k));
    }
    return s;
}

void ParamState::reset_moments() {
    output.reset_moments();
    for (auto& g : inter_lower) g.reset_moments();
    for (auto& g : inter_upper) g.reset_moments();
}

} // namespace bcrown
