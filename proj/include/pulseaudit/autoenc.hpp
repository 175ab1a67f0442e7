#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pulseaudit/common.hpp"

namespace pulseaudit::autoenc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// input -> hidden -> bottleneck -> hidden -> input. ReLU on the two hidden
/// layers; the bottleneck and output are linear.
struct MlpSpec {
    std::size_t input = 250;
    std::size_t hidden = 128;
    std::size_t bottleneck = 20;

    std::vector<std::size_t> widths() const { return {input, hidden, bottleneck, hidden, input}; }

    void validate() const {
        require(input >= 2 && hidden >= 1 && bottleneck >= 1, ErrorKind::InvalidArgument, "layer widths must be positive");
        require(bottleneck < input, ErrorKind::InvalidArgument, "bottleneck must be narrower than the input");
    }
};

struct TrainConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double stop_loss = 0.1;
    std::size_t max_epochs = 500;
    std::size_t batch_size = 64;
    std::uint64_t seed = 7;

    void validate() const {
        require(lr > 0.0 && stop_loss > 0.0, ErrorKind::InvalidArgument, "learning rate and stop loss must be positive");
        require(batch_size >= 1 && max_epochs >= 1, ErrorKind::InvalidArgument, "batch size and epochs must be positive");
    }
};

struct Layer {
    Matrix w;  // out x in
    Vector b;
    bool relu = false;
};

struct Gradients {
    std::vector<Matrix> w;
    std::vector<Vector> b;
};

class Autoencoder {
public:
    Autoencoder() = default;

    /// Xavier-uniform weights drawn in layer order from `seed`, zero biases.
    Autoencoder(const MlpSpec& spec, std::uint64_t seed) : spec_(spec) {
        spec.validate();
        const auto widths = spec.widths();
        Rng rng(derive_seed(seed, 0));
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            Layer layer;
            const auto fan_in = static_cast<Eigen::Index>(widths[l]);
            const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            layer.w.resize(fan_out, fan_in);
            for (Eigen::Index r = 0; r < fan_out; ++r)
                for (Eigen::Index c = 0; c < fan_in; ++c) layer.w(r, c) = rng.uniform(-limit, limit);
            layer.b = Vector::Zero(fan_out);
            layer.relu = (l == 0 || l == 2);
            layers_.push_back(std::move(layer));
        }
    }

    const MlpSpec& spec() const { return spec_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Samples are columns. Returns activations of every layer (a[0] = x).
    std::vector<Matrix> forward_all(const Matrix& x) const {
        std::vector<Matrix> acts{x};
        for (const auto& layer : layers_) {
            Matrix z = (layer.w * acts.back()).colwise() + layer.b;
            if (layer.relu) z = z.cwiseMax(0.0);
            acts.push_back(std::move(z));
        }
        return acts;
    }

    Matrix reconstruct(const Matrix& x) const { return forward_all(x).back(); }

    /// Encoder half only: input -> hidden -> bottleneck.
    Matrix encode(const Matrix& x) const {
        require(x.rows() == static_cast<Eigen::Index>(spec_.input), ErrorKind::LengthMismatch,
                "window length " + std::to_string(x.rows()) + " does not match model input " +
                    std::to_string(spec_.input));
        Matrix a = x;
        for (std::size_t l = 0; l < 2; ++l) {
            Matrix z = (layers_[l].w * a).colwise() + layers_[l].b;
            a = layers_[l].relu ? Matrix(z.cwiseMax(0.0)) : z;
        }
        return a;
    }

    Matrix decode(const Matrix& code) const {
        Matrix a = code;
        for (std::size_t l = 2; l < layers_.size(); ++l) {
            Matrix z = (layers_[l].w * a).colwise() + layers_[l].b;
            a = layers_[l].relu ? Matrix(z.cwiseMax(0.0)) : z;
        }
        return a;
    }

    /// Mean squared reconstruction error over all entries.
    double loss(const Matrix& x) const {
        const Matrix r = reconstruct(x);
        return (r - x).squaredNorm() / static_cast<double>(x.size());
    }

    /// Loss and its gradient with respect to every weight and bias.
    double backward(const Matrix& x, Gradients& g) const {
        const auto acts = forward_all(x);
        const Matrix diff = acts.back() - x;
        const double loss = diff.squaredNorm() / static_cast<double>(x.size());
        g.w.resize(layers_.size());
        g.b.resize(layers_.size());
        Matrix delta = diff * (2.0 / static_cast<double>(x.size()));
        for (std::size_t l = layers_.size(); l-- > 0;) {
            if (layers_[l].relu) delta = delta.cwiseProduct((acts[l + 1].array() > 0.0).cast<double>().matrix());
            g.w[l] = delta * acts[l].transpose();
            g.b[l] = delta.rowwise().sum();
            if (l > 0) delta = layers_[l].w.transpose() * delta;
        }
        return loss;
    }

private:
    MlpSpec spec_;
    std::vector<Layer> layers_;
};

struct TrainedModel {
    Autoencoder net;
    TrainConfig config;
    std::vector<double> history;  // reconstruction MSE over the training set after each epoch
    bool converged = false;

    double final_loss() const { return history.empty() ? std::numeric_limits<double>::quiet_NaN() : history.back(); }
};

/// Minibatch Adam on MSE. Stops once the epoch-end training loss falls
/// below stop_loss; otherwise returns after max_epochs, unconverged.
inline TrainedModel train(const Matrix& x, const MlpSpec& spec, const TrainConfig& cfg) {
    cfg.validate();
    require(x.cols() >= 1, ErrorKind::InsufficientData, "no training vectors");
    require(x.rows() == static_cast<Eigen::Index>(spec.input), ErrorKind::LengthMismatch,
            "training vectors have length " + std::to_string(x.rows()) + ", spec input is " + std::to_string(spec.input));
    require(x.allFinite(), ErrorKind::InvalidArgument, "training vectors contain non-finite values");

    TrainedModel model{Autoencoder(spec, cfg.seed), cfg, {}, false};
    auto& layers = model.net.layers();
    std::vector<Matrix> mw, vw;
    std::vector<Vector> mb, vb;
    for (const auto& layer : layers) {
        mw.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
        vw.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
        mb.push_back(Vector::Zero(layer.b.size()));
        vb.push_back(Vector::Zero(layer.b.size()));
    }

    const auto n = static_cast<std::size_t>(x.cols());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng shuffler(derive_seed(cfg.seed, 1));
    Gradients g;
    double b1t = 1.0, b2t = 1.0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffler.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            Matrix batch(x.rows(), static_cast<Eigen::Index>(len));
            for (std::size_t c = 0; c < len; ++c) batch.col(static_cast<Eigen::Index>(c)) = x.col(order[start + c]);
            const double batch_loss = model.net.backward(batch, g);
            require(std::isfinite(batch_loss), ErrorKind::Divergence,
                    "loss became non-finite in epoch " + std::to_string(epoch));
            b1t *= cfg.beta1;
            b2t *= cfg.beta2;
            const double c1 = 1.0 / (1.0 - b1t);
            const double c2 = 1.0 / (1.0 - b2t);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * g.w[l];
                vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * g.w[l].cwiseProduct(g.w[l]);
                layers[l].w.array() -= cfg.lr * (mw[l].array() * c1) / ((vw[l].array() * c2).sqrt() + cfg.eps);
                mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * g.b[l];
                vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * g.b[l].cwiseProduct(g.b[l]);
                layers[l].b.array() -= cfg.lr * (mb[l].array() * c1) / ((vb[l].array() * c2).sqrt() + cfg.eps);
            }
        }
        const double epoch_loss = model.net.loss(x);
        require(std::isfinite(epoch_loss), ErrorKind::Divergence,
                "loss became non-finite in epoch " + std::to_string(epoch));
        model.history.push_back(epoch_loss);
        if (epoch_loss < cfg.stop_loss) {
            model.converged = true;
            break;
        }
    }
    return model;
}

struct BottleneckChoice {
    std::size_t size = 0;
    bool converged = false;
    std::vector<std::pair<std::size_t, double>> final_losses;  // per candidate tried
};

/// Smallest candidate bottleneck whose model reaches the stop loss; the
/// largest candidate, unconverged, when none does.
inline BottleneckChoice choose_bottleneck(const Matrix& x, std::span<const std::size_t> candidates, MlpSpec spec,
                                          const TrainConfig& cfg) {
    require(!candidates.empty(), ErrorKind::InvalidArgument, "no bottleneck candidates");
    for (std::size_t i = 1; i < candidates.size(); ++i)
        require(candidates[i] > candidates[i - 1], ErrorKind::InvalidArgument, "candidates must be ascending");
    BottleneckChoice choice;
    for (std::size_t size : candidates) {
        spec.bottleneck = size;
        const auto model = train(x, spec, cfg);
        choice.final_losses.emplace_back(size, model.final_loss());
        if (model.converged) {
            choice.size = size;
            choice.converged = true;
            return choice;
        }
    }
    choice.size = candidates.back();
    return choice;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kModelVersion = 1;

inline nlohmann::json to_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format"] = "pulseaudit-autoencoder";
    j["version"] = kModelVersion;
    const auto& s = m.net.spec();
    j["spec"] = {{"input", s.input}, {"hidden", s.hidden}, {"bottleneck", s.bottleneck},
                 {"activations", {"relu", "linear", "relu", "linear"}}};
    j["seed"] = m.config.seed;
    j["train"] = {{"lr", m.config.lr},
                  {"beta1", m.config.beta1},
                  {"beta2", m.config.beta2},
                  {"eps", m.config.eps},
                  {"stop_loss", m.config.stop_loss},
                  {"max_epochs", m.config.max_epochs},
                  {"batch_size", m.config.batch_size}};
    j["converged"] = m.converged;
    j["history"] = m.history;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : m.net.layers()) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.w.size()));
        for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.w.cols(); ++c) w.push_back(layer.w(r, c));
        j["layers"].push_back({{"rows", layer.w.rows()},
                               {"cols", layer.w.cols()},
                               {"weights", w},
                               {"bias", std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size())}});
    }
    return j;
}

inline TrainedModel from_json(const nlohmann::json& j) {
    try {
        require(j.value("format", "") == "pulseaudit-autoencoder", ErrorKind::MalformedInput, "not an autoencoder model");
        require(j.at("version").get<int>() == kModelVersion, ErrorKind::MalformedInput, "unsupported model version");
        MlpSpec spec;
        spec.input = j.at("spec").at("input").get<std::size_t>();
        spec.hidden = j.at("spec").at("hidden").get<std::size_t>();
        spec.bottleneck = j.at("spec").at("bottleneck").get<std::size_t>();
        TrainedModel m{Autoencoder(spec, 0), {}, {}, false};
        m.config.seed = j.at("seed").get<std::uint64_t>();
        const auto& t = j.at("train");
        m.config.lr = t.at("lr").get<double>();
        m.config.beta1 = t.at("beta1").get<double>();
        m.config.beta2 = t.at("beta2").get<double>();
        m.config.eps = t.at("eps").get<double>();
        m.config.stop_loss = t.at("stop_loss").get<double>();
        m.config.max_epochs = t.at("max_epochs").get<std::size_t>();
        m.config.batch_size = t.at("batch_size").get<std::size_t>();
        m.converged = j.at("converged").get<bool>();
        m.history = j.at("history").get<std::vector<double>>();
        auto& layers = m.net.layers();
        require(j.at("layers").size() == layers.size(), ErrorKind::MalformedInput, "layer count mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& jl = j.at("layers")[l];
            const auto w = jl.at("weights").get<std::vector<double>>();
            const auto b = jl.at("bias").get<std::vector<double>>();
            require(static_cast<Eigen::Index>(w.size()) == layers[l].w.size() &&
                        static_cast<Eigen::Index>(b.size()) == layers[l].b.size(),
                    ErrorKind::MalformedInput, "layer " + std::to_string(l) + " has the wrong shape");
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < layers[l].w.rows(); ++r)
                for (Eigen::Index c = 0; c < layers[l].w.cols(); ++c) layers[l].w(r, c) = w[k++];
            for (Eigen::Index r = 0; r < layers[l].b.size(); ++r) layers[l].b(r) = b[static_cast<std::size_t>(r)];
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("model file: ") + e.what());
    }
}

}  // namespace pulseaudit::autoenc
