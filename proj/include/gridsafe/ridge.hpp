#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gridsafe/dataset_io.hpp"
#include "gridsafe/hetero.hpp"

namespace gridsafe {

/// Flattened-feature layout of a hetero graph: node counts per type in
/// canonical type order. Graphs from the same base case always share it
/// (outaged lines stay as nodes with in_service = 0).
struct FeatureLayout {
    std::vector<std::pair<std::string, std::pair<int, int>>> blocks;  // type -> (nodes, columns)
    int feature_dim = 0;
    int n_bus = 0;
    int n_gen = 0;

    int output_dim() const { return 2 * (n_bus + n_gen + 1); }

    friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

inline FeatureLayout layout_of(const HeteroGraph& graph) {
    FeatureLayout layout;
    for (const char* type : kNodeTypes) {
        const NodeTable& t = graph.nodes.at(type);
        const auto cols = static_cast<int>(t.columns.size());
        layout.blocks.emplace_back(type, std::make_pair(t.count(), cols));
        layout.feature_dim += t.count() * cols;
    }
    layout.n_bus = graph.nodes.at("bus").count();
    layout.n_gen = graph.nodes.at("generator").count();
    return layout;
}

inline VectorXd flatten_features(const HeteroGraph& graph, const FeatureLayout& layout) {
    if (layout_of(graph) != layout)
        throw DimensionError("graph schema does not match the model's feature layout");
    VectorXd x(layout.feature_dim);
    int k = 0;
    for (const char* type : kNodeTypes)
        for (const auto& row : graph.nodes.at(type).rows)
            for (double vv : row) x[k++] = vv;
    return x;
}

inline VectorXd flatten_labels(const GridSolution& sol) {
    const auto nb = static_cast<int>(sol.state.vm.size());
    const auto ng = static_cast<int>(sol.gen_p_mw.size());
    VectorXd y(2 * (nb + ng + 1));
    int k = 0;
    for (int i = 0; i < nb; ++i) {
        y[k++] = sol.state.vm[i];
        y[k++] = sol.state.va[i];
    }
    for (int g = 0; g < ng; ++g) {
        y[k++] = sol.gen_p_mw[g];
        y[k++] = sol.gen_q_mvar[g];
    }
    y[k++] = sol.slack_p_mw;
    y[k++] = sol.slack_q_mvar;
    return y;
}

inline Prediction unflatten_labels(const VectorXd& y, int n_bus, int n_gen) {
    if (y.size() != 2 * (n_bus + n_gen + 1))
        throw DimensionError("label vector size does not match the layout");
    Prediction p;
    p.state.vm.resize(n_bus);
    p.state.va.resize(n_bus);
    int k = 0;
    for (int i = 0; i < n_bus; ++i) {
        p.state.vm[i] = y[k++];
        p.state.va[i] = y[k++];
    }
    p.gen_p_mw.resize(n_gen);
    p.gen_q_mvar.resize(n_gen);
    for (int g = 0; g < n_gen; ++g) {
        p.gen_p_mw[g] = y[k++];
        p.gen_q_mvar[g] = y[k++];
    }
    p.slack_p_mw = y[k++];
    p.slack_q_mvar = y[k++];
    return p;
}

/// Ridge regression on standardized flattened features against flattened
/// labels. Deliberately simple: it exists so the evaluation pipeline runs
/// end-to-end without an external learner.
struct RidgeModel {
    FeatureLayout layout;
    double ridge = 0.0;
    VectorXd x_mean, x_scale;  // train standardization (scale 1 for constants)
    VectorXd y_mean;
    Eigen::MatrixXd weights;  // feature_dim x output_dim
    std::string fitted_digest;
    int n_train = 0;
};

inline RidgeModel fit_ridge(const Dataset& dataset, double ridge_coeff) {
    if (dataset.train.empty()) throw ValidationError("ridge fit needs at least one train entry");
    if (!(ridge_coeff > 0.0)) throw ValidationError("ridge coefficient must be positive");

    HeteroGraph first = embed_grid(dataset.train.front().grid);
    RidgeModel model;
    model.layout = layout_of(first);
    model.ridge = ridge_coeff;
    model.fitted_digest = dataset_digest(dataset);
    model.n_train = static_cast<int>(dataset.train.size());

    const auto n = static_cast<int>(dataset.train.size());
    const int d = model.layout.feature_dim;
    const int t = model.layout.output_dim();
    Eigen::MatrixXd X(n, d);
    Eigen::MatrixXd Y(n, t);
    for (int r = 0; r < n; ++r) {
        HeteroGraph g = embed_grid(dataset.train[static_cast<std::size_t>(r)].grid);
        X.row(r) = flatten_features(g, model.layout).transpose();
        Y.row(r) = flatten_labels(dataset.train[static_cast<std::size_t>(r)].solution).transpose();
    }
    if (X.cwiseAbs().maxCoeff() == 0.0)
        throw ValidationError("degenerate all-zero feature matrix");

    model.x_mean = X.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - model.x_mean.transpose();
    model.x_scale = (Xc.array().square().colwise().mean()).sqrt();
    for (int c = 0; c < d; ++c)
        if (model.x_scale[c] == 0.0) model.x_scale[c] = 1.0;
    Xc.array().rowwise() /= model.x_scale.transpose().array();

    model.y_mean = Y.colwise().mean();
    Eigen::MatrixXd Yc = Y.rowwise() - model.y_mean.transpose();

    Eigen::MatrixXd gram = Xc.transpose() * Xc;
    gram.diagonal().array() += ridge_coeff;
    model.weights = gram.ldlt().solve(Xc.transpose() * Yc);
    return model;
}

inline Prediction predict(const RidgeModel& model, const HeteroGraph& graph) {
    VectorXd x = flatten_features(graph, model.layout);
    VectorXd xs = (x - model.x_mean).cwiseQuotient(model.x_scale);
    VectorXd y = model.y_mean + model.weights.transpose() * xs;
    return unflatten_labels(y, model.layout.n_bus, model.layout.n_gen);
}

inline Prediction predict(const RidgeModel& model, const Grid& grid) {
    return predict(model, embed_grid(grid));
}

// --- persistence ---

inline Json ridge_to_json(const RidgeModel& m) {
    Json blocks = Json::array();
    for (const auto& [type, shape] : m.layout.blocks)
        blocks.push_back(Json::array({type, shape.first, shape.second}));
    auto vec = [](const VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    std::vector<std::vector<double>> w(m.weights.rows());
    for (int r = 0; r < m.weights.rows(); ++r)
        w[r].assign(m.weights.row(r).begin(), m.weights.row(r).end());
    return Json{{"kind", "ridge"},
                {"layout", Json{{"blocks", std::move(blocks)},
                                {"feature_dim", m.layout.feature_dim},
                                {"n_bus", m.layout.n_bus},
                                {"n_gen", m.layout.n_gen}}},
                {"ridge", m.ridge},
                {"x_mean", vec(m.x_mean)},
                {"x_scale", vec(m.x_scale)},
                {"y_mean", vec(m.y_mean)},
                {"weights", std::move(w)},
                {"fitted_digest", m.fitted_digest},
                {"n_train", m.n_train}};
}

inline RidgeModel ridge_from_json(const Json& j) {
    RidgeModel m;
    try {
        if (j.at("kind").get<std::string>() != "ridge") throw SchemaError("not a ridge model");
        for (const auto& b : j.at("layout").at("blocks"))
            m.layout.blocks.emplace_back(
                b.at(0).get<std::string>(),
                std::make_pair(b.at(1).get<int>(), b.at(2).get<int>()));
        m.layout.feature_dim = j.at("layout").at("feature_dim").get<int>();
        m.layout.n_bus = j.at("layout").at("n_bus").get<int>();
        m.layout.n_gen = j.at("layout").at("n_gen").get<int>();
        m.ridge = j.at("ridge").get<double>();
        auto vec = [](const Json& a) {
            auto v = a.get<std::vector<double>>();
            return Eigen::Map<const VectorXd>(v.data(), static_cast<int>(v.size())).eval();
        };
        m.x_mean = vec(j.at("x_mean"));
        m.x_scale = vec(j.at("x_scale"));
        m.y_mean = vec(j.at("y_mean"));
        auto w = j.at("weights").get<std::vector<std::vector<double>>>();
        m.weights.resize(static_cast<int>(w.size()), m.y_mean.size());
        for (std::size_t r = 0; r < w.size(); ++r)
            m.weights.row(static_cast<int>(r)) =
                Eigen::Map<const VectorXd>(w[r].data(), static_cast<int>(w[r].size()));
        m.fitted_digest = j.at("fitted_digest").get<std::string>();
        m.n_train = j.at("n_train").get<int>();
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("ridge model document: ") + e.what());
    }
    return m;
}

}  // namespace gridsafe
