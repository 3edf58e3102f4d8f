#include <doctest.h>

#include "gridsafe/evalsafe.hpp"
#include "gridsafe/ridge.hpp"
#include "test_util.hpp"

using namespace gridsafe;

TEST_CASE("ridge: shapes and schema guards on case9") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 61;
    Dataset ds = generate_dataset(g, Task::PF, spec, spec, 12, 4);
    RidgeModel model = fit_ridge(ds, 1e-6);

    Prediction p = predict(model, ds.test[0].grid);
    CHECK(p.state.vm.size() == 9);
    CHECK(p.gen_p_mw.size() == 2);
    CHECK(flatten_labels(p).size() == 24);  // 2 * (9 + 2 + 1)

    // schema mismatch: a 30-bus graph cannot feed a case9 model
    CHECK_THROWS_AS(predict(model, testutil::case30()), DimensionError);

    CHECK_THROWS_AS(fit_ridge(ds, 0.0), ValidationError);
}

TEST_CASE("ridge: near-exact recovery of a linear target") {
    // PF outputs are locally linear in the load multiplier only for tiny
    // perturbations, so synthesize an exactly linear labeling instead: labels
    // equal an affine map of the mutated load powers.
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 62;
    Dataset ds = generate_dataset(g, Task::PF, spec, spec, 40, 0);
    for (auto& e : ds.train) {
        const double s = e.grid.loads[0].p_mw + 2.0 * e.grid.loads[1].p_mw;
        e.solution.state.vm.setConstant(9, 0.001 * s);
        e.solution.state.va.setConstant(9, -0.002 * s + 1.0);
        e.solution.gen_p_mw.setConstant(2, 3.0 * s);
        e.solution.gen_q_mvar.setConstant(2, 0.5 * s - 7.0);
        e.solution.slack_p_mw = -s;
        e.solution.slack_q_mvar = 42.0;
    }
    RidgeModel model = fit_ridge(ds, 1e-10);
    for (const auto& e : ds.train) {
        Prediction p = predict(model, e.grid);
        CHECK((flatten_labels(p) - flatten_labels(e.solution)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("ridge: constant outputs are predicted exactly") {
    Grid g = testutil::case9();
    MutationSpec price;
    price.scenario = Scenario::PriceVariation;
    price.seed = 63;
    // PF labels of price mutants are constant across the set
    Dataset ds = generate_dataset(g, Task::PF, price, price, 10, 3);
    RidgeModel model = fit_ridge(ds, 1e-4);
    for (const auto& e : ds.test) {
        Prediction p = predict(model, e.grid);
        CHECK((flatten_labels(p) - flatten_labels(e.solution)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("ridge: deterministic fit and JSON round trip") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 64;
    Dataset ds = generate_dataset(g, Task::PF, spec, spec, 10, 2);
    RidgeModel a = fit_ridge(ds, 1e-3);
    RidgeModel b = fit_ridge(ds, 1e-3);
    CHECK(a.weights == b.weights);

    Json j = ridge_to_json(a);
    RidgeModel c = ridge_from_json(j);
    CHECK(c.layout == a.layout);
    CHECK(c.weights == a.weights);
    CHECK(c.x_mean == a.x_mean);
    CHECK(c.fitted_digest == a.fitted_digest);

    Prediction pa = predict(a, ds.test[0].grid);
    Prediction pc = predict(c, ds.test[0].grid);
    CHECK(flatten_labels(pa) == flatten_labels(pc));
}

TEST_CASE("ridge beats the mean predictor on an OPF load-variation split") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 65;
    GenerateOptions opt;
    opt.workers = 2;
    Dataset ds = generate_dataset(g, Task::OPF, spec, spec, 60, 20, opt);
    RidgeModel model = fit_ridge(ds, 1e-4);

    // mean predictor: the train-label average, independent of the input
    VectorXd mean_y = VectorXd::Zero(model.layout.output_dim());
    for (const auto& e : ds.train) mean_y += flatten_labels(e.solution);
    mean_y /= static_cast<double>(ds.train.size());
    Prediction mean_pred = unflatten_labels(mean_y, model.layout.n_bus, model.layout.n_gen);

    std::vector<Prediction> ridge_preds, mean_preds;
    for (const auto& e : ds.test) {
        ridge_preds.push_back(predict(model, e.grid));
        mean_preds.push_back(mean_pred);
    }
    EvalConfig config;
    EvalReport ridge_rep = evaluate_predictions(ds.test, ridge_preds, config);
    EvalReport mean_rep = evaluate_predictions(ds.test, mean_preds, config);

    CHECK(ridge_rep.p_gen.mean < mean_rep.p_gen.mean);
    CHECK(ridge_rep.q_gen.mean < mean_rep.q_gen.mean);
    CHECK(ridge_rep.p_slack.mean < mean_rep.p_slack.mean);
    CHECK(ridge_rep.q_slack.mean < mean_rep.q_slack.mean);
    CHECK(ridge_rep.v.mean < mean_rep.v.mean);
    CHECK(ridge_rep.theta.mean < mean_rep.theta.mean);
}
