#include <doctest.h>

#include <set>

#include "gridsafe/perturb.hpp"
#include "test_util.hpp"

using namespace gridsafe;
using testutil::diff_grids;

TEST_CASE("mutate_loads: identity bounds leave the grid unchanged") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.load_mult_min = 1.0;
    spec.load_mult_max = 1.0;
    spec.seed = 3;
    Mutation m = mutate_loads(g, spec, 0);
    CHECK(m.grid == g);
}

TEST_CASE("mutate_loads: multipliers stay inside the spec bounds") {
    Grid g = testutil::case30();
    MutationSpec spec;
    spec.seed = 17;
    for (std::uint64_t k = 0; k < 50; ++k) {
        Mutation m = mutate_loads(g, spec, k);
        for (std::size_t i = 0; i < g.loads.size(); ++i) {
            const double ratio = m.grid.loads[i].p_mw / g.loads[i].p_mw;
            CHECK(ratio >= 0.9);
            CHECK(ratio <= 1.1);
            // q scaled by the same draw
            CHECK(m.grid.loads[i].q_mvar / g.loads[i].q_mvar ==
                  doctest::Approx(ratio).epsilon(1e-12));
        }
    }
}

TEST_CASE("mutate_loads: fraction selects a strict subset") {
    Grid g = testutil::case30();  // 20 loads
    MutationSpec spec;
    spec.load_fraction = 0.5;
    spec.seed = 5;
    Mutation m = mutate_loads(g, spec, 1);
    int changed = 0;
    for (std::size_t i = 0; i < g.loads.size(); ++i)
        if (m.grid.loads[i].p_mw != g.loads[i].p_mw) ++changed;
    CHECK(changed == 10);
    CHECK(m.metadata.at("loads").size() == 10);
}

TEST_CASE("mutate_loads: same seed and draw index reproduce the mutant") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 123;
    Mutation a = mutate_loads(g, spec, 7);
    Mutation b = mutate_loads(g, spec, 7);
    CHECK(a.grid == b.grid);
    Mutation c = mutate_loads(g, spec, 8);
    CHECK(!(a.grid == c.grid));

    Grid no_loads = testutil::zero_injection_chain();
    CHECK_THROWS_AS(mutate_loads(no_loads, spec, 0), ValidationError);
}

TEST_CASE("mutate_prices: only linear coefficients move, within the original range") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.scenario = Scenario::PriceVariation;
    spec.seed = 9;
    const double lo = std::min({g.slack.cost.b, g.generators[0].cost.b, g.generators[1].cost.b});
    const double hi = std::max({g.slack.cost.b, g.generators[0].cost.b, g.generators[1].cost.b});
    for (std::uint64_t k = 0; k < 40; ++k) {
        Mutation m = mutate_prices(g, spec, k);
        auto diffs = diff_grids(g, m.grid);
        for (const auto& d : diffs) CHECK(d.find("cost.b") != std::string::npos);
        for (const auto& gen : m.grid.generators) {
            CHECK(gen.cost.b >= lo);
            CHECK(gen.cost.b <= hi);
        }
        CHECK(m.grid.slack.cost.b >= lo);
        CHECK(m.grid.slack.cost.b <= hi);
        for (const auto& gen : m.grid.generators) CHECK(gen.in_service);
    }
}

TEST_CASE("mutate_prices: collapsed range returns the grid unchanged with a flag") {
    Grid g = testutil::case9();
    g.slack.cost.b = 4.0;
    g.generators[0].cost.b = 4.0;
    g.generators[1].cost.b = 4.0;
    MutationSpec spec;
    spec.scenario = Scenario::PriceVariation;
    Mutation m = mutate_prices(g, spec, 0);
    CHECK(m.degenerate);
    CHECK(m.grid == g);
}

TEST_CASE("line_outage: exactly one branch leaves service") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.scenario = Scenario::LineOutage;
    spec.seed = 31;
    std::set<int> seen;
    for (std::uint64_t k = 0; k < 200; ++k) {
        Mutation m = line_outage(g, spec, k);
        int out_count = 0;
        for (const auto& br : m.grid.branches)
            if (!br.in_service) ++out_count;
        CHECK(out_count == 1);
        seen.insert(m.metadata.at("branch").get<int>());
    }
    CHECK(seen.size() == 9);  // uniform support covers every branch
}

TEST_CASE("scenario purity: each scenario touches only its own fields") {
    Grid g = testutil::case9();
    MutationSpec load_spec;
    load_spec.seed = 40;
    MutationSpec price_spec;
    price_spec.scenario = Scenario::PriceVariation;
    price_spec.seed = 41;
    MutationSpec line_spec;
    line_spec.scenario = Scenario::LineOutage;
    line_spec.seed = 42;

    for (std::uint64_t k = 0; k < 100; ++k) {
        for (const auto& d : diff_grids(g, mutate_loads(g, load_spec, k).grid)) {
            const bool ok = d.find("load[") == 0 &&
                            (d.find(".p_mw") != std::string::npos ||
                             d.find(".q_mvar") != std::string::npos);
            CHECK(ok);
        }
        for (const auto& d : diff_grids(g, mutate_prices(g, price_spec, k).grid))
            CHECK(d.find("cost.b") != std::string::npos);
        auto line_diffs = diff_grids(g, line_outage(g, line_spec, k).grid);
        REQUIRE(line_diffs.size() == 1);
        CHECK(line_diffs[0].find(".in_service") != std::string::npos);
    }
}

TEST_CASE("replay_mutation: rebuilds mutants bitwise from metadata") {
    Grid g = testutil::case30();
    for (Scenario sc : {Scenario::LoadVariation, Scenario::PriceVariation, Scenario::LineOutage}) {
        MutationSpec spec;
        spec.scenario = sc;
        spec.seed = 77;
        for (std::uint64_t k = 0; k < 20; ++k) {
            Mutation m = apply_mutation(g, spec, k);
            Grid replayed = replay_mutation(g, sc, m.metadata);
            CHECK(replayed == m.grid);
        }
    }
}

TEST_CASE("generate_dataset: counts, determinism and worker independence") {
    Grid g = testutil::case9();
    MutationSpec train_spec;
    train_spec.seed = 2025;
    MutationSpec test_spec = train_spec;
    test_spec.scenario = Scenario::InDistributionLoad;

    GenerateOptions opt1;
    opt1.workers = 1;
    Dataset a = generate_dataset(g, Task::PF, train_spec, test_spec, 30, 10, opt1);
    CHECK(a.train.size() == 30);
    CHECK(a.test.size() == 10);

    GenerateOptions opt8;
    opt8.workers = 8;
    Dataset b = generate_dataset(g, Task::PF, train_spec, test_spec, 30, 10, opt8);
    REQUIRE(b.train.size() == a.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].draw_index == b.train[i].draw_index);
        CHECK(a.train[i].grid == b.train[i].grid);
        CHECK(a.train[i].solution == b.train[i].solution);
    }

    // train and test draw ranges never overlap
    for (const auto& e : a.test) CHECK(e.draw_index >= kTestDrawOffset);
    for (const auto& e : a.train) CHECK(e.draw_index < kTestDrawOffset);
}

TEST_CASE("generate_dataset: every stored oracle re-verifies on its grid") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 99;
    MutationSpec line_spec = spec;
    line_spec.scenario = Scenario::LineOutage;
    Dataset ds = generate_dataset(g, Task::PF, spec, line_spec, 15, 9);
    for (const auto& e : ds.test) {
        AdmittanceMatrix adm = build_admittance(e.grid);
        FullResiduals res = full_residuals(e.grid, adm, e.solution);
        CHECK(std::max(res.p.cwiseAbs().maxCoeff(), res.q.cwiseAbs().maxCoeff()) < 1e-7);
        // line-outage entries each have exactly 8 in-service branches
        int live = 0;
        for (const auto& br : e.grid.branches)
            if (br.in_service) ++live;
        CHECK(live == 8);
        // islanding outages (branches 1-4, 3-6, 8-2) never survive the filter
        const int outaged = e.metadata.at("branch").get<int>();
        CHECK(outaged != 1);
        CHECK(outaged != 4);
        CHECK(outaged != 7);
    }
    // the filter did reject draws on the way (a third of outages island case9)
    CHECK(ds.test_rejections > 0);
}

TEST_CASE("generate_dataset: price mutants keep the base PF solution bitwise") {
    Grid g = testutil::case9();
    PFResult base = solve_powerflow(g);
    MutationSpec price;
    price.scenario = Scenario::PriceVariation;
    price.seed = 4;
    Dataset ds = generate_dataset(g, Task::PF, price, price, 5, 5);
    for (const auto& e : ds.train) CHECK(e.solution == base.solution);
    for (const auto& e : ds.test) CHECK(e.solution == base.solution);
}

TEST_CASE("generate_dataset: impossible requests fail with a generation error") {
    Grid g = testutil::case9();
    // every load scaled so far beyond capacity that no mutant can converge
    for (auto& l : g.loads) l.p_mw *= 40.0;
    MutationSpec spec;
    spec.seed = 1;
    CHECK_THROWS_AS(generate_dataset(g, Task::PF, spec, spec, 5, 0), GenerationError);
}
