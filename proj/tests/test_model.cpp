#include "covsteer/model.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace covsteer;
using nlohmann::json;

namespace {

json example_doc() { return json::parse(serialize_problem(testing::double_integrator())); }

std::string field_of(const std::string& text) {
    try {
        parse_problem(text);
    } catch (const ParseError& e) {
        return e.field();
    }
    return "<no error>";
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("example problem broadcasts single matrices over the horizon") {
    const ProblemSpec s = testing::double_integrator();
    CHECK(s.horizon == 20);
    CHECK(s.nx() == 4);
    CHECK(s.nu() == 2);
    CHECK(s.nw() == 3);
    CHECK(s.ny() == 3);
    CHECK(s.A.size() == 20);
    CHECK(s.C.size() == 21);
    CHECK(s.A[7] == s.A[0]);
    CHECK(validate(s).ok());
}

TEST_CASE("step ranges count negative indices from the end") {
    const ProblemSpec s = testing::double_integrator();
    CHECK(s.state_halfspaces[0].empty());
    CHECK(s.state_halfspaces[1].size() == 2);
    CHECK(s.state_halfspaces[19].size() == 2);
    CHECK(s.state_halfspaces[20].empty());
    CHECK(s.max_state_constraints() == 2);
    CHECK(s.max_input_constraints() == 0);
    CHECK(s.has_chance_constraints());
    CHECK_FALSE(s.without_constraints().has_chance_constraints());
}

TEST_CASE("serialize then parse is the identity") {
    const ProblemSpec s = testing::double_integrator();
    const ProblemSpec back = parse_problem(serialize_problem(s));
    CHECK(back == s);

    std::mt19937_64 rng(11);
    const ProblemSpec r = testing::random_spec(rng, 3, 2, 2, 5);
    CHECK(parse_problem(serialize_problem(r)) == r);
}

TEST_CASE("time-varying sequences are read per step") {
    json doc = example_doc();
    doc["horizon"] = 2;
    doc["dynamics"]["A"] = json::array({doc["dynamics"]["A"][0], doc["dynamics"]["A"][0]});
    doc["dynamics"]["A"][1][0][0] = 2.0;
    doc["dynamics"]["B"] = doc["dynamics"]["B"][0];
    doc["dynamics"]["G"] = doc["dynamics"]["G"][0];
    doc["measurement"]["C"] = doc["measurement"]["C"][0];
    doc["measurement"]["D"] = doc["measurement"]["D"][0];
    doc["cost"]["Q"] = doc["cost"]["Q"][0];
    doc["cost"]["R"] = doc["cost"]["R"][0];
    doc["constraints"]["state"] = json::array();
    const ProblemSpec s = parse_problem(doc.dump());
    CHECK(s.A[0](0, 0) == 1.0);
    CHECK(s.A[1](0, 0) == 2.0);
    CHECK(s.C.size() == 3);
}

TEST_CASE("schema errors name the field") {
    json doc = example_doc();
    doc.erase("horizon");
    CHECK(field_of(doc.dump()) == "horizon");

    doc = example_doc();
    doc["dynamics"].erase("B");
    CHECK(field_of(doc.dump()) == "dynamics.B");

    doc = example_doc();
    doc["initial"]["mu0"] = "x";
    CHECK(field_of(doc.dump()) == "initial.mu0");

    doc = example_doc();
    doc["horizon"] = 0;
    CHECK(field_of(doc.dump()) == "horizon");

    CHECK_THROWS_AS(parse_problem("{not json"), ParseError);
    CHECK_THROWS_AS(parse_problem("[1, 2]"), ParseError);
}

TEST_CASE("dimension mismatches are validation errors") {
    json doc = example_doc();
    doc["dynamics"]["B"] = json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})});
    CHECK_THROWS_AS(parse_problem(doc.dump()), ValidationError);

    doc = example_doc();
    doc["dynamics"]["A"] = json::array({doc["dynamics"]["A"][0], doc["dynamics"]["A"][0]});
    CHECK_THROWS_AS(parse_problem(doc.dump()), ValidationError);  // wrong sequence length

    doc = example_doc();
    doc["terminal"]["mu_f"] = json::array({1.0, 2.0});
    CHECK_THROWS_AS(parse_problem(doc.dump()), ValidationError);
}

TEST_CASE("validate reports ill-posed data") {
    ProblemSpec s = testing::double_integrator();
    s.R[3] = Matrix::Zero(2, 2);
    CHECK(validate(s).mentions("R_k at k=3"));

    s = testing::double_integrator();
    s.D[0] = Matrix::Zero(3, 3);
    CHECK(validate(s).mentions("D_k rank-deficient at k=0"));

    s = testing::double_integrator();
    s.Sigma_xf(0, 1) = 0.5;
    CHECK(validate(s).mentions("Sigma_xf is not symmetric"));

    s = testing::double_integrator();
    s.Delta_x = 0.7;
    CHECK(validate(s).mentions("Delta_x"));

    s = testing::double_integrator();
    s.state_halfspaces[0].push_back({Vector::Ones(4), 1.0});
    CHECK(validate(s).mentions("k=0"));

    s = testing::double_integrator();
    s.horizon = 0;
    CHECK_FALSE(validate(s).ok());
}

TEST_CASE("rescale_horizon keeps the constraint pattern") {
    const ProblemSpec s = testing::double_integrator();
    for (int N : {5, 50}) {
        const ProblemSpec r = rescale_horizon(s, N);
        CHECK(r.horizon == N);
        CHECK(r.A.size() == static_cast<std::size_t>(N));
        CHECK(r.C.size() == static_cast<std::size_t>(N + 1));
        CHECK(r.state_halfspaces[1] == s.state_halfspaces[1]);
        CHECK(r.state_halfspaces[static_cast<std::size_t>(N - 1)] == s.state_halfspaces[1]);
        CHECK(r.state_halfspaces[static_cast<std::size_t>(N)].empty());
        CHECK(r.mu_f == s.mu_f);
        CHECK(validate(r).ok());
    }
    CHECK_THROWS_AS(rescale_horizon(s, 1), std::invalid_argument);
    ProblemSpec tv = s;
    tv.A[4](0, 0) = 3.0;
    CHECK_THROWS_AS(rescale_horizon(tv, 10), ValidationError);
}

}
