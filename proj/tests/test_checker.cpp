#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fixtures.hpp"
#include "mechlin/checker.hpp"
#include "mechlin/geometry.hpp"
#include "mechlin/sampling.hpp"

#include <cmath>

using namespace mechlin;

namespace {

const ConditionVerdict& verdict(const MFReport& r, const std::string& id) {
    const ConditionVerdict* v = r.find(id);
    REQUIRE(v != nullptr);
    return *v;
}

void check_same_statuses(const MFReport& a, const MFReport& b) {
    REQUIRE(a.verdicts.size() == b.verdicts.size());
    for (std::size_t i = 0; i < a.verdicts.size(); ++i) {
        CAPTURE(a.verdicts[i].condition);
        CHECK(a.verdicts[i].condition == b.verdicts[i].condition);
        CHECK(a.verdicts[i].status == b.verdicts[i].status);
    }
    CHECK(a.overall == b.overall);
}

}  // namespace

TEST_CASE("box sampling is deterministic and stays inside the box") {
    const Box box{{-2.0, 1.0}, {0.0, 10.0}, {-0.5, -0.25}};
    const auto a = sample_box(box, 64, 7);
    const auto b = sample_box(box, 64, 7);
    const auto c = sample_box(box, 64, 8);
    REQUIRE(a.size() == 64);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(box_contains(box, a[i]));
        CHECK(a[i] == b[i]);
    }
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != c[i];
    CHECK(differs);

    // Low-discrepancy coverage: each third of every side gets its share.
    for (int dim = 0; dim < 3; ++dim) {
        int counts[3] = {0, 0, 0};
        for (const auto& p : a) {
            const double u = (p(dim) - box[static_cast<std::size_t>(dim)][0]) /
                             (box[static_cast<std::size_t>(dim)][1] - box[static_cast<std::size_t>(dim)][0]);
            ++counts[std::min(2, static_cast<int>(u * 3.0))];
        }
        for (int bin = 0; bin < 3; ++bin) CHECK(counts[bin] >= 10);
    }
}

TEST_CASE("numerical rank of small frames") {
    std::vector<Eigen::VectorXd> vs;
    vs.push_back(Eigen::Vector2d(1, 0));
    vs.push_back(Eigen::Vector2d(0, 1));
    CHECK(numerical_rank(vs, 1e-8) == 2);

    vs.clear();
    vs.push_back(Eigen::Vector2d(1, 1));
    vs.push_back(Eigen::Vector2d(2, 2));
    CHECK(numerical_rank(vs, 1e-8) == 1);

    vs.clear();
    vs.push_back(Eigen::Vector2d(0, 0));
    CHECK(numerical_rank(vs, 1e-8) == 0);

    // Wheel benchmark: the control frame degenerates where cos x1 = 0.
    const auto sys = fixtures::iwp({{-2.0, 2.0}, {-5.0, 5.0}});
    Eigen::VectorXd x(2);
    x << std::acos(-1.0) / 2.0, 0.3;
    const Eigen::MatrixXd frame =
        evaluate_frame({sys.ad(0), sys.ad(1)}, x, sys.params());
    CHECK(numerical_rank(frame, 1e-8) == 1);
    x(0) = 0.4;
    CHECK(numerical_rank(evaluate_frame({sys.ad(0), sys.ad(1)}, x, sys.params()), 1e-8) == 2);
}

TEST_CASE("membership residual against simple spans") {
    Eigen::MatrixXd D(3, 2);
    D << 1, 0, 0, 1, 0, 0;
    CHECK(membership_residual(D.col(0), D) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(membership_residual(Eigen::Vector3d(0, 0, 1), D) == doctest::Approx(1.0));
    CHECK(membership_residual(Eigen::Vector3d(3, 4, 0), D) ==
          doctest::Approx(0.0).epsilon(1e-14));

    // Unnormalized targets divide by their own length once it exceeds 1.
    CHECK(membership_residual(Eigen::Vector3d(0, 0, 5), D) == doctest::Approx(1.0));
    CHECK(membership_residual(Eigen::Vector3d(0, 0, 0.25), D) == doctest::Approx(0.25));

    Eigen::MatrixXd g(2, 1);
    g << 0, 1;
    CHECK(membership_residual(Eigen::Vector2d(1, 0), g) == 1.0);
}

TEST_CASE("plan validation rejects degenerate settings") {
    SamplingPlan plan;
    plan.sample_count = 4;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = {};
    plan.rank_tol = 0.0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = {};
    plan.membership_tol = -1.0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = {};
    plan.boundary_fraction = 1.0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = {};
    CHECK_NOTHROW(plan.validate());
}

TEST_CASE("curved two-dof benchmark is rejected with unit residual") {
    const auto sys = fixtures::example1();
    const SamplingPlan plan;
    const MFReport report = check_all(sys, plan);

    CHECK(verdict(report, "MF1'").status == ConditionStatus::Pass);
    CHECK(verdict(report, "MF3'").status == ConditionStatus::Pass);
    CHECK(verdict(report, "MF3'").worst_residual == 0.0);

    const auto& mf5 = verdict(report, "MF5'");
    CHECK(mf5.status == ConditionStatus::Fail);
    CHECK(mf5.worst_residual == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mf5.samples_failed == plan.sample_count);
    CHECK(box_contains(sys.domain(), mf5.witness.x));
    CHECK(report.overall == Overall::NotLinearizable);
}

TEST_CASE("wheel benchmark passes the two-dof battery on a safe box") {
    const auto sys = fixtures::iwp();
    const MFReport report = check_all(sys, SamplingPlan{});
    for (const auto& v : report.verdicts) {
        CAPTURE(v.condition);
        CHECK(v.status == ConditionStatus::Pass);
        CHECK(v.samples_failed == 0);
    }
    // Both covariant-derivative conditions hold identically, not just within
    // tolerance: the tested fields vanish.
    CHECK(verdict(report, "MF3'").worst_residual == 0.0);
    CHECK(verdict(report, "MF5'").worst_residual == 0.0);
    CHECK(report.overall == Overall::Linearizable);
}

TEST_CASE("rank refinement pins the wheel singular configuration") {
    const auto sys = fixtures::iwp({{-2.0, 2.0}, {-5.0, 5.0}});
    const MFReport report = check_all(sys, SamplingPlan{});
    const auto& mf1 = verdict(report, "MF1'");
    CHECK(mf1.status == ConditionStatus::Boundary);
    CHECK(std::abs(std::abs(mf1.witness.x(0)) - std::acos(-1.0) / 2.0) < 1e-6);
    CHECK(mf1.worst_residual < 1e-10);
    CHECK(report.overall == Overall::Inconclusive);
    REQUIRE(report.notes.size() == 2);
    CHECK(report.notes[0].find("loses rank") != std::string::npos);
    // every report closes by scoping the verdict to the supplied box
    CHECK(report.notes[1].find("domain box") != std::string::npos);
}

TEST_CASE("cart chain passes the full battery inside the safe slab") {
    const auto sys = fixtures::tora3();
    const MFReport report = check_all(sys, SamplingPlan{});
    REQUIRE(report.verdicts.size() == 1 + 2 + 3 + 9);
    for (const auto& v : report.verdicts) {
        CAPTURE(v.condition);
        CHECK(v.status == ConditionStatus::Pass);
    }
    CHECK(report.overall == Overall::Linearizable);

    // The only covariant curvature correction that does not vanish identically
    // is the double derivative along the control field, and it stays inside
    // the second-level span to near machine accuracy.
    CHECK(verdict(report, "MF4[0,0]").worst_residual < 1e-9);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j) {
            if (k == 0 && j == 0) continue;
            const std::string id =
                "MF4[" + std::to_string(k) + "," + std::to_string(j) + "]";
            CHECK(verdict(report, id).worst_residual == 0.0);
        }
    for (int i = 0; i < 3; ++i)
        CHECK(verdict(report, "MF3[" + std::to_string(i) + "]").worst_residual == 0.0);
}

TEST_CASE("widened cart-chain box is demoted by the located singular plane") {
    const auto sys = fixtures::tora3(2.0);
    const MFReport report = check_all(sys, SamplingPlan{});
    const auto& mf1 = verdict(report, "MF1");
    const bool demoted =
        mf1.status == ConditionStatus::Boundary || mf1.status == ConditionStatus::Fail;
    CHECK(demoted);
    CHECK(std::abs(std::abs(mf1.witness.x(2)) - std::acos(-1.0) / 2.0) < 0.05);
    CHECK(report.overall != Overall::Linearizable);
}

TEST_CASE("bracket escape from the first-level span is detected") {
    const auto sys = fixtures::noninvolutive3();
    const auto verdicts = check_mf2(sys, SamplingPlan{});
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].condition == "MF2[0]");
    CHECK(verdicts[0].status == ConditionStatus::Pass);
    CHECK(verdicts[1].condition == "MF2[1]");
    CHECK(verdicts[1].status == ConditionStatus::Fail);
    CHECK(verdicts[1].worst_residual >= 0.5);
    CHECK(check_all(sys, SamplingPlan{}).overall == Overall::NotLinearizable);
}

TEST_CASE("integrator chains and random controllable linear systems pass") {
    CHECK(check_all(fixtures::controllable_chain(4), SamplingPlan{}).overall ==
          Overall::Linearizable);
    CHECK(check_all(fixtures::controllable_chain(2), SamplingPlan{}).overall ==
          Overall::Linearizable);
    std::mt19937 rng(20240818);
    SamplingPlan quick;
    quick.sample_count = 32;
    for (int trial = 0; trial < 4; ++trial) {
        const auto sys = fixtures::random_controllable_lms(rng, 3 + trial % 2);
        const MFReport report = check_all(sys, quick);
        CAPTURE(trial);
        CHECK(report.overall == Overall::Linearizable);
        for (const auto& v : report.verdicts) {
            CAPTURE(v.condition);
            if (v.condition.rfind("MF1", 0) != 0) CHECK(v.worst_residual < 1e-10);
        }
    }
}

TEST_CASE("reports are reproducible bit for bit") {
    const auto sys = fixtures::tora3();
    SamplingPlan plan;
    plan.rng_seed = 123;
    const MFReport a = check_all(sys, plan);
    const MFReport b = check_all(sys, plan);
    REQUIRE(a.verdicts.size() == b.verdicts.size());
    for (std::size_t i = 0; i < a.verdicts.size(); ++i) {
        CHECK(a.verdicts[i].condition == b.verdicts[i].condition);
        CHECK(a.verdicts[i].status == b.verdicts[i].status);
        CHECK(a.verdicts[i].worst_residual == b.verdicts[i].worst_residual);
        CHECK(a.verdicts[i].samples_failed == b.verdicts[i].samples_failed);
        CHECK(a.verdicts[i].witness.x == b.verdicts[i].witness.x);
    }
    CHECK(a.notes == b.notes);
    CHECK(a.overall == b.overall);
}

TEST_CASE("loosening the membership tolerance can only promote verdicts") {
    const auto sys = fixtures::example1();
    SamplingPlan loose;
    loose.membership_tol = 2.0;
    const MFReport report = check_all(sys, loose);
    CHECK(verdict(report, "MF5'").status == ConditionStatus::Pass);
    CHECK(report.overall == Overall::Linearizable);

    const MFReport wheel = check_all(fixtures::iwp(), loose);
    CHECK(wheel.overall == Overall::Linearizable);
}

TEST_CASE("mechanical feedback preserves every verdict status") {
    std::mt19937 rng(555);
    SamplingPlan quick;
    quick.sample_count = 32;

    const auto base2 = fixtures::example1();
    const MFReport ref2 = check_all(base2, quick);
    for (int trial = 0; trial < 3; ++trial) {
        auto fb = fixtures::random_feedback(rng, 2);
        check_same_statuses(ref2, check_all(apply_feedback(base2, fb.gamma, fb.alpha, fb.beta),
                                            quick));
    }

    const auto base3 = fixtures::tora3();
    const MFReport ref3 = check_all(base3, quick);
    auto fb = fixtures::random_feedback(rng, 3);
    check_same_statuses(ref3,
                        check_all(apply_feedback(base3, fb.gamma, fb.alpha, fb.beta), quick));
}

TEST_CASE("linear coordinate changes preserve every verdict status") {
    SamplingPlan quick;
    quick.sample_count = 32;

    const auto base2 = fixtures::example1();
    Eigen::MatrixXd T2(2, 2);
    T2 << 2, 1, 0, 1;
    check_same_statuses(check_all(base2, quick),
                        check_all(linear_change_of_coordinates(base2, T2), quick));

    const auto base3 = fixtures::tora3();
    Eigen::MatrixXd T3 = Eigen::MatrixXd::Zero(3, 3);
    T3(0, 1) = 0.5;  // swap the cart coordinates, keep the arm angle
    T3(1, 0) = 2.0;
    T3(2, 2) = 1.0;
    check_same_statuses(check_all(base3, quick),
                        check_all(linear_change_of_coordinates(base3, T3), quick));
}

TEST_CASE("dimension guards on the per-condition entry points") {
    CHECK_THROWS_AS(check_n2(fixtures::tora3(), SamplingPlan{}), std::invalid_argument);
    CHECK_THROWS_AS(check_mf2(fixtures::example1(), SamplingPlan{}), std::invalid_argument);
    CHECK_THROWS_AS(check_mf4(fixtures::example1(), SamplingPlan{}), std::invalid_argument);
}
