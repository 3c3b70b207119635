#include <catch2/catch_amalgamated.hpp>

#include "linepix/manifold.hpp"

using namespace linepix;

TEST_CASE("label: 1 inside [0, 40], 0 outside") {
    CHECK(label_of_angle(20.0) == 1);
    CHECK(label_of_angle(90.0) == 0);
    CHECK(label_of_angle(40.5) == 0);
    CHECK(label_of_angle(0.0) == 1);
    CHECK(label_of_angle(40.0) == 1);  // inclusive at both ends
    CHECK(label_of_angle(41.0) == 0);
    CHECK(label_of_angle(179.5) == 0);
}

TEST_CASE("label rejects angles outside [0, 180)") {
    CHECK_THROWS_AS(label_of_angle(-0.5), std::invalid_argument);
    CHECK_THROWS_AS(label_of_angle(180.0), std::invalid_argument);
}

TEST_CASE("angular distance to the decision boundary") {
    CHECK(boundary_distance_deg(0.0) == 0.0);
    CHECK(boundary_distance_deg(40.0) == 0.0);
    CHECK(boundary_distance_deg(20.0) == Catch::Approx(20.0));
    CHECK(boundary_distance_deg(46.0) == Catch::Approx(6.0));
    CHECK(boundary_distance_deg(178.0) == Catch::Approx(2.0));  // wraps past 180
    CHECK(boundary_distance_deg(90.0) == Catch::Approx(50.0));
}

TEST_CASE("millidegree round trip") {
    for (double a : {0.0, 0.5, 2.0, 40.0, 179.5, 62.125}) {
        CHECK(from_millideg(to_millideg(a)) == a);
    }
    CHECK(to_millideg(2.0) == 2000);
    CHECK(to_millideg(0.5) == 500);
}
