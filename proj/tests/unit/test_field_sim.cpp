#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "magkey/errors.hpp"
#include "magkey/field_sim.hpp"

using namespace magkey;

namespace {

// Closed-form dipole written out component by component.
std::array<double, 3> dipole_oracle(const std::array<double, 3>& m, const std::array<double, 3>& r) {
  const double d = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  const double mr = (m[0] * r[0] + m[1] * r[1] + m[2] * r[2]) / d;
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = (3.0 * mr * r[i] / d - m[i]) / (d * d * d);
  return out;
}

MagnetSpec moment(const Vec3& m) {
  MagnetSpec s;
  s.moment = m;
  return s;
}

}  // namespace

TEST_SUITE("field_sim") {
  TEST_CASE("dipole on axis, on equator and off axis") {
    const MagnetSpec m = moment(Vec3(0, 0, 1000));
    const Vec3 origin = Vec3::Zero();
    const Vec3 on_axis = dipole_field(m, origin, Vec3(0, 0, 10));
    CHECK(on_axis.x() == doctest::Approx(0.0));
    CHECK(on_axis.y() == doctest::Approx(0.0));
    CHECK(on_axis.z() == doctest::Approx(2.0));
    const Vec3 equator = dipole_field(m, origin, Vec3(10, 0, 0));
    CHECK(equator.z() == doctest::Approx(-1.0));
    CHECK(std::abs(equator.x()) < 1e-12);
    const Vec3 diag = dipole_field(m, origin, Vec3(6, 8, 0));
    CHECK(diag.z() == doctest::Approx(-1.0));
    CHECK(std::abs(diag.x()) < 1e-12);
    CHECK(std::abs(diag.y()) < 1e-12);
  }

  TEST_CASE("dipole matches the component-wise closed form") {
    Rng rng(11);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int i = 0; i < 200; ++i) {
      const Vec3 m(u(rng) * 100, u(rng) * 100, u(rng) * 100);
      const Vec3 mag(u(rng), u(rng), u(rng));
      Vec3 sensor(u(rng), u(rng), u(rng));
      if ((sensor - mag).norm() < 1.0) sensor += Vec3(3, 0, 0);
      const Vec3 r = sensor - mag;
      const auto want = dipole_oracle({m.x(), m.y(), m.z()}, {r.x(), r.y(), r.z()});
      const Vec3 got = dipole_field(moment(m), mag, sensor);
      for (int a = 0; a < 3; ++a) CHECK(got[a] == doctest::Approx(want[a]).epsilon(1e-12));
    }
  }

  TEST_CASE("dipole guard distance") {
    const MagnetSpec m = moment(Vec3(0, 0, 1000));
    CHECK_THROWS_AS(dipole_field(m, Vec3::Zero(), Vec3(0.3, 0, 0)), DomainError);
    CHECK_NOTHROW(dipole_field(m, Vec3::Zero(), Vec3(0.5, 0, 0)));
  }

  TEST_CASE("polarity negates the dipole") {
    MagnetSpec m = moment(Vec3(300, -200, 900));
    const Vec3 a = dipole_field(m, Vec3(1, 2, 0.5), Vec3(18, -20, 0));
    m.polarity = -1;
    const Vec3 b = dipole_field(m, Vec3(1, 2, 0.5), Vec3(18, -20, 0));
    CHECK((a + b).norm() == 0.0);
  }

  TEST_CASE("zero moment and zero noise give the earth field") {
    BoardSpec board;
    EnvSpec env;
    env.earth_field = Vec3(30, 0, 40);
    env.background_field = Vec3::Zero();
    env.noise_sigma = 0.0;
    MagnetSpec magnet = moment(Vec3::Zero());
    Rng rng(1);
    const Trace t = synth_trace(board, env, magnet, {{Vec2(5, 5), 1.0}, {Vec2(20, 9), 1.0}}, {}, rng);
    REQUIRE(!t.empty());
    for (const auto& s : t) CHECK(s.b == Vec3(30, 0, 40));
  }

  TEST_CASE("15 s absent at 50 Hz gives 750 samples") {
    Scenario s;
    Rng rng(2);
    const Trace t = synth_trace(s.board, s.env, s.magnet, {{std::nullopt, 15.0}}, {}, rng);
    CHECK(t.size() == 750);
    CHECK(t[1].t - t[0].t == doctest::Approx(0.02));
  }

  TEST_CASE("same seed gives a bit-identical trace") {
    Scenario s;
    const std::vector<PathPoint> path{{std::nullopt, 1.0}, {Vec2(9, 3), 1.0}, {Vec2(30, 12), 0.5}};
    Rng a(77), b(77), c(78);
    const Trace ta = synth_trace(s.board, s.env, s.magnet, path, {}, a);
    const Trace tb = synth_trace(s.board, s.env, s.magnet, path, {}, b);
    const Trace tc = synth_trace(s.board, s.env, s.magnet, path, {}, c);
    REQUIRE(ta.size() == tb.size());
    bool same = true, differs = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      same = same && ta[i].t == tb[i].t && ta[i].b == tb[i].b;
      differs = differs || ta[i].b != tc[i].b;
    }
    CHECK(same);
    CHECK(differs);
  }

  TEST_CASE("superposition: magnet minus absent is the rotated dipole") {
    Scenario s = test::quiet_scenario();
    s.env.rotation = Vec3(0.3, -0.7, 1.9);
    const Mat3 r = rotation_matrix(0.3, -0.7, 1.9);
    Rng rng(3);
    for (const Vec2 p : {Vec2(1, 1), Vec2(17, 3), Vec2(35, 15)}) {
      const Trace with = synth_trace(s.board, s.env, s.magnet, {{p, 0.2}}, {}, rng);
      const Trace without = synth_trace(s.board, s.env, s.magnet, {{std::nullopt, 0.2}}, {}, rng);
      const Vec3 expect = r * dipole_field(s.magnet, s.board.magnet_point(p), s.board.sensor_pos);
      for (std::size_t i = 0; i < with.size(); ++i) {
        CHECK((with[i].b - without[i].b - expect).norm() < 1e-9 * expect.norm());
      }
    }
  }

  TEST_CASE("rotation leaves |B - H| unchanged") {
    Scenario s = test::quiet_scenario();
    s.env.hard_iron = Vec3(12, -7, 3);
    const Vec2 p(11, 5);
    const double ref = (noiseless_reading(s.board, s.env, s.magnet, p, 0.0) - s.env.hard_iron).norm();
    Rng rng(4);
    std::uniform_real_distribution<double> ang(-3.1, 3.1);
    for (int i = 0; i < 50; ++i) {
      s.env.rotation = Vec3(ang(rng), ang(rng), ang(rng));
      const double got = (noiseless_reading(s.board, s.env, s.magnet, p, 0.0) - s.env.hard_iron).norm();
      CHECK(got == doctest::Approx(ref).epsilon(1e-12));
    }
  }

  TEST_CASE("flipping polarity negates the dipole contribution in traces") {
    Scenario s = test::quiet_scenario();
    s.env.rotation = Vec3(0.2, 0.1, -0.4);
    Scenario flipped = s;
    flipped.magnet.polarity = -1;
    const Vec2 p(14, 2);
    const Vec3 base = noiseless_reading(s.board, s.env, s.magnet, std::nullopt, 0.0);
    const Vec3 a = noiseless_reading(s.board, s.env, s.magnet, p, 0.0) - base;
    const Vec3 b = noiseless_reading(flipped.board, flipped.env, flipped.magnet, p, 0.0) - base;
    CHECK((a + b).norm() < 1e-9 * a.norm());
  }

  TEST_CASE("transitions are labelled moving and dwells stationary") {
    Scenario s;
    Rng rng(5);
    const LabeledTrace lt = synth_labeled_trace(s.board, s.env, s.magnet, {{Vec2(3, 3), 1.0}, {Vec2(9, 3), 1.0}},
                                                SynthOptions{50.0, 0.5, 0.0}, rng);
    REQUIRE(lt.samples.size() == lt.truth.size());
    CHECK(lt.samples.size() == 50 + 25 + 50);
    int moving = 0;
    for (const auto& t : lt.truth) moving += t.state == MotionTruth::kMoving;
    CHECK(moving == 25);
    CHECK(lt.truth.front().path_index == 0);
    CHECK(lt.truth.back().path_index == 1);
  }

  TEST_CASE("positions off the board are rejected") {
    Scenario s;
    Rng rng(6);
    CHECK_THROWS_AS(synth_trace(s.board, s.env, s.magnet, {{Vec2(40, 3), 1.0}}, {}, rng), DomainError);
    CHECK_THROWS_AS(synth_trace(s.board, s.env, s.magnet, {{Vec2(3, 3), 0.0}}, {}, rng), DomainError);
  }
}
