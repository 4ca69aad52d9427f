#include "ssimadv/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ssimadv/attacks.hpp"
#include "ssimadv/metrics.hpp"
#include "ssimadv/model.hpp"
#include "ssimadv/rng.hpp"

namespace ssimadv::selftest {

namespace {

Image<double> random_image(Rng& rng, Shape s) {
  ArrX<double> px(s.size());
  for (Eigen::Index i = 0; i < px.size(); ++i) px[i] = rng.uniform();
  return Image<double>(std::move(px), s);
}

Shape random_shape(Rng& rng) {
  const int h = static_cast<int>(rng.uniform_int(4, 28));
  const int w = static_cast<int>(rng.uniform_int(4, 28));
  const int c = rng.uniform() < 0.5 ? 1 : 3;
  return {h, w, c};
}

template <typename F>
SuiteResult timed(const std::string& name, F body) {
  SuiteResult r;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream detail;
  r.pass = body(detail);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.detail = detail.str();
  return r;
}

}  // namespace

SuiteResult ssim_properties(uint64_t seed) {
  return timed("ssim-properties", [&](std::ostringstream& detail) {
    Rng rng(seed);
    SsimParams<double> p;
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const Shape s = random_shape(rng);
      const Image<double> x = random_image(rng, s);
      const Image<double> y = random_image(rng, s);
      const double xy = ssim(x, y, p);
      const double yx = ssim(y, x, p);
      if (!(std::abs(xy - yx) <= 1e-12)) ++violations;
      if (!(ssim(x, x, p) == 1.0)) ++violations;
      if (!(xy > -1.0 && xy <= 1.0)) ++violations;
    }
    detail << "1000 pairs, " << violations << " violations";
    return violations == 0;
  });
}

SuiteResult gradient_checks(uint64_t seed) {
  return timed("gradient-checks", [&](std::ostringstream& detail) {
    Rng rng(seed);
    SsimParams<double> sp;
    int bad_constraints = 0;
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
      const Shape s = {static_cast<int>(rng.uniform_int(3, 8)),
                       static_cast<int>(rng.uniform_int(3, 8)),
                       rng.uniform() < 0.5 ? 1 : 3};
      const Image<double> x = random_image(rng, s);
      Image<double> y = random_image(rng, s);
      ConstraintThresholds<double> th{rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)};
      const auto grads = constraint_gradients(y, x, sp, th);
      for (int gi = 0; gi < 4; ++gi) {
        double worst = 0, scale = 0;
        for (Eigen::Index j = 0; j < y.data.size(); ++j) {
          const double keep = y.data[j];
          y.data[j] = keep + h;
          const double up = constraints(y, x, sp, th)[gi];
          y.data[j] = keep - h;
          const double dn = constraints(y, x, sp, th)[gi];
          y.data[j] = keep;
          const double fd = (up - dn) / (2 * h);
          worst = std::max(worst, std::abs(grads(j, gi) - fd));
          scale = std::max(scale, std::abs(fd));
        }
        if (worst > 1e-4 * std::max(scale, 1e-8)) ++bad_constraints;
      }
    }

    Rng mrng(derive_seed(seed, 2));
    int bad_lagrangian = 0;
    for (int trial = 0; trial < 100; ++trial) {
      ScoreModel<double> m({6, 6, 1}, 4,
                           {ConvSpec{4, 3, 2, 1}, ReluSpec{}, DenseSpec{4}}, mrng);
      const Image<double> x = random_image(mrng, {6, 6, 1});
      ArrX<double> delta(x.data.size());
      for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] = mrng.uniform(-0.03, 0.03);
      Eigen::Array<double, 4, 1> lambda;
      for (int i = 0; i < 4; ++i) lambda[i] = mrng.uniform(0.0, 1.0);
      const int label = m.predict(x.data);
      MarginLossParams<double> lp{mrng.uniform(0.5, 3.0), 0.1, LossKind::cw_margin};
      ConstraintThresholds<double> th{0.9, 0.9};

      const ArrX<double> got = lagrangian_delta_grad(m, x, delta, lambda, label, lp, sp, th);
      double worst = 0, scale = 0;
      ArrX<double> d = delta;
      for (Eigen::Index j = 0; j < d.size(); ++j) {
        const double keep = d[j];
        auto eval = [&] {
          const Image<double> y(x.data + d, x.shape);
          return margin_loss(m.forward(y.data), label, lp) +
                 (lambda * constraints(y, x, sp, th)).sum();
        };
        d[j] = keep + h;
        const double up = eval();
        d[j] = keep - h;
        const double dn = eval();
        d[j] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(got[j] - fd));
        scale = std::max(scale, std::abs(fd));
      }
      if (worst > 1e-3 * std::max(scale, 1e-8)) ++bad_lagrangian;
    }

    detail << "constraints: " << bad_constraints << " bad of 400 gradient blocks; "
           << "lagrangian: " << bad_lagrangian << " bad of 100 cases";
    return bad_constraints == 0 && bad_lagrangian == 0;
  });
}

SuiteResult quasi_convexity(uint64_t seed) {
  return timed("quasi-convexity", [&](std::ostringstream& detail) {
    Rng rng(seed);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = static_cast<int>(rng.uniform_int(4, 64));
      const double C = rng.uniform(1e-6, 1.0);
      ArrX<double> v(n), u1(n), u2(n);
      for (int i = 0; i < n; ++i) {
        v[i] = rng.normal();
        u1[i] = rng.normal();
        u2[i] = rng.normal();
      }
      // reflect into the half-space <u, v> >= -C/2
      if ((u1 * v).sum() < -C / 2) u1 = -u1;
      if ((u2 * v).sum() < -C / 2) u2 = -u2;
      const ArrX<double> mid = (u1 + u2) / 2;
      const double worst = std::max(nmse(u1, v, C), nmse(u2, v, C));
      if (!(nmse(mid, v, C) <= worst + 1e-9)) ++violations;
    }
    detail << "1000 instances, " << violations << " violations";
    return violations == 0;
  });
}

SuiteResult search_traces() {
  return timed("search-traces", [&](std::ostringstream& detail) {
    bool ok = true;
    auto stub = [](bool success, double c) {
      AttackOutcome<double> out;
      out.success = success;
      out.c_final = c;
      out.ssim = 0.5;
      out.image = Image<double>::zeros({1, 1, 1});
      return out;
    };
    auto q = [](const AttackOutcome<double>& o) { return o.ssim; };

    std::vector<SearchRound<double>> trace;
    binary_search_c<double>([&](double c) { return stub(false, c); }, 9, q, &trace);
    const double decade[] = {1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4, 1e5};
    for (int k = 0; k < 9; ++k)
      if (trace[static_cast<size_t>(k)].c != decade[k]) ok = false;

    trace.clear();
    binary_search_c<double>([&](double c) { return stub(true, c); }, 3, q, &trace);
    if (!(trace[0].c == 1e-3 && trace[1].c == 5e-4 && trace[2].c == 2.5e-4)) ok = false;

    trace.clear();
    auto gated = binary_search_c<double>([&](double c) { return stub(c >= 1.0, c); }, 9, q,
                                         &trace);
    if (!gated.success) ok = false;
    double last_success = std::numeric_limits<double>::infinity();
    for (const auto& round : trace)
      if (round.success) {
        if (round.c > last_success) ok = false;
        last_success = round.c;
      }

    detail << (ok ? "decade ramp, halving and gate traces exact"
                  : "trace mismatch against the printed schedule");
    return ok;
  });
}

std::vector<SuiteResult> run_all(uint64_t seed) {
  return {ssim_properties(derive_seed(seed, 10)), gradient_checks(derive_seed(seed, 11)),
          quasi_convexity(derive_seed(seed, 12)), search_traces()};
}

int run_selftest(uint64_t seed, std::ostream& os) {
  bool all = true;
  for (const auto& r : run_all(seed)) {
    char secs[32];
    std::snprintf(secs, sizeof(secs), "%.2fs", r.seconds);
    os << (r.pass ? "ok  " : "FAIL") << " " << r.name << ": " << r.detail << " [" << secs
       << "]\n";
    all = all && r.pass;
  }
  os << (all ? "selftest passed" : "selftest FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace ssimadv::selftest
