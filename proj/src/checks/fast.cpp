#include <chrono>
#include <cstdio>

#include "uar/checks.hpp"

namespace uar::checks {

namespace {

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

}  // namespace

bool fast_suite(const Reporter& report) {
    bool ok = true;
    auto emit = [&](Result r) {
        ok = ok && r.pass;
        report(r);
    };

    {
        const auto t0 = std::chrono::steady_clock::now();
        const double err = adjoint_error(tomo::Geometry::desk_default(), 10, 11);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        emit({"adjoint", err < 1e-12, "max relative error " + sci(err) + " in " + sci(secs) + " s"});
    }
    {
        double worst = 0.0;
        std::string worst_name;
        std::size_t checked = 0, excluded = 0;
        for (const auto& c : gradcheck_all(5, 21)) {
            checked += c.stats.checked;
            excluded += c.stats.excluded;
            if (c.stats.worst >= worst) {
                worst = c.stats.worst;
                worst_name = c.name;
            }
        }
        // Kink exclusions must stay rare or the check says little.
        const bool rare = excluded * 100 <= checked + excluded;
        emit({"gradcheck", worst < 1e-5 && rare,
              "worst relative error " + sci(worst) + " (" + worst_name + "), " + std::to_string(excluded) + " of " +
                  std::to_string(checked + excluded) + " coordinates excluded at kinks"});
    }
    {
        const double err = second_order_error(31);
        emit({"second-order", err < 1e-4, "relative error " + sci(err)});
    }
    {
        const auto s = w1_oracle(100, 41);
        emit({"w1-oracle", s.mismatches == 0 && s.worst_axiom_violation <= 1e-9,
              std::to_string(s.mismatches) + " mismatches in " + std::to_string(s.trials) +
                  " trials, worst axiom violation " + sci(s.worst_axiom_violation)});
    }
    {
        const double err = adam_oracle_error();
        emit({"adam-oracle", err < 1e-15, "max deviation " + sci(err)});
    }
    {
        const std::string err = checkpoint_roundtrip();
        emit({"checkpoint-roundtrip", err.empty(), err.empty() ? "bit-exact" : err});
    }
    emit({"checkpoint-crc", checkpoint_corruption_detected(), "every single-byte corruption rejected"});
    return ok;
}

}  // namespace uar::checks
