// Classical fixed-step fourth-order Runge-Kutta.
#pragma once

#include "chaoscast/core.hpp"

namespace chaoscast::numkit {

template <class State, class Field>
State rk4_step(const Field& f, const State& u, double dt) {
  const State k1 = f(u);
  const State k2 = f(State(u + (0.5 * dt) * k1));
  const State k3 = f(State(u + (0.5 * dt) * k2));
  const State k4 = f(State(u + dt * k3));
  return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates u' = f(u) from (t0, u0) for `steps` steps of size dt and
/// returns all steps + 1 states, u0 included. A non-finite state raises
/// DivergenceError carrying the index of the failing step.
template <class Field>
TimeSeries rk4_integrate(const Field& f, const Vec& u0, double t0, double dt, long steps) {
  if (!(dt > 0.0)) throw DomainError("rk4: dt must be positive");
  if (steps < 0) throw DomainError("rk4: steps must be >= 0");
  if (!u0.allFinite()) throw DivergenceError("rk4: non-finite initial state", 0);
  std::vector<double> times(static_cast<std::size_t>(steps) + 1);
  Mat states(steps + 1, u0.size());
  Vec u = u0;
  times[0] = t0;
  states.row(0) = u.transpose();
  for (long s = 1; s <= steps; ++s) {
    u = rk4_step<Vec>(f, u, dt);
    if (!u.allFinite()) throw DivergenceError("rk4: non-finite state at step " + std::to_string(s), s);
    times[static_cast<std::size_t>(s)] = t0 + static_cast<double>(s) * dt;
    states.row(s) = u.transpose();
  }
  return TimeSeries(std::move(times), std::move(states));
}

}  // namespace chaoscast::numkit
