#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redqueen/common.hpp"
#include "redqueen/random.hpp"

namespace redqueen {

struct Event {
  Time time = 0.0;
  SourceId source{};

  friend bool operator==(const Event&, const Event&) = default;
};

/// Realization of a counting process: events with strictly increasing times.
class EventStream {
 public:
  using const_iterator = std::vector<Event>::const_iterator;

  EventStream() = default;

  /// Throws OrderingError unless times are strictly increasing.
  static EventStream from_sorted(std::vector<Event> events) {
    for (std::size_t i = 1; i < events.size(); ++i) {
      if (!(events[i].time > events[i - 1].time)) {
        throw OrderingError("event stream times must be strictly increasing (index " +
                            std::to_string(i) + ")");
      }
    }
    EventStream stream;
    stream.events_ = std::move(events);
    return stream;
  }

  void push_back(Event e) {
    if (!events_.empty() && !(e.time > events_.back().time)) {
      throw OrderingError("event appended out of order");
    }
    events_.push_back(e);
  }

  /// Appends `e`, moving it to the next representable time when it would tie
  /// with (or precede) the last event. Returns true when the time was changed.
  bool push_back_perturbed(Event e) {
    bool moved = false;
    if (!events_.empty() && !(e.time > events_.back().time)) {
      e.time = std::nextafter(events_.back().time, kInfinity);
      moved = true;
    }
    events_.push_back(e);
    return moved;
  }

  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  const Event& operator[](std::size_t i) const { return events_[i]; }
  const Event& front() const { return events_.front(); }
  const Event& back() const { return events_.back(); }
  const_iterator begin() const noexcept { return events_.begin(); }
  const_iterator end() const noexcept { return events_.end(); }
  std::span<const Event> events() const noexcept { return events_; }

  std::vector<Time> times() const {
    std::vector<Time> out;
    out.reserve(events_.size());
    for (const auto& e : events_) out.push_back(e.time);
    return out;
  }

  /// Number of events with time <= t.
  std::size_t count_until(Time t) const {
    return static_cast<std::size_t>(
        std::upper_bound(events_.begin(), events_.end(), t,
                         [](Time value, const Event& e) { return value < e.time; }) -
        events_.begin());
  }

  /// Number of events in (a, b].
  std::size_t count_in(Time a, Time b) const {
    if (!(b > a)) return 0;
    return count_until(b) - count_until(a);
  }

  /// Events falling in (h.start, h.end].
  EventStream window(Horizon h) const {
    EventStream out;
    const auto first = count_until(h.start);
    const auto last = count_until(h.end);
    out.events_.assign(events_.begin() + static_cast<std::ptrdiff_t>(first),
                       events_.begin() + static_cast<std::ptrdiff_t>(last));
    return out;
  }

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  std::vector<Event> events_;
};

/// Right-continuous step function over [knots.front(), knots.back()].
///
/// Segment i covers [knots[i], knots[i+1]); the final knot belongs to the last
/// segment. A constant rate uses the knots {-inf, +inf}.
class PiecewiseRate {
 public:
  PiecewiseRate(std::vector<Time> knots, std::vector<double> rates)
      : knots_(std::move(knots)), rates_(std::move(rates)) {
    if (knots_.size() < 2 || rates_.size() + 1 != knots_.size()) {
      throw ConfigError("piecewise rate needs one more knot than rates and at least one segment");
    }
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (!(knots_[i] > knots_[i - 1])) throw ConfigError("piecewise rate knots must increase");
    }
    for (double r : rates_) {
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw ConfigError("piecewise rates must be finite and nonnegative");
      }
    }
  }

  static PiecewiseRate constant(double rate) { return PiecewiseRate({-kInfinity, kInfinity}, {rate}); }

  /// `rates.size()` equal-length segments spanning the horizon.
  static PiecewiseRate uniform_segments(Horizon h, std::vector<double> rates) {
    if (rates.empty()) throw ConfigError("uniform_segments needs at least one rate");
    std::vector<Time> knots(rates.size() + 1);
    const double n = static_cast<double>(rates.size());
    for (std::size_t i = 0; i <= rates.size(); ++i) {
      knots[i] = h.start + h.length() * (static_cast<double>(i) / n);
    }
    knots.back() = h.end;
    return PiecewiseRate(std::move(knots), std::move(rates));
  }

  std::span<const Time> knots() const noexcept { return knots_; }
  std::span<const double> rates() const noexcept { return rates_; }
  std::size_t segment_count() const noexcept { return rates_.size(); }
  Time domain_start() const noexcept { return knots_.front(); }
  Time domain_end() const noexcept { return knots_.back(); }

  bool covers(Horizon h) const noexcept { return knots_.front() <= h.start && h.end <= knots_.back(); }

  std::size_t segment_index(Time t) const {
    if (t < knots_.front() || t > knots_.back()) {
      throw ConfigError("time outside the domain of a piecewise rate");
    }
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    const auto idx = static_cast<std::size_t>(it - knots_.begin());
    return std::min(idx, rates_.size()) - 1;
  }

  double at(Time t) const { return rates_[segment_index(t)]; }

  /// First knot strictly after t, or +inf past the last knot.
  Time next_knot(Time t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    return it == knots_.end() ? kInfinity : *it;
  }

  /// Integral of the rate over [a, b] (clipped to nothing outside the domain).
  double integral(Time a, Time b) const {
    double total = 0.0;
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      const Time lo = std::max(a, knots_[i]);
      const Time hi = std::min(b, knots_[i + 1]);
      if (hi > lo) total += rates_[i] * (hi - lo);
    }
    return total;
  }

  PiecewiseRate scaled(double factor) const {
    std::vector<double> r = rates_;
    for (auto& v : r) v *= factor;
    return PiecewiseRate(knots_, std::move(r));
  }

  friend bool operator==(const PiecewiseRate&, const PiecewiseRate&) = default;

 private:
  std::vector<Time> knots_;
  std::vector<double> rates_;
};

enum class Stability { require_stable, allow_unstable };

/// Intensity lambda(t) = baseline(t) + excitation * sum_i exp(-decay (t - t_i)).
class HawkesParams {
 public:
  HawkesParams(PiecewiseRate baseline, double excitation, double decay,
               Stability stability = Stability::require_stable)
      : baseline_(std::move(baseline)), excitation_(excitation), decay_(decay) {
    if (!(excitation_ >= 0.0) || !std::isfinite(excitation_)) {
      throw ConfigError("Hawkes excitation must be finite and >= 0");
    }
    if (!(decay_ > 0.0) || !std::isfinite(decay_)) throw ConfigError("Hawkes decay must be > 0");
    if (stability == Stability::require_stable && !(excitation_ < decay_)) {
      throw ConfigError("Hawkes branching ratio excitation/decay must be < 1 for stationary simulation");
    }
  }

  const PiecewiseRate& baseline() const noexcept { return baseline_; }
  double excitation() const noexcept { return excitation_; }
  double decay() const noexcept { return decay_; }
  double branching_ratio() const noexcept { return excitation_ / decay_; }

  /// Long-run event rate for a constant baseline.
  double stationary_rate(double baseline_rate) const { return baseline_rate / (1.0 - branching_ratio()); }

 private:
  PiecewiseRate baseline_;
  double excitation_;
  double decay_;
};

struct IntensityState {
  double current = 0.0;
  Time as_of = 0.0;
};

/// lambda(t0) = baseline(t0): no excitation before the first event.
inline IntensityState initial_intensity(const HawkesParams& params, Time t0) {
  return IntensityState{params.baseline().at(t0), t0};
}

/// Evolves the intensity between events: lambda0 + (lambda - lambda0) e^{-w dt}
/// on every constant-baseline piece, shifting by the baseline step at knots.
inline IntensityState decay_intensity(IntensityState state, const HawkesParams& params, Time t) {
  if (t < state.as_of) throw OrderingError("decay_intensity: target time precedes state");
  const auto& base = params.baseline();
  while (state.as_of < t) {
    const Time knot = base.next_knot(state.as_of);
    const Time stop = std::min(knot, t);
    const double level = base.at(state.as_of);
    state.current = level + (state.current - level) * std::exp(-params.decay() * (stop - state.as_of));
    state.as_of = stop;
    if (stop == knot && knot < base.domain_end()) state.current += base.at(knot) - level;
  }
  return state;
}

inline IntensityState apply_jump(IntensityState state, const HawkesParams& params) {
  state.current += params.excitation();
  return state;
}

/// Lazy Ogata thinning sampler for a Hawkes feed on (start, end].
///
/// Between events the intensity is nonincreasing while the baseline is
/// constant, so the intensity just after the latest event (or knot) bounds it
/// until the next knot.
class HawkesSampler {
 public:
  HawkesSampler(HawkesParams params, Horizon horizon, Rng rng, SourceId source = SourceId{0})
      : params_(std::move(params)), horizon_(horizon), rng_(rng), source_(source) {
    if (!params_.baseline().covers(horizon_)) throw ConfigError("Hawkes baseline does not cover the horizon");
    state_ = initial_intensity(params_, horizon_.start);
  }

  std::optional<Event> next() {
    while (state_.as_of < horizon_.end) {
      const Time t = state_.as_of;
      const Time segment_end = std::min(params_.baseline().next_knot(t), horizon_.end);
      const double bound = state_.current;
      const Time candidate = t + rng_.exponential(bound);
      if (!(candidate <= segment_end)) {
        state_ = decay_intensity(state_, params_, segment_end);
        continue;
      }
      state_ = decay_intensity(state_, params_, candidate);
      if (rng_.uniform() * bound < state_.current) {
        state_ = apply_jump(state_, params_);
        if (last_ && !(candidate > *last_)) {
          ++ties_;
          last_ = std::nextafter(*last_, kInfinity);
        } else {
          last_ = candidate;
        }
        return Event{*last_, source_};
      }
    }
    return std::nullopt;
  }

  std::size_t tie_adjustments() const noexcept { return ties_; }

 private:
  HawkesParams params_;
  Horizon horizon_;
  Rng rng_;
  SourceId source_;
  IntensityState state_{};
  std::optional<Time> last_;
  std::size_t ties_ = 0;
};

/// Lazy sampler for an inhomogeneous Poisson process with piecewise-constant rate.
class PiecewisePoissonSampler {
 public:
  PiecewisePoissonSampler(PiecewiseRate rate, Horizon horizon, Rng rng, SourceId source = SourceId{0})
      : rate_(std::move(rate)), horizon_(horizon), rng_(rng), source_(source), now_(horizon.start) {
    if (!rate_.covers(horizon_)) throw ConfigError("piecewise rate does not cover the horizon");
  }

  std::optional<Event> next() {
    while (now_ < horizon_.end) {
      const Time segment_end = std::min(rate_.next_knot(now_), horizon_.end);
      const Time candidate = now_ + rng_.exponential(rate_.at(now_));
      if (!(candidate <= segment_end)) {
        now_ = segment_end;
        continue;
      }
      if (!(candidate > now_)) {
        ++ties_;
        now_ = std::nextafter(now_, kInfinity);
      } else {
        now_ = candidate;
      }
      return Event{now_, source_};
    }
    return std::nullopt;
  }

  std::size_t tie_adjustments() const noexcept { return ties_; }

 private:
  PiecewiseRate rate_;
  Horizon horizon_;
  Rng rng_;
  SourceId source_;
  Time now_;
  std::size_t ties_ = 0;
};

namespace detail {

template <class Sampler>
EventStream drain(Sampler& sampler, Diagnostics* diagnostics) {
  EventStream out;
  while (auto e = sampler.next()) out.push_back(*e);
  if (sampler.tie_adjustments() > 0) {
    warn(diagnostics, std::to_string(sampler.tie_adjustments()) +
                          " sampled event(s) moved forward by one ulp to break a time tie");
  }
  return out;
}

}  // namespace detail

inline EventStream sample_hawkes(const HawkesParams& params, Horizon horizon, Rng rng,
                                 SourceId source = SourceId{0}, Diagnostics* diagnostics = nullptr) {
  if (!(horizon.end > horizon.start)) throw ConfigError("sample_hawkes: empty horizon");
  HawkesSampler sampler(params, horizon, rng, source);
  return detail::drain(sampler, diagnostics);
}

inline EventStream sample_piecewise_poisson(const PiecewiseRate& rate, Horizon horizon, Rng rng,
                                            SourceId source = SourceId{0},
                                            Diagnostics* diagnostics = nullptr) {
  if (!(horizon.end > horizon.start)) throw ConfigError("sample_piecewise_poisson: empty horizon");
  PiecewisePoissonSampler sampler(rate, horizon, rng, source);
  return detail::drain(sampler, diagnostics);
}

/// Time-ordered merge keeping source ids. Equal times are resolved by moving
/// the later-listed event forward by one ulp and recording a warning.
inline EventStream superpose(std::span<const EventStream> streams, Diagnostics* diagnostics = nullptr) {
  using Head = std::pair<Time, std::size_t>;  // (time, stream index)
  std::priority_queue<Head, std::vector<Head>, std::greater<>> heads;
  std::vector<std::size_t> cursor(streams.size(), 0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    total += streams[i].size();
    if (!streams[i].empty()) heads.emplace(streams[i][0].time, i);
  }
  std::vector<Event> merged;
  merged.reserve(total);
  std::size_t ties = 0;
  while (!heads.empty()) {
    const auto [time, idx] = heads.top();
    heads.pop();
    Event e = streams[idx][cursor[idx]++];
    if (!merged.empty() && !(e.time > merged.back().time)) {
      e.time = std::nextafter(merged.back().time, kInfinity);
      ++ties;
    }
    merged.push_back(e);
    if (cursor[idx] < streams[idx].size()) heads.emplace(streams[idx][cursor[idx]].time, idx);
  }
  if (ties > 0) warn(diagnostics, std::to_string(ties) + " tied event(s) perturbed during superposition");
  return EventStream::from_sorted(std::move(merged));
}

inline EventStream superpose(std::initializer_list<EventStream> streams, Diagnostics* diagnostics = nullptr) {
  return superpose(std::span<const EventStream>(streams.begin(), streams.size()), diagnostics);
}

}  // namespace redqueen
