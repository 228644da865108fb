use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ArrivalSpec, MissionConfig};
use crate::error::{HarvestError, Result};

/// Arrival rate of one target over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateProfile {
    Constant(f64),
    /// Linear interpolation between `(times[k], values[k])`.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
}

impl RateProfile {
    fn segment(times: &[f64], t: f64) -> usize {
        // Index k with times[k] <= t < times[k+1]; right-continuous at knots.
        match times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => k.min(times.len() - 2),
            Err(0) => 0,
            Err(k) => (k - 1).min(times.len() - 2),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            RateProfile::Constant(s) => *s,
            RateProfile::PiecewiseLinear { times, values } => {
                let k = Self::segment(times, t);
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// Right derivative of the rate.
    pub fn slope(&self, t: f64) -> f64 {
        match self {
            RateProfile::Constant(_) => 0.0,
            RateProfile::PiecewiseLinear { times, values } => {
                let k = Self::segment(times, t);
                (values[k + 1] - values[k]) / (times[k + 1] - times[k])
            }
        }
    }

    /// `∫_0^t σ(u) du`.
    pub fn cumulative(&self, t: f64) -> f64 {
        match self {
            RateProfile::Constant(s) => s * t,
            RateProfile::PiecewiseLinear { times, values } => {
                let mut acc = 0.0;
                for k in 0..times.len() - 1 {
                    let (t0, t1) = (times[k], times[k + 1]);
                    if t <= t0 {
                        break;
                    }
                    let te = t.min(t1);
                    let ve = self.rate(te);
                    acc += 0.5 * (values[k] + ve) * (te - t0);
                }
                acc
            }
        }
    }

    /// Interior knots where the slope jumps.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            RateProfile::Constant(_) => &[],
            RateProfile::PiecewiseLinear { times, .. } => &times[1..times.len() - 1],
        }
    }
}

/// One sampled arrival realization for all targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalRealization {
    pub profiles: Vec<RateProfile>,
    /// Sorted `(time, target)` rate breakpoints strictly inside `(0, T)`.
    pub breakpoints: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl ArrivalRealization {
    /// Samples a realization. Target `i` draws from ChaCha8 stream `i` of `seed`.
    pub fn sample(config: &MissionConfig, seed: u64) -> Result<Self> {
        let horizon = config.horizon;
        let mut profiles = Vec::with_capacity(config.targets.len());
        for (i, t) in config.targets.iter().enumerate() {
            let profile = match t.arrival {
                ArrivalSpec::Constant { rate } => {
                    if rate < 0.0 {
                        return Err(HarvestError::config(format!(
                            "targets[{i}].arrival.rate is negative"
                        )));
                    }
                    RateProfile::Constant(rate)
                }
                ArrivalSpec::PiecewiseLinear {
                    mean,
                    amplitude,
                    interval,
                } => {
                    if mean < 0.0 {
                        return Err(HarvestError::config(format!(
                            "targets[{i}].arrival.mean is negative"
                        )));
                    }
                    if amplitude == 0.0 {
                        RateProfile::Constant(mean)
                    } else {
                        let delta = interval.unwrap_or(horizon / 20.0);
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(i as u64);
                        let (lo, hi) = (mean * (1.0 - amplitude), mean * (1.0 + amplitude));
                        let count = (horizon / delta).ceil().max(1.0) as usize;
                        let mut times: Vec<f64> =
                            (0..count).map(|k| k as f64 * delta).collect();
                        times.push(horizon);
                        let values = times.iter().map(|_| rng.random_range(lo..=hi)).collect();
                        RateProfile::PiecewiseLinear { times, values }
                    }
                }
            };
            profiles.push(profile);
        }
        let mut breakpoints: Vec<(f64, usize)> = profiles
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.breakpoints().iter().map(move |&t| (t, i)))
            .filter(|&(t, _)| t > 0.0 && t < horizon)
            .collect();
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(ArrivalRealization {
            profiles,
            breakpoints,
            horizon,
        })
    }

    /// The realization a configuration implies under its own seed.
    pub fn for_config(config: &MissionConfig) -> Result<Self> {
        Self::sample(config, config.arrival_seed)
    }

    pub fn rate(&self, i: usize, t: f64) -> f64 {
        self.profiles[i].rate(t)
    }

    pub fn slope(&self, i: usize, t: f64) -> f64 {
        self.profiles[i].slope(t)
    }

    pub fn cumulative(&self, i: usize, t: f64) -> f64 {
        self.profiles[i].cumulative(t)
    }

    /// Total arrivals over all targets up to `t`.
    pub fn total_cumulative(&self, t: f64) -> f64 {
        (0..self.profiles.len()).map(|i| self.cumulative(i, t)).sum()
    }

    /// First breakpoint strictly after `t`.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let k = self.breakpoints.partition_point(|&(b, _)| b <= t);
        self.breakpoints.get(k).map(|&(b, _)| b)
    }

    /// Targets whose rate has a breakpoint at exactly `t`.
    pub fn breakpoints_at(&self, t: f64) -> impl Iterator<Item = usize> + '_ {
        self.breakpoints
            .iter()
            .filter(move |&&(b, _)| b == t)
            .map(|&(_, i)| i)
    }
}

/// Rate of `spec` at time `t` under `realization`, the sampled form of target `i`.
pub fn arrival_rate(realization: &ArrivalRealization, i: usize, t: f64) -> f64 {
    realization.rate(i, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> RateProfile {
        RateProfile::PiecewiseLinear {
            times: vec![0.0, 1.0, 3.0],
            values: vec![1.0, 3.0, 0.0],
        }
    }

    #[test]
    fn interpolation_and_slope() {
        let p = profile();
        assert_eq!(p.rate(0.5), 2.0);
        assert_eq!(p.rate(1.0), 3.0);
        assert_eq!(p.slope(0.5), 2.0);
        assert_eq!(p.slope(1.0), -1.5);
        assert_eq!(p.rate(3.0), 0.0);
    }

    #[test]
    fn cumulative_is_exact_for_linear_pieces() {
        let p = profile();
        assert!((p.cumulative(1.0) - 2.0).abs() < 1e-15);
        assert!((p.cumulative(3.0) - 5.0).abs() < 1e-15);
        assert!((p.cumulative(2.0) - (2.0 + 0.5 * (3.0 + 1.5))).abs() < 1e-15);
    }

    #[test]
    fn breakpoints_are_interior_knots() {
        assert_eq!(profile().breakpoints(), &[1.0]);
    }
}
