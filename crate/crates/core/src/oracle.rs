//! Independent checks: finite-difference gradients, Monte-Carlo field
//! integrals, conservation audits and event-time perturbation tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HarvestError, Result};
use crate::field::{r_field, HullPolygon};
use crate::ipa::{evaluate_with_gradient, IpaOptions};
use crate::model::{ArrivalRealization, EventKind, EventRecord, MissionConfig, Vec2};
use crate::objective::Problem;
use crate::simulator::SimTrace;
use crate::trajectory::ParamVector;

/// Default step sweep of `fd_gradient`.
pub const FD_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// Smallest sample count accepted by the Monte-Carlo integrators.
pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub gradient: Vec<f64>,
    /// Step chosen per component.
    pub steps: Vec<f64>,
    /// `|f(θ+h) - 2f(θ) + f(θ-h)| / h` at the chosen step.
    pub residuals: Vec<f64>,
    /// Components whose evaluations were not finite or failed.
    pub flagged: Vec<usize>,
}

/// Central differences of `f` at `theta`, per component using the step from
/// `steps` with the smallest three-point residual.
pub fn fd_gradient<F>(f: F, theta: &[f64], steps: &[f64]) -> Result<FdGradient>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if steps.is_empty() {
        return Err(HarvestError::config("finite-difference step set is empty"));
    }
    let f0 = f(theta)?;
    let rows: Vec<(f64, f64, f64, bool)> = (0..theta.len())
        .into_par_iter()
        .map(|k| {
            let mut best: Option<(f64, f64, f64)> = None;
            let mut x = theta.to_vec();
            for &h in steps {
                x[k] = theta[k] + h;
                let fp = f(&x);
                x[k] = theta[k] - h;
                let fm = f(&x);
                x[k] = theta[k];
                let (Ok(fp), Ok(fm)) = (fp, fm) else { continue };
                if !(fp.is_finite() && fm.is_finite()) {
                    continue;
                }
                let g = (fp - fm) / (2.0 * h);
                let res = (fp - 2.0 * f0 + fm).abs() / h;
                if best.map_or(true, |b| res < b.2) {
                    best = Some((g, h, res));
                }
            }
            match best {
                Some((g, h, r)) => (g, h, r, false),
                None => (f64::NAN, steps[0], f64::NAN, true),
            }
        })
        .collect();
    Ok(FdGradient {
        gradient: rows.iter().map(|r| r.0).collect(),
        steps: rows.iter().map(|r| r.1).collect(),
        residuals: rows.iter().map(|r| r.2).collect(),
        flagged: rows.iter().enumerate().filter(|r| r.1 .3).map(|r| r.0).collect(),
    })
}

/// Finite-difference gradient of the objective with the arrival
/// realization held fixed.
pub fn fd_objective_gradient(
    problem: &Problem,
    theta: &ParamVector,
    arrivals: &ArrivalRealization,
    steps: &[f64],
) -> Result<FdGradient> {
    fd_gradient(
        |x| {
            let p = ParamVector::new(theta.layout.clone(), x.to_vec())?;
            Ok(problem.evaluate(&p, arrivals)?.total)
        },
        &theta.values,
        steps,
    )
}

/// Value and standard error of a Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `∬_hull f(w) dw` by rejection sampling uniform points in the hull.
pub fn mc_integral(
    hull: &HullPolygon,
    f: impl Fn(Vec2) -> f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if hull.is_degenerate() {
        return Err(HarvestError::DegenerateHull(format!(
            "{} vertices, area {}",
            hull.vertices.len(),
            hull.area()
        )));
    }
    if samples < MIN_MC_SAMPLES {
        return Err(HarvestError::config(format!(
            "Monte-Carlo integration needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    let (lo, hi) = hull.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq, mut n) = (0.0, 0.0, 0usize);
    while n < samples {
        let w = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if !hull.contains(w) {
            continue;
        }
        let v = f(w);
        sum += v;
        sum_sq += v * v;
        n += 1;
    }
    let mean = sum / n as f64;
    let var = ((sum_sq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).max(0.0);
    let area = hull.area();
    Ok(McEstimate {
        value: area * mean,
        stderr: area * (var / n as f64).sqrt(),
        samples: n,
    })
}

/// `∬_hull R(w) dw` for target queues `queues`.
pub fn mc_field_integral(
    config: &MissionConfig,
    hull: &HullPolygon,
    queues: &[f64],
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_integral(hull, |w| r_field(config, w, queues), samples, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationAudit {
    /// `max_t |X₀ + ∫Σσ - (ΣX + ΣZ + ΣY)(t)|`.
    pub max_abs: f64,
    /// `max_abs` over the largest data total on the path (at least 1).
    pub max_rel: f64,
    pub worst_time: f64,
}

/// Checks that all arrived data is accounted for at every node.
pub fn conservation_audit(trace: &SimTrace, arrivals: &ArrivalRealization) -> ConservationAudit {
    let mut audit = ConservationAudit {
        max_abs: 0.0,
        max_rel: 0.0,
        worst_time: 0.0,
    };
    let mut scale: f64 = 1.0;
    for (k, &t) in trace.times.iter().enumerate() {
        let expected = trace.initial_data + arrivals.total_cumulative(t);
        scale = scale.max(expected.abs());
        let r = (expected - trace.total_data(k)).abs();
        if r > audit.max_abs {
            audit.max_abs = r;
            audit.worst_time = t;
        }
    }
    audit.max_rel = audit.max_abs / scale;
    audit
}

/// Predicted and re-simulated sensitivity of one event time to one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeCheck {
    pub kind: EventKind,
    pub time: f64,
    pub predicted: f64,
    /// `(τ(θ + h e_k) - τ(θ - h e_k)) / 2h`, if the event was found on both sides.
    pub observed: Option<f64>,
}

impl EventTimeCheck {
    pub fn relative_error(&self) -> Option<f64> {
        self.observed
            .map(|o| (self.predicted - o).abs() / o.abs().max(self.predicted.abs()).max(f64::MIN_POSITIVE))
    }
}

fn occurrences<'a>(events: &'a [EventRecord], kind: &'a EventKind) -> impl Iterator<Item = f64> + 'a {
    events
        .iter()
        .filter(move |e| !e.induced && &e.kind == kind)
        .map(|e| e.time)
}

/// Compares every triggered event's `τ'` along parameter `k` with the shift
/// observed when re-simulating at `θ ± h e_k`. Events are matched by kind and
/// order of occurrence.
pub fn event_time_check(
    problem: &Problem,
    theta: &ParamVector,
    arrivals: &ArrivalRealization,
    k: usize,
    h: f64,
) -> Result<Vec<EventTimeCheck>> {
    let (_, grad) = evaluate_with_gradient(problem, theta, arrivals, IpaOptions::default())?;
    let shifted = |delta: f64| -> Result<SimTrace> {
        let mut v = theta.values.clone();
        v[k] += delta;
        let p = ParamVector::new(theta.layout.clone(), v)?;
        Ok(problem.simulate(&p, arrivals)?.1)
    };
    let (plus, minus) = (shifted(h)?, shifted(-h)?);
    let mut seen: Vec<(EventKind, usize)> = Vec::new();
    let mut out = Vec::new();
    for e in &grad.events {
        let n = match seen.iter_mut().find(|(kind, _)| *kind == e.kind) {
            Some((_, c)) => {
                *c += 1;
                *c - 1
            }
            None => {
                seen.push((e.kind, 1));
                0
            }
        };
        let tp = occurrences(&plus.events, &e.kind).nth(n);
        let tm = occurrences(&minus.events, &e.kind).nth(n);
        out.push(EventTimeCheck {
            kind: e.kind,
            time: e.time,
            predicted: e.tau_prime[k],
            observed: tp.zip(tm).map(|(a, b)| (a - b) / (2.0 * h)),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_linear_functionals() {
        let theta = [0.3, -1.2, 2.0];
        let fd = fd_gradient(|x| Ok(x.iter().map(|v| v * v).sum()), &theta, &FD_STEPS).unwrap();
        for (g, t) in fd.gradient.iter().zip(theta) {
            assert!((g - 2.0 * t).abs() < 1e-9);
        }
        let fd = fd_gradient(|x| Ok(3.0 * x[0] - 0.5 * x[1] + x[2]), &theta, &[1e-2]).unwrap();
        for (g, e) in fd.gradient.iter().zip([3.0, -0.5, 1.0]) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(fd.flagged.is_empty());
    }

    #[test]
    fn failing_evaluations_are_flagged() {
        let fd = fd_gradient(
            |x| if x[1] > 1.0 { Ok(f64::NAN) } else { Ok(x[0]) },
            &[0.0, 1.0],
            &FD_STEPS,
        )
        .unwrap();
        assert_eq!(fd.flagged, vec![1]);
        assert_eq!(fd.gradient[0], 1.0);
    }

    #[test]
    fn mc_requires_samples_and_area() {
        let hull = crate::field::convex_hull(&[Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]);
        assert!(mc_integral(&hull, |_| 1.0, 100, 0).is_err());
        let est = mc_integral(&hull, |_| 2.0, MIN_MC_SAMPLES, 0).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12 && est.stderr == 0.0);
    }
}
