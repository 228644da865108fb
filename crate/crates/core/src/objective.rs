//! Cost components, normalization constants and the total objective of a
//! sample path.

use serde::{Deserialize, Serialize};

use crate::error::{HarvestError, Result};
use crate::field::FieldMoments;
use crate::model::{d_plus, idling_from_excess, ArrivalRealization, MissionConfig, Vec2};
use crate::simulator::{simulate_with, SimOptions, SimTrace, StateIndex};
use crate::trajectory::{ParamVector, TrajectorySet};

/// Upper bounds used to bring every cost component to a comparable scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub queue: f64,
    pub delivered: f64,
    pub onboard: f64,
    pub idling: f64,
    pub field: f64,
}

/// Normalizers of a mission, from each target's nominal initial arrival rate.
pub fn normalizers(config: &MissionConfig) -> Result<Normalizers> {
    if let Some(i) = config
        .targets
        .iter()
        .position(|t| !(t.arrival.nominal_rate() > 0.0))
    {
        return Err(HarvestError::config(format!(
            "targets[{i}] has zero initial arrival rate; normalizers need σ_i(0) > 0"
        )));
    }
    let sigma = config.nominal_arrival_total();
    let t = config.horizon;
    let (l1, l2) = (config.width, config.height);
    let diag2 = l1 * l1 + l2 * l2;
    let m = config.targets.len() as f64;
    Ok(Normalizers {
        queue: t * sigma,
        delivered: t * sigma,
        onboard: t * sigma,
        idling: (diag2.sqrt().powf(m + 1.0)).ln_1p(),
        field: t * l1 * l2 * diag2 / config.mean_target_clamp() * sigma,
    })
}

/// Mean of `ln(1 + u)` over a step on which `u` runs linearly from `ua` to
/// `ub`.
///
/// `u = d_B Π d_i` is the idling product. Near a range boundary one factor
/// is nearly linear while the others stay put, and with many targets `u`
/// climbs from 0 to a large value within a tiny fraction of the step, which a
/// trapezoid rule resolves badly.
pub fn idling_step_mean(ua: f64, ub: f64) -> f64 {
    let a = 1.0 + ua;
    let q = (ub - ua) / a;
    let tail = if q.abs() < 1e-3 {
        q * (0.5 - q * (1.0 / 6.0 - q * (1.0 / 12.0 - q / 20.0)))
    } else {
        ((1.0 + q) * q.ln_1p() - q) / q
    };
    ua.ln_1p() + tail
}

/// Weights `(wa, wb)` with `∫₀¹ n(s) / (1 + u(s)) ds = wa n_a + wb n_b` for
/// `n` and `u` linear over the step. Paired with `idling_step_mean` this is
/// the exact derivative of that rule.
pub fn idling_step_weights(ua: f64, ub: f64) -> (f64, f64) {
    let a = 1.0 + ua;
    let q = (ub - ua) / a;
    let (w, ws) = if q.abs() < 1e-3 {
        (
            1.0 - q * (0.5 - q * (1.0 / 3.0 - q * (0.25 - q / 5.0))),
            0.5 - q * (1.0 / 3.0 - q * (0.25 - q * (0.2 - q / 6.0))),
        )
    } else {
        let l = q.ln_1p();
        (l / q, (q - l) / (q * q))
    };
    ((w - ws) / a, ws / a)
}

/// Instantaneous cost components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningCost {
    /// `Σ α_i X_i`.
    pub queue: f64,
    /// `Σ α_i Y_i`.
    pub delivered: f64,
    /// `Σ_j I_j`.
    pub idling: f64,
    /// `Σ_j ∫ (R + R_Bj) ‖s_j - w‖² dw`.
    pub field: f64,
}

/// Objective components as they enter `J = J1 - J2 + J3 + J4 + Jf + penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub queue: f64,
    pub delivered: f64,
    pub idling: f64,
    pub field: f64,
    pub terminal: f64,
    pub penalty: f64,
}

/// A mission with everything precomputed for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: MissionConfig,
    pub moments: FieldMoments,
    pub norms: Normalizers,
    pub sim: SimOptions,
}

impl Problem {
    pub fn new(config: MissionConfig) -> Result<Self> {
        config.validate()?;
        let norms = normalizers(&config)?;
        let moments = FieldMoments::for_config(&config);
        let sim = SimOptions::for_config(&config);
        Ok(Problem {
            config,
            moments,
            norms,
            sim,
        })
    }

    pub fn trajectories(&self, theta: &ParamVector) -> Result<TrajectorySet> {
        if theta.layout.agents() != self.config.agents {
            return Err(HarvestError::param(
                "theta",
                format!(
                    "describes {} agents, mission has {}",
                    theta.layout.agents(),
                    self.config.agents
                ),
            ));
        }
        TrajectorySet::new(theta, self.config.base.position)
    }

    pub fn simulate(
        &self,
        theta: &ParamVector,
        arrivals: &ArrivalRealization,
    ) -> Result<(TrajectorySet, SimTrace)> {
        let traj = self.trajectories(theta)?;
        let trace = simulate_with(&self.config, &traj, arrivals, self.sim)?;
        Ok((traj, trace))
    }

    /// Simulates and returns the cost breakdown.
    pub fn evaluate(&self, theta: &ParamVector, arrivals: &ArrivalRealization) -> Result<CostBreakdown> {
        let (traj, trace) = self.simulate(theta, arrivals)?;
        Ok(self.total_cost(&traj, &trace))
    }

    /// Running cost at a state given agent positions.
    pub fn running_cost(&self, idx: StateIndex, y: &[f64], positions: &[Vec2]) -> RunningCost {
        let c = &self.config;
        let (n, m) = (idx.agents, idx.targets);
        let mut out = RunningCost::default();
        for i in 0..m {
            out.queue += c.targets[i].weight * y[idx.x(i)];
            out.delivered += c.targets[i].weight * y[idx.y(i)];
        }
        let mut excess = vec![0.0; m];
        for (j, &s) in positions.iter().enumerate() {
            let base = d_plus(s.distance(c.base.position), c.base.range[j]);
            for (i, t) in c.targets.iter().enumerate() {
                excess[i] = d_plus(s.distance(t.position), t.range[j]);
            }
            out.idling += idling_from_excess(base, &excess);
        }
        let queues = &y[idx.x(0)..idx.x(0) + m];
        let onboard = &y[idx.z(0, 0)..idx.z(0, 0) + m * n];
        out.field = self.moments.j4(queues, onboard, positions);
        out
    }

    /// Idling product `d_B Π d_i` of each agent.
    pub fn idling_products(&self, positions: &[Vec2]) -> Vec<f64> {
        let c = &self.config;
        positions
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let base = d_plus(s.distance(c.base.position), c.base.range[j]);
                c.targets
                    .iter()
                    .fold(base, |u, t| u * d_plus(s.distance(t.position), t.range[j]))
            })
            .collect()
    }

    /// Per-component weights `(q/M_X, (1-q)/M_Y, 1/M_I, 1/M_R)`.
    pub fn weights(&self) -> [f64; 4] {
        let q = self.config.tradeoff;
        [
            q / self.norms.queue,
            (1.0 - q) / self.norms.delivered,
            1.0 / self.norms.idling,
            1.0 / self.norms.field,
        ]
    }

    /// Normalized running cost `L(t)` of the objective integrand.
    pub fn weighted(&self, r: &RunningCost) -> f64 {
        let w = self.weights();
        w[0] * r.queue - w[1] * r.delivered + w[2] * r.idling + w[3] * r.field
    }

    /// Objective of a simulated path: trapezoid rule on the integrator nodes,
    /// which include every event time, except for idling (see
    /// `idling_step_mean`).
    pub fn total_cost(&self, traj: &TrajectorySet, trace: &SimTrace) -> CostBreakdown {
        let idx = trace.index;
        let horizon = self.config.horizon;
        let w = self.weights();
        let mut acc = [0.0; 4];
        let at = |k: usize, mode: &crate::simulator::Mode| {
            let y = trace.state(k);
            let pos: Vec<Vec2> = (0..idx.agents)
                .map(|j| traj.position(j, mode.segment[j], y[idx.rho(j)]))
                .collect();
            (self.running_cost(idx, y, &pos), self.idling_products(&pos))
        };
        for (k, &mi) in trace.step_modes.iter().enumerate() {
            let mode = &trace.modes[mi];
            let h = trace.times[k + 1] - trace.times[k];
            let ((a, ua), (b, ub)) = (at(k, mode), at(k + 1, mode));
            acc[0] += 0.5 * h * (a.queue + b.queue);
            acc[1] += 0.5 * h * (a.delivered + b.delivered);
            acc[2] += h * ua.iter().zip(&ub).map(|(&x, &y)| idling_step_mean(x, y)).sum::<f64>();
            acc[3] += 0.5 * h * (a.field + b.field);
        }
        let last = trace.state(trace.node_count() - 1);
        let (n, m) = (idx.agents, idx.targets);
        let mut onboard = 0.0;
        for i in 0..m {
            for j in 0..n {
                onboard += self.config.targets[i].weight * last[idx.z(i, j)];
            }
        }
        let penalty = self.config.penalty * traj.penalty().0;
        let mut out = CostBreakdown {
            total: 0.0,
            queue: w[0] * acc[0] / horizon,
            delivered: w[1] * acc[1] / horizon,
            idling: w[2] * acc[2] / horizon,
            field: w[3] * acc[3] / horizon,
            terminal: onboard / (self.norms.onboard * horizon),
            penalty,
        };
        out.total = out.queue - out.delivered + out.idling + out.field + out.terminal + out.penalty;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn case_one_normalizers() {
        let n = normalizers(&cases::case_one()).unwrap();
        assert_eq!(n.queue, 20.0);
        assert_eq!(n.delivered, 20.0);
        assert_eq!(n.onboard, 20.0);
        assert!((n.idling - 7.947829540727376).abs() < 1e-12);
        assert!((n.field - 800000.0).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_rejected() {
        let mut c = cases::case_one();
        c.targets[0].arrival = crate::model::ArrivalSpec::Constant { rate: 0.0 };
        assert!(normalizers(&c).is_err());
    }

    #[test]
    fn idling_step_rules() {
        // Linear u: compare with a fine midpoint rule.
        for (ua, ub) in [(0.0, 1e5), (3.0, 3.0000001), (2.0, 0.5), (0.0, 0.0), (1e-9, 4e-9)] {
            let n = 200_000;
            let (mut mean, mut wa, mut wb) = (0.0, 0.0, 0.0);
            for k in 0..n {
                let s = (k as f64 + 0.5) / n as f64;
                let u: f64 = ua + (ub - ua) * s;
                mean += u.ln_1p() / n as f64;
                wa += (1.0 - s) / (1.0 + u) / n as f64;
                wb += s / (1.0 + u) / n as f64;
            }
            let tol = 1e-6 * (1.0 + mean.abs());
            assert!((idling_step_mean(ua, ub) - mean).abs() < tol, "{ua} {ub}");
            let (a, b) = idling_step_weights(ua, ub);
            assert!((a - wa).abs() < 1e-6 && (b - wb).abs() < 1e-6, "{ua} {ub}: {a} {b} vs {wa} {wb}");
        }
        // The weights differentiate the mean.
        let (ua, ub, e) = (0.4, 7.0, 1e-6);
        let (a, b) = idling_step_weights(ua, ub);
        let da = (idling_step_mean(ua + e, ub) - idling_step_mean(ua - e, ub)) / (2.0 * e);
        let db = (idling_step_mean(ua, ub + e) - idling_step_mean(ua, ub - e)) / (2.0 * e);
        assert!((a - da).abs() < 1e-8 && (b - db).abs() < 1e-8);
    }

    #[test]
    fn running_cost_examples() {
        let p = Problem::new(cases::case_one()).unwrap();
        let idx = StateIndex { agents: 2, targets: 2 };
        let b = p.config.base.position;
        let mut y = vec![0.0; idx.len()];
        let r = p.running_cost(idx, &y, &[b, b]);
        assert_eq!((r.queue, r.delivered, r.idling, r.field), (0.0, 0.0, 0.0, 0.0));
        y[idx.x(0)] = 1.0;
        y[idx.x(1)] = 2.0;
        let far = Vec2::new(0.0, 0.0);
        let r = p.running_cost(idx, &y, &[far, far]);
        assert_eq!(r.queue, 3.0);
        assert!(r.idling > 0.0);
    }
}
