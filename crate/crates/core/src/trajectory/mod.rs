//! Parametric agent trajectories: multi-segment ellipses and anchored
//! Fourier curves, traversed at unit speed.

mod ellipse;
mod fourier;
mod layout;

use std::f64::consts::{PI, TAU};

pub use ellipse::{EllipseSegment, ELLIPSE_PARAMS};
pub use fourier::FourierCurve;
pub use layout::{Family, ParamFile, ParamGroup, ParamKey, ParamLayout, ParamName, ParamVector};

use crate::error::{HarvestError, Result};
use crate::model::{MissionConfig, Vec2};

/// Smallest `‖ds/dE‖` accepted before a curve point counts as singular.
pub const CURVE_EPSILON: f64 = 1e-8;

/// A smooth closed curve `s(E; θ)` with derivatives in `E` and `θ`.
pub trait CurveShape {
    fn param_count(&self) -> usize;
    fn point(&self, e: f64) -> Vec2;
    /// `∂s/∂E`.
    fn tangent(&self, e: f64) -> Vec2;
    fn point_tangent(&self, e: f64) -> (Vec2, Vec2) {
        (self.point(e), self.tangent(e))
    }
    /// `∂²s/∂E²`.
    fn second(&self, e: f64) -> Vec2;
    /// `∂s/∂θ_k` at fixed `E`.
    fn param_jacobian(&self, e: f64, out: &mut [Vec2]);
    /// `∂²s/∂E∂θ_k`.
    fn tangent_jacobian(&self, e: f64, out: &mut [Vec2]);
}

/// An ellipse placed in a sequence, with its phase origin at the point
/// nearest the base.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedEllipse {
    pub shape: EllipseSegment,
    /// Curve phase where the segment starts.
    pub origin: f64,
    /// Sensitivity of `origin` to the segment's parameters.
    pub origin_sensitivity: [f64; ELLIPSE_PARAMS],
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentPath {
    Ellipses(Vec<PlacedEllipse>),
    Fourier(FourierCurve),
}

/// Position, tangent and phase rate at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Vec2,
    /// `ds/dρ`.
    pub tangent: Vec2,
    /// `ρ̇ = 1 / ‖ds/dρ‖`.
    pub phase_rate: f64,
}

impl Kinematics {
    pub fn velocity(&self) -> Vec2 {
        self.tangent * self.phase_rate
    }
}

/// Reusable buffers for sensitivity evaluation.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    pj: Vec<Vec2>,
    tj: Vec<Vec2>,
    e_sens: Vec<f64>,
}

/// All agents' trajectories for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub layout: ParamLayout,
    pub base: Vec2,
    pub paths: Vec<AgentPath>,
}

impl TrajectorySet {
    pub fn new(params: &ParamVector, base: Vec2) -> Result<Self> {
        let layout = params.layout.clone();
        if params.values.len() != layout.dim() {
            return Err(HarvestError::param(
                "theta",
                format!("has {} values, layout needs {}", params.values.len(), layout.dim()),
            ));
        }
        if let Some(k) = params.values.iter().position(|v| !v.is_finite()) {
            return Err(HarvestError::param(layout.label(k), "is not finite"));
        }
        let mut paths = Vec::with_capacity(layout.agents());
        for j in 0..layout.agents() {
            let local = &params.values[layout.agent_range(j)];
            let path = match layout.family {
                Family::Ellipse => {
                    let mut segs = Vec::new();
                    for (k, chunk) in local.chunks(ELLIPSE_PARAMS).enumerate() {
                        let shape = EllipseSegment::from_slice(chunk);
                        if !(shape.a > 0.0 && shape.b > 0.0) {
                            return Err(HarvestError::param(
                                format!("agent {j} segment {k} semi-axes"),
                                format!("must be positive, got a={} b={}", shape.a, shape.b),
                            ));
                        }
                        let origin = shape.nearest_phase(base);
                        let origin_sensitivity = shape.nearest_phase_sensitivity(origin, base);
                        segs.push(PlacedEllipse {
                            shape,
                            origin,
                            origin_sensitivity,
                        });
                    }
                    AgentPath::Ellipses(segs)
                }
                Family::Fourier => {
                    let (gx, gy) = layout.harmonics;
                    AgentPath::Fourier(FourierCurve::from_slice(local, gx, gy, base))
                }
            };
            paths.push(path);
        }
        Ok(TrajectorySet {
            layout,
            base,
            paths,
        })
    }

    pub fn family(&self) -> Family {
        self.layout.family
    }

    pub fn agents(&self) -> usize {
        self.paths.len()
    }

    pub fn segment_count(&self, j: usize) -> usize {
        match &self.paths[j] {
            AgentPath::Ellipses(s) => s.len(),
            AgentPath::Fourier(_) => 1,
        }
    }

    /// Segment active at phase `ρ`; the last segment repeats indefinitely.
    pub fn segment_of(&self, j: usize, rho: f64) -> usize {
        let last = self.segment_count(j) - 1;
        ((rho / TAU).floor().max(0.0) as usize).min(last)
    }

    /// Phase at which segment `seg` ends, if another follows it.
    pub fn segment_end(&self, j: usize, seg: usize) -> Option<f64> {
        (seg + 1 < self.segment_count(j)).then(|| TAU * (seg + 1) as f64)
    }

    fn shape(&self, j: usize, seg: usize) -> (&dyn CurveShape, f64) {
        match &self.paths[j] {
            AgentPath::Ellipses(s) => {
                let p = &s[seg];
                (&p.shape, p.origin - TAU * seg as f64)
            }
            AgentPath::Fourier(c) => (c, 0.0),
        }
    }

    /// Curve phase `E` of agent `j` on segment `seg` at progress `ρ`.
    pub fn curve_phase(&self, j: usize, seg: usize, rho: f64) -> f64 {
        self.shape(j, seg).1 + rho
    }

    pub fn position(&self, j: usize, seg: usize, rho: f64) -> Vec2 {
        let (c, shift) = self.shape(j, seg);
        c.point(shift + rho)
    }

    pub fn position_at(&self, j: usize, rho: f64) -> Vec2 {
        self.position(j, self.segment_of(j, rho), rho)
    }

    pub fn kinematics(&self, j: usize, seg: usize, rho: f64) -> Result<Kinematics> {
        let (c, shift) = self.shape(j, seg);
        let (position, tangent) = c.point_tangent(shift + rho);
        let speed = tangent.norm();
        if !(speed >= CURVE_EPSILON) {
            return Err(HarvestError::SingularTrajectory { phase: rho, speed });
        }
        Ok(Kinematics {
            position,
            tangent,
            phase_rate: 1.0 / speed,
        })
    }

    /// `ρ̇` keeping unit speed.
    pub fn phase_rate(&self, j: usize, seg: usize, rho: f64) -> Result<f64> {
        let (c, shift) = self.shape(j, seg);
        let speed = c.tangent(shift + rho).norm();
        if !(speed >= CURVE_EPSILON) {
            return Err(HarvestError::SingularTrajectory { phase: rho, speed });
        }
        Ok(1.0 / speed)
    }

    pub fn velocity(&self, j: usize, seg: usize, rho: f64) -> Result<Vec2> {
        Ok(self.kinematics(j, seg, rho)?.velocity())
    }

    /// Local parameter block `(offset, len)` of a segment within its agent.
    fn block(&self, j: usize, seg: usize) -> (usize, usize) {
        match self.family() {
            Family::Ellipse => (seg * ELLIPSE_PARAMS, ELLIPSE_PARAMS),
            Family::Fourier => (0, self.layout.agent_range(j).len()),
        }
    }

    /// Total sensitivity of the agent's position, over its own parameters,
    /// given the phase sensitivity `rho_sens`; optionally also the
    /// derivative of `rho_sens` in time.
    ///
    /// `s' = ∂s/∂θ + ∂s/∂E (ψ' + ρ')` where `ψ` is the segment origin.
    #[allow(clippy::too_many_arguments)]
    pub fn sensitivity(
        &self,
        j: usize,
        seg: usize,
        rho: f64,
        rho_sens: Option<&[f64]>,
        scratch: &mut Scratch,
        sx: &mut [f64],
        sy: &mut [f64],
        rho_sens_rate: Option<&mut [f64]>,
    ) -> Result<Kinematics> {
        let (c, shift) = self.shape(j, seg);
        let e = shift + rho;
        let (off, len) = self.block(j, seg);
        let dim = sx.len();
        scratch.pj.resize(len, Vec2::ZERO);
        scratch.tj.resize(len, Vec2::ZERO);
        c.param_jacobian(e, &mut scratch.pj);
        let tangent = c.tangent(e);
        let speed = tangent.norm();
        if !(speed >= CURVE_EPSILON) {
            return Err(HarvestError::SingularTrajectory { phase: rho, speed });
        }
        let rate = 1.0 / speed;
        sx.fill(0.0);
        sy.fill(0.0);
        for k in 0..len {
            sx[off + k] = scratch.pj[k].x;
            sy[off + k] = scratch.pj[k].y;
        }
        let e_sens = &mut scratch.e_sens;
        e_sens.clear();
        e_sens.resize(dim, 0.0);
        if let Some(rs) = rho_sens {
            e_sens.copy_from_slice(rs);
            if let AgentPath::Ellipses(segs) = &self.paths[j] {
                for (k, g) in segs[seg].origin_sensitivity.iter().enumerate() {
                    e_sens[off + k] += g;
                }
            }
            for k in 0..dim {
                sx[k] += tangent.x * e_sens[k];
                sy[k] += tangent.y * e_sens[k];
            }
        }
        if let Some(out) = rho_sens_rate {
            c.tangent_jacobian(e, &mut scratch.tj);
            let r3 = rate * rate * rate;
            let curv = tangent.dot(c.second(e));
            for k in 0..dim {
                out[k] = -r3 * curv * e_sens[k];
            }
            for k in 0..len {
                out[off + k] -= r3 * tangent.dot(scratch.tj[k]);
            }
        }
        Ok(Kinematics {
            position: c.point(e),
            tangent,
            phase_rate: rate,
        })
    }

    /// `∂s_j/∂Θ` at fixed progress `ρ`, as full-dimension x and y rows.
    /// Ellipse columns include the shift of the segment's phase origin.
    pub fn position_jacobian(&self, j: usize, rho: f64) -> (Vec<f64>, Vec<f64>) {
        let seg = self.segment_of(j, rho);
        let range = self.layout.agent_range(j);
        let mut lx = vec![0.0; range.len()];
        let mut ly = vec![0.0; range.len()];
        let zeros = vec![0.0; range.len()];
        let mut scratch = Scratch::default();
        // A singular point only affects the returned velocity; the jacobian is still defined.
        let _ = self.sensitivity(j, seg, rho, Some(&zeros), &mut scratch, &mut lx, &mut ly, None);
        let dim = self.layout.dim();
        let mut gx = vec![0.0; dim];
        let mut gy = vec![0.0; dim];
        gx[range.clone()].copy_from_slice(&lx);
        gy[range].copy_from_slice(&ly);
        (gx, gy)
    }

    /// Times at which agent `j` completes each segment, within the horizon.
    pub fn segment_schedule(&self, j: usize, horizon: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if let AgentPath::Ellipses(segs) = &self.paths[j] {
            let mut t = 0.0;
            for s in segs {
                t += s.shape.perimeter();
                if t > horizon {
                    break;
                }
                out.push(t);
            }
        }
        out
    }

    /// Sum of base-passage penalties `Σ C` and its gradient (zero for Fourier curves).
    pub fn penalty(&self) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.layout.dim()];
        let mut total = 0.0;
        for (j, path) in self.paths.iter().enumerate() {
            if let AgentPath::Ellipses(segs) = path {
                let start = self.layout.agent_range(j).start;
                for (k, s) in segs.iter().enumerate() {
                    let (c, g) = s.shape.base_constraint(self.base);
                    total += c;
                    let o = start + k * ELLIPSE_PARAMS;
                    grad[o..o + ELLIPSE_PARAMS].copy_from_slice(&g);
                }
            }
        }
        (total, grad)
    }

    /// Largest per-segment base-passage penalty of each agent.
    pub fn agent_penalties(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| match p {
                AgentPath::Ellipses(segs) => segs
                    .iter()
                    .map(|s| s.shape.base_constraint(self.base).0)
                    .fold(0.0, f64::max),
                AgentPath::Fourier(_) => 0.0,
            })
            .collect()
    }
}

/// Feasibility bounds applied after each optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub width: f64,
    pub height: f64,
    pub min_axis: f64,
    pub min_freq: f64,
    pub max_freq: f64,
}

impl Bounds {
    pub fn for_config(config: &MissionConfig) -> Self {
        Bounds {
            width: config.width,
            height: config.height,
            min_axis: 0.1,
            min_freq: 0.2,
            max_freq: 5.0,
        }
    }

    pub fn max_length(&self) -> f64 {
        self.width.max(self.height)
    }

    /// Projects `theta` onto the feasible set in place.
    pub fn project(&self, theta: &mut ParamVector) {
        let lmax = self.max_length();
        for (k, key) in theta.layout.keys.clone().iter().enumerate() {
            let v = &mut theta.values[k];
            *v = match key.name {
                ParamName::CenterX => v.clamp(0.0, self.width),
                ParamName::CenterY => v.clamp(0.0, self.height),
                ParamName::SemiMajor | ParamName::SemiMinor => v.clamp(self.min_axis, lmax),
                ParamName::Orientation => v.rem_euclid(PI),
                ParamName::FreqX => v.clamp(self.min_freq, self.max_freq),
                ParamName::AmpX(_) | ParamName::AmpY(_) => v.clamp(-lmax, lmax),
                ParamName::PhaseX(_) | ParamName::PhaseY(_) => v.rem_euclid(TAU),
            };
        }
    }

    pub fn is_feasible(&self, theta: &ParamVector) -> bool {
        let mut p = theta.clone();
        self.project(&mut p);
        p.values
            .iter()
            .zip(&theta.values)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_ellipses() -> TrajectorySet {
        let layout = ParamLayout::ellipse(&[2]);
        let theta = ParamVector::new(
            layout,
            vec![3.0, 5.0, 2.0, 1.0, 0.0, 5.0, 3.5, 1.5, 0.7, 0.3],
        )
        .unwrap();
        TrajectorySet::new(&theta, Vec2::new(5.0, 5.0)).unwrap()
    }

    #[test]
    fn segments_start_at_base_when_passing_through_it() {
        let t = two_ellipses();
        let p = t.position(0, 0, 0.0);
        assert!(p.distance(Vec2::new(5.0, 5.0)) < 1e-12);
        assert_eq!(t.segment_of(0, 1.0), 0);
        assert_eq!(t.segment_of(0, 7.0), 1);
        assert_eq!(t.segment_of(0, 100.0), 1);
        assert_eq!(t.segment_end(0, 0), Some(TAU));
        assert_eq!(t.segment_end(0, 1), None);
    }

    #[test]
    fn unit_circle_rates() {
        let layout = ParamLayout::ellipse(&[1]);
        let theta = ParamVector::new(layout, vec![4.0, 5.0, 1.0, 1.0, 0.4]).unwrap();
        let t = TrajectorySet::new(&theta, Vec2::new(5.0, 5.0)).unwrap();
        for &rho in &[0.0, 1.0, 2.0, 5.5] {
            assert!((t.phase_rate(0, 0, rho).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!((t.segment_schedule(0, 100.0)[0] - TAU).abs() < 1e-12);
    }

    #[test]
    fn phase_rates_of_two_by_one() {
        let layout = ParamLayout::ellipse(&[1]);
        // Base at the end of the major axis puts the origin at E = 0.
        let theta = ParamVector::new(layout, vec![3.0, 5.0, 2.0, 1.0, 0.0]).unwrap();
        let t = TrajectorySet::new(&theta, Vec2::new(5.0, 5.0)).unwrap();
        assert!((t.phase_rate(0, 0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((t.phase_rate(0, 0, PI / 2.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn position_jacobian_matches_finite_differences() {
        let t = two_ellipses();
        let base = t.base;
        let values: Vec<f64> = vec![3.0, 5.0, 2.0, 1.0, 0.0, 5.0, 3.5, 1.5, 0.7, 0.3];
        for &rho in &[0.4, 3.0, 8.0] {
            let (jx, jy) = t.position_jacobian(0, rho);
            for k in 0..values.len() {
                let h = 1e-6;
                let (mut hi, mut lo) = (values.clone(), values.clone());
                hi[k] += h;
                lo[k] -= h;
                let th = TrajectorySet::new(&ParamVector::new(t.layout.clone(), hi).unwrap(), base).unwrap();
                let tl = TrajectorySet::new(&ParamVector::new(t.layout.clone(), lo).unwrap(), base).unwrap();
                let fd = (th.position_at(0, rho) - tl.position_at(0, rho)) * (0.5 / h);
                assert!((fd.x - jx[k]).abs() < 1e-6 && (fd.y - jy[k]).abs() < 1e-6, "k={k} rho={rho}");
            }
        }
    }

    #[test]
    fn projection_clips_and_wraps() {
        let layout = ParamLayout::ellipse(&[1]);
        let mut theta = ParamVector::new(layout, vec![-1.0, 12.0, 0.01, 50.0, 4.0]).unwrap();
        let b = Bounds {
            width: 10.0,
            height: 10.0,
            min_axis: 0.1,
            min_freq: 0.2,
            max_freq: 5.0,
        };
        b.project(&mut theta);
        assert_eq!(&theta.values[..4], &[0.0, 10.0, 0.1, 10.0]);
        assert!((theta.values[4] - (4.0 - PI)).abs() < 1e-15);
        assert!(b.is_feasible(&theta));
    }
}
