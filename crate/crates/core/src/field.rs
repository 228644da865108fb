//! Event-excitation field: convex hull of the targets, the densities `R`
//! and `R_B`, the travel-cost integral `J4` and the hull constants `c_i`.

use crate::error::{HarvestError, Result};
use crate::model::{MissionConfig, Vec2};

/// Convex hull of the targets, counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPolygon {
    pub vertices: Vec<Vec2>,
}

impl HullPolygon {
    /// Fewer than three vertices or zero area.
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3 || self.area() <= 0.0
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for k in 0..v.len() {
            let (a, b) = (v[k], v[(k + 1) % v.len()]);
            twice += a.x * b.y - b.x * a.y;
        }
        0.5 * twice
    }

    /// Closed containment test (boundary counts as inside).
    pub fn contains(&self, p: Vec2) -> bool {
        let v = &self.vertices;
        if v.len() < 3 {
            return false;
        }
        (0..v.len()).all(|k| cross(v[k], v[(k + 1) % v.len()], p) >= 0.0)
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain. Collinear points are dropped; one point gives a
/// single vertex and collinear input gives the two extremes.
pub fn convex_hull(points: &[Vec2]) -> HullPolygon {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return HullPolygon { vertices: pts };
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    HullPolygon { vertices: hull }
}

/// Target density `R(w) = Σ α_i X_i / max(‖w - w_i‖, r_i)`.
pub fn r_field(config: &MissionConfig, w: Vec2, queues: &[f64]) -> f64 {
    config
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| t.weight * queues[i] / w.distance(t.position).max(config.target_clamp(i)))
        .sum()
}

/// Base density of agent `j`: `Σ_i α_i Z_ij / max(‖w - w_B‖, r_B)`.
pub fn r_base_field(config: &MissionConfig, w: Vec2, onboard: &[f64]) -> f64 {
    let load: f64 = config
        .targets
        .iter()
        .zip(onboard)
        .map(|(t, z)| t.weight * z)
        .sum();
    load / w.distance(config.base.position).max(config.base_clamp())
}

/// `P_j(w) = ‖s_j - w‖²`.
pub fn travel_cost(w: Vec2, s: Vec2) -> f64 {
    (s - w).norm_sq()
}

/// Uniform midpoint grid over the mission rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nx: usize,
    pub ny: usize,
    pub centers: Vec<Vec2>,
    /// Area of each cell.
    pub weight: f64,
}

impl QuadratureGrid {
    pub fn new(width: f64, height: f64, nx: usize, ny: usize) -> Self {
        let (dx, dy) = (width / nx as f64, height / ny as f64);
        let mut centers = Vec::with_capacity(nx * ny);
        for r in 0..ny {
            for c in 0..nx {
                centers.push(Vec2::new((c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy));
            }
        }
        QuadratureGrid {
            nx,
            ny,
            centers,
            weight: dx * dy,
        }
    }

    pub fn for_config(config: &MissionConfig) -> Self {
        Self::new(config.width, config.height, config.grid[0], config.grid[1])
    }

    pub fn total_weight(&self) -> f64 {
        self.weight * self.centers.len() as f64
    }
}

/// Moments `K = Σ ω/d⁺`, `G = Σ ω c/d⁺`, `H = Σ ω ‖c‖²/d⁺` of one clamped
/// kernel over the grid, so that `Σ ω ‖s - c‖²/d⁺(c) = ‖s‖² K - 2 s·G + H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub k: f64,
    pub g: Vec2,
    pub h: f64,
}

impl KernelMoments {
    fn compute(grid: &QuadratureGrid, center: Vec2, clamp: f64) -> Self {
        let (mut k, mut g, mut h) = (0.0, Vec2::ZERO, 0.0);
        for &c in &grid.centers {
            let inv = grid.weight / c.distance(center).max(clamp);
            k += inv;
            g += c * inv;
            h += c.norm_sq() * inv;
        }
        KernelMoments { k, g, h }
    }

    /// `∫ ‖s - w‖² / d⁺(w) dw`.
    pub fn value(&self, s: Vec2) -> f64 {
        s.norm_sq() * self.k - 2.0 * s.dot(self.g) + self.h
    }

    /// Gradient of `value` in `s`.
    pub fn gradient(&self, s: Vec2) -> Vec2 {
        s * (2.0 * self.k) - self.g * 2.0
    }
}

/// Precomputed kernel moments of every target and the base on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMoments {
    pub targets: Vec<KernelMoments>,
    pub base: KernelMoments,
    pub weights: Vec<f64>,
}

impl FieldMoments {
    pub fn new(config: &MissionConfig, grid: &QuadratureGrid) -> Self {
        FieldMoments {
            targets: (0..config.targets.len())
                .map(|i| KernelMoments::compute(grid, config.targets[i].position, config.target_clamp(i)))
                .collect(),
            base: KernelMoments::compute(grid, config.base.position, config.base_clamp()),
            weights: config.targets.iter().map(|t| t.weight).collect(),
        }
    }

    pub fn for_config(config: &MissionConfig) -> Self {
        Self::new(config, &QuadratureGrid::for_config(config))
    }

    /// `Σ_j ∫_S (R + R_Bj) ‖s_j - w‖² dw` from queues and agent positions.
    /// `onboard` is row-major `[i * N + j]`.
    pub fn j4(&self, queues: &[f64], onboard: &[f64], positions: &[Vec2]) -> f64 {
        let n = positions.len();
        let mut total = 0.0;
        for (j, &s) in positions.iter().enumerate() {
            let mut load = 0.0;
            for (i, m) in self.targets.iter().enumerate() {
                total += self.weights[i] * queues[i] * m.value(s);
                load += self.weights[i] * onboard[i * n + j];
            }
            total += load * self.base.value(s);
        }
        total
    }
}

/// Direct cell-by-cell evaluation of the `J4` integrand; used to validate
/// the moment form.
pub fn quadrature_j4(
    config: &MissionConfig,
    grid: &QuadratureGrid,
    queues: &[f64],
    onboard: &[f64],
    positions: &[Vec2],
) -> f64 {
    let n = positions.len();
    let m = config.targets.len();
    let mut total = 0.0;
    for (j, &s) in positions.iter().enumerate() {
        let zj: Vec<f64> = (0..m).map(|i| onboard[i * n + j]).collect();
        for &c in &grid.centers {
            let density = r_field(config, c, queues) + r_base_field(config, c, &zj);
            total += density * travel_cost(c, s) * grid.weight;
        }
    }
    total
}

/// Integrates `f` over `{w : inside(w)}` within the box `[lo, hi]` on an
/// `n x n` midpoint grid; cells straddling the boundary are refined `sub x sub`.
pub fn integrate_region(
    lo: Vec2,
    hi: Vec2,
    n: usize,
    sub: usize,
    inside: impl Fn(Vec2) -> bool,
    f: impl Fn(Vec2) -> f64,
) -> f64 {
    let (dx, dy) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
    let mut total = 0.0;
    for r in 0..n {
        for c in 0..n {
            let x0 = lo.x + c as f64 * dx;
            let y0 = lo.y + r as f64 * dy;
            let corners = [
                Vec2::new(x0, y0),
                Vec2::new(x0 + dx, y0),
                Vec2::new(x0, y0 + dy),
                Vec2::new(x0 + dx, y0 + dy),
            ];
            let count = corners.iter().filter(|p| inside(**p)).count();
            if count == 4 {
                total += f(Vec2::new(x0 + 0.5 * dx, y0 + 0.5 * dy)) * dx * dy;
            } else if count > 0 || inside(Vec2::new(x0 + 0.5 * dx, y0 + 0.5 * dy)) {
                let (sx, sy) = (dx / sub as f64, dy / sub as f64);
                for a in 0..sub {
                    for b in 0..sub {
                        let p = Vec2::new(x0 + (b as f64 + 0.5) * sx, y0 + (a as f64 + 0.5) * sy);
                        if inside(p) {
                            total += f(p) * sx * sy;
                        }
                    }
                }
            }
        }
    }
    total
}

/// Resolution used by `compute_ci`.
pub const CI_RESOLUTION: usize = 400;
pub const CI_SUBSAMPLES: usize = 8;

/// `c_i = α_i ∬_hull dw / max(‖w - w_i‖, r_i)`.
pub fn compute_ci(center: Vec2, clamp: f64, weight: f64, hull: &HullPolygon) -> Result<f64> {
    if hull.is_degenerate() {
        return Err(HarvestError::DegenerateHull(format!(
            "{} vertices, area {}",
            hull.vertices.len(),
            hull.area()
        )));
    }
    let (lo, hi) = hull.bounding_box();
    Ok(weight
        * integrate_region(
            lo,
            hi,
            CI_RESOLUTION,
            CI_SUBSAMPLES,
            |w| hull.contains(w),
            |w| 1.0 / w.distance(center).max(clamp),
        ))
}

/// `c_i` for every target of a mission over the targets' hull.
pub fn hull_constants(config: &MissionConfig) -> Result<Vec<f64>> {
    let hull = convex_hull(&config.targets.iter().map(|t| t.position).collect::<Vec<_>>());
    (0..config.targets.len())
        .map(|i| {
            compute_ci(
                config.targets[i].position,
                config.target_clamp(i),
                config.targets[i].weight,
                &hull,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.5, 0.5),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.vertices.len(), 4);
        assert!((h.area() - 1.0).abs() < 1e-15);
        assert!(h.contains(Vec2::new(0.5, 0.5)));
        assert!(!h.contains(Vec2::new(1.5, 0.5)));
    }

    #[test]
    fn hull_of_case_two_grid() {
        let c = cases::case_two();
        let pts: Vec<Vec2> = c.targets.iter().map(|t| t.position).collect();
        let h = convex_hull(&pts);
        assert_eq!(h.vertices.len(), 4);
        assert!(h.contains(Vec2::new(4.0, 4.0)));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let h = convex_hull(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)]);
        assert!(h.is_degenerate());
        assert_eq!(h.vertices.len(), 2);
        assert!(compute_ci(Vec2::ZERO, 0.5, 1.0, &h).is_err());
        assert!(convex_hull(&[Vec2::new(3.0, 3.0)]).is_degenerate());
    }

    #[test]
    fn field_examples() {
        let c = cases::case_one();
        let (w0, w1) = (c.targets[0].position, c.targets[1].position);
        assert!((r_field(&c, w0, &[2.0, 0.0]) - 2.0 / 0.5).abs() < 1e-15);
        assert_eq!(r_field(&c, Vec2::new(3.0, 3.0), &[0.0, 0.0]), 0.0);
        let mid = (w0 + w1) * 0.5;
        let d = mid.distance(w0);
        assert!((r_field(&c, mid, &[1.5, 1.5]) - 3.0 / d).abs() < 1e-14);
        let b = c.base.position;
        assert!((r_base_field(&c, b, &[1.0, 2.0]) - 3.0 / 0.5).abs() < 1e-14);
        assert_eq!(r_base_field(&c, Vec2::new(1.0, 1.0), &[0.0, 0.0]), 0.0);
        assert_eq!(travel_cost(Vec2::new(1.0, 1.0), Vec2::new(4.0, 5.0)), 25.0);
    }

    #[test]
    fn moment_form_matches_direct_quadrature() {
        let c = cases::case_one();
        let grid = QuadratureGrid::for_config(&c);
        let m = FieldMoments::new(&c, &grid);
        let q = [1.3, 0.4];
        let z = [0.2, 0.0, 0.7, 1.1];
        let s = [Vec2::new(2.0, 3.0), Vec2::new(6.5, 7.1)];
        let direct = quadrature_j4(&c, &grid, &q, &z, &s);
        let fast = m.j4(&q, &z, &s);
        assert!((direct - fast).abs() < 1e-10 * direct, "{direct} {fast}");
        assert_eq!(m.j4(&[0.0, 0.0], &[0.0; 4], &s), 0.0);
    }

    #[test]
    fn moment_gradient_matches_finite_differences() {
        let c = cases::case_one();
        let m = FieldMoments::for_config(&c);
        let s = Vec2::new(3.3, 6.1);
        let g = m.targets[0].gradient(s);
        let h = 1e-6;
        let fx = (m.targets[0].value(s + Vec2::new(h, 0.0)) - m.targets[0].value(s - Vec2::new(h, 0.0))) / (2.0 * h);
        let fy = (m.targets[0].value(s + Vec2::new(0.0, h)) - m.targets[0].value(s - Vec2::new(0.0, h))) / (2.0 * h);
        assert!((g.x - fx).abs() < 1e-6 * g.norm() && (g.y - fy).abs() < 1e-6 * g.norm());
    }
}
