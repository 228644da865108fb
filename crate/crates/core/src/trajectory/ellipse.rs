use std::f64::consts::TAU;

use crate::model::Vec2;

use super::CurveShape;

/// Number of parameters per ellipse: `A, B, a, b, φ`.
pub const ELLIPSE_PARAMS: usize = 5;

/// One ellipse `s(E) = c + R(φ) (a cos E, b sin E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseSegment {
    pub center: Vec2,
    pub a: f64,
    pub b: f64,
    pub orientation: f64,
}

impl EllipseSegment {
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, orientation: f64) -> Self {
        EllipseSegment {
            center: Vec2::new(cx, cy),
            a,
            b,
            orientation,
        }
    }

    pub fn from_slice(p: &[f64]) -> Self {
        EllipseSegment::new(p[0], p[1], p[2], p[3], p[4])
    }

    pub fn to_array(&self) -> [f64; ELLIPSE_PARAMS] {
        [self.center.x, self.center.y, self.a, self.b, self.orientation]
    }

    /// Coordinates of `w` in the ellipse frame.
    fn frame(&self, w: Vec2) -> (f64, f64) {
        let (sp, cp) = self.orientation.sin_cos();
        let d = w - self.center;
        (d.x * cp + d.y * sp, -d.x * sp + d.y * cp)
    }

    /// Implicit form `F = u²/a² + v²/b²` at `w` and its gradient.
    fn implicit(&self, w: Vec2) -> (f64, [f64; ELLIPSE_PARAMS]) {
        let (u, v) = self.frame(w);
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        let (sp, cp) = self.orientation.sin_cos();
        let f = u * u / a2 + v * v / b2;
        let df = [
            -2.0 * u * cp / a2 + 2.0 * v * sp / b2,
            -2.0 * u * sp / a2 - 2.0 * v * cp / b2,
            -2.0 * u * u / (a2 * self.a),
            -2.0 * v * v / (b2 * self.b),
            2.0 * u * v / a2 - 2.0 * u * v / b2,
        ];
        (f, df)
    }

    /// Base-passage penalty `C = (1 - F)²`, zero iff `base` lies on the
    /// ellipse, and its gradient over `(A, B, a, b, φ)`.
    pub fn base_constraint(&self, base: Vec2) -> (f64, [f64; ELLIPSE_PARAMS]) {
        let (f, df) = self.implicit(base);
        let r = 1.0 - f;
        (r * r, df.map(|g| -2.0 * r * g))
    }

    /// Residual `1 - F` whose square is the penalty, and its gradient.
    pub fn base_residual(&self, base: Vec2) -> (f64, [f64; ELLIPSE_PARAMS]) {
        let (f, df) = self.implicit(base);
        (1.0 - f, df.map(|g| -g))
    }

    /// Arc length of the full ellipse.
    pub fn perimeter(&self) -> f64 {
        // Periodic trapezoid rule converges geometrically.
        let n = 4096;
        let h = TAU / n as f64;
        (0..n).map(|k| self.tangent(k as f64 * h).norm()).sum::<f64>() * h
    }

    /// Phase of the ellipse point nearest `w`, in `[0, 2π)`.
    pub fn nearest_phase(&self, w: Vec2) -> f64 {
        let samples = 256;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..samples {
            let e = TAU * k as f64 / samples as f64;
            let d = (self.point(e) - w).norm_sq();
            if d < best.0 {
                best = (d, e);
            }
        }
        let h = TAU / samples as f64;
        let (mut lo, mut hi) = (best.1 - h, best.1 + h);
        let mut e = best.1;
        for _ in 0..100 {
            let (g, dg) = self.nearest_condition(e, w);
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = e;
            } else {
                lo = e;
            }
            let next = e - g / dg;
            let prev = e;
            e = if dg > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if (e - prev).abs() <= 1e-15 * (1.0 + e.abs()) || hi - lo <= 1e-15 {
                break;
            }
        }
        e.rem_euclid(TAU)
    }

    /// `h(E) = (s(E) - w)·s_E(E)` and `∂h/∂E`.
    pub(crate) fn nearest_condition(&self, e: f64, w: Vec2) -> (f64, f64) {
        let d = self.point(e) - w;
        let t = self.tangent(e);
        (d.dot(t), t.norm_sq() + d.dot(self.second(e)))
    }

    /// Sensitivity of `nearest_phase` to `(A, B, a, b, φ)`.
    pub fn nearest_phase_sensitivity(&self, e: f64, w: Vec2) -> [f64; ELLIPSE_PARAMS] {
        let (_, dh_de) = self.nearest_condition(e, w);
        if !(dh_de.abs() > 1e-12) {
            return [0.0; ELLIPSE_PARAMS];
        }
        let d = self.point(e) - w;
        let t = self.tangent(e);
        let mut pj = [Vec2::ZERO; ELLIPSE_PARAMS];
        let mut tj = [Vec2::ZERO; ELLIPSE_PARAMS];
        self.param_jacobian(e, &mut pj);
        self.tangent_jacobian(e, &mut tj);
        std::array::from_fn(|k| -(pj[k].dot(t) + d.dot(tj[k])) / dh_de)
    }
}

impl CurveShape for EllipseSegment {
    fn param_count(&self) -> usize {
        ELLIPSE_PARAMS
    }

    fn point(&self, e: f64) -> Vec2 {
        let (se, ce) = e.sin_cos();
        let (sp, cp) = self.orientation.sin_cos();
        let (u, v) = (self.a * ce, self.b * se);
        Vec2::new(
            self.center.x + u * cp - v * sp,
            self.center.y + u * sp + v * cp,
        )
    }

    fn tangent(&self, e: f64) -> Vec2 {
        let (se, ce) = e.sin_cos();
        let (sp, cp) = self.orientation.sin_cos();
        let (u, v) = (-self.a * se, self.b * ce);
        Vec2::new(u * cp - v * sp, u * sp + v * cp)
    }

    fn second(&self, e: f64) -> Vec2 {
        self.center - self.point(e)
    }

    fn param_jacobian(&self, e: f64, out: &mut [Vec2]) {
        let (se, ce) = e.sin_cos();
        let (sp, cp) = self.orientation.sin_cos();
        let (u, v) = (self.a * ce, self.b * se);
        out[0] = Vec2::new(1.0, 0.0);
        out[1] = Vec2::new(0.0, 1.0);
        out[2] = Vec2::new(ce * cp, ce * sp);
        out[3] = Vec2::new(-se * sp, se * cp);
        out[4] = Vec2::new(-u * sp - v * cp, u * cp - v * sp);
    }

    fn tangent_jacobian(&self, e: f64, out: &mut [Vec2]) {
        let (se, ce) = e.sin_cos();
        let (sp, cp) = self.orientation.sin_cos();
        let (u, v) = (-self.a * se, self.b * ce);
        out[0] = Vec2::ZERO;
        out[1] = Vec2::ZERO;
        out[2] = Vec2::new(-se * cp, -se * sp);
        out[3] = Vec2::new(-ce * sp, ce * cp);
        out[4] = Vec2::new(-u * sp - v * cp, u * cp - v * sp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ell() -> EllipseSegment {
        EllipseSegment::new(5.0, 5.0, 2.0, 1.0, 0.0)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn positions() {
        let p = ell().point(0.0);
        assert_eq!((p.x, p.y), (7.0, 5.0));
        let p = ell().point(FRAC_PI_2);
        assert!(close(p.x, 5.0, 1e-15) && close(p.y, 6.0, 1e-15));
    }

    #[test]
    fn semi_minor_column() {
        let mut j = [Vec2::ZERO; 5];
        ell().param_jacobian(FRAC_PI_2, &mut j);
        assert!(j[3].x.abs() < 1e-15);
        assert!(close(j[3].y, 1.0, 1e-15));
        let rotated = EllipseSegment::new(5.0, 5.0, 2.0, 1.0, FRAC_PI_2);
        rotated.param_jacobian(FRAC_PI_2, &mut j);
        assert!(close(j[3].x, -1.0, 1e-15));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let e0 = EllipseSegment::new(4.0, 6.0, 2.5, 1.2, 0.7);
        let p = e0.to_array();
        for &phase in &[0.0, 0.9, 2.5, 4.4] {
            let mut pj = [Vec2::ZERO; 5];
            let mut tj = [Vec2::ZERO; 5];
            e0.param_jacobian(phase, &mut pj);
            e0.tangent_jacobian(phase, &mut tj);
            for k in 0..5 {
                let h = 1e-6;
                let mut hi = p;
                let mut lo = p;
                hi[k] += h;
                lo[k] -= h;
                let (eh, el) = (EllipseSegment::from_slice(&hi), EllipseSegment::from_slice(&lo));
                let fd = (eh.point(phase) - el.point(phase)) * (0.5 / h);
                let ft = (eh.tangent(phase) - el.tangent(phase)) * (0.5 / h);
                assert!((fd - pj[k]).norm() < 1e-8, "pos k={k}");
                assert!((ft - tj[k]).norm() < 1e-8, "tan k={k}");
            }
            let h = 1e-6;
            let ft = (e0.point(phase + h) - e0.point(phase - h)) * (0.5 / h);
            assert!((ft - e0.tangent(phase)).norm() < 1e-8);
            let fs = (e0.tangent(phase + h) - e0.tangent(phase - h)) * (0.5 / h);
            assert!((fs - e0.second(phase)).norm() < 1e-8);
        }
    }

    #[test]
    fn constraint_zero_on_ellipse() {
        let (c, _) = ell().base_constraint(Vec2::new(7.0, 5.0));
        assert!(c.abs() < 1e-30);
    }

    #[test]
    fn constraint_circle_two_units_away() {
        let c = EllipseSegment::new(3.0, 5.0, 1.0, 1.0, 0.3);
        let (v, _) = c.base_constraint(Vec2::new(5.0, 5.0));
        assert!(close(v, 9.0, 1e-14));
    }

    #[test]
    fn constraint_matches_expanded_form() {
        let s = EllipseSegment::new(4.2, 5.9, 2.3, 0.8, 1.1);
        let w = Vec2::new(5.0, 5.0);
        let (dx, dy) = (w.x - s.center.x, w.y - s.center.y);
        let (a, b, phi) = (s.a, s.b, s.orientation);
        let f1 = (dx / a).powi(2) + (dy / b).powi(2);
        let f2 = (dx / b).powi(2) + (dy / a).powi(2);
        let f3 = (b * b - a * a) * dx * dy / (a * a * b * b);
        let expanded =
            (1.0 - f1 * phi.cos().powi(2) - f2 * phi.sin().powi(2) - f3 * (2.0 * phi).sin()).powi(2);
        assert!(close(s.base_constraint(w).0, expanded, 1e-13));
    }

    #[test]
    fn constraint_gradient_matches_finite_differences() {
        let w = Vec2::new(5.0, 5.0);
        let p = [4.2, 5.9, 2.3, 0.8, 1.1];
        let (_, g) = EllipseSegment::from_slice(&p).base_constraint(w);
        for k in 0..5 {
            let h = 1e-6;
            let (mut hi, mut lo) = (p, p);
            hi[k] += h;
            lo[k] -= h;
            let fd = (EllipseSegment::from_slice(&hi).base_constraint(w).0
                - EllipseSegment::from_slice(&lo).base_constraint(w).0)
                / (2.0 * h);
            assert!(close(g[k], fd, 1e-6), "k={k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn perimeter_of_two_by_one() {
        assert!(close(ell().perimeter(), 9.688448220547677, 1e-12));
        let c = EllipseSegment::new(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!(close(c.perimeter(), 2.0 * PI, 1e-14));
    }

    #[test]
    fn nearest_phase_on_axis() {
        let e = ell().nearest_phase(Vec2::new(9.0, 5.0));
        assert!(e < 1e-9 || (TAU - e) < 1e-9);
        let e = ell().nearest_phase(Vec2::new(5.0, 3.0));
        assert!(close(e, 1.5 * PI, 1e-9));
    }

    #[test]
    fn nearest_phase_sensitivity_matches_finite_differences() {
        let w = Vec2::new(5.0, 5.0);
        let p = [3.9, 6.2, 2.1, 0.9, 0.4];
        let s = EllipseSegment::from_slice(&p);
        let e = s.nearest_phase(w);
        let g = s.nearest_phase_sensitivity(e, w);
        for k in 0..5 {
            let h = 1e-6;
            let (mut hi, mut lo) = (p, p);
            hi[k] += h;
            lo[k] -= h;
            let mut d = EllipseSegment::from_slice(&hi).nearest_phase(w)
                - EllipseSegment::from_slice(&lo).nearest_phase(w);
            if d > PI {
                d -= TAU;
            } else if d < -PI {
                d += TAU;
            }
            assert!((g[k] - d / (2.0 * h)).abs() < 1e-6, "k={k}");
        }
    }
}
