use std::f64::consts::TAU;

use crate::model::Vec2;

use super::CurveShape;

/// Closed Fourier curve anchored at the base:
/// `s^x(ρ) = a_0 + Σ a_n sin(2π n f_x ρ + φ^x_n)`, likewise for `y` with
/// `f_y`. The offsets `a_0, b_0` are eliminated so that `s(0)` is the base.
///
/// Parameter order: `f_x, a_1..a_Γx, b_1..b_Γy, φ^x_1..φ^x_Γx, φ^y_1..φ^y_Γy`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCurve {
    pub base: Vec2,
    pub freq_x: f64,
    pub freq_y: f64,
    pub amp_x: Vec<f64>,
    pub amp_y: Vec<f64>,
    pub phase_x: Vec<f64>,
    pub phase_y: Vec<f64>,
    /// `(sin φ_n, cos φ_n)` per axis, cached.
    trig_x: Vec<(f64, f64)>,
    trig_y: Vec<(f64, f64)>,
    /// `(Σ a_n sin φ^x_n, Σ b_n sin φ^y_n)`.
    anchor: Vec2,
}

impl FourierCurve {
    pub fn param_count_for(gx: usize, gy: usize) -> usize {
        1 + 2 * gx + 2 * gy
    }

    pub fn from_slice(p: &[f64], gx: usize, gy: usize, base: Vec2) -> Self {
        debug_assert_eq!(p.len(), Self::param_count_for(gx, gy));
        let ax = 1;
        let ay = ax + gx;
        let px = ay + gy;
        let py = px + gx;
        let trig = |ph: &[f64]| ph.iter().map(|v| v.sin_cos()).collect::<Vec<_>>();
        let (trig_x, trig_y) = (trig(&p[px..py]), trig(&p[py..py + gy]));
        let anchor = Vec2::new(dot_sin(&p[ax..ay], &trig_x), dot_sin(&p[ay..px], &trig_y));
        FourierCurve {
            base,
            freq_x: p[0],
            freq_y: 1.0,
            amp_x: p[ax..ay].to_vec(),
            amp_y: p[ay..px].to_vec(),
            phase_x: p[px..py].to_vec(),
            phase_y: p[py..py + gy].to_vec(),
            trig_x,
            trig_y,
            anchor,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.freq_x];
        v.extend(&self.amp_x);
        v.extend(&self.amp_y);
        v.extend(&self.phase_x);
        v.extend(&self.phase_y);
        v
    }

    /// Derived offset `a_0 = w_B^x - Σ a_n sin φ^x_n`.
    pub fn offset_x(&self) -> f64 {
        self.base.x - self.anchor.x
    }

    /// Derived offset `b_0 = w_B^y - Σ b_n sin φ^y_n`.
    pub fn offset_y(&self) -> f64 {
        self.base.y - self.anchor.y
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let gx = self.amp_x.len();
        let gy = self.amp_y.len();
        (1, 1 + gx, 1 + gx + gy, 1 + 2 * gx + gy)
    }
}

fn dot_sin(amp: &[f64], trig: &[(f64, f64)]) -> f64 {
    amp.iter().zip(trig).map(|(a, t)| a * t.0).sum()
}

/// Calls `visit(k, ω_n, sin(ω_n ρ + φ_n), cos(ω_n ρ + φ_n))` for each
/// harmonic `n = k + 1`, with `ω_n = 2π n f`. Multiples of the base angle
/// come from the angle-addition recurrence, so only one `sin_cos` is needed.
#[inline]
fn harmonics(trig: &[(f64, f64)], f: f64, rho: f64, mut visit: impl FnMut(usize, f64, f64, f64)) {
    let w1 = TAU * f;
    let (s1, c1) = (w1 * rho).sin_cos();
    let (mut sn, mut cn) = (s1, c1);
    for (k, &(sp, cp)) in trig.iter().enumerate() {
        if k > 0 {
            let s = sn * c1 + cn * s1;
            cn = cn * c1 - sn * s1;
            sn = s;
        }
        visit(k, w1 * (k + 1) as f64, sn * cp + cn * sp, cn * cp - sn * sp);
    }
}

/// Point offset `Σ a_n sin(ω_n ρ + φ_n) - anchor` and tangent of one axis.
/// At `ρ = 0` the sum is formed exactly as the anchor, so the offset is zero.
fn axis_point_tangent(amp: &[f64], trig: &[(f64, f64)], f: f64, rho: f64, anchor: f64) -> (f64, f64) {
    let (mut p, mut t) = (0.0, 0.0);
    harmonics(trig, f, rho, |k, w, s, c| {
        p += amp[k] * s;
        t += amp[k] * w * c;
    });
    (p - anchor, t)
}

fn axis_second(amp: &[f64], trig: &[(f64, f64)], f: f64, rho: f64) -> f64 {
    let mut out = 0.0;
    harmonics(trig, f, rho, |k, w, s, _| out -= amp[k] * w * w * s);
    out
}

impl CurveShape for FourierCurve {
    fn param_count(&self) -> usize {
        Self::param_count_for(self.amp_x.len(), self.amp_y.len())
    }

    fn point(&self, rho: f64) -> Vec2 {
        self.point_tangent(rho).0
    }

    fn tangent(&self, rho: f64) -> Vec2 {
        self.point_tangent(rho).1
    }

    fn point_tangent(&self, rho: f64) -> (Vec2, Vec2) {
        let (px, tx) = axis_point_tangent(&self.amp_x, &self.trig_x, self.freq_x, rho, self.anchor.x);
        let (py, ty) = axis_point_tangent(&self.amp_y, &self.trig_y, self.freq_y, rho, self.anchor.y);
        (Vec2::new(self.base.x + px, self.base.y + py), Vec2::new(tx, ty))
    }

    fn second(&self, rho: f64) -> Vec2 {
        Vec2::new(
            axis_second(&self.amp_x, &self.trig_x, self.freq_x, rho),
            axis_second(&self.amp_y, &self.trig_y, self.freq_y, rho),
        )
    }

    fn param_jacobian(&self, rho: f64, out: &mut [Vec2]) {
        let (ax, ay, px, py) = self.offsets();
        let mut dfx = 0.0;
        harmonics(&self.trig_x, self.freq_x, rho, |k, _, s, c| {
            let (a, (s0, c0)) = (self.amp_x[k], self.trig_x[k]);
            dfx += a * TAU * (k + 1) as f64 * rho * c;
            out[ax + k] = Vec2::new(s - s0, 0.0);
            out[px + k] = Vec2::new(a * (c - c0), 0.0);
        });
        out[0] = Vec2::new(dfx, 0.0);
        harmonics(&self.trig_y, self.freq_y, rho, |k, _, s, c| {
            let (b, (s0, c0)) = (self.amp_y[k], self.trig_y[k]);
            out[ay + k] = Vec2::new(0.0, s - s0);
            out[py + k] = Vec2::new(0.0, b * (c - c0));
        });
    }

    fn tangent_jacobian(&self, rho: f64, out: &mut [Vec2]) {
        let (ax, ay, px, py) = self.offsets();
        let mut dfx = 0.0;
        harmonics(&self.trig_x, self.freq_x, rho, |k, w, s, c| {
            let a = self.amp_x[k];
            dfx += a * TAU * (k + 1) as f64 * (c - w * rho * s);
            out[ax + k] = Vec2::new(w * c, 0.0);
            out[px + k] = Vec2::new(-a * w * s, 0.0);
        });
        out[0] = Vec2::new(dfx, 0.0);
        harmonics(&self.trig_y, self.freq_y, rho, |k, w, s, c| {
            let b = self.amp_y[k];
            out[ay + k] = Vec2::new(0.0, w * c);
            out[py + k] = Vec2::new(0.0, -b * w * s);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn curve() -> FourierCurve {
        FourierCurve::from_slice(
            &[1.3, 2.0, 0.3, -0.2, 1.8, 0.1, 0.25, 0.4, 1.1, 2.0, 2.2, 0.3, 5.0],
            3,
            3,
            Vec2::new(5.0, 5.0),
        )
    }

    #[test]
    fn passes_through_base_exactly() {
        let c = curve();
        assert_eq!(c.point(0.0), Vec2::new(5.0, 5.0));
        let single = FourierCurve::from_slice(&[1.0, 1.0, 1.0, 0.0, 0.0], 1, 1, Vec2::new(5.0, 5.0));
        assert_eq!(single.point(0.0), Vec2::new(5.0, 5.0));
    }

    #[test]
    fn offsets_reproduce_series_form() {
        let c = curve();
        let rho = 0.37;
        let x: f64 = c.offset_x()
            + c.amp_x
                .iter()
                .zip(&c.phase_x)
                .enumerate()
                .map(|(k, (a, p))| a * (TAU * (k + 1) as f64 * c.freq_x * rho + p).sin())
                .sum::<f64>();
        assert!((x - c.point(rho).x).abs() < 1e-13);
    }

    #[test]
    fn single_harmonic_circle() {
        let c = FourierCurve::from_slice(&[1.0, 1.0, 1.0, 0.0, FRAC_PI_2], 1, 1, Vec2::new(5.0, 5.0));
        for &rho in &[0.0, 0.1, 0.33, 0.8] {
            assert!((c.tangent(rho).norm() - TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let c = curve();
        let p = c.to_vec();
        let n = p.len();
        for &rho in &[0.0, 0.21, 0.77, 1.6] {
            let mut pj = vec![Vec2::ZERO; n];
            let mut tj = vec![Vec2::ZERO; n];
            c.param_jacobian(rho, &mut pj);
            c.tangent_jacobian(rho, &mut tj);
            for k in 0..n {
                let h = 1e-6;
                let (mut hi, mut lo) = (p.clone(), p.clone());
                hi[k] += h;
                lo[k] -= h;
                let ch = FourierCurve::from_slice(&hi, 3, 3, c.base);
                let cl = FourierCurve::from_slice(&lo, 3, 3, c.base);
                let fd = (ch.point(rho) - cl.point(rho)) * (0.5 / h);
                let ft = (ch.tangent(rho) - cl.tangent(rho)) * (0.5 / h);
                assert!((fd - pj[k]).norm() < 1e-7 * (1.0 + pj[k].norm()), "pos k={k} rho={rho}");
                assert!((ft - tj[k]).norm() < 1e-7 * (1.0 + tj[k].norm()), "tan k={k} rho={rho}");
            }
            let h = 1e-6;
            let ft = (c.point(rho + h) - c.point(rho - h)) * (0.5 / h);
            assert!((ft - c.tangent(rho)).norm() < 1e-7 * c.tangent(rho).norm());
            let fs = (c.tangent(rho + h) - c.tangent(rho - h)) * (0.5 / h);
            assert!((fs - c.second(rho)).norm() < 1e-6 * (1.0 + c.second(rho).norm()));
        }
    }
}
