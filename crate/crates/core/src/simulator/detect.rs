//! Zero-crossing localization within one integrator step.

use crate::error::Result;

/// A localized guard crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub guard: usize,
    /// Earliest time on the new side, within tolerance of the root.
    pub time: f64,
}

/// Outcome of scanning a step for crossings.
#[derive(Debug, Clone, PartialEq)]
pub enum StepScan {
    Crossings(Vec<Crossing>),
    /// A guard may cross twice inside the step; retry with a shorter step.
    Ambiguous { guard: usize },
}

/// Whether the cubic Hermite interpolant of a guard over a step of length `h`
/// leaves its side `old` strictly inside the step.
pub fn hermite_excursion(
    g0: f64,
    d0: f64,
    g1: f64,
    d1: f64,
    h: f64,
    side: impl Fn(f64) -> bool,
    old: bool,
) -> bool {
    let (m0, m1) = (h * d0, h * d1);
    // p(s) = c0 + c1 s + c2 s² + c3 s³ on [0, 1]
    let c0 = g0;
    let c1 = m0;
    let c2 = -3.0 * g0 - 2.0 * m0 + 3.0 * g1 - m1;
    let c3 = 2.0 * g0 + m0 - 2.0 * g1 + m1;
    let eval = |s: f64| c0 + s * (c1 + s * (c2 + s * c3));
    let scale = g0.abs().max(g1.abs()).max(m0.abs()).max(m1.abs());
    let margin = 1e-9 * scale;
    let (a, b, c) = (3.0 * c3, 2.0 * c2, c1);
    let mut roots = Vec::with_capacity(2);
    if a.abs() <= 1e-300 {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            if q != 0.0 {
                roots.push(q / a);
                roots.push(c / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots
        .into_iter()
        .filter(|s| *s > 0.0 && *s < 1.0)
        .map(eval)
        .any(|v| {
            // Count an excursion only if it clears the numerical margin.
            side(v) != old && side(v + margin) != old && side(v - margin) != old
        })
}

/// Illinois false-position search for the first time `f` changes side.
///
/// `lo` must lie on the old side and `hi` on the new side. Returns the
/// smallest bracketed time on the new side once the bracket is below `tol`.
pub fn localize(
    mut f: impl FnMut(f64) -> Result<f64>,
    side: impl Fn(f64) -> bool,
    old: bool,
    mut lo: f64,
    mut flo: f64,
    mut hi: f64,
    mut fhi: f64,
    tol: f64,
) -> Result<f64> {
    let mut last_moved: i8 = 0;
    for iter in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let secant = (lo * fhi - hi * flo) / (fhi - flo);
        let mid = 0.5 * (lo + hi);
        let x = if iter < 150 && secant.is_finite() && secant > lo && secant < hi {
            secant
        } else {
            mid
        };
        let fx = f(x)?;
        if side(fx) == old {
            lo = x;
            flo = fx;
            if last_moved == -1 {
                fhi *= 0.5;
            }
            last_moved = -1;
        } else {
            hi = x;
            fhi = fx;
            if last_moved == 1 {
                flo *= 0.5;
            }
            last_moved = 1;
        }
    }
    Ok(hi)
}

/// Scans guards over `[t0, t1]`. `guards(t)` returns `(value, rate)` for every
/// guard; a crossing is any sign change of the value. Crossings are returned
/// in time order, ties broken by guard index.
pub fn detect_events(
    t0: f64,
    t1: f64,
    tol: f64,
    mut guards: impl FnMut(f64) -> Vec<(f64, f64)>,
) -> StepScan {
    let side = |v: f64| v < 0.0;
    let start = guards(t0);
    let end = guards(t1);
    let mut out = Vec::new();
    for (k, (&(g0, d0), &(g1, d1))) in start.iter().zip(&end).enumerate() {
        let old = side(g0);
        if side(g1) == old {
            if hermite_excursion(g0, d0, g1, d1, t1 - t0, side, old) {
                return StepScan::Ambiguous { guard: k };
            }
            continue;
        }
        let time = localize(
            |t| Ok(guards(t)[k].0),
            side,
            old,
            t0,
            g0,
            t1,
            g1,
            tol,
        )
        .expect("infallible guard");
        out.push(Crossing { guard: k, time });
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.guard.cmp(&b.guard)));
    StepScan::Crossings(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_sign_change() {
        let scan = detect_events(0.0, 1.0, 1e-12, |t| vec![(1.0 + t, 1.0)]);
        assert_eq!(scan, StepScan::Crossings(vec![]));
    }

    #[test]
    fn linear_root() {
        let scan = detect_events(0.0, 1.0, 1e-12, |t| vec![(0.3 - t, -1.0)]);
        let StepScan::Crossings(c) = scan else { panic!() };
        assert_eq!(c.len(), 1);
        assert!((c[0].time - 0.3).abs() <= 1e-12);
    }

    #[test]
    fn two_guards_ordered() {
        let scan = detect_events(0.0, 1.0, 1e-12, |t| {
            vec![(0.7 - t, -1.0), ((t - 0.2) * (t - 0.2) - 0.01, 2.0 * (t - 0.2))]
        });
        // The second guard starts positive, dips below zero at 0.1 and comes
        // back at 0.3: it never ends on the other side within [0, 1], so it is
        // flagged as ambiguous instead of silently skipped.
        assert!(matches!(scan, StepScan::Ambiguous { guard: 1 }));
        let scan = detect_events(0.0, 0.25, 1e-12, |t| {
            vec![(0.2 - t, -1.0), ((t - 0.2) * (t - 0.2) - 0.01, 2.0 * (t - 0.2))]
        });
        let StepScan::Crossings(c) = scan else { panic!() };
        assert_eq!(c.iter().map(|c| c.guard).collect::<Vec<_>>(), vec![1, 0]);
        assert!((c[0].time - 0.1).abs() <= 1e-12);
        assert!((c[1].time - 0.2).abs() <= 1e-12);
    }
}
