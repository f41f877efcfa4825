//! Dormand-Prince 5(4) with error control, for complex state vectors.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub h_min: f64,
    pub h_max: f64,
    /// Largest normalized local error estimate among accepted steps.
    pub max_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// Integrates y' = f(t, y) from `t0`, stopping exactly on every time in
/// `t_out` (ascending, ≥ t0) and calling `output(index, t, y)` there.
/// `after_step` may project the state after each accepted step.
pub fn integrate<F, O, P>(
    mut f: F,
    y: &mut [C64],
    t0: f64,
    t_out: &[f64],
    h0: f64,
    tol: Tolerances,
    mut output: O,
    mut after_step: P,
) -> Result<StepStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, f64, &[C64]),
    P: FnMut(&mut [C64]),
{
    let n = y.len();
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut y_new = vec![C64::new(0.0, 0.0); n];
    let mut k7 = vec![C64::new(0.0, 0.0); n];
    let mut stats = StepStats { h_min: f64::INFINITY, ..Default::default() };
    let mut t = t0;
    let mut h = h0;
    let t_scale = t_out.last().copied().unwrap_or(t0).abs().max(h0);
    f(t, y, &mut k[0]);

    for (idx, &target) in t_out.iter().enumerate() {
        while t < target {
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            if step < 1e-15 * t_scale {
                return Err(Error::StepUnderflow { t, h: step });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += kj[i] * (step * a);
                        }
                    }
                    tmp[i] = acc;
                }
                f(t + C[s] * step, &tmp, &mut k[s]);
                if s == 6 {
                    y_new.copy_from_slice(&tmp);
                }
            }
            // error estimate needs k7 = f(t+h, y_new)
            f(t + step, &y_new, &mut k7);
            let mut err2 = 0.0;
            for i in 0..n {
                let mut e = k7[i] * E[6];
                for (j, kj) in k.iter().enumerate().take(6) {
                    if E[j] != 0.0 {
                        e += kj[i] * E[j];
                    }
                }
                let sc = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
                let r = (e * step).norm() / sc;
                err2 += r * r;
            }
            let err = (err2 / n as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y.copy_from_slice(&y_new);
                after_step(y);
                std::mem::swap(&mut k[0], &mut k7);
                stats.accepted += 1;
                stats.h_min = stats.h_min.min(step);
                stats.h_max = stats.h_max.max(step);
                stats.max_error = stats.max_error.max(err);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = step * fac;
                } else {
                    h = h.max(step * fac).min(h * 5.0);
                }
            } else {
                stats.rejected += 1;
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h = step * fac;
            }
        }
        output(idx, t, y);
    }
    if stats.accepted == 0 {
        stats.h_min = 0.0;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotating_phase_and_decay() {
        // y' = (i w - g) y, exact y0 exp((i w - g) t)
        let (w, g) = (3.0, 0.4);
        let rate = C64::new(-g, w);
        let mut y = vec![C64::new(1.0, 0.0)];
        let times = [0.5, 1.0, 2.0, 2.0, 5.0];
        let mut got = Vec::new();
        integrate(
            |_, y, dy| dy[0] = rate * y[0],
            &mut y,
            0.0,
            &times,
            1e-3,
            Tolerances { rtol: 1e-11, atol: 1e-13 },
            |_, t, y| got.push((t, y[0])),
            |_| {},
        )
        .unwrap();
        for (t, v) in got {
            assert!((v - (rate * t).exp()).norm() < 1e-9, "t={t}");
        }
    }
}
