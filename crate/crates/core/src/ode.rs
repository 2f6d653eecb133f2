//! Adaptive Dormand-Prince 5(4) integration for `y' = f(t, y)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 10_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `t0` and returns the state at each of `times` (ascending, `>= t0`).
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k[0])?;
    let mut h = initial_step(&mut f, t, &y, &k[0], opts)?;
    let mut steps = 0usize;

    for &t_out in times {
        if t_out < t {
            return Err(Error::InvalidParameter(format!(
                "output times must be ascending from t0, got {t_out} after {t}"
            )));
        }
        while t < t_out {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Integration(format!("step limit reached at t = {t}")));
            }
            let last = t + h >= t_out;
            let step = if last { t_out - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    stage[i] = y[i] + step * acc;
                }
                f(t + C[s] * step, &stage, &mut k[s])?;
            }
            // the seventh stage is evaluated at the fifth-order solution
            y_new.copy_from_slice(&stage);
            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                let r = step * e / scale;
                err += r * r;
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration(format!("non-finite error estimate at t = {t}")));
            }
            if err <= 1.0 {
                t = if last { t_out } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
                // keep the controller's own step when the output time truncated it
                if !last || step >= h {
                    h = step * grow.max(1.0);
                }
            } else {
                h = step * (0.9 * err.powf(-0.2)).max(0.2);
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration(format!("step size underflow at t = {t}")));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len().max(1) as f64;
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times = [0.5, 1.0, 3.0, 10.0];
        let out = integrate(
            |_, y, dy| {
                dy[0] = -2.0 * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &times,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in times.iter().zip(&out) {
            let exact = (-2.0 * t).exp();
            assert!((y[0] - exact).abs() < 1e-8 * exact + 1e-11, "t = {t}");
        }
    }

    #[test]
    fn harmonic_oscillator_long_run() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 5.0).collect();
        let out = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0, 0.0],
            &times,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in times.iter().zip(&out) {
            assert!((y[0] - t.cos()).abs() < 1e-7);
            assert!((y[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos t, y(0) = 0
        let out = integrate(
            |t, _, dy| {
                dy[0] = t.cos();
                Ok(())
            },
            0.0,
            &[0.0],
            &[1.0, 2.0],
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((out[0][0] - 1f64.sin()).abs() < 1e-9, "{}", out[0][0] - 1f64.sin());
        assert!((out[1][0] - 2f64.sin()).abs() < 1e-9, "{}", out[1][0] - 2f64.sin());
    }

    #[test]
    fn output_at_start_and_repeated_times() {
        let out = integrate(
            |_, y, dy| {
                dy[0] = y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &[0.0, 1.0, 1.0],
            &OdeOptions::default(),
        )
        .unwrap();
        assert_eq!(out[0][0], 1.0);
        assert_eq!(out[1], out[2]);
    }

    #[test]
    fn descending_times_rejected() {
        let r = integrate(
            |_, _, dy| {
                dy[0] = 0.0;
                Ok(())
            },
            0.0,
            &[1.0],
            &[1.0, 0.5],
            &OdeOptions::default(),
        );
        assert!(r.is_err());
    }
}
