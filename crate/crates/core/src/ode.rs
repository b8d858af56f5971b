//! Explicit adaptive Runge-Kutta integration for small dense systems.
//!
//! Dormand-Prince 5(4) with FSAL and a standard step controller. States are
//! fixed-size `nalgebra` vectors; the systems here are 4-36 dimensional and
//! non-stiff at the parameter regimes of interest.

use nalgebra::SVector;

use crate::error::{Error, Result};

/// Integration tolerances and guards.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Norm guard; exceeding it aborts with an instability error.
    pub overflow_guard: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            overflow_guard: 1e12,
            max_steps: 50_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// b5 - b4 error weights (7 stages with FSAL)
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive integrator carrying its own state between calls so that a
/// trajectory can be advanced to successive target times without restarting.
pub struct Integrator<const N: usize, F>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    rhs: F,
    pub t: f64,
    pub y: SVector<f64, N>,
    h: f64,
    k1: SVector<f64, N>,
    opts: OdeOptions,
    steps: usize,
}

impl<const N: usize, F> Integrator<N, F>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    pub fn new(mut rhs: F, t0: f64, y0: SVector<f64, N>, opts: OdeOptions) -> Self {
        let k1 = rhs(t0, &y0);
        Integrator {
            rhs,
            t: t0,
            y: y0,
            h: 1e-4,
            k1,
            opts,
            steps: 0,
        }
    }

    fn error_norm(&self, y: &SVector<f64, N>, y_new: &SVector<f64, N>, err: &SVector<f64, N>) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / N as f64).sqrt()
    }

    /// One accepted step of size at most `h_max`. Returns the step actually taken.
    fn step(&mut self, h_max: f64) -> Result<f64> {
        let mut h = self.h.min(h_max).max(1e-14);
        loop {
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(Error::NonConvergence(format!(
                    "step budget exhausted at t = {}",
                    self.t
                )));
            }
            let mut k = [SVector::<f64, N>::zeros(); 7];
            k[0] = self.k1;
            for s in 1..7 {
                let mut ys = self.y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        ys += kj * (a * h);
                    }
                }
                k[s] = (self.rhs)(self.t + C[s - 1] * h, &ys);
            }
            // stage 7 is evaluated at y_new (FSAL); the 5th-order solution uses row A[5]
            let mut y_new = self.y;
            for (j, kj) in k.iter().enumerate().take(6) {
                let a = A[5][j];
                if a != 0.0 {
                    y_new += kj * (a * h);
                }
            }
            let mut err = SVector::<f64, N>::zeros();
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    err += kj * (E[j] * h);
                }
            }
            let norm = self.error_norm(&self.y, &y_new, &err);
            if norm <= 1.0 || h <= 1e-13 {
                self.t += h;
                self.y = y_new;
                self.k1 = k[6];
                if self.y.norm() > self.opts.overflow_guard {
                    return Err(Error::Instability {
                        time: self.t,
                        message: format!("state norm exceeded {:.1e}", self.opts.overflow_guard),
                    });
                }
                let factor = if norm > 0.0 {
                    (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                self.h = h * factor;
                return Ok(h);
            }
            h *= (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
        }
    }

    /// Advances to exactly `t_end` (the final step is clamped).
    pub fn integrate_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            let remaining = t_end - self.t;
            if remaining <= 1e-14 * t_end.abs().max(1.0) {
                break;
            }
            let h = self.step(remaining)?;
            if h >= remaining {
                break;
            }
        }
        // the FSAL derivative is stale only if rhs depends on t discontinuously,
        // which never happens here
        self.t = t_end;
        Ok(())
    }

    /// Advances to `t_end`, recording the state at each of `n_samples` points
    /// uniformly spaced on `[start, t_end)` (endpoint excluded).
    pub fn sample_uniform(
        &mut self,
        t_end: f64,
        n_samples: usize,
    ) -> Result<Vec<(f64, SVector<f64, N>)>> {
        let start = self.t;
        let dt = (t_end - start) / n_samples as f64;
        let mut out = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let target = start + i as f64 * dt;
            self.integrate_to(target)?;
            out.push((self.t, self.y));
        }
        self.integrate_to(t_end)?;
        Ok(out)
    }
}

/// Convenience wrapper: integrate from `t0` to `t_end` and return the final state.
pub fn integrate<const N: usize>(
    rhs: impl FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    t0: f64,
    y0: SVector<f64, N>,
    t_end: f64,
    opts: OdeOptions,
) -> Result<SVector<f64, N>> {
    let mut integ = Integrator::new(rhs, t0, y0, opts);
    integ.integrate_to(t_end)?;
    Ok(integ.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn harmonic_oscillator_energy_and_phase() {
        let rhs = |_t: f64, y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let y = integrate(rhs, 0.0, Vector2::new(1.0, 0.0), 20.0 * std::f64::consts::PI, OdeOptions::default())
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7, "q = {}", y[0]);
        assert!(y[1].abs() < 1e-7, "p = {}", y[1]);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let rhs = |_t: f64, y: &Vector2<f64>| Vector2::new(-y[0], -2.0 * y[1]);
        let y = integrate(rhs, 0.0, Vector2::new(1.0, 1.0), 5.0, OdeOptions::default()).unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-11);
        assert!((y[1] - (-10.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn overflow_guard_reports_instability() {
        let rhs = |_t: f64, y: &Vector2<f64>| *y * 10.0;
        let mut opts = OdeOptions::default();
        opts.overflow_guard = 1e6;
        let err = integrate(rhs, 0.0, Vector2::new(1.0, 0.0), 10.0, opts).unwrap_err();
        match err {
            Error::Instability { time, .. } => assert!(time > 0.0 && time < 2.0),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn uniform_sampling_hits_grid() {
        let rhs = |t: f64, _y: &Vector2<f64>| Vector2::new(t.cos(), -t.sin());
        let mut integ = Integrator::new(rhs, 0.0, Vector2::new(0.0, 1.0), OdeOptions::default());
        let samples = integ.sample_uniform(1.0, 64).unwrap();
        assert_eq!(samples.len(), 64);
        for (i, (t, y)) in samples.iter().enumerate() {
            let expect = i as f64 / 64.0;
            assert!((t - expect).abs() < 1e-12);
            assert!((y[0] - t.sin()).abs() < 1e-9);
        }
    }
}
