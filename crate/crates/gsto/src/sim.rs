//! Deterministic fixed-step co-integration of plant and observer.
//!
//! Explicit Euler is the reference integrator: the observer right-hand side
//! is discontinuous, so higher-order smooth methods lose their order anyway,
//! and Euler gives predictable chattering. RK4 is available for smooth
//! comparisons. Plant and observer advance on the same grid and the observer
//! sees a zero-order hold of the (possibly noisy) measurement within a step.

use crate::observer::ObserverPlant;
use crate::system::InterconnectedSystem;
use crate::{Error, Result};
use std::sync::Arc;

/// Hard cutoff on any state magnitude; exceeded means divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Division guard for relative errors.
pub const EPS_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

pub type InputFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Additive measurement noise, one bounded function per output channel.
#[derive(Clone)]
pub struct NoiseModel {
    pub channels: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl NoiseModel {
    /// Sinusoidal noise `n_i(t) = amplitude_i * sin(frequency * t)`.
    pub fn sinusoidal(amplitudes: &[f64], frequency: f64) -> Self {
        Self {
            channels: amplitudes
                .iter()
                .map(|&a| {
                    let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
                        Arc::new(move |t: f64| a * (frequency * t).sin());
                    f
                })
                .collect(),
        }
    }
}

/// Add noise to a measurement vector.
pub fn apply_noise(y: &[f64], t: f64, noise: &NoiseModel) -> Vec<f64> {
    y.iter()
        .zip(&noise.channels)
        .map(|(v, n)| v + n(t))
        .collect()
}

/// Simulation configuration for one plant/observer pair.
#[derive(Clone)]
pub struct SimConfig {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    pub method: Method,
    pub noise: Option<NoiseModel>,
    /// Known input u(t).
    pub input: InputFn,
    /// Unknown input w(t), fed only to the truth-side plant.
    pub unknown_input: InputFn,
    /// Record every k-th step (plus the final one).
    pub record_stride: usize,
}

impl SimConfig {
    fn validate(&self, sys: &InterconnectedSystem) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > self.t0) {
            return Err(Error::Domain("t_end must exceed t0".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Domain("record_stride must be >= 1".into()));
        }
        let dim = sys.state_dim();
        if self.x0.len() != dim {
            return Err(Error::Dimension {
                what: "x0",
                expected: dim,
                got: self.x0.len(),
            });
        }
        if self.xhat0.len() != dim {
            return Err(Error::Dimension {
                what: "xhat0",
                expected: dim,
                got: self.xhat0.len(),
            });
        }
        if let Some(noise) = &self.noise {
            if noise.channels.len() != sys.n_subsystems() {
                return Err(Error::Dimension {
                    what: "noise channels",
                    expected: sys.n_subsystems(),
                    got: noise.channels.len(),
                });
            }
        }
        Ok(())
    }
}

/// Recorded samples of one co-integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub y_clean: Vec<Vec<f64>>,
    pub y_meas: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Estimation errors `xhat - x` at sample `k`.
    pub fn errors(&self, k: usize) -> Vec<f64> {
        self.xhat[k]
            .iter()
            .zip(&self.x[k])
            .map(|(a, b)| a - b)
            .collect()
    }
}

fn check_finite(state: &[f64], t: f64) -> Result<()> {
    for v in state {
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                t,
                limit: DIVERGENCE_LIMIT,
            });
        }
    }
    Ok(())
}

/// Advance plant and observer simultaneously on a shared fixed grid.
///
/// Deterministic: identical inputs produce bit-identical trajectories.
pub fn integrate(
    sys: &InterconnectedSystem,
    obs: &ObserverPlant,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate(sys)?;
    let n_steps = ((cfg.t_end - cfg.t0) / cfg.dt).round().max(1.0) as usize;
    let lay = sys.layout();
    let mut x = cfg.x0.clone();
    let mut xhat = cfg.xhat0.clone();

    let capacity = n_steps / cfg.record_stride + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        x: Vec::with_capacity(capacity),
        xhat: Vec::with_capacity(capacity),
        y_clean: Vec::with_capacity(capacity),
        y_meas: Vec::with_capacity(capacity),
        u: Vec::with_capacity(capacity),
        w: Vec::with_capacity(capacity),
    };

    let measure = |x: &[f64], t: f64| -> (Vec<f64>, Vec<f64>) {
        let y = lay.measured(x);
        let ym = match &cfg.noise {
            Some(noise) => apply_noise(&y, t, noise),
            None => y.clone(),
        };
        (y, ym)
    };

    let mut record = |k: usize, x: &[f64], xhat: &[f64]| {
        let t = cfg.t0 + k as f64 * cfg.dt;
        let (y, ym) = measure(x, t);
        traj.times.push(t);
        traj.x.push(x.to_vec());
        traj.xhat.push(xhat.to_vec());
        traj.y_clean.push(y);
        traj.y_meas.push(ym);
        traj.u.push((cfg.input)(t));
        traj.w.push((cfg.unknown_input)(t));
    };

    record(0, &x, &xhat);
    for k in 0..n_steps {
        let t = cfg.t0 + k as f64 * cfg.dt;
        match cfg.method {
            Method::Euler => {
                let u = (cfg.input)(t);
                let w = (cfg.unknown_input)(t);
                let (_, ym) = measure(&x, t);
                let dx = sys.eval_plant_rhs(&x, &u, &w, t)?;
                let dxh = obs.eval_observer_rhs(&xhat, &ym, &u, t)?;
                for i in 0..x.len() {
                    x[i] += cfg.dt * dx[i];
                    xhat[i] += cfg.dt * dxh[i];
                }
            }
            Method::Rk4 => {
                rk4_step(sys, obs, cfg, &mut x, &mut xhat, t)?;
            }
        }
        let t_next = cfg.t0 + (k + 1) as f64 * cfg.dt;
        check_finite(&x, t_next)?;
        check_finite(&xhat, t_next)?;
        if (k + 1) % cfg.record_stride == 0 || k + 1 == n_steps {
            record(k + 1, &x, &xhat);
        }
    }
    Ok(traj)
}

fn rk4_step(
    sys: &InterconnectedSystem,
    obs: &ObserverPlant,
    cfg: &SimConfig,
    x: &mut Vec<f64>,
    xhat: &mut Vec<f64>,
    t: f64,
) -> Result<()> {
    let lay = sys.layout();
    let dim = x.len();
    let eval = |x: &[f64], xhat: &[f64], ts: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let u = (cfg.input)(ts);
        let w = (cfg.unknown_input)(ts);
        let y = lay.measured(x);
        let ym = match &cfg.noise {
            Some(noise) => apply_noise(&y, ts, noise),
            None => y,
        };
        Ok((
            sys.eval_plant_rhs(x, &u, &w, ts)?,
            obs.eval_observer_rhs(xhat, &ym, &u, ts)?,
        ))
    };
    let shift = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, kv)| b + h * kv).collect()
    };
    let h = cfg.dt;
    let (k1x, k1h) = eval(x, xhat, t)?;
    let (k2x, k2h) = eval(&shift(x, &k1x, h / 2.0), &shift(xhat, &k1h, h / 2.0), t + h / 2.0)?;
    let (k3x, k3h) = eval(&shift(x, &k2x, h / 2.0), &shift(xhat, &k2h, h / 2.0), t + h / 2.0)?;
    let (k4x, k4h) = eval(&shift(x, &k3x, h), &shift(xhat, &k3h, h), t + h)?;
    for i in 0..dim {
        x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        xhat[i] += h / 6.0 * (k1h[i] + 2.0 * k2h[i] + 2.0 * k3h[i] + k4h[i]);
    }
    Ok(())
}

/// Per-sample, per-state relative errors `|xhat - x| / max(|x|, EPS_REL)`.
pub fn relative_error(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.x
        .iter()
        .zip(&traj.xhat)
        .map(|(x, xhat)| {
            x.iter()
                .zip(xhat)
                .map(|(xv, xh)| (xh - xv).abs() / xv.abs().max(EPS_REL))
                .collect()
        })
        .collect()
}

/// Earliest recorded time `t` such that the maximal relative error stays at
/// or below `tol` for every sample in `[t, t + hold]` (truncated at the end
/// of the horizon). `None` if never achieved.
pub fn convergence_time(traj: &Trajectory, tol: f64, hold: f64) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    if traj.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    let t_first = traj.times[0];
    let t_last = *traj.times.last().unwrap();
    if hold > t_last - t_first {
        return Err(Error::Domain(format!(
            "hold window {hold} exceeds the horizon {}",
            t_last - t_first
        )));
    }
    let rel = relative_error(traj);
    let ok: Vec<bool> = rel
        .iter()
        .map(|row| row.iter().all(|&r| r <= tol))
        .collect();
    // Scan backwards tracking the earliest failure at or after each sample.
    let mut next_bad = f64::INFINITY;
    let mut result = None;
    for k in (0..traj.len()).rev() {
        if !ok[k] {
            next_bad = traj.times[k];
        } else if next_bad > traj.times[k] + hold {
            result = Some(traj.times[k]);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::{ObserverGains, ObserverPlant, SubsystemGains};
    use crate::sta::MuPair;
    use crate::system::{unit_gain, zero_delta, zero_f1, zero_f2, InterconnectedSystem, SubsystemModel};

    fn integrator() -> InterconnectedSystem {
        InterconnectedSystem::new(
            vec![SubsystemModel {
                f1: zero_f1(),
                f2: zero_f2(),
                g: unit_gain(),
                delta: zero_delta(),
                g_bounds: (0.5, 2.0),
            }],
            0,
        )
        .unwrap()
    }

    fn gains() -> ObserverGains {
        ObserverGains {
            per_subsystem: vec![SubsystemGains {
                l1: 1.0,
                l2: 1.0,
                gamma: 1.0,
                mu: MuPair { mu1: 1.0, mu2: 1.0 },
            }],
        }
    }

    fn cfg(x0: Vec<f64>, xhat0: Vec<f64>, t_end: f64, dt: f64) -> SimConfig {
        SimConfig {
            t0: 0.0,
            t_end,
            dt,
            x0,
            xhat0,
            method: Method::Euler,
            noise: None,
            input: Arc::new(|_| vec![]),
            unknown_input: Arc::new(|_| vec![0.0]),
            record_stride: 1,
        }
    }

    #[test]
    fn hand_euler_step() {
        let sys = integrator();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![0.0, 1.0], vec![0.0, 1.0], 0.1, 0.1);
        let traj = integrate(&sys, &obs, &c).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.x[1], vec![0.1, 1.0]);
    }

    #[test]
    fn equilibrium_invariance() {
        let sys = integrator();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![0.3, -0.7], vec![0.3, -0.7], 10.0, 0.01);
        let traj = integrate(&sys, &obs, &c).unwrap();
        for k in 0..traj.len() {
            for e in traj.errors(k) {
                assert_eq!(e, 0.0);
            }
        }
    }

    #[test]
    fn determinism() {
        let sys = integrator();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![0.0, 1.0], vec![1.0, 2.0], 5.0, 0.01);
        let a = integrate(&sys, &obs, &c).unwrap();
        let b = integrate(&sys, &obs, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_detected() {
        let sys = InterconnectedSystem::new(
            vec![SubsystemModel {
                f1: zero_f1(),
                f2: std::sync::Arc::new(|x: &[f64], _u: &[f64], _t| x[1] * 10.0), // unstable
                g: unit_gain(),
                delta: zero_delta(),
                g_bounds: (0.5, 2.0),
            }],
            0,
        )
        .unwrap();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![0.0, 1.0], vec![0.0, 1.0], 10.0, 0.1);
        assert!(matches!(
            integrate(&sys, &obs, &c),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn noise_model_values() {
        let noise = NoiseModel::sinusoidal(&[0.03, 0.1], 1.0);
        let t = std::f64::consts::FRAC_PI_2;
        let ym = apply_noise(&[0.0, 0.0], t, &noise);
        assert!((ym[0] - 0.03).abs() < 1e-12);
        assert!((ym[1] - 0.1).abs() < 1e-12);
        // Boundedness over a grid.
        for k in 0..1000 {
            let t = k as f64 * 0.37;
            let ym = apply_noise(&[0.0, 0.0], t, &noise);
            assert!(ym[0].abs() <= 0.03 + 1e-15 && ym[1].abs() <= 0.1 + 1e-15);
        }
        // Zero noise is the identity.
        let zero = NoiseModel::sinusoidal(&[0.0, 0.0], 1.0);
        assert_eq!(apply_noise(&[1.0, 2.0], 3.0, &zero), vec![1.0, 2.0]);
    }

    #[test]
    fn relative_error_basics() {
        let sys = integrator();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![1.0, 2.0], vec![5.0, 10.0], 0.1, 0.1);
        let traj = integrate(&sys, &obs, &c).unwrap();
        let rel = relative_error(&traj);
        // xhat = 5x at t0 -> relative error 4.
        assert!((rel[0][0] - 4.0).abs() < 1e-12);
        assert!((rel[0][1] - 4.0).abs() < 1e-12);
        // Guard engages at x = 0.
        let mut t2 = traj.clone();
        t2.x[0][0] = 0.0;
        t2.xhat[0][0] = 1e-6;
        let rel2 = relative_error(&t2);
        assert_eq!(rel2[0][0], 1e-6 / EPS_REL);
    }

    #[test]
    fn convergence_time_exact_match() {
        let sys = integrator();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![1.0, 2.0], vec![1.0, 2.0], 1.0, 0.1);
        let traj = integrate(&sys, &obs, &c).unwrap();
        assert_eq!(convergence_time(&traj, 1e-9, 1.0).unwrap(), Some(0.0));
        assert!(convergence_time(&traj, 1e-9, 1.5).is_err()); // hold > horizon
    }

    #[test]
    fn convergence_time_monotone_in_tol() {
        let sys = integrator();
        let obs = ObserverPlant::from_system(&sys, gains()).unwrap();
        let c = cfg(vec![1.0, 2.0], vec![2.0, 3.0], 30.0, 0.001);
        let traj = integrate(&sys, &obs, &c).unwrap();
        let loose = convergence_time(&traj, 1e-1, 5.0).unwrap();
        let tight = convergence_time(&traj, 1e-3, 5.0).unwrap();
        if let (Some(a), Some(b)) = (loose, tight) {
            assert!(a <= b);
        } else {
            assert!(tight.is_none() || loose.is_some());
        }
    }

    #[test]
    fn step_refinement_bounds_chatter() {
        // Halving dt changes the final error bound by less than a factor of 4.
        let sys = InterconnectedSystem::new(
            vec![SubsystemModel {
                f1: zero_f1(),
                f2: zero_f2(),
                g: unit_gain(),
                delta: std::sync::Arc::new(|_x: &[f64], _u: &[f64], _w: &[f64], t: f64| {
                    0.3 * (3.0 * t).sin().signum()
                }),
                g_bounds: (0.5, 2.0),
            }],
            0,
        )
        .unwrap();
        let gs = ObserverGains {
            per_subsystem: vec![SubsystemGains {
                l1: 1.1,
                l2: 3.0,
                gamma: 3.0,
                mu: MuPair { mu1: 0.5, mu2: 1.0 },
            }],
        };
        let obs = ObserverPlant::from_system(&sys, gs).unwrap();
        let tail_err = |dt: f64| {
            let c = cfg(vec![1.0, 1.0], vec![2.0, 0.0], 40.0, dt);
            let traj = integrate(&sys, &obs, &c).unwrap();
            let start = traj.len() / 2;
            (start..traj.len())
                .map(|k| traj.errors(k).iter().fold(0.0f64, |m, e| m.max(e.abs())))
                .fold(0.0f64, f64::max)
        };
        let coarse = tail_err(1e-3);
        let fine = tail_err(5e-4);
        assert!(coarse <= 4.0 * fine, "coarse {coarse}, fine {fine}");
        assert!(fine <= 4.0 * coarse, "coarse {coarse}, fine {fine}");
    }
}
