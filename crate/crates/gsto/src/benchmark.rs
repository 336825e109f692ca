//! Synthetic two-subsystem benchmark with a cascaded first channel and
//! known bounded perturbations.
//!
//! Subsystem i:
//!
//! ```text
//! x_i1' = f_i1 + g_i(t) x_i2            f_11 = 0, f_21 = x_12
//! x_i2' = (a_i - b x_i2) + delta_i(t)   delta_i = 0.5 sin(t + p_i) + 0.3 sign(sin(3t + p_i))
//! ```
//!
//! with `g_i(t)` sinusoids inside [0.5, 2]. The drift `a_i - b x_i2` keeps the
//! second states large and bounded away from zero, so relative errors stay
//! meaningful through the chattering floor.

use crate::observer::{ObserverGains, SubsystemGains};
use crate::sim::{InputFn, Method, SimConfig};
use crate::sta::MuPair;
use crate::system::{InterconnectedSystem, SubsystemModel};
use crate::Result;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct BenchmarkParams {
    /// Phase offsets of the two perturbations.
    pub phases: [f64; 2],
    /// Drift targets a_i of the second states.
    pub drift_levels: [f64; 2],
    /// Drift decay rate b.
    pub drift_rate: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            phases: [0.0, 0.0],
            drift_levels: [100.0, 75.0],
            drift_rate: 0.05,
        }
    }
}

/// The benchmark perturbation `0.5 sin(t) + 0.3 sign(sin(3t))` (phase-shifted).
pub fn benchmark_delta(t: f64, phase: f64) -> f64 {
    let s = (3.0 * t + phase).sin();
    0.5 * (t + phase).sin() + 0.3 * if s > 0.0 { 1.0 } else if s < 0.0 { -1.0 } else { 0.0 }
}

pub fn build_benchmark_system(p: &BenchmarkParams) -> Result<InterconnectedSystem> {
    let b = p.drift_rate;
    let mk = |i: usize| -> SubsystemModel {
        let phase = p.phases[i];
        let a = p.drift_levels[i];
        let f1: crate::system::F1Fn = if i == 0 {
            Arc::new(|_, _, _, _| 0.0)
        } else {
            Arc::new(|_y: &[f64], _u: &[f64], up: &[f64], _t| up[0])
        };
        let g: crate::system::GainFn = if i == 0 {
            Arc::new(|_y: &[f64], _u: &[f64], t: f64| 1.25 + 0.75 * (0.1 * t).sin())
        } else {
            Arc::new(|_y: &[f64], _u: &[f64], t: f64| 1.25 + 0.75 * (0.07 * t).cos())
        };
        SubsystemModel {
            f1,
            f2: Arc::new(move |x: &[f64], _u: &[f64], _t| a - b * x[2 * i + 1]),
            g,
            delta: Arc::new(move |_x: &[f64], _u: &[f64], _w: &[f64], t: f64| {
                benchmark_delta(t, phase)
            }),
            g_bounds: (0.5, 2.0),
        }
    };
    InterconnectedSystem::new(vec![mk(0), mk(1)], 0)
}

/// Gains sized (via the feasibility report on an estimated-bounds run) so
/// that the decrease coefficients are positive with margin at gamma = 30.
pub fn benchmark_gains() -> ObserverGains {
    ObserverGains {
        per_subsystem: (0..2)
            .map(|_| SubsystemGains {
                l1: 1.1,
                l2: 3.0,
                gamma: 30.0,
                mu: MuPair { mu1: 0.2, mu2: 1.0 },
            })
            .collect(),
    }
}

/// 200 s horizon at dt = 1e-3 with the observer started at 5x the truth.
pub fn benchmark_sim_config() -> SimConfig {
    let x0 = vec![100.0, 1800.0, 80.0, 1300.0];
    let xhat0 = x0.iter().map(|v| 5.0 * v).collect();
    SimConfig {
        t0: 0.0,
        t_end: 200.0,
        dt: 1e-3,
        x0,
        xhat0,
        method: Method::Euler,
        noise: None,
        input: Arc::new(|_| vec![]) as InputFn,
        unknown_input: Arc::new(|_| vec![0.0, 0.0]) as InputFn,
        record_stride: 10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::ObserverPlant;
    use crate::sim::{convergence_time, integrate, relative_error};

    #[test]
    fn delta_is_bounded() {
        for k in 0..10_000 {
            let t = k as f64 * 0.021;
            assert!(benchmark_delta(t, 0.0).abs() <= 0.8 + 1e-15);
        }
    }

    #[test]
    fn gsto_converges_on_benchmark() {
        let sys = build_benchmark_system(&BenchmarkParams::default()).unwrap();
        let obs = ObserverPlant::from_system(&sys, benchmark_gains()).unwrap();
        let mut cfg = benchmark_sim_config();
        cfg.t_end = 50.0; // shortened for the unit test
        let traj = integrate(&sys, &obs, &cfg).unwrap();
        let ct = convergence_time(&traj, 1e-4, 50.0).unwrap();
        assert!(ct.is_some(), "no convergence at tol 1e-4");
        assert!(ct.unwrap() <= 25.0, "converged too late: {:?}", ct);
        let rel = relative_error(&traj);
        let tail_max = rel[rel.len() - 1].iter().cloned().fold(0.0f64, f64::max);
        assert!(tail_max <= 1e-4, "tail relative error {tail_max}");
    }
}
