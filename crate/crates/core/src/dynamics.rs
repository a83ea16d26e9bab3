//! Time integration of the full diffraction-managed equation
//! `i u_t + d̃(t)Δu + ε(d_av Δu + |u|²u) = 0` and of the averaged equation
//! `i v_t + ε d_av Δv + ε Q(v,v,v) = 0`, both by Strang splitting with exact
//! linear sub-steps.

use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::functional::Functional;
use crate::lattice::GridFunction;
use crate::propagator::{DiffractionProfile, PropagatorEngine};
use crate::{Error, Result};

/// Tolerance for a step dividing a segment length or the final time.
const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvolutionConfig {
    pub eps: f64,
    pub d_av: f64,
    /// Final time in fast-variable units.
    pub t_end: f64,
    pub h: f64,
    /// Record every `record_stride` steps (the final state is always recorded).
    pub record_stride: usize,
    /// Upper limit on the slow time `ε·t_end`.
    pub max_slow_time: f64,
}

impl Default for EvolutionConfig {
    fn default() -> EvolutionConfig {
        EvolutionConfig {
            eps: 0.05,
            d_av: 0.0,
            t_end: 1.0,
            h: 1.0 / 64.0,
            record_stride: 64,
            max_slow_time: 100.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig("eps must be nonnegative"));
        }
        if !(self.d_av >= 0.0 && self.d_av.is_finite()) {
            return Err(Error::InvalidConfig("d_av must be nonnegative"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig("step must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig("t_end must be nonnegative"));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record stride must be positive"));
        }
        if self.eps * self.t_end > self.max_slow_time {
            return Err(Error::InvalidConfig(
                "eps * t_end exceeds the slow-time cap",
            ));
        }
        Ok(())
    }

    /// Number of steps; `h` must divide `t_end`.
    pub fn steps(&self) -> Result<usize> {
        let n = (self.t_end / self.h).round();
        if (n * self.h - self.t_end).abs() > ALIGN_TOL * self.t_end.max(1.0) {
            return Err(Error::StepMisaligned { h: self.h });
        }
        Ok(n as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<GridFunction>,
    pub norms: Vec<f64>,
    /// Averaged Hamiltonian at every sample (averaged flow only).
    pub hamiltonian: Option<Vec<f64>>,
}

impl Trajectory {
    fn new(with_hamiltonian: bool) -> Trajectory {
        Trajectory {
            times: Vec::new(),
            fields: Vec::new(),
            norms: Vec::new(),
            hamiltonian: with_hamiltonian.then(Vec::new),
        }
    }

    fn record(&mut self, t: f64, u: &GridFunction, h: Option<f64>) {
        self.times.push(t);
        self.norms.push(u.norm2());
        self.fields.push(u.clone());
        if let (Some(trace), Some(h)) = (self.hamiltonian.as_mut(), h) {
            trace.push(h);
        }
    }

    pub fn last(&self) -> &GridFunction {
        self.fields
            .last()
            .expect("trajectories hold at least the initial state")
    }

    /// `max_t |‖u(t)‖₂ − ‖u(0)‖₂|`.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.norms[0];
        self.norms
            .iter()
            .map(|n| (n - n0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_t |H(t) − H(0)|`, if recorded.
    pub fn hamiltonian_drift(&self) -> Option<f64> {
        let h = self.hamiltonian.as_ref()?;
        let h0 = *h.first()?;
        Some(h.iter().map(|v| (v - h0).abs()).fold(0.0, f64::max))
    }
}

/// Rejects steps that straddle a breakpoint of the profile.
pub fn check_alignment(profile: &DiffractionProfile, h: f64) -> Result<()> {
    for b in profile.breakpoints() {
        let k = (b / h).round();
        if (k * h - b).abs() > ALIGN_TOL {
            return Err(Error::StepMisaligned { h });
        }
    }
    Ok(())
}

/// `u(x) ← e^{iε s |u(x)|²} u(x)`, the exact flow of the cubic term.
fn nonlinear_phase(u: &mut GridFunction, eps_s: f64) {
    if eps_s == 0.0 {
        return;
    }
    for z in u.values_mut() {
        *z *= Complex64::new(0.0, eps_s * z.norm_sqr()).exp();
    }
}

/// Full equation by Strang splitting: half cubic phase, exact linear step
/// with `θ = ∫_t^{t+h}(d̃ + ε d_av)`, half cubic phase.
pub fn evolve_full(
    u0: &GridFunction,
    cfg: &EvolutionConfig,
    profile: &DiffractionProfile,
    engine: &PropagatorEngine,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_alignment(profile, cfg.h)?;
    let steps = cfg.steps()?;
    let mut u = u0.clone();
    let mut traj = Trajectory::new(false);
    traj.record(0.0, &u, None);
    for k in 0..steps {
        let t = k as f64 * cfg.h;
        let t_next = (k + 1) as f64 * cfg.h;
        let theta = profile.integral(t, t_next) + cfg.eps * cfg.d_av * cfg.h;
        nonlinear_phase(&mut u, 0.5 * cfg.eps * cfg.h);
        u = engine.evolve(&u, theta)?;
        nonlinear_phase(&mut u, 0.5 * cfg.eps * cfg.h);
        if (k + 1) % cfg.record_stride == 0 || k + 1 == steps {
            traj.record(t_next, &u, None);
        }
    }
    Ok(traj)
}

/// `v ← v + RK4 step of v' = iε Q(v,v,v)`.
fn q_flow_rk4(func: &Functional, v: &GridFunction, eps_h: f64) -> Result<GridFunction> {
    let rhs = |w: &GridFunction| -> Result<GridFunction> {
        Ok(func.q_map(w, w, w)?.scale(Complex64::new(0.0, 1.0)))
    };
    let k1 = rhs(v)?;
    let k2 = rhs(&v.axpy(Complex64::new(0.5 * eps_h, 0.0), &k1)?)?;
    let k3 = rhs(&v.axpy(Complex64::new(0.5 * eps_h, 0.0), &k2)?)?;
    let k4 = rhs(&v.axpy(Complex64::new(eps_h, 0.0), &k3)?)?;
    let mut out = v.clone();
    for (i, o) in out.values_mut().iter_mut().enumerate() {
        *o += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (eps_h / 6.0);
    }
    Ok(out)
}

/// Averaged equation: exact half-steps of `e^{iε d_av (h/2) Δ}` around an
/// RK4 step of the nonlocal flow.
pub fn evolve_averaged(
    v0: &GridFunction,
    cfg: &EvolutionConfig,
    func: &Functional,
) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = cfg.steps()?;
    let engine = func.engine();
    let half_theta = 0.5 * cfg.eps * cfg.d_av * cfg.h;
    let mut v = v0.clone();
    let mut traj = Trajectory::new(true);
    traj.record(0.0, &v, Some(func.hamiltonian(&v, cfg.d_av, cfg.eps)?));
    for k in 0..steps {
        if half_theta != 0.0 {
            v = engine.evolve(&v, half_theta)?;
        }
        if cfg.eps != 0.0 {
            v = q_flow_rk4(func, &v, cfg.eps * cfg.h)?;
        }
        if half_theta != 0.0 {
            v = engine.evolve(&v, half_theta)?;
        }
        if (k + 1) % cfg.record_stride == 0 || k + 1 == steps {
            let h = func.hamiltonian(&v, cfg.d_av, cfg.eps)?;
            traj.record((k + 1) as f64 * cfg.h, &v, Some(h));
        }
    }
    Ok(traj)
}

/// Self-convergence ratio `‖u_h − u_{h/2}‖ / ‖u_{h/2} − u_{h/4}‖` of the
/// full-equation integrator at `cfg.t_end`; about 4 for a second-order scheme.
pub fn strang_order_ratio(
    u0: &GridFunction,
    cfg: &EvolutionConfig,
    profile: &DiffractionProfile,
    engine: &PropagatorEngine,
) -> Result<f64> {
    let run = |h: f64| -> Result<GridFunction> {
        let c = EvolutionConfig {
            h,
            record_stride: usize::MAX,
            ..cfg.clone()
        };
        Ok(evolve_full(u0, &c, profile, engine)?.last().clone())
    };
    let a = run(cfg.h)?;
    let b = run(cfg.h / 2.0)?;
    let c = run(cfg.h / 4.0)?;
    let coarse = a.distance(&b)?;
    let fine = b.distance(&c)?;
    Ok(if fine == 0.0 {
        f64::INFINITY
    } else {
        coarse / fine
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClosenessReport {
    pub eps: f64,
    pub t_end: f64,
    /// `(k, ‖u(k) − v(k)‖₂)` at integer periods `k`.
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    /// `max_deviation / ε`.
    pub ratio: f64,
    /// `max_k ‖u(k) − e^{iεωk} u(0)‖₂` when `ω` is supplied.
    pub breather_deviation: Option<f64>,
    pub full_norm_drift: f64,
    pub averaged_norm_drift: f64,
    pub averaged_hamiltonian_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareConfig {
    pub eps: f64,
    /// Horizon `t_end = C/ε`.
    pub horizon: f64,
    pub d_av: f64,
    pub h_full: f64,
    pub h_averaged: f64,
}

impl CompareConfig {
    pub fn new(eps: f64) -> CompareConfig {
        CompareConfig {
            eps,
            horizon: 1.0,
            d_av: 0.0,
            h_full: 1.0 / 2048.0,
            h_averaged: 1.0 / 8.0,
        }
    }
}

/// Runs both flows from the same initial data and measures their distance
/// at integer periods, where the management map `T_k` is the identity.
pub fn compare_averaging(
    u0: &GridFunction,
    omega: Option<f64>,
    cfg: &CompareConfig,
    profile: &DiffractionProfile,
    func: &Functional,
) -> Result<ClosenessReport> {
    let t_end = if cfg.eps == 0.0 {
        1.0
    } else {
        (cfg.horizon / cfg.eps).floor().max(1.0)
    };
    let per_period = |h: f64| -> Result<usize> {
        let n = (1.0 / h).round();
        if (n * h - 1.0).abs() > ALIGN_TOL {
            return Err(Error::StepMisaligned { h });
        }
        Ok(n as usize)
    };
    let full_cfg = EvolutionConfig {
        eps: cfg.eps,
        d_av: cfg.d_av,
        t_end,
        h: cfg.h_full,
        record_stride: per_period(cfg.h_full)?,
        ..EvolutionConfig::default()
    };
    let avg_cfg = EvolutionConfig {
        h: cfg.h_averaged,
        record_stride: per_period(cfg.h_averaged)?,
        ..full_cfg.clone()
    };
    let full = evolve_full(u0, &full_cfg, profile, func.engine())?;
    let avg = evolve_averaged(u0, &avg_cfg, func)?;
    let mut deviations = Vec::with_capacity(full.times.len());
    let mut breather: Option<f64> = omega.map(|_| 0.0);
    for ((t, u), v) in full.times.iter().zip(&full.fields).zip(&avg.fields) {
        deviations.push((*t, u.distance(v)?));
        if let (Some(w), Some(b)) = (omega, breather.as_mut()) {
            let phase = Complex64::new(0.0, cfg.eps * w * t).exp();
            *b = b.max(u.distance(&u0.scale(phase))?);
        }
    }
    let max_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(ClosenessReport {
        eps: cfg.eps,
        t_end,
        ratio: if cfg.eps == 0.0 {
            0.0
        } else {
            max_deviation / cfg.eps
        },
        max_deviation,
        deviations,
        breather_deviation: breather,
        full_norm_drift: full.norm_drift(),
        averaged_norm_drift: avg.norm_drift(),
        averaged_hamiltonian_drift: avg.hamiltonian_drift().unwrap_or(0.0),
    })
}
