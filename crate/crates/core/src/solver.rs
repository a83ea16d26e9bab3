//! Constrained maximization of `φ` on the sphere `‖f‖₂² = λ`.
//!
//! A maximizer solves `ωf = Q(f,f,f)` weakly with `ω = P_λ/λ`. The result is
//! gauge-fixed: modulus maximum at the origin, `f(0)` real and positive.

use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::functional::{Evolved, Functional};
use crate::lattice::{GridFunction, Shape, Site, SupportThreshold};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolverMethod {
    /// Riemannian gradient ascent with Armijo backtracking; monotone.
    GradientAscent,
    /// `f ← √λ Q(f,f,f)/‖Q(f,f,f)‖` with a gradient step whenever `φ` drops.
    FixedPoint,
}

impl core::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<SolverMethod> {
        match s {
            "gradient_ascent" | "gradient" => Ok(SolverMethod::GradientAscent),
            "fixed_point" | "fixed" => Ok(SolverMethod::FixedPoint),
            _ => Err(Error::InvalidConfig(
                "method must be gradient_ascent or fixed_point",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub lambda: f64,
    pub method: SolverMethod,
    /// Stop once `‖Q(f,f,f) − ωf‖₂/‖f‖₂ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Width of the initial Gaussian `e^{−|x|²/σ²}`.
    pub sigma: f64,
    /// Backtracking contraction.
    pub armijo_factor: f64,
    /// Required fraction of the first-order increase.
    pub sufficient_increase: f64,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            lambda: 1.0,
            method: SolverMethod::GradientAscent,
            tol: 1e-8,
            max_iter: 5000,
            sigma: 4.0,
            armijo_factor: 0.5,
            sufficient_increase: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be positive"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive"));
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::InvalidConfig("sigma must be positive"));
        }
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(Error::InvalidConfig("armijo factor must lie in (0, 1)"));
        }
        if !(self.sufficient_increase > 0.0 && self.sufficient_increase < 1.0) {
            return Err(Error::InvalidConfig(
                "sufficient increase must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolitonResult {
    /// Gauge-fixed maximizer with `‖f‖₂² = λ`.
    pub f: GridFunction,
    pub lambda: f64,
    /// `φ(f)` evaluated directly at the returned field.
    pub p_lambda: f64,
    /// `P_λ/λ`.
    pub omega: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `φ` after every accepted iterate, starting with the initial guess.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Normalized Gaussian `e^{−|x|²/σ²}` scaled to `‖f‖₂² = λ`.
pub fn initial_guess(shape: Shape, sigma: f64, lambda: f64) -> GridFunction {
    let g = GridFunction::from_fn(shape, |x| {
        let r2: f64 = x.0.iter().map(|&c| (c * c) as f64).sum();
        Complex64::new((-r2 / (sigma * sigma)).exp(), 0.0)
    });
    retract(&g, lambda)
}

fn retract(h: &GridFunction, lambda: f64) -> GridFunction {
    h.scale_re(lambda.sqrt() / h.norm2())
}

/// `‖Q(f,f,f) − ωf‖₂ / max(‖f‖₂, 10⁻³⁰)`.
pub fn residual(func: &Functional, f: &GridFunction, omega: f64) -> Result<f64> {
    let q = func.q_map(f, f, f)?;
    residual_from(&q, f, omega)
}

fn residual_from(q: &GridFunction, f: &GridFunction, omega: f64) -> Result<f64> {
    Ok(q.axpy(Complex64::new(-omega, 0.0), f)?.norm2() / f.norm2().max(1e-30))
}

/// Translates the (lexicographically first) modulus maximum to the origin
/// and rotates the phase so `f(0) > 0`. Values below `10⁻¹⁴‖f‖∞` may drop
/// off the box during the translation.
pub fn gauge_fix(f: &GridFunction) -> Result<GridFunction> {
    let peak = f.argmax_abs().ok_or(Error::ZeroField)?;
    let shifted = f.shift_within(peak.neg(), SupportThreshold::NUMERICAL)?;
    let z = shifted.get(Site::ORIGIN);
    let mut out = shifted.scale(z.conj() / z.norm());
    out.set(Site::ORIGIN, Complex64::new(z.norm(), 0.0))?;
    Ok(out)
}

/// Iterate state: field, cached evolutions, `φ` and `Q(f,f,f)`.
struct State {
    f: GridFunction,
    evolved: Evolved,
    phi: f64,
    q: GridFunction,
}

impl State {
    fn new(func: &Functional, f: GridFunction) -> Result<State> {
        let evolved = func.evolve_all(&f)?;
        let phi = func.phi_cached(&evolved);
        let q = func.q_map_cached(&evolved, &evolved, &evolved)?;
        Ok(State { f, evolved, phi, q })
    }

    /// Tangential gradient `4(Q − (Re⟨f,Q⟩/λ) f)`.
    fn tangent(&self, lambda: f64) -> Result<GridFunction> {
        let radial = self.f.inner(&self.q)?.re / lambda;
        Ok(self
            .q
            .axpy(Complex64::new(-radial, 0.0), &self.f)?
            .scale_re(4.0))
    }
}

struct Ascent<'a> {
    cfg: &'a SolverConfig,
    func: &'a Functional,
    step: f64,
    previous: Option<(GridFunction, GridFunction)>,
}

impl Ascent<'_> {
    /// One Armijo-safeguarded gradient step. Returns the new state and the
    /// accurately computed increase, or `None` when no step increases `φ`.
    fn step(&mut self, state: &State) -> Result<Option<(State, f64)>> {
        let lambda = self.cfg.lambda;
        let g = state.tangent(lambda)?;
        let g2 = g.norm2_sqr();
        if g2 == 0.0 {
            return Ok(None);
        }
        // Barzilai–Borwein trial step from the previous iterate.
        if let Some((f_prev, g_prev)) = &self.previous {
            let s = state.f.sub(f_prev)?;
            let y = g.sub(g_prev)?;
            let sy = s.inner(&y)?.re;
            let ss = s.norm2_sqr();
            if sy < 0.0 && ss > 0.0 {
                self.step = ss / -sy;
            }
        }
        let mut eta = self.step;
        for _ in 0..80 {
            let trial = retract(&state.f.axpy(Complex64::new(eta, 0.0), &g)?, lambda);
            let gain = self
                .func
                .phi_difference_cached(&state.evolved, &state.f, &trial)?;
            if gain >= self.cfg.sufficient_increase * eta * g2 {
                self.previous = Some((state.f.clone(), g));
                self.step = eta;
                return Ok(Some((State::new(self.func, trial)?, gain)));
            }
            eta *= self.cfg.armijo_factor;
        }
        Ok(None)
    }
}

/// Maximizes `φ` on the sphere starting from the Gaussian initial guess.
pub fn maximize(cfg: &SolverConfig, func: &Functional) -> Result<SolitonResult> {
    let init = initial_guess(func.shape(), cfg.sigma, cfg.lambda);
    maximize_from(cfg, func, &init)
}

pub fn maximize_from(
    cfg: &SolverConfig,
    func: &Functional,
    init: &GridFunction,
) -> Result<SolitonResult> {
    cfg.validate()?;
    if init.shape() != func.shape() {
        return Err(Error::ShapeMismatch);
    }
    if init.is_zero() {
        return Err(Error::ZeroField);
    }
    let lambda = cfg.lambda;
    let mut state = State::new(func, retract(init, lambda))?;
    let mut trace = alloc::vec![state.phi];
    let mut level = state.phi;
    let mut ascent = Ascent {
        cfg,
        func,
        step: 0.1 / lambda,
        previous: None,
    };
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let omega = state.phi / lambda;
        if residual_from(&state.q, &state.f, omega)? <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;
        let next = match cfg.method {
            SolverMethod::GradientAscent => ascent.step(&state)?,
            SolverMethod::FixedPoint => {
                let qn = state.q.norm2();
                if qn == 0.0 {
                    return Err(Error::ZeroField);
                }
                let trial = state.q.scale_re(lambda.sqrt() / qn);
                let gain = func.phi_difference_cached(&state.evolved, &state.f, &trial)?;
                if gain >= 0.0 {
                    Some((State::new(func, trial)?, gain))
                } else {
                    ascent.step(&state)?
                }
            }
        };
        match next {
            Some((s, gain)) => {
                state = s;
                level += gain;
                trace.push(level);
            }
            // No increasing step exists at working precision.
            None => break,
        }
    }
    let f = gauge_fix(&state.f)?;
    let (p_lambda, q) = func.phi_and_q(&f)?;
    let omega = p_lambda / lambda;
    let result = SolitonResult {
        residual: residual_from(&q, &f, omega)?,
        f,
        lambda,
        p_lambda,
        omega,
        iterations,
        objective_trace: trace,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(alloc::boxed::Box::new(result)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::DiffractionProfile;
    use approx::assert_relative_eq;

    fn line(radius: usize) -> Shape {
        Shape::new(1, radius).unwrap()
    }

    #[test]
    fn zero_profile_gives_delta() {
        let func = Functional::for_profile(line(12), &DiffractionProfile::zero()).unwrap();
        for method in [SolverMethod::GradientAscent, SolverMethod::FixedPoint] {
            let cfg = SolverConfig {
                method,
                ..SolverConfig::default()
            };
            let res = maximize(&cfg, &func).unwrap();
            assert_relative_eq!(res.p_lambda, 1.0, max_relative = 1e-9);
            assert_relative_eq!(res.omega, 1.0, max_relative = 1e-9);
            assert!(res.f.get(Site::ORIGIN).re > 1.0 - 1e-9);
        }
    }

    #[test]
    fn two_step_converges_with_monotone_trace() {
        let func = Functional::for_profile(line(24), &DiffractionProfile::two_step(1.0)).unwrap();
        let res = maximize(&SolverConfig::default(), &func).unwrap();
        assert!(res.residual <= 1e-8);
        assert!(res.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((res.f.norm2_sqr() - 1.0).abs() < 1e-10);
        assert!(res.omega > 0.0 && res.omega < 1.0);
        assert_relative_eq!(res.omega, res.p_lambda / res.lambda, max_relative = 1e-15);
    }

    #[test]
    fn gauge_fix_moves_and_rotates() {
        let shape = line(5);
        let f = GridFunction::delta(shape, Site::new(&[3]))
            .unwrap()
            .scale(Complex64::new(0.0, 1.0));
        let g = gauge_fix(&f).unwrap();
        assert_eq!(g, GridFunction::delta(shape, Site::ORIGIN).unwrap());
        assert_eq!(gauge_fix(&g).unwrap(), g);
        assert!(matches!(
            gauge_fix(&GridFunction::zeros(shape)),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn residual_of_delta_without_management() {
        let shape = line(4);
        let func = Functional::for_profile(shape, &DiffractionProfile::zero()).unwrap();
        let d = GridFunction::delta(shape, Site::ORIGIN).unwrap();
        assert!(residual(&func, &d, 1.0).unwrap() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        let func = Functional::for_profile(line(4), &DiffractionProfile::zero()).unwrap();
        let cfg = SolverConfig {
            lambda: -1.0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            maximize(&cfg, &func),
            Err(Error::InvalidConfig(_))
        ));
    }
}
