//! The averaged four-linear form `𝒬`, its Riesz map `Q`, the objective
//! `φ(f) = 𝒬(f,f,f,f)` and the averaged Hamiltonian.
//!
//! All time integrals are evaluated with a [`QuadratureRule`]; each argument
//! is propagated once per node and reused across terms. Summation order is
//! fixed, so results are bit-reproducible.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::lattice::GridFunction;
use crate::propagator::{DiffractionProfile, PropagatorEngine};
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// Largest tolerated `|Im 𝒬(f,f,f,f)|` relative to `max(1, φ)`.
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// `T_t f` at every quadrature node, in node order.
pub type Evolved = Vec<GridFunction>;

#[derive(Clone, Debug)]
pub struct Functional {
    engine: PropagatorEngine,
    rule: QuadratureRule,
}

impl Functional {
    pub fn new(engine: PropagatorEngine, rule: QuadratureRule) -> Result<Functional> {
        let worst = rule.thetas().iter().fold(0.0f64, |m, t| m.max(t.abs()));
        if worst > engine.max_theta() {
            return Err(Error::Accuracy {
                theta: worst,
                max_theta: engine.max_theta(),
            });
        }
        Ok(Functional { engine, rule })
    }

    /// Bessel engine on `shape` with the default Gauss–Legendre order.
    pub fn for_profile(shape: crate::Shape, profile: &DiffractionProfile) -> Result<Functional> {
        let engine = PropagatorEngine::for_profile(shape, profile)?;
        Functional::new(engine, QuadratureRule::with_default_order(profile))
    }

    pub fn engine(&self) -> &PropagatorEngine {
        &self.engine
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn shape(&self) -> crate::Shape {
        self.engine.shape()
    }

    pub fn evolve_all(&self, f: &GridFunction) -> Result<Evolved> {
        self.rule
            .thetas()
            .iter()
            .map(|&th| self.engine.evolve(f, th))
            .collect()
    }

    /// `𝒬(f₁,f₂,f₃,f₄) = ∫ Σ_x conj(T_t f₁)(T_t f₂)conj(T_t f₃)(T_t f₄) dt`.
    pub fn quad_form(
        &self,
        f1: &GridFunction,
        f2: &GridFunction,
        f3: &GridFunction,
        f4: &GridFunction,
    ) -> Result<Complex64> {
        let shape = self.shape();
        for f in [f1, f2, f3, f4] {
            if f.shape() != shape {
                return Err(Error::ShapeMismatch);
            }
        }
        let (a, b, c, d) = (
            self.evolve_all(f1)?,
            self.evolve_all(f2)?,
            self.evolve_all(f3)?,
            self.evolve_all(f4)?,
        );
        Ok(self.quad_form_cached(&a, &b, &c, &d))
    }

    pub fn quad_form_cached(
        &self,
        a: &Evolved,
        b: &Evolved,
        c: &Evolved,
        d: &Evolved,
    ) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (k, w) in self.rule.weights().iter().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (((p, q), r), u) in a[k]
                .values()
                .iter()
                .zip(b[k].values())
                .zip(c[k].values())
                .zip(d[k].values())
            {
                s += p.conj() * q * r.conj() * u;
            }
            total += s * w;
        }
        total
    }

    /// `Q(f₁,f₂,f₃) = ∫ T_t^{-1}[(T_t f₁) conj(T_t f₂) (T_t f₃)] dt`, the
    /// Riesz representative with `⟨g, Q(f₁,f₂,f₃)⟩ = 𝒬(g,f₁,f₂,f₃)`.
    pub fn q_map(
        &self,
        f1: &GridFunction,
        f2: &GridFunction,
        f3: &GridFunction,
    ) -> Result<GridFunction> {
        let shape = self.shape();
        for f in [f1, f2, f3] {
            if f.shape() != shape {
                return Err(Error::ShapeMismatch);
            }
        }
        let (a, b, c) = (
            self.evolve_all(f1)?,
            self.evolve_all(f2)?,
            self.evolve_all(f3)?,
        );
        self.q_map_cached(&a, &b, &c)
    }

    pub fn q_map_cached(&self, a: &Evolved, b: &Evolved, c: &Evolved) -> Result<GridFunction> {
        let shape = self.shape();
        let mut acc = GridFunction::zeros(shape);
        for (k, (w, th)) in self.rule.points().enumerate() {
            let product: Vec<Complex64> = a[k]
                .values()
                .iter()
                .zip(b[k].values())
                .zip(c[k].values())
                .map(|((p, q), r)| p * q.conj() * r)
                .collect();
            let back = self
                .engine
                .evolve(&GridFunction::from_raw(shape, product), -th)?;
            for (s, v) in acc.values_mut().iter_mut().zip(back.values()) {
                *s += v * w;
            }
        }
        Ok(acc)
    }

    /// `φ(f) = Σ_k w_k ‖T_{t_k} f‖₄⁴`.
    pub fn phi_cached(&self, a: &Evolved) -> f64 {
        self.rule
            .weights()
            .iter()
            .zip(a)
            .map(|(w, g)| w * g.norm4_pow4())
            .sum()
    }

    /// `φ(f) = Re 𝒬(f,f,f,f)`, checking that the imaginary part vanishes.
    pub fn phi(&self, f: &GridFunction) -> Result<f64> {
        if f.shape() != self.shape() {
            return Err(Error::ShapeMismatch);
        }
        let a = self.evolve_all(f)?;
        let q = self.quad_form_cached(&a, &a, &a, &a);
        if q.im.abs() > CONSISTENCY_TOL * q.re.abs().max(1.0) {
            return Err(Error::Consistency { imag: q.im });
        }
        Ok(self.phi_cached(&a))
    }

    /// `φ(f)` together with `Q(f,f,f)`, sharing one set of evolutions.
    pub fn phi_and_q(&self, f: &GridFunction) -> Result<(f64, GridFunction)> {
        if f.shape() != self.shape() {
            return Err(Error::ShapeMismatch);
        }
        let a = self.evolve_all(f)?;
        Ok((self.phi_cached(&a), self.q_map_cached(&a, &a, &a)?))
    }

    /// `∇φ(f) = 4 Q(f,f,f)`: `Re⟨h, ∇φ(f)⟩ = Dφ(f)[h]`.
    pub fn grad_phi(&self, f: &GridFunction) -> Result<GridFunction> {
        Ok(self.q_map(f, f, f)?.scale_re(4.0))
    }

    /// `φ(g) − φ(f)` without cancellation: per site
    /// `|b|⁴ − |a|⁴ = Re((b−a)conj(b+a))·(|a|² + |b|²)` with `b − a`
    /// propagated directly from `g − f`.
    pub fn phi_difference(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        let a = self.evolve_all(f)?;
        self.phi_difference_cached(&a, f, g)
    }

    pub fn phi_difference_cached(
        &self,
        a: &Evolved,
        f: &GridFunction,
        g: &GridFunction,
    ) -> Result<f64> {
        let diff = g.sub(f)?;
        let mut total = 0.0;
        for (k, (w, th)) in self.rule.points().enumerate() {
            let b = self.engine.evolve(g, th)?;
            let e = self.engine.evolve(&diff, th)?;
            let mut s = 0.0;
            for ((p, q), r) in a[k].values().iter().zip(b.values()).zip(e.values()) {
                let d2 = (r * (p + q).conj()).re;
                s += d2 * (p.norm_sqr() + q.norm_sqr());
            }
            total += w * s;
        }
        Ok(total)
    }

    /// `H(v) = ε( (d_av/2)⟨v, −Δv⟩ − ¼ 𝒬(v,v,v,v) )`.
    pub fn hamiltonian(&self, v: &GridFunction, d_av: f64, eps: f64) -> Result<f64> {
        let kinetic = -v.inner(&v.laplacian())?.re;
        Ok(eps * (0.5 * d_av * kinetic - 0.25 * self.phi(v)?))
    }
}
