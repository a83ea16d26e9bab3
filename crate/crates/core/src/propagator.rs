//! Free lattice propagators `e^{iθΔ}` and the diffraction-managed evolution
//! `T_t = e^{iD(t)Δ}`.
//!
//! The engine applies the infinite-lattice operator to a zero-extended box
//! function and restricts the result back to the box, so the box-level
//! operator for `−θ` is exactly the adjoint of the one for `θ`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::lattice::{GridFunction, Shape, Site};
use crate::special::{free_kernel_1d, kernel_tail_order};
use crate::{Error, Result};

/// Tolerance on the two profile invariants (unit period, zero mean).
pub const PROFILE_TOL: f64 = 1e-12;

/// Tail target used to size the periodic guard band and the Taylor padding.
pub const GUARD_TOL: f64 = 1e-14;

/// One piece of a piecewise-constant diffraction profile.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub length: f64,
    pub value: f64,
}

/// Mean-zero piecewise-constant local diffraction `d̃` on one unit period.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffractionProfile {
    segments: Vec<Segment>,
    /// Left endpoint of each segment.
    starts: Vec<f64>,
    /// `D` at the left endpoint of each segment.
    d_starts: Vec<f64>,
    tau: f64,
}

impl DiffractionProfile {
    pub fn new(segments: Vec<Segment>) -> Result<DiffractionProfile> {
        if segments.is_empty() {
            return Err(Error::InvalidProfile("no segments"));
        }
        if segments
            .iter()
            .any(|s| !s.length.is_finite() || !s.value.is_finite() || s.length <= 0.0)
        {
            return Err(Error::InvalidProfile(
                "segment lengths must be positive and finite",
            ));
        }
        let total: f64 = segments.iter().map(|s| s.length).sum();
        if (total - 1.0).abs() > PROFILE_TOL {
            return Err(Error::InvalidProfile("segment lengths must sum to 1"));
        }
        let mean: f64 = segments.iter().map(|s| s.length * s.value).sum();
        if mean.abs() > PROFILE_TOL {
            return Err(Error::InvalidProfile("profile must have zero mean"));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut d_starts = Vec::with_capacity(segments.len());
        let (mut t, mut d, mut tau) = (0.0f64, 0.0f64, 0.0f64);
        for s in &segments {
            starts.push(t);
            d_starts.push(d);
            t += s.length;
            d += s.length * s.value;
            tau = tau.max(d.abs());
        }
        Ok(DiffractionProfile {
            segments,
            starts,
            d_starts,
            tau,
        })
    }

    /// `d̃ ≡ 0`.
    pub fn zero() -> DiffractionProfile {
        DiffractionProfile::new(vec![Segment {
            length: 1.0,
            value: 0.0,
        }])
        .expect("zero profile is admissible")
    }

    /// `d̃ = +a` on `[0, ½)`, `−a` on `[½, 1)`; `τ = a/2`.
    pub fn two_step(amplitude: f64) -> DiffractionProfile {
        DiffractionProfile::new(vec![
            Segment {
                length: 0.5,
                value: amplitude,
            },
            Segment {
                length: 0.5,
                value: -amplitude,
            },
        ])
        .expect("two-step profile is admissible")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `τ = sup_{t∈[0,1]} |D(t)|`, attained at a breakpoint.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Breakpoints `0 = t_0 < … < t_k = 1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.starts.clone();
        b.push(1.0);
        b
    }

    pub fn min_segment_length(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.length)
            .fold(f64::INFINITY, f64::min)
    }

    fn segment_at(&self, t: f64) -> usize {
        self.starts
            .iter()
            .rposition(|&s| s <= t)
            .unwrap_or_default()
    }

    /// `D(t) = ∫₀^t d̃` for `t ∈ [0, 1]`.
    pub fn integral_d(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        Ok(self.d_unchecked(t))
    }

    fn d_unchecked(&self, t: f64) -> f64 {
        let k = self.segment_at(t);
        self.d_starts[k] + self.segments[k].value * (t - self.starts[k])
    }

    /// `d̃(t)` of the period-1 extension (right-continuous).
    pub fn d_tilde(&self, t: f64) -> f64 {
        let u = t - t.floor();
        self.segments[self.segment_at(u)].value
    }

    /// `∫_a^b d̃` over the period-1 extension.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let periodic = |t: f64| self.d_unchecked(t - t.floor());
        periodic(b) - periodic(a)
    }
}

/// How `e^{iθΔ}` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    /// Taylor series of the exponential on a padded Dirichlet box.
    Taylor,
    /// Periodic ring diagonalized by the discrete Fourier transform.
    Spectral,
    /// Separable convolution with the Bessel kernel `e^{−2iθ} i^z J_z(2θ)`.
    Bessel,
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "taylor" => Ok(Method::Taylor),
            "spectral" => Ok(Method::Spectral),
            "bessel" => Ok(Method::Bessel),
            _ => Err(Error::InvalidConfig(
                "method must be taylor, spectral or bessel",
            )),
        }
    }
}

#[derive(Clone)]
enum Backend {
    Taylor {
        padded: Shape,
    },
    Bessel,
    #[cfg(feature = "std")]
    Spectral(spectral::Ring),
}

/// Evaluates `e^{iθΔ}` on a fixed box for `|θ| ≤ max_theta`.
#[derive(Clone)]
pub struct PropagatorEngine {
    shape: Shape,
    method: Method,
    max_theta: f64,
    guard: usize,
    backend: Backend,
}

impl core::fmt::Debug for PropagatorEngine {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PropagatorEngine")
            .field("shape", &self.shape)
            .field("method", &self.method)
            .field("max_theta", &self.max_theta)
            .field("guard", &self.guard)
            .finish()
    }
}

impl PropagatorEngine {
    pub fn new(shape: Shape, method: Method, max_theta: f64) -> Result<PropagatorEngine> {
        if !max_theta.is_finite() || max_theta < 0.0 {
            return Err(Error::InvalidConfig(
                "max_theta must be finite and nonnegative",
            ));
        }
        let r = 4.0 * shape.dim() as f64 * max_theta;
        let guard = kernel_tail_order(r, GUARD_TOL).max(1);
        let backend = match method {
            Method::Taylor => Backend::Taylor {
                padded: shape.with_radius(shape.radius() + guard)?,
            },
            Method::Bessel => Backend::Bessel,
            #[cfg(feature = "std")]
            Method::Spectral => Backend::Spectral(spectral::Ring::new(shape, guard)),
            #[cfg(not(feature = "std"))]
            Method::Spectral => return Err(Error::Unsupported("spectral propagator needs std")),
        };
        Ok(PropagatorEngine {
            shape,
            method,
            max_theta,
            guard,
            backend,
        })
    }

    /// Bessel engine sized for the profile's `τ` (and at least `θ = 1`).
    pub fn for_profile(shape: Shape, profile: &DiffractionProfile) -> Result<PropagatorEngine> {
        PropagatorEngine::new(shape, Method::Bessel, profile.tau().max(1.0))
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn max_theta(&self) -> f64 {
        self.max_theta
    }

    /// Guard width `G` with `e^{4dτ}(4dτ)^G/G! < 10⁻¹⁴`.
    pub fn guard(&self) -> usize {
        self.guard
    }

    /// Periodic ring size per axis (spectral method only).
    pub fn ring_size(&self) -> Option<usize> {
        match &self.backend {
            #[cfg(feature = "std")]
            Backend::Spectral(ring) => Some(ring.size()),
            _ => None,
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() || theta.abs() > self.max_theta * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Accuracy {
                theta,
                max_theta: self.max_theta,
            });
        }
        Ok(())
    }

    /// `e^{iθΔ} f`, restricted to the box.
    pub fn evolve(&self, f: &GridFunction, theta: f64) -> Result<GridFunction> {
        if f.shape() != self.shape {
            return Err(Error::ShapeMismatch);
        }
        self.check_theta(theta)?;
        if theta == 0.0 {
            return Ok(f.clone());
        }
        Ok(match &self.backend {
            Backend::Bessel => bessel_apply(f, theta),
            Backend::Taylor { padded } => taylor_apply(f, theta, *padded)?,
            #[cfg(feature = "std")]
            Backend::Spectral(ring) => ring.apply(f, theta),
        })
    }

    /// `T_t f = e^{iD(t)Δ} f` for `t ∈ [0, 1]`.
    pub fn evolve_managed(
        &self,
        profile: &DiffractionProfile,
        f: &GridFunction,
        t: f64,
    ) -> Result<GridFunction> {
        let theta = profile.integral_d(t)?;
        self.evolve(f, theta)
    }

    /// Kernel `⟨x|e^{iθΔ}|y⟩`.
    ///
    /// The Bessel engine evaluates the closed form for any pair of sites; the
    /// other methods propagate `δ_y` and need both sites inside the box.
    pub fn kernel(&self, theta: f64, x: Site, y: Site) -> Result<Complex64> {
        self.check_theta(theta)?;
        match self.method {
            Method::Bessel => Ok(free_kernel(self.shape.dim(), theta, x.diff(y))),
            _ => {
                if !self.shape.contains(x) {
                    return Err(Error::SiteOutOfBox);
                }
                let delta = GridFunction::delta(self.shape, y)?;
                Ok(self.evolve(&delta, theta)?.get(x))
            }
        }
    }
}

/// Closed-form free kernel `⟨z|e^{iθΔ}|0⟩ = Π_j e^{−2iθ} i^{z_j} J_{z_j}(2θ)`.
pub fn free_kernel(dim: usize, theta: f64, z: Site) -> Complex64 {
    let mut k = Complex64::new(1.0, 0.0);
    for axis in 0..dim {
        let n = z.0[axis].unsigned_abs() as usize;
        k *= free_kernel_1d(theta, n)[n];
    }
    k
}

/// Per-axis half-width of the truncated Bessel kernel.
fn bessel_width(theta: f64, side: usize) -> usize {
    kernel_tail_order(4.0 * theta.abs(), 1e-18).min(side)
}

fn bessel_apply(f: &GridFunction, theta: f64) -> GridFunction {
    let shape = f.shape();
    let side = shape.side();
    let width = bessel_width(theta, side);
    let kernel = free_kernel_1d(theta, width);
    let mut current = f.values().to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); side];
    let mut out_line = vec![Complex64::new(0.0, 0.0); side];
    for axis in 0..shape.dim() {
        let stride = shape.stride(axis);
        let block = stride * side;
        for base in 0..shape.len() {
            // First element of each line along `axis`.
            if (base % block) >= stride {
                continue;
            }
            let mut nonzero = false;
            for (i, v) in line.iter_mut().enumerate() {
                *v = current[base + i * stride];
                nonzero |= v.re != 0.0 || v.im != 0.0;
            }
            if !nonzero {
                continue;
            }
            for (i, o) in out_line.iter_mut().enumerate() {
                let lo = i.saturating_sub(width);
                let hi = (i + width + 1).min(side);
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &v) in line.iter().enumerate().take(hi).skip(lo) {
                    acc += kernel[i.abs_diff(j)] * v;
                }
                *o = acc;
            }
            for (i, &v) in out_line.iter().enumerate() {
                current[base + i * stride] = v;
            }
        }
    }
    GridFunction::from_raw(shape, current)
}

fn taylor_apply(f: &GridFunction, theta: f64, padded: Shape) -> Result<GridFunction> {
    let dim = f.shape().dim() as f64;
    // Sub-steps with 4d|h| ≤ 1 keep the series free of cancellation.
    let steps = (4.0 * dim * theta.abs()).ceil().max(1.0) as usize;
    let h = theta / steps as f64;
    let order = kernel_tail_order(4.0 * dim * h.abs(), 1e-18).max(1);
    let mut v = f.resize(padded)?;
    for _ in 0..steps {
        let mut term = v.clone();
        let mut sum = v.values().to_vec();
        for k in 1..=order {
            let factor = Complex64::new(0.0, h / k as f64);
            term = term.laplacian().scale(factor);
            for (s, t) in sum.iter_mut().zip(term.values()) {
                *s += t;
            }
        }
        v = GridFunction::from_raw(padded, sum);
    }
    v.resize(f.shape())
}

#[cfg(feature = "std")]
mod spectral {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use num_complex::Complex64;
    use rustfft::{Fft, FftPlanner};

    use crate::lattice::{GridFunction, Shape};

    /// Periodic embedding of the box in a ring of `M ≥ 2N + 1 + G` sites per
    /// axis, so wrap-around contributions are below the guard tolerance.
    #[derive(Clone)]
    pub(super) struct Ring {
        shape: Shape,
        size: usize,
        symbol: Vec<f64>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    }

    /// Smallest 2^a 3^b 5^c at or above `n`.
    fn smooth_size(n: usize) -> usize {
        (n..)
            .find(|&m| {
                let mut r = m;
                for p in [2, 3, 5] {
                    while r % p == 0 {
                        r /= p;
                    }
                }
                r == 1
            })
            .expect("smooth numbers are unbounded")
    }

    impl Ring {
        pub(super) fn new(shape: Shape, guard: usize) -> Ring {
            let size = smooth_size(shape.side() + guard);
            let mut planner = FftPlanner::new();
            let symbol = (0..size)
                .map(|k| {
                    let s = (PI * k as f64 / size as f64).sin();
                    -4.0 * s * s
                })
                .collect();
            Ring {
                shape,
                size,
                symbol,
                forward: planner.plan_fft_forward(size),
                inverse: planner.plan_fft_inverse(size),
            }
        }

        pub(super) fn size(&self) -> usize {
            self.size
        }

        fn ring_index(&self, site: crate::Site) -> usize {
            let m = self.size as i64;
            (0..self.shape.dim()).fold(0usize, |acc, axis| {
                acc * self.size + site.0[axis].rem_euclid(m) as usize
            })
        }

        fn transform_axes(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
            let dim = self.shape.dim();
            let m = self.size;
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for axis in 0..dim {
                let stride = m.pow((dim - 1 - axis) as u32);
                let block = stride * m;
                for base in 0..data.len() {
                    if base % block >= stride {
                        continue;
                    }
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                }
            }
        }

        pub(super) fn apply(&self, f: &GridFunction, theta: f64) -> GridFunction {
            let dim = self.shape.dim();
            let m = self.size;
            let total = m.pow(dim as u32);
            let mut data = vec![Complex64::new(0.0, 0.0); total];
            for (site, z) in f.iter() {
                data[self.ring_index(site)] = z;
            }
            self.transform_axes(&mut data, &self.forward);
            let norm = 1.0 / total as f64;
            for (idx, v) in data.iter_mut().enumerate() {
                let mut rest = idx;
                let mut sym = 0.0;
                for _ in 0..dim {
                    sym += self.symbol[rest % m];
                    rest /= m;
                }
                *v *= Complex64::new(0.0, theta * sym).exp() * norm;
            }
            self.transform_axes(&mut data, &self.inverse);
            GridFunction::from_fn(self.shape, |site| data[self.ring_index(site)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(radius: usize) -> Shape {
        Shape::new(1, radius).unwrap()
    }

    #[test]
    fn two_step_profile_integral() {
        let p = DiffractionProfile::two_step(1.0);
        assert_relative_eq!(p.integral_d(0.25).unwrap(), 0.25);
        assert_relative_eq!(p.integral_d(0.5).unwrap(), 0.5);
        assert_relative_eq!(p.integral_d(0.75).unwrap(), 0.25);
        assert!(p.integral_d(1.0).unwrap().abs() < 1e-15);
        assert_eq!(p.tau(), 0.5);
        assert!(matches!(p.integral_d(1.5), Err(Error::TimeOutOfRange(_))));
        assert!(p.integral_d(-0.1).is_err());
    }

    #[test]
    fn zero_profile_has_zero_integral() {
        let p = DiffractionProfile::zero();
        for t in [0.0, 0.3, 0.7, 1.0] {
            assert_eq!(p.integral_d(t).unwrap(), 0.0);
        }
        assert_eq!(p.tau(), 0.0);
    }

    #[test]
    fn integral_is_continuous_at_breakpoints() {
        let p = DiffractionProfile::new(vec![
            Segment {
                length: 0.2,
                value: 3.0,
            },
            Segment {
                length: 0.3,
                value: -1.0,
            },
            Segment {
                length: 0.5,
                value: -0.6,
            },
        ])
        .unwrap();
        for b in p.breakpoints() {
            let left = p.integral_d((b - 1e-12).max(0.0)).unwrap();
            let right = p.integral_d((b + 1e-12).min(1.0)).unwrap();
            assert!((left - right).abs() < 1e-10);
        }
        assert_relative_eq!(p.tau(), 0.6, max_relative = 1e-14);
    }

    #[test]
    fn periodic_integral() {
        let p = DiffractionProfile::two_step(1.0);
        assert_relative_eq!(p.integral(3.0, 3.25), 0.25, max_relative = 1e-12);
        assert_relative_eq!(p.integral(0.25, 2.75), 0.0, epsilon = 1e-12);
        assert_eq!(p.d_tilde(7.6), -1.0);
    }

    #[test]
    fn rejects_inadmissible_profiles() {
        let bad_mean = vec![Segment {
            length: 1.0,
            value: 0.1,
        }];
        assert!(DiffractionProfile::new(bad_mean).is_err());
        let bad_len = vec![Segment {
            length: 0.6,
            value: 0.0,
        }];
        assert!(DiffractionProfile::new(bad_len).is_err());
        assert!(DiffractionProfile::new(vec![]).is_err());
        let neg = vec![
            Segment {
                length: 1.5,
                value: 0.0,
            },
            Segment {
                length: -0.5,
                value: 0.0,
            },
        ];
        assert!(DiffractionProfile::new(neg).is_err());
    }

    #[test]
    fn kernel_at_zero_time_is_kronecker() {
        for method in [Method::Taylor, Method::Spectral, Method::Bessel] {
            let e = PropagatorEngine::new(line(5), method, 1.0).unwrap();
            let x = Site::new(&[2]);
            assert_eq!(e.kernel(0.0, x, x).unwrap(), Complex64::new(1.0, 0.0));
            assert_eq!(
                e.kernel(0.0, x, Site::ORIGIN).unwrap(),
                Complex64::new(0.0, 0.0)
            );
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let e = PropagatorEngine::new(line(4), Method::Bessel, 1.0).unwrap();
        let f = GridFunction::from_fn(line(4), |x| Complex64::new(x.0[0] as f64, 1.0));
        assert_eq!(e.evolve(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn rejects_theta_beyond_range() {
        let e = PropagatorEngine::new(line(4), Method::Taylor, 0.5).unwrap();
        let f = GridFunction::delta(line(4), Site::ORIGIN).unwrap();
        assert!(matches!(e.evolve(&f, 0.6), Err(Error::Accuracy { .. })));
        assert!(e.evolve(&f, 0.5).is_ok());
    }

    #[test]
    fn guard_meets_tail_target() {
        let e = PropagatorEngine::new(line(10), Method::Spectral, 0.5).unwrap();
        let g = e.guard() as u64;
        assert!(crate::special::ln_kernel_bound(2.0, g) < GUARD_TOL.ln());
        assert!(e.ring_size().unwrap() >= 21 + e.guard());
    }

    #[test]
    fn managed_evolution_at_full_period_is_identity() {
        let p = DiffractionProfile::two_step(1.0);
        let e = PropagatorEngine::for_profile(line(8), &p).unwrap();
        let f = GridFunction::from_fn(line(8), |x| {
            Complex64::new((-(x.0[0] as f64).powi(2) / 4.0).exp(), 0.1 * x.0[0] as f64)
        });
        let g = e.evolve_managed(&p, &f, 1.0).unwrap();
        assert!(g.distance(&f).unwrap() < 1e-12);
        let quarter = e.evolve_managed(&p, &f, 0.25).unwrap();
        let direct = e.evolve(&f, 0.25).unwrap();
        assert!(quarter.distance(&direct).unwrap() < 1e-15);
    }
}
