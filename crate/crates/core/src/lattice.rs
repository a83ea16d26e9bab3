//! Complex fields on a truncated box `{x ∈ ℤ^d : |x|_∞ ≤ N}` with implicit
//! zero values outside the box.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A lattice point. Coordinates beyond the box dimension are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Site(pub [i64; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    /// Builds a site from up to three coordinates.
    pub fn new(coords: &[i64]) -> Site {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn along(axis: usize, value: i64) -> Site {
        let mut c = [0; MAX_DIM];
        c[axis] = value;
        Site(c)
    }

    /// Lattice (ℓ¹) norm `|x| = Σ|x_j|`.
    pub fn l1(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn linf(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn offset(&self, other: Site) -> Site {
        Site([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }

    pub fn diff(&self, other: Site) -> Site {
        Site([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }

    pub fn neg(&self) -> Site {
        Site([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// The box geometry: dimension `d` and radius `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shape {
    dim: usize,
    radius: usize,
}

impl Shape {
    pub fn new(dim: usize, radius: usize) -> Result<Shape> {
        if dim == 0 || dim > MAX_DIM || radius == 0 {
            return Err(Error::InvalidShape { dim, radius });
        }
        Ok(Shape { dim, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of sites along one axis, `2N + 1`.
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Memory stride of `axis` in the row-major layout (first axis slowest).
    pub fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.dim - 1 - axis) as u32)
    }

    pub fn contains(&self, site: Site) -> bool {
        let r = self.radius as i64;
        site.0[..self.dim].iter().all(|&c| -r <= c && c <= r)
            && site.0[self.dim..].iter().all(|&c| c == 0)
    }

    pub fn index(&self, site: Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let r = self.radius as i64;
        let side = self.side();
        Some(
            site.0[..self.dim]
                .iter()
                .fold(0usize, |acc, &c| acc * side + (c + r) as usize),
        )
    }

    pub fn site(&self, mut index: usize) -> Site {
        let side = self.side();
        let r = self.radius as i64;
        let mut c = [0i64; MAX_DIM];
        for axis in (0..self.dim).rev() {
            c[axis] = (index % side) as i64 - r;
            index /= side;
        }
        Site(c)
    }

    /// All sites in storage order (lexicographic in the coordinates).
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    /// Same dimension, different radius.
    pub fn with_radius(&self, radius: usize) -> Result<Shape> {
        Shape::new(self.dim, radius)
    }

    /// Sites whose ℓ∞ distance to the boundary is at least `margin`.
    pub fn is_interior(&self, site: Site, margin: usize) -> bool {
        self.contains(site) && (site.linf() as usize) + margin <= self.radius
    }
}

/// How to decide which sites belong to the support of a field.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum SupportThreshold {
    /// `f(x) ≠ 0`.
    #[default]
    Exact,
    /// `|f(x)| > a`.
    Absolute(f64),
    /// `|f(x)| > r·‖f‖∞`.
    Relative(f64),
}

impl SupportThreshold {
    /// The post-arithmetic default, `10⁻¹⁴‖f‖∞`.
    pub const NUMERICAL: SupportThreshold = SupportThreshold::Relative(1e-14);

    fn cutoff(&self, f: &GridFunction) -> f64 {
        match *self {
            SupportThreshold::Exact => 0.0,
            SupportThreshold::Absolute(a) => a,
            SupportThreshold::Relative(r) => r * f.sup_norm(),
        }
    }
}

/// A complex-valued function on the box, dense storage.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    shape: Shape,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(shape: Shape) -> GridFunction {
        GridFunction {
            shape,
            values: vec![Complex64::new(0.0, 0.0); shape.len()],
        }
    }

    /// Kronecker delta at `site`.
    pub fn delta(shape: Shape, site: Site) -> Result<GridFunction> {
        let mut f = GridFunction::zeros(shape);
        let i = shape.index(site).ok_or(Error::SiteOutOfBox)?;
        f.values[i] = Complex64::new(1.0, 0.0);
        Ok(f)
    }

    pub fn from_fn(shape: Shape, mut value: impl FnMut(Site) -> Complex64) -> GridFunction {
        let values = shape.sites().map(&mut value).collect();
        GridFunction { shape, values }
    }

    pub fn from_values(shape: Shape, values: Vec<Complex64>) -> Result<GridFunction> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch);
        }
        if values
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(GridFunction { shape, values })
    }

    /// Unchecked construction for internal arithmetic results.
    pub(crate) fn from_raw(shape: Shape, values: Vec<Complex64>) -> GridFunction {
        debug_assert_eq!(values.len(), shape.len());
        GridFunction { shape, values }
    }

    /// Sets the value at `site`, which must lie in the box.
    pub fn set(&mut self, site: Site, value: Complex64) -> Result<()> {
        let i = self.shape.index(site).ok_or(Error::SiteOutOfBox)?;
        self.values[i] = value;
        Ok(())
    }

    /// Value at `site`, zero outside the box.
    pub fn get(&self, site: Site) -> Complex64 {
        self.shape
            .index(site)
            .map_or(Complex64::new(0.0, 0.0), |i| self.values[i])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, Complex64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &z)| (self.shape.site(i), z))
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// ℓ^p norm; `p = f64::INFINITY` gives the sup norm.
    pub fn norm_p(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidNormOrder(p));
        }
        let sup = self.sup_norm();
        if p.is_infinite() || sup == 0.0 {
            return Ok(sup);
        }
        if p == 2.0 {
            return Ok(self.norm2());
        }
        // Scale by the sup norm so large p cannot overflow.
        let sum: f64 = self.values.iter().map(|z| (z.norm() / sup).powf(p)).sum();
        Ok(sup * sum.powf(1.0 / p))
    }

    pub fn norm2(&self) -> f64 {
        self.norm2_sqr().sqrt()
    }

    pub fn norm2_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ_x |f(x)|⁴`.
    pub fn norm4_pow4(&self) -> f64 {
        self.values
            .iter()
            .map(|z| {
                let a = z.norm_sqr();
                a * a
            })
            .sum()
    }

    /// `⟨self, f⟩ = Σ conj(self(x)) f(x)`: anti-linear in `self`, linear in `f`.
    pub fn inner(&self, f: &GridFunction) -> Result<Complex64> {
        self.check_same(f)?;
        Ok(self
            .values
            .iter()
            .zip(&f.values)
            .map(|(g, f)| g.conj() * f)
            .sum())
    }

    pub(crate) fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch)
        }
    }

    /// Discrete Laplacian `Σ_{|ν|=1} f(x+ν) − 2d f(x)`, zero outside the box.
    pub fn laplacian(&self) -> GridFunction {
        let shape = self.shape;
        let d = shape.dim();
        let side = shape.side();
        let mut out: Vec<Complex64> = self.values.iter().map(|z| z * (-2.0 * d as f64)).collect();
        for axis in 0..d {
            let stride = shape.stride(axis);
            for (i, o) in out.iter_mut().enumerate() {
                let pos = (i / stride) % side;
                if pos > 0 {
                    *o += self.values[i - stride];
                }
                if pos + 1 < side {
                    *o += self.values[i + stride];
                }
            }
        }
        GridFunction::from_raw(shape, out)
    }

    /// Translated copy `g(x) = f(x − ξ)`; fails if nonzero mass would leave
    /// the box.
    pub fn shift(&self, xi: Site) -> Result<GridFunction> {
        self.shift_within(xi, SupportThreshold::Exact)
    }

    /// Like [`shift`](Self::shift) but values at or below the support
    /// threshold are allowed to drop off the box.
    pub fn shift_within(&self, xi: Site, threshold: SupportThreshold) -> Result<GridFunction> {
        let cutoff = threshold.cutoff(self);
        let mut out = GridFunction::zeros(self.shape);
        for (i, &z) in self.values.iter().enumerate() {
            if z.re == 0.0 && z.im == 0.0 {
                continue;
            }
            let target = self.shape.site(i).offset(xi);
            match self.shape.index(target) {
                Some(j) => out.values[j] = z,
                None if z.norm() <= cutoff => {}
                None => return Err(Error::SupportOverflow),
            }
        }
        Ok(out)
    }

    /// Sites with `|f(x)|` above the threshold, in storage order.
    pub fn support(&self, threshold: SupportThreshold) -> Vec<Site> {
        let cutoff = threshold.cutoff(self);
        self.values
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > cutoff)
            .map(|(i, _)| self.shape.site(i))
            .collect()
    }

    /// Site of largest modulus, ties broken towards the lexicographically
    /// smallest site.
    pub fn argmax_abs(&self) -> Option<Site> {
        let mut best: Option<(usize, f64)> = None;
        for (i, z) in self.values.iter().enumerate() {
            let a = z.norm_sqr();
            // Storage order is lexicographic, so strict > keeps the first.
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
        best.filter(|&(_, a)| a > 0.0)
            .map(|(i, _)| self.shape.site(i))
    }

    pub fn scale(&self, c: Complex64) -> GridFunction {
        GridFunction::from_raw(self.shape, self.values.iter().map(|z| z * c).collect())
    }

    pub fn scale_re(&self, c: f64) -> GridFunction {
        GridFunction::from_raw(self.shape, self.values.iter().map(|z| z * c).collect())
    }

    /// `self + a·x`.
    pub fn axpy(&self, a: Complex64, x: &GridFunction) -> Result<GridFunction> {
        self.check_same(x)?;
        Ok(GridFunction::from_raw(
            self.shape,
            self.values
                .iter()
                .zip(&x.values)
                .map(|(s, x)| s + a * x)
                .collect(),
        ))
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn conj(&self) -> GridFunction {
        GridFunction::from_raw(self.shape, self.values.iter().map(|z| z.conj()).collect())
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Zero-extends onto a larger box of the same dimension, or restricts
    /// onto a smaller one (dropping values outside it).
    pub fn resize(&self, shape: Shape) -> Result<GridFunction> {
        if shape.dim() != self.shape.dim() {
            return Err(Error::ShapeMismatch);
        }
        let mut out = GridFunction::zeros(shape);
        for (i, &z) in self.values.iter().enumerate() {
            if let Some(j) = shape.index(self.shape.site(i)) {
                out.values[j] = z;
            }
        }
        Ok(out)
    }
}

impl Index<usize> for GridFunction {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for GridFunction {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.values[i]
    }
}

/// `dist(supp f, supp g)` in the ℓ¹ lattice metric.
///
/// Multi-source breadth-first search from `supp f` over the box; the box is
/// convex in the lattice sense so graph distance equals ℓ¹ distance.
pub fn support_distance(
    f: &GridFunction,
    g: &GridFunction,
    threshold: SupportThreshold,
) -> Result<u64> {
    f.check_same(g)?;
    let shape = f.shape();
    let source = f.support(threshold);
    let target_cut = threshold.cutoff(g);
    if source.is_empty() || g.support(threshold).is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut dist = vec![u64::MAX; shape.len()];
    let mut queue = VecDeque::new();
    for s in source {
        let i = shape.index(s).expect("support site in box");
        dist[i] = 0;
        queue.push_back(i);
    }
    let side = shape.side();
    while let Some(i) = queue.pop_front() {
        if g.values[i].norm() > target_cut {
            return Ok(dist[i]);
        }
        for axis in 0..shape.dim() {
            let stride = shape.stride(axis);
            let pos = (i / stride) % side;
            let mut visit = |j: usize| {
                if dist[j] == u64::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            };
            if pos > 0 {
                visit(i - stride);
            }
            if pos + 1 < side {
                visit(i + stride);
            }
        }
    }
    Err(Error::EmptySupport)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn line(radius: usize) -> Shape {
        Shape::new(1, radius).unwrap()
    }

    #[test]
    fn index_roundtrip() {
        let s = Shape::new(3, 2).unwrap();
        for i in 0..s.len() {
            assert_eq!(s.index(s.site(i)), Some(i));
        }
        assert_eq!(s.index(Site::new(&[3, 0, 0])), None);
        assert_eq!(Shape::new(2, 1).unwrap().index(Site::new(&[0, 0, 1])), None);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Shape::new(0, 3).is_err());
        assert!(Shape::new(4, 3).is_err());
        assert!(Shape::new(1, 0).is_err());
    }

    #[test]
    fn delta_norms_are_one() {
        let f = GridFunction::delta(line(4), Site::ORIGIN).unwrap();
        for p in [1.0, 1.5, 2.0, 4.0, 17.0, f64::INFINITY] {
            assert_eq!(f.norm_p(p).unwrap(), 1.0);
        }
    }

    #[test]
    fn two_point_norms() {
        let mut f = GridFunction::zeros(line(4));
        f.set(Site::new(&[0]), c(1.0, 0.0)).unwrap();
        f.set(Site::new(&[1]), c(1.0, 0.0)).unwrap();
        let n2 = f.norm_p(2.0).unwrap();
        let n4 = f.norm_p(4.0).unwrap();
        assert_relative_eq!(n2, 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(n4, 2f64.powf(0.25), epsilon = 1e-15);
        assert!(n4 <= n2);
    }

    #[test]
    fn zero_norms() {
        let f = GridFunction::zeros(line(3));
        for p in [1.0, 3.0, f64::INFINITY] {
            assert_eq!(f.norm_p(p).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_small_p() {
        let f = GridFunction::zeros(line(3));
        assert!(matches!(f.norm_p(0.5), Err(Error::InvalidNormOrder(_))));
        assert!(f.norm_p(f64::NAN).is_err());
    }

    #[test]
    fn inner_products() {
        let s = line(3);
        let d0 = GridFunction::delta(s, Site::ORIGIN).unwrap();
        let d1 = GridFunction::delta(s, Site::new(&[1])).unwrap();
        assert_eq!(d0.inner(&d0).unwrap(), c(1.0, 0.0));
        assert_eq!(d0.inner(&d1).unwrap(), c(0.0, 0.0));
        let id0 = d0.scale(c(0.0, 1.0));
        assert_eq!(id0.inner(&d0).unwrap(), c(0.0, -1.0));
        let other = GridFunction::zeros(line(4));
        assert!(matches!(d0.inner(&other), Err(Error::ShapeMismatch)));
    }

    #[test]
    fn laplacian_of_delta() {
        let s = line(3);
        let lap = GridFunction::delta(s, Site::ORIGIN).unwrap().laplacian();
        assert_eq!(lap.get(Site::new(&[0])), c(-2.0, 0.0));
        assert_eq!(lap.get(Site::new(&[1])), c(1.0, 0.0));
        assert_eq!(lap.get(Site::new(&[-1])), c(1.0, 0.0));
        assert_eq!(lap.get(Site::new(&[2])), c(0.0, 0.0));
    }

    #[test]
    fn laplacian_of_tent() {
        let s = line(2);
        let f = GridFunction::from_fn(s, |x| c((2 - x.0[0].abs()) as f64, 0.0));
        // values (0,1,2,1,0) centered at the origin
        assert_eq!(f.laplacian().get(Site::ORIGIN), c(-2.0, 0.0));
    }

    #[test]
    fn laplacian_in_two_dims() {
        let s = Shape::new(2, 2).unwrap();
        let lap = GridFunction::delta(s, Site::ORIGIN).unwrap().laplacian();
        assert_eq!(lap.get(Site::ORIGIN), c(-4.0, 0.0));
        for n in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert_eq!(lap.get(Site::new(&n)), c(1.0, 0.0));
        }
        assert_eq!(lap.get(Site::new(&[1, 1])), c(0.0, 0.0));
    }

    #[test]
    fn shift_moves_delta() {
        let s = line(5);
        let d = GridFunction::delta(s, Site::ORIGIN).unwrap();
        let shifted = d.shift(Site::new(&[3])).unwrap();
        assert_eq!(shifted, GridFunction::delta(s, Site::new(&[3])).unwrap());
        assert_eq!(d.shift(Site::ORIGIN).unwrap(), d);
        assert!(matches!(
            d.shift(Site::new(&[6])),
            Err(Error::SupportOverflow)
        ));
    }

    #[test]
    fn shift_within_drops_tiny_values() {
        let s = line(3);
        let mut f = GridFunction::delta(s, Site::ORIGIN).unwrap();
        f.set(Site::new(&[3]), c(1e-20, 0.0)).unwrap();
        assert!(f.shift(Site::new(&[1])).is_err());
        let g = f
            .shift_within(Site::new(&[1]), SupportThreshold::NUMERICAL)
            .unwrap();
        assert_eq!(g.get(Site::new(&[1])), c(1.0, 0.0));
    }

    #[test]
    fn support_distances() {
        let s = line(6);
        let d0 = GridFunction::delta(s, Site::ORIGIN).unwrap();
        let d5 = GridFunction::delta(s, Site::new(&[5])).unwrap();
        assert_eq!(
            support_distance(&d0, &d5, SupportThreshold::Exact).unwrap(),
            5
        );
        let both = d0.add(&d5).unwrap();
        assert_eq!(
            support_distance(&both, &d5, SupportThreshold::Exact).unwrap(),
            0
        );

        let s2 = Shape::new(2, 3).unwrap();
        let a = GridFunction::delta(s2, Site::new(&[0, 0])).unwrap();
        let b = GridFunction::delta(s2, Site::new(&[1, 1])).unwrap();
        assert_eq!(
            support_distance(&a, &b, SupportThreshold::Exact).unwrap(),
            2
        );

        let z = GridFunction::zeros(s);
        assert!(matches!(
            support_distance(&z, &d0, SupportThreshold::Exact),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn argmax_prefers_lexicographically_smallest() {
        let s = line(3);
        let mut f = GridFunction::zeros(s);
        f.set(Site::new(&[2]), c(0.0, 1.0)).unwrap();
        f.set(Site::new(&[-1]), c(1.0, 0.0)).unwrap();
        assert_eq!(f.argmax_abs(), Some(Site::new(&[-1])));
        assert_eq!(GridFunction::zeros(s).argmax_abs(), None);
    }

    #[test]
    fn from_values_rejects_nan() {
        let s = line(1);
        let v = vec![c(0.0, 0.0), c(f64::NAN, 0.0), c(0.0, 0.0)];
        assert!(matches!(
            GridFunction::from_values(s, v),
            Err(Error::NonFinite)
        ));
    }
}
