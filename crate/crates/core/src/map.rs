//! The structure map of the monotone system and its inverse.
//!
//! A [`MonotoneMap`] is a Carathéodory family `v -> A(x, v)` of degree
//! `p - 1`: positively homogeneous, Lipschitz and strongly monotone with the
//! weights `(|v1| + |v2|)^(p-2)`. The canonical instance is the coefficient
//! power map `A(x, v) = mu(x) |v|^(p-2) v`, whose inverse is the power map
//! with the conjugate exponent and coefficient `mu^(1-q)`. Arbitrary maps are
//! accepted but audited: [`audit_axioms`] measures the best constants on a
//! random sample and flags violations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measure::{conjugate_exponent, ExponentPair, Field, MeasureSpace};
use crate::rng::SplitMix64;

/// Default tolerance for pointwise inversion.
pub const INVERT_TOL: f64 = 1e-12;

/// A monotone structure map of homogeneity degree `p - 1`.
pub trait MonotoneMap: Send + Sync {
    /// The exponent `p` whose conjugate pair governs the map.
    fn degree_exponent(&self) -> f64;

    /// Evaluate `A(x_i, v)` into `out`.
    fn evaluate(&self, point: usize, v: &[f64], out: &mut [f64]);

    /// `d x d` Jacobian of `v -> A(x_i, v)`, row-major.
    ///
    /// `delta` is a smoothing radius used by Newton linearizations near
    /// `v = 0`; implementations without a natural smoothing may ignore it.
    /// The default is a symmetric finite difference with step
    /// `1e-6 * (1 + |v|)`.
    fn jacobian(&self, point: usize, v: &[f64], delta: f64, out: &mut [f64]) {
        let _ = delta;
        let d = v.len();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let h = 1e-6 * (1.0 + norm);
        let mut vp = v.to_vec();
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        for c in 0..d {
            vp[c] = v[c] + h;
            self.evaluate(point, &vp, &mut plus);
            vp[c] = v[c] - h;
            self.evaluate(point, &vp, &mut minus);
            vp[c] = v[c];
            for r in 0..d {
                out[r * d + c] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
    }

    /// Solve `A(x_i, v) = w` for `v` to `tol * (1 + |w|)`.
    ///
    /// The default is a damped Newton iteration seeded at the conjugate
    /// power `w^(q-1)`; failure to converge signals an axiom violation of
    /// the supplied map.
    fn invert(&self, point: usize, w: &[f64], tol: f64, out: &mut [f64]) -> Result<()> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("invert wants tol > 0, got {tol}")));
        }
        let d = w.len();
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            // Homogeneity forces A(x, 0) = 0.
            out.fill(0.0);
            return Ok(());
        }
        let q = conjugate_exponent(self.degree_exponent())?;
        let mut v = crate::measure::s_power(w, q - 1.0)?;
        let target = tol * (1.0 + wnorm);
        let mut av = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        let mut res_norm = f64::INFINITY;
        for iter in 0..120u32 {
            self.evaluate(point, &v, &mut av);
            let r: Vec<f64> = av.iter().zip(w).map(|(a, b)| a - b).collect();
            res_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if res_norm <= target {
                out.copy_from_slice(&v);
                return Ok(());
            }
            let _ = iter;
            let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let delta = 1e-8 * (1.0 + vnorm);
            self.jacobian(point, &v, delta, &mut jac);
            let m = DMatrix::from_row_slice(d, d, &jac);
            let rhs = DVector::from_column_slice(&r);
            let step = match m.clone().lu().solve(&rhs) {
                Some(s) => s,
                None => {
                    let ridge = m + DMatrix::identity(d, d) * (1e-8 * (1.0 + vnorm));
                    match ridge.lu().solve(&rhs) {
                        Some(s) => s,
                        None => break,
                    }
                }
            };
            let mut lambda = 1.0;
            let mut advanced = false;
            while lambda >= 1e-12 {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
                self.evaluate(point, &trial, &mut av);
                let tn = av.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if tn < res_norm * (1.0 - 1e-4 * lambda) {
                    v = trial;
                    advanced = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        Err(Error::NonConvergence { iterations: 120, residual: res_norm, target })
    }

    /// Downcast hook for the canonical power map (closed-form inverse).
    fn as_p_power(&self) -> Option<&PPowerMap> {
        None
    }

    /// True when the implementation satisfies the structure axioms by
    /// construction and needs no runtime audit.
    fn axioms_hold_by_construction(&self) -> bool {
        false
    }
}

/// The canonical map `A(x, v) = mu(x) |v|^(p-2) v` with a bounded positive
/// coefficient; `mu = 1` reproduces the pure power system.
#[derive(Clone, Debug)]
pub struct PPowerMap {
    exps: ExponentPair,
    coefficient: Option<Vec<f64>>,
}

impl PPowerMap {
    pub fn new(p: f64) -> Result<Self> {
        Ok(Self { exps: ExponentPair::new(p)?, coefficient: None })
    }

    pub fn with_coefficient(p: f64, mu: Vec<f64>) -> Result<Self> {
        if mu.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(Error::Domain("coefficient must be strictly positive and finite".into()));
        }
        Ok(Self { exps: ExponentPair::new(p)?, coefficient: Some(mu) })
    }

    pub fn exponents(&self) -> ExponentPair {
        self.exps
    }

    pub fn coefficient(&self) -> Option<&[f64]> {
        self.coefficient.as_deref()
    }

    fn mu(&self, point: usize) -> f64 {
        self.coefficient.as_ref().map_or(1.0, |c| c[point])
    }

    /// The exact inverse map: conjugate exponent, coefficient `mu^(1-q)`.
    pub fn inverse(&self) -> PPowerMap {
        let q = self.exps.q();
        PPowerMap {
            exps: self.exps.swapped(),
            coefficient: self
                .coefficient
                .as_ref()
                .map(|c| c.iter().map(|m| m.powf(1.0 - q)).collect()),
        }
    }

    /// Check the coefficient length against a space.
    pub fn validate_for(&self, space: &MeasureSpace) -> Result<()> {
        if let Some(c) = &self.coefficient {
            if c.len() != space.point_count() {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient has {} entries, space has {} points",
                    c.len(),
                    space.point_count()
                )));
            }
        }
        Ok(())
    }
}

impl MonotoneMap for PPowerMap {
    fn degree_exponent(&self) -> f64 {
        self.exps.p()
    }

    fn evaluate(&self, point: usize, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
        crate::measure::s_power_in_place(out, self.exps.p() - 1.0);
        let mu = self.mu(point);
        if mu != 1.0 {
            for x in out.iter_mut() {
                *x *= mu;
            }
        }
    }

    fn jacobian(&self, point: usize, v: &[f64], delta: f64, out: &mut [f64]) {
        let d = v.len();
        let p = self.exps.p();
        let mu = self.mu(point);
        let v2: f64 = v.iter().map(|x| x * x).sum();
        // Smoothed radius keeps the linearization finite for p < 2 near 0.
        let r2 = (v2 + delta * delta).max(1e-300);
        let f1 = mu * r2.powf((p - 2.0) / 2.0);
        out.fill(0.0);
        for k in 0..d {
            out[k * d + k] = f1;
        }
        if v2 > 0.0 && p != 2.0 {
            let f2 = mu * (p - 2.0) * r2.powf((p - 4.0) / 2.0);
            for r in 0..d {
                for c in 0..d {
                    out[r * d + c] += f2 * v[r] * v[c];
                }
            }
        }
    }

    fn invert(&self, point: usize, w: &[f64], _tol: f64, out: &mut [f64]) -> Result<()> {
        let mu = self.mu(point);
        out.copy_from_slice(w);
        if mu != 1.0 {
            for x in out.iter_mut() {
                *x /= mu;
            }
        }
        crate::measure::s_power_in_place(out, self.exps.q() - 1.0);
        Ok(())
    }

    fn as_p_power(&self) -> Option<&PPowerMap> {
        Some(self)
    }

    fn axioms_hold_by_construction(&self) -> bool {
        true
    }
}

/// Sign-flipped power map. Violates monotonicity while keeping homogeneity
/// and the Lipschitz bound; used to exercise the audit and failure paths.
#[derive(Clone, Debug)]
pub struct NegatedPPowerMap(pub PPowerMap);

impl MonotoneMap for NegatedPPowerMap {
    fn degree_exponent(&self) -> f64 {
        self.0.degree_exponent()
    }

    fn evaluate(&self, point: usize, v: &[f64], out: &mut [f64]) {
        self.0.evaluate(point, v, out);
        for x in out.iter_mut() {
            *x = -*x;
        }
    }

    fn jacobian(&self, point: usize, v: &[f64], delta: f64, out: &mut [f64]) {
        self.0.jacobian(point, v, delta, out);
        for x in out.iter_mut() {
            *x = -*x;
        }
    }

    fn invert(&self, point: usize, w: &[f64], tol: f64, out: &mut [f64]) -> Result<()> {
        let neg: Vec<f64> = w.iter().map(|x| -x).collect();
        self.0.invert(point, &neg, tol, out)
    }
}

/// Generic inverse wrapper: evaluates by pointwise inversion of the forward
/// map, with the conjugate degree. Evaluation is best-effort for maps that
/// violate the axioms (inversion may then be ill-posed).
pub struct InverseMap<'a> {
    forward: &'a dyn MonotoneMap,
    exps: ExponentPair,
}

impl<'a> InverseMap<'a> {
    pub fn new(forward: &'a dyn MonotoneMap) -> Result<Self> {
        let exps = ExponentPair::new(forward.degree_exponent())?.swapped();
        Ok(Self { forward, exps })
    }
}

impl MonotoneMap for InverseMap<'_> {
    fn degree_exponent(&self) -> f64 {
        self.exps.p()
    }

    fn evaluate(&self, point: usize, v: &[f64], out: &mut [f64]) {
        if self.forward.invert(point, v, INVERT_TOL, out).is_err() {
            // Fall back to the conjugate power seed; callers auditing the
            // forward map will already have flagged it.
            out.copy_from_slice(v);
            crate::measure::s_power_in_place(out, self.exps.p() - 1.0);
        }
    }

    fn jacobian(&self, point: usize, v: &[f64], delta: f64, out: &mut [f64]) {
        let d = v.len();
        let mut pre = vec![0.0; d];
        self.evaluate(point, v, &mut pre);
        let mut jf = vec![0.0; d * d];
        self.forward.jacobian(point, &pre, delta, &mut jf);
        let m = DMatrix::from_row_slice(d, d, &jf);
        let inv = m
            .clone()
            .try_inverse()
            .or_else(|| (m + DMatrix::identity(d, d) * 1e-10).try_inverse())
            .unwrap_or_else(|| DMatrix::identity(d, d));
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = inv[(r, c)];
            }
        }
    }

    fn invert(&self, point: usize, w: &[f64], _tol: f64, out: &mut [f64]) -> Result<()> {
        self.forward.evaluate(point, w, out);
        Ok(())
    }
}

/// The inverse of a map, using the closed form when one exists.
pub fn inverse_of<'a>(map: &'a dyn MonotoneMap) -> Result<Box<dyn MonotoneMap + 'a>> {
    if let Some(pp) = map.as_p_power() {
        Ok(Box::new(pp.inverse()))
    } else {
        Ok(Box::new(InverseMap::new(map)?))
    }
}

/// Apply the map pointwise to a field.
pub fn apply_field(map: &dyn MonotoneMap, u: &Field) -> Field {
    let d = u.space().value_dim();
    let mut out = Field::zero(u.space().clone());
    let n = u.space().point_count();
    for i in 0..n {
        let (src, dst) = (&u.values()[i * d..(i + 1) * d], &mut out.values_mut()[i * d..(i + 1) * d]);
        map.evaluate(i, src, dst);
    }
    out
}

/// Invert the map pointwise on a field.
pub fn invert_field(map: &dyn MonotoneMap, w: &Field, tol: f64) -> Result<Field> {
    let d = w.space().value_dim();
    let mut out = Field::zero(w.space().clone());
    let n = w.space().point_count();
    for i in 0..n {
        let src = &w.values()[i * d..(i + 1) * d];
        let mut buf = vec![0.0; d];
        map.invert(i, src, tol, &mut buf)?;
        out.values_mut()[i * d..(i + 1) * d].copy_from_slice(&buf);
    }
    Ok(out)
}

/// Measured axiom constants of a map on a random sample.
#[derive(Clone, Debug)]
pub struct AxiomReport {
    pub degree: f64,
    /// Largest observed `|A v1 - A v2| / ((|v1|+|v2|)^(p-2) |v1-v2|)`.
    pub lipschitz_constant: f64,
    /// Smallest observed `<A v1 - A v2 | v1 - v2> / ((|v1|+|v2|)^(p-2) |v1-v2|^2)`.
    pub monotonicity_constant: f64,
    /// Largest relative homogeneity defect over sampled `lambda >= 0`.
    pub homogeneity_residual: f64,
    pub samples: usize,
}

impl AxiomReport {
    pub fn monotone(&self) -> bool {
        self.monotonicity_constant > 0.0
    }
}

/// Sample the axiom ratios at random points and magnitudes; deterministic in
/// the seed.
pub fn audit_axioms(
    map: &dyn MonotoneMap,
    space: &MeasureSpace,
    sample_count: usize,
    seed: u64,
) -> Result<AxiomReport> {
    if sample_count == 0 {
        return Err(Error::Domain("audit wants at least one sample".into()));
    }
    let p = map.degree_exponent();
    let d = space.value_dim();
    let mut rng = SplitMix64::new(seed);
    let mut lipschitz: f64 = 0.0;
    let mut monotonicity = f64::INFINITY;
    let mut homogeneity: f64 = 0.0;
    let mut a1 = vec![0.0; d];
    let mut a2 = vec![0.0; d];
    for _ in 0..sample_count {
        let i = rng.next_index(space.point_count());
        let scale1 = 10f64.powf(rng.next_range(-1.5, 1.5));
        let scale2 = 10f64.powf(rng.next_range(-1.5, 1.5));
        let v1: Vec<f64> = (0..d).map(|_| scale1 * rng.next_gaussian()).collect();
        let v2: Vec<f64> = (0..d).map(|_| scale2 * rng.next_gaussian()).collect();
        let n1 = v1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2 = v2.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dv: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
        let nd = dv.iter().map(|x| x * x).sum::<f64>().sqrt();
        map.evaluate(i, &v1, &mut a1);
        map.evaluate(i, &v2, &mut a2);
        if nd > 1e-12 * (n1 + n2) && n1 + n2 > 0.0 {
            let weight = (n1 + n2).powf(p - 2.0);
            let da: Vec<f64> = a1.iter().zip(&a2).map(|(a, b)| a - b).collect();
            let nda = da.iter().map(|x| x * x).sum::<f64>().sqrt();
            let pairing: f64 = da.iter().zip(&dv).map(|(a, b)| a * b).sum();
            lipschitz = lipschitz.max(nda / (weight * nd));
            monotonicity = monotonicity.min(pairing / (weight * nd * nd));
        }
        // Homogeneity along the first sample.
        let lambda = rng.next_range(0.0, 2.0);
        let lv: Vec<f64> = v1.iter().map(|x| lambda * x).collect();
        map.evaluate(i, &lv, &mut a2);
        let factor = lambda.powf(p - 1.0);
        let mut defect = 0.0_f64;
        let mut base = 0.0_f64;
        for k in 0..d {
            defect += (a2[k] - factor * a1[k]).powi(2);
            base += (factor * a1[k]).powi(2);
        }
        let rel = defect.sqrt() / base.sqrt().max(1e-300);
        if base > 0.0 {
            homogeneity = homogeneity.max(rel);
        }
    }
    if !monotonicity.is_finite() {
        monotonicity = 0.0;
    }
    Ok(AxiomReport {
        degree: p,
        lipschitz_constant: lipschitz,
        monotonicity_constant: monotonicity,
        homogeneity_residual: homogeneity,
        samples: sample_count,
    })
}

/// Measured spread of the comparability ratios `|v|^p / <v|Av>` and
/// `|Av|^q / <v|Av>` on a random sample; both are bounded above and below
/// for maps satisfying the axioms.
pub fn comparability_spread(
    map: &dyn MonotoneMap,
    space: &MeasureSpace,
    sample_count: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let p = map.degree_exponent();
    let q = conjugate_exponent(p)?;
    let d = space.value_dim();
    let mut rng = SplitMix64::new(seed);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    let mut w = vec![0.0; d];
    for _ in 0..sample_count.max(1) {
        let i = rng.next_index(space.point_count());
        let scale = 10f64.powf(rng.next_range(-1.0, 1.0));
        let v: Vec<f64> = (0..d).map(|_| scale * rng.next_gaussian()).collect();
        map.evaluate(i, &v, &mut w);
        let pairing: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if pairing <= 0.0 {
            continue;
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for ratio in [nv.powf(p) / pairing, nw.powf(q) / pairing] {
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
    }
    Ok((lo, hi))
}
