//! Finite weighted measure spaces and vector-valued fields.
//!
//! A [`MeasureSpace`] is a finite set of atoms with positive weights, together
//! with the dimension of the inner-product space the fields take values in.
//! Everything downstream (projections, monotone systems, interpolation
//! audits) is built on the handful of primitives here: the weighted pairing,
//! `s`-norms, vector powers, distribution functions, and the bracket
//! functional of a data pair.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Finite atomic measure space: `N` points with weights `w_i > 0`, carrying
/// fields valued in a `d`-dimensional inner-product space.
#[derive(Debug, PartialEq)]
pub struct MeasureSpace {
    weights: Vec<f64>,
    value_dim: usize,
}

impl MeasureSpace {
    /// Build a space from per-point weights and the value dimension.
    pub fn new(weights: Vec<f64>, value_dim: usize) -> Result<Arc<Self>> {
        if weights.is_empty() {
            return Err(Error::Domain("a measure space needs at least one point".into()));
        }
        if value_dim == 0 {
            return Err(Error::Domain("value dimension must be at least 1".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::Domain(format!("weights must be positive and finite, got {w}")));
        }
        Ok(Arc::new(Self { weights, value_dim }))
    }

    /// Convenience constructor with all weights equal to one.
    pub fn uniform(points: usize, value_dim: usize) -> Result<Arc<Self>> {
        Self::new(vec![1.0; points], value_dim)
    }

    pub fn point_count(&self) -> usize {
        self.weights.len()
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Length of a field's coefficient vector, `N * d`.
    pub fn coeff_len(&self) -> usize {
        self.weights.len() * self.value_dim
    }
}

/// True when two space handles denote the same space (pointer or content).
pub fn same_space(a: &Arc<MeasureSpace>, b: &Arc<MeasureSpace>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

fn check_same_space(a: &Arc<MeasureSpace>, b: &Arc<MeasureSpace>, what: &str) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.point_count(),
            a.value_dim(),
            b.point_count(),
            b.value_dim()
        )))
    }
}

/// A measurable function on the space, valued in `R^d`. Stored point-major:
/// the value at point `i` is `values[i*d .. (i+1)*d]`.
#[derive(Clone, Debug)]
pub struct Field {
    space: Arc<MeasureSpace>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(space: Arc<MeasureSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.coeff_len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} entries, space wants {}",
                values.len(),
                space.coeff_len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field entries must be finite".into()));
        }
        Ok(Self { space, values })
    }

    pub fn zero(space: Arc<MeasureSpace>) -> Self {
        let n = space.coeff_len();
        Self { space, values: vec![0.0; n] }
    }

    pub fn space(&self) -> &Arc<MeasureSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value vector at point `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        let d = self.space.value_dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn try_add(&self, other: &Field) -> Result<Field> {
        check_same_space(&self.space, &other.space, "field addition")?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { space: self.space.clone(), values })
    }

    pub fn try_sub(&self, other: &Field) -> Result<Field> {
        check_same_space(&self.space, &other.space, "field subtraction")?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { space: self.space.clone(), values })
    }

    pub fn scale(&self, c: f64) -> Field {
        let values = self.values.iter().map(|v| c * v).collect();
        Field { space: self.space.clone(), values }
    }

    /// `self += c * other`, in place. Spaces must already agree.
    pub fn axpy(&mut self, c: f64, other: &Field) {
        debug_assert!(same_space(&self.space, &other.space));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// Pointwise `s`-power of the field, `v -> |v|^(s-1) v`.
    pub fn s_power(&self, s: f64) -> Result<Field> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("s-power wants s > 0, got {s}")));
        }
        let d = self.space.value_dim();
        let mut values = self.values.clone();
        for chunk in values.chunks_mut(d) {
            s_power_in_place(chunk, s);
        }
        Ok(Field { space: self.space.clone(), values })
    }

    /// Pointwise magnitude `|u(x)|` as a scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let d = self.space.value_dim();
        let values = self
            .values
            .chunks(d)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        ScalarField { space: self.space.clone(), values }
    }

    /// Deterministic field with independent standard normal entries.
    pub fn random_gaussian(space: Arc<MeasureSpace>, rng: &mut crate::rng::SplitMix64) -> Field {
        let values = (0..space.coeff_len()).map(|_| rng.next_gaussian()).collect();
        Field { space, values }
    }
}

/// A scalar function on the points of a space. Independent of the space's
/// value dimension; used for magnitudes, brackets, and energy integrands.
#[derive(Clone, Debug)]
pub struct ScalarField {
    space: Arc<MeasureSpace>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(space: Arc<MeasureSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.point_count() {
            return Err(Error::DimensionMismatch(format!(
                "scalar field has {} entries, space has {} points",
                values.len(),
                space.point_count()
            )));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &Arc<MeasureSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0_f64, f64::max)
    }

    /// Weighted integral of `g^tau`. `tau = 1` short-circuits the power so
    /// that callers computing the same ratio through different entry points
    /// get bit-identical results.
    pub fn power_integral(&self, tau: f64) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(g, w)| if tau == 1.0 { w * g } else { w * g.powf(tau) })
            .sum()
    }
}

/// In-place `s`-power of a single vector: `v <- |v|^(s-1) v`, with `0 -> 0`
/// for every `s > 0`.
pub fn s_power_in_place(v: &mut [f64], s: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    if s == 1.0 {
        return;
    }
    let factor = norm.powf(s - 1.0);
    for x in v.iter_mut() {
        *x *= factor;
    }
}

/// `s`-power of a vector, returning a new vector.
pub fn s_power(v: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s-power wants s > 0, got {s}")));
    }
    let mut out = v.to_vec();
    s_power_in_place(&mut out, s);
    Ok(out)
}

/// Hölder conjugate exponent `q = p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("conjugate exponent wants p > 1, got {p}")));
    }
    Ok(p / (p - 1.0))
}

/// A Hölder conjugate pair `1/p + 1/q = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentPair {
    p: f64,
    q: f64,
}

impl ExponentPair {
    /// Pair determined by `p` alone.
    pub fn new(p: f64) -> Result<Self> {
        Ok(Self { p, q: conjugate_exponent(p)? })
    }

    /// Pair from both exponents, verifying the Hölder relation to 1e-12.
    pub fn from_pq(p: f64, q: f64) -> Result<Self> {
        if !(p > 1.0 && q > 1.0) {
            return Err(Error::Domain(format!("exponents must exceed 1, got ({p}, {q})")));
        }
        let defect = (1.0 / p + 1.0 / q - 1.0).abs();
        if defect > 1e-12 {
            return Err(Error::Domain(format!(
                "({p}, {q}) is not a conjugate pair: |1/p + 1/q - 1| = {defect:.3e}"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The pair with the roles of `p` and `q` swapped.
    pub fn swapped(&self) -> Self {
        Self { p: self.q, q: self.p }
    }
}

/// Weighted pairing `sum_i w_i <u_i | v_i>`.
pub fn inner(u: &Field, v: &Field) -> Result<f64> {
    check_same_space(u.space(), v.space(), "inner product")?;
    let d = u.space().value_dim();
    let mut acc = 0.0;
    for (i, w) in u.space().weights().iter().enumerate() {
        let ui = &u.values()[i * d..(i + 1) * d];
        let vi = &v.values()[i * d..(i + 1) * d];
        let dot: f64 = ui.iter().zip(vi).map(|(a, b)| a * b).sum();
        acc += w * dot;
    }
    Ok(acc)
}

/// Weighted `s`-norm `(sum_i w_i |u_i|^s)^(1/s)`; `s = inf` gives `max |u_i|`.
pub fn norm_s(u: &Field, s: f64) -> Result<f64> {
    if s.is_infinite() && s > 0.0 {
        return Ok(u.magnitude().max_value());
    }
    if !(s >= 1.0) {
        return Err(Error::Domain(format!("norm wants s >= 1 (or infinity), got {s}")));
    }
    let mag = u.magnitude();
    let total: f64 = mag
        .values()
        .iter()
        .zip(u.space().weights())
        .map(|(m, w)| w * m.powf(s))
        .sum();
    Ok(total.powf(1.0 / s))
}

/// Distribution function `meas { x : g(x) > t }` (strict inequality).
pub fn distribution(g: &ScalarField, t: f64) -> Result<f64> {
    if g.values().iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("distribution function wants a nonnegative field".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("distribution threshold must be >= 0, got {t}")));
    }
    Ok(g.values()
        .iter()
        .zip(g.space().weights())
        .filter(|(v, _)| **v > t)
        .map(|(_, w)| w)
        .sum())
}

/// A data pair `(a, b)` with its conjugate exponents: the right-hand data of
/// the monotone system, and equally the solution pair and solved pair types.
#[derive(Clone, Debug)]
pub struct DataPair {
    pub a: Field,
    pub b: Field,
    pub exps: ExponentPair,
}

impl DataPair {
    pub fn new(a: Field, b: Field, exps: ExponentPair) -> Result<Self> {
        check_same_space(a.space(), b.space(), "data pair")?;
        Ok(Self { a, b, exps })
    }

    pub fn zero(space: Arc<MeasureSpace>, exps: ExponentPair) -> Self {
        Self { a: Field::zero(space.clone()), b: Field::zero(space), exps }
    }

    pub fn space(&self) -> &Arc<MeasureSpace> {
        self.a.space()
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn try_add(&self, other: &DataPair) -> Result<DataPair> {
        Ok(DataPair {
            a: self.a.try_add(&other.a)?,
            b: self.b.try_add(&other.b)?,
            exps: self.exps,
        })
    }

    pub fn try_sub(&self, other: &DataPair) -> Result<DataPair> {
        Ok(DataPair {
            a: self.a.try_sub(&other.a)?,
            b: self.b.try_sub(&other.b)?,
            exps: self.exps,
        })
    }

    /// Component-wise scaling `(la * a, lb * b)`.
    pub fn scale(&self, la: f64, lb: f64) -> DataPair {
        DataPair { a: self.a.scale(la), b: self.b.scale(lb), exps: self.exps }
    }

    /// `sqrt(||a||_2^2 + ||b||_2^2)`, the L2 size of the pair.
    pub fn norm2(&self) -> f64 {
        let na = norm_s(&self.a, 2.0).unwrap_or(0.0);
        let nb = norm_s(&self.b, 2.0).unwrap_or(0.0);
        na.hypot(nb)
    }
}

/// The bracket functional `[f](x) = |a(x)|^p + |b(x)|^q`, pointwise.
pub fn bracket(f: &DataPair) -> ScalarField {
    let d = f.space().value_dim();
    let (p, q) = (f.exps.p(), f.exps.q());
    let values = (0..f.space().point_count())
        .map(|i| {
            let na: f64 = f.a.values()[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = f.b.values()[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt();
            na.powf(p) + nb.powf(q)
        })
        .collect();
    ScalarField { space: f.space().clone(), values }
}

/// Weighted integral of `[f]^tau`; the common code path behind every
/// strong-type ratio so equal inputs give bit-equal outputs.
pub fn bracket_power_integral(f: &DataPair, tau: f64) -> f64 {
    bracket(f).power_integral(tau)
}

/// Exact weak quasinorm `sup_{t>0} t^lambda * meas{ g > t }`.
///
/// The distribution function is a right-continuous step function, so the
/// supremum is attained in the limit `t -> v^-` at the distinct values `v`
/// of `g`, where it equals `v^lambda * meas{ g >= v }`.
pub fn weak_quasinorm(g: &ScalarField, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("weak quasinorm wants lambda > 0, got {lambda}")));
    }
    if g.values().iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("weak quasinorm wants a nonnegative field".into()));
    }
    let mut pairs: Vec<(f64, f64)> = g
        .values()
        .iter()
        .zip(g.space().weights())
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, w)| (*v, *w))
        .collect();
    // Descending by value; cumulative weight is then meas{ g >= v }.
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut best = 0.0_f64;
    let mut cumulative = 0.0;
    let mut idx = 0;
    while idx < pairs.len() {
        let v = pairs[idx].0;
        while idx < pairs.len() && pairs[idx].0 == v {
            cumulative += pairs[idx].1;
            idx += 1;
        }
        best = best.max(v.powf(lambda) * cumulative);
    }
    Ok(best)
}
