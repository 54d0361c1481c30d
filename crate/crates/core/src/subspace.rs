//! Closed subspaces of the weighted L2 space and their projections.
//!
//! A [`SubspacePair`] holds an orthonormal basis (under the weighted inner
//! product) of the distinguished subspace "plus"; the complementary
//! projection is `I - plus`. On a finite atomic space both projections are
//! bounded on every `L^s`, `1 <= s <= infinity`, so the recorded norm-bound
//! range is always the maximal one and actual operator norms on an `s`-grid
//! are measured, not assumed.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{inner, norm_s, same_space, Field, MeasureSpace};
use crate::rng::SplitMix64;

/// Relative rank tolerance for dropping dependent vectors during
/// orthonormalization.
const RANK_DROP_TOL: f64 = 1e-12;

/// Which projection a commutator or norm measurement refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// An orthonormal basis of the "plus" subspace together with the induced
/// pair of complementary projections.
#[derive(Clone, Debug)]
pub struct SubspacePair {
    space: Arc<MeasureSpace>,
    basis: Vec<Field>,
    norm_bound_range: (f64, f64),
}

impl SubspacePair {
    pub fn space(&self) -> &Arc<MeasureSpace> {
        &self.space
    }

    /// Orthonormal basis of the plus subspace.
    pub fn basis(&self) -> &[Field] {
        &self.basis
    }

    pub fn dim_plus(&self) -> usize {
        self.basis.len()
    }

    /// Exponent range over which the projections are bounded. On finite
    /// atomic spaces this is always `(1, infinity)`.
    pub fn norm_bound_range(&self) -> (f64, f64) {
        self.norm_bound_range
    }

    fn check_space(&self, u: &Field, what: &str) -> Result<()> {
        if same_space(&self.space, u.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!("{what}: field lives on a different space")))
        }
    }

    /// Orthogonal projection onto the plus subspace.
    pub fn project_plus(&self, u: &Field) -> Result<Field> {
        self.check_space(u, "project_plus")?;
        let mut out = Field::zero(self.space.clone());
        for e in &self.basis {
            let c = inner(u, e)?;
            out.axpy(c, e);
        }
        Ok(out)
    }

    /// Orthogonal projection onto the complement, `u - plus(u)`.
    pub fn project_minus(&self, u: &Field) -> Result<Field> {
        let plus = self.project_plus(u)?;
        u.try_sub(&plus)
    }

    pub fn project(&self, sign: Sign, u: &Field) -> Result<Field> {
        match sign {
            Sign::Plus => self.project_plus(u),
            Sign::Minus => self.project_minus(u),
        }
    }

    /// Orthonormal basis of the complement, built deterministically by
    /// sweeping the weighted coordinate fields through the orthogonalizer.
    pub fn complement(&self) -> Result<SubspacePair> {
        let n = self.space.coeff_len();
        let mut basis = self.basis.clone();
        let mut comp: Vec<Field> = Vec::with_capacity(n - self.basis.len());
        for k in 0..n {
            let mut values = vec![0.0; n];
            // Unit weighted norm: w_i * x^2 = 1.
            let point = k / self.space.value_dim();
            values[k] = 1.0 / self.space.weight(point).sqrt();
            let cand = Field::new(self.space.clone(), values)?;
            if let Some(next) = orthonormalize_against(&cand, &basis, RANK_DROP_TOL)? {
                basis.push(next.clone());
                comp.push(next);
            }
            if basis.len() == n {
                break;
            }
        }
        if self.basis.len() + comp.len() != n {
            return Err(Error::ContractViolation(format!(
                "complement construction found {} vectors, expected {}",
                comp.len(),
                n - self.basis.len()
            )));
        }
        Ok(SubspacePair {
            space: self.space.clone(),
            basis: comp,
            norm_bound_range: self.norm_bound_range,
        })
    }

    /// Measure `||P u||_s / ||u||_s` over random fields for each `s` in the
    /// grid; returns `(s, norm_plus, norm_minus)` rows. Reporting only.
    pub fn measure_operator_norms(
        &self,
        s_grid: &[f64],
        trials: usize,
        seed: u64,
    ) -> Result<Vec<(f64, f64, f64)>> {
        let mut rng = SplitMix64::new(seed);
        let fields: Vec<Field> = (0..trials.max(1))
            .map(|_| Field::random_gaussian(self.space.clone(), &mut rng))
            .collect();
        let mut rows = Vec::with_capacity(s_grid.len());
        for &s in s_grid {
            let mut worst_plus = 0.0_f64;
            let mut worst_minus = 0.0_f64;
            for u in &fields {
                let nu = norm_s(u, s)?;
                if nu == 0.0 {
                    continue;
                }
                worst_plus = worst_plus.max(norm_s(&self.project_plus(u)?, s)? / nu);
                worst_minus = worst_minus.max(norm_s(&self.project_minus(u)?, s)? / nu);
            }
            rows.push((s, worst_plus, worst_minus));
        }
        Ok(rows)
    }
}

/// Orthogonalize `cand` against `basis` (two passes) and normalize. Returns
/// `None` when the residual falls under `tol` relative to the input norm.
fn orthonormalize_against(cand: &Field, basis: &[Field], tol: f64) -> Result<Option<Field>> {
    let input_norm = inner(cand, cand)?.sqrt();
    let mut u = cand.clone();
    for _ in 0..2 {
        for e in basis {
            let c = inner(&u, e)?;
            u.axpy(-c, e);
        }
    }
    let norm = inner(&u, &u)?.sqrt();
    if norm <= tol * input_norm.max(1e-300) || norm == 0.0 {
        return Ok(None);
    }
    Ok(Some(u.scale(1.0 / norm)))
}

/// Build a subspace from raw (not necessarily independent) spanning fields.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass; vectors whose
/// residual drops below `1e-12` times the largest input norm are dropped, so
/// the recorded dimension is the numerical rank of the input.
pub fn build_subspace(space: Arc<MeasureSpace>, raw: &[Field]) -> Result<SubspacePair> {
    let mut max_input = 0.0_f64;
    for v in raw {
        if !same_space(&space, v.space()) {
            return Err(Error::SpaceMismatch("build_subspace: raw vector on wrong space".into()));
        }
        max_input = max_input.max(inner(v, v)?.sqrt());
    }
    let mut basis: Vec<Field> = Vec::new();
    for v in raw {
        let vn = inner(v, v)?.sqrt();
        if vn <= RANK_DROP_TOL * max_input {
            continue;
        }
        // Drop tolerance relative to the largest input so near-duplicate
        // directions are treated as rank deficiency, not new dimensions.
        if let Some(next) = orthonormalize_against(v, &basis, RANK_DROP_TOL * max_input / vn.max(1e-300))? {
            basis.push(next);
        }
        if basis.len() == space.coeff_len() {
            break;
        }
    }
    Ok(SubspacePair { space, basis, norm_bound_range: (1.0, f64::INFINITY) })
}

/// Edge-space model of the gradient/divergence-free decomposition on a
/// `rows x cols` grid graph.
///
/// The measure space is the edge set with the given weights as measure and
/// `d = 1`. Edges are oriented lexicographically: for each vertex in row-major
/// order, first the edge to its right neighbor, then the edge to the one
/// below. The plus subspace is spanned by the gradients
/// `(grad u)(x -> y) = u(y) - u(x)` of the vertex indicator functions; its
/// dimension is `#vertices - 1` for a connected grid.
pub fn grid_hodge(
    rows: usize,
    cols: usize,
    edge_weights: &[f64],
) -> Result<(Arc<MeasureSpace>, SubspacePair)> {
    if rows < 2 || cols < 2 {
        return Err(Error::Domain(format!("grid must be at least 2x2, got {rows}x{cols}")));
    }
    let edges = grid_edges(rows, cols);
    if edge_weights.len() != edges.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} edge weights supplied, grid has {} edges",
            edge_weights.len(),
            edges.len()
        )));
    }
    let space = MeasureSpace::new(edge_weights.to_vec(), 1)?;
    let vertex_count = rows * cols;
    let mut raw = Vec::with_capacity(vertex_count);
    for v in 0..vertex_count {
        let mut values = vec![0.0; edges.len()];
        for (e, &(tail, head)) in edges.iter().enumerate() {
            if head == v {
                values[e] += 1.0;
            }
            if tail == v {
                values[e] -= 1.0;
            }
        }
        raw.push(Field::new(space.clone(), values)?);
    }
    let pair = build_subspace(space.clone(), &raw)?;
    Ok((space, pair))
}

/// Oriented edge list `(tail, head)` of the grid graph, lexicographic order:
/// right edge then down edge for each vertex in row-major order.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    edges
}

/// Raw spanning set used by [`grid_hodge`]; exposed for instance
/// serialization so a generated file carries the pre-orthonormalization basis.
pub fn grid_gradient_raw_basis(rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let edges = grid_edges(rows, cols);
    let mut raw = Vec::with_capacity(rows * cols);
    for v in 0..rows * cols {
        let mut values = vec![0.0; edges.len()];
        for (e, &(tail, head)) in edges.iter().enumerate() {
            if head == v {
                values[e] += 1.0;
            }
            if tail == v {
                values[e] -= 1.0;
            }
        }
        raw.push(values);
    }
    raw
}

/// Pseudo-random `m`-dimensional subspace, deterministic in the seed.
pub fn random_subspace(space: Arc<MeasureSpace>, m: usize, seed: u64) -> Result<SubspacePair> {
    if m > space.coeff_len() {
        return Err(Error::Domain(format!(
            "requested subspace dimension {m} exceeds the space dimension {}",
            space.coeff_len()
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut raw = Vec::with_capacity(m);
    // Gaussian draws are independent with probability one; a few spares
    // guard against numerically dependent draws.
    let mut attempts = 0;
    let mut pair = SubspacePair {
        space: space.clone(),
        basis: Vec::new(),
        norm_bound_range: (1.0, f64::INFINITY),
    };
    while pair.dim_plus() < m && attempts < m + 16 {
        raw.push(Field::random_gaussian(space.clone(), &mut rng));
        attempts += 1;
        pair = build_subspace(space.clone(), &raw)?;
    }
    if pair.dim_plus() != m {
        return Err(Error::ContractViolation(format!(
            "random subspace reached dimension {} instead of {m}",
            pair.dim_plus()
        )));
    }
    Ok(pair)
}

/// Norm of the power commutator `P(v^(1+eps)) - (P v)^(1+eps)` in `L^s`,
/// together with its ratio against `|eps| * ||v^(1+eps)||_s`.
///
/// The ratio is defined as 0 when `eps = 0` or `v = 0`.
pub fn commutator_defect(
    subspace: &SubspacePair,
    sign: Sign,
    v: &Field,
    eps: f64,
    s: f64,
) -> Result<(f64, f64)> {
    if !(1.0 + eps > 0.0) {
        return Err(Error::Domain(format!("power 1 + eps must be positive, got eps = {eps}")));
    }
    let power = 1.0 + eps;
    let projected_then_powered = subspace.project(sign, v)?.s_power(power)?;
    let powered_then_projected = subspace.project(sign, &v.s_power(power)?)?;
    let defect = norm_s(&powered_then_projected.try_sub(&projected_then_powered)?, s)?;
    let denom = eps.abs() * norm_s(&v.s_power(power)?, s)?;
    let ratio = if denom == 0.0 { 0.0 } else { defect / denom };
    Ok((defect, ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{distribution, ScalarField};

    fn space(weights: &[f64], d: usize) -> Arc<MeasureSpace> {
        MeasureSpace::new(weights.to_vec(), d).unwrap()
    }

    fn field(sp: &Arc<MeasureSpace>, vals: &[f64]) -> Field {
        Field::new(sp.clone(), vals.to_vec()).unwrap()
    }

    #[test]
    fn build_subspace_examples() {
        let sp = space(&[1.0, 1.0], 1);
        let pair = build_subspace(sp.clone(), &[field(&sp, &[1.0, 1.0])]).unwrap();
        assert_eq!(pair.dim_plus(), 1);
        let e = &pair.basis()[0];
        let r = 1.0 / 2.0_f64.sqrt();
        assert!((e.values()[0] - r).abs() < 1e-14 && (e.values()[1] - r).abs() < 1e-14);

        let empty = build_subspace(sp.clone(), &[]).unwrap();
        assert_eq!(empty.dim_plus(), 0);

        let dup = build_subspace(
            sp.clone(),
            &[field(&sp, &[1.0, 0.0]), field(&sp, &[1.0, 0.0])],
        )
        .unwrap();
        assert_eq!(dup.dim_plus(), 1);
    }

    #[test]
    fn projection_examples() {
        let sp = space(&[1.0, 1.0], 1);
        let full = build_subspace(sp.clone(), &[field(&sp, &[1.0, 0.0]), field(&sp, &[0.0, 1.0])]).unwrap();
        let u = field(&sp, &[0.3, -0.7]);
        let pu = full.project_plus(&u).unwrap();
        for (a, b) in pu.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(norm_s(&full.project_minus(&u).unwrap(), 2.0).unwrap() < 1e-14);

        let trivial = build_subspace(sp.clone(), &[]).unwrap();
        assert!(trivial.project_plus(&u).unwrap().is_zero());

        let diag = build_subspace(sp.clone(), &[field(&sp, &[1.0, 1.0])]).unwrap();
        let u = field(&sp, &[1.0, 0.0]);
        let plus = diag.project_plus(&u).unwrap();
        let minus = diag.project_minus(&u).unwrap();
        assert!((plus.values()[0] - 0.5).abs() < 1e-14 && (plus.values()[1] - 0.5).abs() < 1e-14);
        assert!((minus.values()[0] - 0.5).abs() < 1e-14 && (minus.values()[1] + 0.5).abs() < 1e-14);
    }

    /// Brute-force rank of a matrix by Gaussian elimination; oracle for the
    /// grid gradient space dimension.
    fn rank(mut m: Vec<Vec<f64>>) -> usize {
        let rows = m.len();
        if rows == 0 {
            return 0;
        }
        let cols = m[0].len();
        let mut rank = 0;
        for col in 0..cols {
            let pivot = (rank..rows).max_by(|&a, &b| {
                m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap()
            });
            let Some(pivot) = pivot else { break };
            if m[pivot][col].abs() < 1e-9 {
                continue;
            }
            m.swap(rank, pivot);
            for r in 0..rows {
                if r != rank && m[r][col].abs() > 0.0 {
                    let f = m[r][col] / m[rank][col];
                    for c in col..cols {
                        m[r][c] -= f * m[rank][c];
                    }
                }
            }
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }

    #[test]
    fn grid_hodge_dimension_matches_incidence_rank() {
        for (rows, cols) in [(2, 2), (2, 3), (3, 3)] {
            let edges = grid_edges(rows, cols);
            let (_, pair) = grid_hodge(rows, cols, &vec![1.0; edges.len()]).unwrap();
            let raw = grid_gradient_raw_basis(rows, cols);
            assert_eq!(pair.dim_plus(), rank(raw), "grid {rows}x{cols}");
            assert_eq!(pair.dim_plus(), rows * cols - 1);
        }
    }

    #[test]
    fn grid_hodge_cycle_field_is_orthogonal_to_gradients() {
        // 2x2 grid, unit weights. Edge order: (0,1),(0,2),(1,3),(2,3).
        // Walking the square 0 -> 1 -> 3 -> 2 -> 0 uses edges with signs
        // +1, +1, -1, -1 against their lexicographic orientations.
        let (sp, pair) = grid_hodge(2, 2, &[1.0; 4]).unwrap();
        let cycle = field(&sp, &[1.0, -1.0, 1.0, -1.0]);
        // Oracle: direct summation against every vertex gradient.
        for raw in grid_gradient_raw_basis(2, 2) {
            let g = field(&sp, &raw);
            assert!(inner(&g, &cycle).unwrap().abs() < 1e-14);
        }
        let proj = pair.project_plus(&cycle).unwrap();
        assert!(norm_s(&proj, 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn grid_hodge_minus_part_is_weighted_divergence_free() {
        let mut rng = SplitMix64::new(5);
        let edges = grid_edges(3, 4);
        let weights: Vec<f64> = (0..edges.len()).map(|_| rng.next_range(0.5, 2.0)).collect();
        let (sp, pair) = grid_hodge(3, 4, &weights).unwrap();
        let u = Field::random_gaussian(sp.clone(), &mut rng);
        let minus = pair.project_minus(&u).unwrap();
        // Orthogonality to every gradient means w .* minus is a circulation:
        // at every vertex the signed weighted flux sums to zero.
        let mut flux = vec![0.0; 12];
        for (e, &(tail, head)) in edges.iter().enumerate() {
            let val = weights[e] * minus.values()[e];
            flux[head] += val;
            flux[tail] -= val;
        }
        for f in flux {
            assert!(f.abs() < 1e-10, "vertex flux {f}");
        }
    }

    #[test]
    fn random_subspace_determinism_and_edges() {
        let sp = space(&[1.0, 0.5, 2.0], 2);
        let a = random_subspace(sp.clone(), 3, 77).unwrap();
        let b = random_subspace(sp.clone(), 3, 77).unwrap();
        for (x, y) in a.basis().iter().zip(b.basis()) {
            assert_eq!(x.values(), y.values());
        }
        assert_eq!(random_subspace(sp.clone(), 0, 1).unwrap().dim_plus(), 0);
        assert_eq!(random_subspace(sp.clone(), 6, 1).unwrap().dim_plus(), 6);
        assert!(random_subspace(sp, 7, 1).is_err());
    }

    #[test]
    fn projection_structure_on_random_fields() {
        let mut rng = SplitMix64::new(12);
        let sp = space(&[0.7, 1.3, 2.0, 0.5], 2);
        let pair = random_subspace(sp.clone(), 3, 9).unwrap();
        for (j, ej) in pair.basis().iter().enumerate() {
            for (k, ek) in pair.basis().iter().enumerate() {
                let g = inner(ej, ek).unwrap();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10);
            }
        }
        for _ in 0..20 {
            let u = Field::random_gaussian(sp.clone(), &mut rng);
            let v = Field::random_gaussian(sp.clone(), &mut rng);
            let pu = pair.project_plus(&u).unwrap();
            let ppu = pair.project_plus(&pu).unwrap();
            let scale = norm_s(&u, 2.0).unwrap();
            assert!(norm_s(&ppu.try_sub(&pu).unwrap(), 2.0).unwrap() <= 1e-10 * scale);
            // Complementarity: minus is defined as u - plus, so the sum
            // reproduces u up to two roundings per entry.
            let mu = pair.project_minus(&u).unwrap();
            let sum = pu.try_add(&mu).unwrap();
            for (x, y) in sum.values().iter().zip(u.values()) {
                assert!((x - y).abs() <= 1e-13 * scale);
            }
            // Orthogonality and self-adjointness.
            assert!(inner(&pu, &pair.project_minus(&v).unwrap()).unwrap().abs() <= 1e-10 * scale * norm_s(&v, 2.0).unwrap());
            let lhs = inner(&pu, &v).unwrap();
            let rhs = inner(&u, &pair.project_plus(&v).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * scale * norm_s(&v, 2.0).unwrap());
        }
    }

    #[test]
    fn complement_spans_the_rest() {
        let sp = space(&[0.7, 1.3, 2.0], 2);
        let pair = random_subspace(sp.clone(), 2, 4).unwrap();
        let comp = pair.complement().unwrap();
        assert_eq!(comp.dim_plus(), 4);
        for e in comp.basis() {
            assert!(norm_s(&pair.project_plus(e).unwrap(), 2.0).unwrap() < 1e-10);
            assert!((inner(e, e).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn commutator_defect_examples() {
        let sp = space(&[1.0, 1.0, 1.0], 1);
        let pair = random_subspace(sp.clone(), 1, 3).unwrap();
        let mut rng = SplitMix64::new(10);
        let v = Field::random_gaussian(sp.clone(), &mut rng);

        let (d0, r0) = commutator_defect(&pair, Sign::Plus, &v, 0.0, 2.0).unwrap();
        assert_eq!((d0, r0), (0.0, 0.0));

        let full = random_subspace(sp.clone(), 3, 3).unwrap();
        let (df, _) = commutator_defect(&full, Sign::Plus, &v, 0.3, 2.0).unwrap();
        assert!(df < 1e-12, "identity commutes with powers, defect {df}");

        assert!(commutator_defect(&pair, Sign::Minus, &v, -1.0, 2.0).is_err());
    }

    #[test]
    fn commutator_defect_matches_direct_recomputation() {
        // The oracle is the definition itself, recomputed from primitives.
        let weights = [1.0, 2.0, 0.5, 1.5];
        let (sp, pair) = grid_hodge(2, 2, &weights).unwrap();
        let mut rng = SplitMix64::new(2024);
        let v = Field::random_gaussian(sp.clone(), &mut rng);
        for eps in [0.1, -0.1] {
            let (defect, ratio) = commutator_defect(&pair, Sign::Minus, &v, eps, 2.0).unwrap();
            let power = 1.0 + eps;
            let lhs = pair.project_minus(&v.s_power(power).unwrap()).unwrap();
            let rhs = pair.project_minus(&v).unwrap().s_power(power).unwrap();
            let want: f64 = lhs
                .values()
                .iter()
                .zip(rhs.values())
                .zip(sp.weights())
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!((defect - want).abs() <= 1e-12 * want.max(1.0));
            assert!(ratio.is_finite() && ratio > 0.0);
        }
        // Stability under halving.
        let (_, r1) = commutator_defect(&pair, Sign::Minus, &v, 0.1, 2.0).unwrap();
        let (_, r2) = commutator_defect(&pair, Sign::Minus, &v, 0.05, 2.0).unwrap();
        assert!(r2 < 4.0 * r1 && r1 < 4.0 * r2);
    }

    #[test]
    fn operator_norms_are_at_least_one_for_proper_subspaces() {
        let sp = space(&[1.0, 2.0, 0.5, 1.0], 1);
        let pair = random_subspace(sp, 2, 8).unwrap();
        let rows = pair.measure_operator_norms(&[1.5, 2.0, 3.0], 32, 5).unwrap();
        for (s, np, nm) in rows {
            assert!(np.is_finite() && nm.is_finite());
            assert!(np > 0.5 && nm > 0.5, "s={s} norms ({np}, {nm})");
            if s == 2.0 {
                assert!(np <= 1.0 + 1e-10 && nm <= 1.0 + 1e-10);
            }
        }
    }

    #[test]
    fn distribution_of_projection_magnitude_is_monotone() {
        // Smoke link between modules: magnitudes feed distribution functions.
        let sp = space(&[1.0, 1.0], 1);
        let pair = build_subspace(sp.clone(), &[field(&sp, &[1.0, 1.0])]).unwrap();
        let u = field(&sp, &[2.0, 0.0]);
        let mag = pair.project_plus(&u).unwrap().magnitude();
        let g = ScalarField::new(sp, mag.values().to_vec()).unwrap();
        assert!(distribution(&g, 0.5).unwrap() >= distribution(&g, 1.5).unwrap());
    }
}
