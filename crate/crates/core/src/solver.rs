//! Galerkin solver for the monotone system `A(x, a + alpha) = b + beta` with
//! `alpha` in the plus subspace and `beta` in its complement.
//!
//! Expanding `alpha` in the orthonormal plus basis reduces the system to a
//! root-finding problem for the coefficient residual
//! `F_j(c) = <A(., a + alpha) - b, e_j>`, which inherits strict monotonicity
//! from the map and therefore has a unique root. The driver is a damped
//! Newton iteration with Armijo backtracking on `|F|^2`, a smoothed Jacobian
//! with continuation for exponents below 2, and a monotone fixed-point
//! fallback if Newton stalls. Residuals are always evaluated with the exact,
//! unsmoothed map.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::map::{apply_field, audit_axioms, inverse_of, invert_field, MonotoneMap, PPowerMap, INVERT_TOL};
use crate::measure::{
    bracket_power_integral, inner, norm_s, same_space, DataPair, ExponentPair, Field,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::subspace::SubspacePair;

/// Options shared by every solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Relative residual tolerance; the absolute target is `tol * scale(f)`.
    pub tol: f64,
    /// Newton iteration cap.
    pub max_iterations: u32,
    /// `0` keeps the deterministic default initialization; any other value
    /// perturbs it (used by uniqueness checks).
    pub seed_for_init: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iterations: 500, seed_for_init: 0 }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Result of one solve: the solution pair, certification data, and the
/// measured constant of the basic energy estimate.
#[derive(Clone, Debug)]
pub struct SolveReport {
    /// The solution pair `phi = (alpha, beta)`.
    pub phi: DataPair,
    /// Euclidean norm of the coefficient residual, which equals the L2 norm
    /// of the plus-projection of `A(., a + alpha) - b`.
    pub residual_norm: f64,
    pub iterations: u32,
    pub converged: bool,
    /// Absolute residual target used, `tol * scale(f)`.
    pub tolerance: f64,
    /// `int [phi] / int [f]`, with the convention 0 for zero data.
    pub basic_estimate_ratio: f64,
    pub data_bracket_integral: f64,
    pub solution_bracket_integral: f64,
    /// Residual norm per Newton iteration.
    pub trace: Vec<f64>,
    /// Axiom-audit flags for maps without constructive guarantees.
    pub warnings: Vec<String>,
}

/// Residual scale of a data pair: `||a||_p^(p-1) + ||b||_q^(q-1) + 1`.
pub fn residual_scale(f: &DataPair) -> f64 {
    let p = f.exps.p();
    let q = f.exps.q();
    let na = norm_s(&f.a, p).unwrap_or(0.0);
    let nb = norm_s(&f.b, q).unwrap_or(0.0);
    na.powf(p - 1.0) + nb.powf(q - 1.0) + 1.0
}

/// L2 distance between two solution pairs, `||da||_2 + ||db||_2`.
pub fn pair_distance(x: &DataPair, y: &DataPair) -> f64 {
    let da = x.a.try_sub(&y.a).map(|f| norm_s(&f, 2.0).unwrap_or(f64::INFINITY)).unwrap_or(f64::INFINITY);
    let db = x.b.try_sub(&y.b).map(|f| norm_s(&f, 2.0).unwrap_or(f64::INFINITY)).unwrap_or(f64::INFINITY);
    da + db
}

struct Galerkin<'a> {
    basis: &'a [Field],
    map: &'a dyn MonotoneMap,
    base: &'a Field,
    rhs: &'a Field,
}

impl Galerkin<'_> {
    fn field_at(&self, c: &[f64]) -> Field {
        let mut u = self.base.clone();
        for (cj, e) in c.iter().zip(self.basis) {
            u.axpy(*cj, e);
        }
        u
    }

    /// Raw residual field `A(u) - rhs` and its coefficient projection.
    fn residual(&self, u: &Field) -> (Field, DVector<f64>) {
        let mut raw = apply_field(self.map, u);
        for (r, b) in raw.values_mut().iter_mut().zip(self.rhs.values()) {
            *r -= b;
        }
        let f = DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|e| inner(&raw, e).expect("basis on same space")),
        );
        (raw, f)
    }

    fn jacobian(&self, u: &Field, delta: f64) -> DMatrix<f64> {
        let m = self.basis.len();
        let space = u.space();
        let d = space.value_dim();
        let n = space.point_count();
        let mut j = DMatrix::zeros(m, m);
        let mut block = vec![0.0; d * d];
        let mut transformed = vec![0.0; m * d];
        for i in 0..n {
            let w = space.weight(i);
            self.map.jacobian(i, u.at(i), delta, &mut block);
            // transformed[k] = D_i e_k(i)
            for (k, e) in self.basis.iter().enumerate() {
                let ek = e.at(i);
                for r in 0..d {
                    let mut acc = 0.0;
                    for cidx in 0..d {
                        acc += block[r * d + cidx] * ek[cidx];
                    }
                    transformed[k * d + r] = acc;
                }
            }
            for (jj, e) in self.basis.iter().enumerate() {
                let ej = e.at(i);
                for k in 0..m {
                    let mut acc = 0.0;
                    for r in 0..d {
                        acc += ej[r] * transformed[k * d + r];
                    }
                    j[(jj, k)] += w * acc;
                }
            }
        }
        j
    }
}

struct NewtonOutcome {
    coeffs: Vec<f64>,
    raw: Field,
    residual_norm: f64,
    iterations: u32,
    trace: Vec<f64>,
}

fn solve_linear(j: &DMatrix<f64>, f: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(step) = j.clone().lu().solve(f) {
        if step.iter().all(|x| x.is_finite()) {
            return Some(step);
        }
    }
    // Levenberg-style ridge escalation for singular linearizations.
    let scale = j.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
    for nu in [1e-12, 1e-8, 1e-4, 1e-1] {
        let ridged = j + DMatrix::identity(j.nrows(), j.ncols()) * (nu * scale);
        if let Some(step) = ridged.lu().solve(f) {
            if step.iter().all(|x| x.is_finite()) {
                return Some(step);
            }
        }
    }
    None
}

fn newton_galerkin(
    sys: &Galerkin<'_>,
    c0: Vec<f64>,
    target: f64,
    max_iterations: u32,
) -> NewtonOutcome {
    let p = sys.map.degree_exponent();
    let mut c = c0;
    let mut u = sys.field_at(&c);
    let (mut raw, mut fvec) = sys.residual(&u);
    let mut fnorm = fvec.norm();
    let mut trace = vec![fnorm];
    // Aim an order of magnitude below the target so downstream consistency
    // checks (duality, uniqueness) have headroom.
    let fine_target = 0.02 * target;

    let u_rms = norm_s(&u, 2.0).unwrap_or(0.0) / (u.space().total_weight().sqrt());
    let mut delta = if p < 2.0 { 1e-2 * (u_rms + 1e-8) } else { 0.0 };
    let delta_min = if p < 2.0 { 1e-14 * (u_rms + 1.0) } else { 0.0 };
    let mut bumps = 0;

    let mut iterations = 0;
    while iterations < max_iterations {
        if fnorm <= fine_target {
            break;
        }
        let jac = sys.jacobian(&u, delta);
        let Some(step) = solve_linear(&jac, &fvec) else { break };
        let mut lambda = 1.0_f64;
        let mut advanced = false;
        while lambda >= 1e-12 {
            let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
            let ut = sys.field_at(&trial);
            let (rawt, ft) = sys.residual(&ut);
            let fnt = ft.norm();
            if fnt <= fnorm * (1.0 - 1e-4 * lambda) || fnt <= fine_target {
                c = trial;
                u = ut;
                raw = rawt;
                fvec = ft;
                fnorm = fnt;
                advanced = true;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        trace.push(fnorm);
        if advanced {
            delta = (delta * 0.25).max(delta_min);
        } else if p < 2.0 && bumps < 4 {
            // A stalled line search with an exponent below 2 usually means
            // the smoothing radius no longer matches the iterate; re-inflate.
            delta = (delta.max(1e-6 * (u_rms + 1.0))) * 16.0;
            bumps += 1;
        } else {
            break;
        }
    }

    if fnorm > target {
        // Monotone fixed-point fallback: small relaxed steps along -F
        // contract for strongly monotone Lipschitz residuals.
        let mut s = 1e-2 * (c.iter().map(|x| x * x).sum::<f64>().sqrt() + 1.0) / (fnorm + 1e-300);
        let cap = 4 * max_iterations;
        let mut k = 0;
        while fnorm > fine_target && k < cap && s > 1e-300 {
            let trial: Vec<f64> = c.iter().zip(fvec.iter()).map(|(x, f)| x - s * f).collect();
            let (rawt, ft) = sys.residual(&sys.field_at(&trial));
            let fnt = ft.norm();
            if fnt < fnorm {
                c = trial;
                raw = rawt;
                fvec = ft;
                fnorm = fnt;
                s *= 1.25;
                trace.push(fnorm);
            } else {
                s *= 0.5;
            }
            k += 1;
        }
        iterations += k;
    }

    NewtonOutcome { coeffs: c, raw, residual_norm: fnorm, iterations, trace }
}

fn audit_warnings(map: &dyn MonotoneMap, f: &DataPair) -> Vec<String> {
    let mut warnings = Vec::new();
    if !map.axioms_hold_by_construction() {
        let seed = derive_seed(0x0041_5544_4954, f.space().point_count() as u64);
        if let Ok(report) = audit_axioms(map, f.space(), 64, seed) {
            if !report.monotone() {
                warnings.push(format!(
                    "map failed the monotonicity audit (measured constant {:.3e}); solution is best-effort",
                    report.monotonicity_constant
                ));
            }
            if report.homogeneity_residual > 1e-6 {
                warnings.push(format!(
                    "map failed the homogeneity audit (relative defect {:.3e})",
                    report.homogeneity_residual
                ));
            }
        }
    }
    warnings
}

fn make_report(
    phi: DataPair,
    f: &DataPair,
    residual_norm: f64,
    iterations: u32,
    tolerance: f64,
    trace: Vec<f64>,
    warnings: Vec<String>,
) -> Result<SolveReport> {
    let data_bracket = bracket_power_integral(f, 1.0);
    let solution_bracket = bracket_power_integral(&phi, 1.0);
    let ratio = if data_bracket == 0.0 { 0.0 } else { solution_bracket / data_bracket };
    let converged = residual_norm <= tolerance;
    let report = SolveReport {
        phi,
        residual_norm,
        iterations,
        converged,
        tolerance,
        basic_estimate_ratio: ratio,
        data_bracket_integral: data_bracket,
        solution_bracket_integral: solution_bracket,
        trace,
        warnings,
    };
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: report.residual_norm,
            target: tolerance,
        });
    }
    Ok(report)
}

fn check_problem(subspace: &SubspacePair, map: &dyn MonotoneMap, f: &DataPair) -> Result<()> {
    if !same_space(subspace.space(), f.space()) {
        return Err(Error::SpaceMismatch("solve: subspace and data on different spaces".into()));
    }
    let p = map.degree_exponent();
    if (p - f.exps.p()).abs() > 1e-9 * p.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "map degree {p} does not match the data exponent {}",
            f.exps.p()
        )));
    }
    if let Some(pp) = map.as_p_power() {
        pp.validate_for(f.space())?;
    }
    Ok(())
}

fn perturbed_init(c0: &mut [f64], seed: u64) {
    if seed == 0 {
        return;
    }
    let mut rng = SplitMix64::new(seed);
    let rms = (c0.iter().map(|x| x * x).sum::<f64>() / c0.len().max(1) as f64).sqrt();
    let eta = 0.25 * (rms + 1.0);
    for x in c0.iter_mut() {
        *x += eta * rng.next_gaussian();
    }
}

/// Solve `A(x, a + alpha) = b + beta` for `(alpha, beta)` in
/// `plus x minus`. The returned `beta` is the minus-projection of
/// `A(., a + alpha) - b`, so the subspace memberships hold to rounding and
/// the certified residual is exactly the plus part.
pub fn solve_system(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    f: &DataPair,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    check_problem(subspace, map, f)?;
    let scale = residual_scale(f);
    let target = opts.tol * scale;
    let warnings = audit_warnings(map, f);
    let space = f.space().clone();

    if f.is_zero() {
        // Uniqueness plus homogeneity force the zero solution.
        let phi = DataPair::zero(space, f.exps);
        return make_report(phi, f, 0.0, 0, target, vec![0.0], warnings);
    }

    if subspace.dim_plus() == 0 {
        // The whole space is the minus part: alpha = 0, beta = A(a) - b.
        let raw = apply_field(map, &f.a).try_sub(&f.b)?;
        let phi = DataPair::new(Field::zero(space), raw, f.exps)?;
        return make_report(phi, f, 0.0, 0, target, vec![0.0], warnings);
    }

    if subspace.dim_plus() == space.coeff_len() {
        // The minus part is trivial: beta = 0 and alpha solves pointwise.
        let alpha = invert_field(map, &f.b, INVERT_TOL)?.try_sub(&f.a)?;
        let raw = apply_field(map, &f.a.try_add(&alpha)?).try_sub(&f.b)?;
        let residual = norm_s(&raw, 2.0)?;
        let phi = DataPair::new(alpha, Field::zero(space), f.exps)?;
        return make_report(phi, f, residual, 0, target, vec![residual], warnings);
    }

    let sys = Galerkin { basis: subspace.basis(), map, base: &f.a, rhs: &f.b };
    // Initialization: plus-coefficients of B(b) - a.
    let seed_field = invert_field(map, &f.b, INVERT_TOL)?.try_sub(&f.a)?;
    let mut c0: Vec<f64> = subspace
        .basis()
        .iter()
        .map(|e| inner(&seed_field, e).expect("same space"))
        .collect();
    perturbed_init(&mut c0, opts.seed_for_init);

    let outcome = newton_galerkin(&sys, c0, target, opts.max_iterations);
    let alpha = {
        let mut alpha = Field::zero(space.clone());
        for (cj, e) in outcome.coeffs.iter().zip(subspace.basis()) {
            alpha.axpy(*cj, e);
        }
        alpha
    };
    let beta = subspace.project_minus(&outcome.raw)?;
    let phi = DataPair::new(alpha, beta, f.exps)?;
    make_report(phi, f, outcome.residual_norm, outcome.iterations, target, outcome.trace, warnings)
}

/// Solve the system through the inverse map and the complementary Galerkin
/// problem: find `beta` in the minus space with
/// `<B(., b + beta) - a, e> = 0` for the minus basis, then recover
/// `alpha` as the plus part of `B(., b + beta) - a`.
pub fn solve_dual(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    f: &DataPair,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    check_problem(subspace, map, f)?;
    let scale = residual_scale(f);
    let target = opts.tol * scale;
    let warnings = audit_warnings(map, f);
    let space = f.space().clone();
    let inverse = inverse_of(map)?;

    if f.is_zero() {
        let phi = DataPair::zero(space, f.exps);
        return make_report(phi, f, 0.0, 0, target, vec![0.0], warnings);
    }

    let complement = subspace.complement()?;

    if complement.dim_plus() == 0 {
        // No minus directions: beta = 0, alpha solves pointwise.
        let alpha = invert_field(map, &f.b, INVERT_TOL)?.try_sub(&f.a)?;
        let raw = apply_field(map, &f.a.try_add(&alpha)?).try_sub(&f.b)?;
        let residual = norm_s(&raw, 2.0)?;
        let phi = DataPair::new(alpha, Field::zero(space), f.exps)?;
        return make_report(phi, f, residual, 0, target, vec![residual], warnings);
    }

    if complement.dim_plus() == space.coeff_len() {
        let raw = apply_field(map, &f.a).try_sub(&f.b)?;
        let phi = DataPair::new(Field::zero(space), raw, f.exps)?;
        return make_report(phi, f, 0.0, 0, target, vec![0.0], warnings);
    }

    let sys = Galerkin { basis: complement.basis(), map: inverse.as_ref(), base: &f.b, rhs: &f.a };
    let seed_field = invert_field(inverse.as_ref(), &f.a, INVERT_TOL)?.try_sub(&f.b)?;
    let mut c0: Vec<f64> = complement
        .basis()
        .iter()
        .map(|e| inner(&seed_field, e).expect("same space"))
        .collect();
    perturbed_init(&mut c0, opts.seed_for_init);

    let outcome = newton_galerkin(&sys, c0, target, opts.max_iterations);
    let beta = {
        let mut beta = Field::zero(space.clone());
        for (cj, e) in outcome.coeffs.iter().zip(complement.basis()) {
            beta.axpy(*cj, e);
        }
        beta
    };
    let alpha = subspace.project_plus(&outcome.raw)?;
    let phi = DataPair::new(alpha, beta, f.exps)?;
    make_report(phi, f, outcome.residual_norm, outcome.iterations, target, outcome.trace, warnings)
}

/// Report of a nearest-point projection in the `p`-norm.
#[derive(Clone, Debug)]
pub struct ProjectionReport {
    /// The minimizer `alpha` in the plus subspace.
    pub alpha: Field,
    /// Certificate field `(f - alpha)^(p-1)`, which lies in the minus space
    /// at the optimum (stored as its minus projection).
    pub beta: Field,
    pub residual_norm: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Nearest point to `f` in the plus subspace under the weighted `p`-norm.
///
/// Certified by the first-order condition: the plus projection of
/// `(f - alpha)^(p-1)` vanishes to `tol * scale(f)`.
pub fn lp_projection_report(
    subspace: &SubspacePair,
    f: &Field,
    p: f64,
    tol: f64,
) -> Result<ProjectionReport> {
    let exps = ExponentPair::new(p)?;
    let data = DataPair::new(f.scale(-1.0), Field::zero(f.space().clone()), exps)?;
    let map = PPowerMap::new(p)?;
    let report = solve_system(subspace, &map, &data, &SolveOptions::with_tol(tol))?;
    Ok(ProjectionReport {
        alpha: report.phi.a,
        beta: report.phi.b.scale(-1.0),
        residual_norm: report.residual_norm,
        iterations: report.iterations,
        converged: report.converged,
    })
}

/// Convenience wrapper returning just the projection.
pub fn lp_projection(subspace: &SubspacePair, f: &Field, p: f64, tol: f64) -> Result<Field> {
    Ok(lp_projection_report(subspace, f, p, tol)?.alpha)
}

/// The solution operator `f -> phi` with default tolerances.
pub fn riesz_apply(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    f: &DataPair,
) -> Result<DataPair> {
    Ok(solve_system(subspace, map, f, &SolveOptions::default())?.phi)
}

/// The solved pair `H = f + R f`.
pub fn solved_pair(f: &DataPair, phi: &DataPair) -> Result<DataPair> {
    f.try_add(phi)
}

/// The measured constant of the basic energy estimate,
/// `int [phi] / int [f]`, with the convention 0 for zero data.
pub fn basic_estimate_ratio(report: &SolveReport) -> Result<f64> {
    if !report.converged {
        return Err(Error::ContractViolation("basic estimate wants a converged report".into()));
    }
    if report.data_bracket_integral == 0.0 {
        if report.solution_bracket_integral > 0.0 {
            return Err(Error::ContractViolation(
                "zero data produced a nonzero solution".into(),
            ));
        }
        return Ok(0.0);
    }
    Ok(report.solution_bracket_integral / report.data_bracket_integral)
}
