//! Marcinkiewicz machinery: level-set decompositions of data pairs, energy
//! integrands of truncated solutions, pointwise and integral inequality
//! audits, and the weak-type / strong-type constant measurements.
//!
//! The decomposition splits a data pair on the level sets of its bracket
//! `[f] = |a|^p + |b|^q`: the upper part keeps the points with `[f] > t`,
//! the lower part the points with `[f] <= t`. Solving the system for each
//! part separately gives the truncated solved pairs whose energies drive the
//! interpolation estimate. None of the "implied constants" here carry
//! asserted thresholds; identities, orthogonality, nonnegativity, and
//! finiteness are pass/fail, constants are measured and reported.

use crate::error::{Error, Result};
use crate::map::MonotoneMap;
use crate::measure::{
    bracket, bracket_power_integral, distribution, weak_quasinorm, DataPair, ScalarField,
};
use crate::solver::{solve_system, solved_pair, SolveOptions};
use crate::subspace::SubspacePair;

/// Which truncation a quantity refers to: the lower part keeps small bracket
/// values (`[f] <= t`), the upper part the large ones (`[f] > t`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn label(&self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        }
    }
}

/// Exact level-set split of a data pair at threshold `t`.
#[derive(Clone, Debug)]
pub struct SplitPair {
    /// Alive where `[f] > t`.
    pub upper: DataPair,
    /// Alive where `[f] <= t`.
    pub lower: DataPair,
    pub threshold: f64,
}

/// Split `f` on the level sets of its bracket; ties (`[f] = t`) go to the
/// lower part. The two parts have disjoint supports and sum to `f` exactly.
pub fn marcinkiewicz_split(f: &DataPair, t: f64) -> Result<SplitPair> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("split threshold must be >= 0, got {t}")));
    }
    let br = bracket(f);
    let d = f.space().value_dim();
    let mut upper = DataPair::zero(f.space().clone(), f.exps);
    let mut lower = DataPair::zero(f.space().clone(), f.exps);
    for (i, bv) in br.values().iter().enumerate() {
        let dst = if *bv > t { &mut upper } else { &mut lower };
        dst.a.values_mut()[i * d..(i + 1) * d].copy_from_slice(&f.a.values()[i * d..(i + 1) * d]);
        dst.b.values_mut()[i * d..(i + 1) * d].copy_from_slice(&f.b.values()[i * d..(i + 1) * d]);
    }
    Ok(SplitPair { upper, lower, threshold: t })
}

/// The three independent solves at a threshold: the full data and both
/// truncations, with their solved pairs `H = f + R f`.
#[derive(Clone, Debug)]
pub struct TruncatedSolutions {
    pub split: SplitPair,
    pub phi: DataPair,
    pub phi_lower: DataPair,
    pub phi_upper: DataPair,
    pub h: DataPair,
    pub h_lower: DataPair,
    pub h_upper: DataPair,
}

impl TruncatedSolutions {
    pub fn h_side(&self, side: Side) -> &DataPair {
        match side {
            Side::Lower => &self.h_lower,
            Side::Upper => &self.h_upper,
        }
    }

    /// `(||phi - phi_upper - phi_lower||, ||phi||)` in the pair L2 norm; the
    /// additivity defect that vanishes exactly for linear systems.
    pub fn additivity_defect(&self) -> Result<(f64, f64)> {
        let sum = self.phi_upper.try_add(&self.phi_lower)?;
        let diff = self.phi.try_sub(&sum)?;
        Ok((diff.norm2(), self.phi.norm2()))
    }
}

/// Solve the system for `f`, `f_t` (lower), and `f^t` (upper) independently.
pub fn truncated_solutions(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    f: &DataPair,
    t: f64,
    opts: &SolveOptions,
) -> Result<TruncatedSolutions> {
    let split = marcinkiewicz_split(f, t)?;
    let phi = solve_system(subspace, map, f, opts)?.phi;
    let phi_lower = solve_system(subspace, map, &split.lower, opts)?.phi;
    let phi_upper = solve_system(subspace, map, &split.upper, opts)?.phi;
    let h = solved_pair(f, &phi)?;
    let h_lower = solved_pair(&split.lower, &phi_lower)?;
    let h_upper = solved_pair(&split.upper, &phi_upper)?;
    Ok(TruncatedSolutions { split, phi, phi_lower, phi_upper, h, h_lower, h_upper })
}

/// Pointwise energy integrand of a truncation and its weighted integral.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    /// `E(x) = <A - A' | B - B'>`, nonnegative up to rounding by the
    /// monotonicity of the structure map.
    pub integrand: ScalarField,
    pub total: f64,
    pub side: Side,
    pub threshold: f64,
}

/// Energy of a solved pair against a truncated solved pair.
pub fn energy(h: &DataPair, h_trunc: &DataPair, side: Side, threshold: f64) -> Result<EnergyReport> {
    let da = h.a.try_sub(&h_trunc.a)?;
    let db = h.b.try_sub(&h_trunc.b)?;
    let d = h.space().value_dim();
    let values: Vec<f64> = (0..h.space().point_count())
        .map(|i| {
            da.values()[i * d..(i + 1) * d]
                .iter()
                .zip(&db.values()[i * d..(i + 1) * d])
                .map(|(x, y)| x * y)
                .sum()
        })
        .collect();
    let total = values.iter().zip(h.space().weights()).map(|(e, w)| e * w).sum();
    let integrand = ScalarField::new(h.space().clone(), values)?;
    Ok(EnergyReport { integrand, total, side, threshold })
}

/// One point of the pointwise-inequality audit.
#[derive(Clone, Debug)]
pub struct PointwiseAuditRow {
    pub point: usize,
    /// `[H - H']` at the point.
    pub diff_bracket: f64,
    pub energy: f64,
    pub h_bracket: f64,
    pub h_trunc_bracket: f64,
    pub f_bracket: f64,
    pub f_trunc_bracket: f64,
    /// `[H - H'] / (E + [H])`, `0/0 := 0`.
    pub ratio_vs_full: f64,
    /// `[H - H'] / (E + [H'])`, `0/0 := 0`.
    pub ratio_vs_trunc: f64,
}

/// Audit table of the two pointwise inequalities at one threshold.
#[derive(Clone, Debug)]
pub struct PointwiseAudit {
    pub rows: Vec<PointwiseAuditRow>,
    pub max_ratio_vs_full: f64,
    pub max_ratio_vs_trunc: f64,
    pub side: Side,
}

/// Measure the empirical implied constants of the pointwise bounds
/// `[H - H'] << E + [H]` and `[H - H'] << E + [H']`.
pub fn pointwise_audit(
    h: &DataPair,
    h_trunc: &DataPair,
    f: &DataPair,
    f_trunc: &DataPair,
    side: Side,
) -> Result<PointwiseAudit> {
    let diff = h.try_sub(h_trunc)?;
    let diff_br = bracket(&diff);
    let e = energy(h, h_trunc, side, f64::NAN)?;
    let h_br = bracket(h);
    let ht_br = bracket(h_trunc);
    let f_br = bracket(f);
    let ft_br = bracket(f_trunc);
    let ratio = |num: f64, den: f64| if num == 0.0 && den == 0.0 { 0.0 } else { num / den };
    let mut rows = Vec::with_capacity(h.space().point_count());
    let mut max_full = 0.0_f64;
    let mut max_trunc = 0.0_f64;
    for i in 0..h.space().point_count() {
        let num = diff_br.values()[i];
        let ev = e.integrand.values()[i];
        let r_full = ratio(num, ev + h_br.values()[i]);
        let r_trunc = ratio(num, ev + ht_br.values()[i]);
        max_full = max_full.max(r_full);
        max_trunc = max_trunc.max(r_trunc);
        rows.push(PointwiseAuditRow {
            point: i,
            diff_bracket: num,
            energy: ev,
            h_bracket: h_br.values()[i],
            h_trunc_bracket: ht_br.values()[i],
            f_bracket: f_br.values()[i],
            f_trunc_bracket: ft_br.values()[i],
            ratio_vs_full: r_full,
            ratio_vs_trunc: r_trunc,
        });
    }
    Ok(PointwiseAudit { rows, max_ratio_vs_full: max_full, max_ratio_vs_trunc: max_trunc, side })
}

/// Ratio of the integrated truncation energy against its bound
/// `int [g] + int [g]^(1/p) [H]^(1/q) + int [g]^(1/q) [H]^(1/p)`, where `g`
/// is the opposite truncation of the data (`f_t` for the upper energy, `f^t`
/// for the lower energy). `0/0 := 0`.
pub fn energy_estimate_audit(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    f: &DataPair,
    t: f64,
    side: Side,
    opts: &SolveOptions,
) -> Result<f64> {
    let ts = truncated_solutions(subspace, map, f, t, opts)?;
    energy_estimate_audit_solved(&ts, side)
}

/// Same audit on already-computed truncated solutions.
pub fn energy_estimate_audit_solved(ts: &TruncatedSolutions, side: Side) -> Result<f64> {
    let (h_trunc, bound_data) = match side {
        Side::Upper => (&ts.h_upper, &ts.split.lower),
        Side::Lower => (&ts.h_lower, &ts.split.upper),
    };
    let left = energy(&ts.h, h_trunc, side, ts.split.threshold)?.total;
    let g = bracket(bound_data);
    let h_br = bracket(&ts.h);
    let (p, q) = (ts.h.exps.p(), ts.h.exps.q());
    let mut right = 0.0;
    for ((gv, hv), w) in g.values().iter().zip(h_br.values()).zip(ts.h.space().weights()) {
        right += w * (gv + gv.powf(1.0 / p) * hv.powf(1.0 / q) + gv.powf(1.0 / q) * hv.powf(1.0 / p));
    }
    if left == 0.0 && right == 0.0 {
        return Ok(0.0);
    }
    Ok(left / right)
}

/// Weak-type ratio of a solved instance:
/// `sup_t t^lambda meas{[phi] > t} / int [f]^lambda`, `0/0 := 0`.
pub fn weak_type_ratio(phi: &DataPair, f: &DataPair, lambda: f64) -> Result<f64> {
    let num = weak_quasinorm(&bracket(phi), lambda)?;
    let den = bracket_power_integral(f, lambda);
    if den == 0.0 {
        if num > 0.0 {
            return Err(Error::ContractViolation("zero data with a nonzero solution".into()));
        }
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Strong-type ratio of a solved instance:
/// `int [phi]^tau / int [f]^tau`, `0/0 := 0`. At `tau = 1` this is the basic
/// estimate ratio, computed through the same code path bit for bit.
pub fn strong_type_ratio(phi: &DataPair, f: &DataPair, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("strong-type ratio wants tau > 0, got {tau}")));
    }
    let num = bracket_power_integral(phi, tau);
    let den = bracket_power_integral(f, tau);
    if den == 0.0 {
        if num > 0.0 {
            return Err(Error::ContractViolation("zero data with a nonzero solution".into()));
        }
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Largest weak-type ratio over a battery of data pairs on one instance.
pub fn weak_type_constant(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    battery: &[DataPair],
    lambda: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    let mut best = 0.0_f64;
    for f in battery {
        let phi = solve_system(subspace, map, f, opts)?.phi;
        best = best.max(weak_type_ratio(&phi, f, lambda)?);
    }
    Ok(best)
}

/// One row of the strong-type sweep.
#[derive(Clone, Debug)]
pub struct StrongTypeRow {
    pub tau: f64,
    pub constant: f64,
    /// Index (into the battery) of the maximizing instance.
    pub argmax: usize,
    /// `C_tau / max(weak constants at the endpoints)`; the recorded
    /// interpolation shape factor.
    pub shape_factor: f64,
}

/// Measured weak endpoint constants and the strong-type constants over a
/// grid of intermediate exponents.
#[derive(Clone, Debug)]
pub struct TypeConstants {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub weak_minus: f64,
    pub weak_plus: f64,
    pub strong: Vec<StrongTypeRow>,
}

/// Solve a battery once and sweep the strong-type constants over `tau_grid`,
/// recording the weak endpoint constants alongside.
pub fn strong_type_sweep(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    battery: &[DataPair],
    tau_grid: &[f64],
    lambda_minus: f64,
    lambda_plus: f64,
    opts: &SolveOptions,
) -> Result<TypeConstants> {
    if battery.is_empty() {
        return Err(Error::InvalidInput("no instances".into()));
    }
    if tau_grid.is_empty() || tau_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("tau grid must be nonempty, sorted, strictly increasing".into()));
    }
    if !(0.0 < lambda_minus && lambda_minus < lambda_plus) {
        return Err(Error::InvalidInput(format!(
            "lambda endpoints must satisfy 0 < {lambda_minus} < {lambda_plus}"
        )));
    }
    let solved: Vec<DataPair> = battery
        .iter()
        .map(|f| solve_system(subspace, map, f, opts).map(|r| r.phi))
        .collect::<Result<_>>()?;
    let mut weak_minus = 0.0_f64;
    let mut weak_plus = 0.0_f64;
    for (phi, f) in solved.iter().zip(battery) {
        weak_minus = weak_minus.max(weak_type_ratio(phi, f, lambda_minus)?);
        weak_plus = weak_plus.max(weak_type_ratio(phi, f, lambda_plus)?);
    }
    let weak_cap = weak_minus.max(weak_plus);
    let mut strong = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let mut constant = 0.0_f64;
        let mut argmax = 0;
        for (k, (phi, f)) in solved.iter().zip(battery).enumerate() {
            let r = strong_type_ratio(phi, f, tau)?;
            if r > constant {
                constant = r;
                argmax = k;
            }
        }
        let shape_factor = if weak_cap > 0.0 { constant / weak_cap } else { 0.0 };
        strong.push(StrongTypeRow { tau, constant, argmax, shape_factor });
    }
    Ok(TypeConstants { lambda_minus, lambda_plus, weak_minus, weak_plus, strong })
}

/// Exact integral `int_lo^hi t^(tau-1) meas{ g > t } dt` of a step
/// distribution over one segment.
fn levelset_segment_integral(g: &ScalarField, lo: f64, hi: f64, tau: f64) -> Result<f64> {
    let hi_eff = if hi.is_finite() { hi } else { g.max_value().max(lo) };
    if hi_eff <= lo {
        return Ok(0.0);
    }
    let mut cuts: Vec<f64> = g.values().iter().cloned().filter(|v| *v > lo && *v < hi_eff).collect();
    cuts.push(lo);
    cuts.push(hi_eff);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let m = distribution(g, w[0])?;
        acc += m * (w[1].powf(tau) - w[0].powf(tau)) / tau;
    }
    Ok(acc)
}

/// Audit of the level-set integral bound
/// `int_0^inf t^(tau-1) meas{ [H'] > t } dt << int [f]^tau`,
/// where `H'` is the lower truncation when `lambda > 1` (then
/// `1 < tau < lambda`) and the upper truncation when `lambda < 1`
/// (then `lambda < tau < 1`).
///
/// Between consecutive values of `[f]` the split pattern, hence the
/// truncated solve, is constant; the left side is therefore a finite sum of
/// exact per-segment integrals with one solve per segment. Returns the
/// left/right ratio, `0/0 := 0`.
pub fn levelset_integral_audit(
    subspace: &SubspacePair,
    map: &dyn MonotoneMap,
    f: &DataPair,
    lambda: f64,
    tau: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    let position = (tau - 1.0) / (lambda - 1.0);
    if !(position > 0.0 && position < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie strictly between 1 and lambda, got tau = {tau}, lambda = {lambda}"
        )));
    }
    let side = if lambda > 1.0 { Side::Lower } else { Side::Upper };
    let right = bracket_power_integral(f, tau);
    if f.is_zero() {
        return Ok(0.0);
    }

    let mut breakpoints: Vec<f64> = bracket(f).values().iter().cloned().filter(|v| *v > 0.0).collect();
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup();

    let mut segments: Vec<(f64, f64)> = Vec::with_capacity(breakpoints.len() + 1);
    let mut lo = 0.0;
    for &v in &breakpoints {
        segments.push((lo, v));
        lo = v;
    }
    segments.push((lo, f64::INFINITY));

    let mut left = 0.0;
    for &(seg_lo, seg_hi) in &segments {
        let split = marcinkiewicz_split(f, seg_lo)?;
        let data = match side {
            Side::Lower => &split.lower,
            Side::Upper => &split.upper,
        };
        if data.is_zero() {
            continue;
        }
        let phi = solve_system(subspace, map, data, opts)?.phi;
        let h = solved_pair(data, &phi)?;
        left += levelset_segment_integral(&bracket(&h), seg_lo, seg_hi, tau)?;
    }
    if left == 0.0 && right == 0.0 {
        return Ok(0.0);
    }
    Ok(left / right)
}
