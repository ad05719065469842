//! Permanence certificates.
//!
//! For Lotka–Volterra maps the boundary invariant measures that matter are
//! the boundary equilibria, found exhaustively face by face. Given growth
//! vectors `r` at those objects, a certificate is a weight vector `p ≥ 1`
//! with `Σ_i p_i r_i > 0` at every object, found by linear programming.
//! Models without that structure get a "sampled" certificate built from
//! boundary occupation measures.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::boundary_sample;
use crate::error::{Error, Result};
use crate::invasion::{invasion_rate_measure, rate_at_origin};
use crate::model::{ExtinctionFace, StructuredModel};
use crate::zoo::{LotkaVolterraSpec, MetacommunitySpec, Recruitment, SirSpec};

/// Residual allowed on the face equations of an accepted equilibrium.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-10;
/// Face systems with reciprocal condition number below this are degenerate.
const SINGULAR_RCOND: f64 = 1e-12;
/// Optimal LP values at or below this count as non-positive.
const MARGIN_FLOOR: f64 = 1e-12;
/// Largest number of vertex candidates the enumeration route will visit.
const VERTEX_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryEquilibrium {
    pub face: ExtinctionFace,
    /// Equilibrium state, zero off the face.
    pub state: Vec<f64>,
    /// `r = B x̂ + c`; zero on the face up to [`EQUILIBRIUM_RESIDUAL`].
    pub growth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceSolve {
    pub equilibria: Vec<BoundaryEquilibrium>,
    /// Faces whose linear system is singular; equilibria there are unknown.
    pub degenerate: Vec<ExtinctionFace>,
}

/// Every boundary equilibrium of `x ↦ x ∘ exp(Bx + c)` with a strictly
/// positive restriction to its face, the origin included.
pub fn lv_boundary_equilibria(spec: &LotkaVolterraSpec) -> Result<FaceSolve> {
    let m = spec.species_count();
    if m > 20 {
        return Err(Error::Contract(format!("face enumeration needs m ≤ 20, got {m}")));
    }
    let (b, c) = (&spec.b, &spec.c);
    let mut out = FaceSolve {
        equilibria: Vec::new(),
        degenerate: Vec::new(),
    };
    for face in ExtinctionFace::proper_faces(m) {
        let idx: Vec<usize> = face.present().collect();
        let mut state = vec![0.0; m];
        if !idx.is_empty() {
            let sub = crate::linalg::principal_submatrix(b, &idx);
            let svd = sub.clone().svd(false, false);
            let (hi, lo) = (svd.singular_values.max(), svd.singular_values.min());
            if !(lo > SINGULAR_RCOND * hi) {
                out.degenerate.push(face);
                continue;
            }
            let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| -c[i]));
            let Some(sol) = sub.lu().solve(&rhs) else {
                out.degenerate.push(face);
                continue;
            };
            if !sol.iter().all(|&v| v > 0.0) {
                continue;
            }
            for (k, &i) in idx.iter().enumerate() {
                state[i] = sol[k];
            }
        }
        let x = DVector::from_column_slice(&state);
        let growth: Vec<f64> = (b * &x + c).iter().copied().collect();
        let residual = idx.iter().map(|&i| growth[i].abs()).fold(0.0, f64::max);
        if residual > EQUILIBRIUM_RESIDUAL {
            return Err(Error::Contract(format!(
                "equilibrium on face {face} has residual {residual:e}"
            )));
        }
        out.equilibria.push(BoundaryEquilibrium { face, state, growth });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Vertex enumeration for three or fewer species, simplex otherwise.
    Auto,
    VertexEnumeration,
    Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchOptions {
    pub p_max: f64,
    pub route: Route,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            p_max: 1e6,
            route: Route::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    Certified,
    Infeasible,
    EquilibriaIncomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    /// Objects are exact boundary equilibria.
    Equilibria,
    /// Objects are estimated from simulated boundary orbits.
    Sampled,
}

/// A boundary object checked by the certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckedObject {
    pub face: ExtinctionFace,
    pub growth: Vec<f64>,
    /// Per-species estimation uncertainty (sampled objects only).
    pub uncertainty: Option<Vec<f64>>,
    /// `Σ_i p_i r_i` at the reported weights.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermanenceCertificate {
    pub kind: CertificateKind,
    pub status: CertificateStatus,
    /// Weights rescaled so that `min_i p_i = 1`.
    pub weights: Vec<f64>,
    /// Smallest `Σ_i p_i r_i` over the objects at the reported weights.
    pub margin: f64,
    /// Optimal `δ` of the linear program with `1 ≤ p_i ≤ p_max`.
    pub lp_optimum: f64,
    pub route: Route,
    pub p_max: f64,
    pub objects: Vec<CheckedObject>,
    pub degenerate_faces: Vec<ExtinctionFace>,
}

/// Best weights for a set of growth vectors: maximise `δ` subject to
/// `Σ_i p_i r_i ≥ δ` for every object and `1 ≤ p_i ≤ p_max`.
pub fn certificate_search(
    objects: &[(ExtinctionFace, Vec<f64>)],
    opts: &SearchOptions,
) -> Result<PermanenceCertificate> {
    let first = objects
        .first()
        .ok_or_else(|| Error::Contract("certificate search needs at least one object".into()))?;
    let m = first.1.len();
    if m == 0 || objects.iter().any(|(_, r)| r.len() != m) {
        return Err(Error::Dimension("growth vectors must share one nonzero length".into()));
    }
    if objects.iter().any(|(_, r)| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Contract("growth vectors must be finite".into()));
    }
    if !(opts.p_max >= 1.0 && opts.p_max.is_finite()) {
        return Err(Error::Contract(format!("p_max must be finite and at least 1, got {}", opts.p_max)));
    }
    let rows: Vec<&[f64]> = objects.iter().map(|(_, r)| r.as_slice()).collect();
    let route = match opts.route {
        Route::Auto if m <= 3 && vertex_candidates(rows.len(), m) <= VERTEX_BUDGET => Route::VertexEnumeration,
        Route::Auto => Route::Simplex,
        r => r,
    };
    let (p, lp_optimum) = match route {
        Route::VertexEnumeration => {
            if vertex_candidates(rows.len(), m) > VERTEX_BUDGET {
                return Err(Error::Contract("too many constraints for vertex enumeration".into()));
            }
            solve_by_vertices(&rows, opts.p_max)
        }
        _ => solve_by_simplex(&rows, opts.p_max)?,
    };
    let lowest = p.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = p.iter().map(|v| v / lowest).collect();
    let checked: Vec<CheckedObject> = objects
        .iter()
        .map(|(face, r)| CheckedObject {
            face: face.clone(),
            growth: r.clone(),
            uncertainty: None,
            margin: weighted(&weights, r),
        })
        .collect();
    let margin = checked.iter().map(|o| o.margin).fold(f64::INFINITY, f64::min);
    let status = if lp_optimum > MARGIN_FLOOR {
        CertificateStatus::Certified
    } else {
        CertificateStatus::Infeasible
    };
    Ok(PermanenceCertificate {
        kind: CertificateKind::Equilibria,
        status,
        weights,
        margin,
        lp_optimum,
        route,
        p_max: opts.p_max,
        objects: checked,
        degenerate_faces: Vec::new(),
    })
}

fn weighted(p: &[f64], r: &[f64]) -> f64 {
    p.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

fn vertex_candidates(objects: usize, m: usize) -> u64 {
    binomial(objects + 2 * m, m + 1)
}

/// Constraint `a·(p, δ) ≤ b`.
struct Halfspace {
    a: Vec<f64>,
    b: f64,
}

/// Enumerates the vertices of the feasible polyhedron in `(p, δ)`; the
/// polyhedron is bounded in `p` and `δ` is bounded above, so the optimum is
/// attained at a vertex. Ties go to the lexicographically smallest `p`.
fn solve_by_vertices(rows: &[&[f64]], p_max: f64) -> (Vec<f64>, f64) {
    let m = rows[0].len();
    let n = m + 1;
    let mut cons: Vec<Halfspace> = Vec::new();
    for r in rows {
        let mut a: Vec<f64> = r.iter().map(|v| -v).collect();
        a.push(1.0);
        cons.push(Halfspace { a, b: 0.0 });
    }
    for i in 0..m {
        let mut lo = vec![0.0; n];
        lo[i] = -1.0;
        cons.push(Halfspace { a: lo, b: -1.0 });
        let mut hi = vec![0.0; n];
        hi[i] = 1.0;
        cons.push(Halfspace { a: hi, b: p_max });
    }
    let scale = p_max * rows.iter().flat_map(|r| r.iter()).fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-9 * scale;

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut pick = vec![0usize; n];
    for_each_subset(cons.len(), n, &mut pick, 0, 0, &mut |subset| {
        let a = DMatrix::from_fn(n, n, |r, c| cons[subset[r]].a[c]);
        let b = DVector::from_iterator(n, subset.iter().map(|&k| cons[k].b));
        let Some(z) = a.lu().solve(&b) else { return };
        if z.iter().any(|v| !v.is_finite()) {
            return;
        }
        let feasible = cons
            .iter()
            .all(|h| h.a.iter().zip(z.iter()).map(|(x, y)| x * y).sum::<f64>() <= h.b + tol);
        if !feasible {
            return;
        }
        // Snap p into its box and recompute δ exactly from the objects.
        let p: Vec<f64> = z.iter().take(m).map(|v| v.clamp(1.0, p_max)).collect();
        let delta = rows.iter().map(|r| weighted(&p, r)).fold(f64::INFINITY, f64::min);
        let better = match &best {
            None => true,
            Some((bp, bd)) => {
                delta > bd + 1e-12 * scale || (delta >= bd - 1e-12 * scale && p < *bp)
            }
        };
        if better {
            best = Some((p, delta));
        }
    });
    best.expect("p = 1 is always a feasible vertex of the box")
}

fn for_each_subset(n: usize, k: usize, pick: &mut [usize], depth: usize, from: usize, f: &mut impl FnMut(&[usize])) {
    if depth == k {
        f(pick);
        return;
    }
    for i in from..=n - (k - depth) {
        pick[depth] = i;
        for_each_subset(n, k, pick, depth + 1, i + 1, f);
    }
}

fn solve_by_simplex(rows: &[&[f64]], p_max: f64) -> Result<(Vec<f64>, f64)> {
    let m = rows[0].len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let p: Vec<_> = (0..m).map(|_| lp.add_var(0.0, (1.0, p_max))).collect();
    let delta = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for r in rows {
        let mut expr: Vec<_> = p.iter().zip(r.iter()).map(|(&v, &c)| (v, c)).collect();
        expr.push((delta, -1.0));
        lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Contract(format!("linear program failed: {e}")))?;
    let weights: Vec<f64> = p.iter().map(|&v| sol[v].clamp(1.0, p_max)).collect();
    let value = rows.iter().map(|r| weighted(&weights, r)).fold(f64::INFINITY, f64::min);
    Ok((weights, value))
}

/// Certificate for a Lotka–Volterra map from its boundary equilibria.
pub fn certify_lv(spec: &LotkaVolterraSpec, opts: &SearchOptions) -> Result<PermanenceCertificate> {
    let faces = lv_boundary_equilibria(spec)?;
    let objects: Vec<(ExtinctionFace, Vec<f64>)> = faces
        .equilibria
        .iter()
        .map(|e| (e.face.clone(), e.growth.clone()))
        .collect();
    let mut cert = certificate_search(&objects, opts)?;
    if !faces.degenerate.is_empty() {
        cert.status = CertificateStatus::EquilibriaIncomplete;
    }
    cert.degenerate_faces = faces.degenerate;
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingOptions {
    /// Starts per nonempty proper face.
    pub starts_per_face: usize,
    pub horizon: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            starts_per_face: 8,
            horizon: 20_000,
        }
    }
}

/// Certificate whose objects are occupation measures of simulated boundary
/// orbits. Present species get rate zero on their own face; absent species
/// use the estimated invasion rate and carry its uncertainty.
pub fn certify_sampled(
    model: &StructuredModel,
    sampling: &SamplingOptions,
    opts: &SearchOptions,
) -> Result<PermanenceCertificate> {
    let m = model.species_count();
    let mut objects = Vec::new();
    let mut uncertainties = Vec::new();
    for face in ExtinctionFace::proper_faces(m) {
        for mu in boundary_sample(model, &face, sampling.starts_per_face, sampling.horizon)? {
            let mut growth = vec![0.0; m];
            let mut spread = vec![0.0; m];
            for i in face.absent() {
                let est = invasion_rate_measure(model, i, &mu, Some(&face))?;
                growth[i] = est.value;
                spread[i] = est.uncertainty;
            }
            objects.push((face.clone(), growth));
            uncertainties.push(spread);
        }
    }
    if objects.iter().any(|(_, r)| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Contract("a sampled invasion rate is not finite".into()));
    }
    let mut cert = certificate_search(&objects, opts)?;
    cert.kind = CertificateKind::Sampled;
    for (obj, u) in cert.objects.iter_mut().zip(uncertainties) {
        obj.uncertainty = Some(u);
    }
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionVerdict {
    Passes,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub label: String,
    /// Worst value found (max at the origin, min over sampled measures).
    pub value: f64,
    pub uncertainty: f64,
    pub verdict: ConditionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSpeciesReport {
    pub conditions: Vec<Condition>,
    pub robustly_permanent: ConditionVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSpeciesOptions {
    pub sampling: SamplingOptions,
    /// Values within this distance of zero are inconclusive.
    pub tolerance: f64,
}

impl Default for TwoSpeciesOptions {
    fn default() -> Self {
        Self {
            sampling: SamplingOptions::default(),
            tolerance: 1e-3,
        }
    }
}

fn classify(value: f64, uncertainty: f64, tolerance: f64) -> ConditionVerdict {
    let band = tolerance.max(uncertainty);
    if value > band {
        ConditionVerdict::Passes
    } else if value < -band {
        ConditionVerdict::Fails
    } else {
        ConditionVerdict::Inconclusive
    }
}

/// The three conditions characterising robust permanence of two species:
/// someone grows at the origin, and each species invades every measure on
/// the other's face.
pub fn two_species_check(model: &StructuredModel, opts: &TwoSpeciesOptions) -> Result<TwoSpeciesReport> {
    if model.species_count() != 2 {
        return Err(Error::Contract(format!(
            "two-species check needs 2 species, model has {}",
            model.species_count()
        )));
    }
    let origin: Vec<_> = (0..2).map(|i| rate_at_origin(model, i)).collect::<Result<_>>()?;
    let best = if origin[0].value >= origin[1].value { &origin[0] } else { &origin[1] };
    let mut conditions = vec![Condition {
        label: "max_i r_i(0) > 0".into(),
        value: best.value,
        uncertainty: 0.0,
        verdict: classify(best.value, 0.0, opts.tolerance),
    }];
    for (resident, invader) in [(0usize, 1usize), (1, 0)] {
        let face = ExtinctionFace::new(2, [resident]);
        let measures = boundary_sample(model, &face, opts.sampling.starts_per_face, opts.sampling.horizon)?;
        let mut worst = (f64::INFINITY, 0.0);
        for mu in &measures {
            let est = invasion_rate_measure(model, invader, mu, Some(&face))?;
            if est.value < worst.0 {
                worst = (est.value, est.uncertainty);
            }
        }
        conditions.push(Condition {
            label: format!("r_{} > 0 on face {face}", invader + 1),
            value: worst.0,
            uncertainty: worst.1,
            verdict: classify(worst.0, worst.1, opts.tolerance),
        });
    }
    let robustly_permanent = if conditions.iter().all(|c| c.verdict == ConditionVerdict::Passes) {
        ConditionVerdict::Passes
    } else if conditions.iter().any(|c| c.verdict == ConditionVerdict::Fails) {
        ConditionVerdict::Fails
    } else {
        ConditionVerdict::Inconclusive
    };
    Ok(TwoSpeciesReport {
        conditions,
        robustly_permanent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SirThreshold {
    /// `x̄ = (1/c)(1/√(1−e^{−m}) − 1)` as printed in the threshold.
    pub x_bar: f64,
    /// `e^{−m} β x̄`.
    pub value: f64,
    /// Disease-free fixed point `(1/c)(1/(1−e^{−m}) − 1)`.
    pub exact_x_bar: f64,
    /// `e^{−m} β x̄` at the exact fixed point.
    pub exact_value: f64,
    /// `ln(f(0) + e^{−m})`.
    pub r1_origin: f64,
    /// `exact_value > 1` and `r1_origin > 0`.
    pub certified: bool,
}

/// Closed-form permanence threshold for the SIR model with `f(x) = 1/(1+cx)`.
pub fn sir_threshold(spec: &SirSpec) -> Result<SirThreshold> {
    let Recruitment::Rational { c } = spec.recruitment else {
        return Err(Error::InvalidSpec("the closed-form threshold needs rational recruitment".into()));
    };
    if !(c > 0.0 && spec.mortality > 0.0 && spec.contact > 0.0) {
        return Err(Error::InvalidSpec("c, m and β must be positive".into()));
    }
    let s = spec.survival();
    let dead = -(-spec.mortality).exp_m1();
    let x_bar = (1.0 / dead.sqrt() - 1.0) / c;
    let exact_x_bar = (1.0 / dead - 1.0) / c;
    let value = s * spec.contact * x_bar;
    let exact_value = s * spec.contact * exact_x_bar;
    let r1_origin = (1.0 + s).ln();
    Ok(SirThreshold {
        x_bar,
        value,
        exact_x_bar,
        exact_value,
        r1_origin,
        certified: exact_value > 1.0 && r1_origin > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaCondition {
    /// `max_j c^j_1 − B^j_12 c^j_2 / B^j_22`.
    pub v1: f64,
    /// `max_j c^j_2 − B^j_21 c^j_1 / B^j_11`.
    pub v2: f64,
    pub certified: bool,
    pub caveat: String,
}

/// Patch-wise mutual invasion test for the two-species metacommunity.
pub fn meta_condition(spec: &MetacommunitySpec) -> MetaCondition {
    let best = |f: &dyn Fn(&DMatrix<f64>, &[f64; 2]) -> f64| {
        spec.competition
            .iter()
            .zip(&spec.growth)
            .map(|(b, c)| f(b, c))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let v1 = best(&|b, c| c[0] - b[(0, 1)] * c[1] / b[(1, 1)]);
    let v2 = best(&|b, c| c[1] - b[(1, 0)] * c[0] / b[(0, 0)]);
    MetaCondition {
        v1,
        v2,
        certified: v1 > 0.0 && v2 > 0.0,
        caveat: "valid only for dispersal sufficiently close to the identity; the distance is not quantified".into(),
    }
}
