//! δ-perturbations of a model and sweeps over their size.
//!
//! A perturbation rescales (or shifts) the matrices of chosen species by a
//! factor controlled by a bump `ψ(x) ∈ [0,1]`. Multiplicative factors are
//! saturated so that `‖A(x) − A^δ(x)‖ ≤ ψ(x)δ` holds at every state, not
//! only where `‖A(x)‖` is small.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{two_species_check, ConditionVerdict, TwoSpeciesOptions};
use crate::dynamics::{permanence_test, VerdictKind};
use crate::error::{Error, Result};
use crate::linalg::op_norm;
use crate::model::{Projection, SignPattern, StructuredModel, StructuredState, TrapBox};

/// Cubic smoothstep on `[0,1]`.
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Bump {
    /// `ψ ≡ 1`.
    One,
    /// 1 on `[0, inner]`, 0 outside `[0, outer]`, smoothstep in between
    /// along the worst coordinate.
    Box { inner: Vec<f64>, outer: Vec<f64> },
    /// 1 when `min_i ‖x^i‖ ≤ r_in`, 0 when it is `≥ r_out`.
    Boundary { r_in: f64, r_out: f64 },
}

impl Bump {
    pub fn eval(&self, x: &StructuredState) -> f64 {
        match self {
            Bump::One => 1.0,
            Bump::Box { inner, outer } => {
                let s = x
                    .as_slice()
                    .iter()
                    .zip(inner.iter().zip(outer))
                    .map(|(v, (a, b))| (v - a) / (b - a))
                    .fold(0.0, f64::max);
                1.0 - smoothstep(s)
            }
            Bump::Boundary { r_in, r_out } => {
                let n = (0..x.species_count()).map(|i| x.norm(i)).fold(f64::INFINITY, f64::min);
                1.0 - smoothstep((n - r_in) / (r_out - r_in))
            }
        }
    }

    fn check(&self, width: usize) -> Result<()> {
        match self {
            Bump::One => Ok(()),
            Bump::Box { inner, outer } => {
                if inner.len() != width || outer.len() != width {
                    return Err(Error::Dimension(format!("bump boxes need {width} coordinates")));
                }
                if inner.iter().zip(outer).any(|(a, b)| !(0.0 <= *a && a < b && b.is_finite())) {
                    return Err(Error::InvalidSpec("bump boxes need 0 ≤ inner < outer".into()));
                }
                Ok(())
            }
            Bump::Boundary { r_in, r_out } => {
                if !(0.0 <= *r_in && r_in < r_out && r_out.is_finite()) {
                    return Err(Error::InvalidSpec("boundary bump needs 0 ≤ r_in < r_out".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Scale by `max(e^{−ψδ/2}, 1 − ψδ/‖A‖)`.
    Suppress,
    /// Scale by `min(e^{ψδ/2}, 1 + ψδ/‖A‖)`.
    Inflate,
    /// Add `sign·ψδ/k` to each of the `k` positive entries of every row.
    Additive { sign: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub delta: f64,
    pub bump: Bump,
    /// 0-based species whose matrices are perturbed.
    pub targets: Vec<usize>,
    pub mode: PerturbationMode,
}

impl PerturbationSpec {
    fn check(&self, model: &StructuredModel) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidSpec(format!("δ must be finite and nonnegative, got {}", self.delta)));
        }
        if let Some(&i) = self.targets.iter().find(|&&i| i >= model.species_count()) {
            return Err(Error::InvalidSpec(format!("target species {} does not exist", i + 1)));
        }
        if let PerturbationMode::Additive { sign } = self.mode {
            if !(sign == 1.0 || sign == -1.0) {
                return Err(Error::InvalidSpec("additive sign must be +1 or -1".into()));
            }
        }
        self.bump.check(model.dimension())
    }

    fn factor(&self, psi: f64, norm: f64) -> f64 {
        let d = psi * self.delta;
        match self.mode {
            PerturbationMode::Suppress if norm > 0.0 => (-d / 2.0).exp().max(1.0 - d / norm),
            PerturbationMode::Suppress => (-d / 2.0).exp(),
            PerturbationMode::Inflate if norm > 0.0 => (d / 2.0).exp().min(1.0 + d / norm),
            PerturbationMode::Inflate => 1.0,
            PerturbationMode::Additive { .. } => 1.0,
        }
    }

    fn apply(&self, species: usize, x: &StructuredState, a: DMatrix<f64>) -> (DMatrix<f64>, f64) {
        if !self.targets.contains(&species) {
            return (a, 1.0);
        }
        let psi = self.bump.eval(x);
        match self.mode {
            PerturbationMode::Additive { sign } => {
                let mut out = a;
                for mut row in out.row_iter_mut() {
                    let k = row.iter().filter(|v| **v > 0.0).count();
                    if k == 0 {
                        continue;
                    }
                    let shift = sign * psi * self.delta / k as f64;
                    for v in row.iter_mut().filter(|v| **v > 0.0) {
                        *v += shift;
                    }
                }
                (out, f64::NAN)
            }
            _ => {
                let factor = self.factor(psi, op_norm(&a));
                (a * factor, factor)
            }
        }
    }
}

struct Perturbed {
    base: Arc<dyn Projection>,
    spec: PerturbationSpec,
}

impl Projection for Perturbed {
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        self.spec.apply(species, x, self.base.matrix(species, x)).0
    }

    fn fitness(&self, species: usize, x: &StructuredState) -> Option<Vec<f64>> {
        if matches!(self.spec.mode, PerturbationMode::Additive { .. }) {
            return None;
        }
        let f = self.base.fitness(species, x)?;
        let (_, factor) = self.spec.apply(species, x, self.base.matrix(species, x));
        Some(f.into_iter().map(|v| v * factor).collect())
    }

    fn check_domain(&self, x: &StructuredState) -> Result<()> {
        self.base.check_domain(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationCheck {
    /// The deviation bound is sampled on the trapping box inflated by this.
    pub inflation_radius: f64,
    /// Cap on the number of sampled states.
    pub max_points: usize,
}

impl Default for DeviationCheck {
    fn default() -> Self {
        Self {
            inflation_radius: 1.0,
            max_points: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub model: StructuredModel,
    pub spec: PerturbationSpec,
    /// Largest sampled `‖A(x) − A^δ(x)‖`.
    pub max_deviation: f64,
    pub sampled_states: usize,
}

/// Builds the perturbed model and checks the deviation bound and the sign
/// patterns on a lattice over the inflated trapping box.
///
/// The perturbed model keeps the original box for suppressing perturbations
/// and scales it by `e^δ` otherwise; that box is declared, not derived.
pub fn perturb(model: &StructuredModel, spec: &PerturbationSpec, check: &DeviationCheck) -> Result<Perturbation> {
    spec.check(model)?;
    let inflated = model.trap_box().inflate(check.inflation_radius);
    let width = model.dimension();
    let per_axis = ((check.max_points as f64).powf(1.0 / width as f64).floor() as usize).max(2);
    let grid = inflated.lattice(model.dims(), per_axis, true);

    // (deviation, excess over the bound, state, pattern broken)
    type Sample = (f64, f64, Vec<f64>, bool);
    let outcomes: Vec<Option<Sample>> = grid
        .par_iter()
        .map(|x| {
            // States outside the model's domain (e.g. I + R > N) are skipped.
            let mats = model.matrices(x).ok()?;
            let mut worst = 0.0f64;
            let mut excess = f64::NEG_INFINITY;
            let mut broken = false;
            for &i in &spec.targets {
                let a = &mats[i];
                let (b, _) = spec.apply(i, x, a.clone());
                let dev = op_norm(&(a - &b));
                worst = worst.max(dev);
                // a saturated factor gives ‖A − A^δ‖ = δ up to cancellation in ‖A‖
                excess = excess.max(dev - spec.delta * (1.0 + 1e-12) - 64.0 * f64::EPSILON * op_norm(a));
                broken |= b.iter().any(|v| !(*v >= 0.0)) || SignPattern::of_matrix(&b) != SignPattern::of_matrix(a);
            }
            Some((worst, excess, x.as_slice().to_vec(), broken))
        })
        .collect();

    let mut max_deviation = 0.0f64;
    let mut sampled = 0;
    for (dev, excess, witness, broken) in outcomes.into_iter().flatten() {
        sampled += 1;
        if excess > 0.0 || broken {
            return Err(Error::PerturbationTooLarge {
                delta: spec.delta,
                deviation: dev,
                witness,
            });
        }
        max_deviation = max_deviation.max(dev);
    }
    if sampled == 0 {
        return Err(Error::Contract("no sampled state lies in the model domain".into()));
    }

    let trap = match spec.mode {
        PerturbationMode::Suppress => model.trap_box().clone(),
        _ => {
            let scale = spec.delta.exp();
            TrapBox::new(model.trap_box().upper().iter().map(|u| u * scale).collect())?
        }
    };
    let name = format!("{}+perturbed", model.name());
    let projection = Arc::new(Perturbed {
        base: model.projection().clone(),
        spec: spec.clone(),
    });
    let mut perturbed = model.clone().with_projection(projection, name);
    if spec.mode != PerturbationMode::Suppress {
        perturbed = perturbed.with_trap_box(trap)?;
    }
    Ok(Perturbation {
        model: perturbed,
        spec: spec.clone(),
        max_deviation,
        sampled_states: sampled,
    })
}

/// A perturbation shape with `δ` left open.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Direction {
    pub label: String,
    pub bump: Bump,
    pub targets: Vec<usize>,
    pub mode: PerturbationMode,
}

impl Direction {
    pub fn at(&self, delta: f64) -> PerturbationSpec {
        PerturbationSpec {
            delta,
            bump: self.bump.clone(),
            targets: self.targets.clone(),
            mode: self.mode,
        }
    }
}

/// The fixed `2m + 2` directions: suppress and inflate each species with
/// `ψ ≡ 1`, then suppress and inflate all species near the boundary, where
/// the bump is 1 below a tenth and 0 above a fifth of the smallest block
/// height of the trapping box.
pub fn canonical_directions(model: &StructuredModel) -> Vec<Direction> {
    let m = model.species_count();
    let mut out = Vec::with_capacity(2 * m + 2);
    for i in 0..m {
        out.push(Direction {
            label: format!("suppress-{}", i + 1),
            bump: Bump::One,
            targets: vec![i],
            mode: PerturbationMode::Suppress,
        });
    }
    for i in 0..m {
        out.push(Direction {
            label: format!("inflate-{}", i + 1),
            bump: Bump::One,
            targets: vec![i],
            mode: PerturbationMode::Inflate,
        });
    }
    let upper = model.trap_box().upper();
    let mut offset = 0;
    let mut h = f64::INFINITY;
    for d in model.dims() {
        h = h.min(upper[offset..offset + d].iter().sum());
        offset += d;
    }
    let bump = Bump::Boundary {
        r_in: 0.1 * h,
        r_out: 0.2 * h,
    };
    for (label, mode) in [
        ("suppress-all-boundary", PerturbationMode::Suppress),
        ("inflate-all-boundary", PerturbationMode::Inflate),
    ] {
        out.push(Direction {
            label: label.into(),
            bump: bump.clone(),
            targets: (0..m).collect(),
            mode,
        });
    }
    out
}

#[derive(Debug, Clone)]
pub enum Analysis {
    Permanence {
        eta_grid: Vec<f64>,
        starts: Vec<StructuredState>,
        horizon: usize,
    },
    TwoSpecies(TwoSpeciesOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub delta: f64,
    pub direction: String,
    pub verdict: String,
    pub passed: bool,
    /// Smallest block-norm floor over the starts (permanence analysis).
    pub floor: Option<f64>,
    pub max_deviation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub deltas: Vec<f64>,
    pub directions: Vec<Direction>,
    /// Row-major over `(δ, direction)`.
    pub cells: Vec<SweepCell>,
    /// Largest tested `δ` such that it and every smaller tested `δ` pass in
    /// every direction.
    pub stable_up_to: Option<f64>,
    /// Whether the set of passing `δ` is downward closed.
    pub downward_closed: bool,
    pub summary: String,
}

fn run_cell(model: &StructuredModel, spec: &PerturbationSpec, analysis: &Analysis, label: &str) -> SweepCell {
    let mut cell = SweepCell {
        delta: spec.delta,
        direction: label.to_string(),
        verdict: String::new(),
        passed: false,
        floor: None,
        max_deviation: None,
        error: None,
    };
    let perturbed = match perturb(model, spec, &DeviationCheck::default()) {
        Ok(p) => p,
        Err(e) => {
            cell.verdict = match e {
                Error::PerturbationTooLarge { .. } => "spec-too-large".into(),
                _ => "error".into(),
            };
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    cell.max_deviation = Some(perturbed.max_deviation);
    let outcome = match analysis {
        Analysis::Permanence {
            eta_grid,
            starts,
            horizon,
        } => permanence_test(&perturbed.model, eta_grid, starts, *horizon).map(|v| {
            cell.floor = Some(v.floors.iter().copied().fold(f64::INFINITY, f64::min));
            let name = match v.verdict {
                VerdictKind::PermanentEmpirically => "permanent-empirically",
                VerdictKind::ExtinctionWitness => "extinction-witness",
                VerdictKind::Inconclusive => "inconclusive",
            };
            (name, v.verdict == VerdictKind::PermanentEmpirically)
        }),
        Analysis::TwoSpecies(opts) => two_species_check(&perturbed.model, opts).map(|r| match r.robustly_permanent {
            ConditionVerdict::Passes => ("passes", true),
            ConditionVerdict::Fails => ("fails", false),
            ConditionVerdict::Inconclusive => ("inconclusive", false),
        }),
    };
    match outcome {
        Ok((name, passed)) => {
            cell.verdict = name.into();
            cell.passed = passed;
        }
        Err(e) => {
            cell.verdict = "error".into();
            cell.error = Some(e.to_string());
        }
    }
    cell
}

/// Re-runs `analysis` on every `(δ, direction)` cell. Finite sweeps never
/// establish robustness; the summary says how far no failure was found.
pub fn robustness_sweep(
    model: &StructuredModel,
    deltas: &[f64],
    directions: &[Direction],
    analysis: &Analysis,
) -> Result<SweepReport> {
    if deltas.is_empty() {
        return Err(Error::Contract("sweep needs at least one δ".into()));
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) || deltas[0] < 0.0 {
        return Err(Error::Contract("δ list must be nonnegative and increasing".into()));
    }
    if directions.is_empty() {
        return Err(Error::Contract("sweep needs at least one direction".into()));
    }
    let jobs: Vec<(f64, &Direction)> = deltas
        .iter()
        .flat_map(|&d| directions.iter().map(move |dir| (d, dir)))
        .collect();
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|(d, dir)| run_cell(model, &dir.at(*d), analysis, &dir.label))
        .collect();

    let passes: Vec<bool> = cells
        .chunks(directions.len())
        .map(|row| row.iter().all(|c| c.passed))
        .collect();
    let prefix = passes.iter().take_while(|&&p| p).count();
    let stable_up_to = prefix.checked_sub(1).map(|k| deltas[k]);
    let downward_closed = passes[prefix..].iter().all(|&p| !p);
    let summary = match stable_up_to {
        Some(d) if prefix == deltas.len() => format!("no failure found up to δ* = {d}"),
        Some(d) => format!("no failure found up to δ* = {d}; first failure at δ = {}", deltas[prefix]),
        None => format!("failure at the smallest tested δ = {}", deltas[0]),
    };
    Ok(SweepReport {
        deltas: deltas.to_vec(),
        directions: directions.to_vec(),
        cells,
        stable_up_to,
        downward_closed,
        summary,
    })
}
