//! Orbits, empirical occupation measures and the finite-horizon permanence
//! verdict.
//!
//! Everything here is deterministic: start grids are lattices or Halton
//! points, never random draws.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ExtinctionFace, StructuredModel, StructuredState};

/// Orbits whose block norms exceed this multiple of the box height are
/// flagged as diverging.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
/// Occupation measures keep raw atoms up to this many states.
pub const MAX_ATOMS: usize = 1_000_000;
/// Longest period recognised when compressing a trajectory tail.
pub const MAX_PERIOD: usize = 64;

/// Default burn-in: a tenth of the horizon.
pub fn default_burn_in(horizon: usize) -> usize {
    horizon / 10
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFailure {
    pub step: usize,
    pub message: String,
}

/// `states[k] = Φ^k(x0)` for `k = 0..=horizon`, stored row-major.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dims: Vec<usize>,
    width: usize,
    data: Vec<f64>,
    horizon: usize,
    burn_in: usize,
    pub diverged: bool,
    pub underflowed: bool,
    /// Set when the evaluator failed; the trajectory is truncated there.
    pub failure: Option<StepFailure>,
    /// Visited states whose matrices broke the declared sign pattern.
    pub pattern_mismatches: usize,
}

impl Trajectory {
    /// Number of stored states (`horizon + 1` unless truncated).
    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    pub fn state(&self, k: usize) -> StructuredState {
        StructuredState::from_flat(&self.dims, self.row(k).to_vec()).expect("stored states are valid")
    }

    pub fn start(&self) -> StructuredState {
        self.state(0)
    }

    pub fn last(&self) -> StructuredState {
        self.state(self.len() - 1)
    }

    /// Indices of the averaging window `burn_in..horizon` (clipped when the
    /// trajectory was truncated).
    pub fn window(&self) -> std::ops::Range<usize> {
        let end = self.horizon.min(self.len().saturating_sub(1));
        self.burn_in.min(end)..end
    }

    /// ℓ¹ norm of block `i` at step `k`.
    pub fn block_norm(&self, k: usize, i: usize) -> f64 {
        let start: usize = self.dims[..i].iter().sum();
        self.row(k)[start..start + self.dims[i]].iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width)
    }
}

/// Iterates the model `horizon` steps from `x0`.
///
/// Precondition failures are errors; evaluator failures truncate the
/// trajectory and are recorded in [`Trajectory::failure`].
pub fn simulate(model: &StructuredModel, x0: &StructuredState, horizon: usize, burn_in: usize) -> Result<Trajectory> {
    if horizon <= burn_in {
        return Err(Error::Contract(format!("horizon {horizon} must exceed burn-in {burn_in}")));
    }
    if x0.dims() != model.dims() {
        return Err(Error::Dimension(format!(
            "start blocks {:?} do not match model blocks {:?}",
            x0.dims(),
            model.dims()
        )));
    }
    let width = x0.dim();
    let m = model.species_count();
    let ceiling = DIVERGENCE_FACTOR * model.trap_box().height();
    let mut traj = Trajectory {
        dims: model.dims().to_vec(),
        width,
        data: Vec::with_capacity((horizon + 1) * width),
        horizon,
        burn_in,
        diverged: false,
        underflowed: false,
        failure: None,
        pattern_mismatches: 0,
    };
    traj.data.extend_from_slice(x0.as_slice());
    let mut x = x0.clone();
    for k in 0..horizon {
        let next = model.matrices(&x).and_then(|mats| {
            traj.pattern_mismatches += mats
                .iter()
                .zip(model.patterns())
                .filter(|(a, p)| p.mismatch(a).is_some())
                .count();
            model.apply(&x, &mats)
        });
        let y = match next {
            Ok(y) => y,
            Err(e) => {
                traj.failure = Some(StepFailure {
                    step: k,
                    message: e.to_string(),
                });
                break;
            }
        };
        for i in 0..m {
            let (before, after) = (x.norm(i), y.norm(i));
            if after > ceiling {
                traj.diverged = true;
            }
            if before > 0.0 && after < f64::MIN_POSITIVE {
                traj.underflowed = true;
            }
        }
        traj.data.extend_from_slice(y.as_slice());
        x = y;
    }
    Ok(traj)
}

/// How a measure can be regenerated from its orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureOrigin {
    pub start: Vec<f64>,
    pub burn_in: usize,
    pub horizon: usize,
}

/// Weighted atoms approximating `Λ_t(x) = (1/t) Σ_{s<t} δ_{Φ^s(x)}`.
#[derive(Debug, Clone, Serialize)]
pub struct OccupationMeasure {
    dims: Vec<usize>,
    width: usize,
    /// Flattened atom coordinates; empty when the tail was streamed.
    atoms: Vec<f64>,
    weights: Vec<f64>,
    /// Number of averaged states `t`.
    pub horizon: usize,
    pub mean: Vec<f64>,
    /// Per-species minimum block norm over the averaged states.
    pub min_norms: Vec<f64>,
    /// Per-species maximum block norm over the averaged states.
    pub max_norms: Vec<f64>,
    /// Atom order along an exactly periodic tail (fixed point: one atom).
    pub cycle: Option<Vec<usize>>,
    pub origin: Option<MeasureOrigin>,
}

impl OccupationMeasure {
    /// Measure supported on an exact periodic orbit, listed in dynamical
    /// order, with uniform weights.
    pub fn periodic_orbit(points: &[StructuredState]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Contract("a periodic orbit needs at least one point".into()))?;
        let dims = first.dims();
        let width = first.dim();
        let p = points.len();
        let atoms: Vec<f64> = points.iter().flat_map(|x| x.as_slice().iter().copied()).collect();
        let mut measure = Self {
            dims,
            width,
            atoms,
            weights: vec![1.0 / p as f64; p],
            horizon: p,
            mean: Vec::new(),
            min_norms: Vec::new(),
            max_norms: Vec::new(),
            cycle: Some((0..p).collect()),
            origin: None,
        };
        measure.refresh_moments();
        Ok(measure)
    }

    pub fn dirac(x: &StructuredState) -> Self {
        Self::periodic_orbit(std::slice::from_ref(x)).expect("one point")
    }

    fn refresh_moments(&mut self) {
        let m = self.dims.len();
        self.mean = vec![0.0; self.width];
        self.min_norms = vec![f64::INFINITY; m];
        self.max_norms = vec![0.0; m];
        for (k, w) in self.weights.iter().enumerate() {
            let row = &self.atoms[k * self.width..(k + 1) * self.width];
            for (acc, v) in self.mean.iter_mut().zip(row) {
                *acc += w * v;
            }
            let mut offset = 0;
            for (i, d) in self.dims.iter().enumerate() {
                let norm: f64 = row[offset..offset + d].iter().sum();
                self.min_norms[i] = self.min_norms[i].min(norm);
                self.max_norms[i] = self.max_norms[i].max(norm);
                offset += d;
            }
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn is_streamed(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, k: usize) -> StructuredState {
        StructuredState::from_flat(&self.dims, self.atoms[k * self.width..(k + 1) * self.width].to_vec())
            .expect("atoms are valid states")
    }

    pub fn atoms(&self) -> impl Iterator<Item = (StructuredState, f64)> + '_ {
        (0..self.atom_count()).map(move |k| (self.atom(k), self.weights[k]))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Species with positive mass on some atom.
    pub fn species(&self) -> ExtinctionFace {
        ExtinctionFace::new(
            self.dims.len(),
            (0..self.dims.len()).filter(|&i| self.max_norms[i] > crate::model::EXTINCTION_THRESHOLD),
        )
    }

    /// True when all absent blocks of `face` vanish identically on the
    /// support (checked through the recorded norm maxima when streamed).
    pub fn supported_on(&self, face: &ExtinctionFace) -> bool {
        face.absent().all(|i| self.max_norms[i] == 0.0)
    }

    /// Total-variation distance `sup_B |μ(B) − ν(B)|` between atomic measures.
    pub fn total_variation(&self, other: &OccupationMeasure) -> Result<f64> {
        if self.is_streamed() || other.is_streamed() {
            return Err(Error::Contract("total variation needs atomic measures".into()));
        }
        let mut diff: HashMap<Vec<u64>, f64> = HashMap::new();
        for (m, sign) in [(self, 1.0), (other, -1.0)] {
            for k in 0..m.atom_count() {
                let key = m.atoms[k * m.width..(k + 1) * m.width].iter().map(|v| v.to_bits()).collect();
                *diff.entry(key).or_insert(0.0) += sign * m.weights[k];
            }
        }
        Ok(0.5 * diff.values().map(|d| d.abs()).sum::<f64>())
    }
}

/// Rounding can stretch a cycle to a multiple of its true period, so points
/// agreeing to this relative tolerance count as the same orbit point.
const PERIOD_TOLERANCE: f64 = 1e-12;

fn same_row(traj: &Trajectory, a: usize, b: usize) -> bool {
    traj.row(a)
        .iter()
        .zip(traj.row(b))
        .all(|(x, y)| (x - y).abs() <= PERIOD_TOLERANCE * x.abs().max(y.abs()))
}

/// Empirical occupation measure of the trajectory's averaging window.
///
/// Periodic tails (period ≤ [`MAX_PERIOD`]) collapse to one atom per
/// orbit point; long tails beyond [`MAX_ATOMS`] keep moments only.
pub fn occupation_measure(traj: &Trajectory) -> Result<OccupationMeasure> {
    let window = traj.window();
    let t = window.len();
    if t == 0 {
        return Err(Error::Contract("trajectory has no post-burn-in states".into()));
    }
    let origin = Some(MeasureOrigin {
        start: traj.row(0).to_vec(),
        burn_in: traj.burn_in,
        horizon: traj.horizon,
    });
    let period = (1..=MAX_PERIOD.min(t))
        .find(|&p| (window.start..window.end - p).all(|k| same_row(traj, k, k + p)));
    let mut measure = OccupationMeasure {
        dims: traj.dims.clone(),
        width: traj.width,
        atoms: Vec::new(),
        weights: Vec::new(),
        horizon: t,
        mean: Vec::new(),
        min_norms: Vec::new(),
        max_norms: Vec::new(),
        cycle: None,
        origin,
    };
    if let Some(p) = period {
        let mut counts = vec![0usize; p];
        for k in 0..t {
            counts[k % p] += 1;
        }
        for k in 0..p {
            measure.atoms.extend_from_slice(traj.row(window.start + k));
        }
        measure.weights = counts.iter().map(|&c| c as f64 / t as f64).collect();
        measure.cycle = Some((0..p).collect());
        measure.refresh_moments();
    } else if t <= MAX_ATOMS {
        for k in window.clone() {
            measure.atoms.extend_from_slice(traj.row(k));
        }
        measure.weights = vec![1.0 / t as f64; t];
        measure.refresh_moments();
    } else {
        let m = traj.dims.len();
        let mut sum = vec![0.0; traj.width];
        let mut min_norms = vec![f64::INFINITY; m];
        let mut max_norms = vec![0.0f64; m];
        for k in window {
            for (acc, v) in sum.iter_mut().zip(traj.row(k)) {
                *acc += v;
            }
            for i in 0..m {
                let n = traj.block_norm(k, i);
                min_norms[i] = min_norms[i].min(n);
                max_norms[i] = max_norms[i].max(n);
            }
        }
        measure.mean = sum.into_iter().map(|s| s / t as f64).collect();
        measure.min_norms = min_norms;
        measure.max_norms = max_norms;
    }
    Ok(measure)
}

/// Radical inverse of `index` in base `base`: the Halton coordinate.
fn radical_inverse(mut index: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut value = 0.0;
    let mut scale = inv;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `n` Halton points on `face`'s slice of the trapping box; absent blocks are
/// zero and present coordinates lie in `(0, upper)`.
pub fn face_starts(model: &StructuredModel, face: &ExtinctionFace, n: usize) -> Vec<StructuredState> {
    let upper = model.trap_box().upper();
    let mut free = Vec::new();
    let mut offset = 0;
    for (i, d) in model.dims().iter().enumerate() {
        if face.contains(i) {
            free.extend(offset..offset + d);
        }
        offset += d;
    }
    assert!(free.len() <= PRIMES.len(), "too many free coordinates for the Halton grid");
    (1..=n)
        .map(|k| {
            let mut values = vec![0.0; upper.len()];
            for (axis, &coord) in free.iter().enumerate() {
                values[coord] = upper[coord] * radical_inverse(k, PRIMES[axis]);
            }
            model.state(values).expect("Halton points are valid states")
        })
        .collect()
}

/// Uniform lattice with `per_axis` levels `upper·k/per_axis`, `k = 1..=per_axis`,
/// on the present coordinates of `face`.
pub fn face_lattice(model: &StructuredModel, face: &ExtinctionFace, per_axis: usize) -> Vec<StructuredState> {
    let mut free = Vec::new();
    for (i, d) in model.dims().iter().enumerate() {
        free.extend(std::iter::repeat_n(face.contains(i), *d));
    }
    crate::model::lattice_over(model.dims(), model.trap_box().upper(), &free, per_axis, false)
}

/// Interior lattice with `per_axis` levels per coordinate, `upper·k/(per_axis+1)`.
/// Points outside the domain, or where a matrix breaks its sign pattern, are dropped.
pub fn interior_grid(model: &StructuredModel, per_axis: usize) -> Vec<StructuredState> {
    let upper = model.trap_box().upper();
    let free = vec![true; upper.len()];
    let shrunk: Vec<f64> = upper.iter().map(|u| u * per_axis as f64 / (per_axis + 1) as f64).collect();
    let mut grid = crate::model::lattice_over(model.dims(), &shrunk, &free, per_axis, false);
    grid.retain(|x| {
        model
            .matrices(x)
            .is_ok_and(|mats| mats.iter().zip(model.patterns()).all(|(a, p)| p.mismatch(a).is_none()))
    });
    grid
}

/// Occupation measures of orbits started on `face` and simulated within it.
pub fn boundary_sample(
    model: &StructuredModel,
    face: &ExtinctionFace,
    n_starts: usize,
    horizon: usize,
) -> Result<Vec<OccupationMeasure>> {
    if face.is_interior() {
        return Err(Error::Contract("boundary sampling needs a proper face".into()));
    }
    let starts = if face.is_empty() {
        vec![model.zero_state()]
    } else {
        face_starts(model, face, n_starts.max(1))
    };
    let burn_in = default_burn_in(horizon);
    starts
        .par_iter()
        .map(|x| {
            let traj = simulate(model, x, horizon, burn_in)?;
            if let Some(f) = &traj.failure {
                return Err(Error::Contract(format!(
                    "boundary orbit failed at step {}: {}",
                    f.step, f.message
                )));
            }
            occupation_measure(&traj)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    PermanentEmpirically,
    ExtinctionWitness,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionWitness {
    pub start: Vec<f64>,
    /// 1-based species label.
    pub species: usize,
    pub final_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermanenceVerdict {
    pub verdict: VerdictKind,
    /// Largest tested repulsion level cleared by every start.
    pub eta: Option<f64>,
    pub witness: Option<ExtinctionWitness>,
    /// Per start: minimum over species and post-burn-in steps of `‖X_t^i‖`.
    pub floors: Vec<f64>,
    pub horizon: usize,
    pub burn_in: usize,
}

/// Finite-horizon proxy for permanence.
///
/// A start is an extinction witness when some species stays below the
/// smallest `η` and never increases over the last half of the horizon.
pub fn permanence_test(
    model: &StructuredModel,
    eta_grid: &[f64],
    starts: &[StructuredState],
    horizon: usize,
) -> Result<PermanenceVerdict> {
    if eta_grid.is_empty() || eta_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Contract("η grid must be nonempty and positive".into()));
    }
    if eta_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Contract("η grid must be strictly decreasing".into()));
    }
    if starts.is_empty() {
        return Err(Error::Contract("no start states".into()));
    }
    if let Some(bad) = starts.iter().find(|x| !x.is_interior()) {
        return Err(Error::Contract(format!("start {bad:?} is not interior")));
    }
    let burn_in = default_burn_in(horizon);
    let eta_min = *eta_grid.last().unwrap();
    let m = model.species_count();

    struct Outcome {
        floor: f64,
        witness: Option<ExtinctionWitness>,
        failed: bool,
    }

    let outcomes: Vec<Outcome> = starts
        .par_iter()
        .map(|x| -> Result<Outcome> {
            let traj = simulate(model, x, horizon, burn_in)?;
            let last = traj.len() - 1;
            let failed = traj.failure.is_some();
            let floor = (burn_in..=last)
                .flat_map(|k| (0..m).map(move |i| (k, i)))
                .map(|(k, i)| traj.block_norm(k, i))
                .fold(f64::INFINITY, f64::min);
            let half = horizon / 2;
            let witness = if failed {
                None
            } else {
                (0..m).find_map(|i| {
                    let tail: Vec<f64> = (half..=last).map(|k| traj.block_norm(k, i)).collect();
                    let below = tail.iter().all(|&n| n < eta_min);
                    let monotone = tail.windows(2).all(|w| w[1] <= w[0]);
                    (below && monotone).then(|| ExtinctionWitness {
                        start: x.as_slice().to_vec(),
                        species: i + 1,
                        final_norm: *tail.last().unwrap(),
                    })
                })
            };
            Ok(Outcome { floor, witness, failed })
        })
        .collect::<Result<_>>()?;

    let floors: Vec<f64> = outcomes.iter().map(|o| o.floor).collect();
    let witness = outcomes.iter().find_map(|o| o.witness.clone());
    let any_failed = outcomes.iter().any(|o| o.failed);
    let eta = (!any_failed)
        .then(|| eta_grid.iter().copied().find(|&eta| floors.iter().all(|&f| f > eta)))
        .flatten();
    let verdict = if witness.is_some() {
        VerdictKind::ExtinctionWitness
    } else if eta.is_some() {
        VerdictKind::PermanentEmpirically
    } else {
        VerdictKind::Inconclusive
    };
    Ok(PermanenceVerdict {
        verdict,
        eta: if witness.is_some() { None } else { eta },
        witness,
        floors,
        horizon,
        burn_in,
    })
}

/// Default repulsion levels tested by [`permanence_test`].
pub const DEFAULT_ETA_GRID: [f64; 8] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{self, fixtures, LotkaVolterraSpec};

    fn ricker(c: f64) -> StructuredModel {
        zoo::build_lv(&LotkaVolterraSpec::from_rows(&[&[-1.0]], &[c]).unwrap()).unwrap()
    }

    #[test]
    fn fixed_point_orbit_is_constant() {
        let m = ricker(1.0);
        let traj = simulate(&m, &m.state(vec![1.0]).unwrap(), 50, 5).unwrap();
        assert_eq!(traj.len(), 51);
        assert!(traj.rows().all(|r| r == [1.0]));
        let mu = occupation_measure(&traj).unwrap();
        assert_eq!(mu.atom_count(), 1);
        assert_eq!(mu.weights(), &[1.0]);
        assert_eq!(mu.cycle, Some(vec![0]));
    }

    #[test]
    fn two_hand_steps() {
        let m = ricker(1.0);
        let traj = simulate(&m, &m.state(vec![2.0]).unwrap(), 2, 0).unwrap();
        let x1 = 2.0 * (-1.0f64).exp();
        assert!((traj.row(1)[0] - x1).abs() < 1e-15);
        assert!((traj.row(2)[0] - x1 * (1.0 - x1).exp()).abs() < 1e-15);
    }

    #[test]
    fn period_two_orbit_gives_two_atoms() {
        // Ricker with c = 2.3 settles on a 2-cycle
        let m = ricker(2.3);
        let traj = simulate(&m, &m.state(vec![0.5]).unwrap(), 4000, 3000).unwrap();
        let mu = occupation_measure(&traj).unwrap();
        assert_eq!(mu.atom_count(), 2);
        assert_eq!(mu.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn chaotic_orbit_keeps_all_atoms() {
        let m = ricker(2.9);
        let traj = simulate(&m, &m.state(vec![0.5]).unwrap(), 2000, 200).unwrap();
        let mu = occupation_measure(&traj).unwrap();
        assert!(mu.cycle.is_none());
        assert_eq!(mu.atom_count(), 1800);
        let total: f64 = mu.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sir_face_stays_disease_free() {
        let m = zoo::build_sir(&zoo::SirSpec::rational(0.2, 3.0, 1.0)).unwrap();
        let traj = simulate(&m, &m.state(vec![0.7, 0.0, 0.0]).unwrap(), 500, 0).unwrap();
        assert!(traj.rows().all(|r| r[1] == 0.0 && r[2] == 0.0));
        // N follows the disease-free recursion
        let s = (-0.2f64).exp();
        for k in 0..500 {
            let n = traj.row(k)[0];
            assert_eq!(traj.row(k + 1)[0], n * (1.0 / (1.0 + n) + s));
        }
    }

    #[test]
    fn simulate_preconditions() {
        let m = ricker(1.0);
        let x = m.state(vec![0.5]).unwrap();
        assert!(simulate(&m, &x, 10, 10).is_err());
        let wrong = StructuredState::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(simulate(&m, &wrong, 10, 0).is_err());
    }

    #[test]
    fn evaluator_failure_truncates() {
        // positive feedback overflows the exponential
        let spec = LotkaVolterraSpec::from_rows(&[&[1.0]], &[1.0]).unwrap();
        let m = zoo::build_lv_with_box(&spec, crate::model::TrapBox::new(vec![1.0]).unwrap()).unwrap();
        let traj = simulate(&m, &m.state(vec![1.0]).unwrap(), 100, 0).unwrap();
        let failure = traj.failure.as_ref().expect("overflow detected");
        assert!(failure.step < 100);
        assert_eq!(traj.len(), failure.step + 1);
        assert!(traj.diverged);
    }

    #[test]
    fn boundary_origin_is_a_point_mass() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let measures = boundary_sample(&m, &ExtinctionFace::empty(2), 5, 100).unwrap();
        assert_eq!(measures.len(), 1);
        assert_eq!(measures[0].atom_count(), 1);
        assert_eq!(measures[0].atom(0).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn boundary_face_one_concentrates_at_equilibrium() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let face = ExtinctionFace::new(2, [0]);
        let measures = boundary_sample(&m, &face, 4, 2000).unwrap();
        assert_eq!(measures.len(), 4);
        for mu in &measures {
            assert!(mu.supported_on(&face));
            assert!((mu.mean[0] - 1.0).abs() < 1e-12);
            assert_eq!(mu.mean[1], 0.0);
        }
    }

    #[test]
    fn chaotic_face_averages_to_equilibrium() {
        let spec = LotkaVolterraSpec::from_rows(&[&[-1.0, -0.5], &[-0.5, -1.0]], &[3.0, 1.0]).unwrap();
        let m = zoo::build_lv(&spec).unwrap();
        let face = ExtinctionFace::new(2, [0]);
        for mu in boundary_sample(&m, &face, 3, 200_000).unwrap() {
            assert!((mu.mean[0] - 3.0).abs() < 0.05, "mean {}", mu.mean[0]);
            assert_eq!(mu.mean[1], 0.0);
        }
    }

    #[test]
    fn permanence_on_fixtures() {
        let sym = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let starts = interior_grid(&sym, 3);
        let v = permanence_test(&sym, &DEFAULT_ETA_GRID, &starts, 5000).unwrap();
        assert_eq!(v.verdict, VerdictKind::PermanentEmpirically);
        assert!(v.eta.unwrap() >= 0.1);

        let dom = zoo::build_lv(&fixtures::dominance_lv()).unwrap();
        let v = permanence_test(&dom, &DEFAULT_ETA_GRID, &interior_grid(&dom, 3), 5000).unwrap();
        assert_eq!(v.verdict, VerdictKind::ExtinctionWitness);
        assert_eq!(v.witness.unwrap().species, 1);

        let single = ricker(1.0);
        let v = permanence_test(&single, &DEFAULT_ETA_GRID, &interior_grid(&single, 4), 2000).unwrap();
        assert_eq!(v.verdict, VerdictKind::PermanentEmpirically);
    }

    #[test]
    fn permanence_preconditions() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let starts = interior_grid(&m, 2);
        assert!(permanence_test(&m, &[0.01, 0.1], &starts, 100).is_err());
        let boundary = vec![m.state(vec![0.5, 0.0]).unwrap()];
        assert!(permanence_test(&m, &[0.1], &boundary, 100).is_err());
    }

    #[test]
    fn halton_points_are_distinct_and_inside() {
        let m = zoo::build_meta(&fixtures::mirrored_meta(0.95)).unwrap();
        let face = ExtinctionFace::new(2, [1]);
        let pts = face_starts(&m, &face, 20);
        for (a, p) in pts.iter().enumerate() {
            assert!(p.lies_on(&face));
            assert!(m.trap_box().contains(p.as_slice()));
            assert!(pts[..a].iter().all(|q| q != p));
        }
    }
}
