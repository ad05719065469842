//! Long-term growth rates of species blocks along orbits.
//!
//! Two estimators are provided and cross-check each other:
//!
//! * [`invasion_rate_norm`] pushes a positive vector through the cocycle
//!   `v ↦ v A_i(X_s)`, renormalising in ℓ¹ every step and summing the log
//!   norms. Any positive start gives the same limit, so two starts are run.
//! * [`invasion_rate_birkhoff`] first equilibrates the dominant direction
//!   `u`, then time-averages `ζ = ln ‖u A_i(X_s)‖`.
//!
//! In irreducible-components mode each component's principal submatrix is
//! tracked separately and the rate is the maximum over components.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{default_burn_in, simulate, OccupationMeasure, Trajectory};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ExtinctionFace, StructuredModel, StructuredState};

/// Shortest averaging window accepted by the trajectory estimators.
pub const MIN_WINDOW: usize = 1000;
/// Steps used to equilibrate the dominant direction before averaging.
pub const PRE_ROLL: usize = 200;
/// Number of dyadic prefix windows reported (`T/32, …, T/2, T`).
const DYADIC_LEVELS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    VectorNorm,
    Birkhoff,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentRate {
    /// 0-based indices of the component within the species block.
    pub indices: Vec<usize>,
    /// `-inf` when the component is nilpotent along the orbit.
    pub value: f64,
    pub uncertainty: f64,
    pub window_means: Vec<f64>,
    pub nilpotent_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvasionEstimate {
    /// 1-based species label.
    pub species: usize,
    /// Component attaining the maximum.
    pub component: usize,
    pub value: f64,
    /// Half the spread of the last four dyadic window means.
    pub uncertainty: f64,
    /// Averages over the prefixes `T/32, T/16, …, T` of the window.
    pub window_means: Vec<f64>,
    /// Largest window mean, reported as a limsup proxy.
    pub limsup: f64,
    /// Unit ℓ¹ nonnegative direction at the end of the window.
    pub direction: Vec<f64>,
    pub method: Method,
    pub steps: usize,
    pub components: Vec<ComponentRate>,
    /// |difference| between the two starting vectors (vector-norm method).
    pub start_vector_gap: Option<f64>,
}

impl InvasionEstimate {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// The last two window means agree to within the reported uncertainty.
    pub fn windows_converged(&self) -> bool {
        match self.window_means.as_slice() {
            [.., a, b] if a.is_finite() && b.is_finite() => (a - b).abs() <= self.uncertainty,
            _ => true,
        }
    }
}

struct Run {
    value: f64,
    window_means: Vec<f64>,
    uncertainty: f64,
    direction: Vec<f64>,
    nilpotent_at: Option<usize>,
}

fn dyadic_checkpoints(steps: usize) -> Vec<usize> {
    (0..DYADIC_LEVELS)
        .rev()
        .map(|j| steps >> j)
        .filter(|&len| len > 0)
        .collect()
}

fn spread_uncertainty(means: &[f64]) -> f64 {
    let tail = &means[means.len().saturating_sub(4)..];
    if tail.iter().any(|m| !m.is_finite()) {
        return 0.0;
    }
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    0.5 * (max - min)
}

/// Propagates `v` through `matrices`, accumulating `ln ‖v A‖`.
fn propagate(mut v: Vec<f64>, matrices: &[DMatrix<f64>]) -> Run {
    let steps = matrices.len();
    let checkpoints = dyadic_checkpoints(steps);
    let mut means = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0;
    let mut total = 0.0;
    for (s, a) in matrices.iter().enumerate() {
        let w = linalg::row_times(&v, a);
        let norm = linalg::l1(&w);
        if norm == 0.0 {
            return Run {
                value: f64::NEG_INFINITY,
                window_means: vec![f64::NEG_INFINITY; checkpoints.len()],
                uncertainty: 0.0,
                direction: v,
                nilpotent_at: Some(s),
            };
        }
        total += norm.ln();
        v = w.into_iter().map(|x| x / norm).collect();
        while next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == s + 1 {
            means.push(total / (s + 1) as f64);
            next_checkpoint += 1;
        }
    }
    Run {
        value: total / steps as f64,
        uncertainty: spread_uncertainty(&means),
        window_means: means,
        direction: v,
        nilpotent_at: None,
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// A second positive start, geometrically tilted towards the first index.
fn tilted(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|k| 0.5f64.powi(k as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn check_species(model: &StructuredModel, species: usize) -> Result<()> {
    if species >= model.species_count() {
        return Err(Error::Contract(format!(
            "species index {species} out of range for {} species",
            model.species_count()
        )));
    }
    Ok(())
}

fn window_states(traj: &Trajectory) -> Result<std::ops::Range<usize>> {
    if let Some(f) = &traj.failure {
        return Err(Error::Contract(format!(
            "trajectory truncated at step {}: {}",
            f.step, f.message
        )));
    }
    let window = traj.window();
    if window.len() < MIN_WINDOW {
        return Err(Error::Contract(format!(
            "averaging window has {} states, need at least {MIN_WINDOW}",
            window.len()
        )));
    }
    Ok(window)
}

/// Component submatrices of `A_i` at trajectory rows `range`.
fn component_matrices(
    model: &StructuredModel,
    species: usize,
    traj: &Trajectory,
    range: std::ops::Range<usize>,
) -> (Vec<Vec<usize>>, Vec<Vec<DMatrix<f64>>>) {
    let comps = model.components(species);
    let n = model.dims()[species];
    let mut per_comp: Vec<Vec<DMatrix<f64>>> = vec![Vec::with_capacity(range.len()); comps.len()];
    for k in range {
        let a = model.matrix(species, &traj.state(k));
        for (c, idx) in comps.iter().enumerate() {
            per_comp[c].push(if idx.len() == n {
                a.clone()
            } else {
                linalg::principal_submatrix(&a, idx)
            });
        }
    }
    (comps, per_comp)
}

fn assemble(
    model: &StructuredModel,
    species: usize,
    comps: Vec<Vec<usize>>,
    runs: Vec<Run>,
    method: Method,
    steps: usize,
    start_vector_gap: Option<f64>,
) -> InvasionEstimate {
    let best = runs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let n = model.dims()[species];
    let mut direction = vec![0.0; n];
    for (pos, &idx) in comps[best].iter().enumerate() {
        direction[idx] = runs[best].direction[pos];
    }
    let components: Vec<ComponentRate> = comps
        .into_iter()
        .zip(&runs)
        .map(|(indices, r)| ComponentRate {
            indices,
            value: r.value,
            uncertainty: r.uncertainty,
            window_means: r.window_means.clone(),
            nilpotent_at: r.nilpotent_at,
        })
        .collect();
    let top = &runs[best];
    InvasionEstimate {
        species: species + 1,
        component: best,
        value: top.value,
        uncertainty: top.uncertainty,
        limsup: top.window_means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        window_means: top.window_means.clone(),
        direction,
        method,
        steps,
        components,
        start_vector_gap,
    }
}

/// Growth rate of species `species` (0-based) along the trajectory window via
/// ℓ¹-renormalised vector propagation.
pub fn invasion_rate_norm(model: &StructuredModel, species: usize, traj: &Trajectory) -> Result<InvasionEstimate> {
    check_species(model, species)?;
    let window = window_states(traj)?;
    let steps = window.len();
    let (comps, mats) = component_matrices(model, species, traj, window);
    let mut gap: f64 = 0.0;
    let runs: Vec<Run> = comps
        .iter()
        .zip(&mats)
        .map(|(idx, ms)| {
            let first = propagate(uniform(idx.len()), ms);
            if idx.len() > 1 {
                let second = propagate(tilted(idx.len()), ms);
                if first.value.is_finite() && second.value.is_finite() {
                    gap = gap.max((first.value - second.value).abs());
                }
            }
            first
        })
        .collect();
    Ok(assemble(model, species, comps, runs, Method::VectorNorm, steps, Some(gap)))
}

/// Growth rate as the time average of `ζ = ln ‖u A_i‖` along the window,
/// with `u` the power-iterated dominant direction.
pub fn invasion_rate_birkhoff(model: &StructuredModel, species: usize, traj: &Trajectory) -> Result<InvasionEstimate> {
    check_species(model, species)?;
    let window = window_states(traj)?;
    let steps = window.len();
    let pre_start = window.start.saturating_sub(PRE_ROLL);
    let (_, pre) = component_matrices(model, species, traj, pre_start..window.start);
    let (comps, mats) = component_matrices(model, species, traj, window);
    let runs: Vec<Run> = comps
        .iter()
        .enumerate()
        .map(|(c, idx)| {
            let mut u = uniform(idx.len());
            if idx.len() > 1 {
                // Orbit states before the window first, then the first window
                // matrix repeated when the burn-in is shorter than the pre-roll.
                let frozen = std::iter::repeat_n(&mats[c][0], PRE_ROLL - pre[c].len());
                for a in pre[c].iter().chain(frozen) {
                    let w = linalg::row_times(&u, a);
                    let norm = linalg::l1(&w);
                    if norm == 0.0 {
                        break;
                    }
                    u = w.into_iter().map(|x| x / norm).collect();
                }
            }
            propagate(u, &mats[c])
        })
        .collect();
    Ok(assemble(model, species, comps, runs, Method::Birkhoff, steps, None))
}

/// `(1/p) ln ρ(A(x_0) ⋯ A(x_{p−1}))` per component along an exact cycle.
fn cycle_rate(model: &StructuredModel, species: usize, measure: &OccupationMeasure, cycle: &[usize]) -> InvasionEstimate {
    let comps = model.components(species);
    let p = cycle.len();
    let mats: Vec<DMatrix<f64>> = cycle.iter().map(|&k| model.matrix(species, &measure.atom(k))).collect();
    let runs: Vec<Run> = comps
        .iter()
        .map(|idx| {
            let product = mats
                .iter()
                .map(|a| linalg::principal_submatrix(a, idx))
                .reduce(|acc, a| acc * a)
                .expect("cycle is nonempty");
            let rho = linalg::spectral_radius(&product);
            let value = if rho > 0.0 { rho.ln() / p as f64 } else { f64::NEG_INFINITY };
            Run {
                value,
                window_means: vec![value],
                uncertainty: 0.0,
                direction: perron_direction(&product),
                nilpotent_at: (rho == 0.0).then_some(0),
            }
        })
        .collect();
    assemble(model, species, comps, runs, Method::Analytic, p, None)
}

/// Left dominant direction of a nonnegative matrix by power iteration.
fn perron_direction(a: &DMatrix<f64>) -> Vec<f64> {
    let mut u = uniform(a.nrows());
    for _ in 0..500 {
        let w = linalg::row_times(&u, a);
        let norm = linalg::l1(&w);
        if norm == 0.0 {
            break;
        }
        u = w.into_iter().map(|x| x / norm).collect();
    }
    u
}

/// Growth rate with respect to an occupation measure.
///
/// Cycles (fixed points, periodic orbits) are handled exactly through the
/// spectral radius of the matrix product; otherwise the generating
/// trajectory is regenerated and the Birkhoff estimator is used. When `face`
/// is given, the measure must vanish off it.
pub fn invasion_rate_measure(
    model: &StructuredModel,
    species: usize,
    measure: &OccupationMeasure,
    face: Option<&ExtinctionFace>,
) -> Result<InvasionEstimate> {
    check_species(model, species)?;
    if measure.dims() != model.dims() {
        return Err(Error::Dimension("measure and model blocks differ".into()));
    }
    if let Some(face) = face {
        if !measure.supported_on(face) {
            return Err(Error::Contract(format!("measure is not supported on face {face}")));
        }
    }
    if let Some(cycle) = &measure.cycle {
        return Ok(cycle_rate(model, species, measure, cycle));
    }
    let origin = measure
        .origin
        .as_ref()
        .ok_or_else(|| Error::Contract("measure has neither a cycle nor a generating orbit".into()))?;
    let x0 = model.state(origin.start.clone())?;
    let traj = simulate(model, &x0, origin.horizon, origin.burn_in)?;
    invasion_rate_birkhoff(model, species, &traj)
}

/// Rate at the origin: `ln ρ(A_i(0))`, maximised over components.
pub fn rate_at_origin(model: &StructuredModel, species: usize) -> Result<InvasionEstimate> {
    invasion_rate_measure(model, species, &OccupationMeasure::dirac(&model.zero_state()), None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    /// 1-based species label.
    pub species: usize,
    pub value: f64,
    /// 1-based index `j` of the growth factor attaining the bound.
    pub index: usize,
    /// Horizon `t` at which the sup over `t` was attained.
    pub best_t: usize,
    pub grid_size: usize,
    /// Whether the summand was the model's local fitness or a diagonal entry.
    pub summand: Summand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Summand {
    Fitness,
    Diagonal,
}

/// Uniform lower bound on species `species`'s growth over invariant measures
/// carried by `face`:
///
/// `max_j sup_{1≤t≤t_max} (1/t) min_{x∈grid} Σ_{s<t} ln g_j(Φ^s(x))`
///
/// where `g_j` is the model's local fitness `f^i_j` when available and the
/// diagonal entry `A_i(x)_{jj}` otherwise.
pub fn uniform_invasion_lower_bound(
    model: &StructuredModel,
    species: usize,
    face: &ExtinctionFace,
    grid: &[StructuredState],
    t_max: usize,
) -> Result<LowerBound> {
    check_species(model, species)?;
    if face.contains(species) {
        return Err(Error::Contract(format!(
            "species {} is present on face {face}",
            species + 1
        )));
    }
    if grid.is_empty() {
        return Err(Error::Contract("lower bound needs a nonempty grid".into()));
    }
    if t_max == 0 {
        return Err(Error::Contract("t_max must be at least 1".into()));
    }
    if let Some(bad) = grid.iter().find(|x| !x.lies_on(face)) {
        return Err(Error::Contract(format!("grid point {bad:?} is off face {face}")));
    }
    let n = model.dims()[species];
    let probe = model.projection().fitness(species, &grid[0]);
    let summand = if probe.is_some() { Summand::Fitness } else { Summand::Diagonal };
    let log_factors = |x: &StructuredState| -> Vec<f64> {
        match summand {
            Summand::Fitness => model
                .projection()
                .fitness(species, x)
                .expect("fitness available")
                .into_iter()
                .map(f64::ln)
                .collect(),
            Summand::Diagonal => {
                let a = model.matrix(species, x);
                (0..n).map(|j| a[(j, j)].ln()).collect()
            }
        }
    };
    let width = probe.map_or(n, |f| f.len());

    // Partial sums per start, one column per growth factor.
    let sums: Vec<Vec<Vec<f64>>> = grid
        .par_iter()
        .map(|x0| -> Result<Vec<Vec<f64>>> {
            let mut x = x0.clone();
            let mut acc = vec![0.0; width];
            let mut out = Vec::with_capacity(t_max);
            for _ in 0..t_max {
                for (a, l) in acc.iter_mut().zip(log_factors(&x)) {
                    *a += l;
                }
                out.push(acc.clone());
                x = crate::model::step(model, &x)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut best = LowerBound {
        species: species + 1,
        value: f64::NEG_INFINITY,
        index: 1,
        best_t: 1,
        grid_size: grid.len(),
        summand,
    };
    for j in 0..width {
        for t in 0..t_max {
            let worst = sums.iter().map(|s| s[t][j]).fold(f64::INFINITY, f64::min);
            let value = worst / (t + 1) as f64;
            if value > best.value {
                best.value = value;
                best.index = j + 1;
                best.best_t = t + 1;
            }
        }
    }
    Ok(best)
}

/// Convenience: simulate from `x0` with the default burn-in and estimate all
/// species with both methods.
pub fn estimate_all(
    model: &StructuredModel,
    x0: &StructuredState,
    horizon: usize,
) -> Result<Vec<(InvasionEstimate, InvasionEstimate)>> {
    let traj = simulate(model, x0, horizon, default_burn_in(horizon))?;
    (0..model.species_count())
        .map(|i| Ok((invasion_rate_norm(model, i, &traj)?, invasion_rate_birkhoff(model, i, &traj)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::occupation_measure;
    use crate::model::{FnProjection, PatternMode, SignPattern, TrapBox};
    use crate::zoo::{self, fixtures, LotkaVolterraSpec};
    use std::sync::Arc;

    fn constant_model(a: DMatrix<f64>) -> StructuredModel {
        let n = a.nrows();
        let pattern = SignPattern::of_matrix(&a);
        StructuredModel::new(
            "constant",
            vec![n],
            Arc::new(FnProjection(move |_, _: &StructuredState| a.clone())),
            vec![pattern],
            TrapBox::new(vec![1.0; n]).unwrap(),
            PatternMode::Primitive,
        )
        .unwrap()
    }

    #[test]
    fn lv_face_one_rate() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let traj = simulate(&m, &m.state(vec![1.0, 0.0]).unwrap(), 2000, 200).unwrap();
        let norm = invasion_rate_norm(&m, 1, &traj).unwrap();
        let birk = invasion_rate_birkhoff(&m, 1, &traj).unwrap();
        assert!((norm.value - 0.5).abs() < 1e-12);
        // scalar blocks: both methods perform the same arithmetic
        assert_eq!(norm.value, birk.value);
        assert_eq!(norm.direction, vec![1.0]);
    }

    #[test]
    fn origin_rate_is_growth_constant() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        for i in 0..2 {
            let est = rate_at_origin(&m, i).unwrap();
            assert_eq!(est.method, Method::Analytic);
            assert!((est.value - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_matrix_gives_log_perron_root() {
        // λ_max of [[2,1],[1,2]] is 3, left Perron vector (1/2, 1/2)
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let m = constant_model(a);
        // the zero orbit keeps the matrix constant without overflowing
        let traj = simulate(&m, &m.state(vec![0.0, 0.0]).unwrap(), 1500, 300).unwrap();
        let birk = invasion_rate_birkhoff(&m, 0, &traj).unwrap();
        assert!((birk.value - 3f64.ln()).abs() < 1e-12);
        assert!((birk.direction[0] - 0.5).abs() < 1e-12);
        let norm = invasion_rate_norm(&m, 0, &traj).unwrap();
        // the tilted start converges at rate (1/3)^t, so only O(1/T) differs
        assert!((norm.value - 3f64.ln()).abs() < 1e-3);
        assert!(norm.start_vector_gap.unwrap() < 1e-3);
    }

    #[test]
    fn nilpotent_component_gives_minus_infinity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m = constant_model(a).with_mode(PatternMode::Primitive);
        let traj = simulate(&m, &m.state(vec![0.0, 0.0]).unwrap(), 1200, 100).unwrap();
        let est = invasion_rate_norm(&m, 0, &traj).unwrap();
        assert_eq!(est.value, f64::NEG_INFINITY);
        assert_eq!(est.components[0].nilpotent_at, Some(1));
    }

    #[test]
    fn sir_components_at_disease_free_equilibrium() {
        let spec = zoo::SirSpec::rational(0.2, 3.0, 1.0);
        let m = zoo::build_sir(&spec).unwrap();
        let n_bar = 1.0 / (1.0 - spec.survival()) - 1.0;
        let mu = OccupationMeasure::dirac(&m.state(vec![n_bar, 0.0, 0.0]).unwrap());
        let est = invasion_rate_measure(&m, 1, &mu, None).unwrap();
        let infection = (spec.survival() * n_bar * 3.0).ln();
        assert_eq!(est.components.len(), 2);
        assert!((est.components[0].value - infection).abs() < 1e-12);
        assert!((est.components[1].value + 0.2).abs() < 1e-15);
        assert!((est.value - infection.max(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn period_two_rate_averages_the_two_points() {
        let spec = LotkaVolterraSpec::from_rows(&[&[-1.0, -0.5], &[-0.5, -1.0]], &[2.3, 1.0]).unwrap();
        let m = zoo::build_lv(&spec).unwrap();
        let traj = simulate(&m, &m.state(vec![0.5, 0.0]).unwrap(), 5000, 4000).unwrap();
        let mu = occupation_measure(&traj).unwrap();
        assert_eq!(mu.atom_count(), 2);
        let (a, b) = (mu.atom(0).as_slice()[0], mu.atom(1).as_slice()[0]);
        let expected = ((-0.5 * a + 1.0) + (-0.5 * b + 1.0)) / 2.0;
        let est = invasion_rate_measure(&m, 1, &mu, Some(&ExtinctionFace::new(2, [0]))).unwrap();
        assert!((est.value - expected).abs() < 1e-12);
    }

    #[test]
    fn face_support_is_checked() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let mu = OccupationMeasure::dirac(&m.state(vec![0.5, 0.5]).unwrap());
        assert!(invasion_rate_measure(&m, 1, &mu, Some(&ExtinctionFace::new(2, [0]))).is_err());
    }

    #[test]
    fn short_windows_are_rejected() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let traj = simulate(&m, &m.state(vec![0.5, 0.5]).unwrap(), 500, 50).unwrap();
        assert!(invasion_rate_norm(&m, 0, &traj).is_err());
    }

    #[test]
    fn lower_bound_of_constant_growth() {
        // f ≡ e^{0.3} whatever the state
        let a = DMatrix::from_element(1, 1, 0.3f64.exp());
        let m = StructuredModel::new(
            "constant-2",
            vec![1, 1],
            Arc::new(FnProjection(move |_, _: &StructuredState| a.clone())),
            vec![SignPattern::full(1); 2],
            TrapBox::new(vec![1.0, 1.0]).unwrap(),
            PatternMode::Primitive,
        )
        .unwrap();
        let face = ExtinctionFace::new(2, [0]);
        let grid = crate::dynamics::face_lattice(&m, &face, 3);
        let lb = uniform_invasion_lower_bound(&m, 1, &face, &grid, 5).unwrap();
        assert!((lb.value - 0.3).abs() < 1e-15);
        assert_eq!(lb.summand, Summand::Diagonal);
    }

    #[test]
    fn single_start_bound_is_a_time_average() {
        let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
        let face = ExtinctionFace::new(2, [0]);
        let x0 = m.state(vec![0.3, 0.0]).unwrap();
        let t_max = 50;
        let lb = uniform_invasion_lower_bound(&m, 1, &face, std::slice::from_ref(&x0), t_max).unwrap();
        // brute force: max over t of the running average of B_21 x_s + c_2
        let mut x = 0.3f64;
        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        for t in 1..=t_max {
            sum += -0.5 * x + 1.0;
            best = best.max(sum / t as f64);
            x *= (1.0 - x).exp();
        }
        assert!((lb.value - best).abs() < 1e-12);
        assert!(uniform_invasion_lower_bound(&m, 0, &face, std::slice::from_ref(&x0), 5).is_err());
        assert!(uniform_invasion_lower_bound(&m, 1, &face, &[], 5).is_err());
    }
}
