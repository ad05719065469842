//! Constructors for the standard model families: Lotka–Volterra maps,
//! annual plants with a seed bank, two-species metacommunities and the
//! discrete-time SIR model. Each carries its analytic trapping box.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{PatternMode, Projection, SignPattern, StructuredModel, StructuredState, TrapBox};

/// `x_{t+1} = x_t ∘ exp(B x_t + c)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LotkaVolterraSpec {
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LotkaVolterraSpec {
    pub fn new(b: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let spec = Self { b, c };
        spec.check()?;
        Ok(spec)
    }

    pub fn from_rows(b: &[&[f64]], c: &[f64]) -> Result<Self> {
        let m = c.len();
        if b.len() != m || b.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidSpec(format!("B must be {m}x{m}")));
        }
        Self::new(
            DMatrix::from_row_iterator(m, m, b.iter().flat_map(|r| r.iter().copied())),
            DVector::from_column_slice(c),
        )
    }

    fn check(&self) -> Result<()> {
        let m = self.c.len();
        if m == 0 || self.b.nrows() != m || self.b.ncols() != m {
            return Err(Error::InvalidSpec(format!(
                "B is {}x{} but c has length {m}",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if self.b.iter().chain(self.c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("B and c must be finite".into()));
        }
        Ok(())
    }

    pub fn species_count(&self) -> usize {
        self.c.len()
    }

    /// Per-coordinate bound `e^{c_i−1}/|B_ii|`, available for competitive
    /// systems (`B_ii < 0`, `B_ij ≤ 0`).
    pub fn analytic_box(&self) -> Option<Vec<f64>> {
        let m = self.species_count();
        let competitive = (0..m).all(|i| (0..m).all(|j| if i == j { self.b[(i, i)] < 0.0 } else { self.b[(i, j)] <= 0.0 }));
        competitive.then(|| (0..m).map(|i| (self.c[i] - 1.0).exp() / self.b[(i, i)].abs()).collect())
    }
}

struct LvProjection {
    b: DMatrix<f64>,
    c: DVector<f64>,
}

impl LvProjection {
    fn log_growth(&self, i: usize, x: &[f64]) -> f64 {
        self.c[i] + x.iter().enumerate().map(|(j, xj)| self.b[(i, j)] * xj).sum::<f64>()
    }
}

impl Projection for LvProjection {
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.log_growth(species, x.as_slice()).exp())
    }

    fn fitness(&self, species: usize, x: &StructuredState) -> Option<Vec<f64>> {
        Some(vec![self.log_growth(species, x.as_slice()).exp()])
    }
}

/// Lotka–Volterra map with the analytic box attached when one exists.
pub fn build_lv(spec: &LotkaVolterraSpec) -> Result<StructuredModel> {
    let upper = spec.analytic_box().ok_or_else(|| {
        Error::InvalidSpec(
            "no analytic trapping box (needs B_ii < 0 and B_ij <= 0); supply one with build_lv_with_box".into(),
        )
    })?;
    Ok(lv_model(spec, TrapBox::new(upper)?)?.mark_analytic())
}

pub fn build_lv_with_box(spec: &LotkaVolterraSpec, trap: TrapBox) -> Result<StructuredModel> {
    lv_model(spec, trap)
}

fn lv_model(spec: &LotkaVolterraSpec, trap: TrapBox) -> Result<StructuredModel> {
    spec.check()?;
    let m = spec.species_count();
    StructuredModel::new(
        format!("lv-{m}"),
        vec![1; m],
        Arc::new(LvProjection {
            b: spec.b.clone(),
            c: spec.c.clone(),
        }),
        vec![SignPattern::full(1); m],
        trap,
        PatternMode::Primitive,
    )
}

/// Annual plants with a seed bank:
/// `x^i ↦ g_i x^i exp(Y_i − Σ_j C_ij g_j x^j) + (1−g_i) s_i x^i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnualPlantSpec {
    pub germination: Vec<f64>,
    pub yield_exponent: Vec<f64>,
    pub seed_survival: Vec<f64>,
    pub competition: DMatrix<f64>,
}

impl AnnualPlantSpec {
    fn check(&self) -> Result<()> {
        let m = self.germination.len();
        if m == 0
            || self.yield_exponent.len() != m
            || self.seed_survival.len() != m
            || self.competition.nrows() != m
            || self.competition.ncols() != m
        {
            return Err(Error::InvalidSpec("annual-plant parameters must all have m entries".into()));
        }
        if self.germination.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(Error::InvalidSpec("germination fractions must lie in (0,1]".into()));
        }
        if self.yield_exponent.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
            return Err(Error::InvalidSpec("yield exponents must be positive".into()));
        }
        if self.seed_survival.iter().any(|s| !(*s >= 0.0 && *s < 1.0)) {
            return Err(Error::InvalidSpec("seed survival must lie in [0,1)".into()));
        }
        if self.competition.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidSpec("competition coefficients must be positive".into()));
        }
        Ok(())
    }

    /// `a = e^{max Y − 1} / min C_ii`.
    pub fn seed_bound(&self) -> f64 {
        let y = self.yield_exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = (0..self.germination.len())
            .map(|i| self.competition[(i, i)])
            .fold(f64::INFINITY, f64::min);
        (y - 1.0).exp() / c
    }

    /// Carry-over factor `b` in `x' ≤ a + b x`; the largest `1 − g_i` so the
    /// bound holds for every species.
    pub fn carry_over(&self) -> f64 {
        self.germination.iter().map(|g| 1.0 - g).fold(0.0, f64::max)
    }

    pub fn box_height(&self) -> f64 {
        self.seed_bound() / (1.0 - self.carry_over())
    }
}

struct AnnualProjection {
    spec: AnnualPlantSpec,
}

impl Projection for AnnualProjection {
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        let s = &self.spec;
        let i = species;
        let competition: f64 = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, xj)| s.competition[(i, j)] * s.germination[j] * xj)
            .sum();
        let value = s.germination[i] * (s.yield_exponent[i] - competition).exp()
            + (1.0 - s.germination[i]) * s.seed_survival[i];
        DMatrix::from_element(1, 1, value)
    }

    fn fitness(&self, species: usize, x: &StructuredState) -> Option<Vec<f64>> {
        Some(vec![self.matrix(species, x)[(0, 0)]])
    }
}

pub fn build_annual(spec: &AnnualPlantSpec) -> Result<StructuredModel> {
    spec.check()?;
    let m = spec.germination.len();
    StructuredModel::new(
        format!("annual-{m}"),
        vec![1; m],
        Arc::new(AnnualProjection { spec: spec.clone() }),
        vec![SignPattern::full(1); m],
        TrapBox::new(vec![spec.box_height(); m])?,
        PatternMode::Primitive,
    )
    .map(StructuredModel::mark_analytic)
}

/// Two competitors in `k` patches:
/// `X^i ↦ X^i diag(f^i_1(X), …, f^i_k(X)) D^i` with
/// `f^i_j(X) = exp(−Σ_h B^j_{ih} X^{hj} + c^j_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetacommunitySpec {
    /// Per-patch 2×2 competition matrices `B^j`.
    pub competition: Vec<DMatrix<f64>>,
    /// Per-patch growth vectors `c^j`.
    pub growth: Vec<[f64; 2]>,
    /// Per-species k×k column-stochastic dispersal matrices `D^i`.
    pub dispersal: [DMatrix<f64>; 2],
}

impl MetacommunitySpec {
    pub fn patches(&self) -> usize {
        self.growth.len()
    }

    fn check(&self) -> Result<()> {
        let k = self.patches();
        if k == 0 || self.competition.len() != k {
            return Err(Error::InvalidSpec("need one competition matrix and growth vector per patch".into()));
        }
        for (j, b) in self.competition.iter().enumerate() {
            if b.nrows() != 2 || b.ncols() != 2 || b.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidSpec(format!("patch {} competition must be 2x2 positive", j + 1)));
            }
        }
        if self.growth.iter().flatten().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSpec("patch growth rates must be positive".into()));
        }
        for (i, d) in self.dispersal.iter().enumerate() {
            if d.nrows() != k || d.ncols() != k {
                return Err(Error::Dimension(format!("species {} dispersal must be {k}x{k}", i + 1)));
            }
            if d.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidSpec(format!("species {} dispersal has negative entries", i + 1)));
            }
            for (col, column) in d.column_iter().enumerate() {
                let sum: f64 = column.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!(
                        "species {} dispersal column {} sums to {sum}, not 1",
                        i + 1,
                        col + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-species bound `max_ℓ e^{c^ℓ_i − 1}/B^ℓ_ii`; it holds in every
    /// patch because each column of `D^i` sums to one.
    pub fn box_heights(&self) -> [f64; 2] {
        let h = |i: usize| {
            self.competition
                .iter()
                .zip(&self.growth)
                .map(|(b, c)| (c[i] - 1.0).exp() / b[(i, i)])
                .fold(0.0, f64::max)
        };
        [h(0), h(1)]
    }
}

struct MetaProjection {
    spec: MetacommunitySpec,
}

impl MetaProjection {
    fn fitness_values(&self, species: usize, x: &StructuredState) -> Vec<f64> {
        let s = &self.spec;
        (0..s.patches())
            .map(|j| {
                let b = &s.competition[j];
                let crowding = b[(species, 0)] * x.block(0)[j] + b[(species, 1)] * x.block(1)[j];
                (s.growth[j][species] - crowding).exp()
            })
            .collect()
    }
}

impl Projection for MetaProjection {
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        let f = self.fitness_values(species, x);
        let d = &self.spec.dispersal[species];
        DMatrix::from_fn(d.nrows(), d.ncols(), |r, c| f[r] * d[(r, c)])
    }

    fn fitness(&self, species: usize, x: &StructuredState) -> Option<Vec<f64>> {
        Some(self.fitness_values(species, x))
    }
}

/// Metacommunity in primitive mode; non-primitive dispersal is rejected.
pub fn build_meta(spec: &MetacommunitySpec) -> Result<StructuredModel> {
    build_meta_with_mode(spec, PatternMode::Primitive)
}

pub fn build_meta_with_mode(spec: &MetacommunitySpec, mode: PatternMode) -> Result<StructuredModel> {
    spec.check()?;
    let patterns: Vec<SignPattern> = spec.dispersal.iter().map(SignPattern::of_matrix).collect();
    if mode == PatternMode::Primitive {
        if let Some(i) = patterns.iter().position(|p| !p.is_primitive()) {
            return Err(Error::InvalidSpec(format!(
                "species {} dispersal is not primitive; use irreducible-components mode",
                i + 1
            )));
        }
    }
    let k = spec.patches();
    let [h1, h2] = spec.box_heights();
    let upper = std::iter::repeat_n(h1, k).chain(std::iter::repeat_n(h2, k)).collect();
    StructuredModel::new(
        format!("meta-{k}"),
        vec![k, k],
        Arc::new(MetaProjection { spec: spec.clone() }),
        patterns,
        TrapBox::new(upper)?,
        mode,
    )
    .map(StructuredModel::mark_analytic)
}

/// Reproduction term `f(N)` of the SIR model.
#[derive(Clone)]
pub enum Recruitment {
    /// `f(x) = 1/(1 + c x)`.
    Rational { c: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Recruitment {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Recruitment::Rational { c } => 1.0 / (1.0 + c * x),
            Recruitment::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Recruitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recruitment::Rational { c } => write!(f, "Rational {{ c: {c} }}"),
            Recruitment::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Discrete-time SIR model in `(N, (I, R))` block form.
#[derive(Debug, Clone)]
pub struct SirSpec {
    pub mortality: f64,
    pub contact: f64,
    pub recruitment: Recruitment,
}

/// `y` at which the recruitment tail condition is sampled.
const RECRUITMENT_TAIL: f64 = 1e9;
/// Below this, `u` switches to its Taylor series.
const SERIES_CUTOFF: f64 = 1e-5;

impl SirSpec {
    pub fn rational(mortality: f64, contact: f64, c: f64) -> Self {
        Self {
            mortality,
            contact,
            recruitment: Recruitment::Rational { c },
        }
    }

    pub fn survival(&self) -> f64 {
        (-self.mortality).exp()
    }

    fn check(&self) -> Result<()> {
        if !(self.mortality > 0.0 && self.mortality.is_finite()) {
            return Err(Error::InvalidSpec("mortality must be positive".into()));
        }
        if !(self.contact > 0.0 && self.contact.is_finite()) {
            return Err(Error::InvalidSpec("contact rate must be positive".into()));
        }
        match self.recruitment {
            Recruitment::Rational { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::InvalidSpec("recruitment constant c must be positive".into()))
            }
            Recruitment::Rational { .. } => {}
            Recruitment::Custom(ref f) => {
                let tail = f(RECRUITMENT_TAIL);
                if !(tail < 1.0 - self.survival()) {
                    return Err(Error::InvalidSpec(format!(
                        "recruitment tail f({RECRUITMENT_TAIL:e}) = {tail} is not below 1 - e^(-m)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Infection probability per infected, `(1 − e^{−βy})/y`, with `u(0) = β`.
    pub fn infection_kernel(&self, y: f64) -> f64 {
        let beta = self.contact;
        if y < SERIES_CUTOFF {
            beta * (1.0 - beta * y / 2.0 + beta * beta * y * y / 6.0)
        } else {
            -(-beta * y).exp_m1() / y
        }
    }
}

struct SirProjection {
    spec: SirSpec,
}

/// Relative slack on `N ≥ I + R` absorbing rounding in the update.
const SIR_DOMAIN_SLACK: f64 = 1e-12;

impl Projection for SirProjection {
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        let survival = self.spec.survival();
        let n = x.block(0)[0];
        match species {
            0 => DMatrix::from_element(1, 1, self.spec.recruitment.eval(n) + survival),
            _ => {
                let (i, r) = (x.block(1)[0], x.block(1)[1]);
                let susceptible = (n - i - r).max(0.0);
                let infection = survival * susceptible * self.spec.infection_kernel(i);
                DMatrix::from_row_slice(2, 2, &[infection, survival, 0.0, survival])
            }
        }
    }

    fn check_domain(&self, x: &StructuredState) -> Result<()> {
        let n = x.block(0)[0];
        let (i, r) = (x.block(1)[0], x.block(1)[1]);
        if i + r > n * (1.0 + SIR_DOMAIN_SLACK) {
            return Err(Error::Domain(format!("N = {n} < I + R = {}", i + r)));
        }
        Ok(())
    }
}

pub fn build_sir(spec: &SirSpec) -> Result<StructuredModel> {
    spec.check()?;
    let patterns = vec![
        SignPattern::full(1),
        SignPattern::from_rows(&[&[true, true], &[false, true]]),
    ];
    let projection = Arc::new(SirProjection { spec: spec.clone() });
    match spec.recruitment {
        Recruitment::Rational { c } => {
            // N' ≤ 1/c + e^{−m} N keeps N ≤ 1/(c(1 − e^{−m})); I, R ≤ N.
            let h = 1.0 / (c * (1.0 - spec.survival()));
            StructuredModel::new(
                "sir",
                vec![1, 2],
                projection,
                patterns,
                TrapBox::new(vec![h; 3])?,
                PatternMode::IrreducibleComponents,
            )
            .map(StructuredModel::mark_analytic)
        }
        Recruitment::Custom(_) => Err(Error::InvalidSpec(
            "custom recruitment has no analytic box; use build_sir_with_box".into(),
        )),
    }
}

pub fn build_sir_with_box(spec: &SirSpec, trap: TrapBox) -> Result<StructuredModel> {
    spec.check()?;
    StructuredModel::new(
        "sir",
        vec![1, 2],
        Arc::new(SirProjection { spec: spec.clone() }),
        vec![
            SignPattern::full(1),
            SignPattern::from_rows(&[&[true, true], &[false, true]]),
        ],
        trap,
        PatternMode::IrreducibleComponents,
    )
}

/// Standing fixtures shared by tests, examples and the CLI documentation.
pub mod fixtures {
    use super::*;

    /// `B = [[−1,−0.5],[−0.5,−1]]`, `c = (1,1)`: mutual invasion, margin 0.5.
    pub fn symmetric_lv() -> LotkaVolterraSpec {
        LotkaVolterraSpec::from_rows(&[&[-1.0, -0.5], &[-0.5, -1.0]], &[1.0, 1.0]).unwrap()
    }

    /// `B = [[−1,−2],[−0.5,−1]]`, `c = (1,1)`: species 2 excludes species 1.
    pub fn dominance_lv() -> LotkaVolterraSpec {
        LotkaVolterraSpec::from_rows(&[&[-1.0, -2.0], &[-0.5, -1.0]], &[1.0, 1.0]).unwrap()
    }

    /// Species 2 invades species 1's equilibrium at rate exactly zero.
    pub fn marginal_lv() -> LotkaVolterraSpec {
        LotkaVolterraSpec::from_rows(&[&[-1.0, -0.5], &[-1.0, -1.0]], &[1.0, 1.0]).unwrap()
    }

    /// Two symmetric annual plants with germination `g`.
    pub fn annual(g: f64) -> AnnualPlantSpec {
        AnnualPlantSpec {
            germination: vec![g, g],
            yield_exponent: vec![1.0, 1.0],
            seed_survival: vec![0.5, 0.5],
            competition: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        }
    }

    /// Symmetric two-patch dispersal with `stay` on the diagonal.
    pub fn two_patch_dispersal(stay: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[stay, 1.0 - stay, 1.0 - stay, stay])
    }

    /// Each species has the advantage in one patch; both invasion criteria
    /// equal 0.5.
    pub fn mirrored_meta(stay: f64) -> MetacommunitySpec {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        MetacommunitySpec {
            competition: vec![b.clone(), b],
            growth: vec![[2.0, 1.0], [1.0, 2.0]],
            dispersal: [two_patch_dispersal(stay), two_patch_dispersal(stay)],
        }
    }

    /// Identical patches where species 1 excludes species 2.
    pub fn dominance_meta(stay: f64) -> MetacommunitySpec {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 2.0, 1.0]);
        MetacommunitySpec {
            competition: vec![b.clone(), b],
            growth: vec![[1.0, 1.0], [1.0, 1.0]],
            dispersal: [two_patch_dispersal(stay), two_patch_dispersal(stay)],
        }
    }
}
