//! Block-structured maps `x^i ↦ x^i A_i(x)` on the nonnegative cone.
//!
//! A [`StructuredModel`] bundles the per-species projection matrices, their
//! fixed zero/positive patterns and a declared trapping box. The box is never
//! derived: zoo constructors attach analytic boxes, everything else must be
//! supplied by the caller and is only checked by sampling in [`validate`].

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Block norms at or below this value classify a species as extinct.
pub const EXTINCTION_THRESHOLD: f64 = 1e-15;

/// A partitioned nonnegative vector `x = (x^1, …, x^m)`.
#[derive(Clone, PartialEq)]
pub struct StructuredState {
    values: Vec<f64>,
    offsets: Arc<[usize]>,
}

fn offsets_for(dims: &[usize]) -> Arc<[usize]> {
    let mut offsets = Vec::with_capacity(dims.len() + 1);
    offsets.push(0);
    for d in dims {
        offsets.push(offsets.last().unwrap() + d);
    }
    offsets.into()
}

impl StructuredState {
    pub fn new(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let dims: Vec<usize> = blocks.iter().map(Vec::len).collect();
        Self::from_flat(&dims, blocks.into_iter().flatten().collect())
    }

    pub fn from_flat(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension("every block needs at least one entry".into()));
        }
        let offsets = offsets_for(dims);
        if *offsets.last().unwrap() != values.len() {
            return Err(Error::Dimension(format!(
                "blocks {dims:?} need {} entries, got {}",
                offsets.last().unwrap(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidState(format!(
                "entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self { values, offsets })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let offsets = offsets_for(dims);
        Self {
            values: vec![0.0; *offsets.last().unwrap()],
            offsets,
        }
    }

    /// Rebuilds a state with the same block layout, skipping validation.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            offsets: self.offsets.clone(),
        }
    }

    pub fn species_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// ℓ¹ norm of block `i`.
    pub fn norm(&self, i: usize) -> f64 {
        self.block(i).iter().sum()
    }

    pub fn face(&self) -> ExtinctionFace {
        self.face_with_threshold(EXTINCTION_THRESHOLD)
    }

    pub fn face_with_threshold(&self, threshold: f64) -> ExtinctionFace {
        ExtinctionFace::new(
            self.species_count(),
            (0..self.species_count()).filter(|&i| self.norm(i) > threshold),
        )
    }

    pub fn is_interior(&self) -> bool {
        self.face().is_interior()
    }

    /// True when every entry of an absent species' block is exactly zero.
    pub fn lies_on(&self, face: &ExtinctionFace) -> bool {
        (0..self.species_count())
            .filter(|i| !face.contains(*i))
            .all(|i| self.block(i).iter().all(|&v| v == 0.0))
    }
}

impl fmt::Debug for StructuredState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<&[f64]> = (0..self.species_count()).map(|i| self.block(i)).collect();
        f.debug_tuple("StructuredState").field(&blocks).finish()
    }
}

/// The set of species present in a state; a proper subset describes a face
/// of the extinction set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExtinctionFace {
    species_count: usize,
    present: BTreeSet<usize>,
}

impl ExtinctionFace {
    pub fn new(species_count: usize, present: impl IntoIterator<Item = usize>) -> Self {
        let present: BTreeSet<usize> = present.into_iter().collect();
        assert!(
            present.iter().all(|&i| i < species_count),
            "face lists a species beyond {species_count}"
        );
        Self {
            species_count,
            present,
        }
    }

    pub fn empty(species_count: usize) -> Self {
        Self::new(species_count, [])
    }

    pub fn full(species_count: usize) -> Self {
        Self::new(species_count, 0..species_count)
    }

    /// Every proper face, ordered by bitmask (the empty face first).
    pub fn proper_faces(species_count: usize) -> Vec<Self> {
        assert!(species_count <= 20, "face enumeration is limited to 20 species");
        (0u32..(1u32 << species_count) - 1)
            .map(|mask| Self::new(species_count, (0..species_count).filter(|i| mask >> i & 1 == 1)))
            .collect()
    }

    pub fn species_count(&self) -> usize {
        self.species_count
    }

    pub fn contains(&self, i: usize) -> bool {
        self.present.contains(&i)
    }

    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        self.present.iter().copied()
    }

    pub fn absent(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.species_count).filter(|i| !self.present.contains(i))
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn is_interior(&self) -> bool {
        self.present.len() == self.species_count
    }
}

impl fmt::Display for ExtinctionFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.present.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

/// Zero/positive structure of a square nonnegative matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignPattern {
    n: usize,
    positive: Vec<bool>,
}

impl SignPattern {
    pub fn from_rows(rows: &[&[bool]]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "sign pattern must be square");
        Self {
            n,
            positive: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    /// Exact test: an entry is positive iff it is `> 0`.
    pub fn of_matrix(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "sign pattern must be square");
        let n = a.nrows();
        Self {
            n,
            positive: (0..n * n).map(|k| a[(k / n, k % n)] > 0.0).collect(),
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            positive: vec![true; n * n],
        }
    }

    pub fn diagonal(n: usize) -> Self {
        Self {
            n,
            positive: (0..n * n).map(|k| k / n == k % n).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_positive(&self, r: usize, c: usize) -> bool {
        self.positive[r * self.n + c]
    }

    /// First entry where `a` disagrees with the pattern.
    pub fn mismatch(&self, a: &DMatrix<f64>) -> Option<(usize, usize)> {
        if a.nrows() != self.n || a.ncols() != self.n {
            return Some((a.nrows(), a.ncols()));
        }
        (0..self.n * self.n)
            .map(|k| (k / self.n, k % self.n))
            .find(|&(r, c)| (a[(r, c)] > 0.0) != self.is_positive(r, c))
    }

    fn boolean_product(&self, other: &[bool]) -> Vec<bool> {
        let n = self.n;
        let mut out = vec![false; n * n];
        for r in 0..n {
            for k in 0..n {
                if other[r * n + k] {
                    for c in 0..n {
                        out[r * n + c] |= self.positive[k * n + c];
                    }
                }
            }
        }
        out
    }

    /// Wielandt: a primitive n×n pattern has a positive power of order
    /// `(n−1)² + 1`.
    pub fn is_primitive(&self) -> bool {
        let exponent = (self.n - 1) * (self.n - 1) + 1;
        let mut power = self.positive.clone();
        for _ in 1..exponent {
            power = self.boolean_product(&power);
        }
        power.iter().all(|&p| p)
    }

    pub fn is_irreducible(&self) -> bool {
        irreducible_components(self).len() == 1
    }
}

/// Strongly connected components of the graph with an edge `r → c` for every
/// positive entry, in topological order of the condensation. Indices within a
/// component are sorted; ties between unrelated components go to the one
/// with the smallest index.
pub fn irreducible_components(p: &SignPattern) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        p: &'a SignPattern,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }

    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for w in 0..self.p.n {
                if !self.p.is_positive(v, w) {
                    continue;
                }
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().unwrap();
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }

    let n = p.n;
    let mut t = Tarjan {
        p,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    // Kahn's algorithm on the condensation, taking the ready component with
    // the smallest index so unrelated components keep their natural order.
    let comps = t.out;
    let mut label = vec![0; n];
    for (k, comp) in comps.iter().enumerate() {
        for &v in comp {
            label[v] = k;
        }
    }
    let mut indegree = vec![0usize; comps.len()];
    let mut edges = BTreeSet::new();
    for r in 0..n {
        for c in 0..n {
            if p.is_positive(r, c) && label[r] != label[c] && edges.insert((label[r], label[c])) {
                indegree[label[c]] += 1;
            }
        }
    }
    let mut ready: BTreeSet<(usize, usize)> = (0..comps.len())
        .filter(|&k| indegree[k] == 0)
        .map(|k| (comps[k][0], k))
        .collect();
    let mut order = Vec::with_capacity(comps.len());
    while let Some((_, k)) = ready.pop_first() {
        order.push(comps[k].clone());
        for &(_, to) in edges.range((k, 0)..(k + 1, 0)) {
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.insert((comps[to][0], to));
            }
        }
    }
    order
}

/// Which structural assumption the sign patterns are held to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternMode {
    Primitive,
    IrreducibleComponents,
}

/// Axis-aligned box `[0, upper]` in ℝⁿ₊.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapBox {
    upper: Vec<f64>,
}

impl TrapBox {
    pub fn new(upper: Vec<f64>) -> Result<Self> {
        if upper.iter().any(|u| !u.is_finite() || *u <= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "trapping box bounds must be finite and positive: {upper:?}"
            )));
        }
        Ok(Self { upper })
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn height(&self) -> f64 {
        self.upper.iter().copied().fold(0.0, f64::max)
    }

    /// Containment with a relative slack of 1e-12 to absorb rounding on the
    /// boundary of analytic boxes.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.upper.len()
            && x.iter()
                .zip(&self.upper)
                .all(|(v, u)| *v >= 0.0 && *v <= u * (1.0 + 1e-12))
    }

    pub fn inflate(&self, radius: f64) -> Self {
        Self {
            upper: self.upper.iter().map(|u| u + radius).collect(),
        }
    }

    /// Uniform lattice with `per_axis` points per coordinate at
    /// `upper·k/per_axis`, `k = 1..=per_axis` (or `0..per_axis` scaled to
    /// include the origin when `include_zero`).
    pub fn lattice(&self, dims: &[usize], per_axis: usize, include_zero: bool) -> Vec<StructuredState> {
        lattice_over(dims, &self.upper, &vec![true; self.upper.len()], per_axis, include_zero)
    }
}

pub(crate) fn lattice_over(
    dims: &[usize],
    upper: &[f64],
    free: &[bool],
    per_axis: usize,
    include_zero: bool,
) -> Vec<StructuredState> {
    assert!(per_axis >= 1);
    let axes: Vec<usize> = (0..upper.len()).filter(|&k| free[k]).collect();
    let level = |k: usize, step: usize| {
        if include_zero {
            if per_axis == 1 {
                0.0
            } else {
                upper[k] * step as f64 / (per_axis - 1) as f64
            }
        } else {
            upper[k] * (step + 1) as f64 / per_axis as f64
        }
    };
    let total = per_axis.pow(axes.len() as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut values = vec![0.0; upper.len()];
        let mut rem = idx;
        for &k in axes.iter().rev() {
            values[k] = level(k, rem % per_axis);
            rem /= per_axis;
        }
        out.push(StructuredState::from_flat(dims, values).expect("lattice points are valid"));
    }
    out
}

/// Where a model's trapping box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrapSource {
    Analytic,
    User,
}

/// Evaluates the projection matrices `A_i(x)`.
///
/// Implementations must be pure functions of the state.
pub trait Projection: Send + Sync {
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64>;

    /// Local per-state growth factors `f^i_j(x)` when `A_i(x)` factors as
    /// `diag(f^i(x))·D^i` for a constant redistribution `D^i`.
    fn fitness(&self, _species: usize, _x: &StructuredState) -> Option<Vec<f64>> {
        None
    }

    fn check_domain(&self, _x: &StructuredState) -> Result<()> {
        Ok(())
    }
}

/// Adapts a closure `(species, state) -> matrix` into a [`Projection`].
pub struct FnProjection<F>(pub F);

impl<F> Projection for FnProjection<F>
where
    F: Fn(usize, &StructuredState) -> DMatrix<f64> + Send + Sync,
{
    fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        (self.0)(species, x)
    }
}

#[derive(Clone)]
pub struct StructuredModel {
    name: String,
    dims: Vec<usize>,
    projection: Arc<dyn Projection>,
    patterns: Vec<SignPattern>,
    trap: TrapBox,
    trap_source: TrapSource,
    mode: PatternMode,
}

impl fmt::Debug for StructuredModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructuredModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("mode", &self.mode)
            .field("trap", &self.trap)
            .finish_non_exhaustive()
    }
}

impl StructuredModel {
    pub fn new(
        name: impl Into<String>,
        dims: Vec<usize>,
        projection: Arc<dyn Projection>,
        patterns: Vec<SignPattern>,
        trap: TrapBox,
        mode: PatternMode,
    ) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid block dimensions {dims:?}")));
        }
        if patterns.len() != dims.len() || patterns.iter().zip(&dims).any(|(p, d)| p.size() != *d) {
            return Err(Error::Dimension("one sign pattern per block, sized like the block".into()));
        }
        if trap.upper.len() != dims.iter().sum::<usize>() {
            return Err(Error::Dimension("trapping box must cover every coordinate".into()));
        }
        Ok(Self {
            name: name.into(),
            dims,
            projection,
            patterns,
            trap,
            trap_source: TrapSource::User,
            mode,
        })
    }

    pub(crate) fn mark_analytic(mut self) -> Self {
        self.trap_source = TrapSource::Analytic;
        self
    }

    /// Replaces the trapping box; overriding an analytic box is logged.
    pub fn with_trap_box(mut self, trap: TrapBox) -> Result<Self> {
        if trap.upper.len() != self.dimension() {
            return Err(Error::Dimension("trapping box must cover every coordinate".into()));
        }
        if self.trap_source == TrapSource::Analytic {
            log::warn!(
                "model {}: analytic trapping box {:?} overridden by {:?}",
                self.name,
                self.trap.upper,
                trap.upper
            );
        }
        self.trap = trap;
        self.trap_source = TrapSource::User;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: PatternMode) -> Self {
        self.mode = mode;
        self
    }

    /// The inherited box was not derived for the new map.
    pub(crate) fn with_projection(mut self, projection: Arc<dyn Projection>, name: String) -> Self {
        self.projection = projection;
        self.name = name;
        self.trap_source = TrapSource::User;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn species_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dimension(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn patterns(&self) -> &[SignPattern] {
        &self.patterns
    }

    pub fn trap_box(&self) -> &TrapBox {
        &self.trap
    }

    pub fn trap_source(&self) -> TrapSource {
        self.trap_source
    }

    pub fn mode(&self) -> PatternMode {
        self.mode
    }

    pub fn projection(&self) -> &Arc<dyn Projection> {
        &self.projection
    }

    pub fn state(&self, values: Vec<f64>) -> Result<StructuredState> {
        StructuredState::from_flat(&self.dims, values)
    }

    pub fn zero_state(&self) -> StructuredState {
        StructuredState::zeros(&self.dims)
    }

    pub fn matrix(&self, species: usize, x: &StructuredState) -> DMatrix<f64> {
        self.projection.matrix(species, x)
    }

    /// Index sets of the blocks whose growth rates are tracked: the whole
    /// block in primitive mode, its irreducible components otherwise.
    pub fn components(&self, species: usize) -> Vec<Vec<usize>> {
        match self.mode {
            PatternMode::Primitive => vec![(0..self.dims[species]).collect()],
            PatternMode::IrreducibleComponents => irreducible_components(&self.patterns[species]),
        }
    }

    /// Copy of `x` with the blocks of species absent from `face` zeroed.
    pub fn restrict(&self, x: &StructuredState, face: &ExtinctionFace) -> StructuredState {
        let mut values = x.as_slice().to_vec();
        let mut offset = 0;
        for (i, d) in self.dims.iter().enumerate() {
            if !face.contains(i) {
                values[offset..offset + d].iter_mut().for_each(|v| *v = 0.0);
            }
            offset += d;
        }
        x.with_values(values)
    }

    pub(crate) fn check_dims(&self, x: &StructuredState) -> Result<()> {
        if x.dims() != self.dims {
            return Err(Error::Dimension(format!(
                "state blocks {:?} do not match model blocks {:?}",
                x.dims(),
                self.dims
            )));
        }
        Ok(())
    }

    /// All projection matrices at `x`, checked for finiteness.
    pub fn matrices(&self, x: &StructuredState) -> Result<Vec<DMatrix<f64>>> {
        self.check_dims(x)?;
        self.projection.check_domain(x)?;
        (0..self.species_count())
            .map(|i| {
                let a = self.projection.matrix(i, x);
                if a.nrows() != self.dims[i] || a.ncols() != self.dims[i] {
                    return Err(Error::Dimension(format!(
                        "species {} matrix is {}x{}, expected {}x{}",
                        i + 1,
                        a.nrows(),
                        a.ncols(),
                        self.dims[i],
                        self.dims[i]
                    )));
                }
                if let Some(bad) = a.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow {
                        species: i + 1,
                        value: *bad,
                    });
                }
                Ok(a)
            })
            .collect()
    }

    /// One step `y^i = x^i A_i(x)` given precomputed matrices.
    pub(crate) fn apply(&self, x: &StructuredState, mats: &[DMatrix<f64>]) -> Result<StructuredState> {
        let mut out = Vec::with_capacity(x.dim());
        for (i, a) in mats.iter().enumerate() {
            let block = x.block(i);
            if block.iter().all(|&v| v == 0.0) {
                out.extend(std::iter::repeat_n(0.0, block.len()));
                continue;
            }
            let y = linalg::row_times(block, a);
            if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow {
                    species: i + 1,
                    value: *bad,
                });
            }
            // H1 violations can make entries negative; surface them as data
            // in `validate`, but never hand out an invalid state.
            if y.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidState(format!(
                    "species {} block became negative",
                    i + 1
                )));
            }
            out.extend(y);
        }
        Ok(x.with_values(out))
    }
}

/// `Φ_A(x)`: one step of the model.
pub fn step(model: &StructuredModel, x: &StructuredState) -> Result<StructuredState> {
    let mats = model.matrices(x)?;
    model.apply(x, &mats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegativeEntry {
    pub state: usize,
    pub species: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatternViolation {
    /// The declared pattern is not primitive although the model is in
    /// primitive mode.
    NotPrimitive { species: usize },
    Mismatch {
        state: usize,
        species: usize,
        row: usize,
        col: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapEscape {
    pub state: usize,
    /// Image of an in-box state, or the last orbit point of an outside state
    /// that failed to enter within the horizon.
    pub image: Vec<f64>,
    pub started_inside: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub h1: Vec<NegativeEntry>,
    pub h2: Vec<PatternViolation>,
    pub h3: Vec<TrapEscape>,
    pub evaluation_errors: Vec<(usize, String)>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.h1.is_empty() && self.h2.is_empty() && self.h3.is_empty() && self.evaluation_errors.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    /// Steps allowed for an outside state to enter the trapping box.
    pub entry_horizon: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { entry_horizon: 1000 }
    }
}

pub fn validate(model: &StructuredModel, grid: &[StructuredState]) -> Result<ValidationReport> {
    validate_with(model, grid, ValidateOptions::default())
}

/// Samples H1–H3 on `grid`. Violations are data in the report.
pub fn validate_with(
    model: &StructuredModel,
    grid: &[StructuredState],
    opts: ValidateOptions,
) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::Contract("validation grid is empty".into()));
    }
    let mut report = ValidationReport::default();
    if model.mode == PatternMode::Primitive {
        for (i, p) in model.patterns.iter().enumerate() {
            if !p.is_primitive() {
                report.h2.push(PatternViolation::NotPrimitive { species: i + 1 });
            }
        }
    }
    for (k, x) in grid.iter().enumerate() {
        model.check_dims(x)?;
        let mats = match model.matrices(x) {
            Ok(m) => m,
            Err(e) => {
                report.evaluation_errors.push((k, e.to_string()));
                continue;
            }
        };
        let mut nonnegative = true;
        for (i, a) in mats.iter().enumerate() {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    if a[(r, c)] < 0.0 {
                        nonnegative = false;
                        report.h1.push(NegativeEntry {
                            state: k,
                            species: i + 1,
                            row: r + 1,
                            col: c + 1,
                            value: a[(r, c)],
                        });
                    }
                }
            }
            if let Some((r, c)) = model.patterns[i].mismatch(a) {
                report.h2.push(PatternViolation::Mismatch {
                    state: k,
                    species: i + 1,
                    row: r + 1,
                    col: c + 1,
                    value: a[(r, c)],
                });
            }
        }
        if !nonnegative {
            continue;
        }
        let inside = model.trap.contains(x.as_slice());
        match model.apply(x, &mats) {
            Ok(y) if inside => {
                if !model.trap.contains(y.as_slice()) {
                    report.h3.push(TrapEscape {
                        state: k,
                        image: y.into_vec(),
                        started_inside: true,
                    });
                }
            }
            Ok(_) => {
                if let Err(last) = enters_box(model, x, opts.entry_horizon) {
                    report.h3.push(TrapEscape {
                        state: k,
                        image: last,
                        started_inside: false,
                    });
                }
            }
            Err(e) => report.evaluation_errors.push((k, e.to_string())),
        }
    }
    Ok(report)
}

fn enters_box(model: &StructuredModel, x: &StructuredState, horizon: usize) -> Result<(), Vec<f64>> {
    let mut x = x.clone();
    for _ in 0..horizon {
        if model.trap.contains(x.as_slice()) {
            return Ok(());
        }
        x = match step(model, &x) {
            Ok(y) => y,
            Err(_) => return Err(x.into_vec()),
        };
    }
    if model.trap.contains(x.as_slice()) {
        Ok(())
    } else {
        Err(x.into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(f: impl Fn(f64) -> f64 + Send + Sync + 'static, upper: f64) -> StructuredModel {
        StructuredModel::new(
            "scalar",
            vec![1],
            Arc::new(FnProjection(move |_, x: &StructuredState| {
                DMatrix::from_element(1, 1, f(x.as_slice()[0]))
            })),
            vec![SignPattern::full(1)],
            TrapBox::new(vec![upper]).unwrap(),
            PatternMode::Primitive,
        )
        .unwrap()
    }

    #[test]
    fn state_rejects_negative_and_mismatched_blocks() {
        assert!(StructuredState::new(vec![vec![1.0, -0.1]]).is_err());
        assert!(StructuredState::new(vec![vec![f64::NAN]]).is_err());
        assert!(StructuredState::from_flat(&[1, 2], vec![1.0, 2.0]).is_err());
        let x = StructuredState::new(vec![vec![1.0], vec![0.5, 0.25]]).unwrap();
        assert_eq!(x.dims(), vec![1, 2]);
        assert_eq!(x.norm(1), 0.75);
    }

    #[test]
    fn face_uses_extinction_threshold() {
        let x = StructuredState::new(vec![vec![1e-16], vec![2.0]]).unwrap();
        assert_eq!(x.face(), ExtinctionFace::new(2, [1]));
        assert!(!x.is_interior());
        assert_eq!(x.face_with_threshold(0.0), ExtinctionFace::full(2));
    }

    #[test]
    fn proper_faces_enumerates_all_but_the_interior() {
        let faces = ExtinctionFace::proper_faces(3);
        assert_eq!(faces.len(), 7);
        assert!(faces[0].is_empty());
        assert!(faces.iter().all(|f| !f.is_interior()));
    }

    #[test]
    fn sir_pattern_components() {
        let p = SignPattern::from_rows(&[&[true, true], &[false, true]]);
        assert_eq!(irreducible_components(&p), vec![vec![0], vec![1]]);
        assert!(!p.is_primitive());
        assert!(!p.is_irreducible());
    }

    #[test]
    fn primitive_pattern_is_one_component() {
        let p = SignPattern::from_rows(&[&[false, true, false], &[false, false, true], &[true, true, false]]);
        assert!(p.is_primitive());
        assert_eq!(irreducible_components(&p), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn diagonal_pattern_splits_into_singletons() {
        let p = SignPattern::diagonal(3);
        assert_eq!(irreducible_components(&p).len(), 3);
        // irreducible but periodic: a cycle is not primitive
        let cycle = SignPattern::from_rows(&[&[false, true], &[true, false]]);
        assert!(cycle.is_irreducible());
        assert!(!cycle.is_primitive());
    }

    #[test]
    fn components_are_topologically_ordered() {
        // 3 → 1 → 2, with {1,2} strongly connected
        let p = SignPattern::from_rows(&[&[false, true, false], &[true, false, false], &[true, false, false]]);
        assert_eq!(irreducible_components(&p), vec![vec![2], vec![0, 1]]);
    }

    #[test]
    fn step_scalar_ricker() {
        let m = scalar_model(|x| (1.0 - x).exp(), 1.0);
        let y = step(&m, &m.state(vec![1.0]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[1.0]);
        let y = step(&m, &m.state(vec![2.0]).unwrap()).unwrap();
        assert!((y.as_slice()[0] - 0.735_758_882_342_885).abs() < 1e-12);
        let y = step(&m, &m.zero_state()).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);
    }

    #[test]
    fn step_reports_overflow_and_dimension_errors() {
        let m = scalar_model(|x| (1.0 - x).exp(), 1.0);
        let big = m.state(vec![1e6]).unwrap();
        let m2 = scalar_model(|x| x.exp(), 1.0);
        assert!(matches!(step(&m2, &big), Err(Error::NumericOverflow { species: 1, .. })));
        let wrong = StructuredState::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(step(&m, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn validate_flags_negative_entries() {
        let m = scalar_model(|x| 1.0 - 2.0 * x, 1.0);
        let grid = m.trap_box().lattice(m.dims(), 4, true);
        let report = validate(&m, &grid).unwrap();
        assert!(!report.h1.is_empty());
        assert!(!report.passes());
    }

    #[test]
    fn validate_flags_box_escape() {
        // x ↦ 2x leaves [0,1]
        let m = scalar_model(|_| 2.0, 1.0);
        let grid = m.trap_box().lattice(m.dims(), 3, false);
        let report = validate(&m, &grid).unwrap();
        assert!(report.h1.is_empty() && report.h2.is_empty());
        assert!(!report.h3.is_empty());
    }

    #[test]
    fn lattice_points_stay_in_box() {
        let b = TrapBox::new(vec![1.0, 2.0]).unwrap();
        let pts = b.lattice(&[1, 1], 5, false);
        assert_eq!(pts.len(), 25);
        assert!(pts.iter().all(|p| b.contains(p.as_slice()) && p.is_interior()));
        let with_zero = b.lattice(&[2], 3, true);
        assert_eq!(with_zero[0].as_slice(), &[0.0, 0.0]);
        assert_eq!(with_zero[8].as_slice(), &[1.0, 2.0]);
    }
}
