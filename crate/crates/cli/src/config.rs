//! Run configuration: a TOML file with `[model.<zoo name>]`, `[analysis]`
//! and `[output]` tables. Unknown keys are rejected. Species and face
//! labels are 1-based.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use permanence::certify::Route;
use permanence::dynamics::DEFAULT_ETA_GRID;
use permanence::model::PatternMode;
use permanence::zoo::{self, AnnualPlantSpec, LotkaVolterraSpec, MetacommunitySpec, SirSpec};
use permanence::{ExtinctionFace, StructuredModel, TrapBox};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Lv(LvConfig),
    Annual(AnnualConfig),
    Meta(MetaConfig),
    Sir(SirConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvConfig {
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    /// Required when `b` is not competitive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_box: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnualConfig {
    pub germination: Vec<f64>,
    pub yield_exponent: Vec<f64>,
    pub seed_survival: Vec<f64>,
    pub competition: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    /// One 2×2 matrix per patch.
    pub competition: Vec<Vec<Vec<f64>>>,
    /// One `[c_1, c_2]` pair per patch.
    pub growth: Vec<[f64; 2]>,
    /// Column-stochastic k×k matrices for species 1 and 2.
    pub dispersal: [Vec<Vec<f64>>; 2],
    #[serde(default = "default_mode")]
    pub mode: PatternModeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternModeConfig {
    Primitive,
    IrreducibleComponents,
}

fn default_mode() -> PatternModeConfig {
    PatternModeConfig::Primitive
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirConfig {
    pub mortality: f64,
    pub contact: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAnalysis {
    Permanence,
    TwoSpecies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMethod {
    /// Equilibria for Lotka–Volterra, closed forms for SIR, sampling otherwise.
    Auto,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteConfig {
    Auto,
    VertexEnumeration,
    Simplex,
}

impl From<RouteConfig> for Route {
    fn from(r: RouteConfig) -> Self {
        match r {
            RouteConfig::Auto => Route::Auto,
            RouteConfig::VertexEnumeration => Route::VertexEnumeration,
            RouteConfig::Simplex => Route::Simplex,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub horizon: usize,
    /// Defaults to a tenth of the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Flat start state; defaults to the midpoint of the trapping box
    /// (simulate) or a Halton point on `face` (invade).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// Species present on the face probed by `invade`.
    pub face: Vec<usize>,
    pub starts_per_face: usize,
    pub eta_grid: Vec<f64>,
    /// Interior start lattice points per coordinate.
    pub start_grid: usize,
    pub deltas: Vec<f64>,
    pub sweep: SweepAnalysis,
    pub certificate: CertificateMethod,
    pub p_max: f64,
    pub route: RouteConfig,
    pub tolerance: f64,
    /// Lattice points per coordinate for the uniform lower bound; off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound_grid: Option<usize>,
    pub lower_bound_t_max: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            burn_in: None,
            start: None,
            face: Vec::new(),
            starts_per_face: 8,
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            start_grid: 3,
            deltas: vec![0.001, 0.01, 0.1],
            sweep: SweepAnalysis::Permanence,
            certificate: CertificateMethod::Auto,
            p_max: 1e6,
            route: RouteConfig::Auto,
            tolerance: 1e-3,
            lower_bound_grid: None,
            lower_bound_t_max: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: Format::Both,
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(bad(format!("{what}: rows must be nonempty and of equal length")));
    }
    Ok(DMatrix::from_row_iterator(n, k, rows.iter().flatten().copied()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// The configuration with every default filled in.
    pub fn resolved(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    fn check(&self) -> Result<(), ConfigError> {
        let a = &self.analysis;
        if a.horizon == 0 {
            return Err(bad("analysis.horizon must be positive"));
        }
        if let Some(b) = a.burn_in {
            if b >= a.horizon {
                return Err(bad("analysis.burn_in must be below analysis.horizon"));
            }
        }
        if a.starts_per_face == 0 || a.start_grid == 0 {
            return Err(bad("analysis.starts_per_face and analysis.start_grid must be positive"));
        }
        if !(a.p_max >= 1.0 && a.p_max.is_finite()) {
            return Err(bad("analysis.p_max must be finite and at least 1"));
        }
        if !(a.tolerance >= 0.0) {
            return Err(bad("analysis.tolerance must be nonnegative"));
        }
        if a.deltas.is_empty() || a.deltas.windows(2).any(|w| w[1] <= w[0]) || a.deltas[0] < 0.0 {
            return Err(bad("analysis.deltas must be a nonempty increasing list of nonnegative numbers"));
        }
        if a.eta_grid.is_empty() || a.eta_grid.windows(2).any(|w| w[1] >= w[0]) || a.eta_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(bad("analysis.eta_grid must be positive and strictly decreasing"));
        }
        if a.lower_bound_grid == Some(0) || a.lower_bound_t_max == 0 {
            return Err(bad("analysis.lower_bound_grid and analysis.lower_bound_t_max must be positive"));
        }
        let model = self.build_model()?;
        let m = model.species_count();
        if let Some(&s) = a.face.iter().find(|&&s| s == 0 || s > m) {
            return Err(bad(format!("analysis.face: species {s} is not in 1..={m}")));
        }
        if a.face.len() == m {
            return Err(bad("analysis.face must leave at least one species out"));
        }
        if let Some(start) = &a.start {
            model
                .state(start.clone())
                .map_err(|e| bad(format!("analysis.start: {e}")))?;
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        self.analysis
            .burn_in
            .unwrap_or_else(|| permanence::dynamics::default_burn_in(self.analysis.horizon))
    }

    pub fn face(&self, m: usize) -> ExtinctionFace {
        ExtinctionFace::new(m, self.analysis.face.iter().map(|s| s - 1))
    }

    pub fn build_model(&self) -> Result<StructuredModel, ConfigError> {
        let model = match &self.model {
            ModelConfig::Lv(c) => {
                let spec = self.lv_spec().expect("lv model")?;
                match &c.trap_box {
                    Some(upper) => {
                        let trap = TrapBox::new(upper.clone()).map_err(|e| bad(format!("model.lv.trap_box: {e}")))?;
                        zoo::build_lv_with_box(&spec, trap)
                    }
                    None => zoo::build_lv(&spec),
                }
                .map_err(|e| bad(format!("model.lv: {e}")))?
            }
            ModelConfig::Annual(c) => {
                let spec = AnnualPlantSpec {
                    germination: c.germination.clone(),
                    yield_exponent: c.yield_exponent.clone(),
                    seed_survival: c.seed_survival.clone(),
                    competition: matrix(&c.competition, "model.annual.competition")?,
                };
                zoo::build_annual(&spec).map_err(|e| bad(format!("model.annual: {e}")))?
            }
            ModelConfig::Meta(c) => {
                let mode = match c.mode {
                    PatternModeConfig::Primitive => PatternMode::Primitive,
                    PatternModeConfig::IrreducibleComponents => PatternMode::IrreducibleComponents,
                };
                zoo::build_meta_with_mode(&self.meta_spec().expect("meta model")?, mode)
                    .map_err(|e| bad(format!("model.meta: {e}")))?
            }
            ModelConfig::Sir(_) => {
                zoo::build_sir(&self.sir_spec().expect("sir model")).map_err(|e| bad(format!("model.sir: {e}")))?
            }
        };
        Ok(model)
    }

    pub fn lv_spec(&self) -> Option<Result<LotkaVolterraSpec, ConfigError>> {
        let ModelConfig::Lv(c) = &self.model else { return None };
        Some(
            matrix(&c.b, "model.lv.b")
                .and_then(|b| LotkaVolterraSpec::new(b, c.c.clone().into()).map_err(|e| bad(format!("model.lv: {e}")))),
        )
    }

    pub fn meta_spec(&self) -> Option<Result<MetacommunitySpec, ConfigError>> {
        let ModelConfig::Meta(c) = &self.model else { return None };
        let build = || -> Result<MetacommunitySpec, ConfigError> {
            let competition = c
                .competition
                .iter()
                .enumerate()
                .map(|(j, b)| matrix(b, &format!("model.meta.competition[{}]", j + 1)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MetacommunitySpec {
                competition,
                growth: c.growth.clone(),
                dispersal: [
                    matrix(&c.dispersal[0], "model.meta.dispersal[1]")?,
                    matrix(&c.dispersal[1], "model.meta.dispersal[2]")?,
                ],
            })
        };
        Some(build())
    }

    pub fn sir_spec(&self) -> Option<SirSpec> {
        let ModelConfig::Sir(c) = &self.model else { return None };
        Some(SirSpec::rational(c.mortality, c.contact, c.c))
    }

    /// Column names for flattened states.
    pub fn coordinate_names(&self, model: &StructuredModel) -> Vec<String> {
        match &self.model {
            ModelConfig::Sir(_) => vec!["N".into(), "I".into(), "R".into()],
            ModelConfig::Meta(_) => model
                .dims()
                .iter()
                .enumerate()
                .flat_map(|(i, &k)| (1..=k).map(move |p| format!("x{}_p{p}", i + 1)))
                .collect(),
            _ => (1..=model.species_count()).map(|i| format!("x{i}")).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LV: &str = "[model.lv]\nb = [[-1.0, -0.5], [-0.5, -1.0]]\nc = [1.0, 1.0]\n";

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::parse(LV).unwrap();
        assert_eq!(cfg.analysis.horizon, 10_000);
        assert_eq!(cfg.burn_in(), 1000);
        assert_eq!(cfg.output.format, Format::Both);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::parse(LV).unwrap();
        let again = RunConfig::parse(&cfg.resolved()).unwrap();
        assert_eq!(cfg.resolved(), again.resolved());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::parse(&format!("{LV}[analysis]\nhorizn = 5\n")).unwrap_err();
        assert!(err.0.contains("horizn"), "{err}");
        assert!(err.0.contains("line"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let err = RunConfig::parse(&format!("{LV}[analysis]\nface = [3]\n")).unwrap_err();
        assert!(err.0.contains("analysis.face"), "{err}");
        let err = RunConfig::parse("[model.sir]\nmortality = -1.0\ncontact = 1.0\nc = 1.0\n").unwrap_err();
        assert!(err.0.contains("model.sir"), "{err}");
    }
}
