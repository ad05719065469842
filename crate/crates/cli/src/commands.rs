use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use permanence::certify::{
    certify_lv, certify_sampled, meta_condition, sir_threshold, CertificateStatus, PermanenceCertificate,
    SamplingOptions, SearchOptions, TwoSpeciesOptions,
};
use permanence::dynamics::{self, face_lattice, face_starts, interior_grid, occupation_measure};
use permanence::invasion::{invasion_rate_birkhoff, invasion_rate_measure, invasion_rate_norm, uniform_invasion_lower_bound};
use permanence::robustness::{canonical_directions, robustness_sweep, Analysis};
use permanence::{Error, StructuredModel};
use serde_json::{json, Value};

use crate::config::{CertificateMethod, ConfigError, Format, ModelConfig, RunConfig, SweepAnalysis};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_INCOMPLETE: u8 = 4;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Library(Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => e.fmt(f),
            Failure::Library(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

struct Table {
    name: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub struct Report {
    command: &'static str,
    result: Value,
    tables: Vec<Table>,
    /// Human-readable summary for standard output.
    pub table: String,
    pub exit_code: u8,
}

impl Report {
    pub fn write(&self, dir: &Path, format: Format, cfg: &RunConfig) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        if format.json() {
            let doc = json!({
                "tool": { "name": "permanence", "version": env!("CARGO_PKG_VERSION") },
                "command": self.command,
                "config": cfg.resolved(),
                "result": self.result,
            });
            let text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
            fs::write(dir.join(format!("{}.json", self.command)), text + "\n")?;
        }
        if format.csv() {
            for t in &self.tables {
                let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
                w.write_record(&t.header)?;
                for row in &t.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn start_state(cfg: &RunConfig, model: &StructuredModel) -> Result<permanence::StructuredState, Failure> {
    match &cfg.analysis.start {
        Some(v) => Ok(model.state(v.clone())?),
        None => {
            let mut x: Vec<f64> = model.trap_box().upper().iter().map(|u| u / 2.0).collect();
            if let ModelConfig::Sir(_) = cfg.model {
                // I + R may not exceed N
                x[1] = x[0] / 4.0;
                x[2] = x[0] / 4.0;
            }
            Ok(model.state(x)?)
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Report, Failure> {
    let model = cfg.build_model()?;
    let x0 = start_state(cfg, &model)?;
    let traj = dynamics::simulate(&model, &x0, cfg.analysis.horizon, cfg.burn_in())?;
    let names = cfg.coordinate_names(&model);
    let mut header = vec!["step".to_string()];
    header.extend(names.iter().cloned());
    let rows = traj
        .rows()
        .enumerate()
        .map(|(k, r)| std::iter::once(k.to_string()).chain(r.iter().map(|v| num(*v))).collect())
        .collect();
    let measure = occupation_measure(&traj).ok();
    let result = json!({
        "model": model.name(),
        "coordinates": names,
        "horizon": traj.horizon(),
        "burn_in": traj.burn_in(),
        "steps_taken": traj.len() - 1,
        "start": x0.as_slice(),
        "final": traj.row(traj.len() - 1),
        "min_norms": measure.as_ref().map(|m| m.min_norms.clone()),
        "max_norms": measure.as_ref().map(|m| m.max_norms.clone()),
        "mean": measure.as_ref().map(|m| m.mean.clone()),
        "period": measure.as_ref().and_then(|m| m.cycle.as_ref().map(Vec::len)),
        "diverged": traj.diverged,
        "underflowed": traj.underflowed,
        "failure": traj.failure,
        "pattern_mismatches": traj.pattern_mismatches,
    });
    let mut table = String::new();
    writeln!(table, "simulate {} for {} steps (burn-in {})", model.name(), traj.len() - 1, traj.burn_in()).unwrap();
    if let Some(m) = &measure {
        for i in 0..model.species_count() {
            writeln!(table, "  species {}: min norm {:.6e}, max norm {:.6e}", i + 1, m.min_norms[i], m.max_norms[i]).unwrap();
        }
    }
    if let Some(f) = &traj.failure {
        writeln!(table, "  stopped at step {}: {}", f.step, f.message).unwrap();
    }
    Ok(Report {
        command: "simulate",
        result,
        tables: vec![Table {
            name: "trajectory",
            header,
            rows,
        }],
        table,
        exit_code: EXIT_OK,
    })
}

pub fn invade(cfg: &RunConfig) -> Result<Report, Failure> {
    let model = cfg.build_model()?;
    let m = model.species_count();
    let face = cfg.face(m);
    let x0 = match &cfg.analysis.start {
        Some(v) => {
            let x = model.state(v.clone())?;
            if !x.lies_on(&face) {
                return Err(ConfigError(format!("analysis.start does not lie on face {face}")).into());
            }
            x
        }
        None if face.is_empty() => model.zero_state(),
        None => face_starts(&model, &face, 1).remove(0),
    };
    let traj = dynamics::simulate(&model, &x0, cfg.analysis.horizon, cfg.burn_in())?;
    if let Some(f) = &traj.failure {
        return Err(Error::Contract(format!("orbit failed at step {}: {}", f.step, f.message)).into());
    }
    let measure = occupation_measure(&traj)?;
    let mut species = Vec::new();
    let mut rows = Vec::new();
    let mut table = String::new();
    writeln!(table, "invasion rates of {} on face {face}", model.name()).unwrap();
    for i in face.absent() {
        let norm = invasion_rate_norm(&model, i, &traj)?;
        let birkhoff = invasion_rate_birkhoff(&model, i, &traj)?;
        let at_measure = invasion_rate_measure(&model, i, &measure, Some(&face))?;
        writeln!(
            table,
            "  r_{} = {:.6} ± {:.1e} (norm {:.6}, birkhoff {:.6}, {:?})",
            i + 1,
            at_measure.value,
            at_measure.uncertainty,
            norm.value,
            birkhoff.value,
            at_measure.method
        )
        .unwrap();
        for est in [&norm, &birkhoff, &at_measure] {
            rows.push(vec![
                (i + 1).to_string(),
                serde_json::to_value(est.method).unwrap().as_str().unwrap().to_string(),
                num(est.value),
                num(est.uncertainty),
                num(est.limsup),
            ]);
        }
        species.push(json!({
            "species": i + 1,
            "value": at_measure.value,
            "norm": norm,
            "birkhoff": birkhoff,
            "measure": at_measure,
        }));
    }
    let lower_bounds = match cfg.analysis.lower_bound_grid {
        Some(n) if !face.is_empty() => {
            let grid = face_lattice(&model, &face, n);
            let bounds = face
                .absent()
                .map(|i| uniform_invasion_lower_bound(&model, i, &face, &grid, cfg.analysis.lower_bound_t_max))
                .collect::<Result<Vec<_>, _>>()?;
            for b in &bounds {
                writeln!(table, "  uniform lower bound for species {}: {:.6}", b.species, b.value).unwrap();
            }
            Some(bounds)
        }
        _ => None,
    };
    let result = json!({
        "model": model.name(),
        "face": face.present().map(|i| i + 1).collect::<Vec<_>>(),
        "start": x0.as_slice(),
        "horizon": traj.horizon(),
        "burn_in": traj.burn_in(),
        "measure_period": measure.cycle.as_ref().map(Vec::len),
        "species": species,
        "lower_bounds": lower_bounds,
    });
    Ok(Report {
        command: "invade",
        result,
        tables: vec![Table {
            name: "invasion",
            header: ["species", "method", "value", "uncertainty", "limsup"].map(String::from).to_vec(),
            rows,
        }],
        table,
        exit_code: EXIT_OK,
    })
}

fn certificate_table(cert: &PermanenceCertificate) -> Table {
    let m = cert.weights.len();
    let mut header = vec!["face".to_string()];
    header.extend((1..=m).map(|i| format!("r{i}")));
    header.push("margin".into());
    let rows = cert
        .objects
        .iter()
        .map(|o| {
            std::iter::once(o.face.to_string())
                .chain(o.growth.iter().map(|v| num(*v)))
                .chain(std::iter::once(num(o.margin)))
                .collect()
        })
        .collect();
    Table {
        name: "certificate",
        header,
        rows,
    }
}

fn status_code(status: CertificateStatus) -> u8 {
    match status {
        CertificateStatus::Certified => EXIT_OK,
        CertificateStatus::Infeasible => EXIT_INFEASIBLE,
        CertificateStatus::EquilibriaIncomplete => EXIT_INCOMPLETE,
    }
}

fn describe(cert: &PermanenceCertificate, table: &mut String) {
    let status = serde_json::to_value(cert.status).unwrap();
    writeln!(table, "  status {}", status.as_str().unwrap()).unwrap();
    writeln!(table, "  weights {:?}, margin {}", cert.weights, cert.margin).unwrap();
    for f in &cert.degenerate_faces {
        writeln!(table, "  degenerate face {f}").unwrap();
    }
}

pub fn certify(cfg: &RunConfig) -> Result<Report, Failure> {
    let model = cfg.build_model()?;
    let a = &cfg.analysis;
    let search = SearchOptions {
        p_max: a.p_max,
        route: a.route.into(),
    };
    let sampling = SamplingOptions {
        starts_per_face: a.starts_per_face,
        horizon: a.horizon,
    };
    let mut table = String::new();
    writeln!(table, "certificate for {}", model.name()).unwrap();
    let sampled = a.certificate == CertificateMethod::Sampled;
    let (result, tables, exit_code) = match &cfg.model {
        ModelConfig::Lv(_) if !sampled => {
            let spec = cfg.lv_spec().expect("lv model")?;
            let cert = certify_lv(&spec, &search)?;
            describe(&cert, &mut table);
            let code = status_code(cert.status);
            (json!({ "certificate": cert }), vec![certificate_table(&cert)], code)
        }
        ModelConfig::Sir(_) if !sampled => {
            let t = sir_threshold(&cfg.sir_spec().expect("sir model"))?;
            writeln!(table, "  threshold value {}, {} at the disease-free fixed point, certified {}", t.value, t.exact_value, t.certified)
                .unwrap();
            let code = if t.certified { EXIT_OK } else { EXIT_INFEASIBLE };
            (json!({ "sir_threshold": t }), Vec::new(), code)
        }
        _ => {
            let cert = certify_sampled(&model, &sampling, &search)?;
            describe(&cert, &mut table);
            let code = status_code(cert.status);
            let mut result = json!({ "certificate": cert });
            if let Some(spec) = cfg.meta_spec() {
                let cond = meta_condition(&spec?);
                writeln!(table, "  patch criteria v1 = {}, v2 = {} ({})", cond.v1, cond.v2, cond.caveat).unwrap();
                result["meta_condition"] = serde_json::to_value(cond).unwrap();
            }
            (result, vec![certificate_table(&cert)], code)
        }
    };
    Ok(Report {
        command: "certify",
        result,
        tables,
        table,
        exit_code,
    })
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, Failure> {
    let model = cfg.build_model()?;
    let a = &cfg.analysis;
    let analysis = match a.sweep {
        SweepAnalysis::Permanence => Analysis::Permanence {
            eta_grid: a.eta_grid.clone(),
            starts: interior_grid(&model, a.start_grid),
            horizon: a.horizon,
        },
        SweepAnalysis::TwoSpecies => Analysis::TwoSpecies(TwoSpeciesOptions {
            sampling: SamplingOptions {
                starts_per_face: a.starts_per_face,
                horizon: a.horizon,
            },
            tolerance: a.tolerance,
        }),
    };
    let directions = canonical_directions(&model);
    let report = robustness_sweep(&model, &a.deltas, &directions, &analysis)?;
    let rows = report
        .cells
        .iter()
        .map(|c| {
            vec![
                num(c.delta),
                c.direction.clone(),
                c.verdict.clone(),
                c.floor.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    let mut table = String::new();
    writeln!(table, "sweep of {} over {} directions", model.name(), directions.len()).unwrap();
    for c in &report.cells {
        writeln!(table, "  δ = {:<8} {:<24} {}", c.delta, c.direction, c.verdict).unwrap();
    }
    writeln!(table, "  {}", report.summary).unwrap();
    Ok(Report {
        command: "sweep",
        result: serde_json::to_value(&report).unwrap(),
        tables: vec![Table {
            name: "sweep",
            header: ["delta", "direction", "verdict", "floor"].map(String::from).to_vec(),
            rows,
        }],
        table,
        exit_code: EXIT_OK,
    })
}
