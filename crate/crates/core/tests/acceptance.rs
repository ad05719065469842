//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use permanence::certify::{
    certify_lv, meta_condition, sir_threshold, two_species_check, CertificateStatus, ConditionVerdict, Route,
    SearchOptions, TwoSpeciesOptions,
};
use permanence::dynamics::{
    default_burn_in, face_lattice, face_starts, interior_grid, occupation_measure, permanence_test, simulate,
    VerdictKind, DEFAULT_ETA_GRID,
};
use permanence::invasion::{invasion_rate_birkhoff, invasion_rate_norm, uniform_invasion_lower_bound};
use permanence::robustness::{
    canonical_directions, perturb, robustness_sweep, Analysis, Bump, DeviationCheck, PerturbationMode,
    PerturbationSpec,
};
use permanence::zoo::{self, fixtures, LotkaVolterraSpec, SirSpec};
use permanence::{step, ExtinctionFace, StructuredModel, StructuredState};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn zoo_fixtures() -> Vec<(&'static str, StructuredModel)> {
    vec![
        ("symmetric-lv", zoo::build_lv(&fixtures::symmetric_lv()).unwrap()),
        ("dominance-lv", zoo::build_lv(&fixtures::dominance_lv()).unwrap()),
        ("marginal-lv", zoo::build_lv(&fixtures::marginal_lv()).unwrap()),
        ("annual-0.9", zoo::build_annual(&fixtures::annual(0.9)).unwrap()),
        ("meta-mirrored", zoo::build_meta(&fixtures::mirrored_meta(0.95)).unwrap()),
        ("meta-dominance", zoo::build_meta(&fixtures::dominance_meta(0.95)).unwrap()),
        ("sir", zoo::build_sir(&SirSpec::rational(0.2, 3.0, 1.0)).unwrap()),
    ]
}

fn criterion_1() -> Outcome {
    let spec = LotkaVolterraSpec::from_rows(&[&[-1.0]], &[2.5]).unwrap();
    let m = zoo::build_lv(&spec).map_err(e)?;
    let t = 1_000_000;
    let clock = Instant::now();
    let traj = simulate(&m, &m.state(vec![0.5]).map_err(e)?, t, default_burn_in(t)).map_err(e)?;
    let mu = occupation_measure(&traj).map_err(e)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let mean = mu.mean[0];
    ensure((mean - 2.5).abs() < 0.05, format!("mean {mean}"))?;
    ensure(elapsed < 5.0, format!("runtime {elapsed:.2}s"))?;
    // (1/t)(ln x_t − ln x_0) = c − (1/t) Σ_{s<t} x_s along the whole orbit
    let sum: f64 = (0..t).map(|k| traj.row(k)[0]).sum();
    let lhs = (traj.row(t)[0].ln() - traj.row(0)[0].ln()) / t as f64;
    let rhs = 2.5 - sum / t as f64;
    ensure((lhs - rhs).abs() < 1e-6, format!("identity gap {}", (lhs - rhs).abs()))?;
    Ok(format!("mean {mean:.6}, identity gap {:.1e}, {elapsed:.2}s", (lhs - rhs).abs()))
}

fn criterion_2() -> Outcome {
    let horizon = 100_000;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (name, m) in zoo_fixtures() {
        for face in ExtinctionFace::proper_faces(m.species_count()) {
            let x0 = if face.is_empty() {
                m.zero_state()
            } else {
                face_starts(&m, &face, 1).remove(0)
            };
            if m.projection().check_domain(&x0).is_err() {
                continue;
            }
            let traj = simulate(&m, &x0, horizon, default_burn_in(horizon)).map_err(e)?;
            for i in face.absent() {
                let a = invasion_rate_norm(&m, i, &traj).map_err(e)?;
                let b = invasion_rate_birkhoff(&m, i, &traj).map_err(e)?;
                let gap = (a.value - b.value).abs();
                worst = worst.max(gap);
                checked += 1;
                ensure(gap <= 1e-3, format!("{name} face {face} species {}: {} vs {}", i + 1, a.value, b.value))?;
            }
        }
    }
    let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
    let on_face = simulate(&m, &m.state(vec![0.4, 0.0]).unwrap(), horizon, default_burn_in(horizon)).map_err(e)?;
    for est in [invasion_rate_norm(&m, 1, &on_face), invasion_rate_birkhoff(&m, 1, &on_face)] {
        let v = est.map_err(e)?.value;
        ensure((v - 0.5).abs() <= 1e-3, format!("symmetric face {{1}} r_2 = {v}"))?;
    }
    let origin = simulate(&m, &m.zero_state(), horizon, default_burn_in(horizon)).map_err(e)?;
    for i in 0..2 {
        let v = invasion_rate_norm(&m, i, &origin).map_err(e)?.value;
        ensure((v - 1.0).abs() <= 1e-6, format!("origin r_{} = {v}", i + 1))?;
    }
    Ok(format!("{checked} face/species pairs, worst method gap {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let t = 1_000_000;
    let models = [
        ("symmetric-lv", zoo::build_lv(&fixtures::symmetric_lv()).unwrap()),
        ("annual-0.9", zoo::build_annual(&fixtures::annual(0.9)).unwrap()),
        ("meta-mirrored", zoo::build_meta(&fixtures::mirrored_meta(0.95)).unwrap()),
    ];
    let mut worst = 0.0f64;
    for (name, m) in models {
        let x0 = interior_grid(&m, 2).remove(0);
        let traj = simulate(&m, &x0, t, default_burn_in(t)).map_err(e)?;
        for i in 0..m.species_count() {
            let v = invasion_rate_norm(&m, i, &traj).map_err(e)?.value;
            worst = worst.max(v.abs());
            ensure(v.abs() <= 1e-3, format!("{name} r_{} = {v}", i + 1))?;
        }
    }
    Ok(format!("max |r_i| = {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let by = |route| SearchOptions {
        route,
        ..Default::default()
    };
    let sym_v = certify_lv(&fixtures::symmetric_lv(), &by(Route::VertexEnumeration)).map_err(e)?;
    let sym_s = certify_lv(&fixtures::symmetric_lv(), &by(Route::Simplex)).map_err(e)?;
    ensure(sym_v.status == CertificateStatus::Certified, "symmetric not certified")?;
    ensure(sym_v.weights == vec![1.0, 1.0], format!("weights {:?}", sym_v.weights))?;
    ensure((sym_v.margin - 0.5).abs() <= 1e-9, format!("margin {}", sym_v.margin))?;
    let dom_v = certify_lv(&fixtures::dominance_lv(), &by(Route::VertexEnumeration)).map_err(e)?;
    let dom_s = certify_lv(&fixtures::dominance_lv(), &by(Route::Simplex)).map_err(e)?;
    ensure(dom_v.status == CertificateStatus::Infeasible, "dominance not infeasible (vertex)")?;
    ensure(dom_s.status == CertificateStatus::Infeasible, "dominance not infeasible (simplex)")?;
    for (a, b) in [(&sym_v, &sym_s), (&dom_v, &dom_s)] {
        ensure((a.margin - b.margin).abs() <= 1e-9, format!("route margins {} vs {}", a.margin, b.margin))?;
        let scale = a.lp_optimum.abs().max(1.0);
        ensure(
            (a.lp_optimum - b.lp_optimum).abs() <= 1e-9 * scale,
            format!("route optima {} vs {}", a.lp_optimum, b.lp_optimum),
        )?;
    }
    let m = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
    let verdict = permanence_test(&m, &DEFAULT_ETA_GRID, &interior_grid(&m, 5), 100_000).map_err(e)?;
    ensure(verdict.verdict == VerdictKind::PermanentEmpirically, format!("{:?}", verdict.verdict))?;
    let eta = verdict.eta.unwrap_or(0.0);
    ensure(eta >= 0.05, format!("η = {eta}"))?;
    Ok(format!("margin {}, η = {eta}", sym_v.margin))
}

fn criterion_5() -> Outcome {
    let opts = TwoSpeciesOptions::default();
    let mut rows = Vec::new();
    let expect = |cert: bool, sim: VerdictKind| match (cert, sim) {
        (true, VerdictKind::PermanentEmpirically) => Some(ConditionVerdict::Passes),
        (false, VerdictKind::ExtinctionWitness) => Some(ConditionVerdict::Fails),
        _ => None,
    };
    let cases: Vec<(&str, StructuredModel, bool)> = vec![
        (
            "symmetric-lv",
            zoo::build_lv(&fixtures::symmetric_lv()).unwrap(),
            certify_lv(&fixtures::symmetric_lv(), &SearchOptions::default()).unwrap().status
                == CertificateStatus::Certified,
        ),
        (
            "dominance-lv",
            zoo::build_lv(&fixtures::dominance_lv()).unwrap(),
            certify_lv(&fixtures::dominance_lv(), &SearchOptions::default()).unwrap().status
                == CertificateStatus::Certified,
        ),
        (
            "meta-mirrored",
            zoo::build_meta(&fixtures::mirrored_meta(0.95)).unwrap(),
            meta_condition(&fixtures::mirrored_meta(0.95)).certified,
        ),
        (
            "meta-dominance",
            zoo::build_meta(&fixtures::dominance_meta(0.95)).unwrap(),
            meta_condition(&fixtures::dominance_meta(0.95)).certified,
        ),
    ];
    let mut disagreements = 0;
    for (name, m, certified) in cases {
        let sim = permanence_test(&m, &DEFAULT_ETA_GRID, &interior_grid(&m, 2), 50_000).map_err(e)?;
        let check = two_species_check(&m, &opts).map_err(e)?;
        let reference = expect(certified, sim.verdict);
        if reference != Some(check.robustly_permanent) {
            disagreements += 1;
        }
        rows.push(format!("{name}: {:?}", check.robustly_permanent));
    }
    ensure(disagreements == 0, format!("{disagreements} disagreements ({})", rows.join(", ")))?;
    Ok(rows.join(", "))
}

fn criterion_6() -> Outcome {
    let endemic = SirSpec::rational(0.2, 3.0, 1.0);
    let t = sir_threshold(&endemic).map_err(e)?;
    ensure(t.certified, "m=0.2 not certified")?;
    ensure((t.value - 3.31).abs() <= 0.01, format!("value {}", t.value))?;
    let m = zoo::build_sir(&endemic).map_err(e)?;
    let horizon = 100_000;
    let burn = default_burn_in(horizon);
    let traj = simulate(&m, &m.state(vec![t.x_bar, 0.01, 0.0]).map_err(e)?, horizon, burn).map_err(e)?;
    ensure(traj.failure.is_none(), "endemic orbit failed")?;
    let floor = (burn..traj.len()).map(|k| traj.row(k)[1]).fold(f64::INFINITY, f64::min);
    ensure(floor > 1e-6, format!("I floor {floor}"))?;

    let fading = SirSpec::rational(2.0, 0.1, 1.0);
    let f = sir_threshold(&fading).map_err(e)?;
    ensure(!f.certified, "m=2 certified")?;
    let m = zoo::build_sir(&fading).map_err(e)?;
    let traj = simulate(&m, &m.state(vec![f.x_bar, 0.01, 0.0]).map_err(e)?, horizon, burn).map_err(e)?;
    let tail: Vec<f64> = (burn..traj.len()).map(|k| traj.row(k)[1]).collect();
    ensure(tail.windows(2).all(|w| w[1] <= w[0]), "I not monotone after burn-in")?;
    ensure(tail.iter().all(|&i| i < 1e-12), "I not below 1e-12 after burn-in")?;
    Ok(format!("value {:.4} (I floor {floor:.3e}); value {:.2e} (I fades)", t.value, f.value))
}

fn criterion_7() -> Outcome {
    let spec = fixtures::mirrored_meta(0.95);
    let m = zoo::build_meta(&spec).map_err(e)?;
    let verdict = permanence_test(&m, &DEFAULT_ETA_GRID, &interior_grid(&m, 3), 100_000).map_err(e)?;
    let floor = verdict.floors.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(verdict.floors.len() == 81, "grid is not 3x3x3x3")?;
    ensure(floor > 1e-3, format!("min norm {floor}"))?;
    let mut parts = vec![format!("floor {floor:.4}")];
    for (invader, resident) in [(1usize, 0usize), (0, 1)] {
        let face = ExtinctionFace::new(2, [resident]);
        let coarse = uniform_invasion_lower_bound(&m, invader, &face, &face_lattice(&m, &face, 10), 10_000)
            .map_err(e)?;
        let fine = uniform_invasion_lower_bound(&m, invader, &face, &face_lattice(&m, &face, 20), 10_000)
            .map_err(e)?;
        ensure(coarse.value > 0.4, format!("species {} bound {}", invader + 1, coarse.value))?;
        ensure(
            (coarse.value - fine.value).abs() < 1e-2,
            format!("species {} refinement {} -> {}", invader + 1, coarse.value, fine.value),
        )?;
        parts.push(format!("r_{} ≥ {:.4} (refined {:.4})", invader + 1, coarse.value, fine.value));
    }
    Ok(parts.join(", "))
}

fn criterion_8() -> Outcome {
    let sym = zoo::build_lv(&fixtures::symmetric_lv()).unwrap();
    let suppress = |delta: f64, targets: Vec<usize>| PerturbationSpec {
        delta,
        bump: Bump::One,
        targets,
        mode: PerturbationMode::Suppress,
    };
    let p0 = perturb(&sym, &suppress(0.0, vec![0, 1]), &DeviationCheck::default()).map_err(e)?;
    let x0 = sym.state(vec![0.2, 1.1]).unwrap();
    let a = simulate(&sym, &x0, 1000, 0).map_err(e)?;
    let b = simulate(&p0.model, &x0, 1000, 0).map_err(e)?;
    ensure(a.rows().zip(b.rows()).all(|(r, s)| r == s), "δ=0 orbit differs")?;

    let scalar = zoo::build_lv(&LotkaVolterraSpec::from_rows(&[&[-1.0]], &[1.0]).unwrap()).unwrap();
    let x_hat = scalar.state(vec![1.0]).unwrap();
    for delta in [1e-3, 1e-2, 1e-1] {
        let p = perturb(&scalar, &suppress(delta, vec![0]), &DeviationCheck::default()).map_err(e)?;
        let shift = p.model.matrix(0, &x_hat)[(0, 0)].ln() - scalar.matrix(0, &x_hat)[(0, 0)].ln();
        ensure((shift + delta / 2.0).abs() <= 1e-12, format!("shift {shift} at δ = {delta}"))?;
    }

    let marginal = zoo::build_lv(&fixtures::marginal_lv()).unwrap();
    let starts = interior_grid(&marginal, 3);
    for delta in [1e-3, 1e-2, 1e-1] {
        let p = perturb(&marginal, &suppress(delta, vec![1]), &DeviationCheck::default()).map_err(e)?;
        let v = permanence_test(&p.model, &DEFAULT_ETA_GRID, &starts, 100_000).map_err(e)?;
        ensure(
            v.verdict == VerdictKind::ExtinctionWitness,
            format!("marginal δ = {delta}: {:?}", v.verdict),
        )?;
    }

    let analysis = Analysis::Permanence {
        eta_grid: DEFAULT_ETA_GRID.to_vec(),
        starts: interior_grid(&sym, 3),
        horizon: 100_000,
    };
    let report = robustness_sweep(&sym, &[1e-3, 1e-2], &canonical_directions(&sym), &analysis).map_err(e)?;
    ensure(
        report.cells.iter().all(|c| c.verdict == "permanent-empirically"),
        format!("symmetric sweep: {}", report.summary),
    )?;
    Ok(format!("marginal loses species 2 at every δ; symmetric: {}", report.summary))
}

fn random_state(rng: &mut StdRng, m: &StructuredModel, sir: bool) -> StructuredState {
    let upper = m.trap_box().upper();
    let mut v: Vec<f64> = upper.iter().map(|u| rng.random::<f64>() * u).collect();
    if sir {
        let share: f64 = rng.random();
        let (i, r) = (v[1], v[2]);
        let total = (i + r).max(f64::MIN_POSITIVE);
        v[1] = v[0] * share * i / total;
        v[2] = v[0] * share * r / total;
    }
    // zero a random subset of species; SIR keeps N > 0 because the infection
    // entry (N − I − R)u(I) vanishes once no susceptibles are left
    let mut offset = 0;
    for (i, &d) in m.dims().iter().enumerate() {
        if !(sir && i == 0) && rng.random::<f64>() < 0.3 {
            v[offset..offset + d].iter_mut().for_each(|x| *x = 0.0);
        }
        offset += d;
    }
    m.state(v).unwrap()
}

fn criterion_9() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut states = 0;
    for (name, m) in zoo_fixtures() {
        let sir = name == "sir";
        for _ in 0..10_000 {
            let x = random_state(&mut rng, &m, sir);
            let face = x.face_with_threshold(0.0);
            let mats = m.matrices(&x).map_err(e)?;
            for (i, (a, p)) in mats.iter().zip(m.patterns()).enumerate() {
                ensure(p.mismatch(a).is_none(), format!("{name}: pattern of species {} at {x:?}", i + 1))?;
            }
            let y = step(&m, &x).map_err(e)?;
            ensure(y.as_slice().iter().all(|v| *v >= 0.0), format!("{name}: negative image of {x:?}"))?;
            ensure(y.lies_on(&face), format!("{name}: face {face} not invariant at {x:?}"))?;
            if sir {
                let (n, i, r) = (y.as_slice()[0], y.as_slice()[1], y.as_slice()[2]);
                ensure(i + r <= n * (1.0 + 1e-12), format!("sir: N < I + R after {x:?}"))?;
            }
            states += 1;
        }
    }
    Ok(format!("{states} states, zero violations"))
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("LV time averaging", criterion_1),
        ("invasion-rate cross-validation", criterion_2),
        ("zero law on interior attractors", criterion_3),
        ("certificate soundness", criterion_4),
        ("two-species characterization", criterion_5),
        ("SIR threshold", criterion_6),
        ("metacommunity coexistence", criterion_7),
        ("perturbation contracts", criterion_8),
        ("structural invariants", criterion_9),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => report(format!("PASS {} {name}: {detail} [{secs:.1}s]", k + 1)),
            Err(why) => {
                report(format!("FAIL {} {name}: {why} [{secs:.1}s]", k + 1));
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// Writes past the test harness's output capture.
fn report(line: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}
