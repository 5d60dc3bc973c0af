//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything; trailing numbers select
//! criteria, e.g. `cargo test --test acceptance -- 2 3`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;
use tlinf_core::analyzers::{make_admissible, make_analyzing_pair, SpectralProfile};
use tlinf_core::expansive::{measure_quasi_triangle, ExpansiveMatrix, HomogeneousGauge, QuasiNormStructure};
use tlinf_core::experiment::{self, ExperimentConfig, ExperimentKind};
use tlinf_core::field::{FrequencyGrid, GridSpec};
use tlinf_core::group::{
    isometry_check, reproducing_check, translation_bound_check, wavelet_support, wavelet_transform, weight_v, Group,
    GroupGrid, GroupPoint, VSampler,
};
use tlinf_core::norms::NormParams;
use tlinf_core::suite::{suite_generate, SuiteSpec};
use tlinf_core::MatrixSpec;

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn matrices() -> Vec<(&'static str, ExpansiveMatrix)> {
    vec![
        ("2", ExpansiveMatrix::diagonal(&[2.0]).unwrap()),
        ("2I", ExpansiveMatrix::diagonal(&[2.0, 2.0]).unwrap()),
        ("diag(2,4)", ExpansiveMatrix::diagonal(&[2.0, 4.0]).unwrap()),
        ("[[2,1],[0,2]]", ExpansiveMatrix::from_rows(2, &[2.0, 1.0, 0.0, 2.0]).unwrap()),
    ]
}

fn grid_for(a: &ExpansiveMatrix) -> FrequencyGrid {
    let spec = if a.dim() == 1 { GridSpec::new(1, 16.0, 256) } else { GridSpec::new(2, 8.0, 64) }.unwrap();
    FrequencyGrid::for_matrix(spec, a).unwrap()
}

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn quasi_norm_axioms() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, a) in matrices() {
        let qn = QuasiNormStructure::new(&a).unwrap();
        let mut rng = tlinf_core::rng::seeded(11);
        let d = a.dim();
        let mut bad = 0;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-2.0..2.0))).collect();
            let ax: Vec<f64> = (a.entries() * DVector::from_vec(x.clone())).iter().cloned().collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let r = qn.quasi_norm(&x);
            if qn.quasi_norm(&ax) != a.abs_det() * r || qn.quasi_norm(&neg) != r {
                bad += 1;
            }
        }
        let c1 = measure_quasi_triangle(&qn, 10_000, 5);
        let c4 = measure_quasi_triangle(&qn, 40_000, 5);
        let drift = (c4 / c1 - 1.0).abs();
        ok &= bad == 0 && drift <= 0.10;
        notes.push(format!("{name}: violations {bad}, C {c1:.3} -> {c4:.3}"));
    }
    ensure(ok, notes.join("; "))
}

fn calderon_identity() -> Check {
    let mut worst: f64 = 0.0;
    for (_, a) in matrices() {
        let fg = grid_for(&a);
        let pair = make_analyzing_pair(&fg, SpectralProfile::bump(0.0, 2.0).unwrap()).unwrap();
        let gauge = fg.gauge();
        let at = a.entries().transpose();
        let spec = fg.spec();
        for idx in 0..spec.len() {
            let t = fg.levels()[idx];
            if !t.is_finite() {
                continue;
            }
            let xi = DVector::from_vec(spec.frequency(idx));
            let j0 = (pair.phi.lo - t).floor() as i32 - 1;
            let j1 = (pair.phi.hi - t).ceil() as i32 + 1;
            let mut v = if j0 >= 0 { at.pow(j0 as u32) * &xi } else { a.inverse().transpose().pow((-j0) as u32) * &xi };
            let mut sum = 0.0;
            for _ in j0..=j1 {
                let x: Vec<f64> = v.iter().cloned().collect();
                sum += pair.phi.eval(gauge, &x) * pair.psi.eval(gauge, &x);
                v = &at * v;
            }
            worst = worst.max((sum - 1.0).abs());
        }
    }
    ensure(worst <= 1e-10, format!("max |sum - 1| = {worst:.2e}"))
}

fn admissibility() -> Check {
    let mut worst: f64 = 0.0;
    let mut change: f64 = 0.0;
    let psi = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap().psi;
    for (_, a) in matrices() {
        let gauge = HomogeneousGauge::new(&a.adjoint()).unwrap();
        let group = Group::new(&a).unwrap();
        let mut rng = tlinf_core::rng::seeded(3);
        for _ in 0..100 {
            let xi: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = gauge.level(&xi);
            let integral = |ds: f64| -> f64 {
                let k0 = ((psi.lo - t) / ds).floor() as i64 - 1;
                let k1 = ((psi.hi - t) / ds).ceil() as i64 + 1;
                (k0..=k1)
                    .map(|k| {
                        let s = k as f64 * ds;
                        let m = group.power(s).transpose();
                        let v: Vec<f64> = (&m * DVector::from_vec(xi.clone())).iter().cloned().collect();
                        psi.eval(&gauge, &v).powi(2)
                    })
                    .sum::<f64>()
                    * ds
            };
            let coarse = integral(1.0 / 64.0);
            let fine = integral(1.0 / 128.0);
            worst = worst.max((coarse - 1.0).abs());
            change = change.max((fine - coarse).abs());
        }
    }
    ensure(worst <= 1e-6 && change < 1e-8, format!("max |I - 1| = {worst:.2e}, halving ds changes I by {change:.2e}"))
}

fn reproducing_formula() -> Check {
    let a = ExpansiveMatrix::diagonal(&[2.0, 2.0]).unwrap();
    let psi = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap();
    let phi = make_admissible(SpectralProfile::bump(-0.5, 1.5).unwrap(), 1.0 / 64.0).unwrap();
    let suite = SuiteSpec { scale_range: [0.0, 1.0], ..SuiteSpec::default() };
    let fields = suite_generate(&suite, 2);
    let run = |n: usize, ds: f64| -> Result<(f64, f64), String> {
        let fg = FrequencyGrid::for_matrix(GridSpec::new(2, 8.0, n).unwrap(), &a).unwrap();
        let mut iso: f64 = 0.0;
        let mut rep: f64 = 0.0;
        for f in &fields {
            let (lo, hi) = f.band();
            let (s0, s1) = wavelet_support(&psi.psi, lo, hi);
            let (p0, p1) = wavelet_support(&phi.psi, lo, hi);
            let gg = GroupGrid::covering(*fg.spec(), s0.min(p0), s1.max(p1), ds).map_err(|e| e.to_string())?;
            let sf = f.sample(&fg).map_err(|e| e.to_string())?;
            let w = wavelet_transform(&fg, &sf, &psi, &gg).map_err(|e| e.to_string())?;
            iso = iso.max(isometry_check(&fg, &sf, &w).relative_error);
            rep = rep.max(reproducing_check(&fg, &sf, &phi, &psi, &gg).map_err(|e| e.to_string())?.relative_l2);
        }
        Ok((iso, rep))
    };
    let (iso, e0) = run(64, 0.125)?;
    let (iso2, e1) = run(128, 0.0625)?;
    ensure(
        iso <= 0.01 && iso2 <= 0.01 && e0 <= 0.05 && e1 <= 0.6 * e0,
        format!("isometry {iso:.2e}/{iso2:.2e}, reproducing {e0:.3e} -> {e1:.3e} (ratio {:.3})", e1 / e0),
    )
}

fn run_experiment(config: &ExperimentConfig) -> Check {
    let out = experiment::run(config).map_err(|e| e.to_string())?;
    let text = serde_json::to_string(&out.summary).unwrap();
    ensure(out.pass, text)
}

fn square(n: usize) -> ExperimentConfig {
    ExperimentConfig { grid: GridSpec::new(2, 8.0, n).unwrap(), refine: true, ..ExperimentConfig::default() }
}

fn brief(r: Check, keys: &[&str]) -> Check {
    let shorten = |s: String| -> String {
        let v: serde_json::Value = match serde_json::from_str(&s) {
            Ok(v) => v,
            Err(_) => return s,
        };
        keys.iter().map(|k| format!("{k}={}", v.get(*k).cloned().unwrap_or_default())).collect::<Vec<_>>().join(" ")
    };
    r.map(shorten)
}

fn maximal_characterization() -> Check {
    let mut c = square(64);
    c.kind = ExperimentKind::NormEquivalence;
    c.suite.count = 32;
    c.qs = vec![0.5, 1.0, 2.0, f64::INFINITY];
    c.alphas = vec![-1.0, 0.0, 1.0];
    brief(run_experiment(&c), &["pass", "lowerBoundHolds"])
}

fn endpoint_identification() -> Check {
    let mut c = square(128);
    c.kind = ExperimentKind::Embedding;
    c.qs = vec![1.0, 2.0];
    c.alphas = vec![-1.0, 0.0, 1.0];
    let out = experiment::run(&c).map_err(|e| e.to_string())?;
    let mut change = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for entry in out.summary["constants"].as_array().unwrap() {
        let families = std::iter::once(&entry["besovOverInf"]).chain(entry["infOverQ"].as_array().unwrap());
        for fam in families {
            for k in ["min", "max"] {
                change = change.max(fam["refinementChange"][k].as_f64().unwrap());
            }
        }
        for g in entry["besovOverInf"]["grids"].as_array().unwrap() {
            lo = lo.min(g["min"].as_f64().unwrap());
            hi = hi.max(g["max"].as_f64().unwrap());
        }
    }
    ensure(out.pass, format!("besov/inf in [{lo:.3}, {hi:.3}], largest refinement change {change:.3}"))
}

fn translation_bounds() -> Check {
    let a = ExpansiveMatrix::diagonal(&[2.0]).unwrap();
    let fg = grid_for(&a);
    let qn = QuasiNormStructure::new(&a).unwrap();
    let group = Group::new(&a).unwrap();
    let psi = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap();
    let sampler = VSampler::new(&qn, 8, 16, 9).unwrap();
    let overlap = qn.translation_overlap().unwrap();
    let suite = SuiteSpec { count: 16, scale_range: [0.0, 1.0], ..SuiteSpec::default() };
    let fields = suite_generate(&suite, 1);
    let qs = [1.0, 2.0, f64::INFINITY];
    let mut rng = tlinf_core::rng::seeded(17);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut saturated = 0;
    for positive in [true, false] {
        for (i, f) in fields.iter().enumerate() {
            let k = rng.random_range(1..=8) as f64;
            let t = if positive { k / 8.0 } else { (1.0 - k) / 8.0 };
            let y = rng.random_range(-2.0..2.0);
            let q = qs[i % qs.len()];
            let alpha = rng.random_range(-1.0..1.0);
            let params = NormParams { alpha, q, beta: NormParams::default_beta(q), ..NormParams::default() };
            let (lo, hi) = f.band();
            let (s0, s1) = wavelet_support(&psi.psi, lo - 1.0, hi + 1.0);
            let gg = GroupGrid::covering(*fg.spec(), s0, s1, 0.125).unwrap();
            let g = GroupPoint::new(vec![y], t);
            let v = weight_v(&qn, &group, &sampler, &g.x, g.s);
            let r = translation_bound_check(&fg, &qn, &group, f, &psi, &gg, &g, &params, v, overlap).map_err(|e| e.to_string())?;
            worst = worst.max(r.left_ratio / r.left_bound).max(r.right_ratio / r.right_bound);
            failures += usize::from(!r.pass);
            saturated += usize::from(r.v_saturated);
        }
    }
    ensure(
        failures == 0,
        format!("32 pairs, {failures} over bound, max ratio/bound {worst:.3}, v saturated {saturated}"),
    )
}

fn control_weight() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (q, alphas) in [(2.0, vec![-1.0, 0.0]), (f64::INFINITY, vec![-2.0, 0.0])] {
        let c = ExperimentConfig { kind: ExperimentKind::Weights, qs: vec![q], alphas, ..ExperimentConfig::default() };
        let out = experiment::run(&c).map_err(|e| e.to_string())?;
        ok &= out.pass;
        for e in out.summary["entries"].as_array().unwrap() {
            notes.push(format!(
                "q={} a={} upper={} sym={:.1e} ratio {} -> {}",
                e["q"], e["alpha"], e["upperBranch"], e["symmetryDefect"].as_f64().unwrap(), e["ratio"], e["ratioDoubled"]
            ));
        }
        let branches: Vec<bool> = out.summary["entries"].as_array().unwrap().iter().map(|e| e["upperBranch"].as_bool().unwrap()).collect();
        ok &= branches.contains(&true) && branches.contains(&false);
    }
    ensure(ok, notes.join("; "))
}

fn coorbit_identification() -> Check {
    let mut c = square(128);
    c.kind = ExperimentKind::Coorbit;
    c.qs = vec![1.0, 2.0, f64::INFINITY];
    c.alphas = vec![-1.0, 0.0, 1.0];
    brief(run_experiment(&c), &["pass"])
}

fn frames_config() -> ExperimentConfig {
    ExperimentConfig {
        kind: ExperimentKind::Frames,
        matrix: MatrixSpec { dim: 1, entries: vec![2.0] },
        grid: GridSpec::new(1, 8.0, 512).unwrap(),
        suite: SuiteSpec { scale_range: [0.0, 1.5], ..SuiteSpec::default() },
        ..ExperimentConfig::default()
    }
}

fn frames() -> Check {
    let out = experiment::run(&frames_config()).map_err(|e| e.to_string())?;
    let s = &out.summary;
    let worst_ratio = out.tables[0]
        .rows
        .iter()
        .map(|r| r[3].parse::<f64>().unwrap() - r[4].parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(
        out.pass,
        format!(
            "covering {} atoms, contraction {:.3}, max(ratio - predicted) {worst_ratio:.3}; separated {} atoms, residual {:.1e}; molecule violations {}",
            s["covering"]["size"], s["contraction"].as_f64().unwrap(), s["separated"]["size"],
            s["moments"]["maxResidual"].as_f64().unwrap(), s["molecules"]["violationCount"]
        ),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut small = ExperimentConfig { refine: false, ..ExperimentConfig::default() };
    small.suite.count = 4;
    let configs = [
        small.clone(),
        ExperimentConfig { kind: ExperimentKind::Coorbit, ..small.clone() },
        ExperimentConfig { kind: ExperimentKind::Weights, weights: experiment::WeightSettings { samples: 500, ..Default::default() }, ..small },
        frames_config(),
    ];
    let mut files = 0;
    for (i, c) in configs.iter().enumerate() {
        let paths = [dir.path().join(format!("{i}a")), dir.path().join(format!("{i}b"))];
        for p in &paths {
            experiment::run(c).map_err(|e| e.to_string())?.write(p).map_err(|e| e.to_string())?;
        }
        for entry in std::fs::read_dir(&paths[0]).unwrap() {
            let name = entry.unwrap().file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            let a = std::fs::read(paths[0].join(&name)).unwrap();
            let b = std::fs::read(paths[1].join(&name)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{} differs between reruns of {}", name.to_string_lossy(), c.kind.name()));
            }
            files += 1;
        }
    }
    ensure(files > 0, format!("{files} CSV files byte-identical across reruns"))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "quasi-norm axioms", limit: Duration::from_secs(10), run: quasi_norm_axioms },
        Criterion { id: 2, name: "Calderon identity", limit: Duration::from_secs(30), run: calderon_identity },
        Criterion { id: 3, name: "admissibility", limit: Duration::from_secs(30), run: admissibility },
        Criterion { id: 4, name: "isometry and reproducing formula", limit: Duration::from_secs(300), run: reproducing_formula },
        Criterion { id: 5, name: "maximal characterization", limit: Duration::from_secs(1200), run: maximal_characterization },
        Criterion { id: 6, name: "p = q = inf identification", limit: Duration::from_secs(300), run: endpoint_identification },
        Criterion { id: 7, name: "translation bounds", limit: Duration::from_secs(300), run: translation_bounds },
        Criterion { id: 8, name: "control weight", limit: Duration::from_secs(120), run: control_weight },
        Criterion { id: 9, name: "coorbit identification", limit: Duration::from_secs(600), run: coorbit_identification },
        Criterion { id: 10, name: "frames and molecules", limit: Duration::from_secs(900), run: frames },
        Criterion { id: 11, name: "determinism", limit: Duration::from_secs(120), run: determinism },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let in_time = took <= c.limit;
        let (pass, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.1}s of {}s", took.as_secs_f64(), c.limit.as_secs());
        println!("{} criterion {:>2} {}: {} [{}]", if pass { "PASS" } else { "FAIL" }, c.id, c.name, detail, timing);
        failed += usize::from(!pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
