//! Experiment configurations, runners and result files.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analyzers::{default_profile, make_admissible, AdmissibleVector, SpectralProfile, ADMISSIBLE_STEP};
use crate::error::{Error, Result};
use crate::expansive::{ExpansiveMatrix, MatrixSpec, QuasiNormStructure};
use crate::field::{FrequencyGrid, GridSpec, SampledField};
use crate::frames::{
    dual_reconstruct, frame_bounds, molecule_check, moment_problem, sample_index_set, AmalgamSpec, FrameOperator, IndexKind,
    MolecularSystem,
};
use crate::group::{
    envelope_compare, sample_group_point, wavelet_support, wavelet_transform, ControlWeight, Group, GroupGrid, Neighborhood,
    PtiStacks, VSampler,
};
use crate::norms::{window_plans, NormContext, NormParams, NormReport};
use crate::suite::{suite_generate, AtomField, SuiteSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NormEquivalence,
    Embedding,
    Coorbit,
    Frames,
    Weights,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NormEquivalence => "norm-equivalence",
            Self::Embedding => "embedding",
            Self::Coorbit => "coorbit",
            Self::Frames => "frames",
            Self::Weights => "weights",
        }
    }
}

mod exponent_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(transparent)]
    struct Exp(#[serde(with = "crate::norms::exponent")] f64);

    pub fn serialize<S: Serializer>(q: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        q.iter().map(|v| Exp(*v)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Ok(Vec::<Exp>::deserialize(d)?.into_iter().map(|e| e.0).collect())
    }
}

/// Wavelet-side settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct GroupSettings {
    /// Profile normalised into the admissible vector ψ.
    pub wavelet: SpectralProfile,
    /// Scale step of group grids.
    pub ds: f64,
    pub admissible_ds: f64,
}

impl Default for GroupSettings {
    fn default() -> Self {
        Self { wavelet: default_profile(), ds: 0.125, admissible_ds: ADMISSIBLE_STEP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct FrameSettings {
    /// Density of the covering Γ used for reconstruction.
    pub density_factor: f64,
    /// Density of the separated Γ used for the moment problem.
    pub separated_density: f64,
    pub iterations: usize,
    /// Reconstruction target for the pass criterion.
    pub target_error: f64,
    /// Iteration stops once the error is below this.
    pub stop_error: f64,
    pub power_iterations: usize,
    pub condition_limit: f64,
    pub max_residual: f64,
    pub ratio_slack: f64,
}

impl Default for FrameSettings {
    fn default() -> Self {
        Self {
            density_factor: 8.0,
            separated_density: 1.0,
            iterations: 50,
            target_error: 1e-3,
            stop_error: 1e-10,
            power_iterations: 20,
            condition_limit: crate::frames::CONDITION_LIMIT,
            max_residual: 1e-6,
            ratio_slack: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct WeightSettings {
    pub samples: usize,
    pub seed: u64,
    /// Sampled scales lie in [−sMax, sMax].
    pub s_max: f64,
    /// Sampled positions lie on shells in [−levels, levels].
    pub levels: i32,
    /// Shells of the fixed sample behind v.
    pub shells: i32,
    pub per_shell: usize,
    pub symmetry_tolerance: f64,
}

impl Default for WeightSettings {
    fn default() -> Self {
        Self { samples: 10_000, seed: 7, s_max: 3.0, levels: 6, shells: 8, per_shell: 16, symmetry_tolerance: 1e-9 }
    }
}

/// Everything an experiment needs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label: String,
    pub kind: ExperimentKind,
    pub matrix: MatrixSpec,
    /// φ of the discrete analyzing pair.
    pub analyzer: SpectralProfile,
    pub grid: GridSpec,
    pub norm: NormParams,
    pub suite: SuiteSpec,
    /// α values swept by the norm, embedding, coorbit and weight runs.
    pub alphas: Vec<f64>,
    #[serde(with = "exponent_list")]
    pub qs: Vec<f64>,
    /// β = 1/q + 1/2 (2 at q = ∞) instead of norm.beta.
    pub auto_beta: bool,
    /// Repeat on the grid with twice the samples and compare constants.
    pub refine: bool,
    /// Allowed relative change of empirical constants under refinement.
    pub stability: f64,
    pub group: GroupSettings,
    pub frames: FrameSettings,
    pub weights: WeightSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            label: "experiment".into(),
            kind: ExperimentKind::NormEquivalence,
            matrix: MatrixSpec { dim: 2, entries: vec![2.0, 0.0, 0.0, 2.0] },
            analyzer: default_profile(),
            grid: GridSpec { dim: 2, extent: 8.0, n: 64 },
            norm: NormParams::default(),
            suite: SuiteSpec { scale_range: [0.0, 1.0], ..SuiteSpec::default() },
            alphas: vec![0.0],
            qs: vec![2.0],
            auto_beta: true,
            refine: false,
            stability: 0.2,
            group: GroupSettings::default(),
            frames: FrameSettings::default(),
            weights: WeightSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides to the JSON form; dotted keys reach
    /// nested fields and values that are not JSON are taken as strings.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for s in sets {
            apply_override(&mut v, s)?;
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn beta_for(&self, q: f64) -> f64 {
        if self.auto_beta {
            NormParams::default_beta(q)
        } else {
            self.norm.beta
        }
    }

    pub fn norm_params(&self, alpha: f64, q: f64) -> NormParams {
        NormParams { alpha, q, beta: self.beta_for(q), ..self.norm.clone() }
    }

    /// Checks that every component can be built.
    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() || self.label.contains(['/', '\\']) || self.label.starts_with('.') {
            return Err(Error::Validation(format!("label {:?} is not a plain directory name", self.label)));
        }
        let setup = Setup::new(self)?;
        if self.grid.dim != self.matrix.dim {
            return Err(Error::DimensionMismatch { expected: self.matrix.dim, got: self.grid.dim });
        }
        if self.qs.is_empty() || self.alphas.is_empty() {
            return Err(Error::Validation("alphas and qs must be nonempty".into()));
        }
        for &q in &self.qs {
            for &a in &self.alphas {
                let p = self.norm_params(a, q);
                p.validate()?;
                if matches!(self.kind, ExperimentKind::NormEquivalence | ExperimentKind::Coorbit) {
                    p.validate_characterization()?;
                }
            }
        }
        if !(self.stability > 0.0) {
            return Err(Error::Validation("stability must be positive".into()));
        }
        if !(self.group.ds > 0.0) {
            return Err(Error::Validation("group.ds must be positive".into()));
        }
        window_plans(setup.fgrid.spec(), &setup.qn, &self.norm)?;
        Ok(())
    }
}

fn apply_override(root: &mut Value, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| Error::Validation(format!("override {set:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Validation(format!("override key {key:?} does not name an object field")))?;
        if i + 1 == parts.len() {
            obj.insert((*p).to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*p)
            .ok_or_else(|| Error::Validation(format!("unknown override key {key:?}")))?;
    }
    Err(Error::Validation("empty override key".into()))
}

/// Objects derived from a configuration.
pub struct Setup {
    pub matrix: ExpansiveMatrix,
    pub qn: QuasiNormStructure,
    pub group: Group,
    pub fgrid: FrequencyGrid,
    pub psi: AdmissibleVector,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let matrix = ExpansiveMatrix::from_spec(&config.matrix)?;
        let fgrid = FrequencyGrid::for_matrix(config.grid, &matrix)?;
        Ok(Self {
            qn: QuasiNormStructure::new(&matrix)?,
            group: Group::new(&matrix)?,
            psi: make_admissible(config.group.wavelet, config.group.admissible_ds)?,
            matrix,
            fgrid,
        })
    }

    pub fn refined(&self) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.clone(),
            qn: self.qn.clone(),
            group: self.group.clone(),
            fgrid: self.fgrid.refined()?,
            psi: self.psi,
        })
    }
}

/// A CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e16) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Tolerances and approximation flags of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub kind: String,
    pub label: String,
    pub tolerances: BTreeMap<String, f64>,
    /// How many reports raised each flag.
    pub flags: BTreeMap<String, usize>,
    pub files: Vec<String>,
    pub config: Value,
}

impl Manifest {
    fn flag(&mut self, name: &str, raised: bool) {
        let e = self.flags.entry(name.to_string()).or_insert(0);
        if raised {
            *e += 1;
        }
    }

    fn report_flags(&mut self, r: &NormReport) {
        self.flag("ellSaturated", r.ell_saturated);
        self.flag("anchorSaturated", r.anchor_saturated);
        self.flag("scaleSaturated", r.scale_saturated);
        self.flag("tail", r.tail);
        self.flag("truncated", r.truncated);
        self.flag("clipped", r.clipped);
    }
}

fn flag_string(r: &NormReport) -> String {
    let mut f = Vec::new();
    for (on, name) in [
        (r.ell_saturated, "ell"),
        (r.anchor_saturated, "anchor"),
        (r.scale_saturated, "scale"),
        (r.tail, "tail"),
        (r.truncated, "truncated"),
        (r.clipped, "clipped"),
    ] {
        if on {
            f.push(name);
        }
    }
    f.join("|")
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub summary: Value,
    pub tables: Vec<Table>,
    pub manifest: Manifest,
}

impl Outcome {
    /// Writes summary.json, one CSV per table and manifest.json into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        for t in &self.tables {
            std::fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv()?)?;
        }
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }
}

/// Relative change |b/a − 1|, zero when both vanish.
pub fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a == 0.0 {
        f64::INFINITY
    } else {
        (b / a - 1.0).abs()
    }
}

fn sample_suite(fields: &[AtomField], fgrid: &FrequencyGrid) -> Result<Vec<SampledField>> {
    fields.iter().map(|f| f.sample(fgrid)).collect()
}

/// (lo, hi) gauge levels containing every nonempty field of the suite.
fn suite_band(fields: &[AtomField]) -> Option<(f64, f64)> {
    fields
        .iter()
        .filter(|f| !f.atoms.is_empty())
        .map(|f| f.band())
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
}

fn grids(config: &ExperimentConfig) -> Result<Vec<Setup>> {
    let base = Setup::new(config)?;
    if config.refine {
        let fine = base.refined()?;
        Ok(vec![base, fine])
    } else {
        Ok(vec![base])
    }
}

/// Extremes of a ratio per (q, α) and grid.
#[derive(Default)]
struct Extremes {
    lo: BTreeMap<(u64, u64, usize), f64>,
    hi: BTreeMap<(u64, u64, usize), f64>,
}

impl Extremes {
    fn add(&mut self, q: f64, a: f64, g: usize, v: f64) {
        let k = (q.to_bits(), a.to_bits(), g);
        let lo = self.lo.entry(k).or_insert(f64::INFINITY);
        *lo = lo.min(v);
        let hi = self.hi.entry(k).or_insert(f64::NEG_INFINITY);
        *hi = hi.max(v);
    }

    fn get(&self, q: f64, a: f64, g: usize) -> Option<(f64, f64)> {
        let k = (q.to_bits(), a.to_bits(), g);
        Some((*self.lo.get(&k)?, *self.hi.get(&k)?))
    }
}

/// Summary entries for one (q, α) with an optional refinement comparison.
fn constant_summary(config: &ExperimentConfig, ext: &Extremes, q: f64, a: f64, grids: usize, two_sided: bool) -> (Value, bool) {
    let per: Vec<Option<(f64, f64)>> = (0..grids).map(|g| ext.get(q, a, g)).collect();
    let mut ok = true;
    let mut change = Value::Null;
    if let (Some(Some(c0)), Some(Some(c1))) = (per.first(), per.get(1)) {
        let dh = relative_change(c0.1, c1.1);
        let dl = relative_change(c0.0, c1.0);
        ok = dh < config.stability && (!two_sided || dl < config.stability);
        change = json!({ "max": dh, "min": dl });
    }
    let values: Vec<Value> = per
        .iter()
        .map(|p| match p {
            Some((lo, hi)) => json!({ "min": lo, "max": hi }),
            None => Value::Null,
        })
        .collect();
    (json!({ "q": num(q), "alpha": a, "grids": values, "refinementChange": change, "stable": ok }), ok)
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let mut manifest = Manifest {
        kind: config.kind.name().into(),
        label: config.label.clone(),
        config: serde_json::to_value(config)?,
        ..Manifest::default()
    };
    manifest.tolerances.insert("stability".into(), config.stability);
    let (pass, summary, tables) = match config.kind {
        ExperimentKind::NormEquivalence => norm_equivalence(config, &mut manifest)?,
        ExperimentKind::Embedding => embedding(config, &mut manifest)?,
        ExperimentKind::Coorbit => coorbit(config, &mut manifest)?,
        ExperimentKind::Frames => frames(config, &mut manifest)?,
        ExperimentKind::Weights => weights(config, &mut manifest)?,
    };
    manifest.files = std::iter::once("summary.json".to_string())
        .chain(tables.iter().map(|t| format!("{}.csv", t.name)))
        .chain(std::iter::once("manifest.json".to_string()))
        .collect();
    Ok(Outcome { pass, summary, tables, manifest })
}

type Run = (bool, Value, Vec<Table>);

fn norm_equivalence(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<Run> {
    manifest.tolerances.insert("peetreLowerBound".into(), 1.0 - 1e-12);
    let fields = suite_generate(&config.suite, config.grid.dim);
    let setups = grids(config)?;
    let mut table = Table::new(
        "norm_equivalence",
        &["n", "field", "q", "alpha", "beta", "tl", "peetre_discrete", "peetre_continuous", "ratio_discrete", "continuous_over_discrete", "flags"],
    );
    let mut ratio = Extremes::default();
    let mut factor = Extremes::default();
    let mut lower_ok = true;
    for (g, setup) in setups.iter().enumerate() {
        let sampled = sample_suite(&fields, &setup.fgrid)?;
        for (fi, f) in sampled.iter().enumerate() {
            for &q in &config.qs {
                let beta = config.beta_for(q);
                let ctx = NormContext::new(&setup.fgrid, &setup.qn, config.analyzer, config.norm_params(0.0, q))?;
                let bank = ctx.bank(f)?;
                let disc = ctx.peetre_bank(f, true)?.evaluate(beta);
                let cont = ctx.peetre_bank(f, false)?.evaluate(beta);
                for &a in &config.alphas {
                    let tl = ctx.tl(&bank, a, q);
                    let pd = ctx.tl(&disc, a, q);
                    let pc = ctx.tl(&cont, a, q);
                    for r in [&tl, &pd, &pc] {
                        manifest.report_flags(r);
                    }
                    if tl.value == 0.0 {
                        continue;
                    }
                    let rd = pd.value / tl.value;
                    let cd = pc.value / pd.value;
                    lower_ok &= rd >= 1.0 - 1e-12;
                    ratio.add(q, a, g, rd);
                    factor.add(q, a, g, cd);
                    table.push(vec![
                        setup.fgrid.spec().n.to_string(),
                        fi.to_string(),
                        num(q),
                        num(a),
                        num(beta),
                        num(tl.value),
                        num(pd.value),
                        num(pc.value),
                        num(rd),
                        num(cd),
                        [flag_string(&tl), flag_string(&pd), flag_string(&pc)].join(";"),
                    ]);
                }
            }
        }
    }
    let mut ok = lower_ok;
    let mut entries = Vec::new();
    for &q in &config.qs {
        for &a in &config.alphas {
            let (r, r_ok) = constant_summary(config, &ratio, q, a, setups.len(), false);
            let (c, c_ok) = constant_summary(config, &factor, q, a, setups.len(), true);
            ok &= r_ok && c_ok;
            entries.push(json!({ "q": num(q), "alpha": a, "peetreOverTl": r, "continuousOverDiscrete": c }));
        }
    }
    Ok((ok, json!({ "kind": "norm-equivalence", "pass": ok, "lowerBoundHolds": lower_ok, "constants": entries }), vec![table]))
}

fn embedding(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<Run> {
    let fields = suite_generate(&config.suite, config.grid.dim);
    let setups = grids(config)?;
    let mut table = Table::new("embedding", &["n", "field", "q", "alpha", "tl_q", "tl_inf", "besov", "inf_over_q", "besov_over_inf"]);
    let mut inf_q = Extremes::default();
    let mut besov = Extremes::default();
    let finite: Vec<f64> = config.qs.iter().cloned().filter(|q| q.is_finite()).collect();
    for (g, setup) in setups.iter().enumerate() {
        let sampled = sample_suite(&fields, &setup.fgrid)?;
        for (fi, f) in sampled.iter().enumerate() {
            let ctx = NormContext::new(&setup.fgrid, &setup.qn, config.analyzer, config.norm_params(0.0, 2.0))?;
            let bank = ctx.bank(f)?;
            for &a in &config.alphas {
                let inf = ctx.tl(&bank, a, f64::INFINITY);
                let b = ctx.besov(&bank, a);
                manifest.report_flags(&inf);
                manifest.report_flags(&b);
                if inf.value > 0.0 {
                    besov.add(f64::INFINITY, a, g, b.value / inf.value);
                }
                for &q in &finite {
                    let tq = ctx.tl(&bank, a, q);
                    manifest.report_flags(&tq);
                    let iq = (tq.value > 0.0).then(|| inf.value / tq.value);
                    if let Some(r) = iq {
                        inf_q.add(q, a, g, r);
                    }
                    table.push(vec![
                        setup.fgrid.spec().n.to_string(),
                        fi.to_string(),
                        num(q),
                        num(a),
                        num(tq.value),
                        num(inf.value),
                        num(b.value),
                        opt(iq),
                        opt((inf.value > 0.0).then(|| b.value / inf.value)),
                    ]);
                }
            }
        }
    }
    let mut ok = true;
    let mut entries = Vec::new();
    for &a in &config.alphas {
        let (b, b_ok) = constant_summary(config, &besov, f64::INFINITY, a, setups.len(), true);
        let positive = (0..setups.len()).all(|g| besov.get(f64::INFINITY, a, g).is_none_or(|(lo, hi)| lo > 0.0 && hi.is_finite()));
        ok &= b_ok && positive;
        let mut per_q = Vec::new();
        for &q in &finite {
            let (c, c_ok) = constant_summary(config, &inf_q, q, a, setups.len(), false);
            let bounded = (0..setups.len()).all(|g| inf_q.get(q, a, g).is_none_or(|(_, hi)| hi.is_finite()));
            ok &= c_ok && bounded;
            per_q.push(c);
        }
        entries.push(json!({ "alpha": a, "besovOverInf": b, "infOverQ": per_q }));
    }
    Ok((ok, json!({ "kind": "embedding", "pass": ok, "constants": entries }), vec![table]))
}

/// α′ = α + 1/2 − 1/q, or α + 1/2 at q = ∞.
pub fn coorbit_alpha(alpha: f64, q: f64) -> f64 {
    if q.is_infinite() {
        alpha + 0.5
    } else {
        alpha + 0.5 - 1.0 / q
    }
}

fn coorbit(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<Run> {
    let fields = suite_generate(&config.suite, config.grid.dim);
    let setups = grids(config)?;
    let mut table = Table::new("coorbit", &["n", "field", "q", "alpha", "alpha_prime", "beta", "pti", "tl", "ratio", "flags"]);
    let mut ratio = Extremes::default();
    let Some((lo, hi)) = suite_band(&fields) else {
        return Ok((true, json!({ "kind": "coorbit", "pass": true, "constants": [] }), vec![table]));
    };
    for (g, setup) in setups.iter().enumerate() {
        let (s0, s1) = wavelet_support(&setup.psi.psi, lo, hi);
        let ggrid = GroupGrid::covering(*setup.fgrid.spec(), s0, s1, config.group.ds)?;
        let sampled = sample_suite(&fields, &setup.fgrid)?;
        let abs_det = setup.qn.abs_det();
        for (fi, f) in sampled.iter().enumerate() {
            let w = wavelet_transform(&setup.fgrid, f, &setup.psi, &ggrid)?;
            let stacks = PtiStacks::new(&setup.qn, &w.array, config.norm.search_shells)?;
            for &q in &config.qs {
                let beta = config.beta_for(q);
                let params = config.norm_params(0.0, q);
                let plans = window_plans(&ggrid.spatial, &setup.qn, &params)?;
                let ctx = NormContext::new(&setup.fgrid, &setup.qn, config.analyzer, params)?;
                let bank = ctx.bank(f)?;
                for &a in &config.alphas {
                    let ap = coorbit_alpha(a, q);
                    let pti = stacks.norm(&ggrid.spatial, abs_det, &plans, -ap, beta, q);
                    let tl = ctx.tl(&bank, a, q);
                    manifest.report_flags(&pti);
                    manifest.report_flags(&tl);
                    if tl.value == 0.0 {
                        continue;
                    }
                    let r = pti.value / tl.value;
                    ratio.add(q, a, g, r);
                    table.push(vec![
                        setup.fgrid.spec().n.to_string(),
                        fi.to_string(),
                        num(q),
                        num(a),
                        num(ap),
                        num(beta),
                        num(pti.value),
                        num(tl.value),
                        num(r),
                        [flag_string(&pti), flag_string(&tl)].join(";"),
                    ]);
                }
            }
        }
    }
    let mut ok = true;
    let mut entries = Vec::new();
    for &q in &config.qs {
        for &a in &config.alphas {
            let (c, c_ok) = constant_summary(config, &ratio, q, a, setups.len(), true);
            let bounded = (0..setups.len()).all(|g| ratio.get(q, a, g).is_none_or(|(lo, hi)| lo > 0.0 && hi.is_finite()));
            ok &= c_ok && bounded;
            entries.push(c);
        }
    }
    Ok((ok, json!({ "kind": "coorbit", "pass": ok, "constants": entries }), vec![table]))
}

fn frames(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<Run> {
    let fs = &config.frames;
    manifest.tolerances.insert("targetError".into(), fs.target_error);
    manifest.tolerances.insert("maxResidual".into(), fs.max_residual);
    manifest.tolerances.insert("ratioSlack".into(), fs.ratio_slack);
    manifest.tolerances.insert("conditionLimit".into(), fs.condition_limit);
    manifest.tolerances.insert("envelopeSlack".into(), crate::frames::ENVELOPE_SLACK);
    manifest.tolerances.insert("envelopeFloor".into(), crate::frames::ENVELOPE_FLOOR);
    let setup = Setup::new(config)?;
    let fields = suite_generate(&config.suite, config.grid.dim);
    let sampled: Vec<SampledField> = sample_suite(&fields, &setup.fgrid)?.into_iter().filter(|f| f.l2_norm() > 0.0).collect();
    let mut curves = Table::new("reconstruction", &["field", "iteration", "error"]);
    let mut per_field = Table::new("frames", &["field", "iterations_to_target", "final_error", "ratio", "predicted_ratio"]);
    let mut moments = Table::new("moments", &["gamma", "s", "x", "c_re", "c_im", "residual"]);
    let Some((lo, hi)) = suite_band(&fields) else {
        return Ok((true, json!({ "kind": "frames", "pass": true }), vec![per_field, curves, moments]));
    };
    let (s0, s1) = wavelet_support(&setup.psi.psi, lo, hi);
    let domain = GroupGrid::covering(*setup.fgrid.spec(), s0, s1, config.group.ds)?;
    let u = Neighborhood::default();
    let cover = sample_index_set(&setup.group, &domain, &u, IndexKind::Covering, fs.density_factor)?;
    let op = FrameOperator::new(&setup.fgrid, &setup.psi, &cover.gamma)?;
    let bounds = frame_bounds(&op, &sampled, fs.power_iterations, config.suite.seed)?;
    let mut ok = true;
    for (fi, f) in sampled.iter().enumerate() {
        let rec = dual_reconstruct(&op, f, &bounds, fs.iterations, fs.stop_error)?;
        for (k, e) in rec.errors.iter().enumerate() {
            curves.push(vec![fi.to_string(), k.to_string(), num(*e)]);
        }
        let hit = rec.errors.iter().position(|e| *e <= fs.target_error);
        ok &= hit.is_some_and(|k| k <= fs.iterations) && rec.ratio <= rec.predicted_ratio + fs.ratio_slack;
        per_field.push(vec![
            fi.to_string(),
            hit.map(|k| k.to_string()).unwrap_or_default(),
            num(*rec.errors.last().unwrap()),
            num(rec.ratio),
            num(rec.predicted_ratio),
        ]);
    }
    let sep = sample_index_set(&setup.group, &domain, &u, IndexKind::Separated, fs.separated_density)?;
    let sop = FrameOperator::new(&setup.fgrid, &setup.psi, &sep.gamma)?;
    let zero = Complex64::new(0.0, 0.0);
    let c = match sampled.first() {
        Some(f) => sop.analysis(f)?,
        None => vec![zero; sop.len()],
    };
    let sol = moment_problem(&sop, &c, fs.condition_limit)?;
    for (i, g) in sep.gamma.iter().enumerate() {
        let x: Vec<String> = g.x.iter().map(|v| num(*v)).collect();
        moments.push(vec![i.to_string(), num(g.s), x.join(" "), num(c[i].re), num(c[i].im), num(sol.residuals[i])]);
    }
    let residual_ok = sol.max_residual() <= fs.max_residual;
    let system = MolecularSystem::duals(&sop, &setup.group, &sol);
    let ggrid = system.support_grid(&setup.fgrid, config.group.ds)?;
    let q = config.qs[0];
    let cw = ControlWeight::new(setup.qn.abs_det(), config.alphas[0], config.beta_for(q), q)?;
    let sampler = VSampler::new(&setup.qn, config.weights.shells, config.weights.per_shell, config.weights.seed)?;
    let spec = AmalgamSpec { weight: &cw, sampler: &sampler, neighborhood: u, r: q.min(1.0) };
    let mol = molecule_check(&setup.fgrid, &setup.qn, &setup.group, &system, &ggrid, &spec)?;
    manifest.flag("envelopeTermsSkipped", mol.skipped_terms > 0);
    ok &= residual_ok && mol.pass;
    let summary = json!({
        "kind": "frames",
        "pass": ok,
        "covering": { "size": cover.len(), "multiplicity": cover.multiplicity, "coverage": cover.coverage,
                      "spatialStep": cover.spatial_step, "scaleStep": cover.scale_step },
        "bounds": bounds,
        "contraction": bounds.contraction(),
        "separated": { "size": sep.len(), "multiplicity": sep.multiplicity },
        "moments": { "condition": sol.condition, "rank": sol.rank, "maxResidual": sol.max_residual(), "pass": residual_ok },
        "molecules": mol,
    });
    Ok((ok, summary, vec![per_field, curves, moments]))
}

fn weights(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<Run> {
    let ws = &config.weights;
    manifest.tolerances.insert("symmetry".into(), ws.symmetry_tolerance);
    let setup = Setup::new(config)?;
    let sampler = VSampler::new(&setup.qn, ws.shells, ws.per_shell, ws.seed)?;
    let mut table = Table::new("weights", &["q", "alpha", "beta", "upper_branch", "samples", "ratio_min", "ratio_max", "symmetry_defect"]);
    let mut ok = true;
    let mut entries = Vec::new();
    let mut rng = crate::rng::seeded(ws.seed);
    let points: Vec<_> = (0..ws.samples).map(|_| sample_group_point(&setup.qn, &mut rng, ws.s_max, ws.levels)).collect();
    for &q in &config.qs {
        for &a in &config.alphas {
            let beta = config.beta_for(q);
            let cw = ControlWeight::new(setup.qn.abs_det(), a, beta, q)?;
            use rayon::prelude::*;
            let defects: Vec<f64> = points.par_iter().map(|g| cw.symmetry_defect(&setup.qn, &setup.group, &sampler, g)).collect();
            let sym = defects.iter().cloned().fold(0.0, f64::max);
            let one = envelope_compare(&cw, &setup.qn, &setup.group, &sampler, ws.samples, ws.seed, ws.s_max, ws.levels);
            let two = envelope_compare(&cw, &setup.qn, &setup.group, &sampler, 2 * ws.samples, ws.seed, ws.s_max, ws.levels);
            for r in [&one, &two] {
                table.push(vec![
                    num(q),
                    num(a),
                    num(beta),
                    r.upper_branch.to_string(),
                    r.samples.to_string(),
                    num(r.min),
                    num(r.max),
                    num(sym),
                ]);
            }
            let dmin = relative_change(one.min, two.min);
            let dmax = relative_change(one.max, two.max);
            let this = sym <= ws.symmetry_tolerance && dmin <= config.stability && dmax <= config.stability;
            ok &= this;
            entries.push(json!({
                "q": num(q), "alpha": a, "beta": beta, "upperBranch": cw.upper_branch,
                "symmetryDefect": sym, "ratio": [one.min, one.max], "ratioDoubled": [two.min, two.max],
                "change": { "min": dmin, "max": dmax }, "pass": this,
            }));
        }
    }
    Ok((ok, json!({ "kind": "weights", "pass": ok, "entries": entries }), vec![table]))
}

/// Writes the sampled suite as field files `field_<i>.json` into `dir`.
pub fn write_suite(config: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let setup = Setup::new(config)?;
    std::fs::create_dir_all(dir)?;
    let fields = suite_generate(&config.suite, config.grid.dim);
    let mut names = Vec::new();
    for (i, f) in fields.iter().enumerate() {
        let s = f.sample(&setup.fgrid)?;
        let name = format!("field_{i}.json");
        let header = crate::field::io::FieldHeader::field(config.grid, Some(s.band_limit()).filter(|b| b.is_finite()));
        crate::field::io::write_field(&dir.join(&name), header, s.values())?;
        names.push(name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::default()
            .with_overrides(&["norm.alpha=0.5".into(), "qs=[\"inf\", 1]".into(), "label=sweep".into()])
            .unwrap();
        assert_eq!(c.norm.alpha, 0.5);
        assert_eq!(c.qs, vec![f64::INFINITY, 1.0]);
        assert_eq!(c.label, "sweep");
        assert!(ExperimentConfig::default().with_overrides(&["nope.x=1".into()]).is_err());
        assert!(ExperimentConfig::default().with_overrides(&["bogus=1".into()]).is_err());
    }

    #[test]
    fn kind_round_trips() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"kind": "frames", "qs": ["inf"]}"#).unwrap();
        assert_eq!(c.kind, ExperimentKind::Frames);
        let back = serde_json::to_value(&c).unwrap();
        assert_eq!(back["qs"][0], "inf");
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn empty_suite_gives_empty_tables() {
        let mut c = ExperimentConfig::default();
        c.suite.count = 0;
        c.kind = ExperimentKind::Coorbit;
        let out = run(&c).unwrap();
        assert!(out.pass);
        assert!(out.tables.iter().all(|t| t.rows.is_empty()));
    }
}
