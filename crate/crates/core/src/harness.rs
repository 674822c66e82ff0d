//! Experiment files and the predict → simulate → measure → compare pipeline.
//!
//! An experiment is one flat `key=value` file. Background, data, grid and
//! measurement keys share the top level; nonlinear terms are listed one per
//! line under a `[terms]` header (or given as `term=` keys). Blank lines
//! and `#` comments are ignored.
//!
//! ```text
//! sigma=1
//! eps=0.01
//! dr=1/32
//! t_max=512
//! [terms]
//! dtphi^3
//! -1/3 dt(phi^3)
//! ```
//!
//! Term factors are `phi`, `dphi` (= `dtphi`), `drphi` and `dbar`, each
//! with an optional `^k`; a leading number or fraction is the coefficient,
//! and `dt(phi^k)` / `dr(phi^k)` wrap a power in a total derivative.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::background::{BackgroundModel, ModelError};
use crate::bound::DecayBound;
use crate::iterate::{iterate_exterior, iterate_interior, IterationTrace};
use crate::meter::{
    band_profile, compare_rates, dyadic_regions, fit_points, probe_slope, region_stats, render_report,
    rgamma_balance, write_region_csv, Axis, LatticeField, SlopeFit, Verdict,
};
use crate::problem::{Direction, ProblemSpec};
use crate::solver::{
    run, ConcreteTerm, Curve, DataMode, Factor, FieldHistory, GridSpec, InitialData, Scenario, SolverError,
};

/// Exit status of a pipeline run.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {msg}")]
    Runtime { stage: &'static str, msg: String },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Runtime { .. } => EXIT_RUNTIME,
        }
    }

    fn runtime(stage: &'static str, e: impl fmt::Display) -> Self {
        HarnessError::Runtime { stage, msg: e.to_string() }
    }
}

/// What to measure and how strictly to judge it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    /// Probe radii used for the fixed-r slope.
    pub probe_lo: f64,
    pub probe_hi: f64,
    /// Time window of the slope fit; defaults to [t_max/8, t_max].
    pub fit_from: Option<f64>,
    pub fit_to: Option<f64>,
    pub per_octave: usize,
    /// Allowed |measured - expected| on fitted exponents.
    pub tolerance: f64,
    /// When set, report the r^γ balance on dyadic intervals.
    pub gamma: Option<f64>,
}

impl MeasureConfig {
    fn defaults(nonlinear: bool) -> Self {
        MeasureConfig {
            probe_lo: 1.0,
            probe_hi: 2.0,
            fit_from: None,
            fit_to: None,
            per_octave: 8,
            tolerance: if nonlinear { 0.3 } else { 0.1 },
            gamma: None,
        }
    }

    pub fn fit_window(&self, t_max: f64) -> (f64, f64) {
        (self.fit_from.unwrap_or(t_max / 8.0), self.fit_to.unwrap_or(t_max))
    }
}

/// A parsed and validated experiment file.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub spec: ProblemSpec,
    pub measure: MeasureConfig,
}

const BACKGROUND_KEYS: &[&str] =
    &["sigma", "a_h", "a_B", "a_b", "a_V", "a_v", "cone_lo", "cone_hi", "modulation", "g_omega", "profile"];

fn number(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let parsed = match v.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
        None => v.parse::<f64>().ok(),
    };
    parsed
        .filter(|x| x.is_finite())
        .ok_or_else(|| ConfigError::Parse { line, msg: format!("`{key}` needs a number, got `{v}`") })
}

fn factor(line: usize, tok: &str) -> Result<(Factor, u32), ConfigError> {
    let (name, power) = match tok.split_once('^') {
        Some((n, p)) => {
            let p = p
                .parse::<u32>()
                .ok()
                .filter(|p| *p >= 1)
                .ok_or_else(|| ConfigError::Parse { line, msg: format!("bad power in `{tok}`") })?;
            (n, p)
        }
        None => (tok, 1),
    };
    let f = match name {
        "phi" => Factor::Phi,
        "dphi" | "dtphi" => Factor::DtPhi,
        "drphi" => Factor::DrPhi,
        "dbar" => Factor::Dbar,
        _ => return Err(ConfigError::Parse { line, msg: format!("unknown factor `{name}`") }),
    };
    Ok((f, power))
}

/// Parse one term such as `-1/3 dt(phi^3)` or `2 dbar dphi^2`.
pub fn parse_term(line: usize, text: &str) -> Result<ConcreteTerm, ConfigError> {
    let text = text.trim();
    let err = |msg: String| ConfigError::Parse { line, msg };
    let (coef, body) = match text.split_once(char::is_whitespace) {
        Some((head, rest)) if number(line, "coefficient", head).is_ok() => {
            (number(line, "coefficient", head)?, rest.trim())
        }
        _ => (1.0, text),
    };
    if body.is_empty() {
        return Err(err(format!("term `{text}` has no factors")));
    }
    let (outer, inner) = if let Some(rest) = body.strip_prefix("dt(") {
        (Some(Direction::Dt), rest)
    } else if let Some(rest) = body.strip_prefix("dr(") {
        (Some(Direction::Dr), rest)
    } else {
        (None, body)
    };
    let inner = match outer {
        Some(_) => inner
            .strip_suffix(')')
            .ok_or_else(|| err(format!("unclosed derivative wrapper in `{text}`")))?,
        None => inner,
    };
    if inner.contains(['(', ')']) {
        return Err(err(format!("nested or stray parentheses in `{text}`")));
    }
    let mut factors: Vec<(Factor, u32)> = Vec::new();
    for tok in inner.split_whitespace() {
        let (f, p) = factor(line, tok)?;
        match factors.iter_mut().find(|(g, _)| *g == f) {
            Some(slot) => slot.1 += p,
            None => factors.push((f, p)),
        }
    }
    if factors.is_empty() {
        return Err(err(format!("term `{text}` has no factors")));
    }
    match outer {
        Some(dir) => {
            if factors.len() != 1 || factors[0].0 != Factor::Phi || factors[0].1 < 2 {
                return Err(err(format!("`{text}`: a total derivative must wrap phi^k with k >= 2")));
            }
            Ok(ConcreteTerm::total(coef, dir, factors[0].1))
        }
        None => Ok(ConcreteTerm::monomial(coef, factors)),
    }
}

/// Parse and validate an experiment file.
pub fn parse_scenario(text: &str) -> Result<Experiment, ConfigError> {
    let mut pairs: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut terms = Vec::new();
    let mut in_terms = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[terms]" => in_terms = true,
                _ => return Err(ConfigError::Parse { line: line_no, msg: format!("unknown section `{line}`") }),
            }
            continue;
        }
        if in_terms && !line.contains('=') {
            terms.push(parse_term(line_no, line)?);
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line: line_no, msg: format!("expected key=value, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "term" {
            terms.push(parse_term(line_no, v)?);
            continue;
        }
        if pairs.insert(k.to_string(), (line_no, v.to_string())).is_some() {
            return Err(ConfigError::Parse { line: line_no, msg: format!("duplicate key `{k}`") });
        }
    }

    let background_pairs: BTreeMap<String, (usize, String)> =
        pairs.iter().filter(|(k, _)| BACKGROUND_KEYS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
    let background = BackgroundModel::from_pairs(&background_pairs).map_err(|e| match e {
        ModelError::Parse { line, msg } => ConfigError::Parse { line, msg },
        ModelError::Invalid(msg) => ConfigError::Validation(msg),
    })?;

    let mut data = InitialData::bump(1e-2, 6.0, 4.0, DataMode::TimeSymmetric);
    let mut grid = GridSpec::new(1.0 / 32.0, 512.0);
    let mut ceiling = None;
    let mut measure = MeasureConfig::defaults(!terms.is_empty());
    for (k, (line, v)) in &pairs {
        let line = *line;
        let num = || number(line, k, v);
        match k.as_str() {
            k if BACKGROUND_KEYS.contains(&k) => {}
            "eps" => data.amplitude = num()?,
            "r0" => data.center = num()?,
            "w" => data.half_width = num()?,
            "steepness" => data.steepness = num()?,
            "data" => {
                data.mode = match v.as_str() {
                    "time-symmetric" => DataMode::TimeSymmetric,
                    "outgoing" => DataMode::Outgoing,
                    _ => return Err(ConfigError::Parse { line, msg: format!("unknown data mode `{v}`") }),
                }
            }
            "dr" => grid.dr = num()?,
            "courant" => grid.courant = num()?,
            "r_max" => grid.r_max = Some(num()?),
            "t_max" => grid.t_max = num()?,
            "frame_dt" => grid.frame_dt = num()?,
            "frame_dr" => grid.frame_dr = num()?,
            "probes" => {
                grid.probes = v.split(',').map(|p| number(line, k, p.trim())).collect::<Result<_, _>>()?;
            }
            "ceiling" => ceiling = Some(num()?),
            "probe_lo" => measure.probe_lo = num()?,
            "probe_hi" => measure.probe_hi = num()?,
            "fit_from" => measure.fit_from = Some(num()?),
            "fit_to" => measure.fit_to = Some(num()?),
            "per_octave" => {
                measure.per_octave = v
                    .parse()
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| ConfigError::Parse { line, msg: format!("`per_octave` needs a positive integer, got `{v}`") })?
            }
            "tolerance" => measure.tolerance = num()?,
            "gamma" => measure.gamma = Some(num()?),
            _ => return Err(ConfigError::Parse { line, msg: format!("unknown key `{k}`") }),
        }
    }
    let mut scenario = Scenario::new(background, terms, data, grid);
    if let Some(c) = ceiling {
        scenario.ceiling = c;
    }
    Experiment::validated(scenario, measure)
}

impl Experiment {
    /// Check the scenario, the problem descriptor and the measurement
    /// settings together.
    pub fn validated(scenario: Scenario, measure: MeasureConfig) -> Result<Self, ConfigError> {
        let spec = scenario.problem_spec().map_err(|e| ConfigError::Validation(e.to_string()))?;
        scenario.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
        if !(measure.tolerance > 0.0) {
            return Err(ConfigError::Validation(format!("tolerance must be positive, got {}", measure.tolerance)));
        }
        if !(measure.probe_lo <= measure.probe_hi) {
            return Err(ConfigError::Validation("probe_lo must not exceed probe_hi".into()));
        }
        let (from, to) = measure.fit_window(scenario.grid.t_max);
        if !(from > 0.0 && from < to && to <= scenario.grid.t_max) {
            return Err(ConfigError::Validation(format!(
                "fit window [{from}, {to}] must lie inside (0, t_max = {}]",
                scenario.grid.t_max
            )));
        }
        if let Some(g) = measure.gamma {
            let upper = (2.0 * spec.sigma.value()).min(1.0);
            if !(g > 0.5 && g < upper) {
                return Err(ConfigError::Validation(format!("gamma = {g} must lie in (1/2, {upper})")));
            }
        }
        Ok(Experiment { scenario, spec, measure })
    }

    /// Re-validate after command-line overrides.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        let g = &mut self.scenario.grid;
        if let Some(x) = o.dr {
            g.dr = x;
        }
        if let Some(x) = o.t_max {
            g.t_max = x;
        }
        if let Some(x) = o.courant {
            g.courant = x;
        }
        if let Some(x) = o.frame_dt {
            g.frame_dt = x;
        }
        if let Some(x) = o.frame_dr {
            g.frame_dr = x;
        }
        let m = &mut self.measure;
        if let Some(x) = o.tolerance {
            m.tolerance = x;
        }
        if let Some(x) = o.fit_from {
            m.fit_from = Some(x);
        }
        if let Some(x) = o.fit_to {
            m.fit_to = Some(x);
        }
        if let Some(x) = o.gamma {
            m.gamma = Some(x);
        }
        Experiment::validated(self.scenario, self.measure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Predict,
    Simulate,
    /// Simulate and measure, without comparing against predictions.
    Measure,
    Verify,
}

impl Mode {
    fn predicts(self) -> bool {
        matches!(self, Mode::Predict | Mode::Verify)
    }

    fn simulates(self) -> bool {
        !matches!(self, Mode::Predict)
    }

    fn measures(self) -> bool {
        matches!(self, Mode::Measure | Mode::Verify)
    }
}

/// Command-line overrides of grid and tolerance settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dr: Option<f64>,
    pub t_max: Option<f64>,
    pub courant: Option<f64>,
    pub frame_dt: Option<f64>,
    pub frame_dr: Option<f64>,
    pub tolerance: Option<f64>,
    pub fit_from: Option<f64>,
    pub fit_to: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub overrides: Overrides,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
    pub summary: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Exit code for a finished or failed run.
pub fn exit_code(result: &Result<Outcome, HarnessError>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(e) => e.exit_code(),
    }
}

/// Read and validate the experiment named by the config.
pub fn load(cfg: &ExperimentConfig) -> Result<Experiment, ConfigError> {
    let text = fs::read_to_string(&cfg.scenario_path)
        .map_err(|source| ConfigError::Io { path: cfg.scenario_path.clone(), source })?;
    parse_scenario(&text)?.with_overrides(&cfg.overrides)
}

/// Both bootstrap traces and the interior bound used for comparisons.
pub struct Prediction {
    pub exterior: (DecayBound, IterationTrace),
    pub interior: (DecayBound, IterationTrace),
}

impl Prediction {
    /// Tag naming the engine claim a verdict checks: the last rule of the
    /// interior bootstrap.
    pub fn claim(&self) -> String {
        let rule = self.interior.1.steps.last().map_or("initial", |s| s.rule);
        format!("interior-final[{rule}]")
    }
}

pub fn predict(spec: &ProblemSpec) -> Result<Prediction, HarnessError> {
    let exterior = iterate_exterior(spec).map_err(|e| HarnessError::runtime("predict", e))?;
    let interior = iterate_interior(spec).map_err(|e| HarnessError::runtime("predict", e))?;
    Ok(Prediction { exterior, interior })
}

fn prediction_text(exp: &Experiment, p: &Prediction) -> String {
    let mut s = String::new();
    s.push_str(&format!("# scenario_sha256={}\n", exp.scenario.hash()));
    s.push_str(&format!("sigma={}\n", exp.spec.sigma.value()));
    for t in &exp.scenario.terms {
        s.push_str(&format!("term={t} descriptor={}\n", t.descriptor()));
    }
    s.push_str(&format!("exterior_final={}\n", p.exterior.0));
    s.push_str(&format!("interior_final={}\n", p.interior.0));
    let sigma = exp.spec.sigma;
    let b = &p.interior.0;
    s.push_str(&format!("expected_t_slope={:.6}\n", -(b.b.value(sigma) + b.e.value(sigma))));
    s.push_str("[exterior trace]\n");
    s.push_str(&p.exterior.1.to_text());
    s.push_str("[interior trace]\n");
    s.push_str(&p.interior.1.to_text());
    s
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| HarnessError::runtime("report", e))?;
    Ok(buf)
}

fn simulation_files(h: &FieldHistory, files: &mut Vec<(String, Vec<u8>)>) -> Result<(), HarnessError> {
    for (i, c) in h.checkpoints.iter().enumerate() {
        let text = h.checkpoint_text(i).unwrap_or_default();
        files.push((format!("checkpoints/t{}.txt", c.t), text.into_bytes()));
    }
    for p in &h.probes {
        let bytes = csv_bytes(|b| h.export_curve(Curve::FixedR(p.r), b))?;
        files.push((format!("curves/r{}.csv", p.r), bytes));
    }
    let mut energy = String::from("t,energy\n");
    for (t, e) in h.frames.times.iter().zip(&h.energy) {
        energy.push_str(&format!("{t},{e:e}\n"));
    }
    files.push(("energy.csv".into(), energy.into_bytes()));
    Ok(())
}

/// Fits and statistics of a finished run. The t-slope is the one that is
/// judged; the u-slope and r^γ balance are reported for inspection.
pub struct Measurement {
    pub t_slope: Result<SlopeFit, String>,
    pub u_slope: Result<SlopeFit, String>,
    pub files: Vec<(String, Vec<u8>)>,
}

pub fn measure(exp: &Experiment, h: &FieldHistory) -> Result<Measurement, HarnessError> {
    let m = &exp.measure;
    let mut files = Vec::new();
    let phi = LatticeField::phi(h);
    let t_top = *h.frames.times.last().unwrap_or(&0.0);
    let r_top = *h.frames.r.last().unwrap_or(&0.0);
    let regions = dyadic_regions(t_top, r_top, 2.0);
    let stats = region_stats(&phi, &regions).map_err(|e| HarnessError::runtime("measure", e))?;
    files.push(("regions.csv".into(), csv_bytes(|b| write_region_csv(&stats, b))?));

    let t_slope = probe_slope(h, (m.probe_lo, m.probe_hi), m.fit_window(h.t_max), m.per_octave).map_err(|e| e.to_string());
    // u decay inside the last v band, starting behind the main pulse
    let band = (t_top, 2.0 * t_top);
    let (xs, ys): (Vec<f64>, Vec<f64>) = band_profile(&phi, Axis::U, band, (16.0, t_top / 2.0)).into_iter().unzip();
    let u_slope = fit_points(Axis::U, &xs, &ys).map_err(|e| e.to_string());

    let mut fits = String::new();
    for (name, fit) in [("t", &t_slope), ("u", &u_slope)] {
        match fit {
            Ok(f) => fits.push_str(&format!("axis={name} slope={:.6} stderr={:.6} points={}\n", f.slope, f.stderr, f.points)),
            Err(e) => fits.push_str(&format!("axis={name} unavailable: {e}\n")),
        }
    }
    files.push(("fits.txt".into(), fits.into_bytes()));

    if let Some(gamma) = m.gamma {
        let mut text = String::from("t1,t2,A,E1,E2,le_terms,ratio\n");
        let mut t1 = (h.t_max / 16.0).max(1.0);
        while 2.0 * t1 <= h.t_max / 2.0 {
            let b = rgamma_balance(h, gamma, exp.spec.sigma.value(), t1, 2.0 * t1, 0)
                .map_err(|e| HarnessError::runtime("measure", e))?;
            let ratio = b.ratio.map_or("vacuous".to_string(), |q| format!("{q:e}"));
            text.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{ratio}\n",
                b.t1, b.t2, b.parts.a, b.parts.e1, b.parts.e2, b.le_terms
            ));
            t1 *= 2.0;
        }
        files.push(("rgamma.csv".into(), text.into_bytes()));
    }
    Ok(Measurement { t_slope, u_slope, files })
}

/// Write-then-rename, so readers never see a half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Run the configured stages. All artifacts are assembled in memory and
/// written only once every stage has finished, so a failed run leaves no
/// partial output behind.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let exp = load(cfg)?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut summary = String::new();
    files.push(("scenario.txt".into(), exp.scenario.canonical().into_bytes()));

    let prediction = if cfg.mode.predicts() {
        let p = predict(&exp.spec)?;
        files.push(("prediction.txt".into(), prediction_text(&exp, &p).into_bytes()));
        summary.push_str(&format!("interior bound {}\nexterior bound {}\n", p.interior.0, p.exterior.0));
        Some(p)
    } else {
        None
    };

    let mut verdicts = Vec::new();
    if cfg.mode.simulates() {
        let h = run(&exp.scenario).map_err(|e: SolverError| HarnessError::runtime("simulate", e))?;
        simulation_files(&h, &mut files)?;
        summary.push_str(&format!("simulated to t={} with dr={} dt={:.6}\n", h.t_max, h.dr, h.dt));
        if cfg.mode.measures() {
            let m = measure(&exp, &h)?;
            files.extend(m.files);
            match &m.t_slope {
                Ok(f) => summary.push_str(&format!("fixed-r slope {:.4} ± {:.4}\n", f.slope, f.stderr)),
                Err(e) => summary.push_str(&format!("fixed-r slope unavailable: {e}\n")),
            }
            if let Some(p) = &prediction {
                let claim = p.claim();
                let tol = exp.measure.tolerance;
                match &m.t_slope {
                    Ok(fit) => {
                        let v = compare_rates(&[*fit], &p.interior.0, exp.spec.sigma, tol, &claim)
                            .map_err(|e| HarnessError::runtime("compare", e))?;
                        verdicts.extend(v);
                    }
                    Err(_) => {
                        let b = &p.interior.0;
                        let expected = -(b.b.value(exp.spec.sigma) + b.e.value(exp.spec.sigma));
                        verdicts.push(Verdict::new("t-slope", &claim, expected, f64::NAN, f64::NAN, tol));
                    }
                }
                let report = render_report(&verdicts);
                summary.push_str(&report);
                files.push(("verdict.txt".into(), report.into_bytes()));
            }
        }
    }

    fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::runtime("write", format!("{}: {e}", cfg.out_dir.display())))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        let path = cfg.out_dir.join(name);
        write_atomic(&path, bytes).map_err(|e| HarnessError::runtime("write", format!("{}: {e}", path.display())))?;
        written.push(name.clone());
    }
    Ok(Outcome { verdicts, files: written, summary })
}
