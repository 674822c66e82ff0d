//! Stationary, spherically symmetric perturbations of the wave operator and a
//! finite-difference check of their symbol classes.
//!
//! The evolved operator, written for ψ = rφ, is
//!
//! ψ_tt = (1 + h) ψ_rr + B (ψ_r - ψ/r) + V ψ + r·N
//!
//! with h, B ∈ S^Z(⟨r⟩^-1-σ) and V ∈ S^Z(⟨r⟩^-2-σ). The default profiles are
//! h = a_h⟨r⟩^-1-σ, B = a_B r⟨r⟩^-2-σ (odd, so the radial vector field is
//! smooth at the origin) and V = a_V⟨r⟩^-2-σ. V > 0 is attractive.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// ⟨r⟩-power laws.
    Power,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Power => "power",
        }
    }
}

/// A radial coefficient function borrowed from its model.
pub type CoefficientFn<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub sigma: f64,
    pub a_h: f64,
    pub a_b: f64,
    pub a_v: f64,
    pub profile: Profile,
    /// χ_cone is supported in cone_lo ≤ r/t ≤ cone_hi.
    pub cone_lo: f64,
    pub cone_hi: f64,
    /// Amplitude m of the optional slow modulation c(t) = 1 + m·sin(ln⟨t⟩).
    pub modulation: Option<f64>,
    /// Angular metric perturbation. Radial fields do not see it; it is kept
    /// only so that model files round-trip.
    pub g_omega: Option<f64>,
}

/// Coefficient values and first derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coefficients {
    pub h: f64,
    pub h_r: f64,
    pub h_t: f64,
    pub b: f64,
    pub b_r: f64,
    pub b_t: f64,
    pub v: f64,
    pub v_r: f64,
    pub v_t: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

fn jp(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

impl BackgroundModel {
    pub fn minkowski() -> Self {
        BackgroundModel {
            sigma: 1.0,
            a_h: 0.0,
            a_b: 0.0,
            a_v: 0.0,
            profile: Profile::Power,
            cone_lo: 0.5,
            cone_hi: 1.5,
            modulation: None,
            g_omega: None,
        }
    }

    /// Repulsive potential only.
    pub fn potential(sigma: f64, a_v: f64) -> Self {
        BackgroundModel { sigma, a_v, ..Self::minkowski() }
    }

    /// The models shipped as named presets.
    pub fn presets() -> Vec<(&'static str, BackgroundModel)> {
        vec![
            ("minkowski", Self::minkowski()),
            ("potential-0.5", Self::potential(0.5, -0.2)),
            ("metric-0.5", BackgroundModel { sigma: 0.5, a_h: 0.1, a_b: 0.1, ..Self::minkowski() }),
        ]
    }

    pub fn preset(name: &str) -> Option<Self> {
        Self::presets().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }

    pub fn is_minkowski(&self) -> bool {
        self.a_h == 0.0 && self.a_b == 0.0 && self.a_v == 0.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(ModelError::Invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (k, v) in [("a_h", self.a_h), ("a_B", self.a_b), ("a_V", self.a_v)] {
            if !v.is_finite() {
                return Err(ModelError::Invalid(format!("{k} is not finite")));
            }
        }
        if self.a_h <= -1.0 {
            return Err(ModelError::Invalid("a_h <= -1 makes the principal part degenerate".into()));
        }
        if !(0.0 < self.cone_lo && self.cone_lo < 1.0 && self.cone_hi > 1.0) {
            return Err(ModelError::Invalid("cone cutoff must satisfy 0 < cone_lo < 1 < cone_hi".into()));
        }
        if let Some(m) = self.modulation {
            if !(0.0..=1.0).contains(&m.abs()) {
                return Err(ModelError::Invalid("modulation amplitude must lie in [-1, 1]".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn modulation_at(&self, t: f64) -> (f64, f64) {
        match self.modulation {
            None => (1.0, 0.0),
            Some(m) => {
                let l = jp(t).ln();
                (1.0 + m * l.sin(), m * l.cos() * t / (1.0 + t * t))
            }
        }
    }

    pub fn eval_coefficients(&self, t: f64, r: f64) -> Coefficients {
        let s = self.sigma;
        let q = jp(r);
        let (c, c_t) = self.modulation_at(t);
        // d/dr ⟨r⟩^-k = -k r ⟨r⟩^-k-2
        let h0 = self.a_h * q.powf(-1.0 - s);
        let h0_r = -(1.0 + s) * r * h0 / (q * q);
        let v0 = self.a_v * q.powf(-2.0 - s);
        let v0_r = -(2.0 + s) * r * v0 / (q * q);
        let w = q.powf(-2.0 - s);
        let b0 = self.a_b * r * w;
        let b0_r = self.a_b * (w - (2.0 + s) * r * r * w / (q * q));
        Coefficients {
            h: c * h0,
            h_r: c * h0_r,
            h_t: c_t * h0,
            b: c * b0,
            b_r: c * b0_r,
            b_t: c_t * b0,
            v: c * v0,
            v_r: c * v0_r,
            v_t: c_t * v0,
        }
    }

    /// Upper bound for |h| over all (t, r), used to shrink the time step.
    pub fn sup_h(&self) -> f64 {
        let m = self.modulation.map_or(0.0, f64::abs);
        self.a_h.abs() * (1.0 + m)
    }

    /// χ_cone splitting used for the cone-supported part of the linear source.
    pub fn cone_cutoff(&self, t: f64, r: f64) -> bool {
        t > 0.0 && r >= self.cone_lo * t && r <= self.cone_hi * t
    }

    /// The coefficient functions with their declared classes, for the verifier.
    pub fn declared_classes(&self) -> Vec<(&'static str, f64, CoefficientFn<'_>)> {
        let s = self.sigma;
        vec![
            ("h", -1.0 - s, Box::new(move |r| self.eval_coefficients(0.0, r).h)),
            ("B", -1.0 - s, Box::new(move |r| self.eval_coefficients(0.0, r).b)),
            ("V", -2.0 - s, Box::new(move |r| self.eval_coefficients(0.0, r).v)),
        ]
    }

    /// Parse `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Parse { line: i + 1, msg: format!("expected key=value, got `{line}`") })?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        Self::from_pairs(&map)
    }

    /// Build from already split pairs (key → (line, value)).
    pub fn from_pairs(map: &BTreeMap<String, (usize, String)>) -> Result<Self, ModelError> {
        let mut m = Self::minkowski();
        for (k, (line, v)) in map {
            let num = || {
                v.parse::<f64>()
                    .map_err(|_| ModelError::Parse { line: *line, msg: format!("`{k}` needs a number, got `{v}`") })
            };
            match k.as_str() {
                "sigma" => m.sigma = num()?,
                "a_h" => m.a_h = num()?,
                "a_B" | "a_b" => m.a_b = num()?,
                "a_V" | "a_v" => m.a_v = num()?,
                "cone_lo" => m.cone_lo = num()?,
                "cone_hi" => m.cone_hi = num()?,
                "modulation" => m.modulation = Some(num()?),
                "g_omega" => m.g_omega = Some(num()?),
                "profile" => match v.as_str() {
                    "power" => m.profile = Profile::Power,
                    other => {
                        return Err(ModelError::Parse { line: *line, msg: format!("unknown profile `{other}`") })
                    }
                },
                _ => {}
            }
        }
        m.validate()?;
        Ok(m)
    }
}

impl fmt::Display for BackgroundModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sigma={} a_h={} a_B={} a_V={} profile={} cone={}..{}",
            self.sigma,
            self.a_h,
            self.a_b,
            self.a_v,
            self.profile.name(),
            self.cone_lo,
            self.cone_hi
        )?;
        if let Some(m) = self.modulation {
            write!(f, " modulation={m}")?;
        }
        if let Some(g) = self.g_omega {
            write!(f, " g_omega={g}")?;
        }
        Ok(())
    }
}

/// A vector field acting on stationary radial functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    D,
    S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordRatio {
    /// e.g. "", "d", "S", "dS" (applied right to left).
    pub word: String,
    pub worst_ratio: f64,
    pub at_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolReport {
    pub order: f64,
    pub ceiling: f64,
    pub words: Vec<WordRatio>,
    pub pass: bool,
}

impl SymbolReport {
    pub fn worst(&self) -> &WordRatio {
        self.words
            .iter()
            .max_by(|a, b| a.worst_ratio.total_cmp(&b.worst_ratio))
            .expect("at least the empty word")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymbolError {
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),
}

pub const DEFAULT_CEILING: f64 = 10.0;

fn fd_step(r: f64) -> f64 {
    1e-3_f64.max(1e-3 * r.abs())
}

/// Centred fourth-order derivative of `g` at `r`.
fn d4(g: &dyn Fn(f64) -> f64, r: f64) -> f64 {
    let h = fd_step(r);
    (-g(r + 2.0 * h) + 8.0 * g(r + h) - 8.0 * g(r - h) + g(r - 2.0 * h)) / (12.0 * h)
}

fn apply(word: &[Field], g: &dyn Fn(f64) -> f64, r: f64) -> f64 {
    match word.split_first() {
        None => g(r),
        Some((first, rest)) => {
            let inner = |x: f64| apply(rest, g, x);
            match first {
                Field::D => d4(&inner, r),
                Field::S => r * d4(&inner, r),
            }
        }
    }
}

fn words(max_len: usize) -> Vec<Vec<Field>> {
    let mut all = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for f in [Field::D, Field::S] {
                let mut n = vec![f];
                n.extend_from_slice(w);
                next.push(n);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// Check |Z^J g| ≤ C⟨r⟩^order for all words J in {∂, S} up to `max_vf`,
/// on the given radii. Rotations vanish on radial functions and ∂_t on
/// stationary ones, so these are all the fields that act.
pub fn verify_symbol_class(
    g: &dyn Fn(f64) -> f64,
    order: f64,
    max_vf: usize,
    radii: &[f64],
    ceiling: f64,
) -> Result<SymbolReport, SymbolError> {
    if radii.len() < 8 {
        return Err(SymbolError::InsufficientSampling(format!("{} radii, need at least 8", radii.len())));
    }
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    if rmax < 100.0 {
        return Err(SymbolError::InsufficientSampling(format!(
            "largest radius {rmax} < 100 cannot show the decay class"
        )));
    }
    if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(SymbolError::InsufficientSampling("radii must be finite and non-negative".into()));
    }
    let mut out = Vec::new();
    for w in words(max_vf) {
        let mut worst = (0.0f64, radii[0]);
        for &r in radii {
            let ratio = apply(&w, g, r).abs() / jp(r).powf(order);
            if ratio > worst.0 || ratio.is_nan() {
                worst = (ratio, r);
            }
        }
        let name: String = w.iter().map(|f| if *f == Field::D { 'd' } else { 'S' }).collect();
        out.push(WordRatio { word: name, worst_ratio: worst.0, at_r: worst.1 });
    }
    let pass = out.iter().all(|w| w.worst_ratio <= ceiling);
    Ok(SymbolReport { order, ceiling, words: out, pass })
}

/// Log-spaced radii from 0 to `rmax`, plus the origin.
pub fn default_radii(rmax: f64, per_decade: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    let decades = rmax.log10().ceil() as usize + 2;
    for k in 0..=(decades * per_decade) {
        let r = 10f64.powf(-2.0 + k as f64 / per_decade as f64);
        if r <= rmax {
            v.push(r);
        }
    }
    v
}
