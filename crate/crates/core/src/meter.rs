//! Measurements on field histories: dyadic regions of spacetime, sup and
//! L² statistics over them, the local-energy and r^γ functionals, slope
//! fits, and verdicts that compare fitted slopes with predicted bounds.
//!
//! All spacetime integrals use the radial measure 4πr² dr dt. Radial
//! sums are plain Riemann sums on the lattice, except for the r^γ
//! functionals, whose weights r^(γ-1) are singular at the origin and are
//! integrated exactly against piecewise-linear interpolants.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::bound::{DecayBound, Region};
use crate::exponent::Sigma;
use crate::fit;
use crate::solver::{derive_from, derive_words, DerivedFields, FieldHistory, SolverError};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
/// Largest accepted standard error of a fitted slope.
pub const MAX_STDERR: f64 = 0.25;
/// A check-siled ratio more than this factor above the first interval's
/// ratio is flagged as growing.
pub const GROWTH_FACTOR: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum MeterError {
    #[error("region outside the stored history: {0}")]
    RegionOutsideHistory(String),
    #[error("need at least {needed} points for a fit, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error("gamma = {gamma} must lie in (1/2, {upper})")]
    GammaOutOfRange { gamma: f64, upper: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

pub type Result<T> = std::result::Result<T, MeterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// t ≥ r.
    Interior,
    /// r > t.
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionKind {
    /// C_T^R: fixed slab in t, dyadic shell in r, inside the cone.
    ConeR,
    /// C_T^U: fixed slab in t, dyadic band in |t - r|.
    ConeU(Side),
    /// C_R^T: the far exterior, r - t ~ R with R > T.
    Far,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            RegionKind::ConeR => "cone_r",
            RegionKind::ConeU(Side::Interior) => "cone_u_int",
            RegionKind::ConeU(Side::Exterior) => "cone_u_ext",
            RegionKind::Far => "far",
        }
    }
}

/// One dyadic piece of spacetime.
///
/// Time runs over [t_lo, t_hi), closed at t_hi for the last slab. The
/// kind's own coordinate (r, t - r or r - t) runs over [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicRegion {
    pub kind: RegionKind,
    /// The dyadic time label T.
    pub t_label: f64,
    /// The R or U label.
    pub scale: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_closed: bool,
    pub lo: f64,
    pub hi: f64,
}

impl DyadicRegion {
    /// The kind's coordinate at (t, r), if (t, r) is on the right side of
    /// the cone for this kind.
    pub fn coordinate(&self, t: f64, r: f64) -> Option<f64> {
        match self.kind {
            RegionKind::ConeR => (r <= t).then_some(r),
            RegionKind::ConeU(Side::Interior) => (t >= r).then_some(t - r),
            RegionKind::ConeU(Side::Exterior) | RegionKind::Far => (r > t).then_some(r - t),
        }
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.t_lo && (t < self.t_hi || (self.t_closed && t == self.t_hi))
    }

    pub fn contains(&self, t: f64, r: f64) -> bool {
        self.contains_time(t) && self.coordinate(t, r).is_some_and(|x| x >= self.lo && x < self.hi)
    }

    /// Smallest r the region can reach.
    pub fn r_min(&self) -> f64 {
        match self.kind {
            RegionKind::ConeR => self.lo,
            RegionKind::ConeU(Side::Interior) => 0.0,
            RegionKind::ConeU(Side::Exterior) | RegionKind::Far => self.t_lo + self.lo,
        }
    }

    /// Largest t-extent of the region along a line of fixed r.
    pub fn max_height(&self) -> f64 {
        let slab = self.t_hi - self.t_lo;
        match self.kind {
            RegionKind::ConeR => slab,
            _ => slab.min(self.hi - self.lo),
        }
    }

    /// Largest distance |t - r| to the cone inside the region.
    pub fn max_cone_distance(&self) -> f64 {
        match self.kind {
            RegionKind::ConeR => self.t_hi,
            _ => self.hi,
        }
    }
}

impl fmt::Display for DyadicRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} T={} scale={} t∈[{}, {}{} coord∈[{}, {})",
            self.kind.name(),
            self.t_label,
            self.scale,
            self.t_lo,
            self.t_hi,
            if self.t_closed { "]" } else { ")" },
            self.lo,
            self.hi
        )
    }
}

/// Labels 1, a, a², … with intervals [0, a), [a, a²), …
fn scales(base: f64, limit: f64) -> Vec<(f64, f64, f64)> {
    let mut out = vec![(1.0, 0.0, base)];
    let mut x = base;
    while x <= limit {
        out.push((x, x, x * base));
        x *= base;
    }
    out
}

/// The dyadic cover of {1 ≤ t ≤ t_max, 0 ≤ r ≤ r_max}.
///
/// T runs over powers of two; R and U over powers of `base`. Inside the
/// cone the C_T^U bands cover everything and the C_T^R shells (R ≤ 3T/8)
/// sit on top of them near the axis. Outside, C_T^U bands with U ≤ 2T
/// reach to r - t ≥ 2T, and the far regions (R > T) take over from the
/// first power of `base` above T. Regions starting beyond r_max are
/// dropped.
pub fn dyadic_regions(t_max: f64, r_max: f64, base: f64) -> Vec<DyadicRegion> {
    assert!((2.0..=5.0).contains(&base), "dyadic base {base} outside [2, 5]");
    let mut out = Vec::new();
    if !(t_max >= 1.0) {
        return out;
    }
    let mut t = 1.0;
    loop {
        let last = 2.0 * t >= t_max;
        let (t_lo, t_hi) = (t, if last { t_max } else { 2.0 * t });
        let region = |kind, scale, lo, hi| DyadicRegion {
            kind,
            t_label: t,
            scale,
            t_lo,
            t_hi,
            t_closed: last,
            lo,
            hi,
        };
        for (s, lo, hi) in scales(base, 3.0 * t / 8.0) {
            if s <= 3.0 * t / 8.0 {
                out.push(region(RegionKind::ConeR, s, lo, hi));
            }
        }
        for side in [Side::Interior, Side::Exterior] {
            for (s, lo, hi) in scales(base, 2.0 * t) {
                let reg = region(RegionKind::ConeU(side), s, lo, hi);
                if reg.r_min() <= r_max {
                    out.push(reg);
                }
            }
        }
        for (s, lo, hi) in scales(base, r_max) {
            let reg = region(RegionKind::Far, s, lo, hi);
            if s > t && reg.r_min() <= r_max {
                out.push(reg);
            }
        }
        if last {
            break;
        }
        t *= 2.0;
    }
    out
}

/// A scalar field sampled on a (t, r) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub name: String,
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl LatticeField {
    pub fn phi(h: &FieldHistory) -> Self {
        let fr = &h.frames;
        let values = (0..fr.times.len()).map(|k| fr.phi(k)).collect();
        LatticeField { name: "phi".into(), times: fr.times.clone(), r: fr.r.clone(), values }
    }

    pub fn phi_t(h: &FieldHistory) -> Self {
        let fr = &h.frames;
        let values = (0..fr.times.len()).map(|k| fr.phi_t(k)).collect();
        LatticeField { name: "dtphi".into(), times: fr.times.clone(), r: fr.r.clone(), values }
    }

    /// Z^J φ for one word of a derived set.
    pub fn word(d: &DerivedFields, word: &str) -> Option<Self> {
        let values = d.get(word)?.clone();
        let name = if word.is_empty() { "phi".to_string() } else { format!("{word}phi") };
        Some(LatticeField { name, times: d.times.clone(), r: d.r.clone(), values })
    }

    /// |φ_{≤m}| = Σ_{|J|≤m} |φ_J|.
    pub fn up_to(d: &DerivedFields, order: usize) -> Self {
        let nt = d.times.len();
        let nr = d.r.len();
        let mut values = vec![vec![0.0; nr]; nt];
        for (w, f) in d.words.iter().zip(&d.fields) {
            if w.len() > order {
                continue;
            }
            for (row, src) in values.iter_mut().zip(f) {
                for (v, x) in row.iter_mut().zip(src) {
                    *v += x.abs();
                }
            }
        }
        LatticeField { name: format!("phi_le{order}"), times: d.times.clone(), r: d.r.clone(), values }
    }

    pub fn sample(name: &str, times: &[f64], r: &[f64], f: impl Fn(f64, f64) -> f64) -> Self {
        let values = times.iter().map(|&t| r.iter().map(|&x| f(t, x)).collect()).collect();
        LatticeField { name: name.into(), times: times.to_vec(), r: r.to_vec(), values }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let values = self.values.iter().map(|row| row.iter().map(|v| c * v).collect()).collect();
        LatticeField { values, ..self.clone() }
    }

    fn spacing(&self) -> (f64, f64) {
        let step = |xs: &[f64]| if xs.len() > 1 { xs[1] - xs[0] } else { 1.0 };
        (step(&self.times), step(&self.r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionStat {
    pub region: DyadicRegion,
    pub field: String,
    pub sup: f64,
    /// Spacetime L² with the measure 4πr² dr dt.
    pub l2: f64,
    pub samples: usize,
}

/// Exact max and L² of the field over the lattice points in a region.
/// Non-finite samples (stencil margins) are skipped.
pub fn region_sup(field: &LatticeField, region: &DyadicRegion) -> Result<RegionStat> {
    let times = &field.times;
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(MeterError::RegionOutsideHistory(format!("{region}: empty field")));
    };
    let slack = 1e-9 * last.abs().max(1.0);
    let r_last = field.r.last().copied().unwrap_or(0.0);
    if region.t_lo < first - slack || region.t_hi > last + slack || region.r_min() > r_last {
        return Err(MeterError::RegionOutsideHistory(format!(
            "{region} against t∈[{first}, {last}], r ≤ {r_last}"
        )));
    }
    let (dt, dr) = field.spacing();
    let k0 = times.partition_point(|&t| t < region.t_lo);
    let mut sup = 0.0f64;
    let mut sq = 0.0;
    let mut samples = 0;
    for (k, &t) in times.iter().enumerate().skip(k0) {
        if !region.contains_time(t) {
            break;
        }
        for (i, &r) in field.r.iter().enumerate() {
            if !region.contains(t, r) {
                continue;
            }
            let v = field.values[k][i];
            if !v.is_finite() {
                continue;
            }
            sup = sup.max(v.abs());
            sq += v * v * FOUR_PI * r * r * dr * dt;
            samples += 1;
        }
    }
    Ok(RegionStat { region: *region, field: field.name.clone(), sup, l2: sq.sqrt(), samples })
}

/// [`region_sup`] over many regions, in parallel, results in input order.
pub fn region_stats(field: &LatticeField, regions: &[DyadicRegion]) -> Result<Vec<RegionStat>> {
    regions.par_iter().map(|reg| region_sup(field, reg)).collect()
}

/// CSV with columns region_kind,T,RorU,field,sup,l2.
pub fn write_region_csv(stats: &[RegionStat], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region_kind", "T", "RorU", "field", "sup", "l2"])?;
    for s in stats {
        w.write_record([
            s.region.kind.name().to_string(),
            s.region.t_label.to_string(),
            s.region.scale.to_string(),
            s.field.clone(),
            format!("{:e}", s.sup),
            format!("{:e}", s.l2),
        ])?;
    }
    w.flush()
}

/// The coordinate along which a slope is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// t at fixed r.
    T,
    /// u = t - r inside a fixed v band.
    U,
    /// r inside a fixed u band.
    R,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::T => "t",
            Axis::U => "u",
            Axis::R => "r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub axis: Axis,
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Log-log least squares of `ys` against `xs`.
pub fn fit_points(axis: Axis, xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() < 4 || xs.len() != ys.len() {
        return Err(MeterError::InsufficientPoints { needed: 4, got: xs.len().min(ys.len()) });
    }
    let f = fit::loglog(xs, ys)
        .ok_or_else(|| MeterError::DegenerateFit("non-positive or repeated samples".into()))?;
    if !(f.stderr <= MAX_STDERR) {
        return Err(MeterError::DegenerateFit(format!("stderr {:.3} above {MAX_STDERR}", f.stderr)));
    }
    Ok(SlopeFit { axis, slope: f.slope, stderr: f.stderr, points: xs.len() })
}

/// Fit log sup against the log of the region label along `axis`.
pub fn fit_exponent(stats: &[RegionStat], axis: Axis) -> Result<SlopeFit> {
    let mut xs = Vec::with_capacity(stats.len());
    for s in stats {
        let x = match (axis, s.region.kind) {
            (Axis::T, _) => s.region.t_label,
            (Axis::U, RegionKind::ConeU(_)) => s.region.scale,
            (Axis::R, RegionKind::ConeR | RegionKind::Far) => s.region.scale,
            (_, kind) => {
                return Err(MeterError::AxisMismatch(format!("{} regions have no {} label", kind.name(), axis.name())))
            }
        };
        xs.push(x);
    }
    let ys: Vec<f64> = stats.iter().map(|s| s.sup).collect();
    fit_points(axis, &xs, &ys)
}

/// sup|f| in geometric windows along `axis`, restricted to a band in the
/// transverse coordinate: r for the t axis, v = t + r for the u axis and
/// u = t - r for the r axis. Windows are [x, 2x) from `range.0` up to
/// `range.1`; empty windows are dropped. Returns (window start, sup).
pub fn band_profile(field: &LatticeField, axis: Axis, band: (f64, f64), range: (f64, f64)) -> Vec<(f64, f64)> {
    let mut edges = Vec::new();
    let mut x = range.0;
    while x < range.1 {
        edges.push(x);
        x *= 2.0;
    }
    let mut sups = vec![(0.0f64, false); edges.len()];
    for (k, &t) in field.times.iter().enumerate() {
        for (i, &r) in field.r.iter().enumerate() {
            let (along, across) = match axis {
                Axis::T => (t, r),
                Axis::U => (t - r, t + r),
                Axis::R => (r, t - r),
            };
            if across < band.0 || across >= band.1 || along < range.0 || along >= range.1 {
                continue;
            }
            let v = field.values[k][i];
            if !v.is_finite() {
                continue;
            }
            let w = ((along / range.0).log2().floor() as usize).min(edges.len() - 1);
            sups[w].0 = sups[w].0.max(v.abs());
            sups[w].1 = true;
        }
    }
    edges.into_iter().zip(sups).filter(|(_, (_, hit))| *hit).map(|(x, (s, _))| (x, s)).collect()
}

/// Slope of max over probes with r in [r_lo, r_hi] of |φ(t, r)|, sampled
/// at `per_octave` log-spaced times in [t_lo, t_hi].
pub fn probe_slope(h: &FieldHistory, r_range: (f64, f64), t_range: (f64, f64), per_octave: usize) -> Result<SlopeFit> {
    let probes: Vec<_> = h.probes.iter().filter(|p| p.r >= r_range.0 && p.r <= r_range.1).collect();
    if probes.is_empty() {
        return Err(MeterError::RegionOutsideHistory(format!("no probe with r in {r_range:?}")));
    }
    let (t_lo, t_hi) = t_range;
    if t_lo <= 0.0 || t_hi <= t_lo || t_hi > h.t_max * (1.0 + 1e-9) {
        return Err(MeterError::RegionOutsideHistory(format!("t in {t_range:?} against t_max {}", h.t_max)));
    }
    let n = ((t_hi / t_lo).log2() * per_octave as f64).round() as usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..=n {
        let t = t_lo * (t_hi / t_lo).powf(j as f64 / n.max(1) as f64);
        let mut env = 0.0f64;
        let mut at = t;
        for p in &probes {
            let i = p.times.partition_point(|&s| s < t).min(p.times.len() - 1);
            at = p.times[i];
            env = env.max(p.phi[i].abs());
        }
        xs.push(at);
        ys.push(env);
    }
    fit_points(Axis::T, &xs, &ys)
}

/// One line of a verdict report.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    /// The claim the check is about, e.g. the rule that produced the bound.
    pub claim: String,
    pub expected: f64,
    pub measured: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn new(name: &str, claim: &str, expected: f64, measured: f64, stderr: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance;
        Verdict { name: name.into(), claim: claim.into(), expected, measured, stderr, tolerance, pass }
    }

    /// Machine-readable form: name,claim,expected,measured,tolerance,PASS|FAIL.
    pub fn summary_line(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{}",
            self.name,
            self.claim,
            self.expected,
            self.measured,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:<24} expected {:>8.4}  measured {:>8.4} ± {:.4}  tol {:.3}  {}",
            self.name,
            self.claim,
            self.expected,
            self.measured,
            self.stderr,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Table followed by one summary line per verdict.
pub fn render_report(verdicts: &[Verdict]) -> String {
    let mut s = String::new();
    for v in verdicts {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s.push_str("# summary: name,claim,expected,measured,tolerance,result\n");
    for v in verdicts {
        s.push_str(&v.summary_line());
        s.push('\n');
    }
    s
}

/// The slope a bound ⟨r⟩^-a ⟨v⟩^-b ⟨u⟩^-e predicts along an axis: -(b+e)
/// in t at fixed r, -e in u at fixed v, and -(a+b) in r at fixed u.
pub fn expected_slope(bound: &DecayBound, axis: Axis, sigma: Sigma) -> Result<f64> {
    let (a, b, e) = (bound.a.value(sigma), bound.b.value(sigma), bound.e.value(sigma));
    match axis {
        Axis::T if bound.region != Region::Exterior => Ok(-(b + e)),
        Axis::U if bound.region != Region::Exterior && e != 0.0 => Ok(-e),
        Axis::R if bound.region != Region::Interior => Ok(-(a + b)),
        _ => Err(MeterError::AxisMismatch(format!(
            "axis {} against {} bound {bound}",
            axis.name(),
            bound.region.name()
        ))),
    }
}

/// One verdict per fitted slope.
pub fn compare_rates(
    measured: &[SlopeFit],
    predicted: &DecayBound,
    sigma: Sigma,
    tolerance: f64,
    claim: &str,
) -> Result<Vec<Verdict>> {
    measured
        .iter()
        .map(|m| {
            let expected = expected_slope(predicted, m.axis, sigma)?;
            Ok(Verdict::new(&format!("{}-slope", m.axis.name()), claim, expected, m.slope, m.stderr, tolerance))
        })
        .collect()
}

fn jp(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

/// Frame index range covering [t1, t2], padded by `margin` frames, or an
/// error if the padding leaves the stored frames.
fn frame_window(h: &FieldHistory, t1: f64, t2: f64, margin: usize) -> Result<(usize, usize, std::ops::Range<usize>)> {
    let fr = &h.frames;
    let n = fr.times.len();
    if !(t1 < t2) || n == 0 {
        return Err(MeterError::RegionOutsideHistory(format!("empty interval [{t1}, {t2}]")));
    }
    let k1 = fr.nearest_time(t1);
    let k2 = fr.nearest_time(t2);
    let slack = 0.5 * fr.dt + 1e-9;
    if (fr.times[k1] - t1).abs() > slack || (fr.times[k2] - t2).abs() > slack || k1 < margin || k2 + margin >= n {
        let lo = fr.times.get(margin).copied().unwrap_or(f64::NAN);
        let hi = if n > margin { fr.times[n - 1 - margin] } else { f64::NAN };
        return Err(MeterError::RegionOutsideHistory(format!(
            "interval [{t1}, {t2}] needs frames within [{lo}, {hi}]"
        )));
    }
    Ok((k1 - (k1 - margin), k2 - (k1 - margin), (k1 - margin)..(k2 + margin + 1)))
}

/// Trapezoid weights in time for frames k1..=k2.
fn time_weight(k: usize, k1: usize, k2: usize, dt: f64) -> f64 {
    if k1 == k2 {
        0.0
    } else if k == k1 || k == k2 {
        0.5 * dt
    } else {
        dt
    }
}

/// ∫_{I×A_R} density · 4πr² dr dt for every dyadic annulus, where the
/// density is evaluated at (frame, point). A_1 = {r < 2}, A_R = [R, 2R).
fn annulus_integrals(
    r: &[f64],
    dt: f64,
    dr: f64,
    frames: (usize, usize),
    density: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let r_last = r.last().copied().unwrap_or(0.0);
    let mut n_annuli = 1;
    while 2f64.powi(n_annuli as i32) <= r_last {
        n_annuli += 1;
    }
    let mut out = vec![0.0; n_annuli];
    let (k1, k2) = frames;
    for k in k1..=k2 {
        let wt = time_weight(k, k1, k2, dt);
        for (i, &x) in r.iter().enumerate() {
            let v = density(k, i);
            if !v.is_finite() {
                continue;
            }
            let a = if x < 2.0 { 0 } else { x.log2().floor() as usize };
            out[a.min(n_annuli - 1)] += v * FOUR_PI * x * x * dr * wt;
        }
    }
    out
}

/// sup_R and Σ_R of the square roots of per-annulus integrals.
fn le_sup(parts: &[f64]) -> f64 {
    parts.iter().map(|p| p.sqrt()).fold(0.0, f64::max)
}

fn le_sum(parts: &[f64]) -> f64 {
    parts.iter().map(|p| p.sqrt()).sum()
}

/// Local-energy norms of φ_{≤order} over a time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeNorms {
    /// Σ_J sup_R ‖⟨r⟩^(-1/2) φ_J‖_{L²(I×A_R)}.
    pub le: f64,
    /// Σ_J Σ_R ‖⟨r⟩^(1/2) φ_J‖_{L²(I×A_R)}.
    pub le_star: f64,
    /// Σ_J ‖∂φ_J‖_LE + ‖⟨r⟩^(-1) φ_J‖_LE.
    pub le1: f64,
}

/// Vector-field words needed for order m plus `extra` derivatives, over a
/// padded window around [t1, t2]. Returns the derived set and the frame
/// indices of t1 and t2 inside it.
fn derived_window(
    h: &FieldHistory,
    t1: f64,
    t2: f64,
    order: usize,
    extra: usize,
    alphabet: &str,
) -> Result<(DerivedFields, usize, usize)> {
    let depth = order + extra;
    let (k1, k2, window) = frame_window(h, t1, t2, 2 * depth)?;
    let d = derive_words(h, depth, alphabet, window)?;
    Ok((d, k1, k2))
}

fn words_up_to(d: &DerivedFields, order: usize) -> Vec<&str> {
    d.words.iter().filter(|w| w.len() <= order).map(String::as_str).collect()
}

pub fn compute_le_norms(h: &FieldHistory, interval: (f64, f64), order: usize) -> Result<LeNorms> {
    let (t1, t2) = interval;
    let alphabet = if order == 0 { "tr" } else { "trS" };
    let (d, k1, k2) = derived_window(h, t1, t2, order, 1, alphabet)?;
    let (dt, dr) = (h.frames.dt, h.frames.dr);
    let r = &d.r;
    let mut out = LeNorms { le: 0.0, le_star: 0.0, le1: 0.0 };
    for w in words_up_to(&d, order) {
        let f = d.get(w).expect("word present");
        let ft = d.get(&format!("t{w}")).expect("t word present");
        let fr_ = d.get(&format!("r{w}")).expect("r word present");
        let plain = annulus_integrals(r, dt, dr, (k1, k2), |k, i| f[k][i] * f[k][i] / jp(r[i]));
        let dual = annulus_integrals(r, dt, dr, (k1, k2), |k, i| f[k][i] * f[k][i] * jp(r[i]));
        let grad = annulus_integrals(r, dt, dr, (k1, k2), |k, i| {
            (ft[k][i] * ft[k][i] + fr_[k][i] * fr_[k][i]) / jp(r[i])
        });
        let low = annulus_integrals(r, dt, dr, (k1, k2), |k, i| f[k][i] * f[k][i] / jp(r[i]).powi(3));
        out.le += le_sup(&plain);
        out.le_star += le_sum(&dual);
        out.le1 += le_sup(&grad) + le_sup(&low);
    }
    Ok(out)
}

/// Weights w_i with Σ w_i g(r_i) = ∫_0^{r_N} r^p g dr exactly for g
/// piecewise linear on the uniform nodes r_i = i·dr. Needs p > -1.
fn power_weights(n: usize, dr: f64, p: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let (a, b) = (i as f64 * dr, (i + 1) as f64 * dr);
        let m0 = (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
        let m1 = (b.powf(p + 2.0) - a.powf(p + 2.0)) / (p + 2.0);
        // ∫ r^p (b - r)/dr and ∫ r^p (r - a)/dr over the cell
        w[i] += (b * m0 - m1) / dr;
        w[i + 1] += (m1 - a * m0) / dr;
    }
    w
}

fn weighted(w: &[f64], g: impl Fn(usize) -> f64) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, wi)| {
            let v = g(i);
            if v.is_finite() {
                wi * v
            } else {
                0.0
            }
        })
        .sum()
}

/// The r^γ functionals on [t1, t2] for φ_{≤order}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RGamma {
    /// ∫∫ (φ_{≤m})² r^(γ-3) + |∂̄φ_{≤m}|² r^(γ-1) dx dt.
    pub a: f64,
    /// E^γ at t1 and t2.
    pub e1: f64,
    pub e2: f64,
}

fn check_gamma(gamma: f64, sigma: f64) -> Result<()> {
    let upper = (2.0 * sigma).min(1.0);
    if !(gamma > 0.5 && gamma < upper) {
        return Err(MeterError::GammaOutOfRange { gamma, upper });
    }
    Ok(())
}

/// E^γ = ‖r^{γ/2} ((∂_v + 1/(2r)) φ_{≤m}, φ_{≤m}/r)‖², with ∂_v = ½(∂_t + ∂_r)
/// and the convention ‖(f_1, f_2)‖ = ‖f_1‖ + ‖f_2‖, summed over words.
fn rgamma_energy(d: &DerivedFields, words: &[&str], k: usize, gamma: f64, dr: f64) -> f64 {
    let r = &d.r;
    let w = power_weights(r.len(), dr, gamma);
    let mut norm = 0.0;
    for word in words {
        let f = &d.get(word).expect("word present")[k];
        let ft = &d.get(&format!("t{word}")).expect("t word present")[k];
        let fr_ = &d.get(&format!("r{word}")).expect("r word present")[k];
        // r^{γ+2}(∂_v f + f/(2r))² = r^γ (r ∂_v f + f/2)²
        let good = weighted(&w, |i| (0.5 * r[i] * (ft[i] + fr_[i]) + 0.5 * f[i]).powi(2));
        let low = weighted(&w, |i| f[i] * f[i]);
        norm += (FOUR_PI * good).sqrt() + (FOUR_PI * low).sqrt();
    }
    norm * norm
}

fn rgamma_parts(d: &DerivedFields, k1: usize, k2: usize, order: usize, gamma: f64, dt: f64, dr: f64) -> RGamma {
    let r = &d.r;
    let words = words_up_to(d, order);
    let w_low = power_weights(r.len(), dr, gamma - 1.0);
    let w_bar = power_weights(r.len(), dr, gamma + 1.0);
    let mut a = 0.0;
    for k in k1..=k2 {
        let wt = time_weight(k, k1, k2, dt);
        if wt == 0.0 {
            continue;
        }
        let sum = |i: usize, f: &dyn Fn(&str, usize) -> f64| -> f64 { words.iter().map(|w| f(w, i).abs()).sum() };
        let val = |w: &str, i: usize| d.get(w).expect("word present")[k][i];
        let bar = |w: &str, i: usize| {
            d.get(&format!("t{w}")).expect("t word present")[k][i] + d.get(&format!("r{w}")).expect("r word present")[k][i]
        };
        let low = weighted(&w_low, |i| sum(i, &val).powi(2));
        let tangential = weighted(&w_bar, |i| sum(i, &bar).powi(2));
        a += FOUR_PI * (low + tangential) * wt;
    }
    RGamma { a, e1: rgamma_energy(d, &words, k1, gamma, dr), e2: rgamma_energy(d, &words, k2, gamma, dr) }
}

pub fn compute_rgamma(h: &FieldHistory, gamma: f64, sigma: f64, t1: f64, t2: f64, order: usize) -> Result<RGamma> {
    check_gamma(gamma, sigma)?;
    let alphabet = if order == 0 { "tr" } else { "trS" };
    let (d, k1, k2) = derived_window(h, t1, t2, order, 1, alphabet)?;
    Ok(rgamma_parts(&d, k1, k2, order, gamma, h.frames.dt, h.frames.dr))
}

/// Both sides of the r^γ inequality on one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RGammaBalance {
    pub t1: f64,
    pub t2: f64,
    pub parts: RGamma,
    /// ‖∂φ_{≤m}‖²_LE + ‖∂²φ_{≤m}‖²_LE on [t1, t2].
    pub le_terms: f64,
    /// (A + E(t2)) / (E(t1) + LE terms); None when both are zero.
    pub ratio: Option<f64>,
}

pub fn rgamma_balance(h: &FieldHistory, gamma: f64, sigma: f64, t1: f64, t2: f64, order: usize) -> Result<RGammaBalance> {
    check_gamma(gamma, sigma)?;
    let alphabet = if order == 0 { "tr" } else { "trS" };
    let (d, k1, k2) = derived_window(h, t1, t2, order, 2, alphabet)?;
    let (dt, dr) = (h.frames.dt, h.frames.dr);
    let parts = rgamma_parts(&d, k1, k2, order, gamma, dt, dr);
    let r = &d.r;
    let mut first = 0.0;
    let mut second = 0.0;
    for w in words_up_to(&d, order) {
        let get = |p: &str| d.get(&format!("{p}{w}")).expect("derivative word present");
        let (ft, fr_) = (get("t"), get("r"));
        let (ftt, ftr, frt, frr) = (get("tt"), get("tr"), get("rt"), get("rr"));
        first += le_sup(&annulus_integrals(r, dt, dr, (k1, k2), |k, i| {
            (ft[k][i].powi(2) + fr_[k][i].powi(2)) / jp(r[i])
        }));
        second += le_sup(&annulus_integrals(r, dt, dr, (k1, k2), |k, i| {
            (ftt[k][i].powi(2) + ftr[k][i].powi(2) + frt[k][i].powi(2) + frr[k][i].powi(2)) / jp(r[i])
        }));
    }
    let le_terms = first * first + second * second;
    let lhs = parts.a + parts.e2;
    let rhs = parts.e1 + le_terms;
    let ratio = if lhs == 0.0 && rhs == 0.0 { None } else { Some(lhs / rhs) };
    Ok(RGammaBalance { t1, t2, parts, le_terms, ratio })
}

/// Measured sides of the stationary local-energy estimate on one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiledRow {
    pub t0: f64,
    pub t1: f64,
    /// Σ_{|α|≤m} ‖∂^α φ‖_{LE¹}.
    pub lhs: f64,
    /// ‖∂φ(t0)‖_{H^m} + Σ ‖∂^α □φ‖_{LE*} + Σ ‖∂_t ∂^α φ‖_{LE}.
    pub rhs: f64,
    /// lhs/rhs; None for 0/0, which counts as a vacuous pass.
    pub ratio: Option<f64>,
    pub growing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiledReport {
    pub rows: Vec<SiledRow>,
}

impl SiledReport {
    pub fn bounded(&self) -> bool {
        self.rows.iter().all(|r| !r.growing)
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max)
    }
}

/// Ratio of the two sides of the stationary local-energy estimate for
/// each interval. The forcing is the flat □φ of the lattice field, so on
/// a perturbed background the perturbation counts as forcing.
pub fn check_siled(h: &FieldHistory, intervals: &[(f64, f64)], order: usize) -> Result<SiledReport> {
    let (dt, dr) = (h.frames.dt, h.frames.dr);
    let mut rows = Vec::with_capacity(intervals.len());
    for &(t0, t1) in intervals {
        let (d, k1, k2) = derived_window(h, t0, t1, order, 2, "tr")?;
        let r = &d.r;
        let words = words_up_to(&d, order);
        let mut lhs = 0.0;
        let mut dt_part = 0.0;
        for w in &words {
            let f = d.get(w).expect("word present");
            let get = |p: &str| d.get(&format!("{p}{w}")).expect("derivative word present");
            let (ft, fr_) = (get("t"), get("r"));
            lhs += le_sup(&annulus_integrals(r, dt, dr, (k1, k2), |k, i| {
                (ft[k][i].powi(2) + fr_[k][i].powi(2)) / jp(r[i])
            }));
            lhs += le_sup(&annulus_integrals(r, dt, dr, (k1, k2), |k, i| f[k][i].powi(2) / jp(r[i]).powi(3)));
            dt_part += le_sup(&annulus_integrals(r, dt, dr, (k1, k2), |k, i| ft[k][i].powi(2) / jp(r[i])));
        }
        // ‖∂φ(t0)‖_{H^m} with spatial derivatives only
        let mut data = 0.0;
        for j in 0..=order {
            let w = "r".repeat(j);
            let ft = &d.get(&format!("{w}t")).expect("word present")[k1];
            let fr_ = &d.get(&format!("{w}r")).expect("word present")[k1];
            let sq: f64 = r
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let v = ft[i].powi(2) + fr_[i].powi(2);
                    if v.is_finite() {
                        v * FOUR_PI * x * x * dr
                    } else {
                        0.0
                    }
                })
                .sum();
            data += sq.sqrt();
        }
        // □φ = -φ_tt + φ_rr + 2φ_r/r, with 2φ_rr at the origin
        let (ftt, frr, fr_) = (d.get("tt").unwrap(), d.get("rr").unwrap(), d.get("r").unwrap());
        let boxed: Vec<Vec<f64>> = (0..d.times.len())
            .map(|k| {
                (0..r.len())
                    .map(|i| {
                        let first = if r[i] > 0.0 { 2.0 * fr_[k][i] / r[i] } else { 2.0 * frr[k][i] };
                        -ftt[k][i] + frr[k][i] + first
                    })
                    .collect()
            })
            .collect();
        let forcing = derive_from(boxed, d.times.clone(), r.clone(), (dt, dr), order, "tr");
        let mut dual = 0.0;
        for w in words_up_to(&forcing, order) {
            let g = forcing.get(w).expect("word present");
            dual += le_sum(&annulus_integrals(r, dt, dr, (k1, k2), |k, i| g[k][i].powi(2) * jp(r[i])));
        }
        let rhs = data + dual + dt_part;
        let ratio = if lhs == 0.0 && rhs == 0.0 { None } else { Some(lhs / rhs) };
        rows.push(SiledRow { t0, t1, lhs, rhs, ratio, growing: false });
    }
    if let Some(base) = rows.iter().find_map(|r| r.ratio) {
        for row in &mut rows {
            row.growing = row.ratio.is_some_and(|q| !(q <= GROWTH_FACTOR * base));
        }
    }
    Ok(SiledReport { rows })
}
