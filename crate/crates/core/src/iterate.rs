//! The bootstrap: repeated source bounds and fundamental-solution conversions
//! until the pointwise bound stops improving.
//!
//! Exterior (u < -1):
//! 1. Phase A raises the ⟨r⟩ power from 1/2 to 1 using Bd2, with ∂_t H2
//!    treated as an ordinary source.
//! 2. Phase B raises the ⟨u⟩ power to 1 using Bd1 and Bd1der against the
//!    model nonlinearity ∂̄φ·∂φ.
//! 3. Phase C uses the actual terms (at most three derivative gains each)
//!    and runs to a fixed point.
//!
//! Interior (u > 1) follows the same pattern with one interiorization after
//! every conversion: r-form bounds ⟨r⟩^-1⟨u⟩^-e become ⟨t⟩^-1⟨u⟩^-e.

use std::fmt;

use num_rational::Rational64;

use crate::bound::{DecayBound, Region};
use crate::calculus::{
    convert_cone_axis_capped, convert_cone_exterior, convert_cone_interior, convert_dt_source_extended,
    dt_of_linear_source, interiorize, rp_jumpstart, source_bound_linear, source_bound_nonlinear,
    source_bound_truncated, BoundaryPolicy, CalculusError, Result, Source,
};
use crate::exponent::{Exp, Sigma};
use crate::problem::{NonlinearTerm, ProblemSpec};

pub const STEP_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Track {
    Phi1,
    Phi2,
    Phi3,
    Free,
    Combined,
}

impl Track {
    pub fn name(self) -> &'static str {
        match self {
            Track::Phi1 => "phi1",
            Track::Phi2 => "phi2",
            Track::Phi3 => "phi3",
            Track::Free => "free",
            Track::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub step: usize,
    pub track: Track,
    pub rule: &'static str,
    pub inputs: Vec<DecayBound>,
    pub output: DecayBound,
    pub label: Option<&'static str>,
    pub note: Option<String>,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inputs: Vec<String> = self.inputs.iter().map(|b| b.to_string()).collect();
        write!(
            f,
            "step={} track={} rule={} in={} out={}",
            self.step,
            self.track.name(),
            self.rule,
            if inputs.is_empty() { "-".to_string() } else { inputs.join("|") },
            self.output
        )?;
        if let Some(l) = self.label {
            write!(f, " label={l}")?;
        }
        if let Some(n) = &self.note {
            write!(f, " note=\"{n}\"")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IterationTrace {
    pub steps: Vec<TraceStep>,
}

impl IterationTrace {
    /// The labelled combined bounds in order, e.g. `[("1stbd", ..), ..]`.
    pub fn labelled(&self) -> Vec<(&'static str, DecayBound)> {
        self.steps.iter().filter_map(|s| s.label.map(|l| (l, s.output))).collect()
    }

    pub fn find(&self, label: &str) -> Option<DecayBound> {
        self.steps.iter().find(|s| s.label == Some(label)).map(|s| s.output)
    }

    /// Number of bootstrap iterations performed.
    pub fn iterations(&self) -> usize {
        self.steps.last().map_or(0, |s| s.step)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// ∂_t H2 bounded as a plain source, model nonlinearity.
    Weak,
    /// Bd1der for H2, model nonlinearity.
    Model,
    /// Actual nonlinear terms.
    Actual,
}

struct Labels {
    first: Option<&'static str>,
    cap: Option<&'static str>,
    fixed: Option<&'static str>,
}

struct Engine<'a> {
    spec: &'a ProblemSpec,
    sigma: Sigma,
    region: Region,
    trace: IterationTrace,
    step: usize,
    /// Jumpstart bound for φ²∂φ-shaped terms, in the bootstrap normal form.
    jump: Option<DecayBound>,
}

const PERTURB: BoundaryPolicy = BoundaryPolicy::Perturb;

fn boundary_note(eta: Exp, alpha: Option<Exp>, sum: Option<Exp>) -> Option<String> {
    let mut hits = Vec::new();
    if eta == Exp::int(1) {
        hits.push("eta=1");
    }
    if alpha == Some(Exp::int(3)) {
        hits.push("alpha=3");
    }
    if sum == Some(Exp::int(3)) {
        hits.push("alpha+beta+eta=3");
    }
    (!hits.is_empty()).then(|| format!("{} taken as a limit (sigma lowered slightly)", hits.join(",")))
}

impl<'a> Engine<'a> {
    fn new(spec: &'a ProblemSpec, region: Region) -> Self {
        Engine { spec, sigma: spec.sigma, region, trace: IterationTrace::default(), step: 0, jump: None }
    }

    fn record(
        &mut self,
        track: Track,
        rule: &'static str,
        inputs: &[DecayBound],
        output: DecayBound,
        note: Option<String>,
    ) {
        self.trace.steps.push(TraceStep {
            step: self.step,
            track,
            rule,
            inputs: inputs.to_vec(),
            output,
            label: None,
            note,
        });
    }

    fn label_last(&mut self, label: Option<&'static str>) {
        if let (Some(l), Some(last)) = (label, self.trace.steps.last_mut()) {
            last.label = Some(l);
        }
    }

    fn free_wave(&self) -> DecayBound {
        let e = Exp::int(1) + self.spec.kappa();
        match self.region {
            Region::Exterior => DecayBound::new(Exp::int(1), Exp::zero(), e, Region::Exterior),
            _ => DecayBound::new(Exp::zero(), Exp::int(1), e, Region::Interior),
        }
    }

    /// Choose between Bd1 and Bd2 and split the source weights so that the
    /// chosen rule applies.
    fn fundamental(&self, h: &DecayBound) -> Result<(DecayBound, &'static str, Option<String>)> {
        let s = self.sigma;
        let h = h.canonical();
        if h.region == Region::Exterior {
            let total = h.a + h.b;
            let sum = total + h.e;
            if total.le(&Exp::int(2), s) {
                // Bd2 with α+β ≤ 2 needs η ≤ 1; lowering η is a weakening.
                let eta = h.e.min_at(Exp::int(1), s);
                let src = DecayBound::new(total, Exp::zero(), eta, Region::Exterior);
                let out = convert_cone_exterior(&src, s, PERTURB)?;
                let mut note = boundary_note(eta, None, Some(total + eta));
                if eta != h.e {
                    note = Some(format!("eta lowered to {eta}"));
                }
                return Ok((out, "Bd2", note));
            }
            if sum.le(&Exp::int(3), s) {
                let out = convert_cone_exterior(&h, s, PERTURB)?;
                return Ok((out, "Bd2", boundary_note(Exp::zero(), None, Some(sum))));
            }
            let alpha = if total.lt(&Exp::int(3), s) { total } else { Exp::frac(5, 2) };
            let src = DecayBound::new(alpha, total - alpha, h.e, Region::Exterior);
            let out = convert_cone_interior(&src, s, PERTURB)?;
            return Ok((out, "Bd1", boundary_note(h.e, Some(alpha), None)));
        }
        let src = self.split_interior(&h)?;
        let out = convert_cone_axis_capped(&src, s, PERTURB)?;
        let rule = if src.a.gt(&Exp::int(3), s) { "Bd1|axis" } else { "Bd1" };
        Ok((out, rule, boundary_note(src.e, Some(src.a), None)))
    }

    /// Move ⟨v⟩ weight into the ⟨r⟩ slot (r ≤ v) until α > 2.
    fn split_interior(&self, h: &DecayBound) -> Result<DecayBound> {
        let s = self.sigma;
        if h.a.gt(&Exp::int(2), s) {
            return Ok(*h);
        }
        let total = h.a + h.b;
        if total.le(&Exp::int(2), s) {
            return Err(CalculusError::ExponentOutOfRange(format!("source {h} has a+b <= 2")));
        }
        let m = Exp::frac(1, 2).min_at((total - Exp::int(2)).scale(Rational64::new(1, 2)), s);
        let alpha = Exp::int(2) + m;
        Ok(DecayBound::new(alpha, total - alpha, h.e, h.region))
    }

    fn fundamental_dt(&self, src: &Source) -> Result<(DecayBound, Option<String>)> {
        let out = convert_dt_source_extended(src, self.sigma, PERTURB)?;
        let alpha = src.bound.a + src.bound.b;
        Ok((out, boundary_note(src.bound.e, Some(alpha), None)))
    }

    /// Source for φ²∂φ-shaped terms, using the better of the current bound
    /// and the jumpstart bound for the underived factors.
    fn jumpstarted(&self, p: &DecayBound) -> Result<DecayBound> {
        match self.jump {
            Some(j) => Ok(p.better(&j, self.sigma)?),
            None => Ok(*p),
        }
    }

    /// H3 while the bootstrap is still weak: the model ∂̄φ∂φ bounds every
    /// admissible term except φ²∂φ, which needs the jumpstart.
    fn model_source(&self, p: &DecayBound) -> Result<DecayBound> {
        let s = self.sigma;
        let mut parts = Vec::new();
        if self.spec.terms.iter().any(|t| !t.is_phi2_dphi_shaped()) {
            parts.push(source_bound_nonlinear(&NonlinearTerm::model(), p, s)?);
        }
        for t in self.spec.terms.iter().filter(|t| t.is_phi2_dphi_shaped()) {
            parts.push(source_bound_nonlinear(t, &self.jumpstarted(p)?, s)?);
        }
        Ok(DecayBound::join_all(&parts, s)?)
    }

    /// Source of one actual term with g = min(J, 3) gains, fewer if the
    /// ⟨v⟩ power would turn negative.
    fn actual_source(&self, term: &NonlinearTerm, p: &DecayBound) -> Result<DecayBound> {
        let s = self.sigma;
        let current = if term.is_phi2_dphi_shaped() { self.jumpstarted(p)? } else { *p };
        let mut g = term.derivs.min(3);
        loop {
            let h = source_bound_truncated(term, &current, g, s)?;
            if g == 0 || h.b.ge(&Exp::zero(), s) {
                return Ok(h);
            }
            g -= 1;
        }
    }

    /// One pass over all tracks; returns the r-form bounds of the tracks.
    fn tracks(&mut self, p: &DecayBound, phase: Phase) -> Result<Vec<DecayBound>> {
        let s = self.sigma;
        let mut outs = Vec::new();
        let (h1, h2) = source_bound_linear(s, p)?;
        let (o, rule, note) = self.fundamental(&h1)?;
        self.record(Track::Phi1, rule, &[h1], o, note);
        outs.push(o);

        if phase == Phase::Weak {
            let dth2 = dt_of_linear_source(s, p)?;
            let (o, rule, note) = self.fundamental(&dth2)?;
            self.record(Track::Phi2, rule, &[dth2], o, note);
            outs.push(o);
        } else {
            let (o, note) = self.fundamental_dt(&h2)?;
            self.record(Track::Phi2, "Bd1der", &[h2.bound], o, note);
            outs.push(o);
        }

        if self.spec.terms.is_empty() {
            return Ok(outs);
        }
        if phase == Phase::Actual {
            for term in &self.spec.terms.clone() {
                if term.total_derivative {
                    // ψ from ∂(F) with F = φ^{n+1}/(n+1).
                    let inner = NonlinearTerm {
                        derivs: term.derivs - 1,
                        total_derivative: false,
                        dt_structured: false,
                        ..*term
                    };
                    let f = self.actual_source(&inner, p)?;
                    let (mut o, rule, note) = self.fundamental(&f)?;
                    let rule = if rule.starts_with("Bd1") {
                        o.e += Exp::int(1);
                        "Bd1tot"
                    } else {
                        rule
                    };
                    self.record(Track::Phi3, rule, &[f], o, note);
                    outs.push(o);
                } else {
                    let h3 = self.actual_source(term, p)?;
                    let (o, rule, note) = self.fundamental(&h3)?;
                    self.record(Track::Phi3, rule, &[h3], o, note);
                    outs.push(o);
                }
            }
        } else {
            let h3 = self.model_source(p)?;
            let (o, rule, note) = self.fundamental(&h3)?;
            self.record(Track::Phi3, rule, &[h3], o, note);
            outs.push(o);
        }
        Ok(outs)
    }

    /// Exponent that a phase is driving up.
    fn progress(&self, b: &DecayBound, phase: Phase) -> Exp {
        if phase == Phase::Weak {
            b.a
        } else {
            b.e
        }
    }

    /// Convert an r-form bound to t-form in the interior.
    fn interiorize_step(&mut self, old: &DecayBound, rform: DecayBound) -> Result<DecayBound> {
        let s = self.sigma;
        let mut r = rform;
        if (r.e - old.e).gt(&Exp::int(1), s) {
            r.e = old.e + Exp::int(1);
            self.record(
                Track::Combined,
                "weaken",
                &[rform],
                r,
                Some("improvement per interiorization is at most 1".into()),
            );
        }
        let delta = r.e - old.e;
        let q = r.e + Exp::frac(1, 2);
        let out = interiorize(&r, q, delta, s)?;
        self.record(Track::Combined, "interiorize", &[r], out, Some(format!("q={q} delta={delta}")));
        Ok(out)
    }

    fn run_phase(
        &mut self,
        start: DecayBound,
        phase: Phase,
        cap: Option<DecayBound>,
        labels: Labels,
    ) -> Result<DecayBound> {
        let s = self.sigma;
        let threshold = s.value().min(0.25);
        let mut p = start;
        let mut first = true;
        loop {
            self.step += 1;
            if self.step > STEP_CAP {
                return Err(CalculusError::NonConvergence(format!("step cap {STEP_CAP} reached at {p}")));
            }
            let outs = self.tracks(&p, phase)?;
            let mut comb = DecayBound::join_all(&outs, s)?;
            self.record(Track::Combined, "join", &outs, comb, None);
            if let Some(c) = cap {
                let capped = comb.join(&c, s)?;
                if capped != comb {
                    self.record(Track::Combined, "cap", &[comb, c], capped, None);
                    comb = capped;
                }
            }
            let mut candidate = comb;
            if self.region != Region::Exterior {
                candidate = self.interiorize_step(&p, comb)?;
                let free = self.free_wave();
                self.record(Track::Free, "free", &[], free, None);
                let joined = candidate.join(&free, s)?;
                if joined != candidate {
                    self.record(Track::Combined, "join", &[candidate, free], joined, None);
                    candidate = joined;
                }
            }
            // Combined bounds never get worse: both the old and the new
            // bound hold, so keep the stronger.
            let new = p.better(&candidate, s)?;
            let note = (new != candidate).then(|| "new bound not stronger; previous bound kept".to_string());
            self.record(Track::Combined, "better", &[p, candidate], new, note);

            let gained = self.progress(&new, phase) - self.progress(&p, phase);
            let at_cap = cap.is_some_and(|c| self.progress(&new, phase).ge(&self.progress(&c, phase), s));
            let fixed = new.same_exponents(&p);
            if fixed && phase == Phase::Actual {
                self.label_last(labels.fixed);
                return Ok(new);
            }
            if at_cap {
                self.label_last(labels.cap);
                return Ok(new);
            }
            if first {
                self.label_last(labels.first);
            }
            if gained.value(s) < threshold - 1e-12 && phase != Phase::Actual {
                return Err(CalculusError::NonConvergence(format!(
                    "stalled at {new}: improvement {} below {threshold}",
                    gained.value(s)
                )));
            }
            first = false;
            p = new;
        }
    }

    fn initial(&mut self, bound: DecayBound, rule: &'static str, inputs: &[DecayBound], label: &'static str) {
        self.record(Track::Combined, rule, inputs, bound, None);
        self.label_last(Some(label));
    }

    fn jumpstart(&mut self) -> Result<()> {
        if !self.spec.needs_jumpstart() {
            return Ok(());
        }
        let s = self.sigma;
        // γ ∈ (1/2, min(1, 2σ)), kept away from both ends.
        let gamma = if s.value() < 0.5 { Exp::frac(1, 4) + Exp::sigma() } else { Exp::frac(3, 4) };
        let (int, ext) = rp_jumpstart(gamma, s)?;
        let note = Some(format!("gamma={gamma}"));
        self.jump = Some(match self.region {
            Region::Exterior => {
                self.record(Track::Phi3, "jumpstart", &[], ext, note);
                ext
            }
            _ => {
                self.record(Track::Phi3, "jumpstart", &[], int, note);
                let q = int.e + Exp::frac(1, 2);
                let out = interiorize(&int, q, q, s)?;
                self.record(Track::Phi3, "interiorize", &[int], out, Some(format!("q={q} delta={q}")));
                out
            }
        });
        Ok(())
    }
}

/// Exterior bootstrap. Returns ⟨r⟩^-1⟨u⟩^-e with the final e.
pub fn iterate_exterior(spec: &ProblemSpec) -> Result<(DecayBound, IterationTrace)> {
    let s = spec.sigma;
    let mut eng = Engine::new(spec, Region::Exterior);
    let inbd = DecayBound::new(Exp::int(1), Exp::zero(), Exp::frac(-1, 2), Region::Exterior);
    eng.initial(inbd, "initial", &[], "inbd");
    let first = inbd.weaken_u_into_r(s);
    eng.initial(first, "weaken", &[inbd], "1stbd");
    eng.jumpstart()?;

    let p = eng.run_phase(
        first,
        Phase::Weak,
        Some(DecayBound::ints(1, 0, 0, Region::Exterior)),
        Labels { first: Some("2ndbd"), cap: Some("3rdbd"), fixed: None },
    )?;
    let p = eng.run_phase(
        p,
        Phase::Model,
        Some(DecayBound::ints(1, 0, 1, Region::Exterior)),
        Labels { first: Some("4thbd"), cap: Some("yields"), fixed: None },
    )?;
    let p = eng.run_phase(p, Phase::Actual, None, Labels { first: None, cap: None, fixed: Some("final") })?;
    Ok((p, eng.trace))
}

/// Interior bootstrap. Returns ⟨v⟩^-1⟨u⟩^-e with the final e.
pub fn iterate_interior(spec: &ProblemSpec) -> Result<(DecayBound, IterationTrace)> {
    let mut eng = Engine::new(spec, Region::Interior);
    let inbd1 = DecayBound::new(Exp::zero(), Exp::int(1), Exp::frac(-1, 2), Region::Interior);
    eng.initial(inbd1, "initial", &[], "inbd1");
    eng.jumpstart()?;

    let p = eng.run_phase(
        inbd1,
        Phase::Model,
        Some(DecayBound::ints(1, 0, 0, Region::Interior)),
        Labels { first: Some("inbd2"), cap: Some("3rdbd'"), fixed: None },
    )?;
    let p = eng.run_phase(
        p,
        Phase::Model,
        Some(DecayBound::ints(1, 0, 1, Region::Interior)),
        Labels { first: None, cap: Some("to-beat"), fixed: None },
    )?;
    let p = eng.run_phase(p, Phase::Actual, None, Labels { first: Some("btr"), cap: None, fixed: Some("final") })?;
    Ok((p, eng.trace))
}

/// Closed form: ⟨v⟩^-1⟨u⟩^-E with E = min(1+σ, rate of the worst term),
/// where a term's rate is 𝒯+𝒩-2, or 𝒯+n for total-derivative terms.
pub fn predicted_final_rate(spec: &ProblemSpec) -> DecayBound {
    let s = spec.sigma;
    let linear = Exp::int(1) + Exp::sigma();
    let e = match spec.nonlinear_rate() {
        Some(r) => linear.min_at(r, s),
        None => linear,
    };
    DecayBound::new(Exp::zero(), Exp::int(1), e, Region::Global)
}
