//! Rewrite rules on decay bounds: fundamental-solution conversions, derivative
//! and tangential gains, source bounds, interiorization and the r^γ jumpstart.
//!
//! Every rule is a pure function of exact exponents. Conversions take the
//! source exponents (α, β, η) packed in a [`DecayBound`] as (a, b, e).

use num_rational::Rational64;

use crate::bound::{DecayBound, Region, RegionMismatch, Support};
use crate::exponent::{Exp, Sigma};
use crate::problem::NonlinearTerm;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CalculusError {
    #[error("exponent out of range: {0}")]
    ExponentOutOfRange(String),
    #[error("boundary exponent {0}; perturb sigma and retry")]
    BoundaryCase(String),
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("source is not a cone-supported time derivative")]
    NotDtStructured,
    #[error(transparent)]
    RegionMismatch(#[from] RegionMismatch),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("gamma out of range: {0}")]
    GammaOutOfRange(String),
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
}

pub type Result<T> = std::result::Result<T, CalculusError>;

/// What to do when an exponent sits exactly on an excluded boundary
/// (η = 1, α = 3, α+β+η = 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    Strict,
    /// Take the limit of the formula, which is continuous at every excluded
    /// boundary; the logarithmic loss is absorbed by lowering σ slightly.
    Perturb,
}

/// A source term together with its structural flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Source {
    pub bound: DecayBound,
    pub support: Support,
    pub dt_structured: bool,
}

impl Source {
    pub fn plain(bound: DecayBound) -> Self {
        Source { bound, support: Support::Full, dt_structured: false }
    }
}

fn one() -> Exp {
    Exp::int(1)
}

fn eta_tilde(eta: Exp, sigma: Sigma) -> Exp {
    if eta.lt(&one(), sigma) {
        eta - Exp::int(2)
    } else {
        -one()
    }
}

fn boundary(policy: BoundaryPolicy, what: String) -> Result<()> {
    match policy {
        BoundaryPolicy::Strict => Err(CalculusError::BoundaryCase(what)),
        BoundaryPolicy::Perturb => Ok(()),
    }
}

fn check_beta_eta(beta: Exp, eta: Exp, sigma: Sigma) -> Result<()> {
    if beta.lt(&Exp::zero(), sigma) {
        return Err(CalculusError::ExponentOutOfRange(format!("beta={beta} < 0")));
    }
    if eta.lt(&Exp::frac(-1, 2), sigma) {
        return Err(CalculusError::ExponentOutOfRange(format!("eta={eta} < -1/2")));
    }
    Ok(())
}

/// (Bd1): ψ ≲ ⟨r⟩^-1 ⟨u⟩^-(α+β+η̃-1), η̃ = η-2 for η<1 and -1 for η>1.
pub fn convert_cone_interior(src: &DecayBound, sigma: Sigma, policy: BoundaryPolicy) -> Result<DecayBound> {
    let (alpha, beta, eta) = (src.a, src.b, src.e);
    if alpha.le(&Exp::int(2), sigma) {
        return Err(CalculusError::ExponentOutOfRange(format!("alpha={alpha} <= 2")));
    }
    check_beta_eta(beta, eta, sigma)?;
    if alpha == Exp::int(3) {
        boundary(policy, "alpha=3".into())?;
    }
    if eta == one() {
        boundary(policy, "eta=1".into())?;
    }
    let sum = alpha + beta + eta;
    if src.region != Region::Interior {
        let three = Exp::int(3);
        let ok = sum.gt(&three, sigma) || (sum == three && policy == BoundaryPolicy::Perturb);
        if !ok {
            return Err(CalculusError::WrongRegime(format!(
                "alpha+beta+eta={sum} <= 3 outside the interior"
            )));
        }
    }
    let e = alpha + beta + eta_tilde(eta, sigma) - one();
    Ok(DecayBound::new(one(), Exp::zero(), e, src.region))
}

/// Bd1 with the near-axis contribution taken into account: for α > 3 in the
/// interior the strip r ≲ 1, t - r ≈ u limits the rate to β+η.
pub fn convert_cone_axis_capped(src: &DecayBound, sigma: Sigma, policy: BoundaryPolicy) -> Result<DecayBound> {
    let mut out = convert_cone_interior(src, sigma, policy)?;
    if src.region != Region::Exterior && src.a.gt(&Exp::int(3), sigma) {
        out.e = out.e.min_at(src.b + src.e, sigma);
    }
    Ok(out)
}

/// (Bd2): ψ ≲ r^(2-(α+β+η)) in the exterior when α+β+η < 3.
///
/// The estimate only needs α+β > 2 or η < 1, so smaller α are accepted
/// when η < 1.
pub fn convert_cone_exterior(src: &DecayBound, sigma: Sigma, policy: BoundaryPolicy) -> Result<DecayBound> {
    if src.region != Region::Exterior {
        return Err(CalculusError::WrongRegime("Bd2 needs the exterior region".into()));
    }
    let (alpha, beta, eta) = (src.a, src.b, src.e);
    let three = Exp::int(3);
    let sum = alpha + beta + eta;
    if sum.gt(&three, sigma) {
        return Err(CalculusError::WrongRegime(format!("alpha+beta+eta={sum} > 3; use Bd1")));
    }
    if sum == three {
        boundary(policy, "alpha+beta+eta=3".into())?;
    }
    check_beta_eta(beta, eta, sigma)?;
    if (alpha + beta).le(&Exp::int(2), sigma) {
        if eta == one() {
            boundary(policy, "eta=1 with alpha+beta<=2".into())?;
        } else if eta.gt(&one(), sigma) {
            return Err(CalculusError::ExponentOutOfRange(format!(
                "alpha+beta={} <= 2 needs eta < 1",
                alpha + beta
            )));
        }
    }
    Ok(DecayBound::new(sum - Exp::int(2), Exp::zero(), Exp::zero(), Region::Exterior))
}

fn dt_common(src: &Source, sigma: Sigma, policy: BoundaryPolicy) -> Result<(Exp, Exp)> {
    if !src.dt_structured || src.support != Support::ConeSupported {
        return Err(CalculusError::NotDtStructured);
    }
    // On 1/2 <= r/t <= 3/2 the r and v weights are interchangeable.
    let alpha = src.bound.a + src.bound.b;
    let eta = src.bound.e;
    if alpha.le(&Exp::int(2), sigma) {
        return Err(CalculusError::ExponentOutOfRange(format!("alpha={alpha} <= 2")));
    }
    check_beta_eta(Exp::zero(), eta, sigma)?;
    if alpha == Exp::int(3) {
        boundary(policy, "alpha=3".into())?;
    }
    if eta == one() {
        boundary(policy, "eta=1".into())?;
    }
    Ok((alpha, eta))
}

/// (Bd1der): for □ψ = ∂_t g with g cone supported,
/// ψ ≲ ⟨r⟩^-1 ⟨u⟩^-(α+η̃), one power of ⟨u⟩ better than Bd1.
pub fn convert_dt_source(src: &Source, sigma: Sigma, policy: BoundaryPolicy) -> Result<DecayBound> {
    let (alpha, eta) = dt_common(src, sigma, policy)?;
    if alpha.gt(&Exp::int(3), sigma) {
        return Err(CalculusError::ExponentOutOfRange(format!("alpha={alpha} >= 3")));
    }
    if src.bound.region != Region::Interior && !(alpha + eta).gt(&Exp::int(3), sigma) {
        return Err(CalculusError::WrongRegime(format!("alpha+eta={} <= 3 outside the interior", alpha + eta)));
    }
    let e = alpha + eta_tilde(eta, sigma);
    Ok(DecayBound::new(one(), Exp::zero(), e, src.bound.region))
}

/// Bd1der without the α < 3 restriction and with the exterior threshold
/// α+η > 2. Cone-supported sources have no near-axis part, which is what
/// limits Bd1 for large α.
pub fn convert_dt_source_extended(src: &Source, sigma: Sigma, policy: BoundaryPolicy) -> Result<DecayBound> {
    let (alpha, eta) = dt_common(src, sigma, policy)?;
    if src.bound.region != Region::Interior && !(alpha + eta).gt(&Exp::int(2), sigma) {
        return Err(CalculusError::WrongRegime(format!("alpha+eta={} <= 2 outside the interior", alpha + eta)));
    }
    let e = alpha + eta_tilde(eta, sigma);
    Ok(DecayBound::new(one(), Exp::zero(), e, src.bound.region))
}

/// Total-derivative sources ∂(F): after integrating by parts the ρ weight
/// disappears, which gains one power of ⟨u⟩ over Bd1 applied to F.
pub fn convert_total_derivative(f: &DecayBound, sigma: Sigma, policy: BoundaryPolicy) -> Result<DecayBound> {
    let mut out = convert_cone_axis_capped(f, sigma, policy)?;
    out.e += one();
    Ok(out)
}

/// Prop. 4.6 style gain: ∂φ decays faster by μ^-1 ~ ⟨v⟩/(⟨r⟩⟨u⟩).
pub fn derivative_gain(bound: &DecayBound) -> DecayBound {
    bound.times(one(), -one(), one()).canonical()
}

/// ∂̄φ ≲ (⟨u⟩/⟨v⟩)|∂φ| + ⟨v⟩^-1|Zφ|, reported as the weaker of the two.
pub fn tangential_gain(phi: &DecayBound, dphi: &DecayBound, sigma: Sigma) -> Result<DecayBound> {
    if phi.region != dphi.region {
        return Err(RegionMismatch(phi.region, dphi.region).into());
    }
    let via_d = dphi.times(Exp::zero(), one(), -one()).canonical();
    let via_z = phi.times(Exp::zero(), one(), Exp::zero()).canonical();
    Ok(via_d.join(&via_z, sigma)?)
}

/// ∂²φ ≲ (⟨r⟩^-1 + ⟨u⟩^-1)|∂φ| + (⟨v⟩/⟨u⟩)⟨r⟩^-2|φ| + (⟨v⟩/⟨u⟩)|src|.
/// Absent inputs stand for identically zero functions.
pub fn second_derivative_bound(
    dphi: Option<&DecayBound>,
    phi: Option<&DecayBound>,
    src: Option<&DecayBound>,
    sigma: Sigma,
) -> Result<Option<DecayBound>> {
    let mut terms = Vec::new();
    if let Some(d) = dphi {
        let by_r = d.times(one(), Exp::zero(), Exp::zero()).canonical();
        let by_u = d.times(Exp::zero(), Exp::zero(), one()).canonical();
        terms.push(by_r.join(&by_u, sigma)?);
    }
    if let Some(p) = phi {
        terms.push(p.times(Exp::int(2), -one(), one()).canonical());
    }
    if let Some(s) = src {
        terms.push(s.times(Exp::zero(), -one(), one()).canonical());
    }
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(DecayBound::join_all(&terms, sigma)?))
}

/// H ≲ (⟨u⟩/⟨v⟩)^𝒯 μ^-J φ^𝒩 with every derivative gaining.
pub fn source_bound_nonlinear(term: &NonlinearTerm, current: &DecayBound, sigma: Sigma) -> Result<DecayBound> {
    source_bound_truncated(term, current, term.derivs, sigma)
}

/// As [`source_bound_nonlinear`] but with at most `max_gains` derivatives
/// gaining a factor μ^-1; the remaining derivative factors are bounded by
/// the field bound itself.
pub fn source_bound_truncated(
    term: &NonlinearTerm,
    current: &DecayBound,
    max_gains: u32,
    sigma: Sigma,
) -> Result<DecayBound> {
    let p = current.canonical();
    let d = derivative_gain(&p);
    let dd = second_derivative_bound(Some(&d), Some(&p), None, sigma)?.expect("inputs present");
    let mut gains = max_gains;
    let mut acc = DecayBound::zero(p.region);
    let first_order = term.derivs - 2 * term.second_order;
    for _ in 0..term.second_order {
        let f = match gains {
            0 => p,
            1 => d,
            _ => dd,
        };
        gains = gains.saturating_sub(2);
        acc = acc.product(&f);
    }
    for _ in 0..first_order {
        let f = if gains > 0 { d } else { p };
        gains = gains.saturating_sub(1);
        acc = acc.product(&f);
    }
    for _ in 0..(term.factors - term.second_order - first_order) {
        acc = acc.product(&p);
    }
    let t = term.tangential as i64;
    Ok(acc.times(Exp::zero(), Exp::int(t), Exp::int(-t)).canonical())
}

/// Linear sources: H1 from S(⟨r⟩^-2-σ)φ plus the off-cone S(⟨r⟩^-1-σ)∂φ,
/// and the cone-supported H2 = S(⟨r⟩^-1-σ)φ entering as ∂_t H2.
pub fn source_bound_linear(sigma: Sigma, current: &DecayBound) -> Result<(DecayBound, Source)> {
    let s = Exp::sigma();
    let p = current.canonical();
    let main = p.times(Exp::int(2) + s, Exp::zero(), Exp::zero()).canonical().weaken_u_into_r(sigma);
    let off = derivative_gain(&p).times(one() + s, Exp::zero(), Exp::zero()).off_cone_fold();
    let h1 = DecayBound::join_off_cone(&main, &off, sigma)?;
    let h2 = Source {
        bound: p.times(one() + s, Exp::zero(), Exp::zero()).canonical(),
        support: Support::ConeSupported,
        dt_structured: true,
    };
    Ok((h1, h2))
}

/// Bound for ∂_t H2 read as an ordinary source: the coefficient loses a
/// power of ⟨r⟩ when differentiated, φ gains μ^-1.
pub fn dt_of_linear_source(sigma: Sigma, current: &DecayBound) -> Result<DecayBound> {
    let s = Exp::sigma();
    let p = current.canonical();
    let via_d = derivative_gain(&p).times(one() + s, Exp::zero(), Exp::zero()).canonical();
    let via_c = p.times(Exp::int(2) + s, Exp::zero(), Exp::zero()).canonical();
    Ok(via_d.join(&via_c, sigma)?)
}

/// Prop. 8.2: trade one ⟨r⟩ weight for a ⟨t⟩ weight in r < 3t/4, given
/// the previous bound was worse by at most ⟨u⟩^δ.
pub fn interiorize(bound: &DecayBound, q: Exp, delta: Exp, sigma: Sigma) -> Result<DecayBound> {
    if bound.region == Region::Exterior {
        return Err(CalculusError::WrongRegime("interiorize acts on interior bounds".into()));
    }
    if q.lt(&delta, sigma) {
        return Err(CalculusError::HypothesisFailed(format!("q={q} < delta={delta}")));
    }
    if delta.gt(&one(), sigma) {
        return Err(CalculusError::HypothesisFailed(format!("delta={delta} > 1")));
    }
    if bound.a.lt(&one(), sigma) {
        return Err(CalculusError::HypothesisFailed(format!("a={} < 1", bound.a)));
    }
    Ok(DecayBound::new(bound.a - one(), bound.b + one(), bound.e, Region::Interior))
}

/// Prop. 6.3: the r^γ estimate gives ⟨r⟩φ ≲ ⟨u⟩^(1/2-γ/2) for u > 1 and
/// φ ≲ r^-(1+γ)/2 for u < -1. Requires 1/2 < γ < min(1, 2σ).
pub fn rp_jumpstart(gamma: Exp, sigma: Sigma) -> Result<(DecayBound, DecayBound)> {
    let upper = one().min_at(Exp::sigma() * 2, sigma);
    if !gamma.gt(&Exp::frac(1, 2), sigma) || !gamma.lt(&upper, sigma) {
        return Err(CalculusError::GammaOutOfRange(format!(
            "gamma={} must lie in (1/2, min(1, 2 sigma)) with sigma={}",
            gamma,
            sigma.value()
        )));
    }
    let half = Rational64::new(1, 2);
    let interior = DecayBound::new(one(), Exp::zero(), gamma.scale(half) - Exp::frac(1, 2), Region::Interior);
    let exterior = DecayBound::new((one() + gamma).scale(half), Exp::zero(), Exp::zero(), Region::Exterior);
    Ok((interior, exterior))
}
