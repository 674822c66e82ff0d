//! Nonlinearity descriptors and problem specifications.

use std::fmt;

use crate::exponent::{Exp, Sigma};

/// Direction of the outer derivative in a total-derivative term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Dt,
    Dr,
}

/// One monomial of the nonlinearity, described by its counts.
///
/// `derivs` (J) is the total number of derivatives over all factors and
/// `tangential` (𝒯) how many of them are tangential. Factors carrying two
/// derivatives are counted in `second_order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonlinearTerm {
    pub factors: u32,
    pub derivs: u32,
    pub tangential: u32,
    pub second_order: u32,
    /// The term is ∂_(i)(φ^{n+1})/(n+1) = φ^n ∂_(i)φ.
    pub total_derivative: bool,
    /// The outer derivative of a total-derivative term is ∂_t.
    pub dt_structured: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("term {0}: needs at least two factors")]
    TooFewFactors(String),
    #[error("term {0}: more tangential derivatives than derivatives")]
    TangentialExceedsDerivatives(String),
    #[error("term {0}: derivative counts do not fit the factors")]
    InconsistentCounts(String),
    #[error("term {0}: pure powers phi^3, phi^4, phi^5 are not admissible")]
    PurePower(String),
    #[error("term {0}: quadratic terms must satisfy the null condition (a tangential derivative)")]
    QuadraticWithoutNullStructure(String),
    #[error("term {0}: a phi^2 dphi term requires sigma > 1/4 (got {1})")]
    SigmaTooSmallForCubic(String, f64),
    #[error("sigma must be a positive finite number")]
    BadSigma,
}

impl NonlinearTerm {
    pub fn new(factors: u32, derivs: u32, tangential: u32) -> Self {
        NonlinearTerm {
            factors,
            derivs,
            tangential,
            second_order: 0,
            total_derivative: false,
            dt_structured: false,
        }
    }

    /// ∂̄φ·∂φ, the weak model nonlinearity used before the actual terms enter.
    pub fn model() -> Self {
        Self::new(2, 2, 1)
    }

    /// Quadratic null form.
    pub fn null_form() -> Self {
        Self::new(2, 2, 1)
    }

    /// φ²∂φ without any total-derivative structure.
    pub fn phi2_dphi() -> Self {
        Self::new(3, 1, 0)
    }

    /// φ^n ∂_(i)φ read as the total derivative ∂_(i)(φ^{n+1})/(n+1).
    pub fn total_derivative_power(n: u32, direction: Direction) -> Self {
        NonlinearTerm {
            factors: n + 1,
            derivs: 1,
            tangential: 0,
            second_order: 0,
            total_derivative: true,
            dt_structured: direction == Direction::Dt,
        }
    }

    /// Two underived factors and one ∂φ factor.
    pub fn is_phi2_dphi_shaped(&self) -> bool {
        self.factors == 3 && self.derivs == 1
    }

    fn first_order(&self) -> u32 {
        self.derivs.saturating_sub(2 * self.second_order)
    }

    pub fn validate(&self, sigma: Sigma) -> Result<(), ValidationError> {
        let name = self.to_string();
        if self.factors < 2 {
            return Err(ValidationError::TooFewFactors(name));
        }
        if self.tangential > self.derivs {
            return Err(ValidationError::TangentialExceedsDerivatives(name));
        }
        if 2 * self.second_order > self.derivs
            || self.second_order + self.first_order() > self.factors
        {
            return Err(ValidationError::InconsistentCounts(name));
        }
        if self.derivs == 0 && (3..=5).contains(&self.factors) {
            return Err(ValidationError::PurePower(name));
        }
        if self.factors == 2 && self.tangential == 0 {
            return Err(ValidationError::QuadraticWithoutNullStructure(name));
        }
        if self.is_phi2_dphi_shaped() && sigma.value() <= 0.25 {
            return Err(ValidationError::SigmaTooSmallForCubic(name, sigma.value()));
        }
        Ok(())
    }

    /// u-exponent this term alone allows: 𝒯+𝒩−2, or 𝒯+n = 𝒯+𝒩−1 with
    /// total-derivative structure.
    pub fn rate(&self) -> Exp {
        let base = (self.tangential + self.factors) as i64 - 2;
        if self.total_derivative {
            Exp::int(base + 1)
        } else {
            Exp::int(base)
        }
    }
}

impl fmt::Display for NonlinearTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[N={} J={} T={}{}{}]",
            self.factors,
            self.derivs,
            self.tangential,
            if self.second_order > 0 { format!(" second={}", self.second_order) } else { String::new() },
            match (self.total_derivative, self.dt_structured) {
                (true, true) => " total=dt",
                (true, false) => " total=dr",
                _ => "",
            }
        )
    }
}

/// Background decay σ together with the nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub sigma: Sigma,
    pub terms: Vec<NonlinearTerm>,
}

impl ProblemSpec {
    pub fn new(sigma: f64, terms: Vec<NonlinearTerm>) -> Result<Self, ValidationError> {
        let sigma = Sigma::new(sigma).ok_or(ValidationError::BadSigma)?;
        for t in &terms {
            t.validate(sigma)?;
        }
        Ok(ProblemSpec { sigma, terms })
    }

    /// 𝒯 of Def. 1.5: tangential derivatives present in every term.
    pub fn tangential(&self) -> Option<u32> {
        self.terms.iter().map(|t| t.tangential).min()
    }

    /// 𝒩: the lowest order among the terms.
    pub fn order(&self) -> Option<u32> {
        self.terms.iter().map(|t| t.factors).min()
    }

    /// Worst per-term rate, or `None` for the linear problem.
    pub fn nonlinear_rate(&self) -> Option<Exp> {
        self.terms
            .iter()
            .map(NonlinearTerm::rate)
            .reduce(|x, y| x.min_at(y, self.sigma))
    }

    /// κ of the data assumption: min(σ, rate − 1).
    pub fn kappa(&self) -> Exp {
        let s = Exp::sigma();
        match self.nonlinear_rate() {
            Some(r) => s.min_at(r - Exp::int(1), self.sigma),
            None => s,
        }
    }

    pub fn needs_jumpstart(&self) -> bool {
        self.terms.iter().any(NonlinearTerm::is_phi2_dphi_shaped)
    }
}
