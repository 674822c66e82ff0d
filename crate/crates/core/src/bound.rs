//! Decay bounds `|f| ≲ ⟨r⟩^-a ⟨v⟩^-b ⟨u⟩^-e` tagged with a spacetime region.
//!
//! Comparison works through "ray keys": in logarithmic coordinates a region is
//! a union of simplicial cones, and a monomial bound is linear there, so it is
//! pinned down by its exponent along the extreme rays.
//!
//! * interior (u > 1): axis r ~ 1 (key b+e), cone u ~ 1 (key a+b) and the
//!   diagonal r ~ u ~ t (key a+b+e);
//! * exterior (u < -1): r ~ v everywhere, so the rays are the cone u ~ 1
//!   (key a+b) and the initial slice t ~ 0 where u ~ r (key a+b+e);
//! * global uses the interior rays, which contain the exterior ones.
//!
//! One bound dominates another when every key is at least as large. The
//! weaker of two bounds ("join") takes key-wise minima, which is again a
//! monomial and is the sharpest monomial above both.

use std::fmt;

use crate::exponent::{Exp, Sigma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// u = t - r < -1.
    Exterior,
    /// u = t - r > 1.
    Interior,
    Global,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Exterior => "ext",
            Region::Interior => "int",
            Region::Global => "glob",
        }
    }
}

/// Where a source term lives, which decides which ray keys it constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Full,
    /// Vanishes near the light cone (|t - r| ≳ t).
    OffCone,
    /// Supported in 1/2 ≤ r/t ≤ 3/2.
    ConeSupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecayBound {
    pub a: Exp,
    pub b: Exp,
    pub e: Exp,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("region mismatch: {0:?} vs {1:?}")]
pub struct RegionMismatch(pub Region, pub Region);

impl DecayBound {
    pub fn new(a: Exp, b: Exp, e: Exp, region: Region) -> Self {
        DecayBound { a, b, e, region }
    }

    /// Integer exponents, handy in tests and fixed anchors.
    pub fn ints(a: i64, b: i64, e: i64, region: Region) -> Self {
        Self::new(a.into(), b.into(), e.into(), region)
    }

    pub fn zero(region: Region) -> Self {
        Self::ints(0, 0, 0, region)
    }

    /// Multiply by another monomial (exponents add); keeps this region.
    pub fn times(&self, a: Exp, b: Exp, e: Exp) -> Self {
        Self::new(self.a + a, self.b + b, self.e + e, self.region)
    }

    pub fn product(&self, other: &Self) -> Self {
        self.times(other.a, other.b, other.e)
    }

    /// Normal form. In the exterior r ~ v, so ⟨v⟩ weight is folded into the
    /// ⟨r⟩ weight. Interior and global bounds are kept as written.
    pub fn canonical(&self) -> Self {
        match self.region {
            Region::Exterior => Self::new(self.a + self.b, Exp::zero(), self.e, self.region),
            _ => *self,
        }
    }

    /// Exterior weakening `⟨u⟩^k ≤ ⟨r⟩^k`: a negative u-exponent is moved
    /// into the r-exponent. Other regions and e ≥ 0 are returned unchanged.
    pub fn weaken_u_into_r(&self, sigma: Sigma) -> Self {
        if self.region == Region::Exterior && self.e.lt(&Exp::zero(), sigma) {
            Self::new(self.a + self.b + self.e, Exp::zero(), Exp::zero(), self.region)
        } else {
            *self
        }
    }

    /// Off-cone normal form: on the support of an off-cone term |u| is
    /// comparable to v (interior) or to r (exterior), so weights are merged.
    pub fn off_cone_fold(&self) -> Self {
        match self.region {
            Region::Exterior => Self::new(self.a + self.b + self.e, Exp::zero(), Exp::zero(), self.region),
            _ => Self::new(self.a, self.b + self.e, Exp::zero(), self.region),
        }
    }

    /// Exponents along the extreme rays of the region.
    pub fn keys(&self) -> Vec<Exp> {
        match self.region {
            Region::Exterior => vec![self.a + self.b, self.a + self.b + self.e],
            _ => vec![self.b + self.e, self.a + self.b, self.a + self.b + self.e],
        }
    }

    /// Index of the cone ray u ~ 1 in `keys`.
    fn cone_key(region: Region) -> usize {
        match region {
            Region::Exterior => 0,
            _ => 1,
        }
    }

    fn from_keys(keys: &[Exp], region: Region) -> Self {
        match region {
            Region::Exterior => Self::new(keys[0], Exp::zero(), keys[1] - keys[0], region),
            _ => {
                let e = keys[2] - keys[1];
                let b = keys[0] - e;
                let a = keys[1] - b;
                Self::new(a, b, e, region)
            }
        }
    }

    /// True when `self` is at least as strong as `other` everywhere in the region.
    pub fn dominates(&self, other: &Self, sigma: Sigma) -> Result<bool, RegionMismatch> {
        check_region(self, other)?;
        Ok(self
            .keys()
            .iter()
            .zip(other.keys())
            .all(|(x, y)| x.ge(&y, sigma)))
    }

    /// The weaker of two bounds, i.e. the sharpest monomial implied by both.
    pub fn join(&self, other: &Self, sigma: Sigma) -> Result<Self, RegionMismatch> {
        if self.dominates(other, sigma)? {
            return Ok(*other);
        }
        if other.dominates(self, sigma)? {
            return Ok(*self);
        }
        let keys: Vec<Exp> = self
            .keys()
            .into_iter()
            .zip(other.keys())
            .map(|(x, y)| x.min_at(y, sigma))
            .collect();
        Ok(Self::from_keys(&keys, self.region))
    }

    /// Join of a non-empty list.
    pub fn join_all(bounds: &[Self], sigma: Sigma) -> Result<Self, RegionMismatch> {
        let (first, rest) = bounds.split_first().expect("join_all needs at least one bound");
        rest.iter().try_fold(*first, |acc, b| acc.join(b, sigma))
    }

    /// The stronger of two bounds when they are comparable; otherwise `self`.
    pub fn better(&self, other: &Self, sigma: Sigma) -> Result<Self, RegionMismatch> {
        if other.dominates(self, sigma)? && !self.dominates(other, sigma)? {
            Ok(*other)
        } else {
            Ok(*self)
        }
    }

    /// Join of a full-support term with an off-cone term: the off-cone term
    /// does not constrain the cone ray.
    pub fn join_off_cone(main: &Self, off: &Self, sigma: Sigma) -> Result<Self, RegionMismatch> {
        check_region(main, off)?;
        let cone = Self::cone_key(main.region);
        let keys: Vec<Exp> = main
            .keys()
            .into_iter()
            .zip(off.keys())
            .enumerate()
            .map(|(i, (x, y))| if i == cone { x } else { x.min_at(y, sigma) })
            .collect();
        let joined = Self::from_keys(&keys, main.region);
        if joined.keys() == main.keys() {
            Ok(*main)
        } else {
            Ok(joined)
        }
    }

    /// Pointwise exponent of the bound at (t, r): `-log f / log 2` style
    /// evaluation used by tests and the rate comparison.
    pub fn log_weight(&self, t: f64, r: f64, sigma: Sigma) -> f64 {
        let jp = |x: f64| (1.0 + x * x).sqrt().ln();
        self.a.value(sigma) * jp(r) + self.b.value(sigma) * jp(t + r) + self.e.value(sigma) * jp(t - r)
    }

    pub fn same_exponents(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && self.e == other.e
    }
}

fn check_region(x: &DecayBound, y: &DecayBound) -> Result<(), RegionMismatch> {
    if x.region == y.region {
        Ok(())
    } else {
        Err(RegionMismatch(x.region, y.region))
    }
}

impl fmt::Display for DecayBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{};{})", self.a, self.b, self.e, self.region.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg() -> Sigma {
        Sigma::new(0.3).unwrap()
    }

    #[test]
    fn exterior_canonical_folds_v_into_r() {
        let b = DecayBound::ints(2, -1, 1, Region::Exterior).canonical();
        assert_eq!(b, DecayBound::ints(1, 0, 1, Region::Exterior));
    }

    #[test]
    fn join_of_comparable_returns_weaker() {
        let strong = DecayBound::ints(1, 0, 2, Region::Exterior);
        let weak = DecayBound::ints(1, 0, 1, Region::Exterior);
        assert_eq!(strong.join(&weak, sg()).unwrap(), weak);
        assert_eq!(weak.join(&strong, sg()).unwrap(), weak);
    }

    #[test]
    fn interior_join_realizes_keywise_minimum() {
        let x = DecayBound::ints(2, 0, 0, Region::Interior);
        let y = DecayBound::ints(0, 1, 1, Region::Interior);
        let j = x.join(&y, sg()).unwrap();
        // keys x: (0,2,2), y: (2,1,2) -> (0,1,2)
        assert_eq!(j.keys(), vec![Exp::int(0), Exp::int(1), Exp::int(2)]);
        assert!(x.dominates(&j, sg()).unwrap() && y.dominates(&j, sg()).unwrap());
    }

    #[test]
    fn off_cone_term_ignores_cone_ray() {
        let main = DecayBound::new(Exp::affine(2, 1, 1), Exp::int(1), Exp::frac(-1, 2), Region::Interior);
        let off = DecayBound::new(Exp::affine(2, 1, 1), Exp::int(0), Exp::frac(1, 2), Region::Interior).off_cone_fold();
        assert_eq!(DecayBound::join_off_cone(&main, &off, sg()).unwrap(), main);
    }

    #[test]
    fn mismatched_regions_are_rejected() {
        let x = DecayBound::zero(Region::Interior);
        let y = DecayBound::zero(Region::Exterior);
        assert!(x.join(&y, sg()).is_err());
    }
}
