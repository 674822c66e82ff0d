use decaykit::bound::{DecayBound, Region, Support};
use decaykit::calculus::{convert_cone_exterior, convert_cone_interior, convert_dt_source_extended, BoundaryPolicy, Source};
use decaykit::exponent::{Exp, Sigma};
use decaykit::fit::loglog;
use decaykit::oracle::{oracle_cone_integral, ConeSource};

const US: [f64; 5] = [16.0, 32.0, 64.0, 128.0, 256.0];

fn exp(x: f64) -> Exp {
    // Test inputs are multiples of 1/10.
    Exp::frac((x * 10.0).round() as i64, 10)
}

fn u_slope(src: &ConeSource, v: f64, dt: bool) -> f64 {
    let ys: Vec<f64> = US
        .iter()
        .map(|u| {
            let (t, r) = ((v + u) / 2.0, (v - u) / 2.0);
            if dt { src.dt_integral(t, r, 0.5).unwrap().abs() } else { src.integral(t, r).unwrap() }
        })
        .collect();
    loglog(&US, &ys).unwrap().slope
}

#[test]
fn bd1_slope_example() {
    let s = Sigma::new(0.3).unwrap();
    let bound = DecayBound::new(exp(2.5), exp(1.0), exp(0.0), Region::Interior);
    let e = convert_cone_interior(&bound, s, BoundaryPolicy::Strict).unwrap().e.value(s);
    assert_eq!(e, 0.5);
    let slope = u_slope(&ConeSource::new(2.5, 1.0, 0.0), 4096.0, false);
    assert!((slope + e).abs() < 0.15, "slope {slope}");
}

#[test]
fn bd2_slope_example() {
    let s = Sigma::new(0.3).unwrap();
    let bound = DecayBound::new(exp(2.6), exp(0.0), exp(0.0), Region::Exterior);
    let a = convert_cone_exterior(&bound, s, BoundaryPolicy::Strict).unwrap().a.value(s);
    let rs = [1024.0, 2048.0, 4096.0, 8192.0, 16384.0];
    let ys: Vec<f64> = rs.iter().map(|r| oracle_cone_integral(2.6, 0.0, 0.0, r - 2.0, *r).unwrap()).collect();
    // rψ ~ r^(1-a)
    let slope = loglog(&rs, &ys).unwrap().slope;
    assert!((slope - (1.0 - a)).abs() < 0.15, "slope {slope} vs {}", 1.0 - a);
}

/// Bd1der, including α ≥ 3 and the exterior with 2 < α+η ≤ 3. The ∂_v part
/// of ∂_t decays like v^-1/2, so v must be much larger than u.
#[test]
fn bd1der_slopes() {
    let s = Sigma::new(0.3).unwrap();
    let v = 1048576.0;
    for (alpha, eta, interior) in [(2.5, 0.0, true), (3.5, 0.0, true), (3.4, 2.0, true), (2.3, 0.0, false), (3.5, -0.3, false)] {
        let region = if interior { Region::Interior } else { Region::Exterior };
        let src = Source {
            bound: DecayBound::new(exp(alpha), Exp::zero(), exp(eta), region),
            support: Support::ConeSupported,
            dt_structured: true,
        };
        let e = convert_dt_source_extended(&src, s, BoundaryPolicy::Strict).unwrap().e.value(s);
        let mut cone = ConeSource::new(alpha, 0.0, eta);
        cone.cone_supported = true;
        let us: Vec<f64> = if interior { US.to_vec() } else { US.iter().map(|u| -u).collect() };
        let ys: Vec<f64> = us
            .iter()
            .map(|u| cone.dt_integral((v + u) / 2.0, (v - u) / 2.0, 0.5).unwrap().abs())
            .collect();
        let slope = loglog(&US, &ys).unwrap().slope;
        assert!((slope + e).abs() < 0.15, "alpha={alpha} eta={eta}: slope {slope} vs {}", -e);
    }
}

#[test]
fn refinement_check_rejects_bad_input() {
    assert!(oracle_cone_integral(2.5, 0.0, f64::NAN, 3.0, 1.0).is_err());
    assert!(oracle_cone_integral(2.5, 0.0, 0.0, -1.0, 1.0).is_err());
}
