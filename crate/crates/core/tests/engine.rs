use decaykit::bound::{DecayBound, Region};
use decaykit::exponent::Exp;
use decaykit::iterate::{iterate_exterior, iterate_interior, predicted_final_rate, IterationTrace};
use decaykit::problem::{Direction, NonlinearTerm, ProblemSpec};
use proptest::prelude::*;

const SIGMAS: [f64; 5] = [0.3, 0.49, 0.75, 2.0, 7.0];

fn grid_terms() -> Vec<(&'static str, NonlinearTerm)> {
    vec![
        ("(dphi)^3", NonlinearTerm::new(3, 3, 0)),
        ("dbar dphi^2", NonlinearTerm::new(3, 3, 1)),
        ("(dphi)^4", NonlinearTerm::new(4, 4, 0)),
        ("null form", NonlinearTerm::null_form()),
        ("phi^2 dphi", NonlinearTerm::phi2_dphi()),
        ("dbar^2 dphi", NonlinearTerm::new(3, 3, 2)),
    ]
}

fn ext(a: Exp, e: Exp) -> DecayBound {
    DecayBound::new(a, Exp::zero(), e, Region::Exterior)
}

fn int(e: Exp) -> DecayBound {
    DecayBound::new(Exp::zero(), Exp::int(1), e, Region::Interior)
}

fn chain(trace: &IterationTrace) -> Vec<(&'static str, DecayBound)> {
    trace.labelled()
}

#[test]
fn exterior_golden_chain() {
    let spec = ProblemSpec::new(0.3, vec![NonlinearTerm::new(4, 4, 0)]).unwrap();
    let (fin, trace) = iterate_exterior(&spec).unwrap();
    let s = Exp::sigma();
    let expected = vec![
        ("inbd", ext(Exp::int(1), Exp::frac(-1, 2))),
        ("1stbd", ext(Exp::frac(1, 2), Exp::zero())),
        ("2ndbd", ext(Exp::frac(1, 2) + s, Exp::zero())),
        ("3rdbd", ext(Exp::int(1), Exp::zero())),
        ("4thbd", ext(Exp::int(1), s)),
        ("yields", ext(Exp::int(1), Exp::int(1))),
        ("final", ext(Exp::int(1), Exp::int(1) + s)),
    ];
    assert_eq!(chain(&trace), expected, "\n{}", trace.to_text());
    assert_eq!(fin, ext(Exp::int(1), Exp::int(1) + s));
}

#[test]
fn interior_golden_chain() {
    let spec = ProblemSpec::new(0.3, vec![NonlinearTerm::new(4, 4, 0)]).unwrap();
    let (fin, trace) = iterate_interior(&spec).unwrap();
    let s = Exp::sigma();
    let expected = vec![
        ("inbd1", int(Exp::frac(-1, 2))),
        ("inbd2", int(s - Exp::frac(1, 2))),
        ("3rdbd'", int(Exp::zero())),
        ("to-beat", int(Exp::int(1))),
        ("btr", int(Exp::int(1) + s)),
        ("final", int(Exp::int(1) + s)),
    ];
    assert_eq!(chain(&trace), expected, "\n{}", trace.to_text());
    assert_eq!(fin, int(Exp::int(1) + s));
}

#[test]
fn golden_chain_with_model_term() {
    // The model term itself gives the same intermediate bounds.
    let spec = ProblemSpec::new(0.3, vec![NonlinearTerm::null_form()]).unwrap();
    let (_, trace) = iterate_exterior(&spec).unwrap();
    assert_eq!(trace.find("2ndbd").unwrap(), ext(Exp::affine(1, 2, 1), Exp::zero()));
    assert_eq!(trace.find("4thbd").unwrap(), ext(Exp::int(1), Exp::sigma()));
    let (_, trace) = iterate_interior(&spec).unwrap();
    assert_eq!(trace.find("inbd2").unwrap(), int(Exp::affine(-1, 2, 1)));
}

#[test]
fn grid_matches_closed_form() {
    for sigma in SIGMAS {
        for (name, term) in grid_terms() {
            let spec = ProblemSpec::new(sigma, vec![term]).unwrap();
            let expected = predicted_final_rate(&spec).e;
            let direct = (Exp::int(1) + Exp::sigma())
                .min_at(Exp::int((term.tangential + term.factors) as i64 - 2), spec.sigma);
            assert_eq!(expected, direct, "{name} sigma={sigma}");
            let (e, te) = iterate_exterior(&spec).unwrap_or_else(|err| panic!("{name} sigma={sigma}: {err}"));
            let (i, ti) = iterate_interior(&spec).unwrap_or_else(|err| panic!("{name} sigma={sigma}: {err}"));
            assert_eq!(e.e, expected, "exterior {name} sigma={sigma}\n{}", te.to_text());
            assert_eq!(i.e, expected, "interior {name} sigma={sigma}\n{}", ti.to_text());
            assert!(te.iterations() < 1000 && ti.iterations() < 1000);
        }
    }
}

#[test]
fn total_derivative_structure_gains_one() {
    for sigma in SIGMAS {
        for dir in [Direction::Dt, Direction::Dr] {
            let term = NonlinearTerm::total_derivative_power(2, dir);
            let spec = ProblemSpec::new(sigma, vec![term]).unwrap();
            let expected = (Exp::int(1) + Exp::sigma()).min_at(Exp::int(2), spec.sigma);
            assert_eq!(predicted_final_rate(&spec).e, expected);
            let (e, te) = iterate_exterior(&spec).unwrap();
            let (i, ti) = iterate_interior(&spec).unwrap();
            assert_eq!(e.e, expected, "sigma={sigma}\n{}", te.to_text());
            assert_eq!(i.e, expected, "sigma={sigma}\n{}", ti.to_text());
        }
    }
}

#[test]
fn worked_rates() {
    let rate = |sigma: f64, terms: Vec<NonlinearTerm>| {
        let spec = ProblemSpec::new(sigma, terms).unwrap();
        iterate_interior(&spec).unwrap().0.e.value(spec.sigma)
    };
    assert_eq!(rate(0.3, vec![NonlinearTerm::new(3, 3, 0)]), 1.0);
    assert_eq!(rate(0.75, vec![NonlinearTerm::new(4, 4, 0)]), 1.75);
    assert_eq!(rate(5.0, vec![NonlinearTerm::new(3, 3, 2)]), 3.0);
    assert_eq!(rate(1.0, vec![NonlinearTerm::null_form()]), 1.0);
    assert_eq!(rate(0.3, vec![NonlinearTerm::phi2_dphi()]), 1.0);
    assert_eq!(rate(0.5, vec![]), 1.5);
}

#[test]
fn power_nonlinearity_rate() {
    // φ^4 lies outside the admissible class, but the closed form still
    // applies with 𝒯=0, 𝒩=p+1: ⟨u⟩^-(1+min(σ, p-2)).
    let sigma = decaykit::exponent::Sigma::new(1.0).unwrap();
    let spec = ProblemSpec { sigma, terms: vec![NonlinearTerm::new(4, 0, 0)] };
    assert_eq!(predicted_final_rate(&spec).e.value(sigma), 2.0);
    assert_eq!(iterate_interior(&spec).unwrap().0.e, predicted_final_rate(&spec).e);
}

#[test]
fn worst_term_governs() {
    let spec = ProblemSpec::new(0.75, vec![NonlinearTerm::new(4, 4, 0), NonlinearTerm::new(3, 3, 0)]).unwrap();
    let (fin, _) = iterate_interior(&spec).unwrap();
    assert_eq!(fin.e, Exp::int(1));
}

#[test]
fn trace_is_replayable_text() {
    let spec = ProblemSpec::new(0.3, vec![NonlinearTerm::new(4, 4, 0)]).unwrap();
    let (_, trace) = iterate_interior(&spec).unwrap();
    let text = trace.to_text();
    assert!(text.lines().all(|l| l.starts_with("step=") && l.contains(" out=(")));
    assert!(text.contains("label=btr"));
}

fn combined_chain(trace: &IterationTrace) -> Vec<DecayBound> {
    trace
        .steps
        .iter()
        .filter(|s| s.rule == "better")
        .map(|s| s.output)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn combined_bounds_are_monotone(
        sigma in 0.26f64..6.0,
        n in 2u32..6,
        extra_t in 0u32..3,
        region_interior in any::<bool>(),
    ) {
        let t = if n == 2 { 1 } else { extra_t.min(n) };
        let term = NonlinearTerm::new(n, n, t);
        let spec = ProblemSpec::new(sigma, vec![term]).unwrap();
        let (fin, trace) = if region_interior { iterate_interior(&spec) } else { iterate_exterior(&spec) }.unwrap();
        let steps = combined_chain(&trace);
        for w in steps.windows(2) {
            prop_assert!(w[1].dominates(&w[0], spec.sigma).unwrap());
        }
        prop_assert_eq!(fin.e, predicted_final_rate(&spec).e);
    }
}
