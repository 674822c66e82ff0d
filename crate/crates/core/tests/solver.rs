use decaykit::background::BackgroundModel;
use decaykit::problem::Direction;
use decaykit::solver::{
    apply_vector_fields, residual, run, ConcreteTerm, Curve, DataMode, Factor, FieldHistory, GridSpec, InitialData,
    Scenario, SolverError, SolverState,
};

fn scenario(dr: f64, t_max: f64, terms: Vec<ConcreteTerm>, eps: f64) -> Scenario {
    Scenario::new(
        BackgroundModel::minkowski(),
        terms,
        InitialData::bump(eps, 6.0, 4.0, DataMode::TimeSymmetric),
        GridSpec::new(dr, t_max),
    )
}

fn dtphi3() -> ConcreteTerm {
    ConcreteTerm::monomial(1.0, vec![(Factor::DtPhi, 3)])
}

/// sup |φ| over stored points with t − r > cut and r ≥ r_min.
fn behind_front(h: &FieldHistory, cut: f64, r_min: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..h.frames.times.len() {
        let t = h.frames.times[k];
        for (i, phi) in h.frames.phi(k).iter().enumerate() {
            let r = h.frames.r[i];
            if r >= r_min && t - r > cut {
                worst = worst.max(phi.abs());
            }
        }
    }
    worst
}

#[test]
fn one_step_is_even_in_time() {
    let sc = scenario(1.0 / 16.0, 4.0, vec![], 1e-2);
    let mut fwd = SolverState::new(&sc).unwrap();
    let mut bwd = SolverState::new(&sc).unwrap();
    bwd.dt = -bwd.dt;
    fwd.step().unwrap();
    bwd.step().unwrap();
    assert_eq!(fwd.psi(), bwd.psi());
    let (vf, vb) = (fwd.velocity(), bwd.velocity());
    for (a, b) in vf.iter().zip(&vb).take(vf.len() - 1) {
        assert_eq!(*a, -*b);
    }
}

#[test]
fn strong_huygens() {
    let mut sc = scenario(1.0 / 16.0, 12.0, vec![], 1e-2);
    sc.data = InitialData::bump(1e-2, 2.0, 1.0, DataMode::TimeSymmetric);
    sc.grid.frame_dt = 0.25;
    sc.grid.frame_dr = 1.0 / 16.0;
    let h = run(&sc).unwrap();
    let probe = h.probes.iter().find(|p| p.r == 2.0).unwrap();
    let k = probe.times.iter().position(|&t| (t - 10.0).abs() < 1e-9).unwrap();
    assert!(probe.phi[k].abs() < 1e-6, "{}", probe.phi[k]);
}

#[test]
fn strong_huygens_five_cells_behind_the_front() {
    let mut sc = scenario(1.0 / 32.0, 32.0, vec![], 1e-2);
    sc.grid.frame_dt = 0.125;
    sc.grid.frame_dr = 1.0 / 32.0;
    let h = run(&sc).unwrap();
    let tail = behind_front(&h, 10.0 + 5.0 / 32.0, 0.0);
    assert!(tail < 1e-6, "{tail}");
}

#[test]
fn flat_edged_bump_keeps_the_scheme_asymptotic() {
    // The textbook bump (β = 1) leaves a dispersive tail far above the
    // Gaussian-like default at the same resolution.
    let tail = |beta: f64| {
        let mut sc = scenario(1.0 / 16.0, 24.0, vec![], 1e-2);
        sc.data = sc.data.with_steepness(beta);
        sc.grid.frame_dr = 1.0 / 16.0;
        behind_front(&run(&sc).unwrap(), 10.0 + 5.0 / 16.0, 0.0)
    };
    assert!(tail(1.0) > 100.0 * tail(8.0));
}

#[test]
fn second_order_convergence_of_nonlinear_run() {
    let finals: Vec<Vec<f64>> = [8.0, 16.0, 32.0]
        .iter()
        .map(|n| {
            let mut sc = scenario(1.0 / n, 50.0, vec![dtphi3()], 0.03);
            sc.grid.frame_dt = 50.0;
            sc.grid.frame_dr = 1.0 / 8.0;
            let h = run(&sc).unwrap();
            h.frames.phi(h.frames.times.len() - 1)
        })
        .collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let ratio = diff(&finals[0], &finals[1]) / diff(&finals[1], &finals[2]);
    assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn free_energy_is_conserved() {
    let sc = scenario(1.0 / 32.0, 128.0, vec![], 1e-2);
    let h = run(&sc).unwrap();
    let e0 = h.energy[0];
    let drift = h.energy.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift < 1e-4, "{drift}");
}

#[test]
fn zero_data_stays_zero() {
    let h = run(&scenario(0.25, 16.0, vec![dtphi3()], 0.0)).unwrap();
    assert!(h.frames.psi.iter().flatten().all(|&x| x == 0.0));
    assert!(h.frames.psi_t.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn origin_stays_pinned() {
    let h = run(&scenario(0.125, 16.0, vec![dtphi3()], 0.03)).unwrap();
    assert!(h.frames.psi.iter().all(|row| row[0] == 0.0));
    assert!(h.checkpoints.iter().flat_map(|c| &c.psi).all(|row| row[0] == 0.0));
}

#[test]
fn focusing_large_data_blows_up() {
    let sc = scenario(0.125, 32.0, vec![ConcreteTerm::monomial(1.0, vec![(Factor::Phi, 7)])], 3.0);
    match run(&sc) {
        Err(SolverError::Blowup { t, value, .. }) => assert!(t > 0.0 && t < 32.0 && value > 1e3),
        other => panic!("expected blowup, got {other:?}"),
    }
}

#[test]
fn checkpoints_at_dyadic_times() {
    let sc = scenario(0.125, 16.0, vec![], 1e-2);
    let h = run(&sc).unwrap();
    let ts: Vec<f64> = h.checkpoints.iter().map(|c| c.t).collect();
    assert_eq!(ts, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    let text = h.checkpoint_text(2).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# decaykit checkpoint v1"));
    assert_eq!(lines.next().unwrap(), format!("# scenario_sha256={}", sc.hash()));
    assert!(lines.next().unwrap().starts_with("# t=4 "));
    assert_eq!(lines.next(), Some("r,psi,psi_t"));
    assert_eq!(lines.count(), h.checkpoints[2].psi[0].len());
}

#[test]
fn csv_export_along_curves() {
    let h = run(&scenario(0.125, 8.0, vec![], 1e-2)).unwrap();
    for (curve, rows) in [
        (Curve::FixedR(2.0), h.frames.times.len()),
        (Curve::FixedT(4.0), h.frames.r.len()),
        (Curve::FixedU(0.0), h.frames.times.len()),
    ] {
        let mut buf = Vec::new();
        h.export_curve(curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,r,phi\n"));
        assert_eq!(text.lines().count(), rows + 1, "{curve:?}");
    }
}

#[test]
fn residual_is_second_order() {
    let res: Vec<f64> = [8.0, 16.0]
        .iter()
        .map(|n| {
            let sc = scenario(1.0 / n, 8.0, vec![dtphi3()], 0.03);
            let h = run(&sc).unwrap();
            let r = residual(&h, &sc).unwrap();
            r.iter().find(|s| s.t == 4.0).unwrap().l2
        })
        .collect();
    let ratio = res[0] / res[1];
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn residual_of_exact_outgoing_wave() {
    // ψ = f(t − r) with f supported in (-6, -2), so f(t + r) never enters.
    let f = |s: f64| {
        let x = (s + 4.0) / 2.0;
        if x.abs() < 1.0 {
            (1.0 - 1.0 / (1.0 - x * x)).exp()
        } else {
            0.0
        }
    };
    let df = |s: f64| (f(s + 1e-6) - f(s - 1e-6)) / 2e-6;
    let exact = |t: f64, r: f64| if r > 0.0 { (f(t - r) / r, df(t - r) / r) } else { (0.0, 0.0) };
    let times: Vec<f64> = (0..=8).map(|k| k as f64).collect();
    // Only the fourth-order stencils of the check itself remain.
    let rep: Vec<Vec<f64>> = [32.0, 64.0]
        .iter()
        .map(|n| {
            let h = FieldHistory::from_fn(exact, &times, 1.0 / n, 20.0, 1e-3);
            let sc = scenario(1.0 / n, 8.0, vec![], 0.0);
            residual(&h, &sc).unwrap().iter().map(|s| s.relative).collect()
        })
        .collect();
    assert_eq!(rep[0].len(), 4);
    for (a, b) in rep[0].iter().zip(&rep[1]) {
        assert!(*b < 1e-3, "{b}");
        assert!(a / b > 10.0, "{a} {b}");
    }
}

#[test]
fn residual_refuses_corrupted_history() {
    let sc = scenario(0.125, 4.0, vec![], 1e-2);
    let mut h = run(&sc).unwrap();
    h.checkpoints[1].psi[0][17] = f64::NAN;
    assert!(matches!(residual(&h, &sc), Err(SolverError::NonFinite { .. })));
}

#[test]
fn scaling_field_annihilates_self_similar_functions() {
    // even in r, as every smooth radial function is
    let g = |x: f64| (-8.0 * x * x).exp() * (1.0 + 4.0 * x * x);
    let times: Vec<f64> = (0..=40).map(|k| 10.0 + k as f64 * 0.25).collect();
    let h = FieldHistory::from_fn(|t, r| (g(r / t), 0.0), &times, 1.0 / 32.0, 12.0, 0.25);
    let d = apply_vector_fields(&h, 1).unwrap();
    let s = d.get("S").unwrap();
    let dt = d.get("t").unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 2..times.len() - 2 {
        for i in 0..d.r.len() - 2 {
            worst = worst.max(s[k][i].abs());
            scale = scale.max((times[k] * dt[k][i]).abs());
        }
    }
    assert!(worst < 1e-5 * scale, "{worst} vs {scale}");
}

#[test]
fn time_derivative_matches_stored_velocity() {
    let mut sc = scenario(1.0 / 64.0, 6.0, vec![], 1e-2);
    sc.grid.frame_dt = 1.0 / 128.0;
    sc.grid.frame_dr = 1.0 / 8.0;
    let h = run(&sc).unwrap();
    let d = apply_vector_fields(&h, 1).unwrap();
    let dt = d.get("t").unwrap();
    let mut worst: f64 = 0.0;
    for (k, row) in dt.iter().enumerate().take(h.frames.times.len() - 2).skip(2) {
        let stored = h.frames.phi_t(k);
        for i in 1..stored.len() - 2 {
            worst = worst.max((row[i] - stored[i]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn vector_fields_need_enough_frames() {
    let mut sc = scenario(0.25, 2.0, vec![], 1e-2);
    sc.grid.frame_dt = 1.0;
    let h = run(&sc).unwrap();
    assert_eq!(h.frames.times.len(), 3);
    assert!(matches!(apply_vector_fields(&h, 1), Err(SolverError::OrderTooHigh { .. })));
    assert_eq!(apply_vector_fields(&h, 0).unwrap().words, vec![String::new()]);
}

#[test]
fn second_order_words_are_named_outermost_first() {
    let times: Vec<f64> = (0..=12).map(|k| 1.0 + k as f64 * 0.5).collect();
    let h = FieldHistory::from_fn(|t, r| (t * t * r * r, 2.0 * t * r * r), &times, 0.25, 4.0, 0.5);
    let d = apply_vector_fields(&h, 2).unwrap();
    assert_eq!(d.words.len(), 1 + 3 + 9);
    // ∂_t ∂_r (t²r²) = 4tr, exact for the quartic stencils away from the edges
    let f = d.get("tr").unwrap();
    let (k, i) = (6, 6);
    assert!((f[k][i] - 4.0 * times[k] * d.r[i]).abs() < 1e-9);
    // S(t²r²) = 4t²r²
    let s = d.get("S").unwrap();
    assert!((s[k][i] - 4.0 * (times[k] * d.r[i]).powi(2)).abs() < 1e-9);
}

#[test]
fn total_derivative_bookkeeping() {
    // □φ = ∂_t(φ³)/3: the bulk integral of r²φ²∂_tφ equals the change of
    // ∫ r²φ³/3 between the end slices.
    let mut sc = scenario(1.0 / 32.0, 6.0, vec![ConcreteTerm::total(1.0 / 3.0, Direction::Dt, 3)], 0.1);
    sc.grid.frame_dt = 1.0 / 64.0;
    sc.grid.frame_dr = 1.0 / 32.0;
    let h = run(&sc).unwrap();
    let fr = &h.frames;
    let slice = |k: usize, g: &dyn Fn(f64, f64) -> f64| -> f64 {
        let phi = fr.phi(k);
        let phi_t = fr.phi_t(k);
        fr.r.iter().enumerate().map(|(i, r)| r * r * g(phi[i], phi_t[i])).sum::<f64>() * fr.dr
    };
    let bulk_rows: Vec<f64> = (0..fr.times.len()).map(|k| slice(k, &|p, pt| p * p * pt)).collect();
    let bulk: f64 = bulk_rows.windows(2).map(|w| 0.5 * (w[0] + w[1]) * fr.dt).sum();
    let last = fr.times.len() - 1;
    let flux = (slice(last, &|p, _| p.powi(3)) - slice(0, &|p, _| p.powi(3))) / 3.0;
    let scale = slice(0, &|p, _| p.powi(3).abs()) / 3.0;
    assert!(flux.abs() > 1e-3 * scale, "identity would be vacuous");
    assert!((bulk - flux).abs() < 1e-4 * scale, "bulk {bulk} flux {flux}");
}
