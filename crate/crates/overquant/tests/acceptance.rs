//! Acceptance gate: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line with the measured quantities. Run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use overquant::alphabet::{
    activation_entropy, alphabet_entropy, average_multiplicity, build_alphabet,
    distinct_direction_count, enumerate_patterns, AlphabetEntry,
};
use overquant::design::{simulate_cascade, DropoutSchedule, GainDesign, ScheduleInterval};
use overquant::dqn::{dqn_select, DqnHyper, QApproximator};
use overquant::emulation::{
    brute_force_select, convergence_compare, hebb_learn, hebb_select, nonnegative_scores,
    partition_circle, pattern_candidates, used_pattern_census, CellRegion, ConvergenceSpec,
    EmulationConfig,
};
use overquant::linalg::{
    all_n_minors_nonzero, nullspace_dimension, rank_of, solve_left, solve_right, IndexSet, Side,
};
use overquant::table1;

const TAU: f64 = std::f64::consts::TAU;

fn verdict(id: usize, pass: bool, detail: &str) -> bool {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id}: {word} — {detail}");
    pass
}

fn example_cfg() -> EmulationConfig {
    EmulationConfig::new(table1::example_target(), table1::example_b(), 0.1, 1.0).unwrap()
}

fn example_alphabet() -> Vec<AlphabetEntry> {
    build_alphabet(&table1::example_b(), enumerate_patterns(4, false).unwrap()).unwrap()
}

fn circle_point(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.cos(), theta.sin()])
}

/// Angular distance on the circle.
fn wrap_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[test]
fn criterion_1_table_reproduction() {
    let started = Instant::now();
    let cfg = example_cfg();
    let alphabet = example_alphabet();
    let cells = partition_circle(&cfg, &alphabet, 4096).unwrap();
    let golden = table1::golden_cells();

    let mut boundary_ok = cells.len() == golden.len();
    let mut alpha_ok = true;
    let mut p_ok = true;
    let mut worst_boundary = 0.0_f64;
    let mut bad_p_cells = Vec::new();

    for (gi, g) in golden.iter().enumerate() {
        // match the learned cell by its lower boundary angle
        let cell = cells
            .iter()
            .min_by(|a, b| {
                let la = match a.region {
                    CellRegion::Arc { lo, .. } => wrap_dist(lo, g.theta_lo),
                    _ => f64::INFINITY,
                };
                let lb = match b.region {
                    CellRegion::Arc { lo, .. } => wrap_dist(lo, g.theta_lo),
                    _ => f64::INFINITY,
                };
                la.partial_cmp(&lb).unwrap()
            })
            .unwrap();
        let CellRegion::Arc { lo, .. } = cell.region else { unreachable!() };
        let err = wrap_dist(lo, g.theta_lo);
        worst_boundary = worst_boundary.max(err);
        if err > 1e-3 {
            boundary_ok = false;
        }
        let dir_match = (cell.direction[0] - g.direction[0]).abs() < 1e-9
            && (cell.direction[1] - g.direction[1]).abs() < 1e-9;
        if !dir_match || alphabet[cell.entry_index].multiplicity() != g.alpha {
            alpha_ok = false;
        }
        if (cell.measure - g.p).abs() > 1e-3 {
            p_ok = false;
            bad_p_cells.push(format!(
                "cell {} measured {:.6} vs published {}",
                gi + 1,
                cell.measure,
                g.p
            ));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let time_ok = elapsed < 10.0;
    let pass = boundary_ok && alpha_ok && p_ok && time_ok;
    let detail = format!(
        "boundaries {} (worst {:.2e} rad), multiplicities {}, measures {}{}{}, {:.2}s",
        if boundary_ok { "ok" } else { "off" },
        worst_boundary,
        if alpha_ok { "ok" } else { "off" },
        if p_ok { "ok" } else { "off: " },
        bad_p_cells.join("; "),
        if time_ok { "" } else { ", over time budget" },
        elapsed
    );
    assert!(verdict(1, pass, &detail), "{detail}");
}

#[test]
fn criterion_2_entropies() {
    let cfg = example_cfg();
    let alphabet = example_alphabet();
    let cells = partition_circle(&cfg, &alphabet, 4096).unwrap();
    let p: Vec<f64> = cells.iter().map(|c| c.measure).collect();
    let a: Vec<usize> = cells.iter().map(|c| alphabet[c.entry_index].multiplicity()).collect();
    let h_alpha = alphabet_entropy(&p).unwrap();
    let h_act = activation_entropy(&p, &a).unwrap();
    let pass = (h_alpha - 3.052).abs() <= 5e-3 && (h_act - 4.746).abs() <= 5e-3;
    let detail =
        format!("alphabet entropy {h_alpha:.4} (want 3.052±0.005), activation {h_act:.4} (want 4.746±0.005)");
    assert!(verdict(2, pass, &detail), "{detail}");
}

#[test]
fn criterion_3_combinatorics() {
    let b = table1::example_b();
    let ternary = build_alphabet(&b, enumerate_patterns(4, false).unwrap()).unwrap();
    let binary = build_alphabet(&b, enumerate_patterns(4, true).unwrap()).unwrap();
    let binary_nonzero = binary.iter().filter(|e| !e.is_zero).count();
    let powers_ok = (1..=4).all(|n| distinct_direction_count(n).unwrap() == 5usize.pow(n as u32));

    let cfg = example_cfg();
    let cells = partition_circle(&cfg, &ternary, 4096).unwrap();
    let census = used_pattern_census(&cells, &ternary);

    let pass = ternary.len() == 25
        && ternary.iter().map(|e| e.multiplicity()).sum::<usize>() == 81
        && binary_nonzero == 8
        && powers_ok
        && census.used_patterns == 42
        && census.never_used == 30
        && census.zero_mapped == 9;
    let detail = format!(
        "81 patterns → {} vectors, binary nonzero {}, 5^n law {}, census {}/{}/{}",
        ternary.len(),
        binary_nonzero,
        if powers_ok { "ok" } else { "violated" },
        census.used_patterns,
        census.never_used,
        census.zero_mapped
    );
    assert!(verdict(3, pass, &detail), "{detail}");
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn criterion_4_resilient_design() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = f64::NEG_INFINITY;
    let mut all_exhaustive = true;
    for _ in 0..100 {
        // sample until both modulation matrices pass the all-minors check
        // with margin, so the lattice Gram matrices stay well conditioned
        let (a, b, c) = loop {
            let a = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 2, 4);
            let c = random_matrix(&mut rng, 4, 2);
            let mb = all_n_minors_nonzero(&b, 0.05).unwrap();
            let mc = all_n_minors_nonzero(&c.transpose(), 0.05).unwrap();
            if mb.all_nonzero && mc.all_nonzero {
                break (a, b, c);
            }
        };
        let i1 = IndexSet::new(4, vec![1, 2]).unwrap();
        let i2 = IndexSet::new(4, vec![1, 2]).unwrap();
        let design = GainDesign::new(a, b, c, i1, i2, 1.0, 1.0).unwrap();
        let report = design.verify_resilience(0).unwrap();
        all_exhaustive &= report.exhaustive;
        worst = worst.max(report.worst_abscissa);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst < -1e-6 && all_exhaustive && elapsed < 30.0;
    let detail = format!(
        "100 systems, worst abscissa {worst:.3e} (< -1e-6), exhaustive {all_exhaustive}, {elapsed:.2}s"
    );
    assert!(verdict(4, pass, &detail), "{detail}");
}

fn fixture_design() -> GainDesign {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]);
    let b = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -1.0, 0.3, 0.2, 1.0, 0.4, -1.0]);
    let c = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
    let i1 = IndexSet::new(4, vec![1, 2]).unwrap();
    let i2 = IndexSet::new(4, vec![1, 2]).unwrap();
    GainDesign::new(a, b, c, i1, i2, 1.0, 1.0).unwrap()
}

fn four_phase_schedule() -> DropoutSchedule {
    let l = |members: &[usize]| IndexSet::new(4, members.to_vec()).unwrap();
    DropoutSchedule {
        intervals: vec![
            ScheduleInterval { t_start: 0.0, t_end: 5.0, l1: l(&[1, 2]), l2: l(&[1, 2]) },
            ScheduleInterval { t_start: 5.0, t_end: 10.0, l1: l(&[1, 2, 3]), l2: l(&[1, 2, 4]) },
            ScheduleInterval { t_start: 10.0, t_end: 15.0, l1: l(&[1, 2, 4]), l2: l(&[1, 2, 3]) },
            ScheduleInterval {
                t_start: 15.0,
                t_end: 20.0,
                l1: l(&[1, 2, 3, 4]),
                l2: l(&[1, 2, 3, 4]),
            },
        ],
    }
}

#[test]
fn criterion_5_observer_decay() {
    let design = fixture_design();
    let schedule = four_phase_schedule();
    let e0 = DVector::from_vec(vec![1.0, -0.5]);

    let run = |x0: DVector<f64>| {
        let z0 = &x0 - &e0;
        simulate_cascade(&design, &schedule, &x0, &z0, 0.01, 20.0).unwrap()
    };
    let t1 = run(DVector::from_vec(vec![1.0, 2.0]));
    let t2 = run(DVector::from_vec(vec![-7.0, 3.5]));

    let n1 = t1.error_norms();
    let decay = n1.last().unwrap() / n1.first().unwrap();
    let max_dev = t1
        .errors
        .iter()
        .zip(&t2.errors)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0_f64, f64::max);

    let pass = decay < 1e-6 && max_dev <= 1e-9;
    let detail = format!(
        "‖e(20)‖/‖e(0)‖ = {decay:.3e} (< 1e-6), error deviation across x0 = {max_dev:.3e} (≤ 1e-9)"
    );
    assert!(verdict(5, pass, &detail), "{detail}");
}

#[test]
fn criterion_6_learner_oracle_equivalence() {
    let cfg = example_cfg();
    let alphabet = example_alphabet();
    let spec = ConvergenceSpec::default();

    let hebb_start = Instant::now();
    let mut hebb_mismatch = 0usize;
    for k in 0..360 {
        let x0 = circle_point(k as f64 * TAU / 360.0);
        let oracle = brute_force_select(&cfg, &x0, &alphabet).unwrap();
        let (hebb, _) = hebb_select(&cfg, &x0, &alphabet, 0.0, 2000, &spec).unwrap();
        if hebb.winners != oracle.winners {
            hebb_mismatch += 1;
        }
    }
    let hebb_time = hebb_start.elapsed().as_secs_f64();

    let dqn_start = Instant::now();
    let mut first_seed_hits = 0usize;
    let mut fallback_hits = 0usize;
    for k in 0..360 {
        let x0 = circle_point(k as f64 * TAU / 360.0);
        let oracle = brute_force_select(&cfg, &x0, &alphabet).unwrap();
        let mut hit = false;
        for (attempt, seed) in [k as u64, 10_000 + k as u64, 20_000 + k as u64]
            .into_iter()
            .enumerate()
        {
            let hyper = DqnHyper { seed, ..Default::default() };
            let outcome = dqn_select(&cfg, &x0, &alphabet, &hyper).unwrap();
            if oracle.winners.contains(&outcome.winner) {
                if attempt == 0 {
                    first_seed_hits += 1;
                }
                hit = true;
                break;
            }
        }
        if hit {
            fallback_hits += 1;
        }
    }
    let dqn_time = dqn_start.elapsed().as_secs_f64();

    let pass = hebb_mismatch == 0
        && hebb_time < 5.0
        && first_seed_hits >= 342
        && fallback_hits == 360
        && dqn_time < 600.0;
    let detail = format!(
        "hebb = oracle at 360/{} points in {hebb_time:.2}s (< 5s); dqn in oracle tie set \
         first-seed {first_seed_hits}/360 (≥ 342), with fallback {fallback_hits}/360, {dqn_time:.1}s (< 600s)",
        360 - hebb_mismatch
    );
    assert!(verdict(6, pass, &detail), "{detail}");
}

#[test]
fn criterion_7_convergence_rate_ordering() {
    let cfg = example_cfg();
    let alphabet = example_alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ordered = 0usize;
    for _ in 0..20 {
        let x0 = circle_point(rng.gen_range(0.0..TAU));
        let (losses, _) = pattern_candidates(&cfg, &x0, &alphabet).unwrap();
        let scores = nonnegative_scores(&losses, cfg.loss_kind);
        let reached = convergence_compare(&scores, &[0.0, 1.0], 200_000, 0.99).unwrap();
        match (reached[0], reached[1]) {
            (Some(fast), Some(slow)) if slow > fast => ordered += 1,
            _ => {}
        }
    }

    let fixture_spec = ConvergenceSpec { record_history: true, ..Default::default() };
    let out = hebb_learn(&[1.0, 2.0], 0.0, 100, &fixture_spec).unwrap();
    let h = out.history.unwrap();
    let fixture_ok = (h[2][0] - 0.2).abs() <= 1e-12 && (h[2][1] - 0.8).abs() <= 1e-12;

    let pass = ordered == 20 && fixture_ok;
    let detail = format!(
        "α=1 slower than α=0 at {ordered}/20 points, two-step fixture (0.2, 0.8) {}",
        if fixture_ok { "exact to 1e-12" } else { "off" }
    );
    assert!(verdict(7, pass, &detail), "{detail}");
}

#[test]
fn criterion_8_dropout_relearning() {
    let started = Instant::now();
    let cfg = example_cfg();
    let grid = 2048;
    let full = build_alphabet(&cfg.b, enumerate_patterns(4, false).unwrap()).unwrap();
    let field = |alphabet: &[AlphabetEntry]| -> Vec<Vec<i64>> {
        (0..grid)
            .map(|k| {
                let x0 = circle_point(k as f64 * TAU / grid as f64);
                let sel = brute_force_select(&cfg, &x0, alphabet).unwrap();
                overquant::alphabet::direction_key(&alphabet[sel.primary()].direction)
            })
            .collect()
    };
    let full_field = field(&full);
    let mut same = [false; 4];
    for c in 1..=4usize {
        let kept =
            overquant::alphabet::drop_channel(enumerate_patterns(4, false).unwrap(), c, 4).unwrap();
        let alphabet = build_alphabet(&cfg.b, kept.into_iter()).unwrap();
        same[c - 1] = field(&alphabet) == full_field;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = same == [true, false, true, false] && elapsed < 30.0;
    let detail = format!(
        "channel drops 1..4 identical-to-full = {:?} (want [true, false, true, false]), {elapsed:.2}s",
        same
    );
    assert!(verdict(8, pass, &detail), "{detail}");
}

#[test]
fn criterion_9_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // lifted-solution residuals and the nullspace dimension law
    let mut residual_ok = true;
    let mut nullspace_ok = true;
    for _ in 0..50 {
        let n = rng.gen_range(1..=3usize);
        let m = rng.gen_range(n + 1..=n + 3);
        let q = rng.gen_range(n + 1..=n + 3);
        let a = random_matrix(&mut rng, n, n);
        let b = loop {
            let b = random_matrix(&mut rng, n, m);
            if rank_of(&b) == n {
                break b;
            }
        };
        let c = loop {
            let c = random_matrix(&mut rng, q, n);
            if rank_of(&c) == n {
                break c;
            }
        };
        let right = solve_right(&a, &c).unwrap();
        let left = solve_left(&a, &b).unwrap();
        residual_ok &= right.residual <= 1e-9 && left.residual <= 1e-9;
        nullspace_ok &= nullspace_dimension(&b, Side::Left).unwrap() == n * (m - n)
            && nullspace_dimension(&c, Side::Right).unwrap() == (q - n) * n;
    }

    // closed-form average multiplicity agrees with enumeration
    let prop2_ok = (1..=4).all(|n| {
        let avg = average_multiplicity(n).unwrap();
        (avg - (9.0_f64 / 5.0).powi(n as i32)).abs() <= 1e-12
    });

    // entropy dominance on random distributions with multiplicities
    let mut entropy_ok = true;
    for _ in 0..1000 {
        let k = rng.gen_range(2..10usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let alpha: Vec<usize> = (0..k).map(|_| rng.gen_range(1..9usize)).collect();
        let h_a = alphabet_entropy(&p).unwrap();
        let h_u = activation_entropy(&p, &alpha).unwrap();
        entropy_ok &= h_u >= h_a - 1e-12;
    }

    // weight simplex on every learner iteration
    let spec = ConvergenceSpec { record_history: true, ..Default::default() };
    let scores: Vec<f64> = (0..6).map(|_| rng.gen_range(0.1..2.0)).collect();
    let out = hebb_learn(&scores, 0.5, 500, &spec).unwrap();
    let simplex_ok = out.history.unwrap().iter().all(|w| {
        (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && w.iter().all(|&v| v >= 0.0)
    });

    // network gradient against central differences
    let mut net = QApproximator::new(2, 4, &mut rng);
    let x = DVector::from_vec(vec![0.3, -0.7]);
    let (action, y) = (1usize, 0.4);
    let before = net.clone();
    net.train_on(&[(&x, action, y)], 1.0).unwrap();
    let mut grad_ok = true;
    let total = before.param_count();
    for idx in (0..total).step_by(total / 12) {
        let analytic = before.param(idx) - net.param(idx);
        let mut plus = before.clone();
        *plus.param_mut(idx) += 1e-5;
        let mut minus = before.clone();
        *minus.param_mut(idx) -= 1e-5;
        let f = |m: &QApproximator| (m.forward(&x, false).unwrap()[action] - y).powi(2);
        let numeric = (f(&plus) - f(&minus)) / 2e-5;
        let denom = numeric.abs().max(analytic.abs()).max(1e-8);
        grad_ok &= (analytic - numeric).abs() / denom < 1e-4;
    }

    let pass = residual_ok && nullspace_ok && prop2_ok && entropy_ok && simplex_ok && grad_ok;
    let detail = format!(
        "residuals {residual_ok}, nullspace law {nullspace_ok}, multiplicity formula {prop2_ok}, \
         entropy dominance {entropy_ok}, weight simplex {simplex_ok}, gradient check {grad_ok}"
    );
    assert!(verdict(9, pass, &detail), "{detail}");
}
