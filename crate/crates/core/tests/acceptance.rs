//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustlt_core::metrics::skew_decomposition;
use robustlt_core::theory::{
    bias_sign_indicator, conditional_risk, monte_carlo_risk, risk_report, BiasGeometry,
};
use robustlt_core::train::{history_csv, train};
use robustlt_core::{
    aiw_weight, class_counts, cpb_intensities, pgd_attack, AttackConfig, ClassProfile, Enhance,
    Label, LongTailSpec, LossFn, LossTag, ModelKind, ScheduleConfig,
};

use common::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn closed_form_risk_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut accepted, mut within, mut worst) = (0, 0, 0.0f64);
    while accepted < 200 {
        let task = random_task(&mut rng, 4, (0.3, 2.0), (1.0, 20.0));
        let bias = rng.random_range(-1.0..1.0);
        let h = random_hypothesis(&mut rng, &task, bias);
        let y = if rng.random_bool(0.5) {
            Label::Plus
        } else {
            Label::Minus
        };
        let eps = rng.random_range(0.0..task.mu1() + 0.3);
        let exact = conditional_risk(&task, &h, y, eps).unwrap().risk;
        if !(1e-3..=1.0 - 1e-3).contains(&exact) {
            continue;
        }
        let mc = monte_carlo_risk(&task, &h, y, eps, 1_000_000, accepted as u64).unwrap();
        let score = (mc.estimate - exact).abs() / mc.std_err;
        worst = worst.max(score);
        if score <= 4.0 {
            within += 1;
        }
        accepted += 1;
    }
    ensure(within >= 195, || format!("only {within}/200 within 4 SE"))?;
    Ok(format!("{within}/200 within 4 SE, worst {worst:.2} SE"))
}

fn bias_sign_lemma() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut zero_bias = 0;
    while checked < 500 {
        let task = random_task(&mut rng, 5, (0.3, 2.0), (1.0, 20.0));
        let bias = if checked % 5 == 0 {
            0.0
        } else {
            let mag = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let h = random_hypothesis(&mut rng, &task, bias);
        let eps = rng.random_range(0.0..task.mu1());
        let r = risk_report(&task, &h, eps).unwrap();
        let zs = [r.z_nat_plus, r.z_nat_minus, r.z_rob_plus, r.z_rob_minus];
        if zs.iter().any(|z| z.abs() > 5.0) {
            continue;
        }
        let nat = r.nat_risk_minus - r.nat_risk_plus;
        let rob = r.rob_risk_minus - r.rob_risk_plus;
        let s = bias_sign_indicator(&h);
        for (name, diff) in [("natural", nat), ("robust", rob)] {
            let sign = if diff.abs() <= 1e-12 {
                0
            } else if diff > 0.0 {
                1
            } else {
                -1
            };
            ensure(sign == s, || {
                format!("{name} risk gap {diff:e} has sign {sign}, bias {bias} has sign {s}")
            })?;
            if bias == 0.0 {
                ensure(diff == 0.0, || {
                    format!("{name} risks differ by {diff:e} at b = 0")
                })?;
            }
        }
        if bias == 0.0 {
            zero_bias += 1;
        }
        checked += 1;
    }
    Ok(format!("500 hypotheses ({zero_bias} with b = 0)"))
}

fn balanced_minority_intensity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checked, mut worst_b, mut worst_grid) = (0, 0.0f64, 0.0f64);
    while checked < 100 {
        let Some((task, h, eps_plus)) = admissible_triple(&mut rng) else {
            continue;
        };
        let geom = BiasGeometry::from_task(&task, &h).unwrap();
        let eps_minus = geom
            .balanced_eps_minus(eps_plus)
            .map_err(|e| e.to_string())?;
        let z_plus = geom.z_rob(Label::Plus, 0.0, eps_plus);
        let z_minus = geom.z_rob(Label::Minus, 0.0, eps_minus);
        if z_plus.abs().max(z_minus.abs()) > 8.0 {
            continue;
        }
        let b = geom
            .optimal_bias(eps_plus, eps_minus)
            .map_err(|e| e.to_string())?;
        let grid = geom.grid_search_bias(eps_plus, eps_minus, 1e-6);
        worst_b = worst_b.max(b.abs());
        worst_grid = worst_grid.max(grid.abs());
        ensure(b.abs() <= 1e-10, || {
            format!("|b*| = {b:e} at eps_plus = {eps_plus}, eps_minus = {eps_minus}")
        })?;
        ensure(grid.abs() <= 1e-5, || format!("grid minimizer at {grid:e}"))?;
        checked += 1;
    }
    Ok(format!(
        "100 triples, max |b*| {worst_b:.1e}, max |grid b| {worst_grid:.1e}"
    ))
}

fn minority_intensity_bounds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut draws = 0;
    while checked < 2000 {
        draws += 1;
        let task = random_task(&mut rng, 6, (0.05, 2.0), (1.0, 100.0));
        let k_edge = match draws % 4 {
            0 => 1.0,
            1 => 1.0 + 1e-12,
            _ => task.imbalance(),
        };
        let task = robustlt_core::GaussianTaskSpec::new(
            task.mu1(),
            task.mu2(),
            task.d1(),
            task.d2(),
            task.sigma(),
            k_edge,
        )
        .unwrap();
        let h = random_hypothesis(&mut rng, &task, 0.0);
        let geom = BiasGeometry::from_task(&task, &h).unwrap();
        let bound = geom.a_point - geom.balance_gap();
        if bound <= 0.0 {
            continue;
        }
        let u = if draws % 7 == 0 {
            1.0 - 1e-12
        } else {
            rng.random_range(0.0..1.0)
        };
        let eps_plus = u * bound;
        let Ok(eps_minus) = geom.balanced_eps_minus(eps_plus) else {
            continue;
        };
        let hi = eps_plus + geom.balance_gap();
        ensure(eps_plus <= eps_minus && eps_minus <= hi, || {
            format!("eps_minus = {eps_minus} outside [{eps_plus}, {hi}]")
        })?;
        checked += 1;
    }
    Ok(format!("{checked} admissible instances"))
}

fn random_profile<R: Rng>(rng: &mut R) -> ClassProfile {
    loop {
        let n = rng.random_range(2..=30);
        let counts: Vec<u64> = (0..n).map(|_| rng.random_range(1..=10_000)).collect();
        let p = ClassProfile::from_counts(&counts).unwrap();
        if !p.is_balanced() {
            return p;
        }
    }
}

fn budget_preservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let profile = random_profile(&mut rng);
        let alpha = match i {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..=1.0),
        };
        let eps = rng.random_range(0.001..1.0);
        let cfg = ScheduleConfig {
            eps,
            alpha,
            beta: 0.0,
            total_iterations: 10,
        };
        let table = cpb_intensities(&profile, &cfg).map_err(|e| e.to_string())?;
        let budget = robustlt_core::metrics::w_inf_budget(&profile, table.eps_max());
        worst = worst.max((budget - eps).abs());
        ensure((budget - eps).abs() <= 1e-10, || {
            format!("budget {budget} vs eps {eps}")
        })?;
        let head = table.eps_max()[profile.head_class()];
        ensure(head == (1.0 - alpha) * eps, || {
            format!("head intensity {head} != (1 - {alpha})·{eps}")
        })?;
    }
    Ok(format!("1000 profiles, max budget error {worst:.1e}"))
}

fn iteration_weighting() -> Check {
    for total in [10usize, 100] {
        for beta in [0.0, 0.2, 0.8, 1.0] {
            let cfg = ScheduleConfig {
                eps: 0.1,
                alpha: 0.0,
                beta,
                total_iterations: total,
            };
            let w: Vec<f64> = (1..=total).map(|t| aiw_weight(t, &cfg)).collect();
            if beta == 0.0 {
                ensure(w.iter().all(|&v| v == 1.0), || {
                    format!("beta = 0, T = {total}: {w:?}")
                })?;
                continue;
            }
            ensure(w[0] == 0.0, || {
                format!("beta = {beta}, T = {total}: w(1) = {}", w[0])
            })?;
            ensure(w.windows(2).all(|p| p[0] <= p[1]), || {
                format!("beta = {beta}, T = {total}: decreasing")
            })?;
            let full = (beta * total as f64).ceil() as usize + 1;
            ensure(w[full - 1..].iter().all(|&v| v == 1.0), || {
                format!("beta = {beta}, T = {total}: not 1 from t = {full}")
            })?;
        }
    }
    Ok("T in {10, 100}, beta in {0, 0.2, 0.8, 1}".into())
}

fn gradient_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (d, c, hidden) = (6, 4, 8);
    let mut worst = 0.0f64;
    for kind in [ModelKind::Linear, ModelKind::Mlp1] {
        for tag in [LossTag::At, LossTag::Bsl] {
            for _ in 0..100 {
                let counts: Vec<u64> = (0..c).map(|_| rng.random_range(1..=1000)).collect();
                let loss = LossFn::new(tag, Some(&counts)).unwrap();
                let model = random_model(&mut rng, kind, d, c, hidden);
                let x = random_point(&mut rng, d);
                let y = rng.random_range(0..c);
                let (_, pg) = model.param_gradient(&x, y, &loss).unwrap();
                let ig = model.input_gradient(&x, y, &loss).unwrap();
                let ep = rel_err(&pg, &fd_param_grad(&model, &x, y, &loss, 1e-5));
                let ei = rel_err(&ig, &fd_input_grad(&model, &x, y, &loss, 1e-5));
                worst = worst.max(ep).max(ei);
                ensure(ep <= 1e-4 && ei <= 1e-4, || {
                    format!("{kind}/{tag:?}: param err {ep:e}, input err {ei:e}")
                })?;
            }
        }
    }
    Ok(format!("400 points per gradient, max rel err {worst:.1e}"))
}

fn pgd_feasibility() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ce = LossFn::cross_entropy();
    let mut n_examples = 0;
    for i in 0..500 {
        let kind = if i % 2 == 0 {
            ModelKind::Linear
        } else {
            ModelKind::Mlp1
        };
        let model = random_model(&mut rng, kind, 5, 3, 6);
        let eps = rng.random_range(0.01..1.0);
        let cfg = AttackConfig {
            steps: rng.random_range(1..=20),
            base_step_size: rng.random_range(0.1..1.0) * eps,
            base_eps: eps,
            random_start: i % 3 != 0,
            clip: None,
        };
        let x = random_point(&mut rng, 5);
        let y = rng.random_range(0..3);
        let adv = pgd_attack(&model, &x, y, eps, &cfg, &ce, &mut rng).unwrap();
        let dist = adv
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(dist <= eps + 1e-12, || {
            format!("‖δ‖∞ = {dist} > eps = {eps}")
        })?;
        n_examples += 1;
    }

    let mut worst = 0.0f64;
    for _ in 0..500 {
        let model = random_model(&mut rng, ModelKind::Linear, 5, 2, 0);
        let eps = rng.random_range(0.01..1.0);
        let cfg = AttackConfig {
            steps: 1,
            base_step_size: eps,
            base_eps: eps,
            random_start: false,
            clip: None,
        };
        let x = random_point(&mut rng, 5);
        let y = rng.random_range(0..2);
        let adv = pgd_attack(&model, &x, y, eps, &cfg, &ce, &mut rng).unwrap();
        let margin = |v: &[f64]| {
            let z = model.forward(v).unwrap();
            z[y] - z[1 - y]
        };
        let w = &model.params[..10];
        let l1: f64 = (0..5)
            .map(|j| (w[y * 5 + j] - w[(1 - y) * 5 + j]).abs())
            .sum();
        let drop = margin(&x) - margin(&adv);
        let err = (drop - eps * l1).abs();
        worst = worst.max(err);
        ensure(err <= 1e-10, || {
            format!("margin drop {drop} vs eps·‖w‖₁ = {}", eps * l1)
        })?;
    }
    Ok(format!(
        "{n_examples} examples in the ball, single-step margin error {worst:.1e}"
    ))
}

fn desk_scale_direction() -> Check {
    let mut gaps = [0.0; 2];
    let mut all = [0.0; 2];
    for seed in 0..5u64 {
        for (i, enhance) in [Enhance::None, Enhance::RobustLt].into_iter().enumerate() {
            let acc = binary_run(seed, enhance);
            gaps[i] += (acc.rob_acc[0] - acc.rob_acc[1]).abs() / 5.0;
            all[i] += (acc.rob_acc[0] + acc.rob_acc[1]) / 2.0 / 5.0;
        }
    }
    let detail = format!(
        "mean |rob gap| {:.4} -> {:.4}, all-class rob acc {:.4} -> {:.4}",
        gaps[0], gaps[1], all[0], all[1]
    );
    ensure(gaps[1] < gaps[0], || format!("gap not reduced: {detail}"))?;
    ensure(all[0] - all[1] <= 0.02, || {
        format!("robust accuracy dropped: {detail}")
    })?;
    Ok(detail)
}

fn schedule_collapse() -> Check {
    let train_set = binary_train_set(11);
    let plain = train(&train_set, &binary_config(11, Enhance::None, 0.0, 0.0))
        .map_err(|e| e.to_string())?;
    let lt = train(&train_set, &binary_config(11, Enhance::RobustLt, 0.0, 0.0))
        .map_err(|e| e.to_string())?;
    let (a, b) = (history_csv(&plain.history), history_csv(&lt.history));
    ensure(a.as_bytes() == b.as_bytes(), || {
        "history CSVs differ".into()
    })?;
    Ok(format!("{} byte history identical", a.len()))
}

fn skew_cross_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let profile = random_profile(&mut rng);
        let n = profile.num_classes();
        let risks: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let report = skew_decomposition(&risks, &profile);
        let balanced = risks.iter().sum::<f64>() / n as f64;
        let imbalanced: f64 = profile
            .frequencies()
            .iter()
            .zip(&risks)
            .map(|(p, r)| p * r)
            .sum();
        let err = (report.skew - (balanced - imbalanced)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-14, || {
            format!("skew {} vs direct {}", report.skew, balanced - imbalanced)
        })?;

        let flat = vec![risks[0]; n];
        let s = skew_decomposition(&flat, &profile).skew;
        ensure(s == 0.0, || format!("equal risks give skew {s:e}"))?;
        let count = rng.random_range(1..=10_000);
        let even = ClassProfile::from_counts(&vec![count; n]).unwrap();
        let s = skew_decomposition(&risks, &even).skew;
        ensure(s == 0.0, || format!("balanced profile gives skew {s:e}"))?;
    }
    Ok(format!("1000 inputs, max error {worst:.1e}"))
}

fn long_tail_counts() -> Check {
    let spec = LongTailSpec {
        num_classes: 10,
        base_count: 5000,
        imbalance_ratio: 50.0,
        seed: 0,
    };
    let counts = class_counts(&spec).map_err(|e| e.to_string())?;
    ensure(counts[0] == 5000 && counts[9] == 100, || {
        format!("{counts:?}")
    })?;
    let mut tested = 0;
    for n in [1u64, 10, 100, 1000, 5000, 50_000] {
        for k in [1.0, 1.5, 2.0, 10.0, 50.0, 100.0, 256.0] {
            for classes in [2usize, 3, 5, 10, 20, 100] {
                let spec = LongTailSpec {
                    num_classes: classes,
                    base_count: n,
                    imbalance_ratio: k,
                    seed: 0,
                };
                let c = class_counts(&spec).map_err(|e| e.to_string())?;
                ensure(c.windows(2).all(|p| p[0] >= p[1]), || {
                    format!("N = {n}, K = {k}, |Y| = {classes}: {c:?}")
                })?;
                tested += 1;
            }
        }
    }
    Ok(format!(
        "5000/50/10 -> {counts:?}; {tested} settings non-increasing"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("closed-form risk vs Monte Carlo", closed_form_risk_oracle),
        ("bias sign orders class risks", bias_sign_lemma),
        (
            "balancing minority intensity zeroes the optimal bias",
            balanced_minority_intensity,
        ),
        ("minority intensity bounds", minority_intensity_bounds),
        ("class-wise budget and head anchor", budget_preservation),
        ("iteration weighting", iteration_weighting),
        ("gradients vs finite differences", gradient_correctness),
        ("PGD feasibility and linear worst case", pgd_feasibility),
        ("desk-scale RobustLT direction", desk_scale_direction),
        ("alpha = beta = 0 collapses to plain AT", schedule_collapse),
        ("skew decomposition", skew_cross_check),
        ("long-tail counts", long_tail_counts),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
