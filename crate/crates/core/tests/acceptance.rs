//! Acceptance criteria, one pass/fail line each.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use affinedim::cutsets::build_cutset;
use affinedim::exterior::{singular_values, wedge_power, Matrix};
use affinedim::furstenberg::{
    default_depth, line_angles, ruelle_decay_check, sample_forward_chain, sample_stationary,
    stationarity_residual, Action,
};
use affinedim::lyapunov::{
    lyapunov_dimension, lyapunov_spectrum, qr_exponents, rho_threshold, wedge_top_exponent,
    Arithmetic,
};
use affinedim::pipeline::{self, Options, Theorem, Verdict};
use affinedim::random::keyed_rng;
use affinedim::separation::{diophantine_gaps, free_semigroup_check, ssc_check, DEFAULT_WORD_BUDGET};
use affinedim::stats::ks_test;
use affinedim::{entropy, AffineIfs, AffineMap, EmpiricalMeasure};
use rand::RngExt;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn spec(name: &str) -> AffineIfs {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(format!("{name}.json"));
    AffineIfs::from_spec_file(&path).unwrap()
}

fn shipped_specs() -> Vec<(String, AffineIfs)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "json").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), spec(&n))).collect()
}

fn random_matrix(rng: &mut impl RngExt, d: usize) -> Matrix {
    Matrix::from_row_major(d, d, (0..d * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
}

fn linear_ifs(mats: Vec<Matrix>, probs: Vec<f64>) -> AffineIfs {
    AffineIfs::new(mats.into_iter().map(AffineMap::linear_only).collect(), probs).unwrap()
}

fn uniform_cloud(m: usize, n: usize, seed: u64) -> EmpiricalMeasure {
    let mut rng = keyed_rng(seed, 0);
    EmpiricalMeasure::from_flat(m, (0..n * m).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn exterior_identities() -> Outcome {
    let mut rng = keyed_rng(1, 0);
    let mut worst_norm = 0.0f64;
    let mut worst_slack = f64::NEG_INFINITY;
    for t in 0..1000 {
        let d = 1 + t % 5;
        let a = random_matrix(&mut rng, d);
        let b = random_matrix(&mut rng, d);
        let sa = singular_values(&a);
        let sb = singular_values(&b);
        let sab = singular_values(&a.matmul(&b));
        for l in 1..=d {
            let prod: f64 = sa[..l].iter().product();
            let op = wedge_power(&a, l).unwrap().op_norm();
            worst_norm = worst_norm.max((op - prod).abs() / prod);
            let lower = sa[l - 1] * sb[d - 1] - sab[l - 1];
            let upper = sab[l - 1] - sa[l - 1] * sb[0];
            worst_slack = worst_slack.max(lower).max(upper);
        }
    }
    outcome(
        worst_norm <= 1e-8 && worst_slack <= 1e-10,
        format!("max relative wedge-norm error {worst_norm:.2e}, max product-bound violation {worst_slack:.2e}"),
    )
}

fn lyapunov_oracle() -> Outcome {
    let steps = 100_000;
    let mut ok = true;
    let mut notes = Vec::new();
    let diag = linear_ifs(
        vec![Matrix::diag(&[0.5, 0.125]), Matrix::diag(&[0.25, 0.25])],
        vec![0.5, 0.5],
    );
    let s = lyapunov_spectrum(&diag, steps, 11).unwrap();
    for (k, want) in [-1.5, -2.5].into_iter().enumerate() {
        let dev = (s.chi[k] - want).abs();
        ok &= dev <= 3.0 * s.stderr[k];
        notes.push(format!("diag χ{} dev {dev:.1e} (3σ {:.1e})", k + 1, 3.0 * s.stderr[k]));
    }
    let r = 0.6f64;
    let conf = linear_ifs(
        vec![Matrix::rotation2(0.7).scale(r), Matrix::rotation2(2.1).scale(r)],
        vec![0.3, 0.7],
    );
    let s = lyapunov_spectrum(&conf, steps, 12).unwrap();
    for k in 0..2 {
        let dev = (s.chi[k] - r.log2()).abs();
        ok &= dev <= (3.0 * s.stderr[k]).max(1e-12);
        notes.push(format!("conformal χ{} dev {dev:.1e}", k + 1));
    }
    let mut rng = keyed_rng(13, 0);
    let mats: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 3).scale(0.4)).collect();
    let generic = AffineIfs::new(
        mats.into_iter().map(AffineMap::linear_only).collect(),
        vec![0.2, 0.3, 0.5],
    )
    .unwrap();
    let s = qr_exponents(&generic.linear_parts(), generic.probs(), 3, steps, 1, 14).unwrap();
    for m in 1..=3 {
        let (sum, err) = s.sum_top(m);
        let (w, werr) = wedge_top_exponent(&generic, m, steps, 15).unwrap();
        let dev = (sum - w).abs();
        let tol = 3.0 * (err * err + werr * werr).sqrt();
        ok &= dev <= tol;
        notes.push(format!("wedge m={m} dev {dev:.1e} (3σ {tol:.1e})"));
    }
    outcome(ok, notes.join("; "))
}

fn dimension_closed_forms() -> Outcome {
    let cantor = lyapunov_dimension(&[(1.0f64 / 3.0).log2()], 1.0);
    let want = 2f64.ln() / 3f64.ln();
    let mut ok = (cantor - want).abs() <= 1e-12;
    let mut worst = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let mut chi = [-0.1 - 0.3 * i as f64, -0.2 - 0.4 * j as f64, -0.3 - 0.5 * k as f64];
                chi.sort_by(|a, b| b.total_cmp(a));
                let got = rho_threshold(&chi, 3);
                worst = worst.max((got - (-chi[1] - 2.0 * chi[2])).abs());
            }
        }
    }
    ok &= worst <= 1e-12;
    outcome(
        ok,
        format!("Cantor dim_L error {:.1e}; max ϱ_3 deviation {worst:.1e}", (cantor - want).abs()),
    )
}

fn estimator_calibration() -> Outcome {
    let n = 1_000_000;
    let mut ok = true;
    let mut notes = Vec::new();
    for m in 1..=3 {
        let s = pipeline::estimate_slope(&uniform_cloud(m, n, 20 + m as u64), None).unwrap();
        ok &= (s.slope - m as f64).abs() <= 0.02;
        notes.push(format!("uniform[0,1)^{m} {:.4}", s.slope));
    }
    let cantor = spec("cantor");
    let cloud = cantor.sample_measure(n, cantor.default_depth(), 30);
    let s = pipeline::estimate_slope(&cloud, None).unwrap();
    ok &= (s.slope - 0.6309).abs() <= 0.05;
    notes.push(format!("Cantor {:.4}", s.slope));
    let dirac = EmpiricalMeasure::from_flat(2, [0.3, 0.7].repeat(n)).unwrap();
    let s = pipeline::estimate_slope(&dirac, None).unwrap();
    ok &= s.slope == 0.0;
    notes.push(format!("point mass {}", s.slope));
    outcome(ok, notes.join("; "))
}

fn random_contracting(rng: &mut impl RngExt, d: usize, maps: usize) -> AffineIfs {
    let mut out = Vec::with_capacity(maps);
    while out.len() < maps {
        let a = random_matrix(rng, d);
        let s = singular_values(&a);
        if s[d - 1] < 0.25 * s[0] {
            continue;
        }
        let linear = a.scale((0.25 + 0.25 * rng.random::<f64>()) / s[0]);
        let t = (0..d).map(|_| rng.random::<f64>()).collect();
        out.push(AffineMap::new(linear, t).unwrap());
    }
    AffineIfs::uniform(out).unwrap()
}

fn cutset_correctness() -> Outcome {
    let mut rng = keyed_rng(40, 0);
    let mut worst_weight = 0.0f64;
    let mut prefix_ok = true;
    let mut bound_ok = true;
    let mut checked = 0usize;
    for trial in 0..6 {
        let d = 2 + trial % 2;
        let ifs = random_contracting(&mut rng, d, 2);
        let floor = ifs
            .linear_parts()
            .iter()
            .map(|a| singular_values(a)[d - 1])
            .fold(f64::INFINITY, f64::min);
        for m in 1..=d {
            for n in [1u32, 5, 10, 14] {
                let cs = build_cutset(&ifs, m, n, 10_000_000).unwrap();
                worst_weight = worst_weight.max((cs.total_weight() - 1.0).abs());
                prefix_ok &= cs.words.windows(2).all(|w| !w[1].letters.starts_with(&w[0].letters));
                for w in &cs.words {
                    let alpha = singular_values(&ifs.linear_word(&w.letters))[m - 1] * f64::from(n).exp2();
                    bound_ok &= alpha <= 1.0 + 1e-9 && alpha >= floor * (1.0 - 1e-9);
                    checked += 1;
                }
            }
        }
    }
    outcome(
        worst_weight <= 1e-12 && prefix_ok && bound_ok,
        format!("{checked} words; max |Σp_u − 1| {worst_weight:.1e}; prefix-free {prefix_ok}; singular bound {bound_ok}"),
    )
}

fn furstenberg_stationarity() -> Outcome {
    let count = 10_000;
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["planar-rational", "rotated-3d"] {
        let ifs = spec(name);
        let chi = lyapunov_spectrum(&ifs, 100_000, 50).unwrap().chi;
        for m in 1..ifs.dim() {
            for action in [Action::Direct, Action::Adjoint] {
                let depth = default_depth(&chi, m).unwrap();
                let sample = sample_stationary(&ifs, action, m, count, depth, 51).unwrap();
                let r = stationarity_residual(&sample, &ifs, action, 52).unwrap();
                ok &= r.passes() && sample.failures == 0;
                notes.push(format!("{name} m={m} {action:?} residual {:.4} < {:.4}", r.max(), r.threshold));
            }
        }
    }
    let rot = spec("rotation-2d");
    let sample = sample_forward_chain(&rot, Action::Direct, 1, count, 64, 53).unwrap();
    let (_, p) = ks_test(&line_angles(&sample), |x| x / std::f64::consts::PI);
    ok &= p > 0.01;
    notes.push(format!("rotation-invariant KS p = {p:.3}"));
    outcome(ok, notes.join("; "))
}

fn ruelle_decay() -> Outcome {
    let a = Matrix::diag(&[0.5, 0.2]);
    let b = Matrix::rotation2(0.25).matmul(&a);
    let ifs = linear_ifs(vec![a, b], vec![0.5, 0.5]);
    let s = lyapunov_spectrum(&ifs, 100_000, 60).unwrap();
    let gap = s.chi[0] - s.chi[1];
    let passes = (0..100)
        .filter(|&t| ruelle_decay_check(&ifs, &s.chi, 100, 200, 0.1, 1000 + t).unwrap().all_pass())
        .count();
    outcome(gap >= 1.0 && passes >= 99, format!("gap {gap:.3} bits; {passes}/100 trials pass"))
}

fn theorem_consistency() -> Outcome {
    let base = Options {
        seed: 7,
        ..Options::default()
    };
    let mut ok = true;
    let mut notes = Vec::new();
    let check = |name: &str, theorem: Theorem, tol: f64| {
        let opts = Options {
            tolerance: tol,
            ..base.clone()
        };
        let rep = pipeline::verify(&spec(name), theorem, &opts).unwrap();
        let pass = rep.verdict == Verdict::Consistent;
        (pass, format!("{name} {theorem}: {:?} est {:.3} vs {:.3}", rep.verdict, rep.estimated, rep.predicted))
    };
    for (name, theorem, tol) in [
        ("planar-rational", Theorem::LowDimProjections, 0.1),
        ("rotated-3d", Theorem::D3Sosc, 0.15),
        ("rotated-3d", Theorem::LowDimProjections, 0.1),
    ] {
        let (pass, note) = check(name, theorem, tol);
        ok &= pass;
        notes.push(note);
    }
    for (name, ifs) in shipped_specs() {
        let dim_l = pipeline::spectrum(&ifs, &base).unwrap().lyapunov_dimension;
        let cloud = pipeline::sample_measure(&ifs, &base).unwrap();
        let est = pipeline::estimate_slope(&cloud, None).unwrap().slope;
        let pass = est <= dim_l + 0.1;
        ok &= pass;
        notes.push(format!("{name} {est:.3} ≤ {dim_l:.3}+0.1"));
    }
    outcome(ok, notes.join("; "))
}

fn separation_suite() -> Outcome {
    let cantor = ssc_check(&spec("cantor"), 1, DEFAULT_WORD_BUDGET).unwrap();
    let touching = ssc_check(&spec("touching-half"), 8, DEFAULT_WORD_BUDGET).unwrap();
    let free = free_semigroup_check(&spec("commuting-pair"), 8, Arithmetic::ExactDyadic, DEFAULT_WORD_BUDGET).unwrap();
    let gaps = diophantine_gaps(&spec("algebraic-1d"), 8, DEFAULT_WORD_BUDGET).unwrap();
    let min_gap = gaps.rows.iter().map(|r| r.map_gap).fold(f64::INFINITY, f64::min);
    let ok = matches!(cantor, affinedim::separation::SscStatus::Certified { depth: 1 })
        && touching.is_refuted()
        && free.first_failure == Some(2)
        && gaps.rows.len() == 8
        && min_gap > 0.0;
    outcome(
        ok,
        format!(
            "Cantor SSC {}; touching refuted {}; commuting first failure {:?}; min gap to depth 8 {min_gap:.3e}",
            cantor.is_certified(),
            touching.is_refuted(),
            free.first_failure
        ),
    )
}

fn random_cloud(rng: &mut impl RngExt, m: usize, n: usize) -> EmpiricalMeasure {
    let clusters = 1 + (rng.random::<f64>() * 5.0) as usize;
    let centres: Vec<Vec<f64>> = (0..clusters).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    let spread = 0.02 + 0.2 * rng.random::<f64>();
    let mut pts = Vec::with_capacity(n * m);
    for i in 0..n {
        let c = &centres[i % clusters];
        for x in c {
            pts.push((x + spread * (rng.random::<f64>() - 0.5)).rem_euclid(1.0));
        }
    }
    EmpiricalMeasure::from_flat(m, pts).unwrap()
}

fn entropy_toolbox() -> Outcome {
    use entropy::{conditional_dyadic_entropy, dyadic_entropy, multiscale_identity_check, BiasCorrection::Off};
    let mut rng = keyed_rng(70, 0);
    let mut sandwich = 0.0f64;
    let mut conditional = 0.0f64;
    let mut translation = f64::NEG_INFINITY;
    let mut lipschitz = f64::NEG_INFINITY;
    let mut multiscale = f64::NEG_INFINITY;
    for t in 0..100 {
        let m = 1 + t % 3;
        let n = 6 - m as i32;
        let parts: Vec<EmpiricalMeasure> = (0..3).map(|_| random_cloud(&mut rng, m, 2000)).collect();
        let mut q: Vec<f64> = (0..3).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        let mix_parts: Vec<(f64, &EmpiricalMeasure)> = q.iter().copied().zip(&parts).collect();
        let theta = EmpiricalMeasure::mixture(&mix_parts).unwrap();
        let h = dyadic_entropy(&theta, n, Off).unwrap();
        let avg: f64 = q.iter().zip(&parts).map(|(w, p)| w * dyadic_entropy(p, n, Off).unwrap()).sum();
        let hq = entropy::entropy_of_masses(&q);
        sandwich = sandwich.max(avg - h).max(h - avg - hq);

        let c = conditional_dyadic_entropy(&theta, n - 2, 3).unwrap();
        conditional = conditional.max((c.difference - c.component_average).abs());

        let shift: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect();
        let moved = theta.translate(&shift);
        translation = translation.max((dyadic_entropy(&moved, n, Off).unwrap() - h).abs() - m as f64);

        let lip = 8.0 + 8.0 * rng.random::<f64>();
        let linear = if m == 2 {
            Matrix::rotation2(rng.random::<f64>() * 6.0).scale(lip)
        } else {
            Matrix::diag(&vec![lip; m])
        };
        let image = theta.push_affine(&AffineMap::new(linear, shift).unwrap()).unwrap();
        lipschitz = lipschitz.max(dyadic_entropy(&image, n, Off).unwrap() - h - m as f64 * lip.log2() - m as f64);

        let k = 2u32;
        for steps in [2 * k, 4 * k, 8 * k] {
            let r = multiscale_identity_check(&theta, 0, steps, k).unwrap();
            multiscale = multiscale.max(r.residual - 5.0 * f64::from(k) / f64::from(steps));
        }
    }
    let ok = sandwich <= 1e-9 && conditional <= 1e-9 && translation <= 0.0 && lipschitz <= 0.0 && multiscale <= 0.0;
    outcome(
        ok,
        format!(
            "sandwich violation {sandwich:.1e}; conditional routes {conditional:.1e}; translation excess {translation:.3}; Lipschitz excess {lipschitz:.3}; multiscale excess {multiscale:.3}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("exterior-algebra identities", exterior_identities, Duration::from_secs(5)),
        ("Lyapunov oracle", lyapunov_oracle, Duration::from_secs(30)),
        ("dim_L closed forms", dimension_closed_forms, Duration::from_secs(5)),
        ("entropy-dimension calibration", estimator_calibration, Duration::from_secs(60)),
        ("cut-set correctness", cutset_correctness, Duration::from_secs(20)),
        ("Furstenberg stationarity", furstenberg_stationarity, Duration::MAX),
        ("Ruelle decay", ruelle_decay, Duration::MAX),
        ("theorem consistency", theorem_consistency, Duration::from_secs(600)),
        ("separation suite", separation_suite, Duration::from_secs(10)),
        ("entropy toolbox", entropy_toolbox, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let pass = out.pass && took <= limit;
        if !pass {
            failed += 1;
        }
        let limit = if limit == Duration::MAX {
            String::new()
        } else {
            format!(", limit {} s", limit.as_secs())
        };
        println!(
            "criterion {:>2} {}: {name} ({:.1} s{limit}): {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
