//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1, 2 and 7 are correctness checks and fail the run when they
//! fail. Criteria 3 to 6 are empirical benchmarks on a trained desk-scale
//! model; their verdict is printed but only fails the run when
//! `HEARTGEN_ACCEPTANCE_STRICT=1`.
//!
//! The desk model trains once (wall-clock budget one hour) and is cached
//! under the cargo target directory. Set `HEARTGEN_ACCEPTANCE_RETRAIN=1` to
//! ignore the cache.

use std::path::PathBuf;
use std::time::Instant;

use heartgen_core::baselines::{copy_frame0, pca_fit, DEFAULT_COMPONENTS};
use heartgen_core::datakit::{
    make_dataset, make_phantom, one_hot, ConditionProfile, ConditionSampler, Dataset, Gender,
    JitterParams, Label, PhantomParams, SegVolume, Split, SplitFractions, SubjectRecord,
};
use heartgen_core::engine::{
    complete_sequence, condition_sweep, generate_from_latents, generate_sequences, prior_draws,
    train, train_with, CompletionMode, SweepFactor, TrainConfig,
};
use heartgen_core::metrics::{
    age_stratified_wasserstein, assd, dice, evaluate_completion, evaluate_generation, hausdorff,
    kl_divergence_hist, phenotypes, spearman, wasserstein_1d, PhenotypeRecord, PHENOTYPE_NAMES,
};
use heartgen_core::model::{
    kl_gaussian_standard, load_checkpoint, save_checkpoint, ModelCheckpoint, ModelConfig, Network,
};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

const DATA_SEED: u64 = 2024;
const N_PHANTOMS: usize = 200;
const TRAIN_BUDGET_S: f64 = 3600.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

fn oracle_boundary(mask: &[bool], d: [usize; 3]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let at = |x: isize, y: isize, z: isize| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= d[0] as isize || y >= d[1] as isize || z >= d[2] as isize
        {
            return false;
        }
        mask[x as usize + d[0] * (y as usize + d[1] * z as usize)]
    };
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                if !at(xi, yi, zi) {
                    continue;
                }
                let n6 = [
                    (1, 0, 0),
                    (-1, 0, 0),
                    (0, 1, 0),
                    (0, -1, 0),
                    (0, 0, 1),
                    (0, 0, -1),
                ];
                if n6.iter().any(|(a, b, c)| !at(xi + a, yi + b, zi + c)) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn oracle_distances(a: &[[usize; 3]], b: &[[usize; 3]], s: [f64; 3]) -> (f64, f64) {
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        let mins: Vec<f64> = from
            .iter()
            .map(|p| {
                to.iter()
                    .map(|q| {
                        (0..3)
                            .map(|k| ((p[k] as f64 - q[k] as f64) * s[k]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let max = mins.iter().cloned().fold(0.0, f64::max);
        (max, mins.iter().sum::<f64>() / mins.len() as f64)
    };
    let (hab, mab) = directed(a, b);
    let (hba, mba) = directed(b, a);
    (hab.max(hba), 0.5 * (mab + mba))
}

fn lp_transport(p: &[f64], q: &[f64]) -> f64 {
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = p
        .iter()
        .map(|x| {
            q.iter()
                .map(|y| pb.add_var((x - y).abs(), (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    for row in &vars {
        let terms: Vec<_> = row.iter().map(|&v| (v, 1.0)).collect();
        pb.add_constraint(terms, ComparisonOp::Eq, 1.0 / p.len() as f64);
    }
    for j in 0..q.len() {
        let terms: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        pb.add_constraint(terms, ComparisonOp::Eq, 1.0 / q.len() as f64);
    }
    pb.solve().expect("transport LP is feasible").objective()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    while pairs < 120 {
        let dims = [
            rng.random_range(2..=7),
            rng.random_range(2..=7),
            rng.random_range(1..=5),
        ];
        let spacing = [
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..4.0),
        ];
        let n = dims.iter().product::<usize>();
        let (pa, pb) = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        let la: Vec<u8> = (0..n)
            .map(|_| if rng.random_bool(pa) { 1 } else { 0 })
            .collect();
        let lb: Vec<u8> = (0..n)
            .map(|_| if rng.random_bool(pb) { 1 } else { 0 })
            .collect();
        if !la.contains(&1) || !lb.contains(&1) {
            continue;
        }
        pairs += 1;
        let a = SegVolume::new(dims, spacing, la.clone()).unwrap();
        let b = SegVolume::new(dims, spacing, lb.clone()).unwrap();
        let ma: Vec<bool> = la.iter().map(|&l| l == 1).collect();
        let mb: Vec<bool> = lb.iter().map(|&l| l == 1).collect();
        let both = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count() as f64;
        let na = ma.iter().filter(|&&v| v).count() as f64;
        let nb = mb.iter().filter(|&&v| v).count() as f64;
        let want_dice = 2.0 * both / (na + nb);
        let (want_hd, want_assd) = oracle_distances(
            &oracle_boundary(&ma, dims),
            &oracle_boundary(&mb, dims),
            spacing,
        );
        worst = worst
            .max((dice(&a, &b, Label::Lv).unwrap() - want_dice).abs())
            .max((hausdorff(&a, &b, Label::Lv).unwrap() - want_hd).abs())
            .max((assd(&a, &b, Label::Lv).unwrap() - want_assd).abs());
    }

    let mut w_err = 0.0f64;
    for _ in 0..25 {
        let p: Vec<f64> = (0..rng.random_range(1..9))
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let q: Vec<f64> = (0..rng.random_range(1..9))
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        w_err = w_err.max((wasserstein_1d(&p, &q).unwrap() - lp_transport(&p, &q)).abs());
    }

    let n01 = Normal::new(0.0, 1.0).unwrap();
    let n11 = Normal::new(1.0, 1.0).unwrap();
    let p: Vec<f64> = (0..100_000).map(|_| n01.sample(&mut rng)).collect();
    let q: Vec<f64> = (0..100_000).map(|_| n11.sample(&mut rng)).collect();
    let kl = kl_divergence_hist(&p, &q, 50).unwrap();

    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && w_err <= 1e-9 && (kl - 0.5).abs() <= 0.1 && secs < 60.0;
    verdict(
        pass,
        format!(
            "{pairs} mask pairs, max |metric - brute force| {worst:.2e}; W1 vs LP max err {w_err:.2e}; \
             histogram KL {kl:.4} (closed form 0.5); {secs:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    // 1-D quadrature
    let mut quad_err = 0.0f64;
    for (mu, lv) in [
        (0.0, 0.0),
        (1.3, -0.7),
        (-2.0, 1.1),
        (0.4, -3.0),
        (0.0, 2.5),
    ] {
        let sd: f64 = (0.5f64 * lv).exp();
        let q = |x: f64| {
            (-(x - mu) * (x - mu) / (2.0 * sd * sd)).exp()
                / (sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let log_ratio = |x: f64| -(x - mu) * (x - mu) / (2.0 * sd * sd) - sd.ln() + 0.5 * x * x;
        let num = simpson(
            |x| q(x) * log_ratio(x),
            mu - 14.0 * sd,
            mu + 14.0 * sd,
            40_000,
        );
        quad_err = quad_err.max((num - kl_gaussian_standard(&[mu], &[lv])).abs());
    }

    // 32-D Monte Carlo
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mu: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lv: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let closed = kl_gaussian_standard(&mu, &lv);
    let draws = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let mut lr = 0.0;
        for k in 0..32 {
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = mu[k] + (0.5 * lv[k]).exp() * e;
            lr += -0.5 * e * e - 0.5 * lv[k] + 0.5 * z * z;
        }
        acc += lr;
    }
    let mc = acc / draws as f64;
    let mc_rel = (mc - closed).abs() / closed;

    // finite differences on the miniature model
    let cfg = ModelConfig::miniature();
    let net = Network::new(cfg.clone(), 11).unwrap();
    let frames: Vec<Vec<f64>> = (0..cfg.t_frames)
        .map(|_| {
            let labels = (0..cfg.n_voxels())
                .map(|_| rng.random_range(0..4u8))
                .collect();
            one_hot(&SegVolume::new(cfg.grid_dims, [2.0, 2.0, 3.0], labels).unwrap())
        })
        .collect();
    let mut cvec = vec![0.0; 11];
    cvec[3] = 1.0;
    cvec[8] = 0.3;
    cvec[9] = 0.6;
    cvec[10] = 0.5;
    let eps: Vec<f64> = (0..cfg.latent_dim_z0)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut grad = net.zeros_like();
    net.forward_backward(&frames, &cvec, &eps, Some((&mut grad, 1.0)))
        .unwrap();
    let loss = |n: &Network| {
        n.forward_backward(&frames, &cvec, &eps, None)
            .unwrap()
            .total
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let n_tensors = net.params().len();
    for pi in 0..n_tensors {
        let len = net.params()[pi].1.len();
        for _ in 0..len.min(4) {
            let idx = rng.random_range(0..len);
            let mut plus = net.clone();
            plus.params_mut()[pi].1.data[idx] += h;
            let mut minus = net.clone();
            minus.params_mut()[pi].1.data[idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grad.params()[pi].1.data[idx];
            worst =
                worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = quad_err <= 1e-6 && mc_rel <= 0.01 && worst <= 1e-3 && secs < 300.0;
    verdict(
        pass,
        format!(
            "quadrature max err {quad_err:.2e}; 32-D Monte Carlo {mc:.4} vs {closed:.4} ({:.3}%); \
             {checked} gradient entries, worst rel err {worst:.2e}; {secs:.1}s",
            100.0 * mc_rel
        ),
    )
}

// ---------------------------------------------------------------- desk model

fn desk_dataset() -> Dataset {
    make_dataset(
        &PhantomParams::default(),
        N_PHANTOMS,
        &ConditionSampler::default(),
        DATA_SEED,
        SplitFractions::default(),
    )
    .unwrap()
}

fn desk_config() -> TrainConfig {
    TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    }
}

struct DeskModel {
    ckpt: ModelCheckpoint,
    note: String,
}

fn desk_model(data: &Dataset) -> DeskModel {
    let cfg = desk_config();
    let key = {
        let mut h = Sha256::new();
        h.update(data.checksum().as_bytes());
        h.update(serde_json::to_vec(&cfg).unwrap());
        h.update(TRAIN_BUDGET_S.to_le_bytes());
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    };
    let path =
        PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance/desk_{key}.ckpt"));
    let retrain = std::env::var("HEARTGEN_ACCEPTANCE_RETRAIN").is_ok_and(|v| v == "1");
    if !retrain {
        if let Ok(ckpt) = load_checkpoint(&path) {
            return DeskModel {
                ckpt,
                note: format!("cached checkpoint {}", path.display()),
            };
        }
    }
    println!(
        "training desk model (budget {TRAIN_BUDGET_S:.0}s); checkpoint will be cached at {}",
        path.display()
    );
    let mut last_epoch_s = 0.0;
    let mut prev = 0.0;
    let (ckpt, hist) = train_with(data, &cfg, &mut |e, _| {
        last_epoch_s = e.wall_time_s - prev;
        prev = e.wall_time_s;
        if e.epoch % 10 == 0 {
            println!(
                "  epoch {:>3} {:>6.0}s train {:.4} val {:.4}",
                e.epoch, e.wall_time_s, e.train.total, e.val.total
            );
        }
        // Stop when another epoch would overrun the budget.
        e.wall_time_s + last_epoch_s <= TRAIN_BUDGET_S
    })
    .unwrap();
    save_checkpoint(&ckpt, &path).unwrap();
    let last = hist.epochs.last().unwrap();
    DeskModel {
        ckpt,
        note: format!(
            "trained {} epochs in {:.0}s, best epoch {}{}",
            hist.epochs.len(),
            last.wall_time_s,
            hist.best_epoch,
            if hist.stopped_early {
                " (early stop)"
            } else {
                ""
            }
        ),
    }
}

fn test_split(data: &Dataset) -> Vec<&SubjectRecord> {
    data.split(Split::Test).collect()
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3(data: &Dataset, desk: &DeskModel) -> Verdict {
    let test = test_split(data);
    let train_recs: Vec<&SubjectRecord> = data.split(Split::Train).collect();
    let copy = |r: &SubjectRecord| {
        copy_frame0(
            r.sequence.frame(0),
            r.sequence.t_frames(),
            r.sequence.frame_period_s(),
        )
    };
    let pca = pca_fit(&train_recs, DEFAULT_COMPONENTS).unwrap();
    let pca_f = |r: &SubjectRecord| pca.complete(r.sequence.frame(0));
    let ckpt = &desk.ckpt;
    let model = |r: &SubjectRecord| {
        complete_sequence(
            ckpt,
            r.sequence.frame(0),
            &r.profile,
            CompletionMode::PosteriorMean,
            0,
        )
    };
    let score = |c: &dyn heartgen_core::metrics::Completer| {
        evaluate_completion(c, &test)
            .unwrap()
            .0
            .completion
            .unwrap()
            .all_frames
            .average
            .dice
    };
    let (d_copy, d_pca, d_model) = (score(&copy), score(&pca_f), score(&model));
    let pass = d_model - d_copy >= 0.05 && d_model >= d_pca - 0.03;
    verdict(
        pass,
        format!(
            "test Dice model {d_model:.4}, copy-frame-0 {d_copy:.4} (margin {:+.4}, need >= 0.05), \
             PCA k={} {d_pca:.4} (gap {:+.4}, need >= -0.03); {}",
            d_model - d_copy,
            pca.k(),
            d_model - d_pca,
            desk.note
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4(data: &Dataset, ckpt: &ModelCheckpoint) -> Verdict {
    let test = test_split(data);
    let n = test.len();
    let z0s = prior_draws(ckpt, n, 404);
    // Control: conditions of another test subject (a cyclic shift of a
    // random order, so nobody keeps their own), with the same latent draw.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(405));
    let mut donor = vec![0; n];
    for k in 0..n {
        donor[order[k]] = order[(k + 1) % n];
    }
    let real: Vec<(usize, PhenotypeRecord)> = test
        .iter()
        .map(|r| (r.profile.age_group(), phenotypes(&r.sequence).unwrap()))
        .collect();
    let mut synth = Vec::new();
    let mut control = Vec::new();
    let mut invalid = 0;
    for (i, r) in test.iter().enumerate() {
        let z = std::slice::from_ref(&z0s[i]);
        let s = &generate_from_latents(ckpt, &r.profile, z).unwrap()[0].1;
        let c = &generate_from_latents(ckpt, &test[donor[i]].profile, z).unwrap()[0].1;
        match (phenotypes(s), phenotypes(c)) {
            (Ok(ps), Ok(pc)) => {
                synth.push((r.profile.age_group(), ps));
                control.push((r.profile.age_group(), pc));
            }
            _ => invalid += 1,
        }
    }
    if synth.is_empty() {
        return verdict(false, "no valid generated samples");
    }
    let ws = age_stratified_wasserstein(&real, &synth).unwrap();
    let wc = age_stratified_wasserstein(&real, &control).unwrap();
    // Reference only: the phantom generator itself (fresh jitter) scored the
    // same way shows how far below 1 an ideal generator gets at this n.
    let params = PhantomParams::default();
    let fresh = |i: usize, p: &ConditionProfile| {
        (
            test[i].profile.age_group(),
            phenotypes(&make_phantom(&params, p, 9_000 + i as u64).unwrap()).unwrap(),
        )
    };
    let ideal: Vec<_> = (0..n).map(|i| fresh(i, &test[i].profile)).collect();
    let ideal_control: Vec<_> = (0..n).map(|i| fresh(i, &test[donor[i]].profile)).collect();
    let wi = age_stratified_wasserstein(&real, &ideal).unwrap();
    let wic = age_stratified_wasserstein(&real, &ideal_control).unwrap();
    let reference: Vec<String> = PHENOTYPE_NAMES
        .iter()
        .map(|k| format!("{k} {:.2}", wi[*k] / wic[*k]))
        .collect();

    let mut ok = 0;
    let mut parts = Vec::new();
    for name in PHENOTYPE_NAMES {
        let ratio = ws[name] / wc[name];
        if ratio <= 0.5 {
            ok += 1;
        }
        parts.push(format!("{name} {:.2}/{:.2}={ratio:.2}", ws[name], wc[name]));
    }
    verdict(
        ok == PHENOTYPE_NAMES.len(),
        format!(
            "age-stratified W1 synthetic/control (need <= 0.50 each): {}; {ok}/5 pass; {invalid} invalid pairs; \
             phantom-generator reference ratios: {}",
            parts.join(", "),
            reference.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(data: &Dataset, ckpt: &ModelCheckpoint) -> Verdict {
    let test = test_split(data);
    let gen =
        |r: &SubjectRecord, n: usize, seed: u64| generate_sequences(ckpt, &r.profile, n, seed);
    let (report, rows) = evaluate_generation(&gen, &test, 20, 505).unwrap();
    let g = report.generation.unwrap();
    let mut violations = 0;
    for row in &rows {
        let get = |k: &str| {
            row.values
                .iter()
                .find(|(n, _)| n == k)
                .map(|(_, v)| *v)
                .unwrap()
        };
        for st in ["lv", "myo", "rv", "avg"] {
            if get(&format!("best_dice_{st}")) < get(&format!("mean_dice_{st}"))
                || get(&format!("best_hd_{st}")) > get(&format!("mean_hd_{st}"))
                || get(&format!("best_assd_{st}")) > get(&format!("mean_assd_{st}"))
            {
                violations += 1;
            }
        }
        for name in PHENOTYPE_NAMES {
            let (b, m) = (
                get(&format!("best_diff_{name}")),
                get(&format!("mean_diff_{name}")),
            );
            if !b.is_nan() && b > m {
                violations += 1;
            }
        }
    }
    let gain = g.best.average.dice - g.mean.average.dice;
    verdict(
        violations == 0 && gain >= 0.02,
        format!(
            "{} subjects x 20: order-statistic violations {violations}; best-of-20 Dice {:.4} vs mean {:.4} \
             (gain {gain:.4}, need >= 0.02); {} invalid samples",
            g.n_subjects, g.best.average.dice, g.mean.average.dice, g.invalid_samples
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6(ckpt: &ModelCheckpoint) -> Verdict {
    let ages: Vec<f64> = (0..7).map(|g| 15.0 + 10.0 * g as f64).collect();
    let base = ConditionProfile::new(45, Gender::Female, 70.0, 165.0, 120.0).unwrap();
    // Designed trend: the noise-free phantom at each age.
    let params = PhantomParams {
        jitter: JitterParams {
            amplitude: 0.0,
            ..JitterParams::default()
        },
        ..PhantomParams::default()
    };
    let designed: Vec<[f64; 5]> = ages
        .iter()
        .map(|&a| {
            let p = SweepFactor::Age.apply(&base, a).unwrap();
            phenotypes(&make_phantom(&params, &p, 0).unwrap())
                .unwrap()
                .values()
        })
        .collect();
    let res = condition_sweep(ckpt, &base, SweepFactor::Age, &ages, 200, 606, true).unwrap();
    let mut ok = 0;
    let mut parts = Vec::new();
    for (k, name) in PHENOTYPE_NAMES.iter().enumerate() {
        let truth: Vec<f64> = designed.iter().map(|v| v[k]).collect();
        let model: Vec<f64> = res.entries.iter().map(|e| e.mean.values()[k]).collect();
        let sign = spearman(&ages, &truth).unwrap().map(f64::signum);
        let rho = spearman(&ages, &model).unwrap();
        let hit = matches!((sign, rho), (Some(s), Some(r)) if s != 0.0 && r.signum() == s && r.abs() >= 0.8);
        ok += usize::from(hit);
        parts.push(format!(
            "{name} designed {} rho {}",
            sign.map_or("flat".into(), |s| if s > 0.0 {
                "+".to_string()
            } else {
                "-".to_string()
            }),
            rho.map_or("undef".into(), |r| format!("{r:+.2}"))
        ));
    }
    let invalid: usize = res.entries.iter().map(|e| e.invalid_samples).sum();
    verdict(
        ok >= 3,
        format!(
            "{}; {ok}/5 match (need 3); {invalid} invalid samples",
            parts.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7(data: &Dataset, ckpt: &ModelCheckpoint) -> Verdict {
    let mut checks = Vec::new();
    checks.push(("desk dataset", desk_dataset().checksum() == data.checksum()));

    let mini_params = PhantomParams {
        dims: [8, 8, 4],
        spacing_mm: [24.0, 24.0, 44.0],
        t_frames: 2,
        ..PhantomParams::default()
    };
    let mini = || {
        make_dataset(
            &mini_params,
            10,
            &ConditionSampler::default(),
            9,
            SplitFractions::default(),
        )
        .unwrap()
    };
    let (m1, m2) = (mini(), mini());
    checks.push(("mini dataset", m1.checksum() == m2.checksum()));
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 2,
        seed: 3,
        model: ModelConfig::miniature(),
        ..TrainConfig::default()
    };
    let (c1, _) = train(&m1, &cfg).unwrap();
    let (c2, _) = train(&m2, &cfg).unwrap();
    checks.push((
        "trained checkpoint",
        c1.hash().unwrap() == c2.hash().unwrap(),
    ));
    checks.push((
        "checkpoint bytes",
        ckpt.to_bytes().unwrap() == ckpt.clone().to_bytes().unwrap(),
    ));

    let profile = ConditionProfile::new(52, Gender::Male, 84.0, 178.0, 131.0).unwrap();
    let g1 = generate_sequences(ckpt, &profile, 3, 77).unwrap();
    let g2 = generate_sequences(ckpt, &profile, 3, 77).unwrap();
    checks.push(("generated sequences", g1 == g2));

    let test: Vec<&SubjectRecord> = test_split(data).into_iter().take(8).collect();
    let comp = |r: &SubjectRecord| {
        complete_sequence(
            ckpt,
            r.sequence.frame(0),
            &r.profile,
            CompletionMode::Sample,
            5,
        )
    };
    let gen =
        |r: &SubjectRecord, n: usize, seed: u64| generate_sequences(ckpt, &r.profile, n, seed);
    let report_bytes = || {
        let (a, _) = evaluate_completion(&comp, &test).unwrap();
        let (b, _) = evaluate_generation(&gen, &test, 2, 8).unwrap();
        (
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap(),
        )
    };
    checks.push(("reports", report_bytes() == report_bytes()));

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} artefacts reproduced bit-for-bit", checks.len())
        } else {
            format!("not reproduced: {}", failed.join(", "))
        },
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes this
    // target means nothing should run.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }
    let strict = std::env::var("HEARTGEN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(u8, &str, bool, Verdict)> = Vec::new();
    let mut report = |id: u8, name: &'static str, hard: bool, v: Verdict| {
        println!(
            "criterion {id} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, hard, v));
    };

    report(1, "metric oracles", true, criterion_1());
    report(2, "loss correctness", true, criterion_2());
    let data = desk_dataset();
    let desk = desk_model(&data);
    report(3, "desk-scale completion", false, criterion_3(&data, &desk));
    report(
        4,
        "generation distribution",
        false,
        criterion_4(&data, &desk.ckpt),
    );
    report(
        5,
        "best-of-20 protocol",
        false,
        criterion_5(&data, &desk.ckpt),
    );
    report(6, "condition manipulation", false, criterion_6(&desk.ckpt));
    report(7, "determinism", true, criterion_7(&data, &desk.ckpt));

    let failing: Vec<u8> = results
        .iter()
        .filter(|(_, _, hard, v)| !v.pass && (*hard || strict))
        .map(|(id, ..)| *id)
        .collect();
    let passed = results.iter().filter(|r| r.3.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if !failing.is_empty() {
        eprintln!("acceptance failed: criteria {failing:?}");
        std::process::exit(1);
    }
}
