//! End-to-end acceptance suite. Each test prints one `PASS`/`FAIL` line and
//! asserts on the same condition. The tests share a lock so timings in the
//! reduced-chain check are taken on an otherwise idle process.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;

use beamdiff::d3pm::{
    forward_kernel, forward_marginal, posterior, reverse_distribution, reverse_distribution_direct, sample_x0,
    ContextDenoiser, D3pmModel, DiffusionConfig, DiffusionSchedule, OracleDenoiser, ScheduleKind,
};
use beamdiff::baselines::TrmModel;
use beamdiff::encoder::{EncoderConfig, HistoryTokens, SlotTokens};
use beamdiff::env::{EpisodeLog, SlotLog, SoftLabel};
use beamdiff::harness::*;
use beamdiff::nn::{gradient_check, Graph};
use beamdiff::rng::{normal, rng_from_seed, sample_categorical};
use beamdiff::training::{fit, Example, TrainConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: usize, name: &str, pass: bool, elapsed: Duration, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line shows even when output is captured.
    let line = format!("criterion {id} [{verdict}] {name} ({:.1}s): {detail}\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

fn sums_to_one(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && p.iter().all(|&v| v >= -1e-15)
}

#[test]
fn c1_diffusion_kernels() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut schedules = Vec::new();
    for steps in [1, 2, 4, 8, 16] {
        schedules.push(DiffusionSchedule::build(steps, &ScheduleKind::default()).unwrap());
        schedules.push(DiffusionSchedule::build(steps, &ScheduleKind::Compressed { alpha_bar_star: 0.15 }).unwrap());
    }
    let mut rng = rng_from_seed(11);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    let mut ok = true;
    for k in [2usize, 4, 8] {
        let mut pis: Vec<Vec<f64>> = (0..k).map(|j| (0..k).map(|i| (i == j) as u8 as f64).collect()).collect();
        for _ in 0..4 {
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let z: f64 = w.iter().sum();
            pis.push(w.iter().map(|v| v / z).collect());
        }
        for s in &schedules {
            for tau in 1..=s.steps() {
                for x in 0..k {
                    ok &= sums_to_one(&forward_kernel(x, tau, s, k));
                    ok &= sums_to_one(&forward_marginal(x, tau, s, k));
                }
                for x0 in 0..k {
                    let prior = forward_marginal(x0, tau - 1, s, k);
                    let target = forward_marginal(x0, tau, s, k);
                    for x_tau in 0..k {
                        let post = posterior(x_tau, x0, tau, s, k);
                        ok &= sums_to_one(&post);
                        let joint: f64 = (0..k).map(|j| forward_kernel(j, tau, s, k)[x_tau] * prior[j]).sum();
                        worst = worst.max((joint - target[x_tau]).abs());
                        for j in 0..k {
                            let bayes = forward_kernel(j, tau, s, k)[x_tau] * prior[j] / target[x_tau];
                            worst = worst.max((post[j] - bayes).abs());
                        }
                        checked += 1;
                    }
                }
                if tau >= 2 {
                    for pi in &pis {
                        for x_tau in 0..k {
                            let r = reverse_distribution(x_tau, tau, pi, s);
                            ok &= sums_to_one(&r);
                            let d = reverse_distribution_direct(x_tau, tau, pi, s);
                            worst = r.iter().zip(&d).fold(worst, |w, (a, b)| w.max((a - b).abs()));
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = ok && worst < 1e-9 && elapsed < Duration::from_secs(10);
    report(1, "diffusion kernels", pass, elapsed, format!("{checked} posteriors, max Bayes deviation {worst:.2e}"));
    assert!(pass);
}

#[test]
fn c2_perfect_denoiser_identifiability() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut hits = Vec::new();
    for steps in [1, 4, 16] {
        let s = DiffusionSchedule::build(steps, &ScheduleKind::default()).unwrap();
        let mut rng = rng_from_seed(100 + steps as u64);
        let mut n = 0;
        for trial in 0..1000 {
            let oracle = OracleDenoiser { n_beams: 32, target: trial % 32 };
            n += (sample_x0(&oracle, &s, 1, &mut rng)[0].x0 == oracle.target) as usize;
        }
        hits.push(n);
    }
    let elapsed = start.elapsed();
    let pass = hits.iter().all(|&n| n == 1000) && elapsed < Duration::from_secs(30);
    report(2, "perfect-denoiser identifiability", pass, elapsed, format!("hits for T_d 1/4/16: {hits:?} of 1000"));
    assert!(pass);
}

fn one_slot(beams: [usize; 2], fb: [f64; 2]) -> HistoryTokens {
    HistoryTokens { slots: vec![SlotTokens { beams: beams.to_vec(), feedback: fb.to_vec(), mask: vec![true; 2] }] }
}

#[test]
fn c3_distribution_recovery() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let k = 8;
    let contexts = [one_slot([1, 5], [0.8, -0.5]), one_slot([6, 2], [-0.3, 0.9])];
    let truth = [
        vec![0.35, 0.25, 0.15, 0.1, 0.05, 0.05, 0.03, 0.02],
        vec![0.02, 0.03, 0.05, 0.1, 0.1, 0.2, 0.2, 0.3],
    ];
    let mut rng = rng_from_seed(21);
    let examples: Vec<Example> = (0..2048)
        .map(|i| Example {
            history: contexts[i % 2].clone(),
            label: SoftLabel::one_hot(sample_categorical(&mut rng, &truth[i % 2])),
        })
        .collect();
    let enc = EncoderConfig { dim: 32, heads: 4, layers: 1, dropout: 0.0 };
    let diff = DiffusionConfig { steps: 16, ..Default::default() };
    let mut model = D3pmModel::new(&enc, &diff, k, 2, 1, 5).unwrap();
    let cfg = TrainConfig { epochs: 20, ..Default::default() };
    fit(&mut model, &examples, &cfg, &mut rng, |_, _| {}).unwrap();
    let label_tv: Vec<f64> = (0..2)
        .map(|c| {
            let mut counts = vec![0.0; k];
            examples.iter().skip(c).step_by(2).for_each(|e| counts[e.label.idx[0]] += 1.0 / 1024.0);
            0.5 * counts.iter().zip(&truth[c]).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .collect();
    let fast = model.fast_denoiser().unwrap();
    let mut tvs = Vec::new();
    for (h, p) in contexts.iter().zip(&truth) {
        let bias = fast.context_bias(&model.context(h).unwrap()).unwrap();
        let den = ContextDenoiser { fast: &fast, context_bias: bias };
        let mut counts = vec![0usize; k];
        for s in sample_x0(&den, &model.schedule, 10_000, &mut rng) {
            counts[s.x0] += 1;
        }
        tvs.push(0.5 * counts.iter().zip(p).map(|(&c, &q)| (c as f64 / 1e4 - q).abs()).sum::<f64>());
    }
    let elapsed = start.elapsed();
    let pass = tvs.iter().all(|&tv| tv < 0.1) && elapsed < Duration::from_secs(180);
    report(3, "distribution recovery", pass, elapsed, format!("TV per context {tvs:.4?} (training labels themselves {label_tv:.4?})"));
    assert!(pass);
}

fn random_history(rng: &mut beamdiff::rng::SimRng, k: usize, probes: usize, len: usize) -> HistoryTokens {
    let slots = (0..len)
        .map(|_| {
            let mut beams: Vec<usize> = Vec::new();
            while beams.len() < probes {
                let b = rng.random_range(0..k);
                if !beams.contains(&b) {
                    beams.push(b);
                }
            }
            let feedback = (0..probes).map(|_| (0.5 * normal(rng)).clamp(-1.0, 1.0)).collect();
            SlotTokens { beams, feedback, mask: vec![true; probes] }
        })
        .collect();
    HistoryTokens { slots }
}

#[test]
fn c4_gradient_correctness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (k, p, l) = (32, 2, 2);
    let enc = EncoderConfig { dim: 32, heads: 4, layers: 2, dropout: 0.05 };
    let mut rng = rng_from_seed(31);
    let histories = [random_history(&mut rng, k, p, l), random_history(&mut rng, k, p, l)];

    let mut d3pm = D3pmModel::new(&enc, &DiffusionConfig { steps: 8, ..Default::default() }, k, p, l, 2).unwrap();
    let frozen = d3pm.clone();
    let den = gradient_check(
        &mut d3pm.store,
        |g: &mut Graph, s| {
            let a = frozen.encoder.encode(g, s, &histories[0])?;
            let b = frozen.encoder.encode(g, s, &histories[1])?;
            let c = g.concat_rows(&[a, b])?;
            let logits = frozen.denoiser.logits(g, s, &[3, 17, 30], &[8, 2, 1], c, &[0, 1, 1])?;
            g.cross_entropy(logits, vec![vec![(3, 0.7)], vec![(4, 0.3)], vec![(30, 1.0)]])
        },
        600,
        1,
    )
    .unwrap();

    let mut trm = TrmModel::new(&enc, k, p, l, 3).unwrap();
    let frozen = trm.clone();
    let head = gradient_check(
        &mut trm.store,
        |g: &mut Graph, s| {
            let logits = frozen.logits(g, s, &histories[0])?;
            g.cross_entropy(logits, vec![vec![(5, 0.6), (6, 0.3), (4, 0.1)]])
        },
        600,
        2,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let pass = den.max_rel_error < 1e-3 && head.max_rel_error < 1e-3 && elapsed < Duration::from_secs(120);
    report(
        4,
        "gradient correctness",
        pass,
        elapsed,
        format!(
            "encoder+denoiser {:.2e} over {}, encoder+TRM {:.2e} over {}",
            den.max_rel_error, den.checked, head.max_rel_error, head.checked
        ),
    );
    assert!(pass);
}

/// gen → train → eval on the desk profile, writing traces, checkpoint and
/// metric CSV into `dir`.
fn desk_pipeline(dir: &Path, kinds: &[ProposerKind]) -> Vec<EvalOutcome> {
    let exp = Experiment::new(ExperimentConfig::desk()).unwrap();
    gen_data(&exp, dir).unwrap();
    let logs = load_trace(&exp.config, &dir.join(Split::Train.file_name())).unwrap();
    let (models, _) = train_models(&exp.config, &logs, true, false).unwrap();
    save_checkpoint(&dir.join("model.ckpt"), &models).unwrap();
    let trajectories = exp.trajectories(Split::Eval);
    let mut outcomes = Vec::new();
    for &kind in kinds {
        outcomes.extend(evaluate(&exp, &trajectories, kind, &models, exp.config.eval.seeds, true).unwrap());
    }
    write_metrics_csv(&dir.join("metrics.csv"), &outcomes).unwrap();
    outcomes
}

fn per_seed(outcomes: &[EvalOutcome], kind: ProposerKind, f: impl Fn(&MetricsReport) -> f64) -> Vec<f64> {
    outcomes.iter().filter(|o| o.proposer == kind).map(|o| f(&o.report)).collect()
}

#[test]
fn c5_end_to_end_desk() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let outcomes = desk_pipeline(dir.path(), &[ProposerKind::D3pm, ProposerKind::Ema, ProposerKind::RandomStub]);
    let cfg = ExperimentConfig::desk();
    let chance = 1.0 - cfg.probing.probes as f64 / cfg.n_beams() as f64;
    let miss = per_seed(&outcomes, ProposerKind::D3pm, |r| r.p_miss);
    let se = sample_std(&miss) / (miss.len() as f64).sqrt();
    let margin = chance - mean(&miss);
    let miss_ok = margin > 0.0 && margin >= 5.0 * se;
    let gap = mean(&per_seed(&outcomes, ProposerKind::D3pm, |r| r.oracle_gap_db));
    let ema_gap = mean(&per_seed(&outcomes, ProposerKind::Ema, |r| r.oracle_gap_db));
    let random_miss = mean(&per_seed(&outcomes, ProposerKind::RandomStub, |r| r.p_miss));
    let gap_ok = gap < ema_gap;
    let elapsed = start.elapsed();
    let pass = miss_ok && gap_ok && elapsed < Duration::from_secs(15 * 60);
    report(
        5,
        "end-to-end desk sanity",
        pass,
        elapsed,
        format!(
            "d3pm p_miss {:.4} (SE {se:.4}) vs chance {chance:.4} [{}]; random-stub p_miss {random_miss:.4}; \
             oracle gap d3pm {gap:.3} dB vs ema {ema_gap:.3} dB [{}]",
            mean(&miss),
            if miss_ok { "ok" } else { "short" },
            if gap_ok { "ok" } else { "short" },
        ),
    );
    assert!(pass);
}

fn nonincreasing(xs: &[(f64, f64)]) -> bool {
    xs.windows(2).all(|w| w[1].1 <= w[0].1)
}

#[test]
fn c6_probing_budget_trend() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let names = ["d3pm", "trm", "ema", "ucb", "random-stub"];
    let spec = SweepSpec {
        axis: SweepAxis::Probes,
        values: vec![1.0, 2.0, 4.0, 8.0],
        proposers: names.iter().map(|s| s.to_string()).collect(),
        base: ExperimentConfig::desk(),
    };
    let rows = run_sweep(&spec).unwrap();
    let failed: Vec<&SweepRow> = rows.iter().filter(|r| r.metric == "failed").collect();
    let mut pass = failed.is_empty();
    let mut detail = Vec::new();
    for name in names {
        let gap = seed_means(&rows, name, "oracle_gap_db");
        let miss = seed_means(&rows, name, "p_miss");
        let ok = gap.len() == 4 && miss.len() == 4 && nonincreasing(&gap) && nonincreasing(&miss);
        pass &= ok;
        let fmt = |xs: &[(f64, f64)]| xs.iter().map(|x| format!("{:.3}", x.1)).collect::<Vec<_>>().join("/");
        detail.push(format!("{name}{} gap {} p_miss {}", if ok { "" } else { " [not monotone]" }, fmt(&gap), fmt(&miss)));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30 * 60);
    report(6, "probing-budget trend over P=1/2/4/8", pass, elapsed, detail.join("; "));
    for f in &failed {
        println!("  failed point {}: {}", f.value, f.note);
    }
    assert!(pass);
}

/// Spearman correlation without ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn c7_reduced_chain_tradeoff() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let base = ExperimentConfig::desk();
    let chance = 1.0 - base.probing.probes as f64 / base.n_beams() as f64;
    let spec = SweepSpec {
        axis: SweepAxis::DiffusionSteps,
        values: vec![2.0, 4.0, 8.0, 16.0],
        proposers: vec!["d3pm".into()],
        base,
    };
    let rows = run_sweep(&spec).unwrap();
    let timing = seed_means(&rows, "d3pm", "infer_ms_per_slot");
    let miss = seed_means(&rows, "d3pm", "p_miss");
    let complete = timing.len() == 4 && miss.len() == 4;
    let rho = if complete {
        spearman(&timing.iter().map(|t| t.0).collect::<Vec<_>>(), &timing.iter().map(|t| t.1).collect::<Vec<_>>())
    } else {
        f64::NAN
    };
    let lookup = |td: f64| miss.iter().find(|m| m.0 == td).map(|m| m.1).unwrap_or(f64::NAN);
    let (gain4, gain16) = (chance - lookup(4.0), chance - lookup(16.0));
    let ratio = gain4 / gain16;
    let elapsed = start.elapsed();
    let pass = complete && rho > 0.95 && gain16 > 0.0 && ratio >= 0.9 && elapsed < Duration::from_secs(30 * 60);
    report(
        7,
        "reduced-chain tradeoff",
        pass,
        elapsed,
        format!(
            "ms/slot {}; Spearman {rho:.3}; p_miss {}; T_d=4 keeps {:.1}% of the T_d=16 gain",
            timing.iter().map(|t| format!("{}:{:.3}", t.0, t.1)).collect::<Vec<_>>().join(" "),
            miss.iter().map(|t| format!("{}:{:.4}", t.0, t.1)).collect::<Vec<_>>().join(" "),
            100.0 * ratio
        ),
    );
    assert!(pass);
}

fn fuzz_log(rng: &mut beamdiff::rng::SimRng, traj: usize, k: usize, p: usize, warmup: usize) -> EpisodeLog {
    let len = warmup + rng.random_range(1..40);
    let slots = (0..len)
        .map(|t| {
            let mut probes: Vec<usize> = Vec::new();
            while probes.len() < p {
                let b = rng.random_range(0..k);
                if !probes.contains(&b) {
                    probes.push(b);
                }
            }
            let oracle = if rng.random::<f64>() < 0.4 { probes[rng.random_range(0..p)] } else { rng.random_range(0..k) };
            let oracle_snr = 10f64.powf(rng.random_range(0.0..6.0));
            let probe_snr: Vec<f64> = probes
                .iter()
                .map(|&b| if b == oracle { oracle_snr } else { oracle_snr * rng.random_range(0.0..1.0) })
                .collect();
            let served = rng.random_range(0..p);
            let mut proposals = probes.clone();
            while proposals.len() < (p + 3).min(k) {
                let b = rng.random_range(0..k);
                if !proposals.contains(&b) {
                    proposals.push(b);
                }
            }
            SlotLog {
                traj,
                t,
                fb_db: probe_snr.iter().map(|s| 10.0 * s.log10()).collect(),
                served: probes[served],
                exec_snr: probe_snr[served],
                oracle,
                oracle_snr,
                label: SoftLabel::one_hot(oracle),
                proposals,
                probe_snr,
                probes,
            }
        })
        .collect();
    EpisodeLog { traj, slots }
}

/// Straight loop over every scored slot, sharing no code with the library.
fn brute_force(logs: &[EpisodeLog], warmup: usize, m_list: &[usize]) -> (f64, Option<f64>, Vec<f64>) {
    let scored: Vec<&SlotLog> = logs.iter().flat_map(|l| l.slots.iter()).filter(|s| s.t >= warmup).collect();
    let n = scored.len() as f64;
    let missed: Vec<&&SlotLog> = scored.iter().filter(|s| s.probes.iter().all(|&b| b != s.oracle)).collect();
    let p_miss = missed.len() as f64 / n;
    let r_probe = if missed.is_empty() {
        None
    } else {
        let regrets: Vec<f64> = missed
            .iter()
            .map(|s| {
                let mut best = s.probe_snr[0];
                for &v in &s.probe_snr[1..] {
                    if v > best {
                        best = v;
                    }
                }
                s.oracle_snr - best
            })
            .collect();
        Some(regrets.iter().sum::<f64>() / regrets.len() as f64)
    };
    let coverage = m_list
        .iter()
        .map(|&m| scored.iter().filter(|s| s.proposals[..m.min(s.proposals.len())].contains(&s.oracle)).count() as f64 / n)
        .collect();
    (p_miss, r_probe, coverage)
}

#[test]
fn c8_metric_oracle_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = rng_from_seed(81);
    let m_list = [1, 2, 4, 8];
    let (mut exact, mut worst_rel) = (0usize, 0.0f64);
    for case in 0..100 {
        let k = rng.random_range(4..40);
        let p = rng.random_range(1..4.min(k));
        let warmup = rng.random_range(0..10);
        let logs: Vec<EpisodeLog> = (0..rng.random_range(1..4)).map(|j| fuzz_log(&mut rng, j, k, p, warmup)).collect();
        let got = compute_metrics(&logs, warmup, &m_list).unwrap();
        let (p_miss, r_probe, coverage) = brute_force(&logs, warmup, &m_list);
        let cov: Vec<f64> = got.coverage.iter().map(|c| c.1).collect();
        if got.p_miss == p_miss && cov == coverage && got.r_probe.is_some() == r_probe.is_some() {
            exact += 1;
        } else {
            println!("  case {case}: p_miss {} vs {p_miss}, coverage {cov:?} vs {coverage:?}", got.p_miss);
        }
        if let (Some(a), Some(b)) = (got.r_probe, r_probe) {
            worst_rel = worst_rel.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    let elapsed = start.elapsed();
    let pass = exact == 100 && worst_rel <= 1e-9 && elapsed < Duration::from_secs(10);
    report(8, "metric oracle equivalence", pass, elapsed, format!("{exact}/100 exact, R_probe max rel error {worst_rel:.2e}"));
    assert!(pass);
}

#[test]
fn c9_pipeline_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let kinds = [ProposerKind::D3pm, ProposerKind::Ema, ProposerKind::Ucb, ProposerKind::RandomStub];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    desk_pipeline(a.path(), &kinds);
    desk_pipeline(b.path(), &kinds);
    let files = [Split::Train.file_name(), Split::Eval.file_name(), "model.ckpt", "metrics.csv"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let pass = differing.is_empty() && elapsed < Duration::from_secs(30 * 60);
    report(
        9,
        "pipeline determinism",
        pass,
        elapsed,
        if pass { format!("{} files byte-identical across two runs", files.len()) } else { format!("differ: {differing:?}") },
    );
    assert!(pass);
}
