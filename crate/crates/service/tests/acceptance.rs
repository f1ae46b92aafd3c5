//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! measured runtime; the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use budgeter_core::accuracy::{epsilon_for_error, error_bound, ConfidenceLevel, StatisticKind};
use budgeter_core::budget::{
    amplify_by_sampling, recommend_params, validate_params, ParamCode, PrivacyBudget, SamplingInfo,
    StatisticId, VerdictStatus,
};
use budgeter_core::data::{load_csv, parse_codebook};
use budgeter_core::mechanisms::{
    dp_cdf, dp_histogram, dp_mean, dp_quantile, histogram_noise_scale, mean_noise_scale,
    quantile_utilities, Grid, RandomSource, Value, VariableMetadata,
};
use budgeter_core::session::{NewStatistic, ParamsRequest, Phase, Session, SessionError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn age() -> VariableMetadata {
    VariableMetadata::numerical(0.0, 150.0)
}

fn fixture_ages() -> Vec<f64> {
    let mut reader = csv::Reader::from_path(fixture("survey.csv")).unwrap();
    let idx = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "age")
        .unwrap();
    reader
        .records()
        .map(|r| r.unwrap()[idx].parse().unwrap())
        .collect()
}

fn tier_fidelity() -> Outcome {
    let expected = [(2, 1.0, 1e-5), (3, 0.25, 1e-6), (4, 0.05, 1e-7)];
    for (tier, eps, delta) in expected {
        let got = recommend_params(tier).map_err(|e| format!("tier {tier} refused: {e}"))?;
        ensure!(
            got.epsilon == eps && got.delta == delta,
            "tier {tier} gave {got:?}"
        );
    }
    ensure!(
        recommend_params(1).is_err() && recommend_params(5).is_err(),
        "tiers 1 and 5 must be refused"
    );
    Ok("tiers 2-4 exact, 1 and 5 refused".into())
}

fn swap_guardrail() -> Outcome {
    let swapped = validate_params(1e-6, 0.25);
    ensure!(
        swapped.has(ParamCode::SwapSuspected),
        "swap not flagged: {swapped}"
    );
    // Log-spaced grid over the recommended ranges, endpoints included.
    let steps = 200;
    let mut checked = 0;
    for i in 0..=steps {
        let eps = 0.05 * (1.0f64 / 0.05).powf(i as f64 / steps as f64);
        let eps = if i == steps { 1.0 } else { eps };
        for j in 0..=steps {
            let delta = 1e-7 * (100.0f64).powf(j as f64 / steps as f64);
            let delta = if j == steps { 1e-5 } else { delta };
            let v = validate_params(eps, delta);
            ensure!(
                v.status == VerdictStatus::Ok && v.messages.is_empty(),
                "({eps}, {delta}) -> {v}"
            );
            checked += 1;
        }
    }
    Ok(format!(
        "SWAP_SUSPECTED raised; {checked} in-range pairs ok"
    ))
}

fn secrecy_of_the_sample() -> Outcome {
    let global = PrivacyBudget::new(0.25, 1e-6);
    let sampled = amplify_by_sampling(global, SamplingInfo::new(1000, 700_000).unwrap());
    let diff = (sampled.epsilon - 176f64.ln()).abs();
    ensure!(
        diff < 1e-12,
        "internal epsilon {} differs from ln(176) by {diff}",
        sampled.epsilon
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = rng.random_range(1..100_000u64);
        let m = rng.random_range(n..10_000_000);
        let m2 = rng.random_range(m..=m.saturating_mul(2));
        let eps = rng.random_range(0.001..5.0);
        let g = PrivacyBudget::new(eps, 1e-6);
        let a = amplify_by_sampling(g, SamplingInfo::new(n, m).unwrap()).epsilon;
        let b = amplify_by_sampling(g, SamplingInfo::new(n, m2).unwrap()).epsilon;
        ensure!(a <= b, "not monotone: n={n} m={m} -> {a}, m={m2} -> {b}");
        let same = amplify_by_sampling(g, SamplingInfo::new(n, n).unwrap());
        ensure!(same == g, "m = n changed the budget: {same:?}");
    }
    Ok(format!(
        "ln(176) within {diff:.1e}; 1000 pairs monotone; m = n exact"
    ))
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for kind in 0..4 {
        for _ in 0..1000 {
            let statistic = match kind {
                0 => StatisticKind::Mean,
                1 => StatisticKind::Histogram,
                2 => StatisticKind::Quantile {
                    p: rng.random_range(0.01..0.99),
                },
                _ => StatisticKind::Cdf,
            };
            let lo = rng.random_range(-1e4..1e4);
            let meta = VariableMetadata::numerical(lo, lo + rng.random_range(1e-3..1e5))
                .with_grid(rng.random_range(2..500));
            let n = rng.random_range(1..1_000_000);
            let eps = rng.random_range(1e-4..10.0);
            let alpha = ConfidenceLevel::new(rng.random_range(1e-6..=0.5)).unwrap();
            let e = error_bound(statistic, &meta, n, eps, alpha).map_err(|e| e.to_string())?;
            let back = epsilon_for_error(statistic, &meta, n, e.value, alpha)
                .map_err(|e| e.to_string())?;
            worst = worst.max(((back - eps) / eps).abs());
        }
    }
    ensure!(worst < 1e-9, "worst relative error {worst:e}");
    Ok(format!(
        "4000 configurations, worst relative error {worst:.1e}"
    ))
}

fn tail_coverage() -> Outcome {
    let trials = 100_000;
    let (eps, threshold) = (0.1, 0.05 + 0.003);
    let alpha = ConfidenceLevel::new(0.05).unwrap();
    let meta = age();
    let ages = fixture_ages();
    let n = ages.len();
    ensure!(n == 1000, "fixture has {n} rows");
    let clipped: Vec<f64> = ages.iter().map(|a| a.clamp(0.0, 150.0)).collect();
    let mut rng = RandomSource::seeded(20_181_002);
    let mut report = Vec::new();
    let mut failures = Vec::new();
    let mut record = |name: &str, rate: f64| {
        report.push(format!("{name} {rate:.4}"));
        if rate > threshold {
            failures.push(format!("{name} exceedance {rate:.4} > {threshold}"));
        }
    };

    let bound = error_bound(StatisticKind::Mean, &meta, n, eps, alpha)
        .unwrap()
        .value;
    let truth = clipped.iter().sum::<f64>() / n as f64;
    let mut over = 0;
    for _ in 0..trials {
        if (dp_mean(&ages, &meta, eps, &mut rng).unwrap() - truth).abs() > bound {
            over += 1;
        }
    }
    record("mean", over as f64 / trials as f64);

    // The histogram bound holds per count; exceedances are pooled over bins.
    let bound = error_bound(StatisticKind::Histogram, &meta, n, eps, alpha)
        .unwrap()
        .value;
    let cells: Vec<Value> = ages.iter().map(|&a| Value::Number(a)).collect();
    let truth: Vec<f64> = dp_histogram(&cells, &meta, eps, &mut RandomSource::zero_noise())
        .unwrap()
        .into_iter()
        .map(|(_, c)| c)
        .collect();
    let (mut over, mut total) = (0usize, 0usize);
    for _ in 0..trials {
        let noisy = dp_histogram(&cells, &meta, eps, &mut rng).unwrap();
        for ((_, c), t) in noisy.iter().zip(&truth) {
            total += 1;
            if (c - t).abs() > bound {
                over += 1;
            }
        }
    }
    record("histogram", over as f64 / total as f64);

    // Quantile accuracy is a rank statement: utility loss of the chosen cell.
    let p = 0.5;
    let bound = error_bound(StatisticKind::Quantile { p }, &meta, n, eps, alpha)
        .unwrap()
        .value;
    let utilities = quantile_utilities(&ages, p, &meta).unwrap();
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid =
        Grid::from_metadata(&meta, budgeter_core::mechanisms::DEFAULT_QUANTILE_GRID).unwrap();
    let mut over = 0;
    for _ in 0..trials {
        let q = dp_quantile(&ages, p, &meta, eps, &mut rng).unwrap();
        let loss = (best - utilities[grid.cell_of(q)]) / n as f64;
        if loss > bound {
            over += 1;
        }
    }
    record("quantile", over as f64 / trials as f64);

    let bound = error_bound(StatisticKind::Cdf, &meta, n, eps, alpha)
        .unwrap()
        .value;
    let truth = dp_cdf(&ages, &meta, eps, &mut RandomSource::zero_noise()).unwrap();
    let mut over = 0;
    for _ in 0..trials {
        let noisy = dp_cdf(&ages, &meta, eps, &mut rng).unwrap();
        let dev = noisy
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a.1 - b.1).abs())
            .fold(0.0, f64::max);
        if dev > bound {
            over += 1;
        }
    }
    record("cdf", over as f64 / trials as f64);

    let summary = format!("exceedance over {trials} trials: {}", report.join(", "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

/// Right edges straight from the grid definition.
fn oracle_edges(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    (0..g)
        .map(|i| {
            if i + 1 == g {
                hi
            } else {
                lo + (i + 1) as f64 * ((hi - lo) / g as f64)
            }
        })
        .collect()
}

fn zero_noise_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let lo = rng.random_range(-100.0..100.0);
        let hi = lo + rng.random_range(1.0..500.0);
        let g = rng.random_range(2..60);
        let meta = VariableMetadata::numerical(lo, hi).with_grid(g);
        let size = rng.random_range(1..=50);
        let values: Vec<f64> = (0..size)
            .map(|_| rng.random_range(lo - 50.0..hi + 50.0))
            .collect();
        let clipped: Vec<f64> = values
            .iter()
            .map(|&v| {
                if v < lo {
                    lo
                } else if v > hi {
                    hi
                } else {
                    v
                }
            })
            .collect();
        let eps = rng.random_range(0.01..2.0);
        let mut zero = RandomSource::zero_noise();
        let edges = oracle_edges(lo, hi, g);
        let below = |e: f64| clipped.iter().filter(|&&v| v <= e).count();

        let mut sum = 0.0;
        for v in &clipped {
            sum += v;
        }
        let mean = dp_mean(&values, &meta, eps, &mut zero).unwrap();
        ensure!(
            mean == sum / size as f64,
            "case {case}: mean {mean} vs {}",
            sum / size as f64
        );

        let cells: Vec<Value> = values.iter().map(|&v| Value::Number(v)).collect();
        let hist = dp_histogram(&cells, &meta, eps, &mut zero).unwrap();
        let mut previous = 0;
        for (i, (_, count)) in hist.iter().enumerate() {
            let cumulative = below(edges[i]);
            ensure!(
                *count == (cumulative - previous) as f64,
                "case {case}: bin {i} count {count}"
            );
            previous = cumulative;
        }

        let cdf = dp_cdf(&values, &meta, eps, &mut zero).unwrap();
        for (i, (x, f)) in cdf.iter().enumerate() {
            let want = below(edges[i]) as f64 / size as f64;
            ensure!(
                *x == edges[i] && *f == want,
                "case {case}: cdf point {i} = ({x}, {f}), want ({}, {want})",
                edges[i]
            );
        }

        let p = rng.random_range(0.01..0.99);
        let qmeta = VariableMetadata::numerical(lo, hi).with_grid(g);
        let q = dp_quantile(&values, p, &qmeta, eps, &mut zero).unwrap();
        let target = p * size as f64;
        let deviation = |e: f64| (below(e) as f64 - target).abs();
        let best = edges
            .iter()
            .map(|&e| deviation(e))
            .fold(f64::INFINITY, f64::min);
        let width = (hi - lo) / g as f64;
        let ok = edges
            .iter()
            .filter(|&&e| deviation(e) == best)
            .any(|&e| (q - (e - width / 2.0)).abs() <= width * (1.0 + 1e-9));
        ensure!(
            ok,
            "case {case}: quantile {q} not within a cell of an optimum"
        );
    }
    Ok("100 datasets: mean/histogram/CDF exact, quantile within one cell".into())
}

fn laplace_log_density(x: f64, center: f64, scale: f64) -> f64 {
    -(x - center).abs() / scale - (2.0 * scale).ln()
}

fn density_ratio() -> Outcome {
    let eps: f64 = 0.5;
    let limit = eps.exp() * (1.0 + 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut noise = RandomSource::seeded(8);
    let mut zero = RandomSource::zero_noise();
    let mut worst: f64 = 0.0;
    let hist_meta = age().with_grid(3);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..200.0)).collect();
        let mut neighbor = d.clone();
        neighbor[rng.random_range(0..n)] = rng.random_range(-1e6..1e6);

        let b = mean_noise_scale(&age(), n, eps).unwrap().get();
        let c0 = dp_mean(&d, &age(), eps, &mut zero).unwrap();
        let c1 = dp_mean(&neighbor, &age(), eps, &mut zero).unwrap();
        let h = histogram_noise_scale(eps).unwrap().get();
        let cells = |v: &[f64]| v.iter().map(|&x| Value::Number(x)).collect::<Vec<_>>();
        let h0: Vec<f64> = dp_histogram(&cells(&d), &hist_meta, eps, &mut zero)
            .unwrap()
            .into_iter()
            .map(|x| x.1)
            .collect();
        let h1: Vec<f64> = dp_histogram(&cells(&neighbor), &hist_meta, eps, &mut zero)
            .unwrap()
            .into_iter()
            .map(|x| x.1)
            .collect();
        if h0.len() != 3 {
            return Err(format!("expected 3 bins, got {}", h0.len()));
        }
        for _ in 0..20 {
            for y in [
                dp_mean(&d, &age(), eps, &mut noise).unwrap(),
                dp_mean(&neighbor, &age(), eps, &mut noise).unwrap(),
            ] {
                let r = (laplace_log_density(y, c0, b) - laplace_log_density(y, c1, b))
                    .abs()
                    .exp();
                worst = worst.max(r);
            }
            for source in [&d, &neighbor] {
                let y: Vec<f64> = dp_histogram(&cells(source), &hist_meta, eps, &mut noise)
                    .unwrap()
                    .into_iter()
                    .map(|x| x.1)
                    .collect();
                let l0: f64 = y
                    .iter()
                    .zip(&h0)
                    .map(|(y, c)| laplace_log_density(*y, *c, h))
                    .sum();
                let l1: f64 = y
                    .iter()
                    .zip(&h1)
                    .map(|(y, c)| laplace_log_density(*y, *c, h))
                    .sum();
                worst = worst.max((l0 - l1).abs().exp());
            }
        }
    }
    ensure!(worst <= limit, "worst ratio {worst} > {limit}");
    Ok(format!(
        "1000 neighbor pairs, worst ratio {worst:.6} <= e^0.5 = {:.6}",
        eps.exp()
    ))
}

fn fuzz_fixture(dir: &Path) -> PathBuf {
    let path = dir.join("fuzz.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let races = ["White", "Black", "Asian", "Other"];
    let mut text = String::from("age,income,race\n");
    for _ in 0..40 {
        text.push_str(&format!(
            "{},{},{}\n",
            rng.random_range(0..100),
            rng.random_range(0..200_000),
            races[rng.random_range(0..races.len())]
        ));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn budget_fuzz() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let handle = load_csv(fuzz_fixture(dir.path())).unwrap();
    let codebook = parse_codebook(
        "age = numerical 0 120\nincome = numerical 0 250000 grid=40\nrace = categorical White,Black,Asian,Other\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let workflows = 10_000;
    let (mut finalized, mut ops_run) = (0, 0);
    for w in 0..workflows {
        let (mut session, _) = Session::create(
            handle.clone(),
            ParamsRequest {
                epsilon: rng.random_range(0.05..2.0),
                delta: 1e-6,
                population_size: rng.random_bool(0.3).then(|| rng.random_range(40..100_000)),
                acknowledge_warnings: true,
            },
        )
        .map_err(|e| e.to_string())?;
        session.set_codebook(codebook.clone()).unwrap();
        let steps = rng.random_range(1..25);
        for _ in 0..steps {
            ops_run += 1;
            let ids: Vec<StatisticId> = session.statistics().map(|s| s.id).collect();
            let pick = |rng: &mut ChaCha8Rng| {
                (!ids.is_empty()).then(|| ids[rng.random_range(0..ids.len())])
            };
            let held_before: BTreeMap<StatisticId, u64> = session
                .allocation()
                .holds()
                .map(|id| (id, session.allocation().epsilon(id).unwrap().to_bits()))
                .collect();
            let op = rng.random_range(0..9);
            let mut rescaling = false;
            let result: Result<(), SessionError> = match op {
                0 | 1 => {
                    let (variable, statistic) = match rng.random_range(0..5) {
                        0 => ("age", StatisticKind::Mean),
                        1 => (
                            "income",
                            StatisticKind::Quantile {
                                p: rng.random_range(0.05..0.95),
                            },
                        ),
                        2 => ("race", StatisticKind::Histogram),
                        3 => ("age", StatisticKind::Cdf),
                        _ => ("income", StatisticKind::Histogram),
                    };
                    session
                        .add_statistic(NewStatistic {
                            variable: variable.into(),
                            statistic,
                            metadata: None,
                        })
                        .map(|_| ())
                }
                2 => match pick(&mut rng) {
                    Some(id) => session.delete_statistic(id),
                    None => continue,
                },
                3 => match pick(&mut rng) {
                    Some(id) => session.set_hold(id, rng.random_bool(0.6)),
                    None => continue,
                },
                4 => match pick(&mut rng) {
                    Some(id) => {
                        let row = session
                            .error_table()
                            .into_iter()
                            .find(|r| r.id == id)
                            .unwrap();
                        let target = match row.error {
                            Some(e) => e.value * rng.random_range(0.3..3.0),
                            None => rng.random_range(0.1..100.0),
                        };
                        session.set_error_target(id, target)
                    }
                    None => continue,
                },
                5 => {
                    rescaling = true;
                    session.set_reserve(rng.random_range(0.0..0.9)).map(|_| ())
                }
                6 => session.set_confidence(rng.random_range(0.001..=0.5)),
                7 => {
                    rescaling = true;
                    session
                        .edit_params(ParamsRequest {
                            epsilon: rng.random_range(0.01..3.0),
                            delta: 1e-6,
                            population_size: None,
                            acknowledge_warnings: true,
                        })
                        .map(|_| ())
                }
                _ => {
                    let result = session.finalize(&mut RandomSource::seeded(w)).map(|_| ());
                    if result.is_ok() {
                        check_finalized(&mut session, w)?;
                        finalized += 1;
                    }
                    result
                }
            };
            let _ = result;

            let alloc = session.allocation();
            alloc.check().map_err(|e| format!("workflow {w}: {e}"))?;
            let total: f64 = alloc.allocations().map(|(_, e)| e).sum();
            ensure!(
                total <= alloc.usable().epsilon + 1e-12,
                "workflow {w}: spent {total} > usable {}",
                alloc.usable().epsilon
            );
            ensure!(
                alloc.allocations().all(|(_, e)| e >= 0.0),
                "workflow {w}: negative allocation"
            );
            if !rescaling {
                for (id, bits) in &held_before {
                    if let Some(e) = alloc.epsilon(*id) {
                        ensure!(
                            e.to_bits() == *bits,
                            "workflow {w}: held statistic {id} changed"
                        );
                    }
                }
            }
            if session.phase() == Phase::Configuring {
                ensure!(
                    session.dataset().read_audit() == 0,
                    "workflow {w}: data read before finalize"
                );
            } else {
                break;
            }
        }
    }
    Ok(format!(
        "{workflows} workflows, {ops_run} operations, {finalized} finalized"
    ))
}

fn check_finalized(session: &mut Session, w: u64) -> Result<(), String> {
    let alloc = session.allocation().clone();
    let spent: f64 = session.releases().iter().map(|r| r.epsilon_spent).sum();
    let cap = alloc.internal().epsilon * (1.0 - alloc.reserve_fraction()) + 1e-12;
    ensure!(spent <= cap, "workflow {w}: released {spent} > {cap}");
    for r in session.releases() {
        ensure!(
            Some(r.epsilon_spent) == alloc.epsilon(r.statistic_id),
            "workflow {w}: release spent differs from allocation"
        );
    }
    let first = session.release_document();
    let audit = session.dataset().read_audit();
    let again = session
        .finalize(&mut RandomSource::seeded(w + 1))
        .map_err(|e| e.to_string())?
        .to_vec();
    ensure!(
        again == first.releases,
        "workflow {w}: second finalize changed releases"
    );
    ensure!(
        session.dataset().read_audit() == audit,
        "workflow {w}: second finalize read data"
    );
    let frozen = session.set_confidence(0.1);
    ensure!(
        matches!(frozen, Err(SessionError::Finalized)),
        "workflow {w}: finalized session accepted a change"
    );
    Ok(())
}

fn cli(session: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_budgeter"))
        .arg("--session")
        .arg(session)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn session_doc(path: &Path) -> Json {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stat_error(view: &Json, id: u64) -> f64 {
    view["statistics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["id"] == id)
        .map(|s| s["error"]["value"].as_f64().unwrap())
        .unwrap()
}

fn firewall_cli_workflow() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("survey.json");
    let data = fixture("survey.csv");
    let data = data.to_str().unwrap();
    let show = |s: &Path| -> Result<Json, String> {
        serde_json::from_str(&cli(s, &["show", "--json"])?).map_err(|e| e.to_string())
    };
    let sealed = |step: &str| -> Result<(), String> {
        let doc = session_doc(&session);
        ensure!(
            doc["dataset"]["read_audit"] == 0,
            "{step}: read_audit {}",
            doc["dataset"]["read_audit"]
        );
        ensure!(
            doc["dataset"]["firewall"] == "sealed",
            "{step}: firewall {}",
            doc["dataset"]["firewall"]
        );
        Ok(())
    };

    // Step 1: parameters and a mean of age with its metadata.
    cli(
        &session,
        &[
            "init",
            "--data",
            data,
            "--epsilon",
            "0.25",
            "--delta",
            "1e-6",
        ],
    )?;
    cli(
        &session,
        &["add-stat", "age", "mean", "--lower", "0", "--upper", "150"],
    )?;
    sealed("step 1")?;
    // Step 2: income mean and quantile, race histogram.
    cli(
        &session,
        &[
            "add-stat", "income", "mean", "--lower", "0", "--upper", "500000",
        ],
    )?;
    cli(
        &session,
        &[
            "add-stat", "income", "quantile", "--p", "0.5", "--lower", "0", "--upper", "500000",
        ],
    )?;
    cli(
        &session,
        &[
            "add-stat",
            "race",
            "histogram",
            "--categories",
            "White,Black,Asian,Hispanic,Other",
        ],
    )?;
    sealed("step 2")?;
    // Step 3: drop the quantile.
    cli(&session, &["rm-stat", "3"])?;
    sealed("step 3")?;
    // Step 4: 98 percent confidence.
    cli(&session, &["confidence", "98"])?;
    sealed("step 4")?;
    // Step 5: more sensitive data, smaller epsilon.
    let before = show(&session)?;
    cli(&session, &["params", "--epsilon", "0.1", "--delta", "1e-7"])?;
    let after = show(&session)?;
    ensure!(
        stat_error(&after, 1) > stat_error(&before, 1),
        "step 5: smaller epsilon did not widen errors"
    );
    sealed("step 5")?;
    // Step 6: sampled from a population of 1,200,000.
    cli(
        &session,
        &[
            "params",
            "--epsilon",
            "0.1",
            "--delta",
            "1e-7",
            "--population",
            "1200000",
        ],
    )?;
    let sampled = show(&session)?;
    ensure!(
        stat_error(&sampled, 1) < stat_error(&after, 1),
        "step 6: population did not improve accuracy"
    );
    sealed("step 6")?;
    // Step 7: reserve budget for analysts.
    cli(&session, &["reserve", "10"])?;
    sealed("step 7")?;
    // Step 8: read the mean-age error.
    let table = cli(&session, &["show"])?;
    ensure!(
        table.contains("age") && table.contains("mean"),
        "step 8: table lacks the mean of age"
    );
    sealed("step 8")?;
    // Step 9: mean age within one year.
    cli(&session, &["error-target", "1", "1"])?;
    let targeted = show(&session)?;
    ensure!(
        (stat_error(&targeted, 1) - 1.0).abs() < 1e-9,
        "step 9: mean error {}",
        stat_error(&targeted, 1)
    );
    sealed("step 9")?;
    // Step 10: race counts within 5 people without moving the mean.
    cli(&session, &["hold", "1"])?;
    cli(&session, &["error-target", "4", "5"])?;
    let held = show(&session)?;
    ensure!(
        stat_error(&held, 1) == stat_error(&targeted, 1),
        "step 10: held mean moved"
    );
    ensure!(
        (stat_error(&held, 4) - 5.0).abs() < 1e-9,
        "step 10: race error {}",
        stat_error(&held, 4)
    );
    sealed("step 10")?;
    // Step 11: finalize.
    let out = dir.path().join("releases.json");
    cli(
        &session,
        &["finalize", "--seed", "11", "--out", out.to_str().unwrap()],
    )?;
    let doc = session_doc(&session);
    let rows = 1000 * 3;
    ensure!(
        doc["dataset"]["read_audit"] == rows,
        "step 11: read_audit {} after finalize",
        doc["dataset"]["read_audit"]
    );
    let releases = session_doc(&out);
    ensure!(
        releases["releases"].as_array().map(Vec::len) == Some(3),
        "step 11: expected 3 releases"
    );
    Ok("steps 1-10 left read_audit = 0; finalize read 3 columns".into())
}

struct Criterion {
    number: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            number: 1,
            name: "tier fidelity",
            limit: Duration::from_secs(1),
            run: tier_fidelity,
        },
        Criterion {
            number: 2,
            name: "swap guardrail",
            limit: Duration::from_secs(1),
            run: swap_guardrail,
        },
        Criterion {
            number: 3,
            name: "secrecy of the sample",
            limit: Duration::from_secs(1),
            run: secrecy_of_the_sample,
        },
        Criterion {
            number: 4,
            name: "error/epsilon round trip",
            limit: Duration::from_secs(5),
            run: round_trip,
        },
        Criterion {
            number: 5,
            name: "tail coverage",
            limit: Duration::from_secs(60),
            run: tail_coverage,
        },
        Criterion {
            number: 6,
            name: "zero-noise oracles",
            limit: Duration::from_secs(10),
            run: zero_noise_oracles,
        },
        Criterion {
            number: 7,
            name: "density ratio",
            limit: Duration::from_secs(30),
            run: density_ratio,
        },
        Criterion {
            number: 8,
            name: "budget-safety fuzz",
            limit: Duration::from_secs(120),
            run: budget_fuzz,
        },
        Criterion {
            number: 9,
            name: "raw-data firewall",
            limit: Duration::from_secs(10),
            run: firewall_cli_workflow,
        },
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.number))
    {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; over the time limit")),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "criterion {} {}: {status} ({detail}) [{:.2} s, limit {} s]",
            c.number,
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        if outcome.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
