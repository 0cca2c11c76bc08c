//! One function per subcommand. Each returns the rendered artifact, a
//! summary line and whether the command's verdict (if any) passed.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use mcx_core::bfw::build_bfw;
use mcx_core::config::{choose_m, sigma2};
use mcx_core::exact::{gillespie, prob_first_merge_pair, prob_no_merge};
use mcx_core::levy::{default_horizon, excursions, reflect, sample_w, DEFAULT_GRID_DIVISIONS, DEFAULT_MIN_STEPS};
use mcx_core::rng::{purpose, stream_rng};
use mcx_core::stats::{binomial_z, convergence_study, ConvergenceRow, StudyOptions, StudyVerdict};
use mcx_core::uribe::{first_merge_time, partition_at, sample_marks};
use mcx_core::Partition;

use crate::output::{json, Csv};
use crate::scenario::{Command, Format, Scenario};
use crate::RunError;

/// Family-wise two-sided level of `verify-exact`, the 3σ level.
pub const VERIFY_FAMILY_LEVEL: f64 = 0.0027;

pub struct Outcome {
    pub body: String,
    pub summary: String,
    pub passed: bool,
}

pub fn dispatch(sc: &Scenario) -> Result<Outcome, RunError> {
    sc.validate().map_err(RunError::Usage)?;
    match sc.command {
        Command::SimulateGraph => simulate_graph(sc),
        Command::SimulateLimit => simulate_limit(sc),
        Command::Uribe => uribe(sc),
        Command::VerifyExact => verify_exact(sc),
        Command::Convergence => convergence(sc),
    }
}

#[derive(Serialize)]
struct ComponentRow {
    mass: f64,
    blocks: usize,
    surplus: usize,
    /// Blocks among the `m` largest of the configuration.
    tracked: usize,
}

#[derive(Serialize)]
struct GraphReport {
    q: f64,
    m: usize,
    replicas: Vec<Vec<ComponentRow>>,
}

fn simulate_graph(sc: &Scenario) -> Result<Outcome, RunError> {
    let x = sc.mass_config().map_err(RunError::Usage)?;
    let params = sc.regime().map_err(RunError::Usage)?;
    let q = sc.q.unwrap_or(1.0 / sigma2(&x) + params.t);
    if !(q >= 0.0 && q.is_finite()) {
        return Err(RunError::Usage(format!("derived q = {q} is not usable; pass --q")));
    }
    let m = choose_m(&x, sc.threshold);
    let runs: Vec<Vec<ComponentRow>> = (0..sc.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(sc.seed, r as u64, purpose::GRAPH);
            let res = build_bfw(&x, q, &mut rng)?;
            let mut rows: Vec<ComponentRow> = res
                .component_spans
                .iter()
                .map(|c| ComponentRow {
                    mass: c.mass,
                    blocks: c.members.len(),
                    surplus: 0,
                    tracked: c.members.iter().filter(|&&b| b < m).count(),
                })
                .collect();
            for &(a, _) in &res.surplus_edges {
                rows[res.component_of_position(a)].surplus += 1;
            }
            rows.sort_by(|a, b| b.mass.total_cmp(&a.mass));
            Ok(rows)
        })
        .collect::<Result<_, mcx_core::Error>>()?;

    let mean_largest = runs.iter().map(|r| r[0].mass).sum::<f64>() / runs.len() as f64;
    let summary = format!(
        "simulate-graph n={} q={q} replicas={} mean_largest={mean_largest:.6} seed={}",
        x.len(),
        sc.replicas,
        sc.seed
    );
    let body = match sc.format {
        Format::Json => json(sc, &GraphReport { q, m, replicas: runs }),
        Format::Csv => {
            let mut csv = Csv::new(sc, &["replica", "rank", "mass", "blocks", "surplus", "tracked"]);
            for (r, rows) in runs.iter().enumerate() {
                for (k, c) in rows.iter().enumerate() {
                    csv.row(&[&r, &(k + 1), &c.mass, &c.blocks, &c.surplus, &c.tracked]);
                }
            }
            csv.finish()
        }
    };
    Ok(Outcome { body, summary, passed: true })
}

#[derive(Serialize)]
struct LimitReplica {
    lengths: Vec<f64>,
    starts: Vec<f64>,
    open: Option<f64>,
    discarded: f64,
    zero_measure: f64,
}

#[derive(Serialize)]
struct LimitReport {
    horizon: f64,
    step: f64,
    min_length: f64,
    replicas: Vec<LimitReplica>,
}

#[derive(Serialize)]
struct PathReport {
    horizon: f64,
    step: f64,
    w: Vec<f64>,
    b: Vec<f64>,
    jumps: Vec<(f64, f64)>,
}

fn simulate_limit(sc: &Scenario) -> Result<Outcome, RunError> {
    let params = sc.regime().map_err(RunError::Usage)?;
    let horizon = sc.horizon.unwrap_or_else(|| default_horizon(&params));
    let step = sc.step.unwrap_or(horizon / DEFAULT_GRID_DIVISIONS as f64);
    let min_length = sc.min_length.unwrap_or(DEFAULT_MIN_STEPS * step);

    if sc.path {
        let w = sample_w(&params, horizon, step, sc.seed, 0)?;
        let b = reflect(&w);
        let summary = format!(
            "simulate-limit path points={} horizon={} seed={}",
            w.values.len(),
            w.horizon(),
            sc.seed
        );
        let body = match sc.format {
            Format::Json => json(
                sc,
                &PathReport { horizon: w.horizon(), step, w: w.values.clone(), b: b.values, jumps: w.jump_times },
            ),
            Format::Csv => {
                let mut csv = Csv::new(sc, &["t", "w", "b"]);
                for (k, (wv, bv)) in w.values.iter().zip(&b.values).enumerate() {
                    csv.row(&[&w.time(k), wv, bv]);
                }
                csv.finish()
            }
        };
        return Ok(Outcome { body, summary, passed: true });
    }

    let runs: Vec<(LimitReplica, f64)> = (0..sc.replicas)
        .into_par_iter()
        .map(|r| {
            let w = sample_w(&params, horizon, step, sc.seed, r as u64)?;
            let set = excursions(&reflect(&w), min_length);
            let grid_h = w.horizon();
            let starts = set.starts.iter().map(|&k| (k - 1) as f64 * step).collect();
            Ok((
                LimitReplica {
                    lengths: set.lengths.clone(),
                    starts,
                    open: set.open,
                    discarded: set.discarded,
                    zero_measure: set.zero_measure,
                },
                grid_h,
            ))
        })
        .collect::<Result<_, mcx_core::Error>>()?;
    let grid_h = runs.first().map_or(horizon, |r| r.1);
    let truncated = runs.iter().filter(|r| r.0.open.is_some()).count();
    let mean_largest =
        runs.iter().map(|r| r.0.lengths.first().copied().unwrap_or(0.0)).sum::<f64>() / runs.len() as f64;
    let summary = format!(
        "simulate-limit replicas={} horizon={grid_h} mean_largest={mean_largest:.6} truncated={truncated} seed={}",
        sc.replicas, sc.seed
    );
    let body = match sc.format {
        Format::Json => json(
            sc,
            &LimitReport { horizon: grid_h, step, min_length, replicas: runs.into_iter().map(|r| r.0).collect() },
        ),
        Format::Csv => {
            // Rank 0 is the excursion still open at the horizon.
            let mut csv = Csv::new(sc, &["replica", "rank", "length", "start"]);
            for (r, (rep, h)) in runs.iter().enumerate() {
                for (k, (len, start)) in rep.lengths.iter().zip(&rep.starts).enumerate() {
                    csv.row(&[&r, &(k + 1), len, start]);
                }
                if let Some(open) = rep.open {
                    csv.row(&[&r, &0, &open, &(h - open)]);
                }
            }
            csv.finish()
        }
    };
    Ok(Outcome { body, summary, passed: true })
}

#[derive(Serialize)]
struct UribeReplica {
    first_merge_time: f64,
    blocks: Vec<Vec<usize>>,
    masses: Vec<f64>,
}

#[derive(Serialize)]
struct UribeReport {
    s: f64,
    replicas: Vec<UribeReplica>,
}

fn uribe(sc: &Scenario) -> Result<Outcome, RunError> {
    let x = sc.mass_config().map_err(RunError::Usage)?;
    let s = sc.s.expect("validated");
    let runs: Vec<UribeReplica> = (0..sc.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(sc.seed, r as u64, purpose::MARKS);
            let marks = sample_marks(&x, &mut rng);
            let p = partition_at(&x, &marks, s);
            UribeReplica {
                first_merge_time: first_merge_time(&x, &marks),
                blocks: p.blocks().to_vec(),
                masses: p.block_mass().to_vec(),
            }
        })
        .collect();
    let merged = runs.iter().filter(|r| r.first_merge_time <= s).count();
    let summary = format!(
        "uribe n={} s={s} replicas={} merged_by_s={merged} seed={}",
        x.len(),
        sc.replicas,
        sc.seed
    );
    let body = match sc.format {
        Format::Json => json(sc, &UribeReport { s, replicas: runs }),
        Format::Csv => {
            let mut csv = Csv::new(sc, &["replica", "block", "mass", "size", "members"]);
            for (r, rep) in runs.iter().enumerate() {
                for (k, (members, mass)) in rep.blocks.iter().zip(&rep.masses).enumerate() {
                    let list: Vec<String> = members.iter().map(usize::to_string).collect();
                    csv.row(&[&r, &k, mass, &members.len(), &list.join(" ")]);
                }
            }
            csv.finish()
        }
    };
    Ok(Outcome { body, summary, passed: true })
}

#[derive(Serialize)]
struct Check {
    quantity: String,
    source: &'static str,
    exact: f64,
    empirical: f64,
    z: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    s: f64,
    z_critical: f64,
    checks: Vec<Check>,
    passed: bool,
}

struct Tally {
    no_merge: usize,
    pairs: Vec<usize>,
}

fn tally(p: &Partition, pairs: &[(usize, usize)], singles: &Partition, t: &mut Tally) {
    if p == singles {
        t.no_merge += 1;
        return;
    }
    if let Some(i) = pairs.iter().position(|&(a, b)| *p == singles.merge(a, b)) {
        t.pairs[i] += 1;
    }
}

fn verify_exact(sc: &Scenario) -> Result<Outcome, RunError> {
    let x = sc.mass_config().map_err(RunError::Usage)?;
    let s = sc.s.expect("validated");
    let n = x.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let singles = Partition::singletons(&x);

    let empty = || Tally { no_merge: 0, pairs: vec![0; pairs.len()] };
    let per_replica: Vec<[Tally; 2]> = (0..sc.replicas)
        .into_par_iter()
        .map(|r| {
            let mut g = empty();
            let mut chain = stream_rng(sc.seed, r as u64, purpose::CHAIN);
            let traj = gillespie(&x, s, &mut chain);
            tally(traj.state_at(s), &pairs, &singles, &mut g);
            let mut u = empty();
            let mut marks_rng = stream_rng(sc.seed, r as u64, purpose::MARKS);
            let marks = sample_marks(&x, &mut marks_rng);
            tally(&partition_at(&x, &marks, s), &pairs, &singles, &mut u);
            [g, u]
        })
        .collect();
    let mut sums = [empty(), empty()];
    for reps in &per_replica {
        for (acc, t) in sums.iter_mut().zip(reps) {
            acc.no_merge += t.no_merge;
            for (a, b) in acc.pairs.iter_mut().zip(&t.pairs) {
                *a += b;
            }
        }
    }
    let bfw_no_edge = (0..sc.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(sc.seed, r as u64, purpose::GRAPH);
            build_bfw(&x, s, &mut rng).map(|res| usize::from(res.component_spans.len() == n))
        })
        .sum::<Result<usize, mcx_core::Error>>()?;

    let mut raw: Vec<(String, &'static str, f64, usize)> = Vec::new();
    let p0 = prob_no_merge(&x, s);
    raw.push(("P(S>s)".into(), "gillespie", p0, sums[0].no_merge));
    raw.push(("P(S>s)".into(), "uribe", p0, sums[1].no_merge));
    raw.push(("P(S>s)".into(), "bfw", p0, bfw_no_edge));
    for (i, &pair) in pairs.iter().enumerate() {
        let p = prob_first_merge_pair(&x, s, pair)?;
        let label = format!("P(T(s)={{{},{}}})", pair.0, pair.1);
        raw.push((label.clone(), "gillespie", p, sums[0].pairs[i]));
        raw.push((label, "uribe", p, sums[1].pairs[i]));
    }

    let k = raw.len() as f64;
    let z_critical = Normal::standard().inverse_cdf(1.0 - VERIFY_FAMILY_LEVEL / (2.0 * k));
    let checks: Vec<Check> = raw
        .into_iter()
        .map(|(quantity, source, exact, hits)| {
            let z = binomial_z(hits, sc.replicas, exact);
            Check {
                quantity,
                source,
                exact,
                empirical: hits as f64 / sc.replicas as f64,
                z,
                pass: z.abs() <= z_critical,
            }
        })
        .collect();
    let passed = checks.iter().all(|c| c.pass);
    let worst = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let summary = format!(
        "verify-exact n={n} s={s} replicas={} checks={} max|z|={worst:.3} z_crit={z_critical:.3} {} seed={}",
        sc.replicas,
        checks.len(),
        if passed { "PASS" } else { "FAIL" },
        sc.seed
    );
    let body = match sc.format {
        Format::Json => json(sc, &VerifyReport { s, z_critical, checks, passed }),
        Format::Csv => {
            let mut csv = Csv::new(sc, &["quantity", "source", "exact", "empirical", "z", "pass"]);
            for c in &checks {
                csv.row(&[&c.quantity, &c.source, &c.exact, &c.empirical, &c.z, &c.pass]);
            }
            csv.finish()
        }
    };
    Ok(Outcome { body, summary, passed })
}

#[derive(Serialize)]
struct ConvergenceReport {
    rows: Vec<ConvergenceRow>,
    verdict: StudyVerdict,
    passed: bool,
}

fn convergence(sc: &Scenario) -> Result<Outcome, RunError> {
    let params = sc.regime().map_err(RunError::Usage)?;
    let opts = StudyOptions {
        l: sc.l,
        horizon: sc.horizon,
        step: sc.step,
        min_length: sc.min_length,
        ..StudyOptions::default()
    };
    let rows = convergence_study(&params, &sc.n, sc.replicas, sc.seed, &opts)?;
    let verdict = StudyVerdict::evaluate(&rows, opts.level);
    let passed = verdict.passed();
    let last = rows.last().expect("non-empty n list");
    let summary = format!(
        "convergence n={:?} replicas={} final_ks={:.4} final_p={:.4} {} seed={}",
        sc.n,
        sc.replicas,
        last.ks_statistic,
        last.ks_pvalue,
        if passed { "PASS" } else { "FAIL" },
        sc.seed
    );
    let body = match sc.format {
        Format::Json => json(sc, &ConvergenceReport { rows, verdict, passed }),
        Format::Csv => {
            let mut csv = Csv::new(
                sc,
                &[
                    "n",
                    "l",
                    "sigma2",
                    "q",
                    "replicas",
                    "mean_largest",
                    "mean_second",
                    "limit_mean_largest",
                    "ks_statistic",
                    "ks_pvalue",
                    "wasserstein",
                    "mean_sorted_l2",
                    "limit_truncations",
                    "mass_violations",
                ],
            );
            for r in &rows {
                csv.row(&[
                    &r.n,
                    &r.l,
                    &r.sigma2,
                    &r.q,
                    &r.replicas,
                    &r.mean_largest,
                    &r.mean_second,
                    &r.limit_mean_largest,
                    &r.ks_statistic,
                    &r.ks_pvalue,
                    &r.wasserstein,
                    &r.mean_sorted_l2,
                    &r.limit_truncations,
                    &r.mass_violations,
                ]);
            }
            csv.finish()
        }
    };
    Ok(Outcome { body, summary, passed })
}
