//! Experiment plans, repeated runs and their CSV and plot output.
//!
//! A plan is a text file of `key = v1, v2, ...` lines; `#` starts a
//! comment. Every combination of the listed values is one setting, run
//! `repeats` times. Keys: `variant`, `model`, `n`, `d`, `k`, `epsilon`, `r`,
//! `delta`, `alpha`, `beta`, `proj_dim`, `split` (lists) and `repeats`,
//! `seed`, `baselines` (single values; `baselines` is a list of arms).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dpkmeans::pipeline::{default_clusterer, run, Model, PipelineInput};
use dpkmeans::rng::derive_seed;
use dpkmeans::{Error, Result};

use crate::baselines::{naive_objective, trivial_objective};
use crate::lsh::{lsh_private_kmeans, LshConfig, LshMode};
use crate::mixture::{generate_mixture, MixtureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NetTree,
    Lsh,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net-tree" => Ok(Variant::NetTree),
            "lsh" => Ok(Variant::Lsh),
            _ => Err(Error::InvalidParameter(format!("unknown variant {s:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::NetTree => "net-tree",
            Variant::Lsh => "lsh",
        })
    }
}

/// One point of the plan grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub variant: Variant,
    pub model: Model,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub r: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub proj_dim: Option<usize>,
    pub split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub settings: Vec<Setting>,
    pub repeats: usize,
    pub seed: u64,
    pub naive: bool,
}

const LIST_KEYS: [&str; 12] = [
    "variant", "model", "n", "d", "k", "epsilon", "r", "delta", "alpha", "beta", "proj_dim", "split",
];

fn defaults() -> BTreeMap<&'static str, Vec<String>> {
    let mut m = BTreeMap::new();
    for (k, v) in [
        ("variant", "lsh"),
        ("model", "local"),
        ("n", "10000"),
        ("d", "100"),
        ("k", "8"),
        ("epsilon", "1"),
        ("r", "100"),
        ("delta", "1e-6"),
        ("alpha", "1"),
        ("beta", "0.1"),
        ("proj_dim", "2"),
        ("split", "true"),
    ] {
        m.insert(k, vec![v.to_string()]);
    }
    m
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value {v:?} for {key}")))
}

impl Plan {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lists = defaults();
        let mut repeats = 10;
        let mut seed = 1;
        let mut naive = true;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, vals) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = values", ln + 1)))?;
            let key = key.trim();
            let vals: Vec<String> = vals
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if vals.is_empty() {
                return Err(Error::InvalidParameter(format!("line {}: no values for {key}", ln + 1)));
            }
            match key {
                "repeats" => repeats = parse(key, &vals[0])?,
                "seed" => seed = parse(key, &vals[0])?,
                "baselines" => {
                    for v in &vals {
                        if v != "trivial" && v != "naive" {
                            return Err(Error::InvalidParameter(format!("unknown baseline {v:?}")));
                        }
                    }
                    naive = vals.iter().any(|v| v == "naive");
                }
                _ => {
                    let k = LIST_KEYS
                        .iter()
                        .find(|&&k| k == key)
                        .ok_or_else(|| Error::InvalidParameter(format!("line {}: unknown key {key:?}", ln + 1)))?;
                    lists.insert(k, vals);
                }
            }
        }
        if repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be positive".into()));
        }
        let mut settings = Vec::new();
        let mut idx = vec![0usize; LIST_KEYS.len()];
        loop {
            let g = |i: usize| -> &str { &lists[LIST_KEYS[i]][idx[i]] };
            let proj = g(10);
            settings.push(Setting {
                variant: parse("variant", g(0))?,
                model: parse("model", g(1))?,
                n: parse("n", g(2))?,
                d: parse("d", g(3))?,
                k: parse("k", g(4))?,
                epsilon: parse("epsilon", g(5))?,
                r: parse("r", g(6))?,
                delta: parse("delta", g(7))?,
                alpha: parse("alpha", g(8))?,
                beta: parse("beta", g(9))?,
                proj_dim: if proj == "auto" { None } else { Some(parse("proj_dim", proj)?) },
                split: parse("split", g(11))?,
            });
            // Odometer with the last key fastest.
            let mut j = LIST_KEYS.len();
            loop {
                if j == 0 {
                    return Ok(Plan {
                        settings,
                        repeats,
                        seed,
                        naive,
                    });
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < lists[LIST_KEYS[j]].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Keys given more than one value.
    pub fn varying(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap().trim();
            if let Some((k, v)) = line.split_once('=') {
                if v.split(',').filter(|s| !s.trim().is_empty()).count() > 1 && LIST_KEYS.contains(&k.trim()) {
                    out.push(k.trim().to_string());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub setting: Setting,
    pub run: usize,
    pub seed: u64,
    pub objective: f64,
    pub trivial: f64,
    pub naive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub setting: Setting,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub trivial_mean: f64,
    pub naive_mean: Option<f64>,
    pub naive_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Dataset seed of run `run`: shared by all settings, so settings that
/// differ only in algorithm parameters see the same data.
pub fn data_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, "data", run as u64)
}

pub fn algorithm_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, "algorithm", run as u64)
}

/// Objective of one algorithm run on `data`.
pub fn run_setting(s: &Setting, data: &[Vec<f64>], seed: u64) -> Result<f64> {
    match s.variant {
        Variant::Lsh => {
            let mode = match s.model {
                Model::Local => LshMode::Local,
                Model::Exact => LshMode::Exact,
                Model::Shuffle => {
                    return Err(Error::InvalidParameter("the lsh variant runs in the local or exact model".into()))
                }
            };
            let mut cfg = LshConfig::default_for(data.len(), s.k);
            cfg.split_users = s.split;
            Ok(lsh_private_kmeans(data, s.k, s.epsilon, &cfg, mode, seed)?.normalized_objective)
        }
        Variant::NetTree => {
            let mut input = PipelineInput::new(data.len(), s.d, s.k, s.epsilon, s.delta, s.alpha, s.beta);
            input.proj_dim = s.proj_dim;
            let res = run(data, input, s.model, seed, &default_clusterer(seed))?;
            Ok(res.normalized_objective.expect("run fills the objective"))
        }
    }
}

pub fn run_one(s: &Setting, run: usize, plan_seed: u64, naive: bool) -> Result<RunRow> {
    let mix = generate_mixture(&MixtureConfig {
        k_true: s.k,
        n: s.n,
        d: s.d,
        r: s.r,
        seed: data_seed(plan_seed, run),
    })?;
    let seed = algorithm_seed(plan_seed, run);
    Ok(RunRow {
        setting: *s,
        run,
        seed,
        objective: run_setting(s, &mix.points, seed)?,
        trivial: trivial_objective(&mix.points)?,
        naive: if naive {
            Some(naive_objective(&mix.points, s.k, s.epsilon, seed)?)
        } else {
            None
        },
    })
}

/// All runs of the plan, in plan order.
pub fn sweep(plan: &Plan) -> Result<ExperimentResult> {
    let jobs: Vec<(usize, usize)> = (0..plan.settings.len())
        .flat_map(|i| (0..plan.repeats).map(move |r| (i, r)))
        .collect();
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|&(i, r)| run_one(&plan.settings[i], r, plan.seed, plan.naive))
        .collect::<Result<_>>()?;
    let aggregates = plan
        .settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rs = &rows[i * plan.repeats..(i + 1) * plan.repeats];
            let obj: Vec<f64> = rs.iter().map(|r| r.objective).collect();
            let triv: Vec<f64> = rs.iter().map(|r| r.trivial).collect();
            let (mean, std) = mean_std(&obj);
            let naive = plan.naive.then(|| mean_std(&rs.iter().map(|r| r.naive.unwrap()).collect::<Vec<_>>()));
            Aggregate {
                setting: *s,
                runs: rs.len(),
                mean,
                std,
                trivial_mean: mean_std(&triv).0,
                naive_mean: naive.map(|x| x.0),
                naive_std: naive.map(|x| x.1),
            }
        })
        .collect();
    Ok(ExperimentResult { rows, aggregates })
}

const SETTING_HEADER: &str = "variant,model,n,d,k,epsilon,r,delta,alpha,beta,proj_dim,split";

fn setting_fields(s: &Setting) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        s.variant,
        s.model,
        s.n,
        s.d,
        s.k,
        s.epsilon,
        s.r,
        s.delta,
        s.alpha,
        s.beta,
        s.proj_dim.map(|p| p.to_string()).unwrap_or_else(|| "auto".into()),
        s.split
    )
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn runs_csv(res: &ExperimentResult) -> String {
    let mut out = format!("{SETTING_HEADER},run,seed,objective,trivial,naive\n");
    for r in &res.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            setting_fields(&r.setting),
            r.run,
            r.seed,
            r.objective,
            r.trivial,
            opt(r.naive)
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(res: &ExperimentResult) -> String {
    let mut out = format!("{SETTING_HEADER},runs,mean,std,trivial_mean,naive_mean,naive_std\n");
    for a in &res.aggregates {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            setting_fields(&a.setting),
            a.runs,
            a.mean,
            a.std,
            a.trivial_mean,
            opt(a.naive_mean),
            opt(a.naive_std)
        )
        .unwrap();
    }
    out
}

/// Gnuplot script plotting mean objective with one-sigma bars against `x`.
pub fn gnuplot_script(x: &str, naive: bool) -> String {
    let mut s = String::new();
    writeln!(s, "set datafile separator ','").unwrap();
    writeln!(s, "set key autotitle columnhead").unwrap();
    writeln!(s, "set xlabel '{x}'").unwrap();
    writeln!(s, "set ylabel 'normalized k-means objective'").unwrap();
    if x == "n" {
        writeln!(s, "set logscale x").unwrap();
    }
    writeln!(s, "set terminal pngcairo size 800,600").unwrap();
    writeln!(s, "set output 'summary.png'").unwrap();
    let mut p = format!(
        "plot 'summary.csv' using (column('{x}')):(column('mean')):(column('std')) with yerrorlines title 'private', \\\n     'summary.csv' using (column('{x}')):(column('trivial_mean')) with linespoints title 'trivial'"
    );
    if naive {
        write!(
            p,
            ", \\\n     'summary.csv' using (column('{x}')):(column('naive_mean')):(column('naive_std')) with yerrorlines title 'naive'"
        )
        .unwrap();
    }
    writeln!(s, "{p}").unwrap();
    s
}

/// Write `runs.csv`, `summary.csv` and `plot.gp` into `dir`.
pub fn write_outputs(dir: &Path, res: &ExperimentResult, x: &str, naive: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("runs.csv"), runs_csv(res))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(res))?;
    std::fs::write(dir.join("plot.gp"), gnuplot_script(x, naive))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_product_in_order() {
        let p = Plan::parse("n = 100, 200\nepsilon = 1, 2, 4 # three\nrepeats = 2\n\n").unwrap();
        assert_eq!(p.settings.len(), 6);
        assert_eq!(p.repeats, 2);
        assert_eq!((p.settings[0].n, p.settings[0].epsilon), (100, 1.0));
        assert_eq!((p.settings[1].n, p.settings[1].epsilon), (100, 2.0));
        assert_eq!((p.settings[3].n, p.settings[3].epsilon), (200, 1.0));
        assert_eq!(Plan::varying("n = 100, 200\nk = 4\n"), vec!["n".to_string()]);
    }

    #[test]
    fn bad_plans() {
        for bad in ["n", "foo = 1", "n = x", "repeats = 0", "baselines = laplace", "model = central", "k ="] {
            assert!(Plan::parse(bad).is_err(), "{bad}");
        }
        assert!(!Plan::parse("baselines = trivial").unwrap().naive);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        let p = Plan::parse("n = 400\nd = 5\nk = 2\nrepeats = 1\nbaselines = trivial").unwrap();
        let r = sweep(&p).unwrap();
        assert_eq!(r.aggregates[0].std, 0.0);
        assert_eq!(r.rows.len(), 1);
        let csv = summary_csv(&r);
        assert!(csv.starts_with(SETTING_HEADER));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn sweep_is_deterministic() {
        let p = Plan::parse("n = 300\nd = 4\nk = 2\nepsilon = 1, 4\nrepeats = 2").unwrap();
        let a = sweep(&p).unwrap();
        let b = sweep(&p).unwrap();
        assert_eq!(runs_csv(&a), runs_csv(&b));
        assert!(a.rows.iter().all(|r| r.naive.is_some()));
    }
}
