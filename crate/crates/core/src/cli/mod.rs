//! Experiment front-end: `simulate`, `train`, `evaluate`, `detect-train` and `report`.
//!
//! Layout under `--out`:
//!
//! ```text
//! <command>/config.toml, <command>/manifest.toml
//! simulate/<policy>/kpi_ep<e>.csv, simulate/summary.csv
//! detector/detector.jsck, detector/metrics.toml, detector/history.csv
//! train/<variant>/seed<s>/{curve.csv, policy.jsck, kpi.csv}
//! evaluate/<variant>/seed<s>/kpi_ep<e>.csv, evaluate/<variant>/loss_cdf.csv, evaluate/summary.csv
//! report/{learning_curves.svg, learning_curves.csv, loss_cdf.svg, loss_cdf.csv, latency.csv, summary.csv}
//! ```

pub mod io;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::config::Config;
use crate::detector::{simulate_windows, train_detector, FrozenDetector};
use crate::env::{JamDetector, JamEnv, RecoveryAction};
use crate::error::{Error, Result};
use crate::evaluation::{ecdf, replay, summarize, Policy};
use crate::linalg::mean;
use crate::marl::api::MultiAgentEnv;
use crate::marl::checkpoint;
use crate::marl::trainer::{self, convergence_epoch, worker_count, PolicyParameters, Variant};
use crate::rng::derive_seed;

use io::{read_curve_csv, read_kpi_csv, subdirs, write_curve_csv, write_kpi_csv, write_rows, RunManifest};
use report::{latency_row, line_chart, Domain, Series};

/// Master seed of the evaluation episodes, shared by every variant and training seed.
pub const EVAL_SEED: u64 = 0x0E7A_15EE;

pub fn eval_episode_seed(e: usize) -> u64 {
    derive_seed(EVAL_SEED, e as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Train,
    Evaluate,
    DetectTrain,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::DetectTrain => "detect-train",
            Command::Report => "report",
        }
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "jamshield", version, about = "UAV anti-jamming simulator and multi-agent PPO trainer")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run this seed only instead of `run.seeds`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run this variant only instead of `run.variants`.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
}

/// A resolved configuration with the seed and variant selection applied.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub cfg: Config,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

impl Campaign {
    pub fn new(cfg: Config, out: impl Into<PathBuf>, seed: Option<u64>, variant: Option<Variant>) -> Self {
        Self {
            seeds: seed.map_or_else(|| cfg.run.seeds.clone(), |s| vec![s]),
            variants: variant.map_or_else(|| cfg.run.variants.clone(), |v| vec![v]),
            out: out.into(),
            cfg,
        }
    }

    pub fn env(&self, detector: Option<Arc<dyn JamDetector>>) -> Result<JamEnv> {
        JamEnv::new(
            Arc::new(self.cfg.scenario.clone()),
            self.cfg.rewards,
            self.cfg.scenario.seed,
            detector,
        )
    }

    pub fn run_dir(&self, variant: Variant, seed: u64) -> PathBuf {
        self.out.join("train").join(variant.name()).join(format!("seed{seed}"))
    }

    pub fn detector_path(&self) -> PathBuf {
        self.out.join("detector").join("detector.jsck")
    }

    fn finish(&self, command: Command, variants: Vec<String>, outputs: Vec<PathBuf>) -> Result<RunManifest> {
        let dir = self.out.join(command.name());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.toml"), self.cfg.to_toml()?)?;
        let m = RunManifest {
            command: command.name().into(),
            variants,
            seeds: self.seeds.clone(),
            config_hash: self.cfg.hash()?,
            workers: worker_count(self.cfg.trainer.workers),
            code_version: env!("CARGO_PKG_VERSION").into(),
            outputs: outputs
                .into_iter()
                .map(|p| p.strip_prefix(&self.out).map(Path::to_path_buf).unwrap_or(p))
                .collect(),
        };
        m.write(&dir.join("manifest.toml"))?;
        Ok(m)
    }

    fn variant_names(&self) -> Vec<String> {
        self.variants.iter().map(|v| v.name().to_string()).collect()
    }

    pub fn run(&self, command: Command) -> Result<RunManifest> {
        match command {
            Command::Simulate => self.simulate(),
            Command::Train => self.train(),
            Command::Evaluate => self.evaluate(),
            Command::DetectTrain => self.detect_train().map(|(_, m)| m),
            Command::Report => self.report(),
        }
    }

    /// Fixed and random policies on the configured scenario.
    pub fn simulate(&self) -> Result<RunManifest> {
        let mut env = self.env(None)?;
        let fixed = RecoveryAction::default_for(env.n_rb_per_bwp()[0]);
        let mut outputs = Vec::new();
        let mut rows = Vec::new();
        for (name, policy) in [("fixed", Policy::Fixed(fixed)), ("random", Policy::Random)] {
            let mut all = Vec::new();
            for e in 0..self.cfg.run.simulate_episodes {
                let kpis = replay(&mut env, policy, derive_seed(self.seeds[0], e as u64))?;
                let p = self.out.join("simulate").join(name).join(format!("kpi_ep{e}.csv"));
                write_kpi_csv(&p, &kpis)?;
                outputs.push(p);
                all.extend(kpis);
            }
            rows.push(SummaryRow::new(name, self.seeds[0], self.cfg.run.simulate_episodes, &all, self.cfg.run.loss_threshold));
        }
        let p = self.out.join("simulate").join("summary.csv");
        write_rows(&p, &rows)?;
        outputs.push(p);
        self.finish(Command::Simulate, vec!["fixed".into(), "random".into()], outputs)
    }

    /// Train the detector on simulator windows and write its weight file.
    pub fn detect_train(&self) -> Result<(FrozenDetector, RunManifest)> {
        let seed = self.seeds[0];
        let windows = simulate_windows(&self.cfg.scenario, &self.cfg.detector.dataset, seed)?;
        let t = train_detector(&windows, &self.cfg.detector, seed)?;
        let path = self.detector_path();
        io::create_parent(&path)?;
        t.detector.save(&path)?;
        let metrics = self.out.join("detector").join("metrics.toml");
        fs::write(
            &metrics,
            toml::to_string(&t.metrics).map_err(|e| Error::Format(e.to_string()))?,
        )?;
        let history = self.out.join("detector").join("history.csv");
        let rows: Vec<HistoryRow> = t
            .history
            .iter()
            .enumerate()
            .map(|(step, h)| HistoryRow {
                step,
                loss: h.loss,
                cross_entropy: h.cross_entropy,
                entropy: h.entropy,
            })
            .collect();
        write_rows(&history, &rows)?;
        let m = self.finish(Command::DetectTrain, vec!["detector".into()], vec![path, metrics, history])?;
        Ok((t.detector, m))
    }

    fn detector(&self, train_if_missing: bool) -> Result<Arc<FrozenDetector>> {
        let p = self.detector_path();
        if p.exists() {
            return Ok(Arc::new(FrozenDetector::load(&p)?));
        }
        if !train_if_missing {
            return Err(Error::Contract(format!("no detector weights at {}", p.display())));
        }
        Ok(Arc::new(self.detect_train()?.0))
    }

    pub fn detector_for(&self, v: Variant, train_if_missing: bool) -> Result<Option<Arc<dyn JamDetector>>> {
        Ok(if v.uses_detector() {
            Some(self.detector(train_if_missing)? as Arc<dyn JamDetector>)
        } else {
            None
        })
    }

    /// One training run per (variant, seed).
    pub fn train(&self) -> Result<RunManifest> {
        let echo = self.cfg.to_toml()?;
        let mut outputs = Vec::new();
        for &v in &self.variants {
            let det = self.detector_for(v, true)?;
            for &s in &self.seeds {
                let factory = || -> Result<Box<dyn MultiAgentEnv>> { Ok(Box::new(self.env(det.clone())?)) };
                let out = trainer::train(&self.cfg.trainer, v, &factory, s)?;
                let dir = self.run_dir(v, s);
                let curve = dir.join("curve.csv");
                write_curve_csv(&curve, &out.curve)?;
                let policy = dir.join("policy.jsck");
                checkpoint::save(&policy, &echo, &out.params.to_tensors()?)?;
                let mut env = self.env(det.clone())?;
                let kpis = replay(
                    &mut env,
                    Policy::Learned {
                        params: &out.params,
                        greedy: true,
                    },
                    eval_episode_seed(0),
                )?;
                let kpi = dir.join("kpi.csv");
                write_kpi_csv(&kpi, &kpis)?;
                outputs.extend([curve, policy, kpi]);
            }
        }
        self.finish(Command::Train, self.variant_names(), outputs)
    }

    pub fn load_policy(&self, v: Variant, seed: u64) -> Result<PolicyParameters> {
        let p = self.run_dir(v, seed).join("policy.jsck");
        if !p.exists() {
            return Err(Error::Contract(format!("no trained policy at {}; run `train` first", p.display())));
        }
        let (_, ts) = checkpoint::load(&p)?;
        let params = PolicyParameters::from_tensors(&ts)?;
        if params.variant != v {
            return Err(Error::Format(format!("{} holds a {} policy", p.display(), params.variant)));
        }
        Ok(params)
    }

    /// Greedy replays of every trained policy plus the random baseline on the evaluation episodes.
    pub fn evaluate(&self) -> Result<RunManifest> {
        let n = self.cfg.run.eval_episodes;
        let thr = self.cfg.run.loss_threshold;
        let root = self.out.join("evaluate");
        let mut outputs = Vec::new();
        let mut rows = Vec::new();
        let mut cells: Vec<(String, Vec<(u64, Option<PolicyParameters>)>, Option<Arc<dyn JamDetector>>)> =
            vec![("random".into(), vec![(0, None)], None)];
        for &v in &self.variants {
            let runs = self
                .seeds
                .iter()
                .map(|&s| Ok((s, Some(self.load_policy(v, s)?))))
                .collect::<Result<Vec<_>>>()?;
            cells.push((v.name().into(), runs, self.detector_for(v, false)?));
        }
        for (name, runs, det) in &cells {
            let mut env = self.env(det.clone())?;
            let mut pooled = Vec::new();
            for (s, params) in runs {
                let policy = match params {
                    Some(p) => Policy::Learned { params: p, greedy: true },
                    None => Policy::Random,
                };
                let mut all = Vec::new();
                for e in 0..n {
                    let kpis = replay(&mut env, policy, eval_episode_seed(e))?;
                    let p = root.join(name).join(format!("seed{s}")).join(format!("kpi_ep{e}.csv"));
                    write_kpi_csv(&p, &kpis)?;
                    outputs.push(p);
                    all.extend(kpis);
                }
                rows.push(SummaryRow::new(name, *s, n, &all, thr));
                pooled.extend(all);
            }
            let cdf: Vec<CdfRow> = ecdf(&pooled.iter().map(|k| k.packet_loss_rate).collect::<Vec<_>>())
                .into_iter()
                .map(|(x, f)| CdfRow { packet_loss: x, cdf: f })
                .collect();
            let p = root.join(name).join("loss_cdf.csv");
            write_rows(&p, &cdf)?;
            outputs.push(p);
        }
        let p = root.join("summary.csv");
        write_rows(&p, &rows)?;
        outputs.push(p);
        let mut names = vec!["random".to_string()];
        names.extend(self.variant_names());
        self.finish(Command::Evaluate, names, outputs)
    }

    /// Charts and tables over whatever `train` and `evaluate` left under `--out`.
    pub fn report(&self) -> Result<RunManifest> {
        let root = self.out.join("report");
        fs::create_dir_all(&root)?;
        let mut outputs = Vec::new();
        let mut names = Vec::new();

        let mut curve_series = Vec::new();
        let mut curve_rows = Vec::new();
        let mut conv = Vec::new();
        for v in subdirs(&self.out.join("train"))? {
            let mut curves = Vec::new();
            for s in subdirs(&self.out.join("train").join(&v))? {
                let p = self.out.join("train").join(&v).join(&s).join("curve.csv");
                if p.exists() {
                    curves.push(read_curve_csv(&p)?.iter().map(|e| e.cumulative_reward).collect::<Vec<f64>>());
                }
            }
            let len = curves.iter().map(Vec::len).min().unwrap_or(0);
            if len == 0 {
                continue;
            }
            let avg: Vec<f64> = (0..len).map(|i| mean(&curves.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
            for (epoch, &r) in avg.iter().enumerate() {
                curve_rows.push(CurveRow {
                    variant: v.clone(),
                    epoch,
                    mean_cumulative_reward: r,
                });
            }
            let trimmed: Vec<Vec<f64>> = curves.iter().map(|c| c[..len].to_vec()).collect();
            conv.push((v.clone(), convergence_epoch(&trimmed, 0.9, trainer::convergence_window(len))));
            curve_series.push(Series {
                name: v.clone(),
                points: avg.iter().enumerate().map(|(i, &r)| (i as f64, r)).collect(),
            });
        }
        if !curve_series.is_empty() {
            let svg = root.join("learning_curves.svg");
            fs::write(
                &svg,
                line_chart("Cumulative reward per epoch", "epoch", "cumulative reward", &curve_series, Domain::default()),
            )?;
            let csv = root.join("learning_curves.csv");
            write_rows(&csv, &curve_rows)?;
            outputs.extend([svg, csv]);
        }

        let mut cdf_series = Vec::new();
        let mut cdf_rows = Vec::new();
        let mut latency = Vec::new();
        let mut summary = Vec::new();
        for v in subdirs(&self.out.join("evaluate"))? {
            let mut loss = Vec::new();
            let mut lat = Vec::new();
            for s in subdirs(&self.out.join("evaluate").join(&v))? {
                let dir = self.out.join("evaluate").join(&v).join(&s);
                let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                    .collect();
                files.sort();
                for f in files {
                    for row in read_kpi_csv(&f)? {
                        loss.push(row.packet_loss);
                        lat.push(row.latency_s);
                    }
                }
            }
            if loss.is_empty() {
                continue;
            }
            let pts = ecdf(&loss);
            for &(x, f) in &pts {
                cdf_rows.push(CdfVariantRow {
                    variant: v.clone(),
                    packet_loss: x,
                    cdf: f,
                });
            }
            cdf_series.push(Series {
                name: v.clone(),
                points: pts,
            });
            latency.push(latency_row(&v, &lat));
            let below = loss.iter().filter(|&&l| l < self.cfg.run.loss_threshold).count() as f64 / loss.len() as f64;
            summary.push(ReportRow {
                variant: v.clone(),
                steps: loss.len(),
                mean_packet_loss: mean(&loss),
                loss_below: below,
                convergence_epoch: conv.iter().find(|(n, _)| *n == v).and_then(|(_, c)| *c),
            });
            names.push(v);
        }
        for (v, c) in &conv {
            if !summary.iter().any(|r| &r.variant == v) {
                summary.push(ReportRow {
                    variant: v.clone(),
                    steps: 0,
                    mean_packet_loss: f64::NAN,
                    loss_below: f64::NAN,
                    convergence_epoch: *c,
                });
                names.push(v.clone());
            }
        }
        if curve_series.is_empty() && cdf_series.is_empty() {
            return Err(Error::Contract(format!("no completed runs under {}", self.out.display())));
        }
        if !cdf_series.is_empty() {
            let svg = root.join("loss_cdf.svg");
            let domain = Domain {
                x: Some((0.0, 1.0)),
                y: Some((0.0, 1.0)),
            };
            fs::write(&svg, line_chart("Packet-loss CDF", "packet loss", "CDF", &cdf_series, domain))?;
            let csv = root.join("loss_cdf.csv");
            write_rows(&csv, &cdf_rows)?;
            let lat = root.join("latency.csv");
            write_rows(&lat, &latency)?;
            outputs.extend([svg, csv, lat]);
        }
        let p = root.join("summary.csv");
        write_rows(&p, &summary)?;
        outputs.push(p);
        self.finish(Command::Report, names, outputs)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub seed: u64,
    pub episodes: usize,
    pub steps: usize,
    pub mean_packet_loss: f64,
    pub loss_below: f64,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub mean_reward: f64,
}

impl SummaryRow {
    fn new(variant: &str, seed: u64, episodes: usize, kpis: &[crate::env::KpiRecord], thr: f64) -> Self {
        let s = summarize(kpis, thr);
        Self {
            variant: variant.into(),
            seed,
            episodes,
            steps: s.steps,
            mean_packet_loss: s.mean_packet_loss,
            loss_below: s.loss_below,
            mean_latency_ms: 1e3 * s.mean_latency_s,
            median_latency_ms: 1e3 * s.median_latency_s,
            p95_latency_ms: 1e3 * s.p95_latency_s,
            mean_reward: s.mean_reward,
        }
    }
}

#[derive(Serialize)]
struct HistoryRow {
    step: usize,
    loss: f64,
    cross_entropy: f64,
    entropy: f64,
}

#[derive(Serialize)]
struct CdfRow {
    packet_loss: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct CdfVariantRow {
    variant: String,
    packet_loss: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct CurveRow {
    variant: String,
    epoch: usize,
    mean_cumulative_reward: f64,
}

#[derive(Serialize)]
struct ReportRow {
    variant: String,
    steps: usize,
    mean_packet_loss: f64,
    loss_below: f64,
    convergence_epoch: Option<usize>,
}

/// 2 for configuration problems, 3 for numerical divergence, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Divergence(_) => 3,
        _ => 1,
    }
}

/// Parse arguments, run one subcommand and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match Config::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("jamshield: {e}");
            return exit_code(&e);
        }
    };
    let campaign = Campaign::new(cfg, cli.out, cli.seed, cli.variant);
    match campaign.run(cli.command) {
        Ok(m) => {
            println!("{}: {} outputs, config {}", m.command, m.outputs.len(), &m.config_hash[..12]);
            0
        }
        Err(e) => {
            eprintln!("jamshield {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}
