//! Command-line run driver: train, eval, baseline, oracle and sweep.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{grid_oracle, grid_oracle_table, random_coefficients_policy, OracleResult};
use crate::channel::sample_channels;
use crate::config::{load_config, RunConfig};
use crate::ddpg::{greedy_rollout, seeded_streams, DdpgAgent, EpisodeMetrics, Trainer, TrainerCheckpoint};
use crate::env::StarRisEnv;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "episode,mean_scaled_reward,mean_ee,min_rate,mean_power,violations";
pub const SUMMARY_HEADER: &str = "axis,value,seeds,mean_ee,std_ee,median_ee";

#[derive(Debug, Parser)]
#[command(name = "starris", version, about = "STAR-RIS NOMA energy-efficiency simulator with a DDPG optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Train an agent and write per-episode metrics plus a checkpoint.
    Train(Flags),
    /// Score a trained policy greedily on fresh channel realizations.
    Eval(Flags),
    /// Run the random-coefficients reference policy.
    Baseline(Flags),
    /// Exhaustive grid search on one seeded channel realization.
    Oracle(Flags),
    /// Train and evaluate across one configuration axis and several seeds.
    Sweep(Flags),
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Train(_) => "train",
            Verb::Eval(_) => "eval",
            Verb::Baseline(_) => "baseline",
            Verb::Oracle(_) => "oracle",
            Verb::Sweep(_) => "sweep",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Verb::Train(f) | Verb::Eval(f) | Verb::Baseline(f) | Verb::Oracle(f) | Verb::Sweep(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration; unset fields take the reference defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// For sweeps, the first of the consecutive seeds used.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "pmax-dbm", allow_negative_numbers = true)]
    pub pmax_dbm: Option<f64>,
    #[arg(long)]
    pub antennas: Option<usize>,
    #[arg(long)]
    pub elements: Option<usize>,
    #[arg(long = "users-t")]
    pub users_t: Option<usize>,
    #[arg(long = "users-r")]
    pub users_r: Option<usize>,
    #[arg(long)]
    pub rmin: Option<f64>,
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Fully resolved run description, echoed next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedRun {
    pub mode: String,
    pub seed: u64,
    pub out: PathBuf,
    pub config: RunConfig,
    /// Linear-unit parameters the simulator actually used.
    pub system: crate::phy::SystemConfig,
}

pub fn resolve(verb: &str, flags: &Flags) -> Result<ResolvedRun> {
    let mut cfg = match &flags.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = flags.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = &flags.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = flags.episodes {
        cfg.episodes = v;
    }
    if let Some(v) = flags.steps {
        cfg.steps = v;
    }
    if let Some(v) = flags.pmax_dbm {
        cfg.system.p_max_dbm = v;
    }
    if let Some(v) = flags.antennas {
        cfg.channel.antennas = v;
    }
    if let Some(v) = flags.elements {
        cfg.channel.elements = v;
    }
    if let Some(v) = flags.users_t {
        cfg.channel.users_t = v;
    }
    if let Some(v) = flags.users_r {
        cfg.channel.users_r = v;
    }
    if let Some(v) = flags.rmin {
        cfg.system.r_min = v;
    }
    if let Some(v) = &flags.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    if verb == "sweep" {
        if let Some(first) = flags.seed {
            let n = cfg.sweep.seeds.len() as u64;
            cfg.sweep.seeds = (first..first + n).collect();
        }
    }
    cfg.validate()?;
    let seed = match (verb, cfg.seed) {
        (_, Some(s)) => s,
        ("train" | "eval", None) => {
            return Err(Error::Config {
                path: "seed".into(),
                message: format!("a seed is required for {verb}"),
            })
        }
        (_, None) => cfg.sweep.seeds[0],
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(verb));
    Ok(ResolvedRun {
        mode: verb.to_string(),
        seed,
        out,
        system: cfg.system(),
        config: cfg,
    })
}

pub fn fmt_f64(x: f64) -> String {
    // Display never switches to exponent notation
    format!("{x}")
}

fn metrics_line(m: &EpisodeMetrics) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        m.episode,
        fmt_f64(m.mean_scaled_reward),
        fmt_f64(m.mean_ee),
        fmt_f64(m.min_rate),
        fmt_f64(m.mean_power),
        m.violations
    )
}

/// Appends rows as they arrive so an aborted run keeps what it logged.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{METRICS_HEADER}")?;
        Ok(Self { file })
    }

    pub fn push(&mut self, m: &EpisodeMetrics) -> Result<()> {
        self.file.write_all(metrics_line(m).as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn write_metrics(path: &Path, log: &[EpisodeMetrics]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for m in log {
        w.push(m)?;
    }
    Ok(())
}

pub fn write_echo(run: &ResolvedRun) -> Result<()> {
    fs::write(run.out.join("config.json"), serde_json::to_string_pretty(run)?)?;
    Ok(())
}

/// Environment for a run: fresh channels per episode, or one realization
/// drawn from the seed when `channel.fixed` is set.
pub fn build_env(cfg: &RunConfig, seed: u64) -> Result<StarRisEnv> {
    let sys = cfg.system();
    if cfg.channel.fixed {
        let ch = fixed_channel(cfg, seed)?;
        StarRisEnv::with_fixed_channel(sys, cfg.agent.reward_scale, ch)
    } else {
        StarRisEnv::new(sys, cfg.agent.reward_scale)
    }
}

/// The realization used by fixed-channel training and the oracle.
pub fn fixed_channel(cfg: &RunConfig, seed: u64) -> Result<crate::channel::ChannelRealization> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(3);
    sample_channels(&cfg.system().channel, &mut r)
}

pub struct TrainOutcome {
    pub log: Vec<EpisodeMetrics>,
    pub trainer: Trainer,
}

/// Trains for `cfg.episodes × cfg.steps`. With `out`, metrics stream to
/// `metrics.csv` and checkpoints land in `checkpoint.json`.
pub fn train_run(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<TrainOutcome> {
    let env = build_env(cfg, seed)?;
    let mut trainer = Trainer::new(env, cfg.agent.clone(), seed)?;
    let mut writer = match out {
        Some(dir) => Some(MetricsWriter::create(&dir.join("metrics.csv"))?),
        None => None,
    };
    let every = cfg.checkpoint_every;
    let log = trainer.train(cfg.episodes, cfg.steps, |m, t| {
        if let Some(w) = writer.as_mut() {
            w.push(m)?;
        }
        if let (Some(dir), true) = (out, every > 0 && (m.episode + 1) % every == 0) {
            t.checkpoint().save(&dir.join("checkpoint.json"))?;
        }
        Ok(())
    })?;
    if let Some(dir) = out {
        trainer.checkpoint().save(&dir.join("checkpoint.json"))?;
    }
    Ok(TrainOutcome { log, trainer })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub realization: usize,
    pub mean_ee: f64,
    pub mean_reward: f64,
    pub min_rate: f64,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean_ee: f64,
    pub mean_reward: f64,
    pub feasible_fraction: f64,
}

/// Greedy policy on `cfg.eval.realizations` channel draws from a stream
/// disjoint from training.
pub fn evaluate_agent(agent: &DdpgAgent, cfg: &RunConfig, seed: u64) -> Result<EvalSummary> {
    let mut env = build_env(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut rows = Vec::with_capacity(cfg.eval.realizations);
    for realization in 0..cfg.eval.realizations {
        let r = greedy_rollout(agent, &mut env, cfg.eval.steps, &mut rng)?;
        rows.push(EvalRow {
            realization,
            mean_ee: r.mean_ee,
            mean_reward: r.mean_reward,
            min_rate: r.last.min_rate,
            feasible_fraction: r.feasible_fraction,
        });
    }
    let n = rows.len() as f64;
    let avg = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(EvalSummary {
        mean_ee: avg(|r| r.mean_ee),
        mean_reward: avg(|r| r.mean_reward),
        feasible_fraction: avg(|r| r.feasible_fraction),
        rows,
    })
}

/// Same channel sequence as training with this seed, random coefficients.
pub fn baseline_run(cfg: &RunConfig, seed: u64) -> Result<Vec<EpisodeMetrics>> {
    let mut env = build_env(cfg, seed)?;
    let (_, mut env_rng, mut policy_rng) = seeded_streams(seed);
    random_coefficients_policy(&mut env, cfg.episodes, cfg.steps, &mut env_rng, &mut policy_rng)
}

pub fn oracle_run(cfg: &RunConfig, seed: u64, table: Option<&Path>) -> Result<OracleResult> {
    let ch = fixed_channel(cfg, seed)?;
    let sys = cfg.system();
    match table {
        Some(path) => grid_oracle_table(&ch, &sys, &cfg.oracle.grid, cfg.oracle.budget, File::create(path)?),
        None => grid_oracle(&ch, &sys, &cfg.oracle.grid, cfg.oracle.budget),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub seeds: Vec<u64>,
    pub ee: Vec<f64>,
    pub mean_ee: f64,
    pub std_ee: f64,
    pub median_ee: f64,
}

pub fn mean_std_median(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    let median = if s.len() % 2 == 1 { s[mid] } else { 0.5 * (s[mid - 1] + s[mid]) };
    (mean, var.sqrt(), median)
}

/// Train + greedy evaluation for every (axis value, seed) pair.
/// `on_run` sees each finished run, e.g. for progress output.
pub fn sweep_run(
    cfg: &RunConfig,
    out: Option<&Path>,
    mut on_run: impl FnMut(f64, u64, &EvalSummary),
) -> Result<Vec<SweepPoint>> {
    let axis = cfg.sweep.axis;
    let mut points = Vec::new();
    let mut summary = match out {
        Some(dir) => {
            let mut f = File::create(dir.join("summary.csv"))?;
            writeln!(f, "{SUMMARY_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    for &value in &cfg.sweep.values {
        let point_cfg = cfg.with_axis(axis, value);
        point_cfg.validate()?;
        let mut ee = Vec::new();
        for &seed in &cfg.sweep.seeds {
            let run_dir = match out {
                Some(dir) => {
                    let d = dir.join(format!("{}_{}", axis.name(), fmt_f64(value))).join(format!("seed_{seed}"));
                    fs::create_dir_all(&d)?;
                    Some(d)
                }
                None => None,
            };
            let outcome = train_run(&point_cfg, seed, run_dir.as_deref())?;
            let eval = evaluate_agent(&outcome.trainer.agent, &point_cfg, seed)?;
            on_run(value, seed, &eval);
            ee.push(eval.mean_ee);
        }
        let (mean_ee, std_ee, median_ee) = mean_std_median(&ee);
        if let Some(f) = summary.as_mut() {
            let seeds: Vec<String> = cfg.sweep.seeds.iter().map(u64::to_string).collect();
            writeln!(
                f,
                "{},{},{},{},{},{}",
                axis.name(),
                fmt_f64(value),
                seeds.join(";"),
                fmt_f64(mean_ee),
                fmt_f64(std_ee),
                fmt_f64(median_ee)
            )?;
            f.flush()?;
        }
        points.push(SweepPoint {
            value,
            seeds: cfg.sweep.seeds.clone(),
            ee,
            mean_ee,
            std_ee,
            median_ee,
        });
    }
    Ok(points)
}

fn load_agent(run: &ResolvedRun) -> Result<DdpgAgent> {
    let path = run
        .config
        .checkpoint
        .clone()
        .unwrap_or_else(|| run.out.join("checkpoint.json"));
    let ckpt = TrainerCheckpoint::load(&path)?;
    let agent = DdpgAgent::from_state(ckpt.agent)?;
    let sys = run.config.system();
    if agent.state_dim() != crate::env::state_dim(&sys.channel) || agent.action_dim() != crate::env::action_dim(&sys.channel) {
        return Err(Error::InvalidArgument(format!(
            "checkpoint {} was trained for different system dimensions",
            path.display()
        )));
    }
    Ok(agent)
}

/// Executes one verb; everything the run produces lands in the output directory.
pub fn execute(cli: &Cli) -> Result<()> {
    let verb = cli.verb.name();
    let run = resolve(verb, cli.verb.flags())?;
    fs::create_dir_all(&run.out)?;
    write_echo(&run)?;
    let cfg = &run.config;
    match &cli.verb {
        Verb::Train(_) => {
            let outcome = train_run(cfg, run.seed, Some(&run.out))?;
            let last = outcome.log.last().expect("at least one episode");
            println!(
                "trained {} episodes; last episode mean EE {} bits/J, {} violations",
                outcome.log.len(),
                fmt_f64(last.mean_ee),
                last.violations
            );
        }
        Verb::Eval(_) => {
            let agent = load_agent(&run)?;
            let summary = evaluate_agent(&agent, cfg, run.seed)?;
            let mut f = File::create(run.out.join("eval.csv"))?;
            writeln!(f, "realization,mean_ee,mean_reward,min_rate,feasible_fraction")?;
            for r in &summary.rows {
                writeln!(
                    f,
                    "{},{},{},{},{}",
                    r.realization,
                    fmt_f64(r.mean_ee),
                    fmt_f64(r.mean_reward),
                    fmt_f64(r.min_rate),
                    fmt_f64(r.feasible_fraction)
                )?;
            }
            println!(
                "greedy EE {} bits/J over {} realizations, feasible fraction {}",
                fmt_f64(summary.mean_ee),
                summary.rows.len(),
                fmt_f64(summary.feasible_fraction)
            );
        }
        Verb::Baseline(_) => {
            let log = baseline_run(cfg, run.seed)?;
            write_metrics(&run.out.join("metrics.csv"), &log)?;
            let mean = log.iter().map(|m| m.mean_ee).sum::<f64>() / log.len() as f64;
            println!("random coefficients: mean EE {} bits/J", fmt_f64(mean));
        }
        Verb::Oracle(_) => {
            let table = cfg.oracle.table.then(|| run.out.join("oracle_table.csv"));
            let result = oracle_run(cfg, run.seed, table.as_deref())?;
            fs::write(run.out.join("oracle.json"), serde_json::to_string_pretty(&result)?)?;
            let mut f = File::create(run.out.join("oracle.csv"))?;
            writeln!(f, "points,feasible_points,best_feasible_ee,best_any_ee")?;
            writeln!(
                f,
                "{},{},{},{}",
                result.points,
                result.feasible_points,
                fmt_f64(result.best_feasible_ee()),
                fmt_f64(result.best_any.energy_efficiency)
            )?;
            println!(
                "grid of {} points: best feasible EE {} bits/J ({} feasible)",
                result.points,
                fmt_f64(result.best_feasible_ee()),
                result.feasible_points
            );
        }
        Verb::Sweep(_) => {
            let points = sweep_run(cfg, Some(&run.out), |value, seed, eval| {
                eprintln!(
                    "{} = {} seed {}: greedy EE {}",
                    cfg.sweep.axis.name(),
                    fmt_f64(value),
                    seed,
                    fmt_f64(eval.mean_ee)
                );
            })?;
            for p in points {
                println!("{} = {}: mean EE {} ± {}", cfg.sweep.axis.name(), fmt_f64(p.value), fmt_f64(p.mean_ee), fmt_f64(p.std_ee));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let (m, s, med) = mean_std_median(&[1.0, 2.0, 6.0]);
        assert_eq!(m, 3.0);
        assert!((s - 7f64.sqrt()).abs() < 1e-12);
        assert_eq!(med, 2.0);
        assert_eq!(mean_std_median(&[4.0, 1.0]).2, 2.5);
        assert_eq!(mean_std_median(&[5.0]).1, 0.0);
    }

    #[test]
    fn seed_is_required_for_training() {
        let e = resolve("train", &Flags::default()).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "seed"));
        assert!(resolve("baseline", &Flags::default()).is_ok());
    }

    #[test]
    fn flags_override_config() {
        let flags = Flags {
            seed: Some(3),
            pmax_dbm: Some(30.0),
            antennas: Some(4),
            elements: Some(10),
            users_t: Some(1),
            users_r: Some(3),
            rmin: Some(0.2),
            episodes: Some(2),
            steps: Some(5),
            ..Flags::default()
        };
        let run = resolve("train", &flags).unwrap();
        assert_eq!(run.seed, 3);
        assert!((run.system.p_max - 1.0).abs() < 1e-12);
        assert_eq!((run.system.channel.antennas, run.system.channel.elements), (4, 10));
        assert_eq!((run.system.channel.users_t, run.system.channel.users_r), (1, 3));
        assert_eq!(run.system.r_min, 0.2);
        assert_eq!((run.config.episodes, run.config.steps), (2, 5));

        let sweep = resolve("sweep", &Flags { seed: Some(10), ..Flags::default() }).unwrap();
        assert_eq!(sweep.config.sweep.seeds, vec![10, 11, 12]);
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(fmt_f64(1e-7), "0.0000001");
        assert_eq!(fmt_f64(46100.0), "46100");
        assert_eq!(fmt_f64(0.25), "0.25");
    }
}
