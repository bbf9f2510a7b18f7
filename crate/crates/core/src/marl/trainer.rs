//! IPPO / MAPPO trainers.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, std_dev, Matrix};
use crate::rng::{derive_seed, keyed_stream, stream, SimRng, Stream};

use super::adam::{clip_global_norm, Adam};
use super::api::{AgentAction, AgentSpec, HeadSpec, MultiAgentEnv};
use super::checkpoint::{find, Tensor};
use super::dist::{entropy_grad, greedy_action, log_prob_grad, sample_actions, LOG_STD_MAX, LOG_STD_MIN};
use super::gae::compute_gae;
use super::kl::{kl_grad_p, kl_proximity, HeadDist};
use super::mlp::{Mlp, MlpSpec};
use super::ppo::{ppo_clip_grad, ppo_clip_objective};
use super::schedule::{batch_at, lr_at};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ippo,
    Mappo,
    MappoDet,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ippo, Variant::Mappo, Variant::MappoDet];

    pub fn centralized_critic(self) -> bool {
        !matches!(self, Variant::Ippo)
    }

    pub fn uses_detector(self) -> bool {
        matches!(self, Variant::MappoDet)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ippo => "ippo",
            Variant::Mappo => "mappo",
            Variant::MappoDet => "mappo-det",
        }
    }

    fn code(self) -> f64 {
        match self {
            Variant::Ippo => 0.0,
            Variant::Mappo => 1.0,
            Variant::MappoDet => 2.0,
        }
    }

    fn from_code(c: f64) -> Result<Self> {
        match c as i64 {
            0 => Ok(Variant::Ippo),
            1 => Ok(Variant::Mappo),
            2 => Ok(Variant::MappoDet),
            _ => Err(Error::Format(format!("unknown variant code {c}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ippo" => Ok(Variant::Ippo),
            "mappo" => Ok(Variant::Mappo),
            "mappo-det" => Ok(Variant::MappoDet),
            _ => Err(Error::config("variant", "expected ippo, mappo or mappo-det")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub kl_chi: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub batch_start: usize,
    pub batch_end: usize,
    /// Rollout + update iterations.
    pub epochs: usize,
    pub ppo_epochs: usize,
    pub episodes_per_iter: usize,
    pub workers: usize,
    /// Size of the pool of distinct episode seeds cycled during training.
    pub training_episodes: usize,
    pub hidden: Vec<usize>,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    /// Decay of the running return moments used to standardise critic targets.
    pub return_ema: f64,
    pub max_episode_steps: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            kl_chi: 0.0,
            lr_start: 1e-3,
            lr_end: 1e-5,
            batch_start: 32,
            batch_end: 1024,
            epochs: 400,
            ppo_epochs: 4,
            episodes_per_iter: 2,
            workers: 2,
            training_episodes: 49,
            hidden: vec![128, 128],
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            init_log_std: -0.5,
            return_ema: 0.9,
            max_episode_steps: 10_000,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("trainer.gamma", "gamma ∈ [0,1)"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("trainer.gae_lambda", "lambda ∈ [0,1]"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config("trainer.clip_eps", "eps ∈ (0,1)"));
        }
        if !(self.kl_chi >= 0.0) {
            return Err(Error::config("trainer.kl_chi", "chi must be >= 0"));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return Err(Error::config("trainer.lr_end", "learning rate must decay from lr_start to lr_end > 0"));
        }
        if self.batch_start < 1 || self.batch_end < self.batch_start {
            return Err(Error::config("trainer.batch_end", "batch size must grow from batch_start >= 1"));
        }
        for (k, v) in [
            ("epochs", self.epochs),
            ("ppo_epochs", self.ppo_epochs),
            ("episodes_per_iter", self.episodes_per_iter),
            ("workers", self.workers),
            ("training_episodes", self.training_episodes),
            ("max_episode_steps", self.max_episode_steps),
        ] {
            if v < 1 {
                return Err(Error::config(format!("trainer.{k}"), "must be >= 1"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("trainer.hidden", "need at least one positive hidden width"));
        }
        if !(0.0..1.0).contains(&self.return_ema) {
            return Err(Error::config("trainer.return_ema", "must lie in [0,1)"));
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return Err(Error::config("trainer.init_log_std", "must lie in [-5, 2]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPolicy {
    pub heads: HeadSpec,
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    pub ret_mean: f64,
    pub ret_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub variant: Variant,
    pub agents: Vec<AgentPolicy>,
}

impl PolicyParameters {
    pub fn init(specs: &[AgentSpec], variant: Variant, hidden: &[usize], init_log_std: f64, rng: &mut SimRng) -> Result<Self> {
        let joint: usize = specs.iter().map(|s| s.obs_dim).sum();
        let mut agents = Vec::with_capacity(specs.len());
        for s in specs {
            let mut aw = vec![s.obs_dim];
            aw.extend_from_slice(hidden);
            aw.push(s.heads.n_outputs());
            let mut cw = vec![if variant.centralized_critic() { joint } else { s.obs_dim }];
            cw.extend_from_slice(hidden);
            cw.push(1);
            agents.push(AgentPolicy {
                heads: s.heads.clone(),
                actor: Mlp::new(MlpSpec::new(aw)?, 0.01, rng),
                log_std: vec![init_log_std; s.heads.continuous],
                critic: Mlp::new(MlpSpec::new(cw)?, 1.0, rng),
                ret_mean: 0.0,
                ret_std: 1.0,
            });
        }
        Ok(Self { variant, agents })
    }

    pub fn critic_input(&self, i: usize, obs: &[Vec<f64>]) -> Vec<f64> {
        if self.variant.centralized_critic() {
            obs.concat()
        } else {
            obs[i].clone()
        }
    }

    /// Critic estimate in return units.
    pub fn value(&self, i: usize, obs: &[Vec<f64>]) -> Result<f64> {
        let a = &self.agents[i];
        let v = a.critic.predict(&self.critic_input(i, obs))?[0];
        Ok(v * a.ret_std + a.ret_mean)
    }

    /// Greedy (mode) or sampled joint action.
    pub fn act(&self, obs: &[Vec<f64>], greedy: bool, rng: &mut SimRng) -> Result<Vec<AgentAction>> {
        self.agents
            .iter()
            .zip(obs)
            .map(|(a, o)| {
                let out = a.actor.predict(o)?;
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence("non-finite actor output".into()));
                }
                if greedy {
                    Ok(greedy_action(&out, &a.heads))
                } else {
                    Ok(sample_actions(&out, &a.log_std, &a.heads, rng)?.action)
                }
            })
            .collect()
    }

    pub fn to_tensors(&self) -> Result<Vec<Tensor>> {
        let mut ts = vec![Tensor::vector("meta.variant", vec![self.variant.code()])];
        for (i, a) in self.agents.iter().enumerate() {
            let p = format!("agent{i}");
            ts.push(Tensor::vector(
                format!("{p}.heads.categorical"),
                a.heads.categorical.iter().map(|&k| k as f64).collect(),
            ));
            ts.push(Tensor::vector(format!("{p}.heads.continuous"), vec![a.heads.continuous as f64]));
            for (net, m) in [("actor", &a.actor), ("critic", &a.critic)] {
                for (l, (w, b)) in m.weights.iter().zip(&m.biases).enumerate() {
                    ts.push(Tensor::new(
                        format!("{p}.{net}.w{l}"),
                        vec![w.rows as u64, w.cols as u64],
                        w.data.clone(),
                    )?);
                    ts.push(Tensor::vector(format!("{p}.{net}.b{l}"), b.clone()));
                }
            }
            ts.push(Tensor::vector(format!("{p}.log_std"), a.log_std.clone()));
            ts.push(Tensor::vector(format!("{p}.return_stats"), vec![a.ret_mean, a.ret_std]));
        }
        Ok(ts)
    }

    pub fn from_tensors(ts: &[Tensor]) -> Result<Self> {
        let variant = Variant::from_code(find(ts, "meta.variant")?.data[0])?;
        let mut agents = Vec::new();
        let mut i = 0;
        while ts.iter().any(|t| t.name == format!("agent{i}.log_std")) {
            let p = format!("agent{i}");
            let load_net = |net: &str| -> Result<Mlp> {
                let mut weights = Vec::new();
                let mut biases = Vec::new();
                let mut l = 0;
                while let Ok(w) = find(ts, &format!("{p}.{net}.w{l}")) {
                    if w.dims.len() != 2 {
                        return Err(Error::Format(format!("{} is not a matrix", w.name)));
                    }
                    let (r, c) = (w.dims[0] as usize, w.dims[1] as usize);
                    weights.push(Matrix::from_vec(r, c, w.data.clone())?);
                    let b = find(ts, &format!("{p}.{net}.b{l}"))?;
                    if b.data.len() != r {
                        return Err(Error::Format(format!("{} has the wrong length", b.name)));
                    }
                    biases.push(b.data.clone());
                    l += 1;
                }
                if weights.is_empty() {
                    return Err(Error::Format(format!("missing {p}.{net} layers")));
                }
                let mut widths = vec![weights[0].cols];
                for w in &weights {
                    widths.push(w.rows);
                }
                Ok(Mlp {
                    spec: MlpSpec::new(widths)?,
                    weights,
                    biases,
                })
            };
            let stats = &find(ts, &format!("{p}.return_stats"))?.data;
            agents.push(AgentPolicy {
                heads: HeadSpec {
                    categorical: find(ts, &format!("{p}.heads.categorical"))?
                        .data
                        .iter()
                        .map(|&k| k as usize)
                        .collect(),
                    continuous: find(ts, &format!("{p}.heads.continuous"))?.data[0] as usize,
                },
                actor: load_net("actor")?,
                log_std: find(ts, &format!("{p}.log_std"))?.data.clone(),
                critic: load_net("critic")?,
                ret_mean: stats[0],
                ret_std: stats[1],
            });
            i += 1;
        }
        if agents.is_empty() {
            return Err(Error::Format("no agents in checkpoint".into()));
        }
        Ok(Self { variant, agents })
    }
}

#[derive(Debug, Clone, Default)]
struct AgentSteps {
    obs: Vec<Vec<f64>>,
    critic_in: Vec<Vec<f64>>,
    discrete: Vec<Vec<usize>>,
    pre: Vec<Vec<f64>>,
    logp: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    terminal_value: f64,
}

struct Episode {
    agents: Vec<AgentSteps>,
    cumulative_reward: f64,
}

fn rollout(params: &PolicyParameters, env: &mut dyn MultiAgentEnv, episode_seed: u64, rng: &mut SimRng, max_steps: usize) -> Result<Episode> {
    let n = params.agents.len();
    let mut obs = env.reset(episode_seed)?;
    if obs.len() != n {
        return Err(Error::Shape(format!("environment has {} agents, policy has {n}", obs.len())));
    }
    let mut agents = vec![AgentSteps::default(); n];
    let mut cumulative = 0.0;
    for _ in 0..max_steps {
        let mut actions = Vec::with_capacity(n);
        for (i, a) in params.agents.iter().enumerate() {
            let out = a.actor.predict(&obs[i])?;
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence("non-finite actor output during rollout".into()));
            }
            let s = sample_actions(&out, &a.log_std, &a.heads, rng)?;
            let ci = params.critic_input(i, &obs);
            let v = params.value(i, &obs)?;
            let st = &mut agents[i];
            st.obs.push(obs[i].clone());
            st.critic_in.push(ci);
            st.discrete.push(s.action.discrete.clone());
            st.pre.push(s.pre_squash.clone());
            st.logp.push(s.log_prob);
            st.values.push(v);
            actions.push(s.action);
        }
        let tr = env.step(&actions)?;
        for (i, r) in tr.rewards.iter().enumerate() {
            agents[i].rewards.push(*r);
        }
        cumulative += mean(&tr.rewards);
        obs = tr.obs;
        if tr.done {
            break;
        }
    }
    // Episodes end on a time limit, so the last state is bootstrapped.
    for (i, st) in agents.iter_mut().enumerate() {
        st.terminal_value = params.value(i, &obs)?;
    }
    Ok(Episode {
        agents,
        cumulative_reward: cumulative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub cumulative_reward: f64,
    pub lr: f64,
    pub batch: usize,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParameters,
    pub curve: Vec<EpochStats>,
}

pub type EnvFactory<'a> = dyn Fn() -> Result<Box<dyn MultiAgentEnv>> + Sync + 'a;

/// Worker count: the configured value, capped by `JAMSHIELD_THREADS` when set.
pub fn worker_count(configured: usize) -> usize {
    let cap = std::env::var("JAMSHIELD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0);
    cap.map_or(configured, |c| configured.min(c)).max(1)
}

struct Flat {
    obs: Vec<Vec<f64>>,
    critic_in: Vec<Vec<f64>>,
    discrete: Vec<Vec<usize>>,
    pre: Vec<Vec<f64>>,
    logp: Vec<f64>,
    adv: Vec<f64>,
    target: Vec<f64>,
}

/// Pairs `(head of i, head of j)` that share a support, for the proximity term.
fn matching_heads(a: &HeadSpec, b: &HeadSpec) -> Vec<(usize, usize, usize)> {
    let off = |h: &HeadSpec, k: usize| h.categorical[..k].iter().sum::<usize>();
    let mut used = vec![false; b.categorical.len()];
    let mut pairs = Vec::new();
    for (hi, &k) in a.categorical.iter().enumerate() {
        if let Some(hj) = (0..b.categorical.len()).find(|&j| !used[j] && b.categorical[j] == k) {
            used[hj] = true;
            pairs.push((off(a, hi), off(b, hj), k));
        }
    }
    pairs
}

struct Optims {
    actor: Vec<Adam>,
    critic: Vec<Adam>,
}

fn to_matrix(rows: &[&Vec<f64>]) -> Result<Matrix> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r);
    }
    Matrix::from_vec(rows.len(), cols, data)
}

#[allow(clippy::too_many_arguments)]
fn update_minibatch(
    params: &mut PolicyParameters,
    opt: &mut Optims,
    flats: &[Flat],
    idx: &[usize],
    cfg: &TrainerConfig,
    lr: f64,
    stats: &mut [f64; 4],
) -> Result<()> {
    let n_agents = params.agents.len();
    let b = idx.len() as f64;
    // Detached outputs of every actor on this minibatch, used by the proximity term.
    let outputs: Vec<Matrix> = (0..n_agents)
        .map(|i| {
            let rows: Vec<&Vec<f64>> = idx.iter().map(|&r| &flats[i].obs[r]).collect();
            Ok(params.agents[i].actor.forward(&to_matrix(&rows)?)?.0)
        })
        .collect::<Result<_>>()?;

    for i in 0..n_agents {
        let f = &flats[i];
        let rows: Vec<&Vec<f64>> = idx.iter().map(|&r| &f.obs[r]).collect();
        let x = to_matrix(&rows)?;
        let agent = &params.agents[i];
        let (out, cache) = agent.actor.forward(&x)?;
        let mut d_out = Matrix::zeros(out.rows, out.cols);
        let mut d_ls = vec![0.0; agent.log_std.len()];
        let mut objective = 0.0;
        let mut entropy = 0.0;
        let mut kl_total = 0.0;
        for (row, &r) in idx.iter().enumerate() {
            let o = out.row(row);
            let (lp, g_lp, g_ls) = log_prob_grad(o, &agent.log_std, &agent.heads, &f.discrete[r], &f.pre[r])?;
            let ratio = (lp - f.logp[r]).exp();
            let a = f.adv[r];
            objective += ppo_clip_objective(ratio, a, cfg.clip_eps);
            let coef = -ppo_clip_grad(ratio, a, cfg.clip_eps) * ratio / b;
            let (h, g_h, g_hls) = entropy_grad(o, &agent.log_std, &agent.heads)?;
            entropy += h;
            let dr = d_out.row_mut(row);
            for k in 0..dr.len() {
                dr[k] += coef * g_lp[k] - cfg.entropy_coef / b * g_h[k];
            }
            for k in 0..d_ls.len() {
                d_ls[k] += coef * g_ls[k] - cfg.entropy_coef / b * g_hls[k];
            }
            if cfg.kl_chi > 0.0 {
                for j in (0..n_agents).filter(|&j| j != i) {
                    let other = &params.agents[j];
                    let oj = outputs[j].row(row);
                    for (oi_off, oj_off, k) in matching_heads(&agent.heads, &other.heads) {
                        let p = HeadDist::Categorical {
                            logits: o[oi_off..oi_off + k].to_vec(),
                        };
                        let q = HeadDist::Categorical {
                            logits: oj[oj_off..oj_off + k].to_vec(),
                        };
                        kl_total += kl_proximity(&p, &q)?;
                        let g = kl_grad_p(&p, &q)?;
                        for (t, gv) in g.iter().enumerate() {
                            dr[oi_off + t] += cfg.kl_chi / b * gv;
                        }
                    }
                    let (ci, cj) = (agent.heads.continuous, other.heads.continuous);
                    if ci > 0 && ci == cj {
                        let mi = agent.heads.n_logits();
                        let mj = other.heads.n_logits();
                        let p = HeadDist::Gaussian {
                            mean: o[mi..mi + ci].to_vec(),
                            log_std: agent.log_std.clone(),
                        };
                        let q = HeadDist::Gaussian {
                            mean: oj[mj..mj + cj].to_vec(),
                            log_std: other.log_std.clone(),
                        };
                        kl_total += kl_proximity(&p, &q)?;
                        let g = kl_grad_p(&p, &q)?;
                        for t in 0..ci {
                            dr[mi + t] += cfg.kl_chi / b * g[t];
                            d_ls[t] += cfg.kl_chi / b * g[ci + t];
                        }
                    }
                }
            }
        }
        if !(objective.is_finite() && entropy.is_finite() && kl_total.is_finite()) {
            return Err(Error::Divergence(format!("non-finite actor loss for agent {i}")));
        }
        let (grads, _) = agent.actor.backward(&cache, &d_out)?;
        let mut flat = grads.flat();
        flat.extend_from_slice(&d_ls);
        clip_global_norm(&mut flat, cfg.max_grad_norm);
        let agent = &mut params.agents[i];
        let mut p = agent.actor.params_flat();
        p.extend_from_slice(&agent.log_std);
        opt.actor[i].step(&mut p, &flat, lr);
        let n_net = agent.actor.n_params();
        agent.actor.set_params_flat(&p[..n_net])?;
        for (ls, v) in agent.log_std.iter_mut().zip(&p[n_net..]) {
            *ls = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }

        let crow: Vec<&Vec<f64>> = idx.iter().map(|&r| &f.critic_in[r]).collect();
        let cx = to_matrix(&crow)?;
        let (v, ccache) = agent.critic.forward(&cx)?;
        let mut dv = Matrix::zeros(v.rows, 1);
        let mut vloss = 0.0;
        for (row, &r) in idx.iter().enumerate() {
            let e = v.data[row] - f.target[r];
            vloss += e * e / b;
            dv.data[row] = 2.0 * cfg.value_coef * e / b;
        }
        if !vloss.is_finite() {
            return Err(Error::Divergence(format!("non-finite value loss for agent {i}")));
        }
        let (cg, _) = agent.critic.backward(&ccache, &dv)?;
        let mut cflat = cg.flat();
        clip_global_norm(&mut cflat, cfg.max_grad_norm);
        let mut cp = agent.critic.params_flat();
        opt.critic[i].step(&mut cp, &cflat, lr);
        agent.critic.set_params_flat(&cp)?;

        stats[0] += objective / b;
        stats[1] += vloss;
        stats[2] += entropy / b;
        stats[3] += kl_total / b;
    }
    Ok(())
}

/// Train `variant` on environments built by `factory`. Runs are reproducible
/// for a fixed seed regardless of the worker count.
pub fn train(cfg: &TrainerConfig, variant: Variant, factory: &EnvFactory<'_>, seed: u64) -> Result<TrainOutput> {
    cfg.validate()?;
    let specs = factory()?.agent_specs();
    let mut params = PolicyParameters::init(&specs, variant, &cfg.hidden, cfg.init_log_std, &mut stream(seed, Stream::Init))?;
    let mut opt = Optims {
        actor: params
            .agents
            .iter()
            .map(|a| Adam::new(a.actor.n_params() + a.log_std.len()))
            .collect(),
        critic: params.agents.iter().map(|a| Adam::new(a.critic.n_params())).collect(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg.workers))
        .build()
        .map_err(|e| Error::config("trainer.workers", e.to_string()))?;
    let mut stats_init = vec![false; params.agents.len()];
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
        let snapshot = &params;
        let episodes: Vec<Episode> = pool.install(|| {
            (0..cfg.episodes_per_iter)
                .into_par_iter()
                .map(|e| {
                    let k = (epoch * cfg.episodes_per_iter + e) as u64;
                    let ep_seed = derive_seed(seed, k % cfg.training_episodes as u64);
                    let mut rng = keyed_stream(seed, Stream::Policy, k);
                    let mut env = factory()?;
                    rollout(snapshot, env.as_mut(), ep_seed, &mut rng, cfg.max_episode_steps)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let cumulative = mean(&episodes.iter().map(|e| e.cumulative_reward).collect::<Vec<_>>());

        let mut flats = Vec::with_capacity(params.agents.len());
        for i in 0..params.agents.len() {
            let mut adv = Vec::new();
            let mut ret = Vec::new();
            let mut fl = Flat {
                obs: Vec::new(),
                critic_in: Vec::new(),
                discrete: Vec::new(),
                pre: Vec::new(),
                logp: Vec::new(),
                adv: Vec::new(),
                target: Vec::new(),
            };
            for ep in &episodes {
                let st = &ep.agents[i];
                let (a, r) = compute_gae(&st.rewards, &st.values, st.terminal_value, cfg.gamma, cfg.gae_lambda);
                adv.extend(a);
                ret.extend(r);
                fl.obs.extend(st.obs.iter().cloned());
                fl.critic_in.extend(st.critic_in.iter().cloned());
                fl.discrete.extend(st.discrete.iter().cloned());
                fl.pre.extend(st.pre.iter().cloned());
                fl.logp.extend_from_slice(&st.logp);
            }
            let (am, asd) = (mean(&adv), std_dev(&adv));
            fl.adv = adv.iter().map(|a| (a - am) / (asd + 1e-8)).collect();
            let agent = &mut params.agents[i];
            let (rm, rs) = (mean(&ret), std_dev(&ret));
            if !stats_init[i] {
                agent.ret_mean = rm;
                agent.ret_std = rs.max(1e-3);
                stats_init[i] = true;
            } else {
                let beta = cfg.return_ema;
                let second = beta * (agent.ret_std.powi(2) + agent.ret_mean.powi(2)) + (1.0 - beta) * (rs * rs + rm * rm);
                agent.ret_mean = beta * agent.ret_mean + (1.0 - beta) * rm;
                agent.ret_std = (second - agent.ret_mean.powi(2)).max(1e-6).sqrt();
            }
            fl.target = ret.iter().map(|r| (r - agent.ret_mean) / agent.ret_std).collect();
            if fl.adv.iter().chain(&fl.target).any(|v| !v.is_finite()) {
                return Err(Error::Divergence("non-finite advantages or returns".into()));
            }
            flats.push(fl);
        }

        let n = flats[0].logp.len();
        let batch = batch_at(epoch, cfg.epochs, cfg.batch_start, cfg.batch_end).min(n).max(1);
        let mut mb_rng = keyed_stream(seed, Stream::Minibatch, epoch as u64);
        let mut stats = [0.0; 4];
        let mut n_mb = 0usize;
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.ppo_epochs {
            order.shuffle(&mut mb_rng);
            for chunk in order.chunks(batch) {
                update_minibatch(&mut params, &mut opt, &flats, chunk, cfg, lr, &mut stats)?;
                n_mb += 1;
            }
        }
        let denom = (n_mb * params.agents.len()).max(1) as f64;
        curve.push(EpochStats {
            epoch,
            cumulative_reward: cumulative,
            lr,
            batch,
            policy_objective: stats[0] / denom,
            value_loss: stats[1] / denom,
            entropy: stats[2] / denom,
            kl: stats[3] / denom,
        });
    }
    Ok(TrainOutput { params, curve })
}

/// Trailing moving average with window `w`.
pub fn smooth(v: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..v.len()).map(|i| mean(&v[(i + 1).saturating_sub(w)..=i])).collect()
}

/// Smoothing window used when reading convergence off a curve of `epochs` points.
pub fn convergence_window(epochs: usize) -> usize {
    (epochs / 20).max(1)
}

/// First epoch at which the seed-averaged, smoothed curve reaches `fraction`
/// of its final level (mean of the last tenth). When the final level is not
/// positive, or the curve starts above that target, the threshold is taken
/// on progress from the first value instead.
pub fn convergence_epoch(curves: &[Vec<f64>], fraction: f64, window: usize) -> Option<usize> {
    let len = curves.iter().map(Vec::len).min()?;
    if len == 0 {
        return None;
    }
    let avg: Vec<f64> = (0..len).map(|t| mean(&curves.iter().map(|c| c[t]).collect::<Vec<_>>())).collect();
    let s = smooth(&avg, window);
    let tail = (len / 10).max(1);
    let fin = mean(&s[len - tail..]);
    let start = s[0];
    let threshold = if fin > 0.0 && start < fraction * fin {
        fraction * fin
    } else {
        start + fraction * (fin - start)
    };
    if fin >= start {
        s.iter().position(|&x| x >= threshold)
    } else {
        s.iter().position(|&x| x <= threshold)
    }
}
