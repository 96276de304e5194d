use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{AdvisorId, EnvId, ExperimentConfig, ExperimentKind};
use super::csv::{round_sig6, EpisodeRecord};
use super::plot::Curve;
use super::stats::{mean, stderr};
use crate::advisors::{Advisor, SimulatedHuman, SimulatedHumanConfig, TableAdviceMode, TableAdvisor, TransferAdvisor};
use crate::agents::{
    policy_entropy, ActorAdvisor, ActorConfig, DoubleDqn, DpgActor, DqnConfig, RewardShapingTeacher, Trajectory,
};
use crate::env::{
    load_map, optimal_grid_policy, EnvState, Environment, GridEnv, GridPolicy, GridWorld, TableEnv, TerminalCause,
    FIVEROOMS_MAP, GRID1_MAP, GRID2_MAP,
};
use crate::error::{Error, Result};
use crate::nn::{softmax, MlpPolicy};
use crate::shaping::{sample, AdviceVector};

pub fn load_builtin_world(env: EnvId) -> Result<Option<GridWorld>> {
    let text = match env {
        EnvId::Table => return Ok(None),
        EnvId::Grid1 => GRID1_MAP,
        EnvId::Grid2 => GRID2_MAP,
        EnvId::FiveRooms => FIVEROOMS_MAP,
    };
    load_map(text).map(Some)
}

/// Read-only state shared by every run of an experiment.
struct Shared {
    world: Option<Arc<GridWorld>>,
    source: Option<MlpPolicy>,
}

enum Learner {
    Actor(DpgActor),
    ActorAdvisor(ActorAdvisor),
    Dqn { dqn: DoubleDqn, temperature: f64 },
}

impl Learner {
    fn actor_mut(&mut self) -> Option<&mut DpgActor> {
        match self {
            Learner::Actor(a) => Some(a),
            Learner::ActorAdvisor(aa) => Some(&mut aa.actor),
            Learner::Dqn { .. } => None,
        }
    }
}

struct Teacher {
    teacher: RewardShapingTeacher,
    oracle: GridPolicy,
}

fn actor_config(cfg: &ExperimentConfig) -> ActorConfig {
    ActorConfig {
        hidden: cfg.actor_hidden,
        learning_rate: cfg.actor_lr,
        update_period: cfg.update_period,
    }
}

fn dqn_config(cfg: &ExperimentConfig) -> DqnConfig {
    DqnConfig {
        hidden: cfg.critic_hidden,
        learning_rate: cfg.critic_lr,
        gamma: cfg.gamma,
        buffer_capacity: cfg.buffer_capacity,
        batch_size: cfg.batch_size,
        train_period: cfg.train_period,
        target_sync: cfg.target_sync,
    }
}

fn make_grid_env(world: &Arc<GridWorld>, options: bool) -> Result<GridEnv> {
    if options {
        GridEnv::with_options(world.clone())
    } else {
        Ok(GridEnv::new(world.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSource {
    pub policy: MlpPolicy,
    /// Episodes trained; zero when loaded from a snapshot.
    pub episodes: usize,
    /// Mean per-episode policy entropy over the last 100 training episodes.
    pub entropy: f64,
    pub converged: bool,
}

/// The transfer source policy: loaded from `cfg.source`, or trained with
/// vanilla policy gradient on `cfg.source_env` until the mean entropy over
/// the last 100 episodes falls below `cfg.source_entropy`.
pub fn transfer_source(cfg: &ExperimentConfig) -> Result<TransferSource> {
    if let Some(path) = &cfg.source {
        let policy = MlpPolicy::load(path)?;
        return Ok(TransferSource {
            policy,
            episodes: 0,
            entropy: f64::NAN,
            converged: true,
        });
    }
    let world = Arc::new(
        load_builtin_world(cfg.source_env)?
            .ok_or_else(|| Error::Config("transfer source must be a grid".into()))?,
    );
    let mut env = GridEnv::new(world);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.source_seed.unwrap_or(cfg.seed));
    let source_cfg = ActorConfig {
        learning_rate: cfg.source_lr,
        update_period: cfg.source_update_period,
        ..actor_config(cfg)
    };
    let mut actor = DpgActor::new(env.obs_dim(), env.n_actions(), source_cfg, &mut rng)?;
    let neutral = AdviceVector::neutral(env.n_actions());
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(100);
    for ep in 1..=cfg.source_episodes {
        let mut obs = env.reset();
        let mut traj = Trajectory::new();
        loop {
            let (a, mut step) = actor.act(&obs, &neutral, &mut rng)?;
            let res = env.step(a, &mut rng)?;
            step.reward = res.reward;
            traj.push(step);
            let done = res.done();
            obs = res.observation;
            if done {
                break;
            }
        }
        let states: Vec<_> = traj.steps.iter().map(|s| s.state.clone()).collect();
        let h = policy_entropy(actor.policy(), &states)?;
        if recent.len() == 100 {
            recent.pop_front();
        }
        recent.push_back(h);
        actor.finish_episode(traj, cfg.gamma)?;
        let avg = recent.iter().sum::<f64>() / recent.len() as f64;
        if recent.len() == 100 && avg < cfg.source_entropy {
            return Ok(TransferSource {
                policy: actor.policy().clone(),
                episodes: ep,
                entropy: avg,
                converged: true,
            });
        }
    }
    let entropy = recent.iter().sum::<f64>() / recent.len().max(1) as f64;
    Ok(TransferSource {
        policy: actor.policy().clone(),
        episodes: cfg.source_episodes,
        entropy,
        converged: false,
    })
}

/// Runs every episode of every run of a single-kind config. Records come
/// back in run-major order whatever `jobs` is.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<EpisodeRecord>> {
    let source = if cfg.kind()?.uses_transfer_source() || cfg.resolved_advisor(cfg.kind()?)? == AdvisorId::Transfer {
        Some(transfer_source(cfg)?.policy)
    } else {
        None
    };
    run_experiment_with_source(cfg, source, jobs)
}

/// As `run_experiment`, with the transfer source supplied by the caller.
pub fn run_experiment_with_source(
    cfg: &ExperimentConfig,
    source: Option<MlpPolicy>,
    jobs: usize,
) -> Result<Vec<EpisodeRecord>> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let shared = Shared {
        world: load_builtin_world(cfg.env)?.map(Arc::new),
        source,
    };
    if kind.uses_transfer_source() || cfg.resolved_advisor(kind)? == AdvisorId::Transfer {
        let world = shared.world.as_ref().expect("transfer runs on grids");
        match &shared.source {
            None => return Err(Error::Config("transfer kinds need a source policy".into())),
            Some(p) if p.input_dim() != world.n_cells() || p.n_actions() != 4 => {
                return Err(Error::Config(format!(
                    "source policy has {} inputs and {} actions; env needs {} and 4",
                    p.input_dim(),
                    p.n_actions(),
                    world.n_cells()
                )))
            }
            Some(_) => {}
        }
    }
    let run_one = |r: usize| run_single(cfg, kind, &shared, r);
    let results: Vec<Result<Vec<EpisodeRecord>>> = if jobs <= 1 {
        (0..cfg.runs).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| (0..cfg.runs).into_par_iter().map(run_one).collect())
    };
    let mut records = Vec::with_capacity(cfg.runs * cfg.episodes);
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

fn run_single(cfg: &ExperimentConfig, kind: ExperimentKind, shared: &Shared, run: usize) -> Result<Vec<EpisodeRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(run as u64));
    let advisor_id = cfg.resolved_advisor(kind)?;

    let mut env: Box<dyn Environment> = match &shared.world {
        None => Box::new(TableEnv::new()),
        Some(world) => Box::new(make_grid_env(world, cfg.uses_options())?),
    };
    let (obs_dim, n_actions) = (env.obs_dim(), env.n_actions());

    let mut advisor: Option<Box<dyn Advisor>> = match advisor_id {
        AdvisorId::Backup => Some(Box::new(TableAdvisor::new(TableAdviceMode::Backup))),
        AdvisorId::Heuristic => Some(Box::new(TableAdvisor::new(TableAdviceMode::Heuristic))),
        AdvisorId::Combined => Some(Box::new(TableAdvisor::new(TableAdviceMode::Combined))),
        AdvisorId::Human => {
            let world = shared.world.as_ref().expect("validated grid");
            let oracle = make_grid_env(world, cfg.uses_options())?.optimal_policy()?;
            let human = SimulatedHumanConfig {
                availability: cfg.availability.unwrap_or(1.0),
                p_right: cfg.p_right,
                budget: cfg.budget,
                wrong_option: cfg.wrong_option.or(world.wrong_option).unwrap_or(0),
            };
            Some(Box::new(SimulatedHuman::new(human, oracle, n_actions)?))
        }
        AdvisorId::Transfer => Some(Box::new(TransferAdvisor::new(
            shared.source.clone().expect("checked before runs"),
        ))),
        AdvisorId::None | AdvisorId::Critic | AdvisorId::Teacher => None,
    };
    let mut teacher = match advisor_id {
        AdvisorId::Teacher => Some(Teacher {
            teacher: RewardShapingTeacher::new(cfg.availability.unwrap_or(0.05))?,
            oracle: optimal_grid_policy(shared.world.as_ref().expect("validated grid"))?,
        }),
        _ => None,
    };

    let mut learner = match kind {
        ExperimentKind::ActorAdvisor => {
            let mut aa = ActorAdvisor::new(obs_dim, n_actions, actor_config(cfg), dqn_config(cfg), &mut rng)?;
            aa.temperature = cfg.temperature;
            Learner::ActorAdvisor(aa)
        }
        ExperimentKind::DqnOnly => Learner::Dqn {
            dqn: DoubleDqn::new(obs_dim, n_actions, dqn_config(cfg), &mut rng)?,
            temperature: cfg.temperature,
        },
        ExperimentKind::TransferSeeded => Learner::Actor(DpgActor::from_policy(
            shared.source.clone().expect("checked before runs"),
            actor_config(cfg),
        )?),
        _ => Learner::Actor(DpgActor::new(obs_dim, n_actions, actor_config(cfg), &mut rng)?),
    };
    let override_mode = kind == ExperimentKind::OverrideAdvice;

    let mut records = Vec::with_capacity(cfg.episodes);
    for episode in 1..=cfg.episodes {
        let out = run_episode(
            env.as_mut(),
            &mut learner,
            &mut advisor,
            teacher.as_mut(),
            override_mode,
            &mut rng,
        )?;
        if let Some(actor) = learner.actor_mut() {
            actor.finish_episode(out.trajectory, cfg.gamma)?;
        }
        let interventions = advisor
            .as_ref()
            .map(|a| a.interventions())
            .or(teacher.as_ref().map(|t| t.teacher.interventions()))
            .unwrap_or(0);
        records.push(EpisodeRecord {
            run,
            episode,
            ret: round_sig6(out.ret),
            steps: out.steps,
            decisions: out.decisions,
            interventions,
            terminal: out.terminal,
        });
    }
    Ok(records)
}

struct EpisodeOutcome {
    trajectory: Trajectory,
    ret: f64,
    steps: u64,
    decisions: u64,
    terminal: TerminalCause,
}

fn run_episode(
    env: &mut dyn Environment,
    learner: &mut Learner,
    advisor: &mut Option<Box<dyn Advisor>>,
    mut teacher: Option<&mut Teacher>,
    override_mode: bool,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome> {
    let n_actions = env.n_actions();
    let mut obs = env.reset();
    let mut trajectory = Trajectory::new();
    let (mut ret, mut steps, mut decisions) = (0.0, 0u64, 0u64);
    loop {
        let state = env.state();
        let (action, step) = match learner {
            Learner::Actor(actor) => {
                let advice = match advisor.as_mut() {
                    Some(a) => a.advise(&state, &obs, rng as &mut dyn RngCore)?,
                    None => AdviceVector::neutral(n_actions),
                };
                let (a, s) = if override_mode {
                    actor.override_act(&obs, &advice, rng)?
                } else {
                    actor.act(&obs, &advice, rng)?
                };
                (a, Some(s))
            }
            Learner::ActorAdvisor(aa) => {
                let (a, s) = aa.act(&obs, rng)?;
                (a, Some(s))
            }
            Learner::Dqn { dqn, temperature } => {
                let dist = softmax(&dqn.q_values(&obs)?, *temperature)?;
                (sample(&dist, rng), None)
            }
        };
        let res = env.step(action, rng)?;
        ret += res.reward;
        steps += u64::from(res.primitive_steps);
        decisions += 1;
        let mut learn_reward = res.reward;
        if let (Some(t), EnvState::Grid(cell)) = (teacher.as_deref_mut(), state) {
            learn_reward += t.teacher.shape(action, t.oracle.get(cell), rng);
        }
        match learner {
            Learner::ActorAdvisor(aa) => {
                aa.observe(&obs, action, &res, rng)?;
            }
            Learner::Dqn { dqn, .. } => {
                dqn.observe(
                    crate::agents::Experience {
                        state: obs.clone(),
                        action,
                        reward: res.reward,
                        next_state: res.observation.clone(),
                        done: res.is_absorbing(),
                    },
                    rng,
                )?;
            }
            Learner::Actor(_) => {}
        }
        if let Some(mut s) = step {
            s.reward = learn_reward;
            trajectory.push(s);
        }
        if let Some(terminal) = res.terminal {
            return Ok(EpisodeOutcome {
                trajectory,
                ret,
                steps,
                decisions,
                terminal,
            });
        }
        obs = res.observation;
    }
}

/// Returns of every run in the inclusive 1-based episode window, pooled.
pub fn window_returns(records: &[EpisodeRecord], window: (usize, usize)) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.episode >= window.0 && r.episode <= window.1)
        .map(|r| r.ret)
        .collect()
}

/// Per-run mean return in the window, ordered by run id.
pub fn run_window_means(records: &[EpisodeRecord], window: (usize, usize)) -> Vec<f64> {
    let n_runs = records.iter().map(|r| r.run + 1).max().unwrap_or(0);
    (0..n_runs)
        .filter_map(|run| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.run == run && r.episode >= window.0 && r.episode <= window.1)
                .map(|r| r.ret)
                .collect();
            (!xs.is_empty()).then(|| mean(&xs))
        })
        .collect()
}

/// Episode range covered by `records`.
pub fn episode_range(records: &[EpisodeRecord]) -> Option<(usize, usize)> {
    let lo = records.iter().map(|r| r.episode).min()?;
    let hi = records.iter().map(|r| r.episode).max()?;
    Some((lo, hi))
}

/// Mean and standard error across runs for each episode.
pub fn learning_curve(name: &str, records: &[EpisodeRecord]) -> Result<Curve> {
    let (lo, hi) = episode_range(records).ok_or_else(|| Error::Csv("no records".into()))?;
    let mut by_episode = vec![Vec::new(); hi - lo + 1];
    for r in records {
        by_episode[r.episode - lo].push(r.ret);
    }
    if by_episode.iter().any(|v| v.is_empty()) {
        return Err(Error::Csv("episode numbers have gaps".into()));
    }
    Ok(Curve {
        name: name.to_string(),
        mean: by_episode.iter().map(|v| mean(v)).collect(),
        stderr: by_episode.iter().map(|v| stderr(v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::csv::records_to_csv;

    fn quick(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn record_count_and_order() {
        let cfg = quick("kind = vanilla_pg\nenv = grid1\nruns = 2\nepisodes = 3\nseed = 4\n");
        let recs = run_experiment(&cfg, 1).unwrap();
        assert_eq!(recs.len(), 6);
        let keys: Vec<(usize, usize)> = recs.iter().map(|r| (r.run, r.episode)).collect();
        assert_eq!(keys, vec![(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3)]);
    }

    #[test]
    fn parallel_matches_serial() {
        let cfg = quick("kind = actor_advisor\nenv = table\nruns = 3\nepisodes = 2\nbatch_size = 32\nbuffer_capacity = 500\n");
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 3).unwrap();
        assert_eq!(records_to_csv(&a), records_to_csv(&b));
    }

    #[test]
    fn runs_are_independent_of_run_count() {
        let two = run_experiment(&quick("kind = vanilla_pg\nruns = 2\nepisodes = 4\nseed = 10\n"), 1).unwrap();
        let one = run_experiment(&quick("kind = vanilla_pg\nruns = 1\nepisodes = 4\nseed = 11\n"), 1).unwrap();
        let second: Vec<_> = two.iter().filter(|r| r.run == 1).map(|r| (r.ret, r.steps)).collect();
        let only: Vec<_> = one.iter().map(|r| (r.ret, r.steps)).collect();
        assert_eq!(second, only);
    }

    #[test]
    fn every_kind_runs() {
        let cases = [
            "kind = actor_advisor\nenv = grid1\nbatch_size = 16\n",
            "kind = dqn_only\nenv = table\nbatch_size = 16\n",
            "kind = dpg_advice\nenv = table\nadvisor = backup\n",
            "kind = override_advice\nenv = table\nadvisor = combined\n",
            "kind = reward_shaping\nenv = grid1\n",
            "kind = human_advice\nenv = fiverooms\navailability = 1\np_right = 1\n",
            "kind = transfer_fresh\nenv = grid2\n",
            "kind = transfer_seeded\nenv = grid2\nsource_episodes = 3\n",
            "kind = transfer_advised\nenv = grid2\nsource_episodes = 3\n",
        ];
        for text in cases {
            let cfg = quick(&format!("{text}runs = 1\nepisodes = 2\n"));
            let recs = run_experiment(&cfg, 1).unwrap_or_else(|e| panic!("{text}: {e}"));
            assert_eq!(recs.len(), 2, "{text}");
        }
    }

    #[test]
    fn perfect_human_with_options_reaches_goal_optimally() {
        let cfg = quick("kind = human_advice\nenv = fiverooms\navailability = 1\np_right = 1\nruns = 1\nepisodes = 3\n");
        for r in run_experiment(&cfg, 1).unwrap() {
            assert_eq!(r.terminal, TerminalCause::Goal);
            assert_eq!(r.ret, 94.6);
            assert_eq!(r.steps, 54);
            assert_eq!(r.interventions, r.episode as u64 * r.decisions);
        }
    }

    #[test]
    fn budget_stops_interventions() {
        let cfg = quick("kind = human_advice\nenv = fiverooms\navailability = 1\np_right = 1\nbudget = 5\nruns = 1\nepisodes = 3\n");
        let recs = run_experiment(&cfg, 1).unwrap();
        assert_eq!(recs.last().unwrap().interventions, 5);
    }

    #[test]
    fn window_helpers() {
        let recs: Vec<EpisodeRecord> = (0..2)
            .flat_map(|run| {
                (1..=5).map(move |episode| EpisodeRecord {
                    run,
                    episode,
                    ret: (run * 10 + episode) as f64,
                    steps: 1,
                    decisions: 1,
                    interventions: 0,
                    terminal: TerminalCause::Goal,
                })
            })
            .collect();
        assert_eq!(window_returns(&recs, (4, 5)), vec![4.0, 5.0, 14.0, 15.0]);
        assert_eq!(run_window_means(&recs, (4, 5)), vec![4.5, 14.5]);
        let c = learning_curve("x", &recs).unwrap();
        assert_eq!(c.mean, vec![6.0, 7.0, 8.0, 9.0, 10.0]);
        assert!((c.stderr[0] - 5.0).abs() < 1e-12);
    }
}
