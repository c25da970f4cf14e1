//! Small enumerable MDPs with one-hot observations.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names accepted by [`make_env`].
pub const ENV_NAMES: [&str; 3] = ["gridworld5", "chain10", "twingrid5"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub observation_dim: usize,
    pub action_count: usize,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    /// Maximum policy entropy, `ln |A|`.
    pub fn max_entropy(&self) -> f64 {
        (self.action_count as f64).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    /// The episode reached a terminal state.
    pub done: bool,
    /// The episode hit `max_episode_steps` without terminating.
    pub truncated: bool,
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<StepResult>;

    /// Optimal discounted return from the start state.
    fn optimal_return(&self, gamma: f64) -> Result<f64> {
        let _ = gamma;
        Err(Error::Unsupported(format!(
            "environment `{}` has no enumerable state space",
            self.spec().name
        )))
    }
}

/// One possible result of taking an action in a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub probability: f64,
    pub next_state: usize,
    pub reward: f64,
    pub done: bool,
}

impl Outcome {
    fn certain(next_state: usize, reward: f64, done: bool) -> Self {
        Self {
            probability: 1.0,
            next_state,
            reward,
            done,
        }
    }
}

/// A finite MDP given by its full transition table.
pub trait TabularModel: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn start_state(&self) -> usize;
    fn max_episode_steps(&self) -> usize;
    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome>;
}

/// Square gridworld starting in the top-left corner.
///
/// The goal defaults to the top-right corner, which makes the shortest path
/// unique (right along the top row). `with_corner_goal` moves it to the
/// bottom-right, where many shortest paths tie.
///
/// Actions are up, down, left, right; moving off the grid leaves the agent in
/// place. Every step costs `step_reward` except entering the goal, which pays
/// `goal_reward` and terminates. With `slip > 0` the chosen direction is
/// replaced by a uniformly random one with that probability.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub size: usize,
    pub goal: usize,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub slip: f64,
    pub max_steps: usize,
}

impl GridWorld {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            goal: size - 1,
            step_reward: -0.01,
            goal_reward: 1.0,
            slip: 0.0,
            max_steps: 100,
        }
    }

    pub fn with_corner_goal(mut self) -> Self {
        self.goal = self.size * self.size - 1;
        self
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    fn moved(&self, state: usize, direction: usize) -> usize {
        let (row, col) = (state / self.size, state % self.size);
        let (row, col) = match direction {
            0 => (row.saturating_sub(1), col),
            1 => ((row + 1).min(self.size - 1), col),
            2 => (row, col.saturating_sub(1)),
            _ => (row, (col + 1).min(self.size - 1)),
        };
        row * self.size + col
    }

    fn arrive(&self, next: usize) -> (f64, bool) {
        if next == self.goal() {
            (self.goal_reward, true)
        } else {
            (self.step_reward, false)
        }
    }
}

impl TabularModel for GridWorld {
    fn name(&self) -> &str {
        "gridworld"
    }

    fn num_states(&self) -> usize {
        self.size * self.size
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn start_state(&self) -> usize {
        0
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        if state == self.goal() {
            return vec![Outcome::certain(state, 0.0, true)];
        }
        if self.slip <= 0.0 {
            let next = self.moved(state, action);
            let (reward, done) = self.arrive(next);
            return vec![Outcome::certain(next, reward, done)];
        }
        (0..4)
            .map(|direction| {
                let mut probability = self.slip / 4.0;
                if direction == action {
                    probability += 1.0 - self.slip;
                }
                let next = self.moved(state, direction);
                let (reward, done) = self.arrive(next);
                Outcome {
                    probability,
                    next_state: next,
                    reward,
                    done,
                }
            })
            .collect()
    }
}

/// Linear chain of `n` states. Action 0 moves left (clamped at 0), action 1
/// moves right; moving right from state `n - 2` enters the terminal state
/// `n - 1` and pays `terminal_reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub n: usize,
    pub step_reward: f64,
    pub terminal_reward: f64,
    pub max_steps: usize,
}

impl Chain {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            step_reward: 0.0,
            terminal_reward: 1.0,
            max_steps: 100,
        }
    }
}

impl TabularModel for Chain {
    fn name(&self) -> &str {
        "chain"
    }

    fn num_states(&self) -> usize {
        self.n
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn start_state(&self) -> usize {
        0
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        let terminal = self.n - 1;
        if state == terminal {
            return vec![Outcome::certain(state, 0.0, true)];
        }
        let next = if action == 0 {
            state.saturating_sub(1)
        } else {
            state + 1
        };
        if next == terminal {
            vec![Outcome::certain(next, self.terminal_reward, true)]
        } else {
            vec![Outcome::certain(next, self.step_reward, false)]
        }
    }
}

/// Duplicates every action of the wrapped model: actions `2k` and `2k + 1`
/// both behave exactly like the inner action `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinActions<M> {
    pub inner: M,
}

impl<M: TabularModel> TabularModel for TwinActions<M> {
    fn name(&self) -> &str {
        "twin"
    }

    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn num_actions(&self) -> usize {
        2 * self.inner.num_actions()
    }

    fn start_state(&self) -> usize {
        self.inner.start_state()
    }

    fn max_episode_steps(&self) -> usize {
        self.inner.max_episode_steps()
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        self.inner.outcomes(state, action / 2)
    }
}

/// Runs a [`TabularModel`] as an episodic environment.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    model: Arc<dyn TabularModel>,
    spec: EnvSpec,
    state: usize,
    steps: usize,
    finished: bool,
    rng: ChaCha8Rng,
}

impl TabularEnv {
    pub fn new(name: impl Into<String>, model: impl TabularModel + 'static) -> Self {
        let spec = EnvSpec {
            name: name.into(),
            observation_dim: model.num_states(),
            action_count: model.num_actions(),
            max_episode_steps: model.max_episode_steps(),
        };
        let state = model.start_state();
        Self {
            model: Arc::new(model),
            spec,
            state,
            steps: 0,
            finished: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn model(&self) -> &dyn TabularModel {
        self.model.as_ref()
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn observation(&self, state: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.spec.observation_dim];
        obs[state] = 1.0;
        obs
    }

    /// One-hot encodings of every state, in state order.
    pub fn all_observations(&self) -> Vec<Vec<f64>> {
        (0..self.model.num_states())
            .map(|s| self.observation(s))
            .collect()
    }

    /// Optimal state values by value iteration, converged to `1e-10` in max norm.
    pub fn value_iteration(&self, gamma: f64) -> Vec<f64> {
        value_iteration(self.model.as_ref(), gamma, 1e-10)
    }
}

impl Environment for TabularEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.model.start_state();
        self.steps = 0;
        self.finished = false;
        self.observation(self.state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if action >= self.spec.action_count {
            return Err(Error::InvalidAction {
                action,
                count: self.spec.action_count,
            });
        }
        if self.finished {
            return Err(Error::EpisodeOver);
        }
        let outcomes = self.model.outcomes(self.state, action);
        let outcome = if outcomes.len() == 1 {
            outcomes[0]
        } else {
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut chosen = *outcomes.last().unwrap();
            for o in &outcomes {
                acc += o.probability;
                if u < acc {
                    chosen = *o;
                    break;
                }
            }
            chosen
        };
        self.state = outcome.next_state;
        self.steps += 1;
        let truncated = !outcome.done && self.steps >= self.spec.max_episode_steps;
        self.finished = outcome.done || truncated;
        Ok(StepResult {
            next_observation: self.observation(self.state),
            reward: outcome.reward,
            done: outcome.done,
            truncated,
        })
    }

    fn optimal_return(&self, gamma: f64) -> Result<f64> {
        Ok(self.value_iteration(gamma)[self.model.start_state()])
    }
}

pub fn value_iteration(model: &dyn TabularModel, gamma: f64, tolerance: f64) -> Vec<f64> {
    let n = model.num_states();
    let table: Vec<Vec<Vec<Outcome>>> = (0..n)
        .map(|s| {
            (0..model.num_actions())
                .map(|a| model.outcomes(s, a))
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let best = table[s]
                .iter()
                .map(|outs| {
                    outs.iter()
                        .map(|o| {
                            let cont = if o.done { 0.0 } else { values[o.next_state] };
                            o.probability * (o.reward + gamma * cont)
                        })
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[s]).abs());
            next[s] = best;
        }
        values = next;
        if delta < tolerance {
            break;
        }
    }
    values
}

/// Builds one of the named environments in [`ENV_NAMES`].
pub fn make_env(name: &str) -> Result<TabularEnv> {
    match name {
        "gridworld5" => Ok(TabularEnv::new(name, GridWorld::new(5))),
        "chain10" => Ok(TabularEnv::new(name, Chain::new(10))),
        "twingrid5" => Ok(TabularEnv::new(
            name,
            TwinActions {
                inner: GridWorld::new(5),
            },
        )),
        other => Err(Error::UnknownEnv {
            name: other.to_string(),
            valid: ENV_NAMES.join(", "),
        }),
    }
}
