//! Flexible flow shop: jobs pass through every stage in order and each stage
//! holds several unrelated parallel machines.
//!
//! Construction is stage by stage. Within a stage the open machine with the
//! earliest available time (ties by index) is the current slot, and the
//! action either starts a ready job on it or is a no-op. A no-op moves the
//! machine forward to the next event time of the stage (another open
//! machine's available time or a job's ready time, whichever comes first).
//! When no later event exists the machine is closed for the rest of the
//! stage, which is only allowed while another machine stays open.

use super::{Action, Problem, ProblemError, ProblemKind, ProblemState, INFEASIBLE_REWARD};

const CLOSED: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    /// `machines[m][j]`: processing time of job `j` on machine `m`.
    pub machines: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfspInstance {
    num_jobs: usize,
    stages: Vec<Stage>,
    max_time: f64,
    horizon: f64,
    // later_work[k][j]: mean processing time of job j summed over stages after k
    later_work: Vec<Vec<f64>>,
}

impl FfspInstance {
    pub fn new(num_jobs: usize, stages: Vec<Stage>) -> Result<Self, ProblemError> {
        if num_jobs == 0 {
            return Err(ProblemError::InvalidInstance("FFSP needs at least one job".into()));
        }
        if stages.is_empty() {
            return Err(ProblemError::InvalidInstance("FFSP needs at least one stage".into()));
        }
        for (k, stage) in stages.iter().enumerate() {
            if stage.machines.is_empty() {
                return Err(ProblemError::InvalidInstance(format!("stage {k} has no machines")));
            }
            for (m, times) in stage.machines.iter().enumerate() {
                if times.len() != num_jobs {
                    return Err(ProblemError::InvalidInstance(format!(
                        "stage {k} machine {m} lists {} jobs, expected {num_jobs}",
                        times.len()
                    )));
                }
                if let Some(j) = times.iter().position(|&t| t == 0) {
                    return Err(ProblemError::InvalidInstance(format!(
                        "stage {k} machine {m} job {j} has zero processing time"
                    )));
                }
            }
        }
        let stage_max: Vec<f64> = stages
            .iter()
            .map(|s| s.machines.iter().flatten().copied().max().unwrap_or(1) as f64)
            .collect();
        let max_time = stage_max.iter().copied().fold(0.0, f64::max);
        let horizon = stage_max.iter().sum();
        let mean_time = |k: usize, j: usize| {
            let ms = &stages[k].machines;
            ms.iter().map(|t| t[j] as f64).sum::<f64>() / ms.len() as f64
        };
        let later_work = (0..stages.len())
            .map(|k| (0..num_jobs).map(|j| ((k + 1)..stages.len()).map(|l| mean_time(l, j)).sum()).collect())
            .collect();
        Ok(Self { num_jobs, stages, max_time, horizon, later_work })
    }

    pub fn num_jobs(&self) -> usize {
        self.num_jobs
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// The action index that stands for "leave the current machine idle".
    pub fn noop(&self) -> Action {
        Action(self.num_jobs)
    }

    #[inline]
    pub fn processing_time(&self, stage: usize, machine: usize, job: usize) -> u32 {
        self.stages[stage].machines[machine][job]
    }

    fn next_event(&self, state: &FfspState, machine: usize, t: u64) -> Option<u64> {
        let machines = state.avail.iter().enumerate().filter(|&(m, &a)| m != machine && a != CLOSED).map(|(_, &a)| a);
        let ready = (0..self.num_jobs).filter(|&j| state.completion[state.stage][j].is_none()).map(|j| state.ready(j));
        machines.chain(ready).filter(|&e| e > t).min()
    }

    fn open_machines(state: &FfspState) -> usize {
        state.avail.iter().filter(|&&a| a != CLOSED).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FfspState {
    assigned: Vec<Action>,
    stage: usize,
    // available time of each machine of the current stage
    avail: Vec<u64>,
    // completion[k][j] / machine_of[k][j] once job j is scheduled in stage k
    completion: Vec<Vec<Option<u64>>>,
    machine_of: Vec<Vec<Option<usize>>>,
    scheduled: usize,
    cursor: usize,
}

impl FfspState {
    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Machine (of the current stage) that receives the next decision.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Available times of the current stage's machines; `None` for machines
    /// closed for the rest of the stage.
    pub fn machine_available(&self) -> Vec<Option<u64>> {
        self.avail.iter().map(|&a| (a != CLOSED).then_some(a)).collect()
    }

    pub fn completion(&self, stage: usize, job: usize) -> Option<u64> {
        self.completion[stage][job]
    }

    pub fn machine_of(&self, stage: usize, job: usize) -> Option<usize> {
        self.machine_of[stage][job]
    }

    /// Time at which `job` may start in the current stage.
    fn ready(&self, job: usize) -> u64 {
        if self.stage == 0 {
            0
        } else {
            self.completion[self.stage - 1][job].expect("previous stage is complete")
        }
    }

    fn now(&self) -> u64 {
        self.avail[self.cursor]
    }

    fn refresh_cursor(&mut self) {
        self.cursor = self
            .avail
            .iter()
            .enumerate()
            .min_by_key(|&(m, &a)| (a, m))
            .map(|(m, _)| m)
            .unwrap_or(0);
    }

    /// Makespan of a terminal state.
    pub fn makespan(&self) -> Option<u64> {
        self.completion.last()?.iter().copied().collect::<Option<Vec<u64>>>()?.into_iter().max()
    }
}

impl ProblemState for FfspState {
    fn assigned(&self) -> &[Action] {
        &self.assigned
    }
}

impl Problem for FfspInstance {
    type State = FfspState;

    fn kind(&self) -> ProblemKind {
        ProblemKind::Ffsp
    }

    fn feature_len(&self) -> usize {
        3
    }

    fn initial_state(&self) -> FfspState {
        let ns = self.stages.len();
        FfspState {
            assigned: Vec::new(),
            stage: 0,
            avail: vec![0; self.stages[0].machines.len()],
            completion: vec![vec![None; self.num_jobs]; ns],
            machine_of: vec![vec![None; self.num_jobs]; ns],
            scheduled: 0,
            cursor: 0,
        }
    }

    fn is_terminal(&self, state: &FfspState) -> bool {
        state.stage >= self.stages.len()
    }

    fn is_feasible(&self, state: &FfspState, action: Action) -> bool {
        if self.is_terminal(state) {
            return false;
        }
        let t = state.now();
        let j = action.0;
        if j < self.num_jobs {
            state.completion[state.stage][j].is_none() && state.ready(j) <= t
        } else if j == self.num_jobs {
            self.next_event(state, state.cursor, t).is_some() || Self::open_machines(state) > 1
        } else {
            false
        }
    }

    fn feasible_actions(&self, state: &FfspState) -> Result<Vec<Action>, ProblemError> {
        if self.is_terminal(state) {
            return Err(ProblemError::TerminalState);
        }
        Ok((0..=self.num_jobs).map(Action).filter(|&a| self.is_feasible(state, a)).collect())
    }

    fn step(&self, state: &mut FfspState, action: Action) {
        let m = state.cursor;
        let t = state.now();
        let k = state.stage;
        if action.0 < self.num_jobs {
            let j = action.0;
            let done = t + self.processing_time(k, m, j) as u64;
            state.completion[k][j] = Some(done);
            state.machine_of[k][j] = Some(m);
            state.avail[m] = done;
            state.scheduled += 1;
            if state.scheduled == self.num_jobs {
                state.stage += 1;
                state.scheduled = 0;
                state.avail = match self.stages.get(state.stage) {
                    Some(next) => vec![0; next.machines.len()],
                    None => Vec::new(),
                };
            }
        } else {
            state.avail[m] = self.next_event(state, m, t).unwrap_or(CLOSED);
        }
        state.refresh_cursor();
        state.assigned.push(action);
    }

    fn features(&self, state: &FfspState, action: Action, out: &mut [f64]) {
        if action.0 < self.num_jobs {
            let j = action.0;
            out[0] = self.processing_time(state.stage, state.cursor, j) as f64 / self.max_time;
            out[1] = self.later_work[state.stage][j] / self.horizon;
            out[2] = 0.0;
        } else {
            out[0] = 0.0;
            out[1] = 0.0;
            out[2] = 1.0;
        }
    }

    fn reward(&self, actions: &[Action]) -> f64 {
        match self.replay(actions) {
            Ok(state) if self.is_terminal(&state) => match state.makespan() {
                Some(ms) => -(ms as f64),
                None => INFEASIBLE_REWARD,
            },
            _ => INFEASIBLE_REWARD,
        }
    }
}
