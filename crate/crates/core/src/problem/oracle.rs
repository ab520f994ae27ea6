//! Exact solvers for desk-scale instances.

use thiserror::Error;

use super::{Action, CvrpInstance, FfspInstance, Instance, Problem, ProblemKind, ProblemState, Solution, TspInstance};

pub const TSP_MAX_NODES: usize = 13;
pub const CVRP_MAX_CUSTOMERS: usize = 8;
pub const FFSP_MAX_JOBS: usize = 5;
pub const FFSP_MAX_STAGES: usize = 2;
pub const FFSP_MAX_MACHINES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{kind} instance too large for the exact oracle: {detail}")]
    TooLarge { kind: ProblemKind, detail: String },
}

/// Provably optimal solution of a small instance.
pub fn brute_force_optimum(instance: &Instance) -> Result<Solution, OracleError> {
    match instance {
        Instance::Tsp(t) => held_karp(t),
        Instance::Cvrp(c) => cvrp_optimum(c),
        Instance::Ffsp(f) => ffsp_optimum(f),
    }
}

/// Held-Karp over cost-to-go values. Reconstruction walks forward and takes
/// the smallest node index attaining the optimum, which yields the
/// lexicographically smallest optimal action tuple.
pub fn held_karp(inst: &TspInstance) -> Result<Solution, OracleError> {
    let n = inst.n();
    if n > TSP_MAX_NODES {
        return Err(OracleError::TooLarge { kind: ProblemKind::Tsp, detail: format!("{n} nodes > {TSP_MAX_NODES}") });
    }
    // bit i-1 stands for node i; node 0 is the fixed start
    let m = n - 1;
    let full = (1usize << m) - 1;
    let mut g = vec![f64::INFINITY; (1 << m) * n];
    let idx = |s: usize, j: usize| s * n + j;
    for j in 1..n {
        g[idx(full, j)] = inst.dist(j, 0);
    }
    for s in (0..full).rev() {
        let currents: Vec<usize> = if s == 0 { vec![0] } else { (1..n).filter(|&j| s & (1 << (j - 1)) != 0).collect() };
        for j in currents {
            let mut best = f64::INFINITY;
            for k in 1..n {
                let bit = 1 << (k - 1);
                if s & bit == 0 {
                    let c = inst.dist(j, k) + g[idx(s | bit, k)];
                    if c < best {
                        best = c;
                    }
                }
            }
            g[idx(s, j)] = best;
        }
    }
    let mut actions = Vec::with_capacity(m);
    let (mut s, mut j) = (0usize, 0usize);
    while s != full {
        let target = g[idx(s, j)];
        let k = (1..n)
            .find(|&k| s & (1 << (k - 1)) == 0 && inst.dist(j, k) + g[idx(s | (1 << (k - 1)), k)] == target)
            .expect("argmin exists");
        actions.push(Action(k));
        s |= 1 << (k - 1);
        j = k;
    }
    let reward = inst.reward(&actions);
    Ok(Solution { actions, reward })
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Enumerates capacity-feasible customer subsets, solves each route exactly
/// by permutation, then combines routes with a set-partition DP. Ties keep
/// the first route found in lexicographic order; routes are emitted sorted by
/// their first customer.
fn cvrp_optimum(inst: &CvrpInstance) -> Result<Solution, OracleError> {
    let n = inst.n();
    if n > CVRP_MAX_CUSTOMERS {
        return Err(OracleError::TooLarge {
            kind: ProblemKind::Cvrp,
            detail: format!("{n} customers > {CVRP_MAX_CUSTOMERS}"),
        });
    }
    let full = (1usize << n) - 1;
    let mut route_cost = vec![f64::INFINITY; full + 1];
    let mut route_order: Vec<Vec<usize>> = vec![Vec::new(); full + 1];
    for t in 1..=full {
        let members: Vec<usize> = (0..n).filter(|&i| t & (1 << i) != 0).map(|i| i + 1).collect();
        let load: u32 = members.iter().map(|&c| inst.demand(c)).sum();
        if load > inst.capacity() {
            continue;
        }
        let mut perm = members.clone();
        loop {
            let c = inst.route_length(&perm);
            if c < route_cost[t] {
                route_cost[t] = c;
                route_order[t] = perm.clone();
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }
    let mut best = vec![f64::INFINITY; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        // every sub-route containing the lowest customer of `mask`
        let mut sub = rest;
        loop {
            let t = sub | low;
            let c = route_cost[t] + best[mask ^ t];
            if c < best[mask] {
                best[mask] = c;
                choice[mask] = t;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut routes = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let t = choice[mask];
        routes.push(route_order[t].clone());
        mask ^= t;
    }
    routes.sort();
    let mut actions = Vec::new();
    for (i, r) in routes.iter().enumerate() {
        if i > 0 {
            actions.push(Action(0));
        }
        actions.extend(r.iter().map(|&c| Action(c)));
    }
    let reward = inst.reward(&actions);
    Ok(Solution { actions, reward })
}

/// Per-machine job sequences of one stage.
type StagePlan = Vec<Vec<usize>>;

fn stage_plans(jobs: usize, machines: usize) -> Vec<StagePlan> {
    fn rec(job: usize, jobs: usize, plan: &mut StagePlan, out: &mut Vec<StagePlan>) {
        if job == jobs {
            out.push(plan.clone());
            return;
        }
        for m in 0..plan.len() {
            for pos in 0..=plan[m].len() {
                plan[m].insert(pos, job);
                rec(job + 1, jobs, plan, out);
                plan[m].remove(pos);
            }
        }
    }
    let mut out = Vec::new();
    rec(0, jobs, &mut vec![Vec::new(); machines], &mut out);
    out
}

/// Earliest-start completion times of one stage for fixed machine sequences.
fn stage_completion(inst: &FfspInstance, stage: usize, plan: &StagePlan, ready: &[u64]) -> Vec<u64> {
    let mut done = vec![0; inst.num_jobs()];
    for (m, seq) in plan.iter().enumerate() {
        let mut free = 0;
        for &j in seq {
            let start = free.max(ready[j]);
            free = start + inst.processing_time(stage, m, j) as u64;
            done[j] = free;
        }
    }
    done
}

/// Translates fixed machine sequences into the construction's action tuple.
fn plans_to_actions(inst: &FfspInstance, plans: &[StagePlan]) -> Vec<Action> {
    let mut state = inst.initial_state();
    let mut next = vec![0usize; plans[0].len()];
    let mut stage = 0;
    while !inst.is_terminal(&state) {
        if state.stage() != stage {
            stage = state.stage();
            next = vec![0; plans[stage].len()];
        }
        let m = state.cursor();
        let action = match plans[stage][m].get(next[m]) {
            Some(&j) if inst.is_feasible(&state, Action(j)) => {
                next[m] += 1;
                Action(j)
            }
            _ => inst.noop(),
        };
        inst.step(&mut state, action);
    }
    state.assigned().to_vec()
}

fn ffsp_optimum(inst: &FfspInstance) -> Result<Solution, OracleError> {
    let too_large = |detail: String| Err(OracleError::TooLarge { kind: ProblemKind::Ffsp, detail });
    if inst.num_jobs() > FFSP_MAX_JOBS {
        return too_large(format!("{} jobs > {FFSP_MAX_JOBS}", inst.num_jobs()));
    }
    if inst.num_stages() > FFSP_MAX_STAGES {
        return too_large(format!("{} stages > {FFSP_MAX_STAGES}", inst.num_stages()));
    }
    if inst.stages().iter().any(|s| s.machines.len() > FFSP_MAX_MACHINES) {
        return too_large(format!("more than {FFSP_MAX_MACHINES} machines in a stage"));
    }
    let plans: Vec<Vec<StagePlan>> =
        inst.stages().iter().map(|s| stage_plans(inst.num_jobs(), s.machines.len())).collect();

    struct Search<'a> {
        inst: &'a FfspInstance,
        plans: &'a [Vec<StagePlan>],
        chosen: Vec<StagePlan>,
        best: u64,
        best_actions: Vec<Action>,
    }
    impl Search<'_> {
        fn run(&mut self, stage: usize, ready: &[u64]) {
            if stage == self.plans.len() {
                let makespan = ready.iter().copied().max().unwrap_or(0);
                if makespan <= self.best {
                    let actions = plans_to_actions(self.inst, &self.chosen);
                    if makespan < self.best || actions < self.best_actions {
                        self.best = makespan;
                        self.best_actions = actions;
                    }
                }
                return;
            }
            for plan in &self.plans[stage] {
                let done = stage_completion(self.inst, stage, plan, ready);
                // completion only grows in later stages
                if done.iter().copied().max().unwrap_or(0) > self.best {
                    continue;
                }
                self.chosen.push(plan.clone());
                self.run(stage + 1, &done);
                self.chosen.pop();
            }
        }
    }
    let mut search = Search { inst, plans: &plans, chosen: Vec::new(), best: u64::MAX, best_actions: Vec::new() };
    search.run(0, &vec![0; inst.num_jobs()]);
    let actions = search.best_actions;
    let reward = inst.reward(&actions);
    debug_assert_eq!(reward, -(search.best as f64));
    Ok(Solution { actions, reward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{InstanceGenerator, GeneratorParams, Stage};

    #[test]
    fn square_optimum() {
        let inst = TspInstance::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let sol = held_karp(&inst).unwrap();
        assert!((sol.cost() - 4.0).abs() < 1e-12);
        assert_eq!(sol.actions, vec![Action(1), Action(2), Action(3)]);
    }

    #[test]
    fn triangle_all_tours_equal() {
        let inst = TspInstance::new(vec![[0.0, 0.0], [0.3, 0.9], [0.8, 0.1]]).unwrap();
        let sol = held_karp(&inst).unwrap();
        let perim = inst.tour_length(&[0, 1, 2]);
        assert!((sol.cost() - perim).abs() < 1e-12);
        assert_eq!(sol.actions, vec![Action(1), Action(2)]);
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        let mut v = items.to_vec();
        let mut out = vec![v.clone()];
        while next_permutation(&mut v) {
            out.push(v.clone());
        }
        out
    }

    #[test]
    fn held_karp_matches_enumeration() {
        let gen = InstanceGenerator::new(ProblemKind::Tsp, 7, 99);
        for i in 0..20 {
            let Instance::Tsp(t) = gen.generate(i).unwrap() else { unreachable!() };
            let brute = permutations(&[1, 2, 3, 4, 5, 6])
                .into_iter()
                .map(|p| t.reward(&p.into_iter().map(Action).collect::<Vec<_>>()))
                .fold(f64::NEG_INFINITY, f64::max);
            let hk = held_karp(&t).unwrap();
            assert!((hk.reward - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn cvrp_matches_exhaustive_construction() {
        // depth-first enumeration of every constructible sequence
        fn dfs(inst: &CvrpInstance, s: &crate::problem::CvrpState, best: &mut f64) {
            if inst.is_terminal(s) {
                *best = best.max(inst.solution(s).reward);
                return;
            }
            for a in inst.feasible_actions(s).unwrap() {
                dfs(inst, &inst.apply_action(s, a).unwrap(), best);
            }
        }
        let gen = InstanceGenerator::new(ProblemKind::Cvrp, 5, 4)
            .with_params(GeneratorParams { capacity: Some(12), ..Default::default() });
        for i in 0..10 {
            let Instance::Cvrp(c) = gen.generate(i).unwrap() else { unreachable!() };
            let sol = cvrp_optimum(&c).unwrap();
            let mut best = f64::NEG_INFINITY;
            dfs(&c, &c.initial_state(), &mut best);
            assert!((sol.reward - best).abs() < 1e-12, "instance {i}: {} vs {best}", sol.reward);
        }
    }

    #[test]
    fn cvrp_single_route_fits() {
        let inst = CvrpInstance::new([0.0, 0.0], vec![[1.0, 0.0], [1.0, 1.0]], vec![1, 1], 10).unwrap();
        let sol = cvrp_optimum(&inst).unwrap();
        assert!((sol.cost() - (2.0 + 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(sol.actions, vec![Action(1), Action(2)]);
    }

    #[test]
    fn ffsp_single_machine_is_sum_of_times() {
        let inst = FfspInstance::new(3, vec![Stage { machines: vec![vec![2, 3, 4]] }]).unwrap();
        let sol = ffsp_optimum(&inst).unwrap();
        assert_eq!(sol.cost(), 9.0);
        assert_eq!(sol.actions, vec![Action(0), Action(1), Action(2)]);
    }

    #[test]
    fn ffsp_oracle_solution_replays() {
        let gen = InstanceGenerator::new(ProblemKind::Ffsp, 4, 12)
            .with_params(GeneratorParams { stages: 2, machines_per_stage: 2, ..Default::default() });
        for i in 0..5 {
            let Instance::Ffsp(f) = gen.generate(i).unwrap() else { unreachable!() };
            let sol = ffsp_optimum(&f).unwrap();
            let state = f.replay(&sol.actions).unwrap();
            assert!(f.is_terminal(&state));
            assert_eq!(-(state.makespan().unwrap() as f64), sol.reward);
        }
    }

    #[test]
    fn size_caps() {
        let big = InstanceGenerator::new(ProblemKind::Tsp, 14, 0).generate(0).unwrap();
        assert!(brute_force_optimum(&big).is_err());
        let big = InstanceGenerator::new(ProblemKind::Cvrp, 9, 0).generate(0).unwrap();
        assert!(brute_force_optimum(&big).is_err());
        let big = InstanceGenerator::new(ProblemKind::Ffsp, 3, 0).generate(0).unwrap();
        assert!(brute_force_optimum(&big).is_err());
    }
}
