use super::{
    check_unit_square, distance_matrix, Action, Problem, ProblemError, ProblemKind, ProblemState,
    INFEASIBLE_REWARD,
};

/// Node index of the depot. Customers are `1..=n`.
pub const DEPOT: usize = 0;

/// Capacitated VRP with a single depot and an unlimited fleet.
///
/// Construction starts at the depot. The state is terminal once every
/// customer is visited; the closing leg back to the depot is added by
/// `reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvrpInstance {
    // depot first, then customers
    points: Vec<[f64; 2]>,
    demands: Vec<u32>,
    capacity: u32,
    dist: Vec<f64>,
}

impl CvrpInstance {
    pub fn new(depot: [f64; 2], customers: Vec<[f64; 2]>, demands: Vec<u32>, capacity: u32) -> Result<Self, ProblemError> {
        if customers.is_empty() {
            return Err(ProblemError::InvalidInstance("CVRP needs at least one customer".into()));
        }
        if customers.len() != demands.len() {
            return Err(ProblemError::InvalidInstance(format!(
                "{} customers but {} demands",
                customers.len(),
                demands.len()
            )));
        }
        if capacity == 0 {
            return Err(ProblemError::InvalidInstance("capacity must be positive".into()));
        }
        if let Some(i) = demands.iter().position(|&d| d == 0 || d > capacity) {
            return Err(ProblemError::InvalidInstance(format!(
                "customer {} has demand {} outside 1..={capacity}",
                i + 1,
                demands[i]
            )));
        }
        let mut points = Vec::with_capacity(customers.len() + 1);
        points.push(depot);
        points.extend(customers);
        if let Some(i) = points.iter().position(|&p| !check_unit_square(p)) {
            return Err(ProblemError::InvalidInstance(format!("node {i} lies outside the unit square")));
        }
        let dist = distance_matrix(&points);
        Ok(Self { points, demands, capacity, dist })
    }

    /// Number of customers.
    pub fn n(&self) -> usize {
        self.demands.len()
    }

    pub fn depot(&self) -> [f64; 2] {
        self.points[DEPOT]
    }

    pub fn customers(&self) -> &[[f64; 2]] {
        &self.points[1..]
    }

    /// Depot followed by the customers.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn demands(&self) -> &[u32] {
        &self.demands
    }

    /// Demand of node `i` (0 for the depot).
    pub fn demand(&self, i: usize) -> u32 {
        if i == DEPOT {
            0
        } else {
            self.demands[i - 1]
        }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.points.len() + j]
    }

    /// Splits an action tuple into depot-delimited routes (empty routes dropped).
    pub fn routes(actions: &[Action]) -> Vec<Vec<usize>> {
        actions
            .split(|a| a.0 == DEPOT)
            .filter(|r| !r.is_empty())
            .map(|r| r.iter().map(|a| a.0).collect())
            .collect()
    }

    /// Length of one out-and-back route through `customers`.
    pub fn route_length(&self, customers: &[usize]) -> f64 {
        let mut prev = DEPOT;
        let mut len = 0.0;
        for &c in customers {
            len += self.dist(prev, c);
            prev = c;
        }
        len + self.dist(prev, DEPOT)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvrpState {
    assigned: Vec<Action>,
    visited: Vec<bool>,
    current: usize,
    load: u32,
    unvisited: usize,
    sum_to_unvisited: Vec<f64>,
}

impl CvrpState {
    pub fn current(&self) -> usize {
        self.current
    }

    /// Remaining vehicle load.
    pub fn load(&self) -> u32 {
        self.load
    }

    pub fn is_visited(&self, node: usize) -> bool {
        self.visited[node]
    }

    pub fn unvisited_count(&self) -> usize {
        self.unvisited
    }

    pub fn sum_to_unvisited(&self) -> &[f64] {
        &self.sum_to_unvisited
    }
}

impl ProblemState for CvrpState {
    fn assigned(&self) -> &[Action] {
        &self.assigned
    }
}

impl Problem for CvrpInstance {
    type State = CvrpState;

    fn kind(&self) -> ProblemKind {
        ProblemKind::Cvrp
    }

    fn feature_len(&self) -> usize {
        5
    }

    fn initial_state(&self) -> CvrpState {
        let m = self.points.len();
        let sum_to_unvisited = (0..m).map(|j| (1..m).map(|k| self.dist(j, k)).sum()).collect();
        CvrpState {
            assigned: Vec::with_capacity(2 * self.n()),
            visited: vec![false; m],
            current: DEPOT,
            load: self.capacity,
            unvisited: self.n(),
            sum_to_unvisited,
        }
    }

    fn is_terminal(&self, state: &CvrpState) -> bool {
        state.unvisited == 0
    }

    fn is_feasible(&self, state: &CvrpState, action: Action) -> bool {
        let j = action.0;
        if j == DEPOT {
            state.current != DEPOT
        } else {
            j <= self.n() && !state.visited[j] && self.demand(j) <= state.load
        }
    }

    fn feasible_actions(&self, state: &CvrpState) -> Result<Vec<Action>, ProblemError> {
        if self.is_terminal(state) {
            return Err(ProblemError::TerminalState);
        }
        Ok((0..=self.n()).filter(|&j| self.is_feasible(state, Action(j))).map(Action).collect())
    }

    fn step(&self, state: &mut CvrpState, action: Action) {
        let v = action.0;
        if v == DEPOT {
            state.load = self.capacity;
        } else {
            state.visited[v] = true;
            state.load -= self.demand(v);
            state.unvisited -= 1;
            for (j, s) in state.sum_to_unvisited.iter_mut().enumerate() {
                *s -= self.dist(j, v);
            }
        }
        state.current = v;
        state.assigned.push(action);
    }

    fn features(&self, state: &CvrpState, action: Action, out: &mut [f64]) {
        let j = action.0;
        let cap = self.capacity as f64;
        out[0] = self.dist(state.current, j);
        out[1] = self.dist(j, DEPOT);
        let others = if j == DEPOT { state.unvisited } else { state.unvisited - 1 };
        out[2] = if others > 0 { state.sum_to_unvisited[j] / others as f64 } else { 0.0 };
        out[3] = self.demand(j) as f64 / cap;
        out[4] = state.load as f64 / cap;
    }

    fn reward(&self, actions: &[Action]) -> f64 {
        let n = self.n();
        let mut seen = vec![false; n + 1];
        let mut load = self.capacity;
        let mut prev = DEPOT;
        let mut len = 0.0;
        for a in actions {
            let j = a.0;
            if j > n {
                return INFEASIBLE_REWARD;
            }
            if j == DEPOT {
                load = self.capacity;
            } else {
                if seen[j] || self.demand(j) > load {
                    return INFEASIBLE_REWARD;
                }
                seen[j] = true;
                load -= self.demand(j);
            }
            len += self.dist(prev, j);
            prev = j;
        }
        if !seen[1..].iter().all(|&s| s) {
            return INFEASIBLE_REWARD;
        }
        -(len + self.dist(prev, DEPOT))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_customers() -> CvrpInstance {
        CvrpInstance::new([0.0, 0.0], vec![[0.5, 0.0], [0.0, 0.5]], vec![5, 2], 10).unwrap()
    }

    #[test]
    fn validation() {
        assert!(CvrpInstance::new([0.0, 0.0], vec![], vec![], 10).is_err());
        assert!(CvrpInstance::new([0.0, 0.0], vec![[0.1, 0.1]], vec![11], 10).is_err());
        assert!(CvrpInstance::new([0.0, 0.0], vec![[0.1, 0.1]], vec![0], 10).is_err());
        assert!(CvrpInstance::new([0.0, 0.0], vec![[0.1, 0.1]], vec![1, 2], 10).is_err());
    }

    #[test]
    fn capacity_rule_filters_customers() {
        // load 3 after serving demand 7, unvisited demands {5, 2}
        let inst = CvrpInstance::new(
            [0.0, 0.0],
            vec![[0.2, 0.2], [0.5, 0.0], [0.0, 0.5]],
            vec![7, 5, 2],
            10,
        )
        .unwrap();
        let s = inst.apply_action(&inst.initial_state(), Action(1)).unwrap();
        assert_eq!(s.load(), 3);
        assert_eq!(inst.feasible_actions(&s).unwrap(), vec![Action(DEPOT), Action(3)]);
    }

    #[test]
    fn depot_excluded_at_depot() {
        let inst = two_customers();
        let s = inst.initial_state();
        assert_eq!(inst.feasible_actions(&s).unwrap(), vec![Action(1), Action(2)]);
        let s = inst.apply_action(&s, Action(1)).unwrap();
        let s = inst.apply_action(&s, Action(DEPOT)).unwrap();
        assert_eq!(s.load(), 10);
        assert_eq!(inst.feasible_actions(&s).unwrap(), vec![Action(2)]);
    }

    #[test]
    fn serving_reduces_load() {
        let inst = CvrpInstance::new([0.0, 0.0], vec![[0.3, 0.3]], vec![4], 10).unwrap();
        let s = inst.apply_action(&inst.initial_state(), Action(1)).unwrap();
        assert_eq!(s.load(), 6);
        assert!(inst.is_terminal(&s));
    }

    #[test]
    fn out_and_back_reward() {
        let inst = CvrpInstance::new([0.0, 0.0], vec![[0.5, 0.5]], vec![3], 10).unwrap();
        let r = inst.reward(&[Action(1)]);
        assert!((r + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn capacity_breach_is_infeasible() {
        let inst = CvrpInstance::new([0.0, 0.0], vec![[0.5, 0.0], [0.0, 0.5]], vec![6, 6], 10).unwrap();
        assert_eq!(inst.reward(&[Action(1), Action(2)]), INFEASIBLE_REWARD);
        assert!(inst.reward(&[Action(1), Action(0), Action(2)]) > INFEASIBLE_REWARD);
        // missing customer and revisit
        assert_eq!(inst.reward(&[Action(1)]), INFEASIBLE_REWARD);
        assert_eq!(inst.reward(&[Action(1), Action(0), Action(1)]), INFEASIBLE_REWARD);
    }

    #[test]
    fn redundant_depot_steps_cost_nothing_extra() {
        let inst = two_customers();
        let plain = inst.reward(&[Action(1), Action(0), Action(2)]);
        let padded = inst.reward(&[Action(0), Action(1), Action(0), Action(0), Action(2), Action(0)]);
        assert!((plain - padded).abs() < 1e-12);
    }

    #[test]
    fn routes_split_on_depot() {
        let r = CvrpInstance::routes(&[Action(1), Action(3), Action(0), Action(2)]);
        assert_eq!(r, vec![vec![1, 3], vec![2]]);
    }
}
