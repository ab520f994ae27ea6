use super::{
    check_unit_square, distance_matrix, Action, Problem, ProblemError, ProblemKind, ProblemState,
    INFEASIBLE_REWARD,
};

/// Symmetric Euclidean TSP in the unit square.
///
/// Construction always starts at node 0, so a complete action tuple is a
/// permutation of `1..n` and the tour is `(0, a_0, .., a_{n-2})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    coords: Vec<[f64; 2]>,
    dist: Vec<f64>,
}

impl TspInstance {
    pub const MIN_NODES: usize = 3;

    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self, ProblemError> {
        if coords.len() < Self::MIN_NODES {
            return Err(ProblemError::InvalidInstance(format!(
                "TSP needs at least {} nodes, got {}",
                Self::MIN_NODES,
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|&p| !check_unit_square(p)) {
            return Err(ProblemError::InvalidInstance(format!(
                "node {i} lies outside the unit square: {:?}",
                coords[i]
            )));
        }
        let dist = distance_matrix(&coords);
        Ok(Self { coords, dist })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.coords.len() + j]
    }

    /// Closed tour length of an arbitrary node sequence.
    pub fn tour_length(&self, tour: &[usize]) -> f64 {
        if tour.is_empty() {
            return 0.0;
        }
        let mut len = 0.0;
        for w in tour.windows(2) {
            len += self.dist(w[0], w[1]);
        }
        len + self.dist(tour[tour.len() - 1], tour[0])
    }

    /// Full tour (starting at node 0) for an action tuple.
    pub fn tour(actions: &[Action]) -> Vec<usize> {
        std::iter::once(0).chain(actions.iter().map(|a| a.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TspState {
    assigned: Vec<Action>,
    visited: Vec<bool>,
    current: usize,
    unvisited: usize,
    // sum of distances from each node to the currently unvisited nodes
    sum_to_unvisited: Vec<f64>,
}

impl TspState {
    pub fn current(&self) -> usize {
        self.current
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

impl ProblemState for TspState {
    fn assigned(&self) -> &[Action] {
        &self.assigned
    }
}

impl Problem for TspInstance {
    type State = TspState;

    fn kind(&self) -> ProblemKind {
        ProblemKind::Tsp
    }

    fn feature_len(&self) -> usize {
        3
    }

    fn initial_state(&self) -> TspState {
        let n = self.n();
        let mut visited = vec![false; n];
        visited[0] = true;
        let sum_to_unvisited = (0..n).map(|j| (1..n).map(|k| self.dist(j, k)).sum()).collect();
        TspState {
            assigned: Vec::with_capacity(n - 1),
            visited,
            current: 0,
            unvisited: n - 1,
            sum_to_unvisited,
        }
    }

    fn is_terminal(&self, state: &TspState) -> bool {
        state.unvisited == 0
    }

    fn is_feasible(&self, state: &TspState, action: Action) -> bool {
        action.0 < self.n() && !state.visited[action.0]
    }

    fn feasible_actions(&self, state: &TspState) -> Result<Vec<Action>, ProblemError> {
        if self.is_terminal(state) {
            return Err(ProblemError::TerminalState);
        }
        Ok((0..self.n()).filter(|&j| !state.visited[j]).map(Action).collect())
    }

    fn step(&self, state: &mut TspState, action: Action) {
        let v = action.0;
        state.visited[v] = true;
        state.current = v;
        state.unvisited -= 1;
        for (j, s) in state.sum_to_unvisited.iter_mut().enumerate() {
            *s -= self.dist(j, v);
        }
        state.assigned.push(action);
    }

    fn features(&self, state: &TspState, action: Action, out: &mut [f64]) {
        let j = action.0;
        out[0] = self.dist(state.current, j);
        out[1] = self.dist(j, 0);
        out[2] = if state.unvisited > 1 {
            state.sum_to_unvisited[j] / (state.unvisited - 1) as f64
        } else {
            0.0
        };
    }

    fn reward(&self, actions: &[Action]) -> f64 {
        let n = self.n();
        if actions.len() != n - 1 {
            return INFEASIBLE_REWARD;
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut prev = 0;
        let mut len = 0.0;
        for a in actions {
            if a.0 >= n || seen[a.0] {
                return INFEASIBLE_REWARD;
            }
            seen[a.0] = true;
            len += self.dist(prev, a.0);
            prev = a.0;
        }
        -(len + self.dist(prev, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TspInstance {
        TspInstance::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn rejects_small_and_out_of_range() {
        assert!(TspInstance::new(vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(TspInstance::new(vec![[0.0, 0.0], [1.0, 1.0], [1.5, 0.0]]).is_err());
    }

    #[test]
    fn feasible_actions_are_the_unvisited_complement() {
        let inst = square();
        let s = inst.apply_action(&inst.initial_state(), Action(1)).unwrap();
        assert_eq!(s.current(), 1);
        assert_eq!(inst.feasible_actions(&s).unwrap(), vec![Action(2), Action(3)]);
    }

    #[test]
    fn first_action_recorded() {
        let inst = square();
        let s = inst.apply_action(&inst.initial_state(), Action(3)).unwrap();
        assert_eq!(s.assigned(), &[Action(3)]);
        assert_eq!(s.current(), 3);
        assert_eq!(s.depth(), 1);
    }

    #[test]
    fn perimeter_reward() {
        let inst = square();
        let r = inst.reward(&[Action(1), Action(2), Action(3)]);
        assert!((r + 4.0).abs() < 1e-12);
        assert!((inst.tour_length(&[0, 1, 2, 3]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_tuples_get_sentinel() {
        let inst = square();
        assert_eq!(inst.reward(&[Action(1), Action(1), Action(3)]), INFEASIBLE_REWARD);
        assert_eq!(inst.reward(&[Action(1), Action(2)]), INFEASIBLE_REWARD);
        assert_eq!(inst.reward(&[Action(1), Action(2), Action(0)]), INFEASIBLE_REWARD);
    }

    #[test]
    fn terminal_state_errors() {
        let inst = square();
        let s = inst.replay(&[Action(1), Action(2), Action(3)]).unwrap();
        assert!(inst.is_terminal(&s));
        assert_eq!(inst.feasible_actions(&s), Err(ProblemError::TerminalState));
        assert!(inst.apply_action(&s, Action(0)).is_err());
    }

    #[test]
    fn revisit_is_rejected() {
        let inst = square();
        let s = inst.apply_action(&inst.initial_state(), Action(2)).unwrap();
        assert!(inst.apply_action(&s, Action(2)).is_err());
        assert!(inst.apply_action(&s, Action(0)).is_err());
    }

    #[test]
    fn mean_distance_feature() {
        let inst = square();
        let s = inst.initial_state();
        let mut f = [0.0; 3];
        inst.features(&s, Action(1), &mut f);
        // from node 1 to the remaining unvisited {2, 3}: (1 + sqrt 2) / 2
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!((f[1] - 1.0).abs() < 1e-12);
        assert!((f[2] - (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
    }
}
