use super::{CvrpInstance, Instance, ProblemError, ProblemKind, TspInstance};

/// The eight symmetries of the unit square. Index 0 is the identity.
pub const AUGMENTATIONS: usize = 8;

/// Applies symmetry `k` (0..8) to a point of the unit square.
pub fn transform_point(k: usize, [x, y]: [f64; 2]) -> [f64; 2] {
    match k % AUGMENTATIONS {
        0 => [x, y],
        1 => [y, x],
        2 => [1.0 - x, y],
        3 => [x, 1.0 - y],
        4 => [1.0 - x, 1.0 - y],
        5 => [y, 1.0 - x],
        6 => [1.0 - y, x],
        _ => [1.0 - y, 1.0 - x],
    }
}

fn map_points(k: usize, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    points.iter().map(|&p| transform_point(k, p)).collect()
}

/// Eight coordinate-transformed copies of a routing instance. Node indices,
/// demands and capacity are untouched, so every action tuple keeps its cost.
pub fn augment_x8(instance: &Instance) -> Result<Vec<Instance>, ProblemError> {
    (0..AUGMENTATIONS)
        .map(|k| match instance {
            Instance::Tsp(t) => TspInstance::new(map_points(k, t.coords())).map(Instance::Tsp),
            Instance::Cvrp(c) => CvrpInstance::new(
                transform_point(k, c.depot()),
                map_points(k, c.customers()),
                c.demands().to_vec(),
                c.capacity(),
            )
            .map(Instance::Cvrp),
            Instance::Ffsp(_) => Err(ProblemError::Unsupported(ProblemKind::Ffsp)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Action, InstanceGenerator, Problem};

    #[test]
    fn identity_first_and_all_distinct() {
        let gen = InstanceGenerator::new(ProblemKind::Tsp, 10, 3);
        let inst = gen.generate(0).unwrap();
        let aug = augment_x8(&inst).unwrap();
        assert_eq!(aug.len(), 8);
        assert_eq!(aug[0], inst);
        let coords: Vec<Vec<[f64; 2]>> = aug
            .iter()
            .map(|i| match i {
                Instance::Tsp(t) => t.coords().to_vec(),
                _ => unreachable!(),
            })
            .collect();
        for a in 0..8 {
            for b in (a + 1)..8 {
                assert_ne!(coords[a], coords[b], "variants {a} and {b} coincide");
            }
        }
    }

    #[test]
    fn cvrp_costs_preserved() {
        let gen = InstanceGenerator::new(ProblemKind::Cvrp, 6, 11);
        let inst = gen.generate(2).unwrap();
        let actions = [1, 2, 0, 3, 4, 0, 5, 6].map(Action);
        let base = inst.reward(&actions);
        for v in augment_x8(&inst).unwrap() {
            let Instance::Cvrp(c) = &v else { unreachable!() };
            assert!((c.reward(&actions) - base).abs() < 1e-9);
        }
    }

    #[test]
    fn ffsp_is_rejected() {
        let gen = InstanceGenerator::new(ProblemKind::Ffsp, 3, 1);
        let inst = gen.generate(0).unwrap();
        assert_eq!(augment_x8(&inst), Err(ProblemError::Unsupported(ProblemKind::Ffsp)));
    }
}
