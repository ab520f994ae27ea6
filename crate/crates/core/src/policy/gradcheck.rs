//! Central finite differences against the analytic gradients.
//!
//! The oracle never touches the backprop code: it recomputes logits from the
//! raw features and evaluates `f(p + h) - f(p - h)` for one parameter `p` at
//! a time. The difference is formed from the per-action logit shifts with
//! `expm1`/`ln_1p` identities instead of subtracting two rounded objective
//! values, which would leave noise around `1e-16 |f| / h` and swamp
//! components that are tiny but nonzero (actions with probability `1e-10`).

use crate::problem::{Action, Problem, ProblemState};

use super::{CombinedPolicy, Evaluation, PolicyError};

pub const FD_STEP: f64 = 1e-5;
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradTarget {
    LogProb(Action),
    Entropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, FD_ABS_FLOOR)`.
    pub max_rel_error: f64,
    /// Name of the component attaining the worst error, e.g. `psi[12]`.
    pub worst: String,
    pub components: usize,
}

/// Policy quantities at the unperturbed parameters, from features alone.
struct Center {
    n: usize,
    fl: usize,
    features: Vec<f64>,
    /// `n x hidden` adapter pre-activations.
    pre: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl Center {
    fn new(policy: &CombinedPolicy, features: Vec<f64>) -> Self {
        let fl = policy.feature_len();
        let n = features.len() / fl;
        let hid = policy.adapter.as_ref().map_or(0, |a| a.hidden);
        let mut pre = vec![0.0; n * hid];
        let mut logits = vec![0.0; n];
        for k in 0..n {
            let f = &features[k * fl..(k + 1) * fl];
            let mut z = -policy.base.theta.iter().zip(f).map(|(t, x)| t * x).sum::<f64>() / policy.base.temperature;
            if let Some(ad) = &policy.adapter {
                for j in 0..hid {
                    let u = ad.w1[j * fl..(j + 1) * fl].iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + ad.b1[j];
                    pre[k * hid + j] = u;
                    z += ad.w2[j] * u.tanh();
                }
                z += ad.b2;
            }
            logits[k] = z;
        }
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let top_k = logits.iter().position(|&z| z == top).unwrap_or(0);
        let rest: f64 = logits.iter().enumerate().filter(|&(k, _)| k != top_k).map(|(_, z)| (z - top).exp()).sum();
        let lse = top + rest.ln_1p();
        let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { n, fl, features, pre, probs, log_probs }
    }

    fn feature(&self, k: usize, i: usize) -> f64 {
        self.features[k * self.fl + i]
    }
}

/// Logit shifts of one perturbation: `up[k] = z_k(p + h) - z_k(p)`,
/// `down[k] = z_k(p - h) - z_k(p)` and `span[k] = up[k] - down[k]`, each
/// computed without subtracting nearby rounded values.
struct Shift {
    up: Vec<f64>,
    down: Vec<f64>,
    span: Vec<f64>,
}

impl Shift {
    fn linear(slope: impl Fn(usize) -> f64, n: usize) -> Self {
        let up: Vec<f64> = (0..n).map(|k| FD_STEP * slope(k)).collect();
        Self { down: up.iter().map(|x| -x).collect(), span: up.iter().map(|x| 2.0 * x).collect(), up }
    }

    /// Shift of `w * tanh(u + e)` for `e = +-eps_k`.
    fn tanh(w: f64, u: impl Fn(usize) -> f64, eps: impl Fn(usize) -> f64, n: usize) -> Self {
        let mut s = Self { up: vec![0.0; n], down: vec![0.0; n], span: vec![0.0; n] };
        for k in 0..n {
            let (u, e) = (u(k), eps(k));
            // tanh(a) - tanh(b) = sinh(a - b) / (cosh a cosh b)
            s.up[k] = w * e.sinh() / ((u + e).cosh() * u.cosh());
            s.down[k] = -w * e.sinh() / ((u - e).cosh() * u.cosh());
            s.span[k] = w * (2.0 * e).sinh() / ((u + e).cosh() * (u - e).cosh());
        }
        s
    }
}

/// `f(p + h) - f(p - h)` for the log-prob of action index `t` or the entropy.
fn objective_span(c: &Center, shift: &Shift, target: Option<usize>) -> f64 {
    // A_pm = sum p_k e^{shift_k} = 1 + s_pm
    let s_up: f64 = (0..c.n).map(|k| c.probs[k] * shift.up[k].exp_m1()).sum();
    let s_down: f64 = (0..c.n).map(|k| c.probs[k] * shift.down[k].exp_m1()).sum();
    // s_up - s_down = sum p_k e^{down_k} expm1(span_k)
    let s_span: f64 = (0..c.n).map(|k| c.probs[k] * shift.down[k].exp() * shift.span[k].exp_m1()).sum();
    let lse_span = (s_span / (1.0 + s_down)).ln_1p();
    match target {
        Some(t) => shift.span[t] - lse_span,
        None => {
            // p_pm,k = p_k e^{shift_k} / A_pm, log p_pm,k = log p_k + shift_k - ln A_pm
            let (a_up, a_down) = (1.0 + s_up, 1.0 + s_down);
            let mut total = lse_span;
            for k in 0..c.n {
                let e_down = shift.down[k].exp();
                let numer = e_down * shift.span[k].exp_m1() + e_down * (-s_span + shift.span[k].exp_m1() * s_down);
                let p_span = c.probs[k] * numer / (a_up * a_down);
                let p_down = c.probs[k] * e_down / a_down;
                total -= p_span * c.log_probs[k];
                total -= p_span * shift.up[k] + p_down * shift.span[k];
            }
            total
        }
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR)
}

/// Checks every theta weight and (when present) every adapter parameter.
pub fn finite_diff_check<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    state: &P::State,
    target: GradTarget,
) -> Result<GradCheck, PolicyError> {
    let mut ev = Evaluation::new();
    ev.evaluate(problem, policy, state)?;
    let index = match target {
        GradTarget::LogProb(a) => Some(
            ev.position(a)
                .ok_or(PolicyError::Problem(crate::problem::ProblemError::InfeasibleAction { action: a, depth: state.depth() }))?,
        ),
        GradTarget::Entropy => None,
    };
    let dz = match index {
        Some(k) => ev.log_prob_dz(k),
        None => ev.entropy_dz(),
    };
    let mut grad_theta = vec![0.0; policy.feature_len()];
    let mut grad_psi = policy.adapter.as_ref().map(|a| a.zeros_like());
    ev.backprop(policy, &dz, 1.0, grad_psi.as_mut(), Some(&mut grad_theta));

    let c = Center::new(policy, ev.features.clone());
    let n = c.n;
    let mut report = GradCheck { max_rel_error: 0.0, worst: String::new(), components: 0 };
    let mut record = |name: String, analytic: f64, shift: Shift| {
        let numeric = objective_span(&c, &shift, index) / (2.0 * FD_STEP);
        let e = rel_error(analytic, numeric);
        report.components += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e.max(report.max_rel_error);
            report.worst = name;
        }
    };

    let temperature = policy.base.temperature;
    for (i, &g) in grad_theta.iter().enumerate() {
        record(format!("theta[{i}]"), g, Shift::linear(|k| -c.feature(k, i) / temperature, n));
    }
    if let (Some(g), Some(ad)) = (grad_psi, policy.adapter.as_ref()) {
        let analytic = g.to_flat();
        let (fl, hid) = (c.fl, ad.hidden);
        let pre = |k: usize, j: usize| c.pre[k * hid + j];
        let mut idx = 0;
        for j in 0..hid {
            for i in 0..fl {
                let shift = Shift::tanh(ad.w2[j], |k| pre(k, j), |k| FD_STEP * c.feature(k, i), n);
                record(format!("psi[{idx}]"), analytic[idx], shift);
                idx += 1;
            }
        }
        for j in 0..hid {
            record(format!("psi[{idx}]"), analytic[idx], Shift::tanh(ad.w2[j], |k| pre(k, j), |_| FD_STEP, n));
            idx += 1;
        }
        for j in 0..hid {
            record(format!("psi[{idx}]"), analytic[idx], Shift::linear(|k| pre(k, j).tanh(), n));
            idx += 1;
        }
        record(format!("psi[{idx}]"), analytic[idx], Shift::linear(|_| 1.0, n));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{EasParams, PolicyParams};
    use crate::problem::{Instance, InstanceGenerator, ProblemKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_adapter(rng: &mut ChaCha8Rng, features: usize) -> EasParams {
        let mut a = EasParams::insert(features, 8, rng);
        for w in a.w2.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        a.b2 = rng.gen_range(-1.0..1.0);
        a
    }

    #[test]
    fn zero_init_adapter_passes() {
        let Instance::Tsp(inst) = InstanceGenerator::new(ProblemKind::Tsp, 10, 1).generate(0).unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = CombinedPolicy::with_adapter(PolicyParams::initial(ProblemKind::Tsp), EasParams::insert(3, 8, &mut rng));
        let s = inst.initial_state();
        for a in inst.feasible_actions(&s).unwrap() {
            let r = finite_diff_check(&inst, &policy, &s, GradTarget::LogProb(a)).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
        let r = finite_diff_check(&inst, &policy, &s, GradTarget::Entropy).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.components, 3 + 8 * 3 + 8 + 8 + 1);
    }

    #[test]
    fn flat_temperature_passes() {
        let Instance::Cvrp(inst) = InstanceGenerator::new(ProblemKind::Cvrp, 8, 2).generate(0).unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = PolicyParams::new(vec![1.0, 0.3, -0.2, 0.5, 0.1], 10.0).unwrap();
        let policy = CombinedPolicy::with_adapter(base, random_adapter(&mut rng, 5));
        let s = inst.apply_action(&inst.initial_state(), Action(3)).unwrap();
        for target in [GradTarget::LogProb(Action(0)), GradTarget::Entropy] {
            let r = finite_diff_check(&inst, &policy, &s, target).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn random_adapter_on_ffsp() {
        let Instance::Ffsp(inst) = InstanceGenerator::new(ProblemKind::Ffsp, 4, 3).generate(0).unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = CombinedPolicy::with_adapter(PolicyParams::initial(ProblemKind::Ffsp), random_adapter(&mut rng, 3));
        let s = inst.initial_state();
        for a in inst.feasible_actions(&s).unwrap() {
            let r = finite_diff_check(&inst, &policy, &s, GradTarget::LogProb(a)).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }
}
