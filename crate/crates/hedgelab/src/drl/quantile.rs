//! Quantile-regression machinery for the distributional critic: the fixed
//! level grid, the quantile-huber loss with its atom gradients, target
//! construction, and the actor objectives defined on the atom vector.

use serde::{Deserialize, Serialize};

/// Number of critic quantiles.
pub const N_QUANTILES: usize = 100;

/// Fixed levels tau_k = (2k - 1) / (2n), k = 1..n.
pub fn quantile_levels(n: usize) -> Vec<f64> {
    (1..=n).map(|k| (2 * k - 1) as f64 / (2 * n) as f64).collect()
}

/// The critic's return distribution: one atom per fixed level. Atoms are not
/// required to be monotone during training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileDistribution {
    pub atoms: Vec<f64>,
}

impl QuantileDistribution {
    pub fn new(atoms: Vec<f64>) -> Self {
        Self { atoms }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.atoms.len() as f64
    }

    /// Atom at probability level `p`: index `ceil(p * n)` on the level grid
    /// (1-based), clamped to the grid.
    pub fn atom_at_level(&self, p: f64) -> f64 {
        let n = self.atoms.len();
        let idx = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
        self.atoms[idx - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean of the return distribution (classical criterion).
    Expected,
    /// Bad-tail PnL quantile (the 5% atom).
    Var95,
    /// 0.5 * 5% atom + 0.5 * 95% atom.
    Mix595,
}

/// Scalar objective of a distribution, to be maximized by the actor.
pub fn actor_objective(dist: &QuantileDistribution, kind: Objective) -> f64 {
    match kind {
        Objective::Expected => dist.mean(),
        Objective::Var95 => dist.atom_at_level(0.05),
        Objective::Mix595 => 0.5 * dist.atom_at_level(0.05) + 0.5 * dist.atom_at_level(0.95),
    }
}

/// Gradient of the objective with respect to the atom vector.
pub fn actor_objective_grad(n_atoms: usize, kind: Objective) -> Vec<f64> {
    let mut g = vec![0.0; n_atoms];
    let idx = |p: f64| -> usize {
        ((p * n_atoms as f64 - 1e-9).ceil() as usize).clamp(1, n_atoms) - 1
    };
    match kind {
        Objective::Expected => g.fill(1.0 / n_atoms as f64),
        Objective::Var95 => g[idx(0.05)] = 1.0,
        Objective::Mix595 => {
            g[idx(0.05)] += 0.5;
            g[idx(0.95)] += 0.5;
        }
    }
    g
}

/// Target sample set `r + gamma_eff * atom_k`; a terminal transition
/// collapses to the single sample `{r}`. `gamma_eff` already folds in the
/// n-step exponent and is zero when done.
pub fn critic_target(reward: f64, done: bool, gamma_eff: f64, next_atoms: &[f64]) -> Vec<f64> {
    if done || gamma_eff == 0.0 {
        vec![reward]
    } else {
        next_atoms.iter().map(|a| reward + gamma_eff * a).collect()
    }
}

/// Quantile-huber loss between predicted atoms and a target sample set:
/// mean over (atom, target) pairs of `|tau_k - 1{u<0}| * huber_k(u) / k`
/// with `u = target - atom_k`. Returns the loss and its gradient with
/// respect to the atoms. The Huber smoothing makes the gradient vanish at
/// `u = 0`, which is what lets the Wasserstein-motivated quantile update
/// train stably through samples.
pub fn quantile_huber_loss(
    pred_atoms: &[f64],
    targets: &[f64],
    huber_k: f64,
) -> (f64, Vec<f64>) {
    assert!(!targets.is_empty(), "empty target sample set");
    assert!(huber_k > 0.0, "huber k must be positive");
    let n = pred_atoms.len();
    let levels = quantile_levels(n);
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let pairs = (n * targets.len()) as f64;
    for (k, (&atom, &tau)) in pred_atoms.iter().zip(&levels).enumerate() {
        for &t in targets {
            let u = t - atom;
            let weight = if u < 0.0 { 1.0 - tau } else { tau };
            let (l, lprime) = if u.abs() <= huber_k {
                (0.5 * u * u, u)
            } else {
                (huber_k * (u.abs() - 0.5 * huber_k), huber_k * u.signum())
            };
            loss += weight * l / huber_k;
            grad[k] -= weight * lprime / huber_k;
        }
    }
    loss /= pairs;
    for g in &mut grad {
        *g /= pairs;
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_strictly_increasing_midpoints() {
        let l = quantile_levels(N_QUANTILES);
        assert_eq!(l.len(), 100);
        assert!((l[0] - 0.005).abs() < 1e-15);
        assert!((l[99] - 0.995).abs() < 1e-15);
        assert!(l.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let atoms = vec![2.5; 100];
        let (loss, grad) = quantile_huber_loss(&atoms, &[2.5, 2.5, 2.5], 1.0);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_is_smooth_at_the_kink() {
        let (_, grad) = quantile_huber_loss(&[1.0], &[1.0], 1.0);
        assert_eq!(grad[0], 0.0);
        // Tiny residuals produce proportionally tiny gradients (no jump).
        let (_, grad_eps) = quantile_huber_loss(&[1.0], &[1.0 + 1e-9], 1.0);
        assert!(grad_eps[0].abs() < 1e-9);
    }

    /// With a single atom at level 1/2 and vanishing Huber smoothing, the
    /// loss minimizer over a sample set is its median (pinball property).
    /// Brute-force 1-D minimization is the oracle.
    #[test]
    fn single_atom_minimizer_is_the_median() {
        let samples = [0.3, 1.1, 2.0, 4.7, 9.2];
        let median = 2.0;
        let huber_k = 1e-8;
        let mut best = f64::INFINITY;
        let mut best_theta = f64::NAN;
        let mut theta = 0.0;
        while theta <= 10.0 {
            let (loss, _) = quantile_huber_loss(&[theta], &samples, huber_k);
            if loss < best {
                best = loss;
                best_theta = theta;
            }
            theta += 0.01;
        }
        assert!(
            (best_theta - median).abs() < 0.02,
            "brute-force minimizer {best_theta} is not the median {median}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let atoms: Vec<f64> = (0..10).map(|k| k as f64 * 0.7 - 2.0).collect();
        let targets = [-1.5, 0.2, 3.3];
        let (_, grad) = quantile_huber_loss(&atoms, &targets, 1.0);
        let h = 1e-6;
        for k in 0..atoms.len() {
            let mut plus = atoms.clone();
            plus[k] += h;
            let mut minus = atoms.clone();
            minus[k] -= h;
            let (lp, _) = quantile_huber_loss(&plus, &targets, 1.0);
            let (lm, _) = quantile_huber_loss(&minus, &targets, 1.0);
            let numeric = (lp - lm) / (2.0 * h);
            assert!(
                (grad[k] - numeric).abs() < 1e-8,
                "atom {k}: analytic {} vs numeric {numeric}",
                grad[k]
            );
        }
    }

    #[test]
    fn terminal_target_collapses_to_reward() {
        assert_eq!(critic_target(-2.2, true, 0.99, &[1.0, 2.0]), vec![-2.2]);
        assert_eq!(critic_target(1.0, false, 0.0, &[1.0, 2.0]), vec![1.0]);
        assert_eq!(
            critic_target(1.0, false, 0.99, &[0.0, 2.0]),
            vec![1.0, 2.98]
        );
    }

    #[test]
    fn objective_index_conventions() {
        // Atoms whose value equals their 1-based index.
        let dist = QuantileDistribution::new((1..=100).map(|k| k as f64).collect());
        assert_eq!(actor_objective(&dist, Objective::Var95), 5.0);
        assert_eq!(actor_objective(&dist, Objective::Mix595), 50.0);
        assert!((actor_objective(&dist, Objective::Expected) - 50.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_distribution_collapses_every_objective() {
        let dist = QuantileDistribution::new(vec![-3.25; 100]);
        for kind in [Objective::Expected, Objective::Var95, Objective::Mix595] {
            assert_eq!(actor_objective(&dist, kind), -3.25);
        }
    }

    #[test]
    fn objectives_respect_atomwise_dominance() {
        let lo = QuantileDistribution::new((0..100).map(|k| k as f64).collect());
        let hi = QuantileDistribution::new((0..100).map(|k| k as f64 + 0.5).collect());
        for kind in [Objective::Expected, Objective::Var95, Objective::Mix595] {
            assert!(actor_objective(&hi, kind) > actor_objective(&lo, kind));
        }
    }

    #[test]
    fn objective_gradients_select_the_right_atoms() {
        let g = actor_objective_grad(100, Objective::Mix595);
        assert_eq!(g[4], 0.5);
        assert_eq!(g[94], 0.5);
        assert_eq!(g.iter().sum::<f64>(), 1.0);
        let g = actor_objective_grad(100, Objective::Var95);
        assert_eq!(g[4], 1.0);
    }
}
