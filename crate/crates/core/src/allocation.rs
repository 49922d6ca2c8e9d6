//! Sample sizes per fidelity level under a simulation budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which neighbouring cost is paired with `C_l` for a correction sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionCost {
    /// `C_l + C_{l-1}`: one sample at each of the two generators it couples.
    #[default]
    Previous,
    /// `C_l + C_{l+1}`. The top level falls back to `C_L + C_{L-1}`.
    Next,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    unit_costs: Vec<f64>,
}

impl CostModel {
    pub fn new(unit_costs: Vec<f64>) -> Result<Self> {
        if unit_costs.is_empty() {
            return Err(Error::invalid("cost model needs at least one level"));
        }
        if unit_costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid("unit costs must be positive and finite"));
        }
        if unit_costs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("unit costs must be strictly increasing"));
        }
        Ok(CostModel { unit_costs })
    }

    pub fn unit_costs(&self) -> &[f64] {
        &self.unit_costs
    }

    pub fn levels(&self) -> usize {
        self.unit_costs.len()
    }

    /// Cost of one level-`l` sample in the multilevel estimator.
    pub fn effective(&self, l: usize, form: CorrectionCost) -> f64 {
        let c = &self.unit_costs;
        match (l, form) {
            (0, _) => c[0],
            (l, CorrectionCost::Next) if l + 1 < c.len() => c[l] + c[l + 1],
            (l, _) => c[l] + c[l - 1],
        }
    }

    pub fn effective_all(&self, form: CorrectionCost) -> Vec<f64> {
        (0..self.levels()).map(|l| self.effective(l, form)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub n: Vec<usize>,
    /// `λ·w_l` before clamping and flooring.
    pub n_continuous: Vec<f64>,
    pub budget: f64,
    pub achieved_cost: f64,
}

/// `n_0 C_0 + Σ_{l≥1} n_l (C_l + C_{l-1})`.
pub fn cost_of(n: &[usize], costs: &CostModel) -> Result<f64> {
    if n.len() != costs.levels() {
        return Err(Error::invalid(format!("{} counts for {} levels", n.len(), costs.levels())));
    }
    Ok(n.iter().enumerate().map(|(l, &k)| k as f64 * costs.effective(l, CorrectionCost::Previous)).sum())
}

/// Cost of `n` single-level samples at `level`.
pub fn mc_cost(n: usize, level: usize, costs: &CostModel) -> f64 {
    n as f64 * costs.unit_costs[level]
}

/// Single-fidelity sample counts `⌊budget / C_l⌋` for every level.
pub fn matched_budget_baselines(budget: f64, costs: &CostModel) -> Vec<usize> {
    costs.unit_costs.iter().map(|c| (budget / c).floor() as usize).collect()
}

/// Integer plan proportional to `weights` under `Σ n_l c_l ≤ budget`, with
/// every `n_l ≥ 1`; the leftover budget goes to level 0.
fn allocate(weights: &[f64], effective: &[f64], budget: f64) -> Result<AllocationPlan> {
    let floor_cost: f64 = effective.iter().sum();
    if !(budget.is_finite() && budget >= floor_cost) {
        return Err(Error::Infeasible(format!("budget {budget} cannot pay one sample per level (needs {floor_cost})")));
    }
    let total_w: f64 = weights.iter().zip(effective).map(|(w, c)| w * c).sum();
    let n_continuous: Vec<f64> =
        if total_w > 0.0 { weights.iter().map(|w| budget * w / total_w).collect() } else { vec![0.0; weights.len()] };
    // Levels whose share falls below one sample are pinned to one and the
    // rest re-scaled, until the pinned set stops growing.
    let mut pinned = vec![false; weights.len()];
    let mut share;
    loop {
        let free_budget = budget - pinned.iter().zip(effective).filter(|(p, _)| **p).map(|(_, c)| c).sum::<f64>();
        let free_w: f64 =
            weights.iter().zip(effective).zip(&pinned).filter(|(_, p)| !**p).map(|((w, c), _)| w * c).sum();
        let lambda = if free_w > 0.0 { free_budget / free_w } else { 0.0 };
        share = weights.iter().zip(&pinned).map(|(w, p)| if *p { 1.0 } else { lambda * w }).collect::<Vec<_>>();
        let newly: Vec<usize> = (0..weights.len()).filter(|&l| !pinned[l] && share[l] < 1.0).collect();
        if newly.is_empty() {
            break;
        }
        for l in newly {
            pinned[l] = true;
        }
    }
    let mut n: Vec<usize> = share.iter().map(|s| (s.floor() as usize).max(1)).collect();
    let spent: f64 = n.iter().zip(effective).map(|(k, c)| *k as f64 * c).sum();
    n[0] += ((budget - spent) / effective[0]).floor().max(0.0) as usize;
    let achieved_cost = n.iter().zip(effective).map(|(k, c)| *k as f64 * c).sum();
    Ok(AllocationPlan { n, n_continuous, budget, achieved_cost })
}

/// Plan minimising the variance bound `Σ_l a_l / n_l` with
/// `a_0 = ‖G⁰‖⁴ + 1` and `a_l = ‖G^l − G^{l−1}‖² + 1`:
/// `n_0 ∝ √(a_0 / C_0)` and `n_l ∝ √(a_l / c_l)`.
pub fn plan_norms(costs: &CostModel, norms: &[f64], budget: f64, form: CorrectionCost) -> Result<AllocationPlan> {
    if norms.len() != costs.levels() {
        return Err(Error::invalid(format!("{} norms for {} levels", norms.len(), costs.levels())));
    }
    if norms.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("norms must be non-negative and finite"));
    }
    let effective = costs.effective_all(form);
    let weights: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(l, v)| {
            let a = if l == 0 { v.powi(4) + 1.0 } else { v * v + 1.0 };
            (a / effective[l]).sqrt()
        })
        .collect();
    let mut plan = allocate(&weights, &effective, budget)?;
    if form == CorrectionCost::Next {
        // report the cost of the real pairing, not the per-level proxy
        plan.achieved_cost = cost_of(&plan.n, costs)?;
    }
    Ok(plan)
}

/// Plan from pilot variances: `n_l ∝ √(V_l / c_l)`.
pub fn plan_pilot(costs: &CostModel, variances: &[f64], budget: f64) -> Result<AllocationPlan> {
    if variances.len() != costs.levels() {
        return Err(Error::invalid(format!("{} variances for {} levels", variances.len(), costs.levels())));
    }
    if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("pilot variances must be non-negative and finite"));
    }
    let effective = costs.effective_all(CorrectionCost::Previous);
    let weights: Vec<f64> = variances.iter().zip(&effective).map(|(v, c)| (v / c).sqrt()).collect();
    allocate(&weights, &effective, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedKey;
    use proptest::prelude::*;

    /// Exponentiated-gradient minimisation of `Σ a_l c_l / (p_l B)` over cost
    /// shares `p` on the simplex.
    fn numeric_minimiser(a: &[f64], c: &[f64], budget: f64) -> Vec<f64> {
        let mut p = vec![1.0 / a.len() as f64; a.len()];
        for it in 0..20_000 {
            let grad: Vec<f64> = (0..a.len()).map(|l| -a[l] * c[l] / (p[l] * p[l] * budget)).collect();
            let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let eta = 0.5 / (1.0 + it as f64).sqrt();
            for l in 0..a.len() {
                p[l] *= (-eta * grad[l] / scale).exp();
            }
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
        }
        (0..a.len()).map(|l| p[l] * budget / c[l]).collect()
    }

    #[test]
    fn equal_factor_ratio_is_sqrt_101() {
        let costs = CostModel::new(vec![1.0, 100.0]).unwrap();
        let plan = plan_norms(&costs, &[1.0, 1.0], 1e6, CorrectionCost::Previous).unwrap();
        let r = plan.n_continuous[0] / plan.n_continuous[1];
        assert!((r - 101f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pilot_ratio_and_zero_variance_floor() {
        let costs = CostModel::new(vec![1.0, 100.0]).unwrap();
        let plan = plan_pilot(&costs, &[1.0, 1.0], 1e5).unwrap();
        assert!((plan.n_continuous[0] / plan.n_continuous[1] - 101f64.sqrt()).abs() < 1e-12);
        let plan = plan_pilot(&costs, &[1.0, 0.0], 1e5).unwrap();
        assert_eq!(plan.n[1], 1);
        assert_eq!(plan.n[0], 100_000 - 101);
        let big = plan_pilot(&costs, &[1.0, 1.0], 2e5).unwrap();
        let small = plan_pilot(&costs, &[1.0, 1.0], 1e5).unwrap();
        for (b, s) in big.n_continuous.iter().zip(&small.n_continuous) {
            assert!((b - 2.0 * s).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn collapsed_level_still_gets_a_sample() {
        let costs = CostModel::new(vec![1.0, 10.0]).unwrap();
        let plan = plan_norms(&costs, &[50.0, 0.0], 1000.0, CorrectionCost::Previous).unwrap();
        assert!(plan.n[1] >= 1);
        assert!(plan.achieved_cost <= 1000.0);
    }

    #[test]
    fn infeasible_budget_is_an_error() {
        let costs = CostModel::new(vec![1.0, 10.0]).unwrap();
        assert!(matches!(plan_norms(&costs, &[1.0, 1.0], 11.5, CorrectionCost::Previous), Err(Error::Infeasible(_))));
        assert!(plan_norms(&costs, &[1.0, 1.0], 12.0, CorrectionCost::Previous).is_ok());
        assert!(CostModel::new(vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn cost_formula_hand_cases() {
        let toggle = CostModel::new(vec![50.0, 80.0, 300.0]).unwrap();
        assert_eq!(cost_of(&[10_000, 500, 300], &toggle).unwrap(), 679_000.0);
        assert_eq!(cost_of(&[7], &CostModel::new(vec![3.0]).unwrap()).unwrap(), 21.0);
        assert_eq!(mc_cost(2010, 2, &toggle), 603_000.0);
        assert_eq!(matched_budget_baselines(603_000.0, &toggle), vec![12_060, 7_537, 2_010]);
    }

    #[test]
    fn next_level_pairing_pairs_with_the_level_above() {
        let costs = CostModel::new(vec![1.0, 4.0, 9.0]).unwrap();
        assert_eq!(costs.effective_all(CorrectionCost::Next), vec![1.0, 13.0, 13.0]);
        assert_eq!(costs.effective_all(CorrectionCost::Previous), vec![1.0, 5.0, 13.0]);
        let plan = plan_norms(&costs, &[1.0, 1.0, 1.0], 1e4, CorrectionCost::Next).unwrap();
        assert_eq!(plan.achieved_cost, cost_of(&plan.n, &costs).unwrap());
    }

    #[test]
    fn closed_form_matches_numeric_minimiser() {
        let key = SeedKey::new(77);
        for inst in 0..20u64 {
            let k = key.derive(inst);
            let levels = 2 + (k.uniform(0) * 3.0) as usize;
            let mut c = vec![0.5 + k.uniform(1)];
            for l in 1..levels {
                c.push(c[l - 1] * (1.5 + 20.0 * k.uniform(1 + l as u64)));
            }
            let costs = CostModel::new(c).unwrap();
            let norms: Vec<f64> = (0..levels).map(|l| 3.0 * k.uniform(10 + l as u64)).collect();
            let budget = 1e7;
            let plan = plan_norms(&costs, &norms, budget, CorrectionCost::Previous).unwrap();
            let a: Vec<f64> =
                norms.iter().enumerate().map(|(l, v)| if l == 0 { v.powi(4) + 1.0 } else { v * v + 1.0 }).collect();
            let oracle = numeric_minimiser(&a, &costs.effective_all(CorrectionCost::Previous), budget);
            for (got, want) in plan.n_continuous.iter().zip(&oracle) {
                assert!((got - want).abs() < 0.01 * want, "instance {inst}: {got} vs {want}");
            }
        }
    }

    proptest! {
        #[test]
        fn feasibility_and_monotonicity(
            c0 in 0.5f64..2.0,
            ratios in prop::collection::vec(1.1f64..30.0, 1..4),
            norms in prop::collection::vec(0.0f64..4.0, 4),
            bump in 0.0f64..3.0,
            which in 0usize..4,
            budget in 100.0f64..1e6,
        ) {
            let mut c = vec![c0];
            for r in &ratios {
                c.push(c.last().unwrap() * r);
            }
            let costs = CostModel::new(c).unwrap();
            let l_count = costs.levels();
            let norms = &norms[..l_count];
            let Ok(plan) = plan_norms(&costs, norms, budget, CorrectionCost::Previous) else {
                return Ok(());
            };
            let eff = costs.effective_all(CorrectionCost::Previous);
            prop_assert!(plan.achieved_cost <= budget);
            prop_assert!(plan.achieved_cost >= budget - eff.iter().cloned().fold(0.0, f64::max));
            prop_assert!(plan.n.iter().all(|&k| k >= 1));
            let target = which % l_count;
            let mut bigger = norms.to_vec();
            bigger[target] += bump;
            let plan2 = plan_norms(&costs, &bigger, budget, CorrectionCost::Previous).unwrap();
            for l in 0..l_count {
                let (a, b) = (plan.n_continuous[l], plan2.n_continuous[l]);
                if l == target {
                    prop_assert!(plan2.n[l] >= plan.n[l]);
                    prop_assert!(b >= a * (1.0 - 1e-12));
                } else {
                    prop_assert!(b <= a * (1.0 + 1e-12));
                    // level 0 absorbs the flooring remainder of the other
                    // levels, so its integer count is exempt
                    if l > 0 {
                        prop_assert!(plan2.n[l] <= plan.n[l], "level {} grew: {:?} -> {:?}", l, plan.n, plan2.n);
                    }
                }
            }
        }
    }
}
