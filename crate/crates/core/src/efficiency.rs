//! Training cost in sequence-iterations (one sequence seen for one epoch).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BudgetError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("initial set plus {h}×{iter} additions ({needed}) exceeds the pool of {total}")]
    OverBudget { h: u64, iter: u64, needed: u64, total: u64 },
    #[error("round {round}: remaining pool would be negative ({total} − {initial} − {h}×{round})")]
    NegativeRemaining { round: u64, total: u64, initial: u64, h: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BudgetParams {
    pub n_total: u64,
    pub n_init: u64,
    pub h: u64,
    pub iter: u64,
    pub e_init: u64,
    pub e_round: u64,
    pub e_full: u64,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self {
            n_total: 69,
            n_init: 6,
            h: 5,
            iter: 7,
            e_init: 15,
            e_round: 5,
            e_full: 50,
        }
    }
}

impl BudgetParams {
    pub fn validate(&self) -> Result<(), BudgetError> {
        for (name, v) in [
            ("n_total", self.n_total),
            ("n_init", self.n_init),
            ("h", self.h),
            ("iter", self.iter),
            ("e_init", self.e_init),
            ("e_round", self.e_round),
            ("e_full", self.e_full),
        ] {
            if v == 0 {
                return Err(BudgetError::NotPositive(name));
            }
        }
        let needed = self.n_init + self.h * self.iter;
        if needed > self.n_total {
            return Err(BudgetError::OverBudget {
                h: self.h,
                iter: self.iter,
                needed,
                total: self.n_total,
            });
        }
        Ok(())
    }
}

/// `N_total · e_full`.
pub fn cost_full(p: &BudgetParams) -> u64 {
    p.n_total * p.e_full
}

/// `N_init · e_init + Σ_{itr=1..rounds} (N_init + h·itr) · e_round`.
pub fn cost_active_train(p: &BudgetParams, train_rounds: u64) -> u64 {
    p.n_init * p.e_init + (1..=train_rounds).map(|itr| (p.n_init + p.h * itr) * p.e_round).sum::<u64>()
}

/// `(N_total − N_init) + Σ_{itr=1..rounds} (N_total − N_init − h·itr)`.
pub fn cost_active_infer(p: &BudgetParams, infer_rounds: u64) -> Result<u64, BudgetError> {
    let remaining = |itr: u64| {
        (p.n_init + p.h * itr <= p.n_total)
            .then(|| p.n_total - p.n_init - p.h * itr)
            .ok_or(BudgetError::NegativeRemaining {
                round: itr,
                total: p.n_total,
                initial: p.n_init,
                h: p.h,
            })
    };
    let mut total = remaining(0)?;
    for itr in 1..=infer_rounds {
        total += remaining(itr)?;
    }
    Ok(total)
}

/// Sequences selected after `rounds` increments, as a share of the pool.
pub fn selected_fraction(n_total: u64, n_init: u64, h: u64, rounds: u64) -> f64 {
    (n_init + h * rounds).min(n_total) as f64 / n_total as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostReport {
    pub params: BudgetParams,
    pub train_rounds: u64,
    pub infer_rounds: u64,
    pub l_full: u64,
    pub l_train: u64,
    pub l_remain: u64,
    pub l_active_total: u64,
    /// Sequences selected after `infer_rounds` increments.
    pub selected: u64,
    /// `selected / n_total` in percent.
    pub selected_percent: f64,
}

impl CostReport {
    pub fn new(p: &BudgetParams, train_rounds: u64, infer_rounds: u64) -> Result<Self, BudgetError> {
        p.validate()?;
        let l_train = cost_active_train(p, train_rounds);
        let l_remain = cost_active_infer(p, infer_rounds)?;
        let selected = (p.n_init + p.h * infer_rounds).min(p.n_total);
        Ok(Self {
            params: *p,
            train_rounds,
            infer_rounds,
            l_full: cost_full(p),
            l_train,
            l_remain,
            l_active_total: l_train + l_remain,
            selected,
            selected_percent: 100.0 * selected_fraction(p.n_total, p.n_init, p.h, infer_rounds),
        })
    }

    /// Every round trains; the final round needs no further inference.
    pub fn default_profile(p: &BudgetParams) -> Result<Self, BudgetError> {
        Self::new(p, p.iter, p.iter.saturating_sub(1))
    }
}
