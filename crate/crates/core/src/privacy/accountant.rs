use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::PrivacyParams;
use crate::error::{Error, Result};

/// Relative slack allowed when comparing accumulated spend against the budget, so that
/// a budget split into floating-point shares can be spent in full.
const COMPOSITION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub query_id: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Accumulated (ε, δ). Unlike [`PrivacyParams`], zero is a valid spend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpend {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Default)]
struct State {
    entries: Vec<LedgerEntry>,
    spent: PrivacySpend,
}

/// Tracks privacy spend against a total (ε, δ) budget under basic sequential
/// composition. The ledger is append-only and `consume` is linearizable: concurrent
/// callers are serialized through an internal lock and each is checked against the
/// spend of everything ordered before it.
#[derive(Debug)]
pub struct PrivacyAccountant {
    budget: PrivacyParams,
    state: Mutex<State>,
}

impl Clone for PrivacyAccountant {
    fn clone(&self) -> Self {
        let state = self.lock();
        PrivacyAccountant {
            budget: self.budget,
            state: Mutex::new(State {
                entries: state.entries.clone(),
                spent: state.spent,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub budget: PrivacyParams,
    pub spent: PrivacySpend,
    pub remaining: PrivacySpend,
    pub entries: Vec<LedgerEntry>,
}

impl PrivacyAccountant {
    pub fn new(budget: PrivacyParams) -> Self {
        PrivacyAccountant {
            budget,
            state: Mutex::new(State::default()),
        }
    }

    /// Rebuilds an accountant by replaying `entries` in order.
    pub fn from_ledger(budget: PrivacyParams, entries: Vec<LedgerEntry>) -> Result<Self> {
        let accountant = PrivacyAccountant::new(budget);
        {
            let mut state = accountant.lock();
            for entry in entries {
                let cost = PrivacyParams::new(entry.epsilon, entry.delta)?;
                let next = accountant.check(&state, &entry.query_id, cost)?;
                state.spent = next;
                state.entries.push(entry);
            }
        }
        Ok(accountant)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        // A panic while holding the lock cannot leave the state half-written: the
        // entry push and spend update happen after all fallible work.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn check(&self, state: &State, query_id: &str, cost: PrivacyParams) -> Result<PrivacySpend> {
        let next = PrivacySpend {
            epsilon: state.spent.epsilon + cost.epsilon(),
            delta: state.spent.delta + cost.delta(),
        };
        let eps_cap = self.budget.epsilon() * (1.0 + COMPOSITION_SLACK);
        let delta_cap = self.budget.delta() * (1.0 + COMPOSITION_SLACK);
        if next.epsilon > eps_cap || next.delta > delta_cap {
            return Err(Error::BudgetExhausted {
                query_id: query_id.to_string(),
                requested_epsilon: cost.epsilon(),
                requested_delta: cost.delta(),
                remaining_epsilon: (self.budget.epsilon() - state.spent.epsilon).max(0.0),
                remaining_delta: (self.budget.delta() - state.spent.delta).max(0.0),
            });
        }
        Ok(next)
    }

    /// Debits `cost` for `query_id`. On `BudgetExhausted` nothing changes.
    pub fn consume(&self, query_id: impl Into<String>, cost: PrivacyParams) -> Result<()> {
        let query_id = query_id.into();
        let mut state = self.lock();
        let next = self.check(&state, &query_id, cost)?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        state.entries.push(LedgerEntry {
            query_id,
            epsilon: cost.epsilon(),
            delta: cost.delta(),
            timestamp,
        });
        state.spent = next;
        Ok(())
    }

    pub fn budget(&self) -> PrivacyParams {
        self.budget
    }

    pub fn spent(&self) -> PrivacySpend {
        self.lock().spent
    }

    pub fn remaining(&self) -> PrivacySpend {
        let spent = self.spent();
        PrivacySpend {
            epsilon: (self.budget.epsilon() - spent.epsilon).max(0.0),
            delta: (self.budget.delta() - spent.delta).max(0.0),
        }
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.lock().entries.clone()
    }

    pub fn ledger_len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn report(&self) -> BudgetReport {
        let state = self.lock();
        BudgetReport {
            budget: self.budget,
            spent: state.spent,
            remaining: PrivacySpend {
                epsilon: (self.budget.epsilon() - state.spent.epsilon).max(0.0),
                delta: (self.budget.delta() - state.spent.delta).max(0.0),
            },
            entries: state.entries.clone(),
        }
    }

    /// The ledger as a JSON array of `{query_id, epsilon, delta, timestamp}`.
    pub fn ledger_json(&self) -> String {
        serde_json::to_string_pretty(&self.ledger()).expect("ledger entries serialize")
    }
}

impl std::fmt::Display for BudgetReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "budget     ε={:.6}  δ={:.3e}",
            self.budget.epsilon(),
            self.budget.delta()
        )?;
        writeln!(f, "spent      ε={:.6}  δ={:.3e}", self.spent.epsilon, self.spent.delta)?;
        writeln!(
            f,
            "remaining  ε={:.6}  δ={:.3e}",
            self.remaining.epsilon, self.remaining.delta
        )?;
        writeln!(f, "entries    {}", self.entries.len())?;
        for entry in &self.entries {
            writeln!(
                f,
                "  {:<48} ε={:.6}  δ={:.3e}",
                entry.query_id, entry.epsilon, entry.delta
            )?;
        }
        Ok(())
    }
}
