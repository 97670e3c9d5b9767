//! Composition accounting for per-call privacy charges.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn add_repeated(&mut self, x: f64, times: u64) {
        for _ in 0..times {
            self.add(x);
        }
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    /// Accepted; `call_index` is the index of the first charged call.
    Accepted { call_index: u64 },
    Rejected,
}

#[derive(Debug, Default)]
struct LedgerState {
    spent: CompensatedSum,
    calls: u64,
}

/// Running total of accepted charges with an optional hard cap.
/// Charging is atomic: the cap check and the increment happen under one lock.
#[derive(Debug)]
pub struct PrivacyLedger {
    cap: Option<f64>,
    state: Mutex<LedgerState>,
}

impl PrivacyLedger {
    pub fn new(cap: Option<f64>) -> Result<Self> {
        if let Some(c) = cap {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("ledger cap must be positive, got {c}")));
            }
        }
        Ok(Self { cap, state: Mutex::new(LedgerState::default()) })
    }

    pub fn unbounded() -> Self {
        Self { cap: None, state: Mutex::new(LedgerState::default()) }
    }

    pub fn charge(&self, eps_star: f64) -> Result<Charge> {
        self.charge_repeated(eps_star, 1)
    }

    /// Charge `times` calls of `eps_star` each, all or nothing.
    pub fn charge_repeated(&self, eps_star: f64, times: u64) -> Result<Charge> {
        if !(eps_star > 0.0 && eps_star.is_finite()) {
            return Err(Error::InvalidArgument(format!("charge must be positive and finite, got {eps_star}")));
        }
        if times == 0 {
            return Err(Error::InvalidArgument("charge at least one call".into()));
        }
        let mut state = self.state.lock().expect("ledger lock poisoned");
        let mut next = state.spent;
        next.add_repeated(eps_star, times);
        if let Some(cap) = self.cap {
            if next.value() > cap {
                return Ok(Charge::Rejected);
            }
        }
        let call_index = state.calls;
        state.spent = next;
        state.calls += times;
        Ok(Charge::Accepted { call_index })
    }

    /// Like [`charge_repeated`](Self::charge_repeated) but turns a rejection into an error.
    pub fn require(&self, eps_star: f64, times: u64) -> Result<u64> {
        match self.charge_repeated(eps_star, times)? {
            Charge::Accepted { call_index } => Ok(call_index),
            Charge::Rejected => Err(Error::BudgetExhausted {
                spent: self.spent(),
                cap: self.cap.unwrap_or(f64::INFINITY),
                requested: eps_star * times as f64,
            }),
        }
    }

    pub fn spent(&self) -> f64 {
        self.state.lock().expect("ledger lock poisoned").spent.value()
    }

    pub fn call_count(&self) -> u64 {
        self.state.lock().expect("ledger lock poisoned").calls
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }
}

/// Per-call budgets `first, first/2, first/4, ...`; the total never reaches `2 * first`.
#[derive(Debug, Clone, Copy)]
pub struct GeometricSchedule {
    next: f64,
}

impl GeometricSchedule {
    pub fn new(first: f64) -> Result<Self> {
        if !(first > 0.0 && first.is_finite()) {
            return Err(Error::InvalidArgument(format!("schedule start must be positive, got {first}")));
        }
        Ok(Self { next: first })
    }
}

impl Iterator for GeometricSchedule {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let eps = self.next;
        if eps <= 0.0 {
            return None;
        }
        self.next = eps / 2.0;
        Some(eps)
    }
}
