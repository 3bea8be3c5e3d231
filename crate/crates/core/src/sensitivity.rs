//! Local and residual sensitivity of the join-counting query.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relational::{boundary_query, Instance};

/// Largest number of relations for which all 2^m boundary queries are enumerated.
pub const MAX_RELATIONS: usize = 12;

/// T_E for every relation subset E, indexed by bitmask; entry 0 is T_∅ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTable {
    m: usize,
    values: Vec<u64>,
}

impl BoundaryTable {
    pub fn compute(instance: &Instance) -> Result<Self> {
        let m = instance.query().arity();
        if m > MAX_RELATIONS {
            return Err(Error::InvalidParameter(format!(
                "{m} relations exceed the enumeration limit of {MAX_RELATIONS}"
            )));
        }
        let mut values = vec![1u64; 1 << m];
        for mask in 1..(1usize << m) {
            values[mask] = boundary_query(instance, &mask_to_set(mask))?;
        }
        Ok(BoundaryTable { m, values })
    }

    pub fn arity(&self) -> usize {
        self.m
    }

    pub fn get(&self, mask: usize) -> u64 {
        self.values[mask]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// LS = max_i T_{[m]∖{i}}; 1 when there is a single relation.
    pub fn local(&self) -> u64 {
        let full = (1usize << self.m) - 1;
        (0..self.m)
            .map(|i| self.values[full & !(1 << i)])
            .max()
            .unwrap_or(1)
    }
}

pub fn mask_to_set(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|&i| mask >> i & 1 == 1).collect()
}

pub fn set_to_mask(set: &[usize]) -> usize {
    set.iter().fold(0, |acc, &i| acc | 1 << i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub relations: Vec<usize>,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub local: u64,
    pub residual: f64,
    pub beta: f64,
    pub k_star: u64,
    pub per_e: Vec<BoundaryValue>,
}

pub fn local_sensitivity(instance: &Instance) -> Result<u64> {
    let m = instance.query().arity();
    if m == 1 {
        return Ok(1);
    }
    let mut best = 0;
    for i in 0..m {
        let rest: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        best = best.max(boundary_query(instance, &rest)?);
    }
    Ok(best)
}

/// Enumeration stops here: past ⌈m/β⌉ + m the discounted terms only decrease.
pub fn k_max(m: usize, beta: f64) -> u64 {
    (m as f64 / beta).ceil() as u64 + m as u64
}

fn discount(beta: f64, k: u64, lhat: f64) -> f64 {
    (-beta * k as f64).exp() * lhat
}

/// Calls `f` with every vector of `parts` non-negative integers summing to `k`.
fn compositions<F: FnMut(&[f64])>(k: u64, parts: usize, f: &mut F) {
    fn go<F: FnMut(&[f64])>(left: u64, slot: usize, buf: &mut Vec<f64>, f: &mut F) {
        if slot + 1 == buf.len() {
            buf[slot] = left as f64;
            f(buf);
            return;
        }
        for v in 0..=left {
            buf[slot] = v as f64;
            go(left - v, slot + 1, buf, f);
        }
    }
    if parts == 0 {
        f(&[]);
        return;
    }
    let mut buf = vec![0.0; parts];
    go(k, 0, &mut buf, f);
}

/// LŜ^k from a table of (possibly real-valued) boundary quantities indexed by mask.
pub fn lhat(m: usize, t: &[f64], k: u64) -> f64 {
    let full = (1usize << m) - 1;
    let mut best = f64::NEG_INFINITY;
    for i in 0..m {
        let s_mask = full & !(1 << i);
        let members = mask_to_set(s_mask);
        // Subsets E of S are indexed by bits over `members`; rest[e] is T_{S∖E}.
        let rest: Vec<f64> = (0..1usize << members.len())
            .map(|e| {
                let e_mask = members
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| e >> b & 1 == 1)
                    .fold(0usize, |acc, (_, &r)| acc | 1 << r);
                t[s_mask & !e_mask]
            })
            .collect();
        let mut prod = vec![0.0; rest.len()];
        compositions(k, members.len(), &mut |s| {
            prod[0] = 1.0;
            let mut value = 0.0;
            for e in 0..prod.len() {
                if e > 0 {
                    let low = e.trailing_zeros() as usize;
                    prod[e] = prod[e & (e - 1)] * s[low];
                }
                value += rest[e] * prod[e];
            }
            if value > best {
                best = value;
            }
        });
    }
    best
}

/// max over k ≤ k_max of e^{−βk}·LŜ^k; returns the value and its first maximizing k.
pub fn residual_from_boundaries(m: usize, t: &[f64], beta: f64) -> (f64, u64) {
    if m == 1 {
        return (1.0, 0);
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for k in 0..=k_max(m, beta) {
        let v = discount(beta, k, lhat(m, t, k));
        if v > best {
            best = v;
            arg = k;
        }
    }
    (best, arg)
}

pub fn residual_sensitivity(instance: &Instance, beta: f64) -> Result<SensitivityReport> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let table = BoundaryTable::compute(instance)?;
    let m = table.arity();
    let (residual, k_star) = residual_from_boundaries(m, &table.as_f64(), beta);
    let per_e = (1..(1usize << m))
        .map(|mask| BoundaryValue {
            relations: mask_to_set(mask),
            value: table.get(mask),
        })
        .collect();
    Ok(SensitivityReport {
        local: table.local(),
        residual,
        beta,
        k_star,
        per_e,
    })
}

/// Two relations: LŜ^k = LS + k.
pub fn residual_sensitivity_two_table_fast(instance: &Instance, beta: f64) -> Result<f64> {
    let m = instance.query().arity();
    if m != 2 {
        return Err(Error::WrongArity {
            expected: "2".into(),
            found: m,
        });
    }
    let delta = local_sensitivity(instance)? as f64;
    Ok(two_table_closed_form(delta, beta))
}

pub fn two_table_closed_form(delta: f64, beta: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for k in 0..=k_max(2, beta) {
        let v = discount(beta, k, delta + k as f64);
        if v > best {
            best = v;
        }
    }
    best
}
