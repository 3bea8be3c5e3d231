use std::collections::HashMap;

use super::Instance;
use crate::error::{Error, Result};

/// Materialized join of a subset of relations, over the union of their attributes.
#[derive(Debug, Clone)]
pub(crate) struct SubJoin {
    /// Attribute indices of each row, ascending.
    pub attrs: Vec<usize>,
    pub rows: Vec<(Vec<u32>, u64)>,
}

struct Step<'a> {
    relation: usize,
    /// Positions (within the relation schema) of attributes bound earlier.
    bound_pos: Vec<usize>,
    /// Positions of attributes first bound by this step.
    fresh_pos: Vec<usize>,
    index: HashMap<Vec<u32>, Vec<(&'a [u32], u64)>>,
}

fn plan<'a>(instance: &'a Instance, rels: &[usize]) -> Vec<Step<'a>> {
    let query = instance.query();
    let mut remaining: Vec<usize> = rels.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let mut bound = vec![false; query.attributes().len()];
    let mut steps = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        // Prefer relations sharing an attribute with what is bound, then smaller supports.
        let pick = remaining
            .iter()
            .enumerate()
            .min_by_key(|(_, &r)| {
                let connected = query.edge(r).iter().any(|&a| bound[a]);
                (
                    !connected && !steps.is_empty(),
                    instance.relation(r).len(),
                    r,
                )
            })
            .map(|(pos, _)| pos)
            .unwrap();
        let r = remaining.remove(pick);
        let schema = query.edge(r);
        let bound_pos: Vec<usize> = (0..schema.len()).filter(|&p| bound[schema[p]]).collect();
        let fresh_pos: Vec<usize> = (0..schema.len()).filter(|&p| !bound[schema[p]]).collect();
        let mut index: HashMap<Vec<u32>, Vec<(&[u32], u64)>> = HashMap::new();
        for (tuple, &freq) in instance.relation(r).support() {
            let key: Vec<u32> = bound_pos.iter().map(|&p| tuple[p]).collect();
            index.entry(key).or_default().push((tuple.as_slice(), freq));
        }
        for &a in schema {
            bound[a] = true;
        }
        steps.push(Step {
            relation: r,
            bound_pos,
            fresh_pos,
            index,
        });
    }
    steps
}

fn descend<F>(
    instance: &Instance,
    steps: &[Step<'_>],
    assignment: &mut [u32],
    weight: u64,
    key: &mut Vec<u32>,
    f: &mut F,
) -> Result<()>
where
    F: FnMut(&[u32], u64) -> Result<()>,
{
    let Some((step, rest)) = steps.split_first() else {
        return f(assignment, weight);
    };
    let schema = instance.query().edge(step.relation);
    key.clear();
    key.extend(step.bound_pos.iter().map(|&p| assignment[schema[p]]));
    let Some(matches) = step.index.get(key.as_slice()) else {
        return Ok(());
    };
    for &(tuple, freq) in matches {
        for &p in &step.fresh_pos {
            assignment[schema[p]] = tuple[p];
        }
        let w = weight.checked_mul(freq).ok_or(Error::Overflow)?;
        descend(instance, rest, assignment, w, key, f)?;
    }
    Ok(())
}

/// Calls `f` once per joinable combination of tuples from `rels`, with a
/// full-width assignment (only attributes of `rels` are meaningful) and the
/// product of frequencies.
pub(crate) fn for_each_join<F>(instance: &Instance, rels: &[usize], mut f: F) -> Result<()>
where
    F: FnMut(&[u32], u64) -> Result<()>,
{
    let steps = plan(instance, rels);
    let mut assignment = vec![0u32; instance.query().attributes().len()];
    let mut key = Vec::new();
    descend(instance, &steps, &mut assignment, 1, &mut key, &mut f)
}

pub(crate) fn sub_join(instance: &Instance, rels: &[usize], cap: usize) -> Result<SubJoin> {
    let attrs = instance.query().attrs_of(rels);
    let mut rows = Vec::new();
    for_each_join(instance, rels, |assignment, w| {
        if rows.len() >= cap {
            return Err(Error::SupportTooLarge {
                what: format!("join of relations {rels:?}"),
                cap,
            });
        }
        rows.push((attrs.iter().map(|&a| assignment[a]).collect(), w));
        Ok(())
    })?;
    rows.sort_unstable();
    Ok(SubJoin { attrs, rows })
}

pub(crate) fn sub_join_size(instance: &Instance, rels: &[usize]) -> Result<u64> {
    let mut total = 0u64;
    for_each_join(instance, rels, |_, w| {
        total = total.checked_add(w).ok_or(Error::Overflow)?;
        Ok(())
    })?;
    Ok(total)
}
