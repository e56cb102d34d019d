use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Debug, Display};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DagError<K: Debug + Display> {
    #[error("graph has no nodes")]
    Empty,
    #[error("node {0} is declared more than once")]
    Duplicate(K),
    #[error("node {0} depends on itself")]
    SelfDependency(K),
    #[error("node {node} depends on unknown node {missing}")]
    UnknownDependency { node: K, missing: K },
    #[error("cycle: {}", display_cycle(.0))]
    Cycle(Vec<K>),
}

fn display_cycle<K: Display>(cycle: &[K]) -> String {
    let mut parts: Vec<String> = cycle.iter().map(|k| k.to_string()).collect();
    if let Some(first) = parts.first().cloned() {
        parts.push(first);
    }
    parts.join(" -> ")
}

/// Layered topological order: every node in layer k depends only on nodes
/// in layers before k. Layers are sorted by key.
pub fn topological_layers<K>(nodes: &[(K, BTreeSet<K>)]) -> Result<Vec<Vec<K>>, DagError<K>>
where
    K: Ord + Copy + Debug + Display,
{
    if nodes.is_empty() {
        return Err(DagError::Empty);
    }
    let mut deps: BTreeMap<K, &BTreeSet<K>> = BTreeMap::new();
    for (id, d) in nodes {
        if deps.insert(*id, d).is_some() {
            return Err(DagError::Duplicate(*id));
        }
    }
    for (id, d) in nodes {
        if d.contains(id) {
            return Err(DagError::SelfDependency(*id));
        }
        if let Some(missing) = d.iter().find(|m| !deps.contains_key(m)) {
            return Err(DagError::UnknownDependency { node: *id, missing: *missing });
        }
    }

    let mut placed: BTreeSet<K> = BTreeSet::new();
    let mut layers = Vec::new();
    while placed.len() < deps.len() {
        let layer: Vec<K> = deps
            .iter()
            .filter(|(id, d)| !placed.contains(id) && d.iter().all(|x| placed.contains(x)))
            .map(|(id, _)| *id)
            .collect();
        if layer.is_empty() {
            return Err(DagError::Cycle(find_cycle(&deps, &placed)));
        }
        placed.extend(layer.iter().copied());
        layers.push(layer);
    }
    Ok(layers)
}

/// Every unplaced node has an unplaced dependency, so walking dependencies
/// from any of them must revisit a node.
fn find_cycle<K: Ord + Copy>(deps: &BTreeMap<K, &BTreeSet<K>>, placed: &BTreeSet<K>) -> Vec<K> {
    let start = *deps.keys().find(|k| !placed.contains(k)).expect("an unplaced node exists");
    let mut path = vec![start];
    let mut current = start;
    loop {
        let next = *deps[&current]
            .iter()
            .find(|d| !placed.contains(d))
            .expect("unplaced node has an unplaced dependency");
        if let Some(pos) = path.iter().position(|p| *p == next) {
            let mut cycle = path.split_off(pos);
            // report in dependency-flow order: a -> b means b depends on a
            cycle.reverse();
            return cycle;
        }
        path.push(next);
        current = next;
    }
}
