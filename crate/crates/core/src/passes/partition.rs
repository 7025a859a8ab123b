//! Backend partitioning.
//!
//! Nodes are tagged by whether the main backend supports them, then grouped
//! greedily in topological order: a node joins a same-tag group of one of its
//! producers unless that would close a cycle between groups. A final sweep
//! merges any two same-tag groups whose union keeps the group graph acyclic,
//! so no further merge is possible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ir::{Function, Node, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackendTag {
    Main,
    Fallback,
}

impl BackendTag {
    pub fn name(self) -> &'static str {
        match self {
            BackendTag::Main => "main",
            BackendTag::Fallback => "fallback",
        }
    }
}

impl fmt::Display for BackendTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub tag: BackendTag,
    pub nodes: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub assignment: BTreeMap<NodeId, BackendTag>,
    /// In an execution order of the condensation.
    pub groups: Vec<Group>,
}

impl Partitioning {
    pub fn group_of(&self, id: NodeId) -> Option<usize> {
        self.groups.iter().position(|g| g.nodes.contains(&id))
    }

    /// Edges between distinct groups induced by the function's edges.
    pub fn condensation_edges(&self, f: &Function) -> BTreeSet<(usize, usize)> {
        let owner: BTreeMap<NodeId, usize> = self
            .groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.nodes.iter().map(move |&n| (n, i)))
            .collect();
        group_edges(f, &owner)
    }
}

/// Tab-separated `index tag ids`, one group per line.
impl fmt::Display for Partitioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.groups.iter().enumerate() {
            let ids: Vec<String> = g.nodes.iter().map(|n| n.to_string()).collect();
            writeln!(f, "{i}\t{}\t{}", g.tag, ids.join(","))?;
        }
        Ok(())
    }
}

fn group_edges(f: &Function, owner: &BTreeMap<NodeId, usize>) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for node in f.nodes() {
        let Some(&to) = owner.get(&node.id) else {
            continue;
        };
        for input in &node.inputs {
            if let Some(&from) = owner.get(&input.node) {
                if from != to {
                    edges.insert((from, to));
                }
            }
        }
    }
    edges
}

fn successors(edges: &BTreeSet<(usize, usize)>) -> BTreeMap<usize, Vec<usize>> {
    let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        succ.entry(a).or_default().push(b);
    }
    succ
}

/// Is `to` reachable from `from` along a path that leaves `from` through a
/// group other than `avoid`?
fn reaches(succ: &BTreeMap<usize, Vec<usize>>, from: usize, to: usize, avoid: usize) -> bool {
    let mut stack: Vec<usize> = succ
        .get(&from)
        .map(|v| v.iter().copied().filter(|&n| n != avoid).collect())
        .unwrap_or_default();
    let mut seen = BTreeSet::new();
    while let Some(g) = stack.pop() {
        if g == to {
            return true;
        }
        if !seen.insert(g) {
            continue;
        }
        if let Some(next) = succ.get(&g) {
            stack.extend(next.iter().copied());
        }
    }
    false
}

/// Would merging groups `a` and `b` create a cycle?
fn merge_creates_cycle(succ: &BTreeMap<usize, Vec<usize>>, a: usize, b: usize) -> bool {
    reaches(succ, a, b, b) || reaches(succ, b, a, a)
}

pub fn partition(f: &Function, supported: impl Fn(&Node) -> bool) -> Partitioning {
    let order = f
        .topological_order()
        .expect("partition requires a valid function");
    let mut assignment = BTreeMap::new();
    let mut owner: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut tags: Vec<BackendTag> = Vec::new();

    for &id in &order {
        let node = f.node(id).unwrap();
        if node.op.is_source() {
            continue;
        }
        let tag = if supported(node) {
            BackendTag::Main
        } else {
            BackendTag::Fallback
        };
        assignment.insert(id, tag);

        let producer_groups: BTreeSet<usize> = node
            .inputs
            .iter()
            .filter_map(|i| owner.get(&i.node).copied())
            .collect();
        let succ = successors(&group_edges(f, &owner));
        let joined = producer_groups.iter().copied().find(|&g| {
            tags[g] == tag
                && producer_groups
                    .iter()
                    .all(|&h| h == g || !reaches(&succ, g, h, usize::MAX))
        });
        let group = joined.unwrap_or_else(|| {
            tags.push(tag);
            tags.len() - 1
        });
        owner.insert(id, group);
    }

    // merge sweep
    let mut members: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); tags.len()];
    for (&id, &g) in &owner {
        members[g].insert(id);
    }
    'sweep: loop {
        let live: Vec<usize> = (0..members.len())
            .filter(|&g| !members[g].is_empty())
            .collect();
        let succ = successors(&group_edges(f, &owner));
        for (i, &a) in live.iter().enumerate() {
            for &b in &live[i + 1..] {
                if tags[a] == tags[b] && !merge_creates_cycle(&succ, a, b) {
                    let moved = std::mem::take(&mut members[b]);
                    for id in &moved {
                        owner.insert(*id, a);
                    }
                    members[a].extend(moved);
                    continue 'sweep;
                }
            }
        }
        break;
    }

    // order groups topologically, earliest first node first
    let position: BTreeMap<NodeId, usize> =
        order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let live: Vec<usize> = (0..members.len())
        .filter(|&g| !members[g].is_empty())
        .collect();
    let edges = group_edges(f, &owner);
    let first = |g: usize| members[g].iter().map(|n| position[n]).min().unwrap();
    let mut indegree: BTreeMap<usize, usize> = live.iter().map(|&g| (g, 0)).collect();
    for &(_, b) in &edges {
        *indegree.get_mut(&b).unwrap() += 1;
    }
    let mut ready: BTreeSet<(usize, usize)> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&g, _)| (first(g), g))
        .collect();
    let mut groups = Vec::with_capacity(live.len());
    while let Some(&(key, g)) = ready.iter().next() {
        ready.remove(&(key, g));
        groups.push(Group {
            tag: tags[g],
            nodes: members[g].clone(),
        });
        for &(a, b) in &edges {
            if a == g {
                let d = indegree.get_mut(&b).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert((first(b), b));
                }
            }
        }
    }
    debug_assert_eq!(groups.len(), live.len(), "condensation must be acyclic");

    Partitioning { assignment, groups }
}
