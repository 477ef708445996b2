use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::ClassValue;
use crate::mondrian::AnonymizedFragment;

/// An equivalence class, addressed by fragment and position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub fragment: usize,
    pub eq: usize,
}

/// Which equivalence classes can be joined with which.
///
/// Two classes are adjacent when they sit in different fragments and share a
/// class value. Edges are taken from the class sets at construction time and
/// are not stored explicitly; enforcement only ever shrinks class sets, so the
/// snapshot remains a superset of the live edges.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    nodes: Vec<NodeRef>,
    class_sets: Vec<Vec<ClassValue>>,
    by_class: BTreeMap<ClassValue, Vec<usize>>,
    component_ids: Vec<usize>,
    components: usize,
    roots: Vec<usize>,
}

impl DependencyGraph {
    /// Builds the graph over every class of every fragment. Components are
    /// discovered breadth-first from roots drawn in a seeded random order.
    pub fn build(fragments: &[AnonymizedFragment], seed: u64) -> Self {
        let mut nodes = Vec::new();
        let mut class_sets = Vec::new();
        let mut by_class: BTreeMap<ClassValue, Vec<usize>> = BTreeMap::new();
        for (f, frag) in fragments.iter().enumerate() {
            for (e, eq) in frag.classes.iter().enumerate() {
                let id = nodes.len();
                nodes.push(NodeRef { fragment: f, eq: e });
                let set: Vec<ClassValue> = eq.class_set().collect();
                for &c in &set {
                    by_class.entry(c).or_default().push(id);
                }
                class_sets.push(set);
            }
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        let mut graph = DependencyGraph {
            nodes,
            class_sets,
            by_class,
            component_ids: Vec::new(),
            components: 0,
            roots: Vec::new(),
        };
        let unset = usize::MAX;
        let mut ids = vec![unset; graph.nodes.len()];
        let mut queue = VecDeque::new();
        for &root in &order {
            if ids[root] != unset {
                continue;
            }
            let cid = graph.roots.len();
            graph.roots.push(root);
            ids[root] = cid;
            queue.push_back(root);
            while let Some(u) = queue.pop_front() {
                for v in graph.neighbors(u) {
                    if ids[v] == unset {
                        ids[v] = cid;
                        queue.push_back(v);
                    }
                }
            }
        }
        graph.components = graph.roots.len();
        graph.component_ids = ids;
        graph
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> NodeRef {
        self.nodes[id]
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn component_of(&self, id: usize) -> usize {
        self.component_ids[id]
    }

    /// First node of each component, in discovery order.
    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.nodes[u].fragment != self.nodes[v].fragment
            && self.class_sets[u].iter().any(|c| self.class_sets[v].binary_search(c).is_ok())
    }

    /// Adjacent nodes, ascending.
    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        let own = self.nodes[u].fragment;
        let mut out: Vec<usize> = self.class_sets[u]
            .iter()
            .flat_map(|c| self.by_class[c].iter().copied())
            .filter(|&v| self.nodes[v].fragment != own)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        (0..self.nodes.len()).map(|u| self.neighbors(u).len()).sum::<usize>() / 2
    }
}
