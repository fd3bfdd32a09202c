//! Exact s-t maximum flow / minimum cut.
//!
//! [`Graph`] is a Boykov–Kolmogorov augmenting-path solver: two search trees
//! grow from the terminals, paths are augmented where they touch, and nodes
//! cut off from their tree are re-adopted or freed. Terminal arcs are stored
//! as a single signed residual per node, which suits image graphs where
//! every pixel is tied to both terminals.
//!
//! [`FlowNetwork`] is the general-purpose front end over explicit arcs.

use std::collections::VecDeque;

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

#[derive(Debug, Clone, Copy)]
struct Arc {
    head: u32,
    next: u32,
    r_cap: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    first: u32,
    /// Arc to the parent, or one of `NONE`, `TERMINAL`, `ORPHAN`.
    parent: u32,
    /// Residual to the source when positive, to the sink when negative.
    tr_cap: f64,
    is_sink: bool,
    active: bool,
    ts: u64,
    dist: u32,
}

/// Node side after [`Graph::maxflow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Sink,
}

#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    active: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u64,
}

#[inline]
fn sister(a: u32) -> u32 {
    a ^ 1
}

impl Graph {
    pub fn new(node_count: usize, edge_hint: usize) -> Self {
        assert!(node_count < ORPHAN as usize, "too many nodes");
        Self {
            nodes: vec![
                Node {
                    first: NONE,
                    parent: NONE,
                    tr_cap: 0.0,
                    is_sink: false,
                    active: false,
                    ts: 0,
                    dist: 0,
                };
                node_count
            ],
            arcs: Vec::with_capacity(edge_hint * 2),
            flow: 0.0,
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Adds capacity from the source to `i` and from `i` to the sink.
    pub fn add_terminal_weights(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        let node = &mut self.nodes[i];
        let delta = node.tr_cap;
        let (mut cs, mut ct) = (cap_source, cap_sink);
        if delta > 0.0 {
            cs += delta;
        } else {
            ct -= delta;
        }
        self.flow += cs.min(ct);
        node.tr_cap = cs - ct;
    }

    /// Adds the arc `i → j` with capacity `cap` and `j → i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j);
        let a = self.arcs.len() as u32;
        self.arcs.push(Arc {
            head: j as u32,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.arcs.push(Arc {
            head: i as u32,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[i].first = a;
        self.nodes[j].first = a + 1;
    }

    /// Side of `i` in the minimum cut found by the last [`Graph::maxflow`].
    /// Nodes not reachable from the source in the residual graph are on the
    /// sink side.
    pub fn side(&self, i: usize) -> Side {
        let n = &self.nodes[i];
        if n.parent != NONE && !n.is_sink {
            Side::Source
        } else {
            Side::Sink
        }
    }

    fn set_active(&mut self, i: u32) {
        let n = &mut self.nodes[i as usize];
        if !n.active {
            n.active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<u32> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i as usize].active = false;
            if self.nodes[i as usize].parent != NONE {
                return Some(i);
            }
        }
        None
    }

    /// Runs to completion and returns the maximum flow value.
    pub fn maxflow(&mut self) -> f64 {
        self.active.clear();
        self.orphans.clear();
        self.time = 0;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.active = false;
            n.ts = 0;
            if n.tr_cap > 0.0 {
                n.is_sink = false;
                n.parent = TERMINAL;
                n.dist = 1;
            } else if n.tr_cap < 0.0 {
                n.is_sink = true;
                n.parent = TERMINAL;
                n.dist = 1;
            } else {
                n.parent = NONE;
                continue;
            }
            self.set_active(i as u32);
        }

        let mut current: Option<u32> = None;
        loop {
            let i = match current {
                Some(i) if self.nodes[i as usize].parent != NONE => i,
                _ => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            current = None;

            let bridge = self.grow(i);
            self.time += 1;

            if let Some(a) = bridge {
                // `i` may still have unexplored neighbours
                current = Some(i);
                self.augment(a);
                self.adopt_orphans();
            }
        }
        self.flow
    }

    /// Expands the tree containing `i` by one node's neighbourhood. Returns
    /// an arc oriented source-tree → sink-tree if the trees touch.
    fn grow(&mut self, i: u32) -> Option<u32> {
        let node = self.nodes[i as usize];
        let mut a = node.first;
        while a != NONE {
            let arc = self.arcs[a as usize];
            let j = arc.head;
            let residual = if node.is_sink {
                self.arcs[sister(a) as usize].r_cap
            } else {
                arc.r_cap
            };
            if residual > 0.0 {
                let nj = self.nodes[j as usize];
                if nj.parent == NONE {
                    let nj = &mut self.nodes[j as usize];
                    nj.is_sink = node.is_sink;
                    nj.parent = sister(a);
                    nj.ts = node.ts;
                    nj.dist = node.dist + 1;
                    self.set_active(j);
                } else if nj.is_sink != node.is_sink {
                    return Some(if node.is_sink { sister(a) } else { a });
                } else if nj.ts <= node.ts && nj.dist > node.dist {
                    let nj = &mut self.nodes[j as usize];
                    nj.parent = sister(a);
                    nj.ts = node.ts;
                    nj.dist = node.dist + 1;
                }
            }
            a = arc.next;
        }
        None
    }

    fn augment(&mut self, middle: u32) {
        let mut bottleneck = self.arcs[middle as usize].r_cap;

        // source side
        let mut i = self.arcs[sister(middle) as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[sister(a) as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(self.nodes[i as usize].tr_cap);

        // sink side
        let mut i = self.arcs[middle as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i as usize].tr_cap);

        self.arcs[sister(middle) as usize].r_cap += bottleneck;
        self.arcs[middle as usize].r_cap -= bottleneck;

        let mut i = self.arcs[sister(middle) as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a as usize].r_cap += bottleneck;
            let s = &mut self.arcs[sister(a) as usize].r_cap;
            *s -= bottleneck;
            if *s <= 0.0 {
                *s = 0.0;
                self.make_orphan(i);
            }
            i = self.arcs[a as usize].head;
        }
        let n = &mut self.nodes[i as usize];
        n.tr_cap -= bottleneck;
        if n.tr_cap <= 0.0 {
            n.tr_cap = 0.0;
            self.make_orphan(i);
        }

        let mut i = self.arcs[middle as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[sister(a) as usize].r_cap += bottleneck;
            let r = &mut self.arcs[a as usize].r_cap;
            *r -= bottleneck;
            if *r <= 0.0 {
                *r = 0.0;
                self.make_orphan(i);
            }
            i = self.arcs[a as usize].head;
        }
        let n = &mut self.nodes[i as usize];
        n.tr_cap += bottleneck;
        if n.tr_cap >= 0.0 {
            n.tr_cap = 0.0;
            self.make_orphan(i);
        }

        self.flow += bottleneck;
    }

    fn make_orphan(&mut self, i: u32) {
        self.nodes[i as usize].parent = ORPHAN;
        self.orphans.push_front(i);
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.adopt(i);
        }
    }

    /// Distance from `j` to its terminal through valid parents, or `None`
    /// if the chain ends in an orphan. Stamps visited nodes with the
    /// current time.
    fn origin_distance(&mut self, start: u32) -> Option<u32> {
        let mut j = start;
        let mut d = 0u32;
        loop {
            let n = self.nodes[j as usize];
            if n.ts == self.time {
                d += n.dist;
                break;
            }
            d += 1;
            if n.parent == TERMINAL {
                let n = &mut self.nodes[j as usize];
                n.ts = self.time;
                n.dist = 1;
                break;
            }
            if n.parent == ORPHAN {
                return None;
            }
            j = self.arcs[n.parent as usize].head;
        }
        // mark the chain so later searches stop early
        let mut j = start;
        let mut dd = d;
        while self.nodes[j as usize].ts != self.time {
            let n = &mut self.nodes[j as usize];
            n.ts = self.time;
            n.dist = dd;
            dd -= 1;
            j = self.arcs[n.parent as usize].head;
        }
        Some(d)
    }

    fn adopt(&mut self, i: u32) {
        let is_sink = self.nodes[i as usize].is_sink;
        let mut best: Option<(u32, u32)> = None;

        let mut a = self.nodes[i as usize].first;
        while a != NONE {
            let arc = self.arcs[a as usize];
            let residual = if is_sink {
                arc.r_cap
            } else {
                self.arcs[sister(a) as usize].r_cap
            };
            let j = arc.head;
            let nj = self.nodes[j as usize];
            if residual > 0.0 && nj.is_sink == is_sink && nj.parent != NONE {
                if let Some(d) = self.origin_distance(j) {
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((a, d));
                    }
                }
            }
            a = arc.next;
        }

        if let Some((a, d)) = best {
            let n = &mut self.nodes[i as usize];
            n.parent = a;
            n.ts = self.time;
            n.dist = d + 1;
            return;
        }

        // no valid parent: free the node and orphan its children
        let mut a = self.nodes[i as usize].first;
        while a != NONE {
            let arc = self.arcs[a as usize];
            let j = arc.head;
            let nj = self.nodes[j as usize];
            if nj.is_sink == is_sink && nj.parent != NONE {
                let residual = if is_sink {
                    arc.r_cap
                } else {
                    self.arcs[sister(a) as usize].r_cap
                };
                if residual > 0.0 {
                    self.set_active(j);
                }
                if nj.parent != TERMINAL && nj.parent != ORPHAN && self.arcs[nj.parent as usize].head == i {
                    self.nodes[j as usize].parent = ORPHAN;
                    self.orphans.push_back(j);
                }
            }
            a = arc.next;
        }
        self.nodes[i as usize].parent = NONE;
    }
}

/// Capacity used for arcs that encode hard constraints.
pub const HARD_CAPACITY: f64 = 1e15;

/// Directed network with explicit source and sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    node_count: usize,
    source: usize,
    sink: usize,
    arcs: Vec<(usize, usize, f64)>,
}

/// Maximum flow value and the source side of a minimum cut.
#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes on the source side; always includes the source.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= node_count || sink >= node_count || source == sink {
            return Err(Error::arg(format!(
                "source {source} and sink {sink} must be distinct nodes below {node_count}"
            )));
        }
        Ok(Self {
            node_count,
            source,
            sink,
            arcs: Vec::new(),
        })
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<()> {
        if from >= self.node_count || to >= self.node_count {
            return Err(Error::arg(format!("arc {from}->{to} references a missing node")));
        }
        if !(capacity >= 0.0 && capacity <= HARD_CAPACITY) {
            return Err(Error::arg(format!("capacity {capacity} outside [0, {HARD_CAPACITY:e}]")));
        }
        self.arcs.push((from, to, capacity));
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[(usize, usize, f64)] {
        &self.arcs
    }

    /// Total capacity of arcs leaving the given source side.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        self.arcs
            .iter()
            .filter(|&&(u, v, _)| source_side[u] && !source_side[v])
            .map(|&(_, _, c)| c)
            .sum()
    }
}

pub fn max_flow_min_cut(net: &FlowNetwork) -> MinCut {
    let (s, t) = (net.source, net.sink);
    let mut graph = Graph::new(net.node_count, net.arcs.len());
    let mut direct = 0.0;
    for &(u, v, c) in &net.arcs {
        if u == v || v == s || u == t {
            continue;
        }
        match (u == s, v == t) {
            (true, true) => direct += c,
            (true, false) => graph.add_terminal_weights(v, c, 0.0),
            (false, true) => graph.add_terminal_weights(u, 0.0, c),
            (false, false) => graph.add_edge(u, v, c, 0.0),
        }
    }
    let flow = graph.maxflow() + direct;
    let source_side = (0..net.node_count)
        .map(|i| i == s || (i != t && graph.side(i) == Side::Source))
        .collect();
    MinCut { flow, source_side }
}
