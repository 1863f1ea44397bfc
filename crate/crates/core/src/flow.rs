//! Dinic max-flow on `f64` capacities.
//!
//! Edges are stored in pairs: edge `e` and its reverse `e ^ 1`. The flow on a
//! forward edge is the residual capacity of its reverse. Infinite capacities are
//! allowed.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    eps: f64,
}

impl FlowGraph {
    /// `eps` is the smallest residual treated as usable.
    pub fn new(nodes: usize, eps: f64) -> Self {
        FlowGraph {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            eps,
        }
    }

    pub fn node_count(&self) -> usize {
        self.head.len()
    }

    /// Adds `u -> v` with capacity `cap` and returns the forward edge index.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64) -> usize {
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(cap.max(0.0));
        self.head[u].push(e);
        self.to.push(u);
        self.cap.push(0.0);
        self.head[v].push(e + 1);
        e
    }

    pub fn flow(&self, edge: usize) -> f64 {
        self.cap[edge ^ 1]
    }

    pub fn residual(&self, edge: usize) -> f64 {
        self.cap[edge]
    }

    fn levels(&self, s: usize, t: usize, level: &mut [usize]) -> bool {
        level.fill(usize::MAX);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > self.eps && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level[t] != usize::MAX
    }

    fn augment(&mut self, u: usize, t: usize, pushed: f64, level: &[usize], iter: &mut [usize]) -> f64 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.head[u].len() {
            let e = self.head[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > self.eps && level[v] == level[u] + 1 {
                let got = self.augment(v, t, pushed.min(self.cap[e]), level, iter);
                if got > 0.0 {
                    if self.cap[e].is_finite() {
                        self.cap[e] -= got;
                    }
                    if self.cap[e ^ 1].is_finite() {
                        self.cap[e ^ 1] += got;
                    }
                    return got;
                }
            }
            iter[u] += 1;
        }
        0.0
    }

    /// Pushes as much flow as possible from `s` to `t`, on top of any flow
    /// already present, and returns the amount added.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.head.len();
        let mut level = vec![usize::MAX; n];
        let mut iter = vec![0usize; n];
        let mut total = 0.0;
        while self.levels(s, t, &mut level) {
            iter.fill(0);
            loop {
                let got = self.augment(s, t, f64::INFINITY, &level, &mut iter);
                if got <= 0.0 {
                    break;
                }
                total += got;
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual graph.
    pub fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > self.eps && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}
