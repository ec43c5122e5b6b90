//! Primal network simplex for the bipartite transportation problem.
//!
//! Sources `0..ns` carry supply, sinks `ns..ns+nt` carry demand, and an
//! artificial root is joined to every node by a big-M arc. Leaving arcs are
//! chosen so the spanning tree stays strongly feasible, which rules out
//! cycling on degenerate pivots. Entering arcs come from a block search over
//! the real arcs in index order.

const NONE: usize = usize::MAX;

/// Artificial flow above this level means the arcs cannot carry the marginals.
const FEASIBILITY_TOL: f64 = 1e-11;

pub(crate) enum FlowOutcome {
    Optimal {
        /// Flow on each real arc, in input order.
        flow: Vec<f64>,
        phi: Vec<f64>,
        psi: Vec<f64>,
    },
    Infeasible,
}

pub(crate) struct NetworkSimplex {
    ns: usize,
    n: usize,
    m: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `true` when the predecessor arc points from the node to its parent.
    up: Vec<bool>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    block: usize,
    next_arc: usize,
    eps: f64,
}

impl NetworkSimplex {
    /// `arcs` are `(source, target)` index pairs with matching `costs`.
    pub(crate) fn new(
        supply: &[f64],
        demand: &[f64],
        arcs: &[(usize, usize)],
        costs: &[f64],
    ) -> Self {
        debug_assert_eq!(arcs.len(), costs.len());
        let ns = supply.len();
        let n = ns + demand.len();
        let root = n;
        let m = arcs.len();
        let total = m + n;

        let cost_max = costs.iter().copied().fold(0.0, f64::max);
        // any tree path costs less than this, so artificial arcs are a last resort
        let art = if cost_max > 0.0 {
            2.0 * cost_max * (n + 1) as f64
        } else {
            1.0
        };

        let mut src = Vec::with_capacity(total);
        let mut dst = Vec::with_capacity(total);
        let mut cost = Vec::with_capacity(total);
        for (&(i, j), &c) in arcs.iter().zip(costs) {
            src.push(i);
            dst.push(ns + j);
            cost.push(c);
        }
        let mut flow = vec![0.0; total];
        let mut in_tree = vec![false; total];
        let mut parent = vec![NONE; n + 1];
        let mut pred = vec![NONE; n + 1];
        let mut up = vec![false; n + 1];
        let mut pi = vec![0.0; n + 1];
        let mut children = vec![Vec::new(); n + 1];
        let mut depth = vec![1; n + 1];
        depth[root] = 0;
        children[root].reserve(n);

        for v in 0..n {
            let e = m + v;
            let b = if v < ns { supply[v] } else { -demand[v - ns] };
            parent[v] = root;
            pred[v] = e;
            in_tree[e] = true;
            children[root].push(v);
            if b >= 0.0 {
                src.push(v);
                dst.push(root);
                cost.push(0.0);
                flow[e] = b;
                up[v] = true;
                pi[v] = 0.0;
            } else {
                src.push(root);
                dst.push(v);
                cost.push(art);
                flow[e] = -b;
                up[v] = false;
                pi[v] = art;
            }
        }

        let block = ((m as f64).sqrt() as usize).max(10).min(m.max(1));
        Self {
            ns,
            n,
            m,
            src,
            dst,
            cost,
            flow,
            in_tree,
            parent,
            pred,
            up,
            children,
            depth,
            pi,
            block,
            next_arc: 0,
            eps: 1e-14 * art,
        }
    }

    pub(crate) fn run(mut self) -> FlowOutcome {
        while let Some(e) = self.find_entering() {
            self.pivot(e);
        }
        if (self.m..self.m + self.n).any(|e| self.flow[e] > FEASIBILITY_TOL) {
            return FlowOutcome::Infeasible;
        }
        let mut phi: Vec<f64> = (0..self.ns).map(|i| -self.pi[i]).collect();
        let mut psi: Vec<f64> = (self.ns..self.n).map(|v| self.pi[v]).collect();
        // potentials are defined up to (phi + c, psi - c); pin phi[0] = 0
        let shift = phi[0];
        phi.iter_mut().for_each(|p| *p -= shift);
        psi.iter_mut().for_each(|p| *p += shift);
        self.flow.truncate(self.m);
        FlowOutcome::Optimal {
            flow: self.flow,
            phi,
            psi,
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.src[e]] - self.pi[self.dst[e]]
    }

    fn find_entering(&mut self) -> Option<usize> {
        if self.m == 0 {
            return None;
        }
        let mut best = -self.eps;
        let mut best_arc = NONE;
        let mut budget = self.block;
        for k in 0..self.m {
            let e = (self.next_arc + k) % self.m;
            if !self.in_tree[e] {
                let rc = self.reduced_cost(e);
                if rc < best {
                    best = rc;
                    best_arc = e;
                }
            }
            budget -= 1;
            if budget == 0 {
                if best_arc != NONE {
                    self.next_arc = (e + 1) % self.m;
                    return Some(best_arc);
                }
                budget = self.block;
            }
        }
        if best_arc != NONE {
            self.next_arc = (best_arc + 1) % self.m;
            Some(best_arc)
        } else {
            None
        }
    }

    fn find_join(&self, a: usize, b: usize) -> usize {
        let (mut u, mut v) = (a, b);
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn pivot(&mut self, in_arc: usize) {
        let first = self.src[in_arc];
        let second = self.dst[in_arc];
        let join = self.find_join(first, second);

        // Flow travels join -> first -> second -> join. On ties, the blocking
        // arc met last along that orientation leaves.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = true;
        let mut u = first;
        while u != join {
            // pushing from parent down to u
            let d = if self.up[u] {
                self.flow[self.pred[u]]
            } else {
                f64::INFINITY
            };
            if d < delta {
                delta = d;
                u_out = u;
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            // pushing from u up to parent
            let d = if self.up[u] {
                f64::INFINITY
            } else {
                self.flow[self.pred[u]]
            };
            if d.is_finite() && d <= delta {
                delta = d;
                u_out = u;
                on_first = false;
            }
            u = self.parent[u];
        }
        assert!(
            u_out != NONE,
            "transportation network has no finite blocking arc"
        );

        if delta > 0.0 {
            self.flow[in_arc] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            u = second;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if on_first {
            (first, second)
        } else {
            (second, first)
        };
        let out_arc = self.pred[u_out];

        let mut path = vec![u_in];
        let mut w = u_in;
        while w != u_out {
            w = self.parent[w];
            path.push(w);
        }
        let old_pred: Vec<usize> = path.iter().map(|&p| self.pred[p]).collect();
        let old_up: Vec<bool> = path.iter().map(|&p| self.up[p]).collect();
        for &p in &path {
            let par = self.parent[p];
            let siblings = &mut self.children[par];
            let pos = siblings
                .iter()
                .position(|&c| c == p)
                .expect("tree child lists are consistent");
            siblings.swap_remove(pos);
        }

        self.parent[u_in] = v_in;
        self.pred[u_in] = in_arc;
        self.up[u_in] = self.src[in_arc] == u_in;
        self.children[v_in].push(u_in);
        for k in 1..path.len() {
            let (p, prev) = (path[k], path[k - 1]);
            self.parent[p] = prev;
            self.pred[p] = old_pred[k - 1];
            self.up[p] = !old_up[k - 1];
            self.children[prev].push(p);
        }
        self.in_tree[in_arc] = true;
        self.in_tree[out_arc] = false;

        let target_pi = if self.up[u_in] {
            self.pi[v_in] - self.cost[in_arc]
        } else {
            self.pi[v_in] + self.cost[in_arc]
        };
        // the re-hung subtree moves as a block: shift its potentials, redo depths
        let shift = target_pi - self.pi[u_in];
        let mut stack = vec![u_in];
        while let Some(x) = stack.pop() {
            self.pi[x] += shift;
            self.depth[x] = self.depth[self.parent[x]] + 1;
            stack.extend_from_slice(&self.children[x]);
        }
    }
}

/// Bytes held by the simplex working set for `n` nodes and `m` real arcs.
pub(crate) fn working_set_bytes(n_nodes: usize, n_arcs: usize) -> u64 {
    let arcs = n_arcs + n_nodes;
    let per_arc = 2 * std::mem::size_of::<usize>() + 2 * std::mem::size_of::<f64>() + 1;
    let per_node = 4 * std::mem::size_of::<usize>()
        + std::mem::size_of::<f64>()
        + 1
        + std::mem::size_of::<Vec<usize>>();
    (arcs * per_arc + (n_nodes + 1) * per_node) as u64
}
