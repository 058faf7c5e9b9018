//! Nested-dissection ordering from BFS level structures.

/// Undirected graph in CSR form, without self loops, with node weights.
#[derive(Debug, Clone)]
pub struct Graph {
    pub xadj: Vec<usize>,
    pub adj: Vec<u32>,
    pub weight: Vec<u32>,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.weight.len()
    }

    fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[self.xadj[v as usize]..self.xadj[v as usize + 1]]
    }
}

/// Parts with at most this much weight are ordered directly.
const LEAF_WEIGHT: u64 = 96;

struct Ctx<'g> {
    g: &'g Graph,
    /// `member[v] == stamp` marks the current node set.
    member: Vec<u32>,
    level: Vec<u32>,
    stamp: u32,
    visited: Vec<u32>,
    visit_stamp: u32,
    order: Vec<u32>,
}

/// Elimination order (a permutation of the nodes) that numbers separators
/// after the parts they split.
pub fn nested_dissection(g: &Graph) -> Vec<u32> {
    let n = g.num_nodes();
    let mut ctx = Ctx { g, member: vec![0; n], level: vec![u32::MAX; n], stamp: 0, visited: vec![0; n], visit_stamp: 0, order: Vec::with_capacity(n) };
    let all: Vec<u32> = (0..n as u32).collect();
    // explicit stack keeps deep dissections off the call stack; `Emit`
    // appends separators once both halves are done
    enum Task {
        Split(Vec<u32>),
        Emit(Vec<u32>),
    }
    let mut stack = vec![Task::Split(all)];
    while let Some(task) = stack.pop() {
        match task {
            Task::Emit(sep) => ctx.order.extend(sep),
            Task::Split(nodes) => {
                for comp in ctx.components(&nodes) {
                    let w: u64 = comp.iter().map(|&v| g.weight[v as usize] as u64).sum();
                    if w <= LEAF_WEIGHT {
                        ctx.order_leaf(&comp);
                        continue;
                    }
                    match ctx.bisect(&comp) {
                        Some((lower, upper, sep)) => {
                            stack.push(Task::Emit(sep));
                            stack.push(Task::Split(upper));
                            stack.push(Task::Split(lower));
                        }
                        None => ctx.order_leaf(&comp),
                    }
                }
            }
        }
    }
    debug_assert_eq!(ctx.order.len(), n);
    ctx.order
}

impl Ctx<'_> {
    fn mark(&mut self, nodes: &[u32]) -> u32 {
        self.stamp += 1;
        for &v in nodes {
            self.member[v as usize] = self.stamp;
        }
        self.stamp
    }

    fn components(&mut self, nodes: &[u32]) -> Vec<Vec<u32>> {
        let s = self.mark(nodes);
        self.visit_stamp += 1;
        let seen = self.visit_stamp;
        let mut out = Vec::new();
        for &start in nodes {
            if self.visited[start as usize] == seen {
                continue;
            }
            self.visited[start as usize] = seen;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &u in self.g.neighbors(v) {
                    if self.member[u as usize] == s && self.visited[u as usize] != seen {
                        self.visited[u as usize] = seen;
                        comp.push(u);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// BFS from `root` inside the marked set; returns the levels.
    fn levels(&mut self, root: u32, s: u32) -> Vec<Vec<u32>> {
        let mut levels = vec![vec![root]];
        self.level[root as usize] = 0;
        loop {
            let mut next = Vec::new();
            let d = levels.len() as u32;
            for &v in levels.last().unwrap() {
                for &u in self.g.neighbors(v) {
                    if self.member[u as usize] == s && self.level[u as usize] == u32::MAX {
                        self.level[u as usize] = d;
                        next.push(u);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        // `level` stays set until `clear_levels`
        levels
    }

    fn clear_levels(&mut self, levels: &[Vec<u32>]) {
        for l in levels {
            for &v in l {
                self.level[v as usize] = u32::MAX;
            }
        }
    }

    fn degree_in(&self, v: u32, s: u32) -> usize {
        self.g.neighbors(v).iter().filter(|&&u| self.member[u as usize] == s).count()
    }

    /// Splits a connected set with a level-structure separator, thinned to
    /// the nodes that touch the upper side.
    fn bisect(&mut self, comp: &[u32]) -> Option<(Vec<u32>, Vec<u32>, Vec<u32>)> {
        let s = self.mark(comp);
        // pseudo-peripheral root
        let mut root = comp[0];
        let mut levels = self.levels(root, s);
        for _ in 0..4 {
            let last = levels.last().unwrap();
            let cand = *last.iter().min_by_key(|&&v| (self.degree_in(v, s), v)).unwrap();
            self.clear_levels(&levels);
            let trial = self.levels(cand, s);
            if trial.len() > levels.len() {
                root = cand;
                levels = trial;
            } else {
                self.clear_levels(&trial);
                levels = self.levels(root, s);
                break;
            }
        }
        if levels.len() < 3 {
            self.clear_levels(&levels);
            return None;
        }
        let w = |v: &u32| self.g.weight[*v as usize] as u64;
        let weights: Vec<u64> = levels.iter().map(|l| l.iter().map(w).sum()).collect();
        let total: u64 = weights.iter().sum();
        let mut below = 0u64;
        let mut best: Option<(u64, usize)> = None;
        let mut median = 1;
        for (l, &lw) in weights.iter().enumerate() {
            let above = total - below - lw;
            if l > 0 && l + 1 < levels.len() {
                if below <= total / 2 {
                    median = l;
                }
                let balanced = 10 * below >= 3 * total && 10 * above >= 3 * total;
                if balanced && best.is_none_or(|(bw, _)| lw < bw) {
                    best = Some((lw, l));
                }
            }
            below += lw;
        }
        let cut = best.map_or(median, |(_, l)| l);
        let mut lower: Vec<u32> = levels[..cut].concat();
        let upper: Vec<u32> = levels[cut + 1..].concat();
        let mut sep = Vec::new();
        for &v in &levels[cut] {
            let touches_upper = self
                .g
                .neighbors(v)
                .iter()
                .any(|&u| self.member[u as usize] == s && self.level[u as usize] == cut as u32 + 1);
            if touches_upper {
                sep.push(v);
            } else {
                lower.push(v);
            }
        }
        self.clear_levels(&levels);
        Some((lower, upper, sep))
    }

    fn order_leaf(&mut self, comp: &[u32]) {
        // BFS order from a low-degree node gives a banded leaf
        let s = self.mark(comp);
        let root = *comp.iter().min_by_key(|&&v| (self.degree_in(v, s), v)).unwrap();
        let levels = self.levels(root, s);
        self.clear_levels(&levels);
        for l in levels {
            self.order.extend(l);
        }
    }
}
