//! Navigation graph: which source a reader may request after which.
//!
//! Node 0 is the start state (no data requested yet); nodes `1..=L` are
//! sources. A directed edge `u -> v` allows requesting `v` right after
//! `u`, so the in-neighbors of `k` are exactly the side informations its
//! stored stream must serve.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NavigationGraph {
    source_count: u32,
    edges: BTreeSet<(u32, u32)>,
    out: Vec<Vec<u32>>,
    inc: Vec<Vec<u32>>,
}

impl NavigationGraph {
    pub fn new(source_count: u32, edges: &[(u32, u32)]) -> Result<Self> {
        if source_count == 0 {
            return Err(Error::Graph("a navigation graph needs at least one source".into()));
        }
        let nodes = source_count as usize + 1;
        let mut set = BTreeSet::new();
        let mut out = vec![Vec::new(); nodes];
        let mut inc = vec![Vec::new(); nodes];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::Graph(format!("self-loop on node {u}")));
            }
            if v == 0 {
                return Err(Error::Graph(format!("edge {u} -> 0 re-enters the start state")));
            }
            if u > source_count || v > source_count {
                return Err(Error::Graph(format!(
                    "edge {u} -> {v} names a node beyond L={source_count}"
                )));
            }
            if set.insert((u, v)) {
                out[u as usize].push(v);
                inc[v as usize].push(u);
            }
        }
        for adj in out.iter_mut().chain(inc.iter_mut()) {
            adj.sort_unstable();
        }
        let graph = NavigationGraph { source_count, edges: set, out, inc };
        graph.check_reachability()?;
        Ok(graph)
    }

    fn check_reachability(&self) -> Result<()> {
        let mut seen = vec![false; self.out.len()];
        seen[0] = true;
        let mut queue = VecDeque::from([0u32]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.out[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        let orphans: Vec<u32> =
            (1..=self.source_count).filter(|&k| !seen[k as usize]).collect();
        if orphans.is_empty() {
            Ok(())
        } else {
            Err(Error::Graph(format!("sources unreachable from the start state: {orphans:?}")))
        }
    }

    pub fn source_count(&self) -> u32 {
        self.source_count
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.edges.contains(&(u, v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    fn check_source(&self, k: u32) -> Result<()> {
        if k == 0 || k > self.source_count {
            return Err(Error::Graph(format!("node {k} is not a source (L={})", self.source_count)));
        }
        Ok(())
    }

    /// Sorted in-neighbors of `k`: every node whose request may directly
    /// precede a request for `k`.
    pub fn one_hop(&self, k: u32) -> Result<&[u32]> {
        self.check_source(k)?;
        Ok(&self.inc[k as usize])
    }

    /// Distinct predecessor sets of `k`: for every simple path from the
    /// start state to `k`, the set of nodes visited before `k` (the start
    /// state included). Sorted by size then lexicographically. Fails with
    /// [`Error::SubsetCapExceeded`] once more than `cap` distinct sets
    /// exist, so dense graphs fail fast instead of exhausting memory.
    pub fn previous_request_subsets(&self, k: u32, cap: usize) -> Result<Vec<Vec<u32>>> {
        self.check_source(k)?;
        let mut family: BTreeSet<Vec<u32>> = BTreeSet::new();
        let mut on_path = vec![false; self.out.len()];
        let mut path = Vec::new();
        // Paths can be exponential in the node count even when the subset
        // family is tiny; the step budget bounds the walk itself.
        let mut budget = cap.saturating_mul(4096).max(1 << 22);
        self.subset_dfs(0, k, &mut on_path, &mut path, &mut family, cap, &mut budget)?;
        let mut out: Vec<Vec<u32>> = family.into_iter().collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn subset_dfs(
        &self,
        u: u32,
        k: u32,
        on_path: &mut [bool],
        path: &mut Vec<u32>,
        family: &mut BTreeSet<Vec<u32>>,
        cap: usize,
        budget: &mut usize,
    ) -> Result<()> {
        if *budget == 0 {
            return Err(Error::SubsetCapExceeded { source_id: k, cap });
        }
        *budget -= 1;
        if u == k {
            let mut subset = path.clone();
            subset.sort_unstable();
            family.insert(subset);
            if family.len() > cap {
                return Err(Error::SubsetCapExceeded { source_id: k, cap });
            }
            return Ok(());
        }
        on_path[u as usize] = true;
        path.push(u);
        for &v in &self.out[u as usize] {
            if !on_path[v as usize] {
                self.subset_dfs(v, k, on_path, path, family, cap, budget)?;
            }
        }
        path.pop();
        on_path[u as usize] = false;
        Ok(())
    }

    /// True when every in-neighbor of `k` is itself one hop from the start
    /// state. Exactly then a full-memory decoder cannot be cornered into a
    /// predecessor set worse than the single worst neighbor alone, and the
    /// two storage floors coincide.
    pub fn root_equality_condition(&self, k: u32) -> Result<bool> {
        Ok(self
            .one_hop(k)?
            .iter()
            .all(|&j| j == 0 || self.has_edge(0, j)))
    }

    /// Text form: an `L=<count>` header then one `u v` edge per line.
    /// Blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut source_count: Option<u32> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            if source_count.is_none() {
                let rest = line
                    .strip_prefix("L=")
                    .ok_or_else(|| Error::Format(format!("line {lineno}: expected L=<count> header")))?;
                let l = rest
                    .trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Format(format!("line {lineno}: bad source count: {e}")))?;
                source_count = Some(l);
                continue;
            }
            let mut parts = line.split_whitespace();
            let (u, v) = match (parts.next(), parts.next(), parts.next()) {
                (Some(u), Some(v), None) => (u, v),
                _ => {
                    return Err(Error::Format(format!(
                        "line {lineno}: expected exactly two node ids, got {line:?}"
                    )))
                }
            };
            let u = u
                .parse::<u32>()
                .map_err(|e| Error::Format(format!("line {lineno}: bad node id {u:?}: {e}")))?;
            let v = v
                .parse::<u32>()
                .map_err(|e| Error::Format(format!("line {lineno}: bad node id {v:?}: {e}")))?;
            edges.push((u, v));
        }
        let source_count =
            source_count.ok_or_else(|| Error::Format("missing L=<count> header".into()))?;
        NavigationGraph::new(source_count, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("L={}\n", self.source_count);
        for (u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}
