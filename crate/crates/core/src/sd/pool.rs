use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use super::node::SearchNode;
use crate::error::Error;

/// Order in which pooled nodes are selected for branching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// FIFO: level by level.
    Bfs,
    /// LIFO: most recently generated node first.
    Dfs,
    /// LIFO with each batch of children sorted so the lowest partial distance
    /// is selected first.
    BestFs,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Bfs => "bfs",
            Strategy::Dfs => "dfs",
            Strategy::BestFs => "bestfs",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bfs" => Ok(Strategy::Bfs),
            "dfs" => Ok(Strategy::Dfs),
            "bestfs" | "best-fs" | "best" => Ok(Strategy::BestFs),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy `{other}` (expected bfs, dfs or bestfs)"
            ))),
        }
    }
}

/// The list of active nodes, with the selection discipline of a [`Strategy`].
#[derive(Debug, Clone)]
pub struct WorkPool {
    strategy: Strategy,
    nodes: VecDeque<SearchNode>,
}

impl WorkPool {
    pub fn new(strategy: Strategy) -> Self {
        WorkPool {
            strategy,
            nodes: VecDeque::new(),
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn push(&mut self, node: SearchNode) {
        self.nodes.push_back(node);
    }

    /// Inserts one branching batch (given in generation order) and empties
    /// `children`.
    pub fn push_children(&mut self, children: &mut Vec<SearchNode>) {
        if self.strategy == Strategy::BestFs {
            // Stable: equal distances keep generation (index tuple) order.
            children.sort_by(|a, b| a.pd().total_cmp(&b.pd()));
            self.nodes.reserve(children.len());
            while let Some(node) = children.pop() {
                self.nodes.push_back(node);
            }
        } else {
            self.nodes.reserve(children.len());
            for node in children.drain(..) {
                self.nodes.push_back(node);
            }
        }
    }

    /// Removes the next node to branch on.
    pub fn pop(&mut self) -> Option<SearchNode> {
        match self.strategy {
            Strategy::Bfs => self.nodes.pop_front(),
            Strategy::Dfs | Strategy::BestFs => self.nodes.pop_back(),
        }
    }

    /// Empties the pool, returning nodes from the bottom (last to be
    /// selected under LIFO) to the top.
    pub fn take_all(&mut self) -> Vec<SearchNode> {
        self.nodes.drain(..).collect()
    }

    /// Appends nodes in the given order, as if pushed one by one.
    pub fn extend(&mut self, nodes: impl IntoIterator<Item = SearchNode>) {
        self.nodes.extend(nodes);
    }

    pub fn iter(&self) -> impl Iterator<Item = &SearchNode> {
        self.nodes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(tag: u8, pd: f64) -> SearchNode {
        SearchNode::from_raw(vec![tag], pd, Vec::new())
    }

    fn drain(pool: &mut WorkPool) -> Vec<u8> {
        std::iter::from_fn(|| pool.pop()).map(|n| n.fixed_symbols()[0]).collect()
    }

    #[test]
    fn bfs_is_fifo() {
        let mut pool = WorkPool::new(Strategy::Bfs);
        pool.push_children(&mut vec![node(0, 3.0), node(1, 1.0)]);
        pool.push_children(&mut vec![node(2, 0.5)]);
        assert_eq!(drain(&mut pool), vec![0, 1, 2]);
    }

    #[test]
    fn dfs_is_lifo() {
        let mut pool = WorkPool::new(Strategy::Dfs);
        pool.push_children(&mut vec![node(0, 3.0), node(1, 1.0)]);
        pool.push_children(&mut vec![node(2, 0.5), node(3, 9.0)]);
        assert_eq!(drain(&mut pool), vec![3, 2, 1, 0]);
    }

    #[test]
    fn bestfs_takes_best_child_of_latest_batch() {
        let mut pool = WorkPool::new(Strategy::BestFs);
        pool.push_children(&mut vec![node(0, 3.0), node(1, 1.0), node(2, 2.0)]);
        pool.push_children(&mut vec![node(3, 7.0), node(4, 5.0)]);
        assert_eq!(drain(&mut pool), vec![4, 3, 1, 2, 0]);
    }

    #[test]
    fn bestfs_ties_keep_generation_order() {
        let mut pool = WorkPool::new(Strategy::BestFs);
        pool.push_children(&mut vec![node(0, 1.0), node(1, 1.0), node(2, 0.5)]);
        assert_eq!(drain(&mut pool), vec![2, 0, 1]);
    }

    #[test]
    fn parse_strategy() {
        assert_eq!("BestFS".parse::<Strategy>().unwrap(), Strategy::BestFs);
        assert!("random".parse::<Strategy>().is_err());
    }
}
