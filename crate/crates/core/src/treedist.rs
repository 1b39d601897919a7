//! Ordered tree edit distance between expressions (Zhang-Shasha, unit
//! costs), used as the modification cost.

use crate::model::Expr;

/// Postorder view of a tree: node labels and leftmost-leaf indices.
struct Postorder {
    labels: Vec<String>,
    leftmost: Vec<usize>,
}

impl Postorder {
    fn new(e: &Expr) -> Postorder {
        let mut p = Postorder { labels: Vec::new(), leftmost: Vec::new() };
        p.visit(e);
        p
    }

    fn visit(&mut self, e: &Expr) -> usize {
        let mut first = None;
        for c in e.children() {
            let l = self.visit(c);
            first.get_or_insert(l);
        }
        let idx = self.labels.len();
        self.labels.push(e.node_label());
        self.leftmost.push(first.unwrap_or(idx));
        self.leftmost[idx]
    }

    /// Nodes whose leftmost leaf differs from their parent's, i.e. the
    /// highest node for each distinct leftmost leaf.
    fn keyroots(&self) -> Vec<usize> {
        let n = self.labels.len();
        let mut roots = Vec::new();
        let mut seen = vec![false; n];
        for i in (0..n).rev() {
            let l = self.leftmost[i];
            if !seen[l] {
                seen[l] = true;
                roots.push(i);
            }
        }
        roots.sort_unstable();
        roots
    }
}

/// Minimum number of node relabels, insertions and deletions turning `a`
/// into `b`.
pub fn tree_distance(a: &Expr, b: &Expr) -> usize {
    if same_labels(a, b) {
        return 0;
    }
    let ta = Postorder::new(a);
    let tb = Postorder::new(b);
    let (n, m) = (ta.labels.len(), tb.labels.len());
    let mut td = vec![vec![0usize; m]; n];
    let mut fd = vec![vec![0usize; m + 1]; n + 1];
    for &i in &ta.keyroots() {
        for &j in &tb.keyroots() {
            let (li, lj) = (ta.leftmost[i], tb.leftmost[j]);
            // fd is indexed relative to (li - 1, lj - 1); row/col 0 is the empty forest.
            fd[0][0] = 0;
            for x in li..=i {
                fd[x - li + 1][0] = fd[x - li][0] + 1;
            }
            for y in lj..=j {
                fd[0][y - lj + 1] = fd[0][y - lj] + 1;
            }
            for x in li..=i {
                for y in lj..=j {
                    let (fx, fy) = (x - li + 1, y - lj + 1);
                    let del = fd[fx - 1][fy] + 1;
                    let ins = fd[fx][fy - 1] + 1;
                    if ta.leftmost[x] == li && tb.leftmost[y] == lj {
                        let rel = fd[fx - 1][fy - 1] + usize::from(ta.labels[x] != tb.labels[y]);
                        fd[fx][fy] = del.min(ins).min(rel);
                        td[x][y] = fd[fx][fy];
                    } else {
                        let (px, py) = (ta.leftmost[x] - li, tb.leftmost[y] - lj);
                        fd[fx][fy] = del.min(ins).min(fd[px][py] + td[x][y]);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}

/// Identical trees under node labels; unlike `==`, `0` and `0.0` differ.
fn same_labels(a: &Expr, b: &Expr) -> bool {
    match (a, b) {
        (Expr::Var(x), Expr::Var(y)) | (Expr::Primed(x), Expr::Primed(y)) => x == y,
        (Expr::Const(_), Expr::Const(_)) => a.node_label() == b.node_label(),
        (Expr::Op(o, xs), Expr::Op(p, ys)) => o == p && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| same_labels(x, y)),
        _ => false,
    }
}

/// Cost of deleting a whole expression: its node count.
pub fn delete_cost(e: &Expr) -> usize {
    e.node_count()
}

/// Cost of inserting a whole expression: its node count.
pub fn insert_cost(e: &Expr) -> usize {
    e.node_count()
}
