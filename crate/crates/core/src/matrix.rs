//! Dense square matrices and the small amount of linear algebra the solvers
//! need: row-stochastic products, power iteration helpers, strongly connected
//! components, and a pivoted Gaussian solve for tiny systems.

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    pub fn zeros(n: usize) -> Self {
        Square { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Square::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in &rows {
            assert_eq!(row.len(), n, "matrix rows must be square");
            data.extend_from_slice(row);
        }
        Square { n, data }
    }





    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// self * other, cache-friendly i-k-j order.
    pub fn matmul(&self, other: &Square) -> Square {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Square::zeros(n);
        for i in 0..n {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// out = self · v (right multiplication by a column vector).
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(v.len(), n);
        assert_eq!(out.len(), n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// out = v · self (left multiplication by a row vector / distribution).
    pub fn vec_mul(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(v.len(), n);
        assert_eq!(out.len(), n);
        out.fill(0.0);
        for (k, &p) in v.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = self.row(k);
            for (o, &a) in out.iter_mut().zip(row) {
                *o += p * a;
            }
        }
    }

}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Strongly connected components of a directed graph, iterative Tarjan.
/// Returned in reverse topological order (every edge leaving a component
/// points to a component that appears earlier in the list).
pub(crate) fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0usize;

    // explicit DFS frames: (node, next child position)
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        frames.push((start, 0));
        index[start] = next_index;
        lowlink[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&mut (v, ref mut child)) = frames.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(component);
                }
            }
        }
    }
    components
}

/// Closed (no outgoing edge) components, i.e. the recurrent classes of a chain
/// whose positive-probability edges are `adj`.
pub(crate) fn recurrent_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let components = strongly_connected_components(adj);
    let mut comp_of = vec![0usize; adj.len()];
    for (c, members) in components.iter().enumerate() {
        for &v in members {
            comp_of[v] = c;
        }
    }
    components
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members
                .iter()
                .all(|&v| adj[v].iter().all(|&w| comp_of[w] == *c))
        })
        .map(|(_, members)| members.clone())
        .collect()
}

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
/// `a` is n×n row-major. Returns None when the pivot collapses.
pub(crate) fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        if a[pivot_row * n + col].abs() < 1e-13 {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}
